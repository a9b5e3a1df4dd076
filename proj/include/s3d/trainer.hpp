#pragma once

#include <filesystem>
#include <fstream>

#include "s3d/adam.hpp"
#include "s3d/datagen.hpp"
#include "s3d/losses.hpp"
#include "s3d/metrics.hpp"
#include "s3d/pipeline.hpp"
#include "s3d/sync.hpp"

namespace s3d {

// End-to-end training: alternating generator / discriminator steps over
// synthetic sequences, with the frozen lip-sync discriminator applied to
// T-frame windows every `sync_every` steps. All step randomness is
// counter-based on (seed, step), so resuming from a checkpoint replays the
// exact step stream.

template <typename T>
class Trainer {
public:
    Trainer(const Config& cfg, std::vector<SyntheticSequence> data, const std::string& out_dir)
        : cfg_(cfg), data_(std::move(data)), out_dir_(out_dir), perceptual_(cfg.seed ^ 0x9e5c) {
        check_contract(!data_.empty(), "trainer needs at least one sequence");
        namespace fs = std::filesystem;
        fs::create_directories(out_dir_);
        gen_ = Generator<T>::build(cfg_, cfg_.seed);
        Rng rng(cfg_.seed ^ 0xd15c);
        disc_coarse_ = ImageDiscriminator<T>(disc_params_, "disc_c", rng);
        disc_fine_ = ImageDiscriminator<T>(disc_params_, "disc_f", rng);
        opt_gen_ = AdamOptimizer<T>(cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
        opt_disc_ = AdamOptimizer<T>(cfg_.disc_lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    }

    // The sync discriminator is loaded frozen; its parameters are excluded
    // from every optimizer and from gradient recording.
    void load_sync(const std::string& path) {
        auto records = io::load_checkpoint<T>(path);
        Config sync_cfg = Generator<T>::config_from_records(records);
        Rng rng(0);
        sync_params_ = ParamStore<T>();
        sync_disc_ = SyncDiscriminator<T>(sync_params_, sync_cfg, rng);
        std::size_t filled = 0;
        for (const auto& [name, t] : records) {
            if (name.rfind("cfg/", 0) == 0 || name.rfind("opt/", 0) == 0) continue;
            if (!sync_params_.has(name))
                throw FormatError("sync checkpoint has unknown parameter " + name);
            Tensor<T> p = sync_params_.get(name);
            if (p.dims() != t.dims())
                throw FormatError("sync parameter " + name + " dims mismatch");
            p.mutable_data() = t.data();
            ++filled;
        }
        if (filled != sync_params_.count())
            throw FormatError("sync checkpoint fills " + std::to_string(filled) + " of " +
                              std::to_string(sync_params_.count()) + " parameters");
        sync_params_.set_trainable(false); // frozen
        have_sync_ = true;
    }

    bool has_sync() const { return have_sync_; }

    // one generator + one discriminator update; returns the loss report
    LossReport step() {
        const std::size_t s = step_;
        const auto& seq = data_[hash_combine(cfg_.seed, s, 11) % data_.size()];
        const std::size_t t_frames = cfg_.sync_frames;
        const std::size_t n = seq.frame_count();
        const bool sync_step = have_sync_ && cfg_.sync_every > 0 && n >= t_frames &&
                               (s % cfg_.sync_every == cfg_.sync_every - 1);
        const std::size_t lo = n >= t_frames ? t_frames - 1 : 0;
        const std::size_t t = lo + hash_combine(cfg_.seed, s, 12) % (n - lo);

        auto sc = gen_.encode_source(to_tensor(seq.frames[0]), seq.poses[0]);
        RenderOptions opt;
        opt.jitter = cfg_.jitter;
        opt.seed = hash_combine(cfg_.seed, s, 13);

        auto fr = gen_.render_frame(sc, seq.poses[t], to_tensor(seq.audio_window(t, cfg_.audio_window)),
                                    seq.identity.radius, opt);
        Tensor<T> gt_fine = to_tensor(seq.frames[t]);
        Tensor<T> gt_coarse = downscale_to(gt_fine, cfg_.coarse_res);
        Tensor<T> mask_coarse = face_mask<T>(seq.identity.radius, seq.poses[t], cfg_.coarse_res);

        auto l_pix = ops::add(pixel_loss(fr.coarse.image, gt_coarse, mask_coarse),
                              pixel_loss(fr.fine, gt_fine));
        auto l_per = ops::add(perceptual_(fr.coarse.image, gt_coarse), perceptual_(fr.fine, gt_fine));
        auto l_adv =
            ops::add(adversarial_generator_loss(disc_coarse_(blur_for_critic(fr.coarse.image, s, 1))),
                     adversarial_generator_loss(disc_fine_(blur_for_critic(fr.fine, s, 2))));
        Tensor<T> l_deform = fr.coarse.deformation.defined()
                                 ? deform_reg(fr.coarse.deformation)
                                 : Tensor<T>::zeros({1});

        Tensor<T> l_sync = Tensor<T>::zeros({1});
        if (sync_step) {
            // T consecutive frames of the same identity feed the frozen
            // discriminator; gradients reach the generator through the crops
            std::vector<Tensor<T>> crops;
            for (std::size_t i = 0; i < t_frames; ++i) {
                const std::size_t f = t + 1 - t_frames + i;
                Tensor<T> fine_i = fr.fine;
                if (f != t) {
                    auto fr_i = gen_.render_frame(
                        sc, seq.poses[f], to_tensor(seq.audio_window(f, cfg_.audio_window)),
                        seq.identity.radius, opt);
                    fine_i = fr_i.fine;
                }
                crops.push_back(
                    crop_resample(fine_i, seq.lip_boxes[f], cfg_.lip_crop_h, cfg_.lip_crop_w));
            }
            auto e_lip = sync_disc_.embed_lips(ops::concat_axis0<T>(crops));
            auto clip = audio_clip<T>(seq, t + 1 - t_frames, cfg_);
            auto e_aud = sync_disc_.embed_audio(clip);
            l_sync = generator_sync_loss(e_lip, e_aud, cfg_.literal_sync_losses);
        }

        auto total = total_loss(l_pix, l_per, l_adv, l_sync, l_deform, cfg_);
        LossReport report = LossReport::make(s, l_pix.scalar(), l_per.scalar(), l_adv.scalar(),
                                             l_sync.scalar(), l_deform.scalar(), cfg_);
        if (!std::isfinite(report.total)) abort_with_dump(report, "non-finite loss");

        gen_.params.zero_grad();
        disc_params_.zero_grad();
        run_backward(total);
        check_gradients_finite(report);
        opt_gen_.step(gen_.params);

        // alternating discriminator phase on detached fakes, after a warmup
        if (s % 2 == 1 && s >= cfg_.disc_warmup) {
            auto fake_coarse = ops::detach(fr.coarse.image);
            auto fake_fine = ops::detach(fr.fine);
            auto l_disc =
                ops::add(adversarial_discriminator_loss(
                             disc_coarse_(blur_for_critic(gt_coarse, s, 3)),
                             disc_coarse_(blur_for_critic(fake_coarse, s, 4))),
                         adversarial_discriminator_loss(
                             disc_fine_(blur_for_critic(gt_fine, s, 5)),
                             disc_fine_(blur_for_critic(fake_fine, s, 6))));
            disc_params_.zero_grad();
            run_backward(l_disc);
            opt_disc_.step(disc_params_);
        }

        history_.push_back(report);
        if (log_) {
            (*log_) << report.line() << "\n";
            log_->flush();
        }
        ++step_;
        return report;
    }

    void train() {
        open_log();
        while (step_ < cfg_.train_steps) {
            step();
            if (cfg_.checkpoint_every && step_ % cfg_.checkpoint_every == 0) save_latest();
        }
        save_latest();
    }

    void open_log() {
        if (!log_) {
            // append so a resumed run keeps one continuous log
            log_ = std::make_unique<std::ofstream>(out_dir_ + "/loss_log.txt", std::ios::app);
        }
    }

    void save_latest() const { save(out_dir_ + "/latest.ckpt"); }

    void save(const std::string& path) const {
        auto records = gen_.export_records();
        for (const auto& name : disc_params_.names())
            records.emplace_back(name, Tensor<T>::from_data(disc_params_.get(name).dims(),
                                                            disc_params_.get(name).data()));
        records.emplace_back("trainer/step",
                             Tensor<T>::from_data({1}, {static_cast<T>(step_)}));
        auto og = opt_gen_.export_state(gen_.params);
        auto od = opt_disc_.export_state(disc_params_);
        for (auto& [k, v] : og) records.emplace_back("optg/" + k.substr(4), v);
        for (auto& [k, v] : od) records.emplace_back("optd/" + k.substr(4), v);
        io::save_checkpoint(path, records);
    }

    void resume(const std::string& path) {
        auto records = io::load_checkpoint<T>(path);
        std::vector<std::pair<std::string, Tensor<T>>> optg, optd;
        for (const auto& [name, tsr] : records) {
            if (name.rfind("cfg/", 0) == 0) continue;
            if (name == "trainer/step") {
                step_ = static_cast<std::size_t>(tsr[0]);
            } else if (name.rfind("optg/", 0) == 0) {
                optg.emplace_back("opt/" + name.substr(5), tsr);
            } else if (name.rfind("optd/", 0) == 0) {
                optd.emplace_back("opt/" + name.substr(5), tsr);
            } else if (gen_.params.has(name)) {
                gen_.params.get(name).mutable_data() = tsr.data();
            } else if (disc_params_.has(name)) {
                disc_params_.get(name).mutable_data() = tsr.data();
            } else {
                throw FormatError("resume: unknown parameter " + name + " in " + path);
            }
        }
        opt_gen_.import_state(optg);
        opt_disc_.import_state(optd);
    }

    // deterministic full-frame render of one training frame (no jitter)
    Tensor<T> render_eval(std::size_t seq_index, std::size_t frame,
                          const Pose* pose_override = nullptr) {
        NoGradGuard ng;
        const auto& seq = data_[seq_index];
        auto sc = gen_.encode_source(to_tensor(seq.frames[0]), seq.poses[0]);
        RenderOptions opt;
        opt.jitter = false;
        const Pose pose = pose_override ? *pose_override : seq.poses[frame];
        auto fr = gen_.render_frame(sc, pose,
                                    to_tensor(seq.audio_window(frame, cfg_.audio_window)),
                                    seq.identity.radius, opt);
        return fr.fine;
    }

    Generator<T>& generator() { return gen_; }
    const std::vector<LossReport>& history() const { return history_; }
    const std::vector<SyntheticSequence>& dataset() const { return data_; }
    const SyncDiscriminator<T>& sync_discriminator() const { return sync_disc_; }
    const ParamStore<T>& sync_parameters() const { return sync_params_; }
    std::size_t current_step() const { return step_; }

private:
    static Tensor<T> to_tensor(const Tensor<float>& t) {
        if constexpr (std::is_same_v<T, float>) {
            return Tensor<T>::from_data(t.dims(), t.data());
        } else {
            return Tensor<T>::from_data(t.dims(),
                                        std::vector<T>(t.data().begin(), t.data().end()));
        }
    }

    // instance noise keeps the critics from saturating on the tiny dataset;
    // draws are counter-based so runs stay reproducible
    Tensor<T> blur_for_critic(const Tensor<T>& img, std::size_t step, std::uint64_t salt) const {
        if (cfg_.disc_noise <= 0) return img;
        std::vector<T> noise(img.size());
        const std::uint64_t base = hash_combine(cfg_.seed, step, 101, salt);
        for (std::size_t i = 0; i + 1 < noise.size(); i += 2) {
            const double u1 = std::max(1e-12, unit_at(base, i, 0));
            const double u2 = unit_at(base, i, 1);
            const double r = std::sqrt(-2.0 * std::log(u1));
            noise[i] = static_cast<T>(cfg_.disc_noise * r * std::cos(6.283185307 * u2));
            noise[i + 1] = static_cast<T>(cfg_.disc_noise * r * std::sin(6.283185307 * u2));
        }
        if (noise.size() % 2)
            noise.back() = static_cast<T>(cfg_.disc_noise *
                                          std::sqrt(-2.0 * std::log(std::max(
                                                        1e-12, unit_at(base, noise.size(), 0)))) *
                                          std::cos(6.283185307 * unit_at(base, noise.size(), 1)));
        return ops::add(img, Tensor<T>::from_data(img.dims(), std::move(noise)));
    }

    static Tensor<T> downscale_to(const Tensor<T>& img, std::size_t res) {
        NoGradGuard ng;
        Tensor<T> s = img;
        while (s.extent(1) > res) s = ops::avgpool2x2(s);
        return Tensor<T>::from_data(s.dims(), s.data());
    }

    void check_gradients_finite(const LossReport& report) const {
        for (const auto& name : gen_.params.names()) {
            const auto& g = gen_.params.get(name).raw()->grad;
            for (const T v : g)
                if (!std::isfinite(double(v)))
                    abort_with_dump(report, "non-finite gradient in " + name);
        }
    }

    [[noreturn]] void abort_with_dump(const LossReport& report, const std::string& why) const {
        const std::string path = out_dir_ + "/diagnostic_step" + std::to_string(report.step) + ".txt";
        std::ofstream dump(path);
        dump << "aborted: " << why << "\n" << report.line() << "\n";
        dump << "seed=" << cfg_.seed << "\n";
        dump.close();
        throw ContractError("training aborted at step " + std::to_string(report.step) + " (" +
                            why + "), diagnostics in " + path);
    }

    Config cfg_;
    std::vector<SyntheticSequence> data_;
    std::string out_dir_;
    Generator<T> gen_;
    ParamStore<T> disc_params_;
    ImageDiscriminator<T> disc_coarse_, disc_fine_;
    ParamStore<T> sync_params_;
    SyncDiscriminator<T> sync_disc_;
    bool have_sync_ = false;
    PerceptualNet<T> perceptual_;
    AdamOptimizer<T> opt_gen_, opt_disc_;
    std::vector<LossReport> history_;
    std::size_t step_ = 0;
    std::unique_ptr<std::ofstream> log_;
};

} // namespace s3d
