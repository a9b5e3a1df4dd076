#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "s3d/datagen.hpp"
#include "s3d/metrics.hpp"
#include "s3d/pipeline.hpp"
#include "s3d/sync.hpp"
#include "s3d/trainer.hpp"

namespace fs = std::filesystem;
using s3d::Config;
using s3d::Tensor;

namespace {

Config load_config_opt(const std::string& path) {
    return path.empty() ? Config{} : Config::load(path);
}

int cmd_gen_data(std::uint64_t seed, std::size_t frames, std::size_t sequences,
                 const std::string& out, const std::string& config_path) {
    Config cfg = load_config_opt(config_path);
    if (sequences <= 1) {
        auto id = s3d::synth_identity(seed);
        auto seq = s3d::synth_sequence(id, frames, seed * 7919 + 1, cfg);
        s3d::write_dataset(seq, out);
        std::printf("wrote %zu frames to %s\n", seq.frame_count(), out.c_str());
        return 0;
    }
    for (std::size_t i = 0; i < sequences; ++i) {
        auto id = s3d::synth_identity(seed + i);
        auto seq = s3d::synth_sequence(id, frames, (seed + i) * 7919 + 1, cfg);
        char sub[32];
        std::snprintf(sub, sizeof sub, "seq-%03zu", i);
        s3d::write_dataset(seq, (fs::path(out) / sub).string());
    }
    std::printf("wrote %zu sequences of %zu frames to %s\n", sequences, frames, out.c_str());
    return 0;
}

std::vector<s3d::SyntheticSequence> load_sequences(const std::string& root) {
    auto dirs = s3d::dataset_dirs(root);
    if (dirs.empty()) throw s3d::ConfigError("no datasets found under " + root);
    std::vector<s3d::SyntheticSequence> seqs;
    for (const auto& d : dirs) seqs.push_back(s3d::read_dataset(d));
    return seqs;
}

int cmd_train_sync(const std::string& data, const std::string& out,
                   const std::string& config_path, long steps, std::uint64_t seed_override) {
    Config cfg = load_config_opt(config_path);
    if (steps >= 0) cfg.sync_train_steps = std::size_t(steps);
    if (seed_override) cfg.seed = std::size_t(seed_override);
    auto seqs = load_sequences(data);
    s3d::ParamStore<float> params;
    s3d::Rng rng(cfg.seed ^ 0x51c);
    s3d::SyncDiscriminator<float> disc(params, cfg, rng);
    auto result = s3d::train_sync(disc, params, seqs, cfg, cfg.seed);
    // checkpoint: config keys then parameters
    std::vector<std::pair<std::string, Tensor<float>>> records;
    for (const auto& [key, _] : Config::fields())
        records.emplace_back("cfg/" + key,
                             Tensor<float>::from_data({1}, {float(cfg.get_numeric(key))}));
    for (const auto& name : params.names())
        records.emplace_back(name, Tensor<float>::from_data(params.get(name).dims(),
                                                            params.get(name).data()));
    s3d::io::save_checkpoint(out, records);
    const double first = result.loss_history.empty() ? 0 : result.loss_history.front();
    const double last = result.loss_history.empty() ? 0 : result.loss_history.back();
    std::printf("sync discriminator trained: %zu steps, loss %.4f -> %.4f, saved %s\n",
                result.loss_history.size(), first, last, out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& sync,
              const std::string& out, long steps, const std::string& resume) {
    Config cfg = load_config_opt(config_path);
    if (steps >= 0) cfg.train_steps = std::size_t(steps);
    if (!fs::exists(sync)) throw s3d::ConfigError("sync checkpoint not found: " + sync);
    auto seqs = load_sequences(data);
    s3d::Trainer<float> trainer(cfg, std::move(seqs), out);
    trainer.load_sync(sync);
    if (!resume.empty()) trainer.resume(resume);
    trainer.train();
    const auto& hist = trainer.history();
    std::printf("training finished at step %zu, final total loss %.6f; artifacts in %s\n",
                trainer.current_step(), hist.empty() ? 0.0 : hist.back().total, out.c_str());
    return 0;
}

int cmd_render(const std::string& ckpt, const std::string& data, std::size_t frame,
               const std::string& pose_str, const std::string& out,
               const std::string& heatmap_path) {
    auto gen = s3d::Generator<float>::load_checkpoint(ckpt);
    auto seqs = load_sequences(data);
    const auto& seq = seqs.front();
    if (frame >= seq.frame_count())
        throw s3d::ConfigError("frame " + std::to_string(frame) + " out of range, dataset has " +
                               std::to_string(seq.frame_count()));
    s3d::NoGradGuard ng;
    auto sc = gen.encode_source(Tensor<float>::from_data(seq.frames[0].dims(),
                                                         seq.frames[0].data()),
                                seq.poses[0]);
    s3d::Pose pose = seq.poses[frame];
    if (!pose_str.empty()) {
        double yaw_deg = 0, pitch_deg = 0;
        if (std::sscanf(pose_str.c_str(), "%lf,%lf", &yaw_deg, &pitch_deg) != 2)
            throw s3d::ConfigError("--pose expects YAW,PITCH in degrees, got '" + pose_str + "'");
        pose = s3d::orbit_pose(yaw_deg * 0.01745329251994, pitch_deg * 0.01745329251994,
                               gen.cfg.cam_distance);
    }
    s3d::RenderOptions opt;
    opt.jitter = false;
    auto fr = gen.render_frame(sc, pose,
                               Tensor<float>::from_data({gen.cfg.audio_window},
                                                        seq.audio_window(frame, gen.cfg.audio_window)
                                                            .data()),
                               seq.identity.radius, opt);
    s3d::io::write_ppm(out, fr.fine);
    if (!heatmap_path.empty()) {
        auto hm = s3d::attention_heatmap(fr.ctx.correlation, gen.cfg.slot_grid, gen.cfg.slot_grid);
        s3d::io::write_pgm(heatmap_path, hm);
    }
    std::printf("rendered frame %zu -> %s\n", frame, out.c_str());
    return 0;
}

std::vector<Tensor<float>> load_frame_dir(const std::string& dir) {
    std::vector<Tensor<float>> frames;
    if (fs::exists(fs::path(dir) / "meta.txt")) {
        auto seq = s3d::read_dataset(dir);
        frames = std::move(seq.frames);
    } else {
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".ppm") names.push_back(e.path().string());
        std::sort(names.begin(), names.end());
        for (const auto& n : names) frames.push_back(s3d::io::read_ppm<float>(n));
    }
    return frames;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& sync_ckpt) {
    auto pred_frames = load_frame_dir(pred);
    auto gt_frames = load_frame_dir(gt);
    if (pred_frames.size() != gt_frames.size() || pred_frames.empty())
        throw s3d::ConfigError("frame count mismatch: pred has " +
                               std::to_string(pred_frames.size()) + ", gt has " +
                               std::to_string(gt_frames.size()));
    double acc = 0;
    for (std::size_t i = 0; i < pred_frames.size(); ++i) {
        const double p = s3d::psnr(pred_frames[i], gt_frames[i]);
        std::printf("frame=%zu psnr=%.4f\n", i, p);
        acc += p;
    }
    std::printf("mean_psnr=%.4f\n", acc / double(pred_frames.size()));

    if (!sync_ckpt.empty() && fs::exists(fs::path(gt) / "meta.txt")) {
        auto records = s3d::io::load_checkpoint<float>(sync_ckpt);
        Config scfg = s3d::Generator<float>::config_from_records(records);
        s3d::ParamStore<float> params;
        s3d::Rng rng(0);
        s3d::SyncDiscriminator<float> disc(params, scfg, rng);
        for (const auto& [name, t] : records)
            if (params.has(name)) params.get(name).mutable_data() = t.data();
        auto seq = s3d::read_dataset(gt);
        s3d::NoGradGuard ng;
        double cos_acc = 0;
        std::size_t count = 0;
        for (std::size_t t0 = 0; t0 + scfg.sync_frames <= pred_frames.size();
             t0 += scfg.sync_frames) {
            std::vector<Tensor<float>> crops;
            for (std::size_t i = 0; i < scfg.sync_frames; ++i)
                crops.push_back(s3d::crop_resample(pred_frames[t0 + i], seq.lip_boxes[t0 + i],
                                                   scfg.lip_crop_h, scfg.lip_crop_w));
            auto e_l = disc.embed_lips(s3d::ops::concat_axis0<float>(crops));
            auto e_a = disc.embed_audio(s3d::audio_clip<float>(seq, t0, scfg));
            cos_acc += s3d::cosine_sim(e_l, e_a).scalar();
            ++count;
        }
        if (count) std::printf("mean_sync_cos=%.4f\n", cos_acc / double(count));
    }
    return 0;
}

int cmd_gradcheck(double tol) {
    auto reports = s3d::gradcheck::run_op_suite(tol);
    reports.push_back(s3d::micro_pipeline_gradcheck(tol));
    bool all = true;
    for (const auto& r : reports) {
        std::printf("%-24s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_err,
                    r.pass ? "ok" : "FAIL");
        all = all && r.pass;
    }
    std::printf("%s\n", all ? "gradcheck passed" : "gradcheck FAILED");
    return all ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"s3d: single-shot speech-driven volumetric talking-head pipeline"};
    app.require_subcommand(1);

    // gen-data
    std::uint64_t gd_seed = 1;
    std::size_t gd_frames = 64, gd_sequences = 1;
    std::string gd_out, gd_config;
    auto* gd = app.add_subcommand("gen-data", "generate a synthetic speaker dataset");
    gd->add_option("--seed", gd_seed, "identity/sequence seed")->capture_default_str();
    gd->add_option("--frames", gd_frames, "frames per sequence")->capture_default_str();
    gd->add_option("--sequences", gd_sequences, "number of sequences (subdirs when > 1)")
        ->capture_default_str();
    gd->add_option("--out", gd_out, "output directory")->required();
    gd->add_option("--config", gd_config, "config file")->capture_default_str();

    // train-sync
    std::string ts_data, ts_out, ts_config;
    long ts_steps = -1;
    std::uint64_t ts_seed = 0;
    auto* ts = app.add_subcommand("train-sync", "train the lip-sync discriminator");
    ts->add_option("--data", ts_data, "dataset root (sequence subdirectories)")->required();
    ts->add_option("--out", ts_out, "output checkpoint path")->required();
    ts->add_option("--config", ts_config, "config file")->capture_default_str();
    ts->add_option("--steps", ts_steps, "override sync_train_steps (-1 keeps config)")
        ->capture_default_str();
    ts->add_option("--seed", ts_seed, "override seed (0 keeps config)")->capture_default_str();

    // train
    std::string tr_config, tr_data, tr_sync, tr_out, tr_resume;
    long tr_steps = -1;
    auto* tr = app.add_subcommand("train", "train the full pipeline");
    tr->add_option("--config", tr_config, "config file")->capture_default_str();
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--sync", tr_sync, "pretrained sync-discriminator checkpoint")->required();
    tr->add_option("--out", tr_out, "output directory (checkpoints, loss log)")->required();
    tr->add_option("--steps", tr_steps, "override train_steps (-1 keeps config)")
        ->capture_default_str();
    tr->add_option("--resume", tr_resume, "resume from checkpoint")->capture_default_str();

    // render
    std::string rd_ckpt, rd_data, rd_pose, rd_out, rd_heatmap;
    std::size_t rd_frame = 0;
    auto* rd = app.add_subcommand("render", "render one frame from a trained checkpoint");
    rd->add_option("--ckpt", rd_ckpt, "generator checkpoint")->required();
    rd->add_option("--data", rd_data, "dataset directory (source frame, poses, audio)")
        ->required();
    rd->add_option("--frame", rd_frame, "frame index")->capture_default_str();
    rd->add_option("--pose", rd_pose, "free-view override YAW,PITCH in degrees")
        ->capture_default_str();
    rd->add_option("--out", rd_out, "output image (.ppm)")->required();
    rd->add_option("--heatmap", rd_heatmap, "also export the attention heatmap (.pgm)")
        ->capture_default_str();

    // eval
    std::string ev_pred, ev_gt, ev_sync;
    auto* ev = app.add_subcommand("eval", "PSNR (and sync-cosine) between frame directories");
    ev->add_option("--pred", ev_pred, "predicted frames (dir of .ppm or a dataset)")->required();
    ev->add_option("--gt", ev_gt, "ground-truth frames (dir of .ppm or a dataset)")->required();
    ev->add_option("--sync", ev_sync, "sync checkpoint for the cosine metric")
        ->capture_default_str();

    // gradcheck
    double gc_tol = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
    gc->add_option("--tol", gc_tol, "relative error tolerance")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gd->parsed()) return cmd_gen_data(gd_seed, gd_frames, gd_sequences, gd_out, gd_config);
        if (ts->parsed()) return cmd_train_sync(ts_data, ts_out, ts_config, ts_steps, ts_seed);
        if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_sync, tr_out, tr_steps, tr_resume);
        if (rd->parsed()) return cmd_render(rd_ckpt, rd_data, rd_frame, rd_pose, rd_out, rd_heatmap);
        if (ev->parsed()) return cmd_eval(ev_pred, ev_gt, ev_sync);
        if (gc->parsed()) return cmd_gradcheck(gc_tol);
    } catch (const s3d::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}
