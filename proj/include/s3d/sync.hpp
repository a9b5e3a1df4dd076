#pragma once

#include "s3d/adam.hpp"
#include "s3d/datagen.hpp"
#include "s3d/nn.hpp"

namespace s3d {

// Lip-sync discriminator: a visual branch over a window of lower-face crops
// and an audio branch over the matching envelope clip, scored by cosine
// similarity and trained with a two-sided contrastive triplet loss.

// Differentiable crop: resample a bounding box of a [3,H,W] frame onto a
// fixed [3,ch,cw] grid.
template <typename T>
Tensor<T> crop_resample(const Tensor<T>& frame, const std::array<float, 4>& box,
                        std::size_t ch, std::size_t cw) {
    check_shape(frame.rank() == 3 && frame.extent(0) == 3,
                "crop_resample expects [3,H,W], got " + dims_str(frame.dims()));
    const double x0 = box[0], y0 = box[1], x1 = box[2], y1 = box[3];
    std::vector<T> coords(ch * cw * 2);
    for (std::size_t y = 0; y < ch; ++y)
        for (std::size_t x = 0; x < cw; ++x) {
            const double fx = cw > 1 ? double(x) / double(cw - 1) : 0.5;
            const double fy = ch > 1 ? double(y) / double(ch - 1) : 0.5;
            // box coordinates are pixel edges; sample at texel centers
            coords[(y * cw + x) * 2 + 0] = static_cast<T>(x0 + fx * (x1 - x0) - 0.5);
            coords[(y * cw + x) * 2 + 1] = static_cast<T>(y0 + fy * (y1 - y0) - 0.5);
        }
    auto sampled = ops::grid_sample_bilinear(frame, Tensor<T>::from_data({ch * cw, 2}, coords));
    return ops::reshape(ops::transpose2d(sampled), {std::size_t(3), ch, cw});
}

template <typename T>
class SyncDiscriminator {
public:
    SyncDiscriminator() = default;
    SyncDiscriminator(ParamStore<T>& ps, const Config& cfg, Rng& rng) : cfg_(cfg) {
        const std::size_t tch = 3 * cfg.sync_frames;
        lip1_ = nn::Conv2d<T>::create(ps, "sync/lip1", tch, 32, 3, 2, 1, rng);
        lip2_ = nn::Conv2d<T>::create(ps, "sync/lip2", 32, 64, 3, 2, 1, rng);
        const std::size_t flat = 64 * (cfg.lip_crop_h / 4) * (cfg.lip_crop_w / 4);
        lip_head_ = nn::Linear<T>::create(ps, "sync/lip_head", flat, cfg.sync_embed_dim, rng);
        aud1_ = nn::Conv1d<T>::create(ps, "sync/aud1", 1, 16, 5, 2, 2, rng);
        aud2_ = nn::Conv1d<T>::create(ps, "sync/aud2", 16, 32, 5, 2, 2, rng);
        const std::size_t aflat = 32 * (cfg.audio_window / 4);
        aud_head_ = nn::Linear<T>::create(ps, "sync/aud_head", aflat, cfg.sync_embed_dim, rng);
    }

    // window [T*3, h, w] of stacked consecutive crops -> embedding [D_e]
    Tensor<T> embed_lips(const Tensor<T>& window) const {
        check_shape(window.rank() == 3 && window.extent(0) == 3 * cfg_.sync_frames &&
                        window.extent(1) == cfg_.lip_crop_h && window.extent(2) == cfg_.lip_crop_w,
                    "embed_lips expects [" + std::to_string(3 * cfg_.sync_frames) + "," +
                        std::to_string(cfg_.lip_crop_h) + "," + std::to_string(cfg_.lip_crop_w) +
                        "], got " + dims_str(window.dims()));
        auto h = ops::leaky_relu(lip1_(window), T(0.2));
        h = ops::leaky_relu(lip2_(h), T(0.2));
        auto flat = ops::reshape(h, {std::size_t(1), h.size()});
        return ops::reshape(lip_head_(flat), {cfg_.sync_embed_dim});
    }

    // envelope clip covering the window -> embedding [D_e]
    Tensor<T> embed_audio(const Tensor<T>& clip) const {
        check_shape(clip.size() == cfg_.audio_window,
                    "embed_audio expects a length-" + std::to_string(cfg_.audio_window) +
                        " clip, got " + dims_str(clip.dims()));
        auto x = ops::reshape(clip, {std::size_t(1), cfg_.audio_window});
        auto h = ops::leaky_relu(aud1_(x), T(0.2));
        h = ops::leaky_relu(aud2_(h), T(0.2));
        auto flat = ops::reshape(h, {std::size_t(1), h.size()});
        return ops::reshape(aud_head_(flat), {cfg_.sync_embed_dim});
    }

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    nn::Conv2d<T> lip1_, lip2_;
    nn::Linear<T> lip_head_;
    nn::Conv1d<T> aud1_, aud2_;
    nn::Linear<T> aud_head_;
};

// cos(a,b) = a.b / max(|a||b|, eps) with eps = 0; a vanishing denominator is
// defined away as similarity 0.
template <typename T>
Tensor<T> cosine_sim(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.dims() == b.dims(),
                "cosine_sim: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    double na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (std::sqrt(na) < 1e-12 || std::sqrt(nb) < 1e-12) return Tensor<T>::scalar_tensor(T(0));
    auto dot = ops::sum_all(ops::mul(a, b));
    auto denom = ops::sqrt(ops::mul(ops::sum_all(ops::mul(a, a)), ops::sum_all(ops::mul(b, b))));
    return ops::div(dot, denom);
}

// Two hinge terms with margin eta, one per branch. The default orientation
// pulls positives above negatives: max(0, eta + cos(anchor, neg) -
// cos(anchor, pos)). `literal` flips the printed-sign variant for
// experiments.
template <typename T>
Tensor<T> triplet_loss(const Tensor<T>& e_lip, const Tensor<T>& e_aud_pos,
                       const Tensor<T>& e_aud_neg, const Tensor<T>& e_lip_pos,
                       const Tensor<T>& e_lip_neg, const Tensor<T>& e_aud, T eta = T(0.5),
                       bool literal = false) {
    auto hinge = [&](const Tensor<T>& anchor, const Tensor<T>& pos, const Tensor<T>& neg) {
        auto cp = cosine_sim(anchor, pos);
        auto cn = cosine_sim(anchor, neg);
        auto arg = literal ? ops::sub(cp, cn) : ops::sub(cn, cp);
        return ops::relu(ops::add_scalar(arg, eta));
    };
    return ops::reshape(
        ops::add(hinge(e_lip, e_aud_pos, e_aud_neg), hinge(e_aud, e_lip_pos, e_lip_neg)), {1});
}

// 1 - cos so that minimizing tightens synchronization; `literal` keeps the
// raw cosine form.
template <typename T>
Tensor<T> generator_sync_loss(const Tensor<T>& e_lip_gen, const Tensor<T>& e_audio_gt,
                              bool literal = false) {
    auto c = cosine_sim(e_lip_gen, e_audio_gt);
    if (literal) return c;
    return ops::add_scalar(ops::neg(c), T(1));
}

// ---------------------------------------------------------------------------
// training

// stacked lip window [T*3,h,w] from ground-truth frames
template <typename T>
Tensor<T> lip_window(const SyntheticSequence& seq, std::size_t start, const Config& cfg) {
    check_contract(start + cfg.sync_frames <= seq.frame_count(), "lip window past sequence end");
    std::vector<Tensor<T>> crops;
    for (std::size_t i = 0; i < cfg.sync_frames; ++i) {
        const std::size_t f = start + i;
        Tensor<T> frame = Tensor<T>::from_data(seq.frames[f].dims(),
                                               std::vector<T>(seq.frames[f].data().begin(),
                                                              seq.frames[f].data().end()));
        crops.push_back(crop_resample(frame, seq.lip_boxes[f], cfg.lip_crop_h, cfg.lip_crop_w));
    }
    return ops::concat_axis0<T>(crops);
}

template <typename T>
Tensor<T> audio_clip(const SyntheticSequence& seq, std::size_t start, const Config& cfg) {
    auto w = seq.audio_window(start + cfg.sync_frames / 2, cfg.audio_window);
    return Tensor<T>::from_data(w.dims(), std::vector<T>(w.data().begin(), w.data().end()));
}

struct SyncTrainResult {
    std::vector<double> loss_history;
};

// Contrastive training on synchronized windows. Negatives alternate between
// temporally offset windows (offset >= T) and windows from another sequence.
template <typename T>
SyncTrainResult train_sync(SyncDiscriminator<T>& disc, ParamStore<T>& ps,
                           const std::vector<SyntheticSequence>& seqs, const Config& cfg,
                           std::uint64_t seed) {
    const std::size_t t_frames = cfg.sync_frames;
    std::size_t usable = 0;
    for (const auto& s : seqs)
        if (s.frame_count() >= 3 * t_frames) ++usable;
    if (seqs.size() < 2 || usable < 2)
        throw ConfigError("sync training needs >= 2 sequences with >= " +
                          std::to_string(3 * t_frames) + " frames each for negative mining");

    AdamOptimizer<T> opt(cfg.sync_lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    SyncTrainResult result;
    for (std::size_t step = 0; step < cfg.sync_train_steps; ++step) {
        Tensor<T> loss = Tensor<T>::zeros({1});
        for (std::size_t b = 0; b < cfg.sync_batch; ++b) {
            auto draw = [&](std::uint64_t salt) {
                return hash_combine(seed, step, b, salt);
            };
            const std::size_t si = draw(1) % seqs.size();
            const auto& s = seqs[si];
            const std::size_t span = s.frame_count() - t_frames;
            const std::size_t t0 = draw(2) % (span + 1);

            auto anchor_lip = disc.embed_lips(lip_window<T>(s, t0, cfg));
            auto pos_aud = disc.embed_audio(audio_clip<T>(s, t0, cfg));

            const bool cross = (draw(3) & 1) != 0;
            std::size_t nsi = si, nt = t0;
            if (cross && seqs.size() > 1) {
                nsi = draw(4) % seqs.size();
                if (nsi == si) nsi = (si + 1) % seqs.size();
                nt = draw(5) % (seqs[nsi].frame_count() - t_frames + 1);
            } else {
                // temporal offset of at least T frames within the sequence
                for (int tries = 0; tries < 32; ++tries) {
                    nt = draw(6 + tries) % (span + 1);
                    if ((nt > t0 ? nt - t0 : t0 - nt) >= t_frames) break;
                }
                if ((nt > t0 ? nt - t0 : t0 - nt) < t_frames)
                    nt = t0 + t_frames <= span ? t0 + t_frames : t0 - t_frames;
            }
            auto neg_aud = disc.embed_audio(audio_clip<T>(seqs[nsi], nt, cfg));
            auto neg_lip = disc.embed_lips(lip_window<T>(seqs[nsi], nt, cfg));

            loss = ops::add(loss, triplet_loss(anchor_lip, pos_aud, neg_aud, anchor_lip, neg_lip,
                                               pos_aud, T(0.5), cfg.literal_sync_losses));
        }
        loss = ops::mul_scalar(loss, T(1) / static_cast<T>(cfg.sync_batch));
        result.loss_history.push_back(loss.scalar());
        ps.zero_grad();
        run_backward(loss);
        opt.step(ps);
    }
    return result;
}

// mean cos over synchronized pairs minus mean cos over offset pairs
template <typename T>
double sync_margin(const SyncDiscriminator<T>& disc, const std::vector<SyntheticSequence>& seqs,
                   std::size_t pairs, std::uint64_t seed) {
    NoGradGuard ng;
    const Config& cfg = disc.config();
    double sync_sum = 0, off_sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pairs; ++i) {
        const std::size_t si = hash_combine(seed, i, 1) % seqs.size();
        const auto& s = seqs[si];
        if (s.frame_count() < 3 * cfg.sync_frames) continue;
        const std::size_t span = s.frame_count() - cfg.sync_frames;
        const std::size_t t0 = hash_combine(seed, i, 2) % (span + 1);
        std::size_t toff = (t0 + cfg.sync_frames + hash_combine(seed, i, 3) % span) % (span + 1);
        if ((toff > t0 ? toff - t0 : t0 - toff) < cfg.sync_frames)
            toff = t0 >= cfg.sync_frames ? t0 - cfg.sync_frames : t0 + cfg.sync_frames;
        auto lips = disc.embed_lips(lip_window<T>(s, t0, cfg));
        auto aud = disc.embed_audio(audio_clip<T>(s, t0, cfg));
        auto aud_off = disc.embed_audio(audio_clip<T>(s, toff, cfg));
        sync_sum += cosine_sim(lips, aud).scalar();
        off_sum += cosine_sim(lips, aud_off).scalar();
        ++count;
    }
    check_contract(count > 0, "sync_margin: no usable sequences");
    return (sync_sum - off_sum) / double(count);
}

} // namespace s3d
