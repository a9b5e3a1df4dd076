#pragma once

#include "s3d/appearance.hpp"
#include "s3d/config.hpp"
#include "s3d/geometry.hpp"
#include "s3d/nn.hpp"

namespace s3d {

// Cross-modal deformation field: slot aggregation of the fused appearance
// levels, a 1-D conv audio encoder, multi-head cross attention giving the
// audio-visual correlation score, and a bounded per-point deformation MLP.

// Slot attention over flattened grid features. Slots attend to inputs
// (softmax over slots per site), take attention-weighted means, and the final
// per-site output is the input projection plus the slot readback, so an
// all-zero input with zero biases yields an all-zero aggregate.
template <typename T>
class SlotAttention {
public:
    SlotAttention() = default;
    SlotAttention(ParamStore<T>& ps, const Config& cfg, Rng& rng, std::size_t input_dim)
        : iters_(cfg.slot_iters) {
        const std::size_t d = cfg.slot_dim;
        proj_in_ = nn::Linear<T>::create(ps, "slot/in", input_dim, d, rng);
        slots0_ = ps.create_uniform("slot/init", {cfg.slot_count, d}, d, rng);
        wq_ = nn::Linear<T>::create(ps, "slot/q", d, d, rng, /*bias=*/false);
        wk_ = nn::Linear<T>::create(ps, "slot/k", d, d, rng, /*bias=*/false);
        wv_ = nn::Linear<T>::create(ps, "slot/v", d, d, rng, /*bias=*/false);
        update_ = nn::Linear<T>::create(ps, "slot/update", d, d, rng);
        scale_ = T(1) / std::sqrt(static_cast<T>(d));
    }

    // x [N, input_dim] -> [N, slot_dim]
    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> xp = ops::relu(proj_in_(x));
        Tensor<T> keys = wk_(xp);
        Tensor<T> vals = wv_(xp);
        const std::size_t n = xp.extent(0);
        Tensor<T> ones_row = Tensor<T>::ones({1, n});
        Tensor<T> slots = slots0_;
        Tensor<T> attn;
        for (std::size_t it = 0; it < iters_; ++it) {
            auto logits = ops::mul_scalar(ops::matmul(keys, ops::transpose2d(wq_(slots))), scale_);
            attn = ops::softmax_rows(logits); // per-site competition over slots
            auto colsum = ops::reshape(ops::matmul(ones_row, attn), {attn.extent(1)});
            auto weights = ops::mul_rowvec(attn, ops::recip(ops::add_scalar(colsum, T(1e-8))));
            auto pooled = ops::matmul(ops::transpose2d(weights), vals); // [K, d]
            slots = ops::relu(update_(pooled));
        }
        return ops::add(xp, ops::matmul(attn, slots));
    }

private:
    nn::Linear<T> proj_in_, wq_, wk_, wv_, update_;
    Tensor<T> slots0_;
    std::size_t iters_ = 3;
    T scale_ = T(1);
};

// Stride-2 1-D conv stack over the raw envelope window -> [L, D_a] tokens.
template <typename T>
class AudioEncoder {
public:
    AudioEncoder() = default;
    AudioEncoder(ParamStore<T>& ps, const Config& cfg, Rng& rng)
        : window_(cfg.audio_window) {
        c1_ = nn::Conv1d<T>::create(ps, "audio/c1", 1, cfg.audio_dim / 2, 5, 2, 2, rng);
        c2_ = nn::Conv1d<T>::create(ps, "audio/c2", cfg.audio_dim / 2, cfg.audio_dim, 5, 2, 2, rng);
    }

    Tensor<T> operator()(const Tensor<T>& window) const {
        check_shape(window.size() == window_,
                    "audio window length " + std::to_string(window.size()) + " != configured " +
                        std::to_string(window_));
        auto x = ops::reshape(window, {std::size_t(1), window_});
        auto h = ops::relu(c1_(x));
        auto tokens = c2_(h); // [D_a, L]
        return ops::transpose2d(tokens);
    }

    std::size_t window_length() const { return window_; }

private:
    nn::Conv1d<T> c1_, c2_;
    std::size_t window_ = 64;
};

// Multi-head cross attention, visual queries against audio keys/values.
template <typename T>
class CrossAttention {
public:
    CrossAttention() = default;
    CrossAttention(ParamStore<T>& ps, const Config& cfg, Rng& rng) {
        heads_ = cfg.attn_heads;
        dim_ = cfg.attn_dim;
        if (heads_ == 0 || dim_ % heads_ != 0)
            throw ConfigError("attention head count " + std::to_string(heads_) +
                              " must divide hidden dim " + std::to_string(dim_));
        wq_ = nn::Linear<T>::create(ps, "mhca/q", cfg.slot_dim, dim_, rng, false);
        wk_ = nn::Linear<T>::create(ps, "mhca/k", cfg.audio_dim, dim_, rng, false);
        wv_ = nn::Linear<T>::create(ps, "mhca/v", cfg.audio_dim, dim_, rng, false);
    }

    // queries [N, D_slot], audio [L, D_a] -> correlation score [N, attn_dim]
    Tensor<T> operator()(const Tensor<T>& queries, const Tensor<T>& audio) const {
        auto q = wq_(queries);
        auto k = wk_(audio);
        auto v = wv_(audio);
        const std::size_t dh = dim_ / heads_;
        const T scale = T(1) / std::sqrt(static_cast<T>(dh));
        std::vector<Tensor<T>> heads;
        for (std::size_t h = 0; h < heads_; ++h) {
            auto qh = ops::slice_cols(q, h * dh, (h + 1) * dh);
            auto kh = ops::slice_cols(k, h * dh, (h + 1) * dh);
            auto vh = ops::slice_cols(v, h * dh, (h + 1) * dh);
            auto attn = ops::softmax_rows(
                ops::mul_scalar(ops::matmul(qh, ops::transpose2d(kh)), scale));
            heads.push_back(ops::matmul(attn, vh));
        }
        return ops::concat_cols<T>(heads);
    }

    std::size_t dim() const { return dim_; }

private:
    nn::Linear<T> wq_, wk_, wv_;
    std::size_t heads_ = 4, dim_ = 32;
};

// Channel-mean per site, min-max normalized to [0,1]; a constant input maps
// to a uniform 0.5 image.
template <typename T>
Tensor<T> attention_heatmap(const Tensor<T>& correlation, std::size_t hs, std::size_t ws) {
    check_shape(correlation.rank() == 2 && correlation.extent(0) == hs * ws,
                "attention_heatmap expects [" + std::to_string(hs * ws) + ",d], got " +
                    dims_str(correlation.dims()));
    const std::size_t n = correlation.extent(0), d = correlation.extent(1);
    std::vector<T> mean(n, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) mean[i] += correlation[i * d + j];
        mean[i] /= static_cast<T>(d);
    }
    T lo = mean[0], hi = mean[0];
    for (T m : mean) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    if (hi - lo < T(1e-12)) {
        return Tensor<T>::full({hs, ws}, T(0.5));
    }
    for (T& m : mean) m = (m - lo) / (hi - lo);
    return Tensor<T>::from_data({hs, ws}, std::move(mean));
}

// sin/cos positional encoding with `octaves` frequency octaves plus the raw
// coordinates; built on plain values (sample positions are graph leaves)
template <typename T>
Tensor<T> positional_encoding(const Tensor<T>& points, std::size_t octaves) {
    check_shape(points.rank() == 2 && points.extent(1) == 3,
                "positional_encoding expects [N,3]");
    const std::size_t n = points.extent(0);
    const std::size_t width = 3 + 3 * 2 * octaves;
    std::vector<T> enc(n * width);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = 0;
        for (int a = 0; a < 3; ++a) enc[i * width + col++] = points[i * 3 + a];
        for (std::size_t o = 0; o < octaves; ++o) {
            const T freq = static_cast<T>(3.14159265358979323846 * double(1 << o));
            for (int a = 0; a < 3; ++a) {
                enc[i * width + col++] = std::sin(freq * points[i * 3 + a]);
                enc[i * width + col++] = std::cos(freq * points[i * 3 + a]);
            }
        }
    }
    return Tensor<T>::from_data({n, width}, std::move(enc));
}

// Per-frame prepared context: correlation score and pooled audio, computed
// once and then sampled per point batch.
template <typename T>
struct DeformContext {
    Tensor<T> audio_tokens;   // [L, D_a]
    Tensor<T> correlation;    // [N_s, d_v]
    Tensor<T> score_planes;   // [d_v, H_s, W_s] view of the correlation score
    Tensor<T> pooled_audio;   // [D_a]
};

template <typename T>
class DeformationField {
public:
    DeformationField() = default;
    DeformationField(ParamStore<T>& ps, const Config& cfg, Rng& rng, std::size_t fused_ch)
        : cfg_(cfg) {
        slot_ = SlotAttention<T>(ps, cfg, rng, 4 * fused_ch);
        audio_ = AudioEncoder<T>(ps, cfg, rng);
        mhca_ = CrossAttention<T>(ps, cfg, rng);
        const std::size_t pe = 3 + 6 * cfg.pe_octaves;
        const std::size_t in = pe + cfg.audio_dim + cfg.attn_dim;
        l1_ = nn::Linear<T>::create(ps, "deform/l1", in, cfg.deform_hidden, rng);
        l2_ = nn::Linear<T>::create(ps, "deform/l2", cfg.deform_hidden, cfg.deform_hidden, rng);
        l3_ = nn::Linear<T>::create_zero(ps, "deform/l3", cfg.deform_hidden, 3);
    }

    // resize every fused level to the slot grid and concatenate channels
    Tensor<T> grid_features(const FusedLevels<T>& fused) const {
        const std::size_t g = cfg_.slot_grid;
        std::vector<Tensor<T>> maps;
        for (int lvl = 0; lvl < 4; ++lvl) {
            Tensor<T> m = fused.levels[lvl];
            while (m.extent(1) > g) m = ops::avgpool2x2(m);
            while (m.extent(1) < g) m = ops::upsample2x_nearest(m);
            maps.push_back(m);
        }
        auto cat = ops::concat_axis0<T>(maps); // [4*fused_ch, g, g]
        // flatten to [g*g, channels]
        return ops::transpose2d(ops::reshape(cat, {cat.extent(0), g * g}));
    }

    Tensor<T> aggregate_slots(const FusedLevels<T>& fused) const {
        return slot_(grid_features(fused));
    }

    Tensor<T> encode_audio(const Tensor<T>& window) const { return audio_(window); }

    Tensor<T> cross_attention(const Tensor<T>& aggregated, const Tensor<T>& audio_tokens) const {
        return mhca_(aggregated, audio_tokens);
    }

    DeformContext<T> prepare(const FusedLevels<T>& fused, const Tensor<T>& audio_window) const {
        DeformContext<T> ctx;
        ctx.audio_tokens = encode_audio(audio_window);
        ctx.correlation = cross_attention(aggregate_slots(fused), ctx.audio_tokens);
        ctx.score_planes = ops::reshape(ops::transpose2d(ctx.correlation),
                                        {ctx.correlation.extent(1), cfg_.slot_grid, cfg_.slot_grid});
        const std::size_t l = ctx.audio_tokens.extent(0);
        Tensor<T> mean_row = Tensor<T>::full({1, l}, T(1) / static_cast<T>(l));
        ctx.pooled_audio =
            ops::reshape(ops::matmul(mean_row, ctx.audio_tokens), {ctx.audio_tokens.extent(1)});
        return ctx;
    }

    // Correlation-score lookup coordinates for world points projected through
    // the target pose onto the slot grid (plain values; lookups stay
    // differentiable w.r.t. the score planes).
    Tensor<T> score_coords(const Tensor<T>& points, const Pose& target_pose) const {
        const std::size_t n = points.extent(0);
        const Pose inv = pose_invert(target_pose);
        const T g1 = static_cast<T>(cfg_.slot_grid - 1);
        std::vector<T> coords(n * 2);
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 cam = pose_apply(inv, {double(points[i * 3]), double(points[i * 3 + 1]),
                                        double(points[i * 3 + 2])});
            const double z = std::max(1e-6, -cam[2]);
            // focal = width convention at grid resolution
            const double u = 0.5 + cam[0] / z;
            const double v = 0.5 - cam[1] / z;
            coords[i * 2] = static_cast<T>(u) * g1;
            coords[i * 2 + 1] = static_cast<T>(v) * g1;
        }
        return Tensor<T>::from_data({n, 2}, std::move(coords));
    }

    // points [N,3] (leaf values) -> bounded deformation [N,3]
    Tensor<T> operator()(const Tensor<T>& points, const DeformContext<T>& ctx,
                         const Pose& target_pose) const {
        if (!cfg_.deform_enabled) return Tensor<T>::zeros(points.dims());
        auto pe = positional_encoding(points, cfg_.pe_octaves);
        auto audio_b = ops::broadcast_rows(ctx.pooled_audio, points.extent(0));
        auto score = ops::grid_sample_bilinear(ctx.score_planes, score_coords(points, target_pose));
        auto input = ops::concat_cols<T>({pe, audio_b, score});
        auto h = ops::relu(l1_(input));
        h = ops::relu(l2_(h));
        return ops::mul_scalar(ops::tanh_op(l3_(h)), static_cast<T>(cfg_.delta_max));
    }

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    SlotAttention<T> slot_;
    AudioEncoder<T> audio_;
    CrossAttention<T> mhca_;
    nn::Linear<T> l1_, l2_, l3_;
};

} // namespace s3d
