#pragma once

#include "s3d/appearance.hpp"
#include "s3d/deform.hpp"
#include "s3d/gradcheck.hpp"
#include "s3d/io.hpp"
#include "s3d/losses.hpp"
#include "s3d/refiner.hpp"
#include "s3d/renderer.hpp"

namespace s3d {

// The full generator: appearance encoder, deformation field, tri-plane
// decoder and super-resolver sharing one parameter store.
template <typename T>
struct Generator {
    Config cfg;
    ParamStore<T> params;
    AppearanceEncoder<T> encoder;
    DeformationField<T> field;
    TriplaneDecoder<T> decoder;
    SuperResolver<T> sr;

    static Generator build(const Config& cfg, std::uint64_t init_seed) {
        if (cfg.fine_res != 2 * cfg.coarse_res)
            throw ConfigError("fine_res (" + std::to_string(cfg.fine_res) +
                              ") must be twice coarse_res (" + std::to_string(cfg.coarse_res) +
                              ")");
        if (cfg.source_res % 16 != 0)
            throw ConfigError("source_res must be divisible by 16, got " +
                              std::to_string(cfg.source_res));
        Generator g;
        g.cfg = cfg;
        Rng rng(init_seed ^ 0x9e11e7a705ull);
        g.encoder = AppearanceEncoder<T>(g.params, cfg, rng);
        g.field = DeformationField<T>(g.params, cfg, rng, g.encoder.fused_channels());
        g.decoder = TriplaneDecoder<T>(g.params, cfg, rng, 4 * cfg.plane_channels);
        g.sr = SuperResolver<T>(g.params, rng);
        return g;
    }

    struct SourceCache {
        FusedLevels<T> fused;
        TriPlaneSet<T> planes;
        Tensor<T> src_full; // [3,fine,fine]
        Pose src_pose;
    };

    // Downscale the full source frame to the encoder resolution, build the
    // pyramid, fuse and split into planes.
    SourceCache encode_source(const Tensor<T>& src_full, const Pose& src_pose) const {
        check_shape(src_full.dims() == Dims{3, cfg.fine_res, cfg.fine_res},
                    "encode_source expects [3," + std::to_string(cfg.fine_res) + "," +
                        std::to_string(cfg.fine_res) + "], got " + dims_str(src_full.dims()));
        SourceCache sc;
        sc.src_full = src_full;
        sc.src_pose = src_pose;
        Tensor<T> small = src_full;
        while (small.extent(1) > cfg.source_res) small = ops::avgpool2x2(small);
        auto pyr = encoder.encode_pyramid(small);
        sc.fused = encoder.fuse_fpn(pyr);
        sc.planes = split_triplane(sc.fused);
        return sc;
    }

    struct FrameRender {
        CoarseFrame<T> coarse;
        Tensor<T> fine;       // [3,fine,fine]
        DeformContext<T> ctx; // per-frame attention context
        Tensor<T> mask_fine;  // [fine,fine] target-pose face mask
    };

    FrameRender render_frame(const SourceCache& sc, const Pose& tar_pose,
                             const Tensor<T>& audio_window, double head_radius,
                             const RenderOptions& base_opt) const {
        FrameRender fr;
        fr.ctx = field.prepare(sc.fused, audio_window);
        RenderOptions opt = base_opt;
        opt.resolution = cfg.coarse_res;
        opt.n_samples = cfg.n_samples;
        if (opt.pixels.empty()) {
            // restrict ray marching to the dilated projected head disk; the
            // outer region is the refiner's responsibility
            auto m = face_mask<T>(head_radius, tar_pose, cfg.coarse_res, 2.5);
            opt.pixels = mask_pixel_indices(m);
        }
        fr.coarse =
            render_coarse(sc.planes, field, fr.ctx, decoder, sc.src_pose, tar_pose, opt);
        fr.mask_fine = face_mask<T>(head_radius, tar_pose, cfg.fine_res, 4.0);
        fr.fine = sr(fr.coarse.image, sc.src_full, fr.mask_fine);
        return fr;
    }

    // ---------------------------------------------------------------------
    // checkpointing: config keys as cfg/<key> scalars, then parameters under
    // their own names; extra records (optimizer state) pass through.

    std::vector<std::pair<std::string, Tensor<T>>> export_records() const {
        std::vector<std::pair<std::string, Tensor<T>>> records;
        for (const auto& [key, _] : Config::fields())
            records.emplace_back("cfg/" + key,
                                 Tensor<T>::from_data({1}, {static_cast<T>(cfg.get_numeric(key))}));
        for (const auto& name : params.names())
            records.emplace_back(name, Tensor<T>::from_data(params.get(name).dims(),
                                                            params.get(name).data()));
        return records;
    }

    void save_checkpoint(const std::string& path,
                         const std::vector<std::pair<std::string, Tensor<T>>>& extra = {}) const {
        auto records = export_records();
        records.insert(records.end(), extra.begin(), extra.end());
        io::save_checkpoint(path, records);
    }

    static Config config_from_records(
        const std::vector<std::pair<std::string, Tensor<T>>>& records) {
        Config cfg;
        for (const auto& [name, t] : records)
            if (name.rfind("cfg/", 0) == 0) cfg.set_numeric(name.substr(4), double(t[0]));
        return cfg;
    }

    static Generator load_checkpoint(const std::string& path,
                                     std::vector<std::pair<std::string, Tensor<T>>>* extra = nullptr) {
        auto records = io::load_checkpoint<T>(path);
        Generator g = build(config_from_records(records), /*init_seed=*/0);
        std::size_t filled = 0;
        for (const auto& [name, t] : records) {
            if (name.rfind("cfg/", 0) == 0) continue;
            if (g.params.has(name)) {
                Tensor<T> p = g.params.get(name);
                if (p.dims() != t.dims())
                    throw FormatError("checkpoint tensor " + name + " has dims " +
                                      dims_str(t.dims()) + ", expected " + dims_str(p.dims()));
                p.mutable_data() = t.data();
                ++filled;
            } else if (extra) {
                extra->emplace_back(name, t);
            }
        }
        if (filled != g.params.count())
            throw FormatError("checkpoint " + path + " fills " + std::to_string(filled) + " of " +
                              std::to_string(g.params.count()) + " parameters");
        return g;
    }
};

// ---------------------------------------------------------------------------
// end-to-end finite-difference check on a 2-ray micro scene (float64)

inline gradcheck::Report micro_pipeline_gradcheck(double tol = 1e-4, std::uint64_t seed = 99) {
    using T = double;
    Config cfg;
    cfg.fine_res = 32;
    cfg.source_res = 16;
    cfg.coarse_res = 16;
    cfg.n_samples = 3;
    cfg.slot_grid = 4;
    cfg.slot_count = 3;
    cfg.slot_iters = 2;
    cfg.audio_window = 16;
    cfg.audio_dim = 4;
    cfg.attn_heads = 2;
    cfg.attn_dim = 8;
    cfg.deform_hidden = 8;
    cfg.decoder_hidden = 8;
    cfg.plane_channels = 3;

    auto g = Generator<T>::build(cfg, seed);
    // nudge the zero-initialized heads so every path carries signal
    Rng wiggle(seed ^ 0xfeed);
    for (const auto& name : g.params.names()) {
        Tensor<T> p = g.params.get(name);
        if (name.rfind("deform/l3", 0) == 0 || name.rfind("sr/head", 0) == 0)
            for (auto& v : p.mutable_data()) v = wiggle.uniform(-0.05, 0.05);
    }

    Rng rng(seed);
    std::vector<T> img(3 * cfg.fine_res * cfg.fine_res);
    for (auto& v : img) v = rng.uniform(0.2, 0.8);
    Tensor<T> src = Tensor<T>::from_data({3, cfg.fine_res, cfg.fine_res}, img);
    std::vector<T> win(cfg.audio_window);
    for (auto& v : win) v = rng.uniform(0, 1);
    Tensor<T> window = Tensor<T>::from_data({cfg.audio_window}, win);

    const Pose src_pose = orbit_pose(0.1, -0.05, cfg.cam_distance);
    const Pose tar_pose = orbit_pose(-0.15, 0.1, cfg.cam_distance);

    auto forward = [&]() {
        auto sc = g.encode_source(src, src_pose);
        RenderOptions opt;
        opt.jitter = false;
        opt.pixels = {std::size_t(3 * cfg.coarse_res + 4), std::size_t(4 * cfg.coarse_res + 5)};
        auto fr = g.render_frame(sc, tar_pose, window, 0.4, opt);
        auto loss = ops::add(ops::mean_all(fr.fine), ops::mean_all(fr.coarse.image));
        if (fr.coarse.deformation.defined())
            loss = ops::add(loss, ops::mul_scalar(deform_reg(fr.coarse.deformation), T(0.1)));
        return ops::reshape(loss, {1});
    };

    auto loss0 = forward();
    g.params.zero_grad();
    run_backward(loss0);

    gradcheck::Report report;
    report.name = "micro_pipeline";
    const double h = 1e-5;
    for (const auto& name : g.params.names()) {
        Tensor<T> p = g.params.get(name);
        std::vector<T> ad(p.size(), T(0));
        if (p.raw()->grad.size() == p.size()) ad = p.raw()->grad;
        const std::size_t probes = std::min<std::size_t>(3, p.size());
        for (std::size_t k = 0; k < probes; ++k) {
            const std::size_t i = hash_combine(seed, std::hash<std::string>{}(name), k) % p.size();
            NoGradGuard ng;
            const T orig = p.mutable_data()[i];
            p.mutable_data()[i] = orig + h;
            const double fp = forward().scalar();
            p.mutable_data()[i] = orig - h;
            const double fm = forward().scalar();
            p.mutable_data()[i] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(ad[i]), 1e-3});
            report.max_err = std::max(report.max_err, std::abs(fd - ad[i]) / denom);
        }
    }
    report.pass = report.max_err < tol;
    return report;
}

} // namespace s3d
