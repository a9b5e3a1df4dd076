#include <catch2/catch_amalgamated.hpp>

#include "s3d/pipeline.hpp"
#include "oracles.hpp"

using namespace s3d;
using Td = Tensor<double>;

TEST_CASE("decode_point") {
    Config cfg;
    ParamStore<double> ps;
    Rng rng(3);
    TriplaneDecoder<double> dec(ps, cfg, rng, 48);

    SECTION("zero feature with zero biases gives mid-gray and softplus(0) density") {
        auto [c, s] = dec(Td::zeros({2, 48}));
        for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == 0.5);
        for (std::size_t i = 0; i < s.size(); ++i)
            REQUIRE(s[i] == Catch::Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("density is nonnegative and color in [0,1] for random features") {
        Rng r(5);
        std::vector<double> f(7 * 48);
        for (auto& x : f) x = r.uniform(-3, 3);
        auto [c, s] = dec(Td::from_data({7, 48}, f));
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(s[i] >= 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            REQUIRE(c[i] >= 0.0);
            REQUIRE(c[i] <= 1.0);
        }
    }
    SECTION("wrong feature length is rejected") {
        REQUIRE_THROWS_AS(dec(Td::zeros({2, 47})), ShapeError);
    }
    SECTION("gradient passes finite differences") {
        Rng r(7);
        std::vector<double> f(4 * 48);
        for (auto& x : f) x = r.uniform(-1, 1);
        double err = gradcheck::max_rel_error(
            {Td::from_data({4, 48}, f)}, [&](const std::vector<Td>& in) {
                auto [c, s] = dec(in[0]);
                return ops::add(ops::mean_all(c), ops::mean_all(s));
            });
        REQUIRE(err < 1e-4);
    }
}

TEST_CASE("integrate_ray") {
    SECTION("zero density gives zero color and weight") {
        auto c = integrate_ray<double>({0.2, 0.4, 0.6}, {{{1, 1, 1}}, {{1, 0, 0}}, {{0, 1, 0}}},
                                       {0, 0, 0}, 0.8);
        REQUIRE(c[0] == 0.0);
        REQUIRE(c[1] == 0.0);
        REQUIRE(c[2] == 0.0);
    }
    SECTION("two samples with sigma*delta = ln 2 each composite to (0.5, 0.25, 0)") {
        // alpha = 0.5 for both samples; t = 0, 1 with t_far = 2
        const double s = std::log(2.0);
        auto c = integrate_ray<double>({0.0, 1.0}, {{{1, 0, 0}}, {{0, 1, 0}}}, {s, s}, 2.0);
        REQUIRE(c[0] == Catch::Approx(0.5).margin(1e-9));
        REQUIRE(c[1] == Catch::Approx(0.25).margin(1e-9));
        REQUIRE(c[2] == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("non-monotone depths are a contract error") {
        REQUIRE_THROWS_AS(
            integrate_ray<double>({0.4, 0.2}, {{{1, 1, 1}}, {{1, 1, 1}}}, {1, 1}, 1.0),
            ContractError);
    }
    SECTION("quadrature matches the closed-form transmittance integral on aligned bins") {
        // piecewise-constant field; quadrature bins coincide with constancy
        // intervals, so alpha compositing reproduces the integral exactly
        std::vector<oracle::ConstSegment> segs = {
            {0.0, 0.5, 0.8, {0.9, 0.2, 0.1}},
            {0.5, 1.0, 2.0, {0.1, 0.7, 0.3}},
            {1.0, 1.5, 0.0, {0.5, 0.5, 0.5}},
            {1.5, 2.0, 1.3, {0.2, 0.2, 0.9}},
        };
        auto expect = oracle::transmittance_integral(segs);
        std::vector<double> ts, sig;
        std::vector<std::array<double, 3>> cols;
        for (const auto& s : segs) {
            ts.push_back(s.t0);
            sig.push_back(s.sigma);
            cols.push_back(s.color);
        }
        auto got = integrate_ray<double>(ts, cols, sig, 2.0);
        for (int i = 0; i < 3; ++i) REQUIRE(got[i] == Catch::Approx(expect[i]).margin(1e-6));
    }
}

TEST_CASE("integrate_rays invariants on random rays") {
    Rng rng(19);
    const std::size_t R = 64, S = 16;
    std::vector<double> sig(R * S), col(R * S * 3), deltas(R * S);
    for (auto& x : sig) x = rng.uniform(0, 4);
    for (auto& x : col) x = rng.uniform(0, 1);
    for (auto& x : deltas) x = rng.uniform(0.01, 0.2);
    auto out = integrate_rays(Td::from_data({R, S}, sig), Td::from_data({R * S, 3}, col), deltas,
                              0.0);
    SECTION("total weights lie in [0,1]") {
        for (std::size_t r = 0; r < R; ++r) {
            REQUIRE(out.opacity[r] >= 0.0);
            REQUIRE(out.opacity[r] <= 1.0 + 1e-9);
        }
    }
    SECTION("pixel color bounded by the max sample color per channel") {
        for (std::size_t r = 0; r < R; ++r)
            for (int c = 0; c < 3; ++c) {
                double mx = 0;
                for (std::size_t s = 0; s < S; ++s) mx = std::max(mx, col[(r * S + s) * 3 + c]);
                REQUIRE(out.rgb[r * 3 + c] <= mx + 1e-9);
            }
    }
    SECTION("transmittance is monotone nonincreasing with T0 = 1") {
        // recompute the transmittance sequence directly from the inputs
        for (std::size_t r = 0; r < R; ++r) {
            double acc = 0;
            double prev = 1.0;
            for (std::size_t s = 0; s < S; ++s) {
                const double t = std::exp(-acc);
                if (s == 0) REQUIRE(t == 1.0);
                REQUIRE(t <= prev + 1e-12);
                prev = t;
                acc += sig[r * S + s] * deltas[r * S + s];
            }
        }
    }
}

namespace {
struct RenderSetup {
    Config cfg;
    Generator<double> gen;
    Pose src_pose, tar_pose;
    Tensor<double> src, window;
    RenderSetup() {
        cfg.fine_res = 32;
        cfg.source_res = 16;
        cfg.coarse_res = 16;
        cfg.n_samples = 8;
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
        gen = Generator<double>::build(cfg, 5);
        src_pose = orbit_pose(0.1, 0.0, cfg.cam_distance);
        tar_pose = orbit_pose(-0.1, 0.08, cfg.cam_distance);
        Rng rng(6);
        std::vector<double> img(3 * 32 * 32), win(16);
        for (auto& v : img) v = rng.uniform(0, 1);
        for (auto& v : win) v = rng.uniform(0, 1);
        src = Td::from_data({3, 32, 32}, img);
        window = Td::from_data({16}, win);
    }
    CoarseFrame<double> render(bool jitter, std::uint64_t seed) {
        auto sc = gen.encode_source(src, src_pose);
        auto ctx = gen.field.prepare(sc.fused, window);
        RenderOptions opt;
        opt.resolution = cfg.coarse_res;
        opt.n_samples = cfg.n_samples;
        opt.jitter = jitter;
        opt.seed = seed;
        return render_coarse(sc.planes, gen.field, ctx, gen.decoder, src_pose, tar_pose, opt);
    }
};
} // namespace

TEST_CASE("render_coarse determinism: same seed gives bit-identical frames") {
    RenderSetup s;
    auto a = s.render(true, 42);
    auto b = s.render(true, 42);
    REQUIRE(std::memcmp(a.image.data().data(), b.image.data().data(),
                        a.image.size() * sizeof(double)) == 0);
    auto c = s.render(true, 43);
    REQUIRE(std::memcmp(a.image.data().data(), c.image.data().data(),
                        a.image.size() * sizeof(double)) != 0);
}

TEST_CASE("render_coarse of a constant radiance field is spatially constant") {
    RenderSetup s;
    // constant planes + zero hidden weights make color/density independent of
    // position: set the decoder to constants via zero weights and fixed bias
    for (const auto& name : s.gen.params.names()) {
        Td p = s.gen.params.get(name);
        if (name.rfind("decoder/", 0) == 0)
            for (auto& v : p.mutable_data()) v = 0.0;
    }
    auto& bias = s.gen.params.get("decoder/l2/b").mutable_data();
    bias = {0.3, -0.2, 0.1, 1.5}; // fixed color logits and density raw value
    auto frame = s.render(false, 0);
    // every rendered pixel integrates the same field over the same depth span
    const std::size_t hw = s.cfg.coarse_res * s.cfg.coarse_res;
    std::array<double, 3> ref = {frame.image[0], frame.image[hw], frame.image[2 * hw]};
    for (std::size_t p = 0; p < hw; ++p)
        for (int c = 0; c < 3; ++c)
            REQUIRE(frame.image[c * hw + p] == Catch::Approx(ref[c]).margin(1e-6));
}

TEST_CASE("doubling sample count changes a smooth field by under 2 percent") {
    RenderSetup s;
    auto sc = s.gen.encode_source(s.src, s.src_pose);
    auto ctx = s.gen.field.prepare(sc.fused, s.window);
    auto render_n = [&](std::size_t n) {
        RenderOptions opt;
        opt.resolution = s.cfg.coarse_res;
        opt.n_samples = n;
        opt.jitter = false;
        return render_coarse(sc.planes, s.gen.field, ctx, s.gen.decoder, s.src_pose, s.tar_pose,
                             opt);
    };
    auto a = render_n(16), b = render_n(32);
    double mad = 0;
    for (std::size_t i = 0; i < a.image.size(); ++i) mad += std::abs(a.image[i] - b.image[i]);
    mad /= double(a.image.size());
    REQUIRE(mad < 0.02);
}

TEST_CASE("quadrature error decreases as samples double on a smooth field") {
    RenderSetup s;
    auto sc = s.gen.encode_source(s.src, s.src_pose);
    auto ctx = s.gen.field.prepare(sc.fused, s.window);
    auto render_n = [&](std::size_t n) {
        RenderOptions opt;
        opt.resolution = s.cfg.coarse_res;
        opt.n_samples = n;
        opt.jitter = false;
        return render_coarse(sc.planes, s.gen.field, ctx, s.gen.decoder, s.src_pose, s.tar_pose,
                             opt);
    };
    auto fine = render_n(256); // quadrature reference
    double prev = 1e9;
    for (std::size_t n : {8, 16, 32, 64}) {
        auto img = render_n(n);
        double err = 0;
        for (std::size_t i = 0; i < img.image.size(); ++i)
            err += std::abs(img.image[i] - fine.image[i]);
        err /= double(img.image.size());
        REQUIRE(err <= prev + 1e-3);
        prev = err;
    }
}

TEST_CASE("single-pixel loss gradient w.r.t. a plane entry passes finite differences") {
    RenderSetup s;
    // pick one rendered pixel and one tri-plane parameter; planes come from
    // the encoder so differentiate w.r.t. an encoder kernel entry instead
    auto loss_of = [&]() {
        auto frame = s.render(false, 0);
        const std::size_t hw = s.cfg.coarse_res * s.cfg.coarse_res;
        return ops::mul_scalar(
            ops::sum_all(ops::mul(frame.image,
                                  [&] {
                                      std::vector<double> sel(3 * hw, 0.0);
                                      sel[hw / 2 + 3] = 1.0;
                                      return Td::from_data({3, s.cfg.coarse_res, s.cfg.coarse_res},
                                                           sel);
                                  }())),
            1.0);
    };
    auto loss = loss_of();
    s.gen.params.zero_grad();
    run_backward(loss);
    Td w = s.gen.params.get("enc/fuse0/w");
    REQUIRE(w.raw()->grad.size() == w.size());
    double worst = 0;
    const double h = 1e-5;
    for (int k = 0; k < 5; ++k) {
        const std::size_t i = hash_combine(4, k, 0) % w.size();
        NoGradGuard ng;
        const double orig = w.mutable_data()[i];
        w.mutable_data()[i] = orig + h;
        const double fp = loss_of().scalar();
        w.mutable_data()[i] = orig - h;
        const double fm = loss_of().scalar();
        w.mutable_data()[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        worst = std::max(worst,
                         std::abs(fd - w.raw()->grad[i]) /
                             std::max({std::abs(fd), std::abs(w.raw()->grad[i]), 1e-3}));
    }
    REQUIRE(worst < 1e-5);
}
