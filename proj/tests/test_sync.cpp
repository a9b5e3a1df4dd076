#include <catch2/catch_amalgamated.hpp>

#include "s3d/sync.hpp"
#include "oracles.hpp"

using namespace s3d;
using Td = Tensor<double>;
using Tf = Tensor<float>;

TEST_CASE("cosine_sim") {
    SECTION("identical nonzero vectors give 1") {
        auto v = Td::from_data({3}, {0.3, -0.7, 2.0});
        REQUIRE(cosine_sim(v, v).scalar() == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("orthogonal vectors give 0") {
        auto a = Td::from_data({2}, {1, 0});
        auto b = Td::from_data({2}, {0, 1});
        REQUIRE(cosine_sim(a, b).scalar() == 0.0);
    }
    SECTION("(1,0) against (1,1) gives 1/sqrt(2)") {
        auto a = Td::from_data({2}, {1, 0});
        auto b = Td::from_data({2}, {1, 1});
        REQUIRE(cosine_sim(a, b).scalar() == Catch::Approx(1 / std::sqrt(2.0)).margin(1e-12));
    }
    SECTION("zero-norm operands fall back to similarity 0") {
        auto z = Td::zeros({4});
        auto v = Td::from_data({4}, {1, 2, 3, 4});
        REQUIRE(cosine_sim(z, v).scalar() == 0.0);
        REQUIRE(cosine_sim(z, z).scalar() == 0.0);
    }
    SECTION("dimension mismatch is rejected") {
        REQUIRE_THROWS_AS(cosine_sim(Td::zeros({3}), Td::zeros({4})), ShapeError);
    }
    SECTION("scale invariance and range") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> av(8), bv(8);
            for (auto& x : av) x = rng.uniform(-1, 1);
            for (auto& x : bv) x = rng.uniform(-1, 1);
            auto a = Td::from_data({8}, av);
            auto b = Td::from_data({8}, bv);
            const double c = cosine_sim(a, b).scalar();
            REQUIRE(c >= -1.0 - 1e-9);
            REQUIRE(c <= 1.0 + 1e-9);
            auto a2 = ops::mul_scalar(a, 3.7);
            auto b2 = ops::mul_scalar(b, 0.25);
            REQUIRE(cosine_sim(a2, b2).scalar() == Catch::Approx(c).margin(1e-9));
        }
    }
}

TEST_CASE("triplet_loss") {
    auto unit = [](double x, double y) { return Td::from_data({2}, {x, y}); };
    SECTION("well-separated pairs give zero loss") {
        // cos(anchor,pos)=1, cos(anchor,neg)=0 in both terms
        auto l = triplet_loss(unit(1, 0), unit(1, 0), unit(0, 1), unit(1, 0), unit(0, 1),
                              unit(1, 0));
        REQUIRE(l.scalar() == 0.0);
    }
    SECTION("positive equal to negative gives 2 eta = 1.0") {
        auto l = triplet_loss(unit(1, 0), unit(0, 1), unit(0, 1), unit(0, 1), unit(0, 1),
                              unit(1, 0));
        REQUIRE(l.scalar() == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("matches the direct hinge formula on random unit vectors") {
        Rng rng(7);
        for (int trial = 0; trial < 30; ++trial) {
            auto vec = [&](std::uint64_t) {
                double a = rng.uniform(0, 6.283185307);
                return Td::from_data({2}, {std::cos(a), std::sin(a)});
            };
            auto el = vec(1), eap = vec(2), ean = vec(3), elp = vec(4), eln = vec(5), ea = vec(6);
            auto cosd = [](const Td& x, const Td& y) {
                return cosine_sim(x, y).scalar();
            };
            const double expect = std::max(0.0, 0.5 + cosd(el, ean) - cosd(el, eap)) +
                                  std::max(0.0, 0.5 + cosd(ea, eln) - cosd(ea, elp));
            auto got = triplet_loss(el, eap, ean, elp, eln, ea);
            REQUIRE(got.scalar() == Catch::Approx(expect).margin(1e-12));
        }
    }
    SECTION("nonnegative, zero iff both separations reach the margin") {
        Rng rng(9);
        for (int trial = 0; trial < 40; ++trial) {
            auto vec = [&]() {
                double a = rng.uniform(0, 6.283185307);
                return Td::from_data({2}, {std::cos(a), std::sin(a)});
            };
            auto el = vec(), eap = vec(), ean = vec(), elp = vec(), eln = vec(), ea = vec();
            auto cosd = [](const Td& x, const Td& y) { return cosine_sim(x, y).scalar(); };
            const double l = triplet_loss(el, eap, ean, elp, eln, ea).scalar();
            REQUIRE(l >= 0.0);
            const bool sep = cosd(el, eap) - cosd(el, ean) >= 0.5 &&
                             cosd(ea, elp) - cosd(ea, eln) >= 0.5;
            REQUIRE((l == 0.0) == sep);
        }
    }
    SECTION("literal variant flips the hinge orientation") {
        auto l = triplet_loss(unit(1, 0), unit(1, 0), unit(0, 1), unit(1, 0), unit(0, 1),
                              unit(1, 0), 0.5, /*literal=*/true);
        // literal printed form rewards separation instead: eta + cos(pos) - cos(neg)
        REQUIRE(l.scalar() == Catch::Approx(2 * 1.5).margin(1e-12));
    }
}

TEST_CASE("generator_sync_loss") {
    auto unit = [](double x, double y) { return Td::from_data({2}, {x, y}); };
    REQUIRE(generator_sync_loss(unit(1, 0), unit(1, 0)).scalar() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(generator_sync_loss(unit(1, 0), unit(0, 1)).scalar() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(generator_sync_loss(unit(1, 0), unit(-1, 0)).scalar() ==
            Catch::Approx(2.0).margin(1e-12));
    // range [0,2] on random vectors
    Rng rng(5);
    for (int t = 0; t < 30; ++t) {
        auto a = unit(rng.uniform(-1, 1), rng.uniform(-1, 1));
        auto b = unit(rng.uniform(-1, 1), rng.uniform(-1, 1));
        const double l = generator_sync_loss(a, b).scalar();
        REQUIRE(l >= 0.0);
        REQUIRE(l <= 2.0 + 1e-9);
    }
    // literal form returns the raw cosine
    REQUIRE(generator_sync_loss(unit(1, 0), unit(1, 0), true).scalar() ==
            Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("embeddings") {
    Config cfg;
    ParamStore<float> ps;
    Rng rng(3);
    SyncDiscriminator<float> disc(ps, cfg, rng);

    SECTION("lip embedding dim is D_e regardless of content") {
        Rng r(4);
        std::vector<float> wv(15 * 16 * 32);
        for (auto& v : wv) v = float(r.uniform(0, 1));
        auto e = disc.embed_lips(Tf::from_data({15, 16, 32}, wv));
        REQUIRE(e.dims() == Dims{cfg.sync_embed_dim});
        auto e2 = disc.embed_lips(Tf::zeros({15, 16, 32}));
        REQUIRE(e2.dims() == Dims{cfg.sync_embed_dim});
        // zero window with zero biases embeds to zero
        for (std::size_t i = 0; i < e2.size(); ++i) REQUIRE(e2[i] == 0.0f);
    }
    SECTION("audio embedding mirrors the contract") {
        auto e = disc.embed_audio(Tf::zeros({64}));
        REQUIRE(e.dims() == Dims{cfg.sync_embed_dim});
        for (std::size_t i = 0; i < e.size(); ++i) REQUIRE(e[i] == 0.0f);
        REQUIRE_THROWS_AS(disc.embed_audio(Tf::zeros({32})), ShapeError);
    }
    SECTION("wrong lip window shape is rejected") {
        REQUIRE_THROWS_AS(disc.embed_lips(Tf::zeros({15, 16, 31})), ShapeError);
    }
    SECTION("deterministic under fixed weights") {
        Rng r(6);
        std::vector<float> wv(15 * 16 * 32);
        for (auto& v : wv) v = float(r.uniform(0, 1));
        auto a = disc.embed_lips(Tf::from_data({15, 16, 32}, wv));
        auto b = disc.embed_lips(Tf::from_data({15, 16, 32}, wv));
        REQUIRE(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("crop_resample hits stored pixels for an axis-aligned unit crop") {
    // crop covering the whole frame at matching resolution returns the frame
    Rng rng(8);
    std::vector<double> fv(3 * 16 * 32);
    for (auto& v : fv) v = rng.uniform(0, 1);
    auto frame = Td::from_data({3, 16, 32}, fv);
    auto crop = crop_resample(frame, {0.5f, 0.5f, 31.5f, 15.5f}, 16, 32);
    // sampling grid hits texel centers exactly
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 32; ++x)
                REQUIRE(crop[(c * 16 + y) * 32 + x] ==
                        Catch::Approx(frame[(c * 16 + y) * 32 + x]).margin(1e-9));
}

TEST_CASE("sync training raises the synchronized-vs-offset margin") {
    Config cfg;
    cfg.sync_train_steps = 220;
    cfg.sync_batch = 6;
    cfg.fine_res = 64; // smaller frames keep this test quick
    cfg.coarse_res = 32;
    std::vector<SyntheticSequence> seqs;
    for (int i = 0; i < 3; ++i)
        seqs.push_back(synth_sequence(synth_identity(40 + i), 60, 70 + i, cfg));
    ParamStore<float> ps;
    Rng rng(9);
    SyncDiscriminator<float> disc(ps, cfg, rng);
    const double before = sync_margin(disc, seqs, 24, 5);
    auto result = train_sync(disc, ps, seqs, cfg, 6);
    const double after = sync_margin(disc, seqs, 24, 5);
    INFO("margin before " << before << " after " << after);
    REQUIRE(after > before);
    REQUIRE(result.loss_history.front() > result.loss_history.back());
}

TEST_CASE("sync training requires at least two usable sequences") {
    Config cfg;
    std::vector<SyntheticSequence> one = {synth_sequence(synth_identity(1), 40, 2, cfg)};
    ParamStore<float> ps;
    Rng rng(1);
    SyncDiscriminator<float> disc(ps, cfg, rng);
    REQUIRE_THROWS_AS(train_sync(disc, ps, one, cfg, 3), ConfigError);
}

TEST_CASE("sync training is deterministic given the seed") {
    Config cfg;
    cfg.sync_train_steps = 15;
    cfg.fine_res = 64;
    cfg.coarse_res = 32;
    std::vector<SyntheticSequence> seqs;
    for (int i = 0; i < 2; ++i)
        seqs.push_back(synth_sequence(synth_identity(50 + i), 40, 80 + i, cfg));
    auto run = [&]() {
        ParamStore<float> ps;
        Rng rng(9);
        SyncDiscriminator<float> disc(ps, cfg, rng);
        train_sync(disc, ps, seqs, cfg, 6);
        std::vector<float> flat;
        for (const auto& n : ps.names()) {
            const auto& d = ps.get(n).data();
            flat.insert(flat.end(), d.begin(), d.end());
        }
        return flat;
    };
    auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}
