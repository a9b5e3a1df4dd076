#include <catch2/catch_amalgamated.hpp>

#include "s3d/geometry.hpp"
#include "oracles.hpp"

using namespace s3d;

namespace {
Pose random_pose(Rng& rng, double t_scale = 1.0) {
    Pose p = pose_from_yaw_pitch(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
    p.translation = {rng.uniform(-1, 1) * t_scale, rng.uniform(-1, 1) * t_scale,
                     rng.uniform(-1, 1) * t_scale};
    return p;
}
} // namespace

TEST_CASE("pose_invert") {
    SECTION("identity inverts to identity") {
        Pose inv = pose_invert(Pose::identity());
        for (int i = 0; i < 9; ++i)
            REQUIRE(inv.rotation[i] == Catch::Approx(Pose::identity().rotation[i]).margin(1e-12));
        for (int i = 0; i < 3; ++i) REQUIRE(inv.translation[i] == 0.0);
    }
    SECTION("round trip restores points") {
        Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            Pose p = random_pose(rng);
            Vec3 x = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
            Vec3 back = pose_apply(pose_invert(p), pose_apply(p, x));
            for (int i = 0; i < 3; ++i) REQUIRE(back[i] == Catch::Approx(x[i]).margin(1e-6));
        }
    }
    SECTION("90 degree z-rotation: inverse maps (0,1,0) to (1,0,0)") {
        Pose p;
        p.rotation = {0, -1, 0, 1, 0, 0, 0, 0, 1}; // maps (1,0,0)->(0,1,0)
        Vec3 y = pose_apply(pose_invert(p), {0, 1, 0});
        REQUIRE(y[0] == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(y[1] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(y[2] == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("non-orthonormal rotation is rejected") {
        Pose bad;
        bad.rotation = {1, 0.2, 0, 0, 1, 0, 0, 0, 1};
        REQUIRE_THROWS_AS(pose_invert(bad), ContractError);
    }
    SECTION("double inversion is the original pose") {
        Rng rng(9);
        for (int trial = 0; trial < 10; ++trial) {
            Pose p = random_pose(rng);
            Pose pp = pose_invert(pose_invert(p));
            for (int i = 0; i < 9; ++i)
                REQUIRE(pp.rotation[i] == Catch::Approx(p.rotation[i]).margin(1e-6));
            for (int i = 0; i < 3; ++i)
                REQUIRE(pp.translation[i] == Catch::Approx(p.translation[i]).margin(1e-6));
        }
    }
}

TEST_CASE("pose_apply") {
    SECTION("identity is a no-op") {
        Vec3 x = {0.3, -0.7, 2.0};
        Vec3 y = pose_apply(Pose::identity(), x);
        REQUIRE(y == x);
    }
    SECTION("pure translation moves the origin") {
        Pose p;
        p.translation = {1, 2, 3};
        Vec3 y = pose_apply(p, {0, 0, 0});
        REQUIRE(y == Vec3{1, 2, 3});
    }
    SECTION("matches the homogeneous-matrix oracle exactly") {
        Rng rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            Pose p = random_pose(rng);
            std::array<double, 3> x = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
            auto ref = oracle::homogeneous_apply(p.rotation, p.translation, x);
            Vec3 got = pose_apply(p, {x[0], x[1], x[2]});
            for (int i = 0; i < 3; ++i) REQUIRE(got[i] == ref[i]);
        }
    }
}

TEST_CASE("pose composition is associative on points") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        Pose p1 = random_pose(rng), p2 = random_pose(rng), p3 = random_pose(rng);
        Vec3 x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        Vec3 a = pose_apply(pose_compose(pose_compose(p1, p2), p3), x);
        Vec3 b = pose_apply(pose_compose(p1, pose_compose(p2, p3)), x);
        for (int i = 0; i < 3; ++i) REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-5));
    }
}

TEST_CASE("ray generation") {
    Intrinsics k = Intrinsics::synthetic(64, 64);
    SECTION("principal point looks down the optical axis") {
        Ray r = generate_ray(Pose::identity(), k, k.cx, k.cy, 0.1, 2.0);
        REQUIRE(r.direction[0] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(r.direction[1] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(r.direction[2] == Catch::Approx(-1.0).margin(1e-12));
    }
    SECTION("one focal length right of center gives direction along (1,0,-1)") {
        Intrinsics wide{16.0, 32.0, 32.0, 64, 64}; // short focal keeps the pixel in frame
        Ray r = generate_ray(Pose::identity(), wide, wide.cx + wide.focal, wide.cy, 0.1, 2.0);
        REQUIRE(r.direction[0] == Catch::Approx(1 / std::sqrt(2.0)).margin(1e-12));
        REQUIRE(r.direction[1] == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(r.direction[2] == Catch::Approx(-1 / std::sqrt(2.0)).margin(1e-12));
    }
    SECTION("all rays from one pose share the camera center") {
        Rng rng(5);
        Pose cam = random_pose(rng);
        std::vector<std::pair<double, double>> pixels = {{1, 1}, {30, 12}, {63, 63}, {7, 55}};
        auto rays = generate_rays(cam, k, pixels, 0.1, 2.0);
        for (const auto& r : rays) REQUIRE(r.origin == cam.translation);
    }
    SECTION("pixels outside the image are rejected") {
        REQUIRE_THROWS_AS(generate_ray(Pose::identity(), k, 200, 5, 0.1, 2.0), ContractError);
    }
}

TEST_CASE("stratified sampling") {
    Ray r{{0, 0, 0}, {0, 0, -1}, 0.0, 1.0};
    SECTION("single midpoint without jitter") {
        auto ts = stratified_depths(r, 1, false, 0);
        REQUIRE(ts.size() == 1);
        REQUIRE(ts[0] == 0.5);
    }
    SECTION("four bins give exact midpoints") {
        auto ts = stratified_depths(r, 4, false, 0);
        REQUIRE(ts == std::vector<double>{0.125, 0.375, 0.625, 0.875});
    }
    SECTION("jitter is reproducible and bin-confined") {
        auto a = stratified_depths(r, 8, true, 77, 3);
        auto b = stratified_depths(r, 8, true, 77, 3);
        REQUIRE(a == b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i] >= i / 8.0);
            REQUIRE(a[i] < (i + 1) / 8.0);
            if (i) REQUIRE(a[i] > a[i - 1]);
        }
        auto c = stratified_depths(r, 8, true, 78, 3);
        REQUIRE(a != c);
    }
    SECTION("monotone for many seeds") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            auto ts = stratified_depths(r, 16, true, seed, seed * 31);
            for (std::size_t i = 1; i < ts.size(); ++i) REQUIRE(ts[i] > ts[i - 1]);
        }
    }
}

TEST_CASE("pose flatten/unflatten round trip") {
    Rng rng(30);
    Pose p = random_pose(rng);
    auto row = pose_flatten(p);
    Pose q = pose_unflatten(row.data());
    REQUIRE(p.rotation == q.rotation);
    REQUIRE(p.translation == q.translation);
}
