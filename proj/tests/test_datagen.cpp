#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "s3d/datagen.hpp"
#include "s3d/metrics.hpp"

using namespace s3d;
namespace fs = std::filesystem;

namespace {
Config small_cfg() {
    Config cfg;
    cfg.fine_res = 64;
    cfg.coarse_res = 32;
    return cfg;
}
struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("s3d_dg_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};
} // namespace

TEST_CASE("synth_identity") {
    SECTION("deterministic per seed") {
        auto a = synth_identity(42), b = synth_identity(42);
        REQUIRE(a.radius == b.radius);
        REQUIRE(a.mouth_lat == b.mouth_lat);
        REQUIRE(a.max_aperture == b.max_aperture);
        REQUIRE(a.base_color == b.base_color);
    }
    SECTION("no texture collisions over 100 seeds") {
        std::set<double> radii, phases;
        for (std::uint64_t s = 0; s < 100; ++s) {
            auto id = synth_identity(s);
            radii.insert(id.radius);
            phases.insert(id.waves[0].phase);
        }
        REQUIRE(radii.size() == 100);
        REQUIRE(phases.size() == 100);
    }
    SECTION("radius within the configured range and aperture within (0, pi/4]") {
        for (std::uint64_t s = 0; s < 50; ++s) {
            auto id = synth_identity(s);
            REQUIRE(id.radius >= 0.3);
            REQUIRE(id.radius <= 0.5);
            REQUIRE(id.max_aperture > 0.0);
            REQUIRE(id.max_aperture <= 0.7853982);
        }
    }
}

TEST_CASE("synth_sequence basics") {
    Config cfg = small_cfg();
    auto id = synth_identity(7);
    auto seq = synth_sequence(id, 12, 3, cfg);
    REQUIRE(seq.frame_count() == 12);
    REQUIRE(seq.poses.size() == 12);
    REQUIRE(seq.envelope.size() == 12);
    REQUIRE(seq.lip_boxes.size() == 12);
    REQUIRE(seq.masks.size() == 12);
    REQUIRE(seq.fps == 25);
    for (float e : seq.envelope) {
        REQUIRE(e >= 0.0f);
        REQUIRE(e <= 1.0f);
    }
    for (const auto& p : seq.poses) REQUIRE(p.valid(1e-9));
}

TEST_CASE("renders are bit-identical for the same spec") {
    Config cfg = small_cfg();
    auto id = synth_identity(9);
    auto a = synth_sequence(id, 4, 5, cfg);
    auto b = synth_sequence(id, 4, 5, cfg);
    for (std::size_t f = 0; f < 4; ++f)
        REQUIRE(std::memcmp(a.frames[f].data().data(), b.frames[f].data().data(),
                            a.frames[f].size() * sizeof(float)) == 0);
}

TEST_CASE("closed mouth shows face albedo; open mouth brightens the box") {
    Config cfg = small_cfg();
    auto id = synth_identity(11);
    const Pose cam = orbit_pose(0, 0, cfg.cam_distance);
    auto closed = render_frame_gt(id, cam, 0.0, 64);
    auto open = render_frame_gt(id, cam, 1.0, 64);
    auto box = mouth_box(id, cam, 64);
    std::array<float, 4> boxf = {float(box[0]), float(box[1]), float(box[2]), float(box[3])};
    const double closed_i = region_intensity(closed, boxf);
    const double open_i = region_intensity(open, boxf);
    REQUIRE(open_i > closed_i + 0.05);

    // envelope 0 keeps every mouth pixel at the shaded albedo: rendering with
    // aperture 0 equals rendering with the mouth disabled entirely
    IdentityParams no_mouth = id;
    no_mouth.max_aperture = 0.0;
    auto plain = render_frame_gt(no_mouth, cam, 1.0, 64);
    REQUIRE(std::memcmp(closed.data().data(), plain.data().data(),
                        closed.size() * sizeof(float)) == 0);
}

TEST_CASE("mouth-region intensity is monotone in the envelope for a fixed pose") {
    Config cfg = small_cfg();
    auto id = synth_identity(13);
    const Pose cam = orbit_pose(0.05, -0.03, cfg.cam_distance);
    auto box = mouth_box(id, cam, 64);
    std::array<float, 4> boxf = {float(box[0]), float(box[1]), float(box[2]), float(box[3])};
    double prev = -1;
    for (double e : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        auto frame = render_frame_gt(id, cam, e, 64);
        const double inten = region_intensity(frame, boxf);
        REQUIRE(inten >= prev);
        prev = inten;
    }
}

TEST_CASE("lip boxes contain the projected mouth region") {
    Config cfg = small_cfg();
    auto id = synth_identity(17);
    auto seq = synth_sequence(id, 10, 19, cfg);
    for (std::size_t f = 0; f < seq.frame_count(); ++f) {
        // find mouth pixels analytically: rays whose first sphere hit falls
        // inside the open cap
        const Intrinsics k = Intrinsics::synthetic(seq.width, seq.width);
        const double aperture = id.max_aperture * seq.envelope[f];
        if (aperture <= 0) continue;
        const auto& box = seq.lip_boxes[f];
        for (std::size_t y = 0; y < seq.height; ++y)
            for (std::size_t x = 0; x < seq.width; ++x) {
                Ray r = generate_ray(seq.poses[f], k, x + 0.5, y + 0.5, 0.05, 10.0);
                const double b = dot(r.origin, r.direction);
                const double c0 = dot(r.origin, r.origin) - id.radius * id.radius;
                const double disc = b * b - c0;
                if (disc <= 0) continue;
                const double t1 = -b - std::sqrt(disc);
                if (t1 <= 0) continue;
                Vec3 n = (r.origin + r.direction * t1) * (1.0 / id.radius);
                const double ang = std::acos(std::min(1.0, std::max(-1.0, dot(n, id.mouth_dir()))));
                if (ang < aperture) {
                    REQUIRE(x + 0.5 >= box[0]);
                    REQUIRE(x + 0.5 <= box[2]);
                    REQUIRE(y + 0.5 >= box[1]);
                    REQUIRE(y + 0.5 <= box[3]);
                }
            }
    }
}

TEST_CASE("dataset round trip restores every array") {
    Config cfg = small_cfg();
    auto id = synth_identity(23);
    auto seq = synth_sequence(id, 6, 29, cfg);
    TempDir tmp;
    write_dataset(seq, tmp.path.string());
    auto back = read_dataset(tmp.path.string());

    REQUIRE(back.frame_count() == seq.frame_count());
    REQUIRE(back.fps == seq.fps);
    REQUIRE(back.width == seq.width);
    REQUIRE(back.identity.seed == seq.identity.seed);
    REQUIRE(back.identity.radius == seq.identity.radius);
    for (std::size_t f = 0; f < 6; ++f) {
        REQUIRE(back.frames[f].data() == seq.frames[f].data());
        REQUIRE(back.masks[f].data() == seq.masks[f].data());
        REQUIRE(back.envelope[f] == seq.envelope[f]);
        REQUIRE(back.lip_boxes[f] == seq.lip_boxes[f]);
        for (int i = 0; i < 9; ++i)
            REQUIRE(back.poses[f].rotation[i] == seq.poses[f].rotation[i]);
        for (int i = 0; i < 3; ++i)
            REQUIRE(back.poses[f].translation[i] == seq.poses[f].translation[i]);
    }
}

TEST_CASE("dataset writes are byte-stable") {
    Config cfg = small_cfg();
    auto seq = synth_sequence(synth_identity(31), 3, 37, cfg);
    TempDir a, b;
    write_dataset(seq, a.path.string());
    write_dataset(seq, b.path.string());
    for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
        if (!entry.is_regular_file()) continue;
        auto rel = fs::relative(entry.path(), a.path);
        auto fa = io::detail::read_file(entry.path().string());
        auto fb = io::detail::read_file((b.path / rel).string());
        REQUIRE(fa == fb);
    }
}

TEST_CASE("truncated tensor payloads surface as format errors naming the file") {
    Config cfg = small_cfg();
    auto seq = synth_sequence(synth_identity(41), 3, 43, cfg);
    TempDir tmp;
    write_dataset(seq, tmp.path.string());
    auto victim = tmp.path / "envelope.s3dt";
    auto bytes = io::detail::read_file(victim.string());
    bytes.resize(bytes.size() - 2);
    io::detail::write_file(victim.string(), bytes);
    REQUIRE_THROWS_WITH(read_dataset(tmp.path.string()),
                        Catch::Matchers::ContainsSubstring("envelope.s3dt"));
}

TEST_CASE("meta.txt records the video rate and resolution") {
    Config cfg = small_cfg();
    auto seq = synth_sequence(synth_identity(47), 2, 53, cfg);
    TempDir tmp;
    write_dataset(seq, tmp.path.string());
    auto meta = io::detail::read_file((tmp.path / "meta.txt").string());
    REQUIRE(meta.find("fps=25") != std::string::npos);
    REQUIRE(meta.find("width=64") != std::string::npos);
    REQUIRE(meta.find("height=64") != std::string::npos);
    REQUIRE(meta.find("audio_raw_rate_hz=16000") != std::string::npos);
}

TEST_CASE("audio windows clamp at sequence edges") {
    Config cfg = small_cfg();
    auto seq = synth_sequence(synth_identity(59), 10, 61, cfg);
    auto w = seq.audio_window(0, 64);
    REQUIRE(w.size() == 64);
    // leading half clamps to the first envelope entry
    for (int i = 0; i < 30; ++i) REQUIRE(w[i] == seq.envelope[0]);
    auto tail = seq.audio_window(9, 64);
    for (int i = 42; i < 64; ++i) REQUIRE(tail[i] == seq.envelope[9]);
}
