#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "s3d/config.hpp"

using namespace s3d;
namespace fs = std::filesystem;

namespace {
std::string write_temp(const std::string& body) {
    auto p = fs::temp_directory_path() / ("s3d_cfg_" + std::to_string(::getpid()) + ".cfg");
    std::ofstream f(p);
    f << body;
    return p.string();
}
} // namespace

TEST_CASE("defaults match the declared constants") {
    Config c;
    REQUIRE(c.coarse_res == 64);
    REQUIRE(c.fine_res == 128);
    REQUIRE(c.n_samples == 32);
    REQUIRE(c.slot_count == 8);
    REQUIRE(c.slot_dim == 32);
    REQUIRE(c.slot_grid == 16);
    REQUIRE(c.attn_heads == 4);
    REQUIRE(c.attn_dim == 32);
    REQUIRE(c.delta_max == 0.15);
    REQUIRE(c.sync_frames == 5);
    REQUIRE(c.sync_embed_dim == 64);
    REQUIRE(c.lambda_per == 0.01);
    REQUIRE(c.lambda_adv == 1.0);
    REQUIRE(c.lambda_sync == 0.5);
    REQUIRE(c.lambda_deform == 0.001);
    REQUIRE(c.fps == 25);
    REQUIRE(c.pe_octaves == 4);
    REQUIRE_FALSE(c.literal_sync_losses);
    REQUIRE_FALSE(c.audio_to_decoder);
    REQUIRE(c.deform_enabled);
}

TEST_CASE("file parsing with comments and whitespace") {
    auto path = write_temp("# comment\n  lr = 0.005 \nn_samples=16\njitter=0\n\n");
    Config c = Config::load(path);
    REQUIRE(c.lr == 0.005);
    REQUIRE(c.n_samples == 16);
    REQUIRE_FALSE(c.jitter);
    fs::remove(path);
}

TEST_CASE("unknown keys are rejected by name") {
    auto path = write_temp("no_such_key=3\n");
    REQUIRE_THROWS_WITH(Config::load(path), Catch::Matchers::ContainsSubstring("no_such_key"));
    fs::remove(path);
}

TEST_CASE("malformed values are rejected") {
    auto path = write_temp("lr=fast\n");
    REQUIRE_THROWS_AS(Config::load(path), ConfigError);
    fs::remove(path);
    path = write_temp("jitter=2\n");
    REQUIRE_THROWS_AS(Config::load(path), ConfigError);
    fs::remove(path);
}

TEST_CASE("save/load round trip") {
    Config c;
    c.lr = 0.0025;
    c.train_steps = 123;
    c.literal_sync_losses = true;
    auto path = (fs::temp_directory_path() / "s3d_cfg_rt.cfg").string();
    c.save(path);
    Config back = Config::load(path);
    REQUIRE(back.lr == 0.0025);
    REQUIRE(back.train_steps == 123);
    REQUIRE(back.literal_sync_losses);
    fs::remove(path);
}

TEST_CASE("numeric get/set covers every key") {
    Config c;
    for (const auto& [key, _] : Config::fields()) {
        double v = c.get_numeric(key);
        c.set_numeric(key, v);
        REQUIRE(c.get_numeric(key) == v);
    }
}
