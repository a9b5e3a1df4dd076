#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <variant>

#include "s3d/common.hpp"

namespace s3d {

// Runtime configuration, loadable from a key=value text file ('#' comments).
// Every key has a default; unknown keys are rejected by name.
struct Config {
    // scene / rendering
    std::size_t fine_res = 128;   // dataset and super-resolved frame size
    std::size_t coarse_res = 64;  // volume-rendered frame size
    std::size_t source_res = 64;  // appearance encoder input size
    std::size_t n_samples = 32;   // depth samples per ray
    double cam_distance = 2.0;    // canonical camera offset along +z
    double t_margin = 1.0;        // rays cover [dist-t_margin, dist+t_margin]
    bool jitter = true;           // stratified jitter during training

    // appearance encoder
    std::size_t plane_channels = 12; // per plane, per level

    // deformation field
    std::size_t slot_count = 8;
    std::size_t slot_dim = 32;
    std::size_t slot_iters = 3;
    std::size_t slot_grid = 16; // H_s = W_s
    std::size_t attn_heads = 4;
    std::size_t attn_dim = 32;
    std::size_t audio_window = 64;
    std::size_t audio_dim = 16;
    std::size_t pe_octaves = 4;
    double delta_max = 0.15;
    std::size_t deform_hidden = 48;
    bool deform_enabled = true;     // ablation switch
    bool audio_to_decoder = false;  // optional direct audio conditioning

    // decoder / refiner
    std::size_t decoder_hidden = 48;

    // sync discriminator
    std::size_t sync_frames = 5; // T
    std::size_t sync_embed_dim = 64;
    std::size_t lip_crop_h = 16;
    std::size_t lip_crop_w = 32;
    bool literal_sync_losses = false; // printed-form Eq. variants for experiments

    // training
    double lambda_per = 0.01;
    double lambda_adv = 1.0;
    double lambda_sync = 0.5;
    double lambda_deform = 0.001;
    double lr = 1e-3;
    double disc_lr = 2e-5;
    std::size_t disc_warmup = 400; // generator steps before the critics move
    double disc_noise = 0.1;       // instance noise on critic inputs
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t train_steps = 3000;
    std::size_t sync_every = 25;     // steps between sync-loss applications
    std::size_t checkpoint_every = 1000;
    std::size_t sync_train_steps = 2000;
    double sync_lr = 1e-3;
    std::size_t sync_batch = 8;

    // data
    std::size_t fps = 25;
    std::size_t seed = 1;

    using Field = std::variant<std::size_t Config::*, double Config::*, bool Config::*>;

    static const std::map<std::string, Field>& fields() {
        static const std::map<std::string, Field> table = {
            {"fine_res", &Config::fine_res},
            {"coarse_res", &Config::coarse_res},
            {"source_res", &Config::source_res},
            {"n_samples", &Config::n_samples},
            {"cam_distance", &Config::cam_distance},
            {"t_margin", &Config::t_margin},
            {"jitter", &Config::jitter},
            {"plane_channels", &Config::plane_channels},
            {"slot_count", &Config::slot_count},
            {"slot_dim", &Config::slot_dim},
            {"slot_iters", &Config::slot_iters},
            {"slot_grid", &Config::slot_grid},
            {"attn_heads", &Config::attn_heads},
            {"attn_dim", &Config::attn_dim},
            {"audio_window", &Config::audio_window},
            {"audio_dim", &Config::audio_dim},
            {"pe_octaves", &Config::pe_octaves},
            {"delta_max", &Config::delta_max},
            {"deform_hidden", &Config::deform_hidden},
            {"deform_enabled", &Config::deform_enabled},
            {"audio_to_decoder", &Config::audio_to_decoder},
            {"decoder_hidden", &Config::decoder_hidden},
            {"sync_frames", &Config::sync_frames},
            {"sync_embed_dim", &Config::sync_embed_dim},
            {"lip_crop_h", &Config::lip_crop_h},
            {"lip_crop_w", &Config::lip_crop_w},
            {"literal_sync_losses", &Config::literal_sync_losses},
            {"lambda_per", &Config::lambda_per},
            {"lambda_adv", &Config::lambda_adv},
            {"lambda_sync", &Config::lambda_sync},
            {"lambda_deform", &Config::lambda_deform},
            {"lr", &Config::lr},
            {"disc_lr", &Config::disc_lr},
            {"disc_warmup", &Config::disc_warmup},
            {"disc_noise", &Config::disc_noise},
            {"beta1", &Config::beta1},
            {"beta2", &Config::beta2},
            {"adam_eps", &Config::adam_eps},
            {"train_steps", &Config::train_steps},
            {"sync_every", &Config::sync_every},
            {"checkpoint_every", &Config::checkpoint_every},
            {"sync_train_steps", &Config::sync_train_steps},
            {"sync_lr", &Config::sync_lr},
            {"sync_batch", &Config::sync_batch},
            {"fps", &Config::fps},
            {"seed", &Config::seed},
        };
        return table;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key: " + key);
        std::istringstream is(value);
        bool ok = false;
        std::visit(
            [&](auto member) {
                using V = std::remove_reference_t<decltype(this->*member)>;
                if constexpr (std::is_same_v<V, bool>) {
                    int raw;
                    if (is >> raw && (raw == 0 || raw == 1)) {
                        this->*member = raw != 0;
                        ok = true;
                    }
                } else {
                    V raw;
                    if (is >> raw) {
                        this->*member = raw;
                        ok = true;
                    }
                }
            },
            it->second);
        std::string rest;
        if (!ok || (is >> rest))
            throw ConfigError("bad value for config key " + key + ": '" + value + "'");
    }

    std::string get(const std::string& key) const {
        auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key: " + key);
        std::ostringstream os;
        std::visit([&](auto member) { os << this->*member; }, it->second);
        return os.str();
    }

    double get_numeric(const std::string& key) const {
        auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key: " + key);
        double out = 0.0;
        std::visit([&](auto member) { out = static_cast<double>(this->*member); }, it->second);
        return out;
    }

    void set_numeric(const std::string& key, double v) {
        auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key: " + key);
        std::visit(
            [&](auto member) {
                using V = std::remove_reference_t<decltype(this->*member)>;
                this->*member = static_cast<V>(v);
            },
            it->second);
    }

    static Config load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file: " + path);
        Config cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            // trim
            const auto b = line.find_first_not_of(" \t\r\n");
            if (b == std::string::npos) continue;
            const auto e = line.find_last_not_of(" \t\r\n");
            line = line.substr(b, e - b + 1);
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("missing '=' at " + path + ":" + std::to_string(lineno));
            auto strip = [](std::string s) {
                const auto b2 = s.find_first_not_of(" \t");
                if (b2 == std::string::npos) return std::string();
                const auto e2 = s.find_last_not_of(" \t");
                return s.substr(b2, e2 - b2 + 1);
            };
            cfg.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
        }
        return cfg;
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw ConfigError("cannot write config file: " + path);
        for (const auto& [key, _] : fields()) f << key << "=" << get(key) << "\n";
    }
};

} // namespace s3d
