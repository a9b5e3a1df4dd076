#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>

#include "s3d/config.hpp"
#include "s3d/geometry.hpp"
#include "s3d/io.hpp"
#include "s3d/refiner.hpp"

namespace s3d {

// Procedural "speaker" scenes: a shaded, procedurally textured sphere head
// whose mouth is a spherical cap that opens with a driving envelope. Frames
// are ray-traced in closed form, so poses, masks and lip boxes are exact and
// this renderer doubles as the ground-truth oracle for the learned pipeline.

struct IdentityParams {
    std::uint64_t seed = 0;
    double radius = 0.4;         // head radius, scene units
    double mouth_lat = -0.45;    // radians below the equator
    double mouth_lon = 0.0;
    double max_aperture = 0.6;   // cap angular radius at envelope 1, <= pi/4
    std::array<double, 3> base_color{0.5, 0.4, 0.35};
    std::array<double, 3> mouth_color{0.93, 0.90, 0.86};
    std::array<double, 3> bg_color{0.2, 0.22, 0.26};
    struct Wave {
        Vec3 axis;
        double freq = 2.0, phase = 0.0;
        std::array<double, 3> amp{0, 0, 0};
    };
    std::vector<Wave> waves;

    Vec3 mouth_dir() const {
        return {std::cos(mouth_lat) * std::sin(mouth_lon), std::sin(mouth_lat),
                std::cos(mouth_lat) * std::cos(mouth_lon)};
    }
};

inline IdentityParams synth_identity(std::uint64_t seed) {
    Rng rng(seed ^ 0xa5eed5eedull);
    IdentityParams id;
    id.seed = seed;
    id.radius = rng.uniform(0.3, 0.5);
    id.mouth_lat = -rng.uniform(0.35, 0.6);
    id.mouth_lon = rng.uniform(-0.15, 0.15);
    id.max_aperture = rng.uniform(0.45, 0.785398163);
    for (int c = 0; c < 3; ++c) id.base_color[c] = rng.uniform(0.35, 0.6);
    id.mouth_color = {rng.uniform(0.88, 0.96), rng.uniform(0.85, 0.93), rng.uniform(0.82, 0.9)};
    const double bg = rng.uniform(0.12, 0.3);
    id.bg_color = {bg, bg * rng.uniform(0.9, 1.1), bg * rng.uniform(0.9, 1.15)};
    for (int w = 0; w < 3; ++w) {
        IdentityParams::Wave wave;
        wave.axis = normalized(
            {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        wave.freq = rng.uniform(1.5, 4.5);
        wave.phase = rng.uniform(0, 6.283185307);
        for (int c = 0; c < 3; ++c) wave.amp[c] = rng.uniform(0.04, 0.12);
        id.waves.push_back(wave);
    }
    return id;
}

namespace detail {

inline std::array<double, 3> surface_albedo(const IdentityParams& id, const Vec3& dir) {
    std::array<double, 3> c = id.base_color;
    for (const auto& w : id.waves) {
        const double s = std::sin(w.freq * 3.14159265358979 * dot(w.axis, dir) + w.phase);
        for (int i = 0; i < 3; ++i) c[i] += w.amp[i] * s;
    }
    for (int i = 0; i < 3; ++i) c[i] = std::min(std::max(c[i], 0.05), 0.95);
    return c;
}

inline const Vec3 kLightDir = normalized({0.3, 0.5, 0.8});

// Shade one camera ray against the head. Mouth pixels see through the cap to
// the bright interior (the sphere's inner back wall).
inline std::array<double, 3> shade_ray(const IdentityParams& id, const Vec3& origin,
                                       const Vec3& dir, double aperture) {
    const double b = dot(origin, dir);
    const double c0 = dot(origin, origin) - id.radius * id.radius;
    const double disc = b * b - c0;
    if (disc <= 0.0) return id.bg_color;
    const double sd = std::sqrt(disc);
    const double t1 = -b - sd;
    if (t1 <= 0.0) return id.bg_color;
    const Vec3 p1 = origin + dir * t1;
    const Vec3 n1 = p1 * (1.0 / id.radius);
    const Vec3 m = id.mouth_dir();
    const double a1 = std::acos(std::min(1.0, std::max(-1.0, dot(n1, m))));
    if (aperture > 0.0 && a1 < aperture) {
        // through the open cap onto the interior back wall
        const double t2 = -b + sd;
        const Vec3 p2 = origin + dir * t2;
        const Vec3 n2 = p2 * (1.0 / id.radius);
        const double a2 = std::acos(std::min(1.0, std::max(-1.0, dot(n2, m))));
        const double vignette = 0.8 + 0.2 * std::cos(a2);
        return {id.mouth_color[0] * vignette, id.mouth_color[1] * vignette,
                id.mouth_color[2] * vignette};
    }
    auto albedo = surface_albedo(id, n1);
    const double shade = 0.55 + 0.45 * std::max(0.0, dot(n1, kLightDir));
    return {albedo[0] * shade, albedo[1] * shade, albedo[2] * shade};
}

inline float quantize8(double v) {
    v = std::min(std::max(v, 0.0), 1.0);
    return static_cast<float>(std::lround(v * 255.0) / 255.0);
}

} // namespace detail

// Ground-truth frame at the given camera pose and mouth aperture fraction,
// 2x2 supersampled and quantized to the 8-bit grid the dataset files use.
inline Tensor<float> render_frame_gt(const IdentityParams& id, const Pose& cam_pose,
                                     double envelope, std::size_t res) {
    const Intrinsics k = Intrinsics::synthetic(res, res);
    const double aperture = id.max_aperture * envelope;
    std::vector<float> img(3 * res * res);
    for (std::size_t y = 0; y < res; ++y)
        for (std::size_t x = 0; x < res; ++x) {
            std::array<double, 3> acc{0, 0, 0};
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    const double u = double(x) + 0.25 + 0.5 * sx;
                    const double v = double(y) + 0.25 + 0.5 * sy;
                    Ray ray = generate_ray(cam_pose, k, u, v, 0.05, 10.0);
                    auto c = detail::shade_ray(id, ray.origin, ray.direction, aperture);
                    for (int i = 0; i < 3; ++i) acc[i] += c[i];
                }
            for (int i = 0; i < 3; ++i)
                img[(i * res + y) * res + x] = detail::quantize8(acc[i] * 0.25);
        }
    return Tensor<float>::from_data({3, res, res}, std::move(img));
}

// Projection-space bounding box of the mouth cap rim at full aperture,
// padded; clamped to the frame.
inline std::array<double, 4> mouth_box(const IdentityParams& id, const Pose& cam_pose,
                                       std::size_t res) {
    const Intrinsics k = Intrinsics::synthetic(res, res);
    const Pose inv = pose_invert(cam_pose);
    const Vec3 m = id.mouth_dir();
    // orthonormal frame around the mouth direction
    Vec3 u = normalized(std::abs(m[0]) < 0.9 ? Vec3{1, 0, 0} - m * m[0]
                                             : Vec3{0, 1, 0} - m * m[1]);
    Vec3 v = {m[1] * u[2] - m[2] * u[1], m[2] * u[0] - m[0] * u[2], m[0] * u[1] - m[1] * u[0]};
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    const double ca = std::cos(id.max_aperture), sa = std::sin(id.max_aperture);
    for (int i = 0; i < 48; ++i) {
        const double th = 6.283185307 * i / 48.0;
        Vec3 dir = m * ca + (u * std::cos(th) + v * std::sin(th)) * sa;
        Vec3 p = dir * id.radius;
        Vec3 cam = pose_apply(inv, p);
        if (cam[2] >= -1e-6) continue; // behind the camera
        const double px = k.cx + k.focal * cam[0] / -cam[2];
        const double py = k.cy - k.focal * cam[1] / -cam[2];
        x0 = std::min(x0, px);
        y0 = std::min(y0, py);
        x1 = std::max(x1, px);
        y1 = std::max(y1, py);
    }
    if (x0 > x1) return {0, 0, 0, 0}; // rim fully behind the camera
    const double mx = 0.18 * (x1 - x0) + 2.0, my = 0.18 * (y1 - y0) + 2.0;
    x0 = std::max(0.0, x0 - mx);
    y0 = std::max(0.0, y0 - my);
    x1 = std::min(double(res), x1 + mx);
    y1 = std::min(double(res), y1 + my);
    return {x0, y0, x1, y1};
}

struct SyntheticSequence {
    IdentityParams identity;
    std::size_t width = 0, height = 0, fps = 25;
    std::uint64_t sequence_seed = 0;
    std::vector<Tensor<float>> frames;              // [3,H,W] each
    std::vector<Pose> poses;                        // camera poses
    std::vector<float> envelope;                    // [0,1]
    std::vector<std::array<float, 4>> lip_boxes;    // x0,y0,x1,y1 pixels
    std::vector<Tensor<float>> masks;               // [H,W] binary

    std::size_t frame_count() const { return frames.size(); }

    // envelope window centered on `frame`, edge-clamped
    Tensor<float> audio_window(std::size_t frame, std::size_t length) const {
        std::vector<float> w(length);
        const long n = long(envelope.size());
        for (std::size_t j = 0; j < length; ++j) {
            long idx = long(frame) - long(length / 2) + long(j);
            idx = std::min(std::max(idx, 0l), n - 1);
            w[j] = envelope[idx];
        }
        return Tensor<float>::from_data({length}, std::move(w));
    }
};

inline SyntheticSequence synth_sequence(const IdentityParams& id, std::size_t n_frames,
                                        std::uint64_t seed, const Config& cfg) {
    check_contract(n_frames >= 1, "synth_sequence requires n_frames >= 1");
    SyntheticSequence seq;
    seq.identity = id;
    seq.width = seq.height = cfg.fine_res;
    seq.fps = cfg.fps;
    seq.sequence_seed = seed;

    Rng rng(seed ^ 0x5e95eedull);
    // pose trajectory: bounded yaw/pitch sinusoids
    const double yaw_amp = rng.uniform(0.15, 0.35), yaw_freq = rng.uniform(0.15, 0.4);
    const double yaw_phase = rng.uniform(0, 6.28);
    const double pitch_amp = rng.uniform(0.08, 0.2), pitch_freq = rng.uniform(0.1, 0.35);
    const double pitch_phase = rng.uniform(0, 6.28);
    // envelope: three sinusoids, min-max normalized
    struct Osc {
        double amp, freq, phase;
    };
    std::vector<Osc> osc;
    for (int i = 0; i < 3; ++i)
        osc.push_back({rng.uniform(0.4, 1.0), rng.uniform(0.6, 2.8), rng.uniform(0, 6.28)});

    std::vector<double> env_raw(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const double t = double(i) / double(cfg.fps);
        double e = 0;
        for (const auto& o : osc) e += o.amp * std::sin(6.283185307 * o.freq * t + o.phase);
        env_raw[i] = e;
    }
    const auto [lo_it, hi_it] = std::minmax_element(env_raw.begin(), env_raw.end());
    const double lo = *lo_it, hi = *hi_it;
    for (std::size_t i = 0; i < n_frames; ++i) {
        const double e = hi - lo > 1e-9 ? (env_raw[i] - lo) / (hi - lo) : 0.5;
        seq.envelope.push_back(static_cast<float>(e));
    }

    for (std::size_t i = 0; i < n_frames; ++i) {
        const double t = double(i) / double(cfg.fps);
        const double yaw = yaw_amp * std::sin(6.283185307 * yaw_freq * t + yaw_phase);
        const double pitch = pitch_amp * std::sin(6.283185307 * pitch_freq * t + pitch_phase);
        Pose cam = orbit_pose(yaw, pitch, cfg.cam_distance);
        seq.poses.push_back(cam);
        seq.frames.push_back(render_frame_gt(id, cam, seq.envelope[i], cfg.fine_res));
        auto box = mouth_box(id, cam, cfg.fine_res);
        seq.lip_boxes.push_back({float(box[0]), float(box[1]), float(box[2]), float(box[3])});
        seq.masks.push_back(face_mask<float>(id.radius, cam, cfg.fine_res));
    }
    return seq;
}

// ---------------------------------------------------------------------------
// on-disk layout: meta.txt, frames/%05d.ppm, poses.s3dt, envelope.s3dt,
// lipboxes.s3dt, masks/%05d.pbm

namespace detail {
inline std::string frame_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", i);
    return buf;
}
} // namespace detail

inline void write_dataset(const SyntheticSequence& seq, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "frames");
    fs::create_directories(fs::path(dir) / "masks");

    std::ofstream meta(fs::path(dir) / "meta.txt");
    if (!meta) throw FormatError("cannot write " + dir + "/meta.txt");
    meta << "fps=" << seq.fps << "\n";
    meta << "width=" << seq.width << "\n";
    meta << "height=" << seq.height << "\n";
    meta << "n_frames=" << seq.frame_count() << "\n";
    meta << "identity_seed=" << seq.identity.seed << "\n";
    meta << "sequence_seed=" << seq.sequence_seed << "\n";
    // raw-speech sampling rate recorded for provenance; the envelope track
    // here runs at the video rate instead
    meta << "audio_raw_rate_hz=16000\n";
    meta << "envelope_rate_hz=" << seq.fps << "\n";
    meta.close();

    const std::size_t n = seq.frame_count();
    std::vector<double> poses(n * 12);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = pose_flatten(seq.poses[i]);
        std::copy(row.begin(), row.end(), poses.begin() + i * 12);
    }
    io::save_tensor(dir + "/poses.s3dt", Tensor<double>::from_data({n, 12}, std::move(poses)));
    io::save_tensor(dir + "/envelope.s3dt", Tensor<float>::from_data({n}, seq.envelope));
    std::vector<float> boxes(n * 4);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < 4; ++j) boxes[i * 4 + j] = seq.lip_boxes[i][j];
    io::save_tensor(dir + "/lipboxes.s3dt", Tensor<float>::from_data({n, 4}, std::move(boxes)));
    for (std::size_t i = 0; i < n; ++i) {
        io::write_ppm(dir + "/frames/" + detail::frame_name(i) + ".ppm", seq.frames[i]);
        io::write_pbm(dir + "/masks/" + detail::frame_name(i) + ".pbm", seq.masks[i]);
    }
}

inline SyntheticSequence read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream meta(fs::path(dir) / "meta.txt");
    if (!meta) throw FormatError("cannot open " + dir + "/meta.txt");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"fps", "width", "height", "n_frames", "identity_seed"})
        if (!kv.count(key))
            throw FormatError(dir + "/meta.txt missing key " + std::string(key));

    SyntheticSequence seq;
    seq.fps = std::stoul(kv["fps"]);
    seq.width = std::stoul(kv["width"]);
    seq.height = std::stoul(kv["height"]);
    seq.identity = synth_identity(std::stoull(kv["identity_seed"]));
    if (kv.count("sequence_seed")) seq.sequence_seed = std::stoull(kv["sequence_seed"]);
    const std::size_t n = std::stoul(kv["n_frames"]);

    Tensor<double> poses = io::load_tensor<double>(dir + "/poses.s3dt");
    if (poses.dims() != Dims{n, 12})
        throw FormatError(dir + "/poses.s3dt has dims " + dims_str(poses.dims()));
    Tensor<float> envelope = io::load_tensor<float>(dir + "/envelope.s3dt");
    if (envelope.dims() != Dims{n})
        throw FormatError(dir + "/envelope.s3dt has dims " + dims_str(envelope.dims()));
    Tensor<float> boxes = io::load_tensor<float>(dir + "/lipboxes.s3dt");
    if (boxes.dims() != Dims{n, 4})
        throw FormatError(dir + "/lipboxes.s3dt has dims " + dims_str(boxes.dims()));

    for (std::size_t i = 0; i < n; ++i) {
        seq.poses.push_back(pose_unflatten(poses.data().data() + i * 12));
        seq.envelope.push_back(envelope[i]);
        seq.lip_boxes.push_back({boxes[i * 4], boxes[i * 4 + 1], boxes[i * 4 + 2],
                                 boxes[i * 4 + 3]});
        seq.frames.push_back(io::read_ppm<float>(dir + "/frames/" + detail::frame_name(i) + ".ppm"));
        seq.masks.push_back(io::read_pbm<float>(dir + "/masks/" + detail::frame_name(i) + ".pbm"));
        if (seq.frames.back().dims() != Dims{3, seq.height, seq.width})
            throw FormatError("frame extent mismatch in " + dir);
    }
    return seq;
}

// sequence subdirectories (or the directory itself when it is a dataset)
inline std::vector<std::string> dataset_dirs(const std::string& root) {
    namespace fs = std::filesystem;
    if (fs::exists(fs::path(root) / "meta.txt")) return {root};
    std::vector<std::string> dirs;
    if (fs::is_directory(root))
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_directory() && fs::exists(e.path() / "meta.txt"))
                dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

} // namespace s3d
