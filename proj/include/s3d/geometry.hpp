#pragma once

#include <array>
#include <cmath>

#include "s3d/common.hpp"
#include "s3d/random.hpp"

namespace s3d {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    double n = norm(a);
    check_contract(n > 1e-300, "cannot normalize a zero vector");
    return a * (1.0 / n);
}

// Rigid transform {R, T}: apply(x) = R x + T. R row-major.
struct Pose {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Vec3 translation{0, 0, 0};

    static Pose identity() { return Pose{}; }

    // orthonormality defect, max-abs entry of R^T R - I
    double orthonormality_error() const {
        double worst = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += rotation[k * 3 + i] * rotation[k * 3 + j];
                worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
            }
        return worst;
    }

    double det() const {
        const auto& r = rotation;
        return r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
               r[2] * (r[3] * r[7] - r[4] * r[6]);
    }

    bool valid(double tol = 1e-6) const {
        return orthonormality_error() <= tol && std::abs(det() - 1.0) <= tol;
    }
};

inline Vec3 pose_apply(const Pose& p, const Vec3& x) {
    const auto& r = p.rotation;
    return {r[0] * x[0] + r[1] * x[1] + r[2] * x[2] + p.translation[0],
            r[3] * x[0] + r[4] * x[1] + r[5] * x[2] + p.translation[1],
            r[6] * x[0] + r[7] * x[1] + r[8] * x[2] + p.translation[2]};
}

inline Pose pose_invert(const Pose& p) {
    check_contract(p.valid(1e-5), "pose_invert: rotation is not orthonormal within tolerance");
    Pose inv;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) inv.rotation[i * 3 + j] = p.rotation[j * 3 + i];
    // T' = -R^T T
    Vec3 t = {0, 0, 0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i] -= inv.rotation[i * 3 + j] * p.translation[j];
    inv.translation = t;
    return inv;
}

// a then b as functions: (b ∘ a)(x) = b(a(x))
inline Pose pose_compose(const Pose& b, const Pose& a) {
    Pose c;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += b.rotation[i * 3 + k] * a.rotation[k * 3 + j];
            c.rotation[i * 3 + j] = s;
        }
    c.translation = pose_apply(b, a.translation);
    return c;
}

// yaw about +y then pitch about +x, zero translation
inline Pose pose_from_yaw_pitch(double yaw, double pitch) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    Pose yawp, pitchp;
    yawp.rotation = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
    pitchp.rotation = {1, 0, 0, 0, cp, -sp, 0, sp, cp};
    return pose_compose(pitchp, yawp);
}

// Orbit camera pose: yaw/pitch rotation applied to the canonical camera that
// sits at (0,0,distance) looking at the origin.
inline Pose orbit_pose(double yaw, double pitch, double distance) {
    Pose offset;
    offset.translation = {0, 0, distance};
    return pose_compose(pose_from_yaw_pitch(yaw, pitch), offset);
}

// row-major 3x4 [R|T]
inline std::array<double, 12> pose_flatten(const Pose& p) {
    std::array<double, 12> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) out[i * 4 + j] = p.rotation[i * 3 + j];
        out[i * 4 + 3] = p.translation[i];
    }
    return out;
}

inline Pose pose_unflatten(const double* row12) {
    Pose p;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) p.rotation[i * 3 + j] = row12[i * 4 + j];
        p.translation[i] = row12[i * 4 + 3];
    }
    return p;
}

struct Intrinsics {
    double focal = 0.0;     // pixels
    double cx = 0.0, cy = 0.0; // principal point, pixels
    std::size_t width = 0, height = 0;

    static Intrinsics synthetic(std::size_t w, std::size_t h) {
        // focal = image width, principal point = image center
        return Intrinsics{static_cast<double>(w), w * 0.5, h * 0.5, w, h};
    }
    bool valid() const {
        return focal > 0 && cx >= 0 && cx <= width && cy >= 0 && cy <= height;
    }
};

struct Ray {
    Vec3 origin;
    Vec3 direction; // unit
    double t_near = 0.0, t_far = 0.0;
};

// Pinhole rays, camera looks down -z; pixel coordinates are measured at the
// point given (use u+0.5, v+0.5 for pixel centers).
inline Ray generate_ray(const Pose& cam, const Intrinsics& k, double u, double v,
                        double t_near, double t_far) {
    check_contract(k.valid(), "invalid intrinsics");
    check_contract(u >= 0 && u <= k.width && v >= 0 && v <= k.height,
                   "pixel (" + std::to_string(u) + "," + std::to_string(v) + ") outside image");
    check_contract(t_near < t_far, "ray requires t_near < t_far");
    Vec3 dir_cam = {(u - k.cx) / k.focal, -(v - k.cy) / k.focal, -1.0};
    const auto& r = cam.rotation;
    Vec3 dir_world = {r[0] * dir_cam[0] + r[1] * dir_cam[1] + r[2] * dir_cam[2],
                      r[3] * dir_cam[0] + r[4] * dir_cam[1] + r[5] * dir_cam[2],
                      r[6] * dir_cam[0] + r[7] * dir_cam[1] + r[8] * dir_cam[2]};
    return Ray{cam.translation, normalized(dir_world), t_near, t_far};
}

inline std::vector<Ray> generate_rays(const Pose& cam, const Intrinsics& k,
                                      const std::vector<std::pair<double, double>>& pixels,
                                      double t_near, double t_far) {
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (const auto& [u, v] : pixels) rays.push_back(generate_ray(cam, k, u, v, t_near, t_far));
    return rays;
}

// One depth per equal-width bin of [t_near, t_far]; bin midpoints without
// jitter, one uniform draw per bin with it. Draws are addressed by
// (seed, ray_index, bin) so evaluation order does not matter.
inline std::vector<double> stratified_depths(const Ray& r, std::size_t n, bool jitter,
                                             std::uint64_t seed, std::uint64_t ray_index = 0) {
    check_contract(n >= 1, "stratified_depths requires n >= 1");
    std::vector<double> ts(n);
    const double span = (r.t_far - r.t_near) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = jitter ? unit_at(seed, ray_index, i) : 0.5;
        ts[i] = r.t_near + (static_cast<double>(i) + u) * span;
    }
    return ts;
}

inline Vec3 ray_point(const Ray& r, double t) { return r.origin + r.direction * t; }

} // namespace s3d
