#pragma once

#include <array>

#include "s3d/config.hpp"
#include "s3d/geometry.hpp"
#include "s3d/nn.hpp"

namespace s3d {

// Hierarchical appearance encoder: a stride-2 pyramid over the source image,
// top-down fusion with 1x1 channel reduction, and a per-level split into
// three orthogonal feature planes sampled under the source pose.

template <typename T>
struct PyramidFeatures {
    std::array<Tensor<T>, 4> levels; // D0..D3, halving spatial extents
};

template <typename T>
struct FusedLevels {
    std::array<Tensor<T>, 4> levels; // F0..F3, 3*C' channels each
};

template <typename T>
struct TriPlaneSet {
    // planes[level] = {F_xy, F_yz, F_xz}, each [C', H_i, W_i]
    std::array<std::array<Tensor<T>, 3>, 4> planes;
    std::size_t channels_per_plane = 0;
};

template <typename T>
class AppearanceEncoder {
public:
    AppearanceEncoder() = default;

    AppearanceEncoder(ParamStore<T>& ps, const Config& cfg, Rng& rng)
        : fused_ch_(3 * cfg.plane_channels) {
        // channel plan: D0..D2 fixed widths, D3 already at the fused width so
        // the top level passes through the fusion unchanged (F3 = D3)
        down_ch_ = {24, 28, 32, fused_ch_};
        down_[0] = nn::Conv2d<T>::create(ps, "enc/down0", 3, down_ch_[0], 3, 2, 1, rng);
        for (int i = 1; i < 4; ++i)
            down_[i] = nn::Conv2d<T>::create(ps, "enc/down" + std::to_string(i), down_ch_[i - 1],
                                             down_ch_[i], 3, 2, 1, rng);
        for (int i = 0; i < 3; ++i) {
            up_[i] = nn::Conv2d<T>::create(ps, "enc/up" + std::to_string(i), fused_ch_,
                                           fused_ch_ / 2, 3, 1, 1, rng);
            fuse_[i] = nn::Conv2d<T>::create(ps, "enc/fuse" + std::to_string(i),
                                             fused_ch_ / 2 + down_ch_[i], fused_ch_, 1, 1, 0, rng);
        }
    }

    PyramidFeatures<T> encode_pyramid(const Tensor<T>& image) const {
        check_shape(image.rank() == 3 && image.extent(0) == 3,
                    "encode_pyramid expects [3,H,W], got " + dims_str(image.dims()));
        check_shape(image.extent(1) % 16 == 0 && image.extent(2) % 16 == 0,
                    "encode_pyramid needs extents divisible by 16, got " +
                        dims_str(image.dims()));
        PyramidFeatures<T> pyr;
        Tensor<T> x = image;
        for (int i = 0; i < 4; ++i) {
            x = ops::relu(down_[i](x));
            pyr.levels[i] = x;
        }
        return pyr;
    }

    // F3 = D3; F_i = Conv_i([Up(F_{i+1}), D_i]) for i = 2..0, where Up is a
    // nearest x2 upsample followed by a 3x3 conv and Conv_i is a 1x1
    // channel reduction back to the fused width.
    FusedLevels<T> fuse_fpn(const PyramidFeatures<T>& pyr) const {
        check_contract(fused_ch_ % 3 == 0, "fused channels must be divisible by 3");
        FusedLevels<T> out;
        out.levels[3] = pyr.levels[3];
        for (int i = 2; i >= 0; --i) {
            auto up = up_[i](ops::upsample2x_nearest(out.levels[i + 1]));
            auto cat = ops::concat_axis0<T>({up, pyr.levels[i]});
            out.levels[i] = fuse_[i](cat);
        }
        return out;
    }

    std::size_t fused_channels() const { return fused_ch_; }
    std::size_t pyramid_channels(int level) const { return down_ch_[level]; }

private:
    std::array<nn::Conv2d<T>, 4> down_;
    std::array<nn::Conv2d<T>, 3> up_;
    std::array<nn::Conv2d<T>, 3> fuse_;
    std::array<std::size_t, 4> down_ch_{24, 28, 32, 36};
    std::size_t fused_ch_ = 36;
};

// [3C',H,W] level tensors reinterpreted as (xy, yz, xz) planes.
template <typename T>
TriPlaneSet<T> split_triplane(const FusedLevels<T>& fused) {
    TriPlaneSet<T> tp;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const auto& f = fused.levels[lvl];
        check_shape(f.extent(0) % 3 == 0, "level channels not divisible by 3: " +
                                              dims_str(f.dims()));
        const std::size_t c = f.extent(0) / 3;
        tp.channels_per_plane = c;
        for (int p = 0; p < 3; ++p)
            tp.planes[lvl][p] = ops::slice_axis0(f, p * c, (p + 1) * c);
    }
    return tp;
}

namespace detail {
// affine map from [-1,1] onto [0, extent-1] pixel units
template <typename T>
Tensor<T> cube_to_plane(const Tensor<T>& c, std::size_t extent) {
    return ops::mul_scalar(ops::add_scalar(c, T(1)), T(0.5) * static_cast<T>(extent - 1));
}
} // namespace detail

// Samples the planes at Inv(P_src) * x for a batch of points [N,3].
// Inverse-pose coordinates are camera-frame; re-centering by +cam_distance
// along z puts the scene box back onto [-1,1]^3 before the affine plane map.
// Per level the three plane features are summed; levels are concatenated.
template <typename T>
Tensor<T> sample_triplane(const TriPlaneSet<T>& tp, const Pose& src_pose,
                          const Tensor<T>& points, double cam_distance) {
    check_shape(points.rank() == 2 && points.extent(1) == 3,
                "sample_triplane expects points [N,3], got " + dims_str(points.dims()));
    const Pose inv = pose_invert(src_pose);
    // row-vector transform: y = x * R^T + t
    std::vector<T> rt(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rt[i * 3 + j] = static_cast<T>(inv.rotation[j * 3 + i]);
    Tensor<T> rott = Tensor<T>::from_data({3, 3}, std::move(rt));
    Tensor<T> trans = Tensor<T>::from_data(
        {3}, {static_cast<T>(inv.translation[0]), static_cast<T>(inv.translation[1]),
              static_cast<T>(inv.translation[2] + cam_distance)});
    Tensor<T> local = ops::add_rowvec(ops::matmul(points, rott), trans);

    Tensor<T> cx = ops::slice_cols(local, 0, 1);
    Tensor<T> cy = ops::slice_cols(local, 1, 2);
    Tensor<T> cz = ops::slice_cols(local, 2, 3);

    std::vector<Tensor<T>> per_level;
    for (int lvl = 0; lvl < 4; ++lvl) {
        const std::size_t he = tp.planes[lvl][0].extent(1);
        const std::size_t we = tp.planes[lvl][0].extent(2);
        auto px = [&](const Tensor<T>& a) { return detail::cube_to_plane(a, we); };
        // second coordinate indexes rows top-down, so flip its sign
        auto py = [&](const Tensor<T>& a) {
            return detail::cube_to_plane(ops::neg(a), he);
        };
        auto xy = ops::concat_cols<T>({px(cx), py(cy)});
        auto yz = ops::concat_cols<T>({px(cy), py(cz)});
        auto xz = ops::concat_cols<T>({px(cx), py(cz)});
        auto f = ops::add(ops::grid_sample_bilinear(tp.planes[lvl][0], xy),
                          ops::add(ops::grid_sample_bilinear(tp.planes[lvl][1], yz),
                                   ops::grid_sample_bilinear(tp.planes[lvl][2], xz)));
        per_level.push_back(f);
    }
    return ops::concat_cols<T>(per_level);
}

} // namespace s3d
