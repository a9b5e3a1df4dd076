#pragma once

#include "s3d/geometry.hpp"
#include "s3d/nn.hpp"

namespace s3d {

// Coarse-to-fine assembly: analytic inner-face masking for the synthetic
// head (its geometry is known exactly, so no learned segmentation) and the
// x2 super-resolution module that fuses the full source image back in.

// Projected silhouette of the head sphere through a camera pose. Returns the
// image-space disk (cx, cy, radius) in pixels.
inline std::array<double, 3> project_head_disk(double head_radius, const Pose& cam_pose,
                                               std::size_t res) {
    const Intrinsics k = Intrinsics::synthetic(res, res);
    const Pose inv = pose_invert(cam_pose);
    const Vec3 c = pose_apply(inv, {0, 0, 0}); // head center in camera frame
    const double dist = norm(c);
    check_contract(dist > head_radius, "camera inside the head sphere");
    const double z = -c[2];
    check_contract(z > 0, "head behind the camera");
    const double u = k.cx + k.focal * c[0] / z;
    const double v = k.cy - k.focal * c[1] / z;
    const double radius_px = k.focal * head_radius / std::sqrt(dist * dist - head_radius * head_radius);
    return {u, v, radius_px};
}

// Binary inner-face mask: the projected head disk, optionally dilated by a
// pixel margin. Fails when the head is entirely outside the frame.
template <typename T>
Tensor<T> face_mask(double head_radius, const Pose& cam_pose, std::size_t res,
                    double dilate_px = 0.0) {
    auto [u, v, r] = project_head_disk(head_radius, cam_pose, res);
    r += dilate_px;
    std::vector<T> m(res * res, T(0));
    std::size_t inside = 0;
    for (std::size_t y = 0; y < res; ++y)
        for (std::size_t x = 0; x < res; ++x) {
            const double dx = (double(x) + 0.5) - u, dy = (double(y) + 0.5) - v;
            if (dx * dx + dy * dy <= r * r) {
                m[y * res + x] = T(1);
                ++inside;
            }
        }
    check_contract(inside > 0, "head projects entirely outside the frame");
    return Tensor<T>::from_data({res, res}, std::move(m));
}

template <typename T>
std::vector<std::size_t> mask_pixel_indices(const Tensor<T>& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] > T(0.5)) idx.push_back(i);
    return idx;
}

// Super-resolution module. The base image is the x2 nearest upsample of the
// coarse face blended with the source frame by the mask. Two residual conv
// blocks run at the coarse resolution over [coarse, pooled source features,
// mask]; their upsampled features join the full-resolution source features
// and base under a 3x3 head that predicts a correction in logit space, so a
// zero head reproduces the base exactly and the sigmoid keeps [0,1].
template <typename T>
class SuperResolver {
public:
    SuperResolver() = default;
    SuperResolver(ParamStore<T>& ps, Rng& rng) {
        src_feat_ = nn::Conv2d<T>::create(ps, "sr/src", 3, 8, 3, 1, 1, rng);
        blk1a_ = nn::Conv2d<T>::create(ps, "sr/b1a", 12, 12, 3, 1, 1, rng);
        blk1b_ = nn::Conv2d<T>::create(ps, "sr/b1b", 12, 12, 3, 1, 1, rng);
        blk2a_ = nn::Conv2d<T>::create(ps, "sr/b2a", 12, 12, 3, 1, 1, rng);
        blk2b_ = nn::Conv2d<T>::create(ps, "sr/b2b", 12, 12, 3, 1, 1, rng);
        head_ = nn::Conv2d<T>::create_zero(ps, "sr/head", 24, 3, 3, 1, 1);
    }

    // coarse [3,H,W] -> fine [3,2H,2W]; src_full and mask at the fine size
    Tensor<T> operator()(const Tensor<T>& coarse, const Tensor<T>& src_full,
                         const Tensor<T>& mask_fine) const {
        check_shape(coarse.rank() == 3 && coarse.extent(0) == 3,
                    "super_resolve expects coarse [3,H,W], got " + dims_str(coarse.dims()));
        const std::size_t H = coarse.extent(1) * 2, W = coarse.extent(2) * 2;
        check_shape(src_full.dims() == Dims{3, H, W},
                    "super_resolve source must be [3," + std::to_string(H) + "," +
                        std::to_string(W) + "], got " + dims_str(src_full.dims()));
        check_shape(mask_fine.dims() == Dims{H, W},
                    "super_resolve mask must match the fine extent, got " +
                        dims_str(mask_fine.dims()));

        auto up = ops::upsample2x_nearest(coarse);
        // mask replicated across channels as a constant
        std::vector<T> m3(3 * H * W);
        for (int c = 0; c < 3; ++c)
            std::copy(mask_fine.data().begin(), mask_fine.data().end(), m3.begin() + c * H * W);
        Tensor<T> mask3 = Tensor<T>::from_data({3, H, W}, std::move(m3));
        Tensor<T> inv3 = ops::add_scalar(ops::neg(mask3), T(1));
        auto base = ops::add(ops::mul(up, mask3), ops::mul(src_full, inv3));

        auto feats = ops::relu(src_feat_(src_full));
        Tensor<T> mask_half = ops::avgpool2x2(ops::reshape(mask_fine, {std::size_t(1), H, W}));
        auto x = ops::concat_axis0<T>({coarse, ops::avgpool2x2(feats), mask_half});
        x = ops::add(x, blk1b_(ops::relu(blk1a_(x))));
        x = ops::add(x, blk2b_(ops::relu(blk2a_(x))));
        auto joined = ops::concat_axis0<T>({ops::upsample2x_nearest(x), feats, base,
                                            ops::reshape(mask_fine, {std::size_t(1), H, W})});
        // bounded logit-space correction; the sigmoid can always be pulled
        // back by the reconstruction losses
        auto residual = ops::mul_scalar(ops::tanh_op(head_(joined)), T(4));
        return ops::sigmoid(ops::add(ops::logit_clamped(base, T(1e-6)), residual));
    }

private:
    nn::Conv2d<T> src_feat_, blk1a_, blk1b_, blk2a_, blk2b_, head_;
};

} // namespace s3d
