#pragma once

#include "s3d/appearance.hpp"
#include "s3d/deform.hpp"
#include "s3d/geometry.hpp"
#include "s3d/nn.hpp"

namespace s3d {

// Tri-plane feature decoding and discrete volume rendering of the coarse
// inner-face frame.

template <typename T>
class TriplaneDecoder {
public:
    TriplaneDecoder() = default;
    TriplaneDecoder(ParamStore<T>& ps, const Config& cfg, Rng& rng, std::size_t feature_dim)
        : input_dim_(feature_dim + (cfg.audio_to_decoder ? cfg.audio_dim : 0)) {
        l1_ = nn::Linear<T>::create(ps, "decoder/l1", input_dim_, cfg.decoder_hidden, rng);
        l2_ = nn::Linear<T>::create(ps, "decoder/l2", cfg.decoder_hidden, 4, rng);
    }

    // features [N,F] -> (color [N,3] in [0,1], density [N,1] >= 0)
    std::pair<Tensor<T>, Tensor<T>> operator()(const Tensor<T>& features) const {
        check_shape(features.rank() == 2 && features.extent(1) == input_dim_,
                    "decoder expects [N," + std::to_string(input_dim_) + "], got " +
                        dims_str(features.dims()));
        auto h = ops::relu(l1_(features));
        auto out = l2_(h);
        auto color = ops::sigmoid(ops::slice_cols(out, 0, 3));
        auto sigma = ops::softplus(ops::slice_cols(out, 3, 4));
        return {color, sigma};
    }

    std::size_t input_dim() const { return input_dim_; }

private:
    nn::Linear<T> l1_, l2_;
    std::size_t input_dim_ = 0;
};

// Quadrature of the transmittance integral on [R] rays x [S] ordered samples:
//   alpha_i = 1 - exp(-sigma_i * delta_i),  T_i = prod_{j<i} (1 - alpha_j),
//   weights w_i = T_i alpha_i,  C = sum_i w_i c_i (+ leftover * background).
// T is evaluated as exp of the exclusive prefix sum of sigma*delta, which is
// the same product exactly.
template <typename T>
struct Integrated {
    Tensor<T> rgb;     // [R,3]
    Tensor<T> opacity; // [R,1] total weight, in [0,1]
};

template <typename T>
Integrated<T> integrate_rays(const Tensor<T>& sigma_rs, const Tensor<T>& color_n3,
                             const std::vector<T>& deltas, T background) {
    const std::size_t R = sigma_rs.extent(0), S = sigma_rs.extent(1);
    check_shape(color_n3.rank() == 2 && color_n3.extent(0) == R * S && color_n3.extent(1) == 3,
                "integrate_rays: color must be [R*S,3], got " + dims_str(color_n3.dims()));
    check_contract(deltas.size() == R * S, "integrate_rays: delta count mismatch");
    for (const T d : deltas) check_contract(d > T(0), "integrate_rays: depths must be increasing");

    Tensor<T> delta_t = Tensor<T>::from_data({R, S}, deltas);
    auto optical = ops::mul(sigma_rs, delta_t);                            // sigma*delta
    auto alpha = ops::add_scalar(ops::neg(ops::exp(ops::neg(optical))), T(1));
    auto transmit = ops::exp(ops::neg(ops::cumsum_exclusive_rows(optical)));
    auto weights = ops::mul(transmit, alpha); // [R,S]

    Tensor<T> ones_col = Tensor<T>::ones({S, 1});
    auto total = ops::matmul(weights, ones_col); // [R,1]

    std::vector<Tensor<T>> channels;
    for (int c = 0; c < 3; ++c) {
        auto ch = ops::reshape(ops::slice_cols(color_n3, c, c + 1), {R, S});
        channels.push_back(ops::matmul(ops::mul(weights, ch), ones_col)); // [R,1]
    }
    auto rgb = ops::concat_cols<T>(channels);
    // composite the leftover transmittance over a fixed background
    auto leftover = ops::add_scalar(ops::neg(total), T(1));
    auto bg3 = ops::concat_cols<T>({leftover, leftover, leftover});
    Integrated<T> out;
    out.rgb = ops::add(rgb, ops::mul_scalar(bg3, background));
    out.opacity = total;
    return out;
}

// Single-ray form over ordered (t, color, sigma) samples; depths must be
// strictly increasing and the trailing interval runs to t_far.
template <typename T>
std::array<T, 3> integrate_ray(const std::vector<T>& ts, const std::vector<std::array<T, 3>>& colors,
                               const std::vector<T>& sigmas, T t_far, T background = T(0)) {
    const std::size_t S = ts.size();
    check_contract(S >= 1 && colors.size() == S && sigmas.size() == S,
                   "integrate_ray: inconsistent sample arrays");
    for (std::size_t i = 1; i < S; ++i)
        check_contract(ts[i] > ts[i - 1], "integrate_ray: depths must be strictly increasing");
    check_contract(t_far >= ts.back(), "integrate_ray: t_far before last sample");
    std::vector<T> deltas(S);
    for (std::size_t i = 0; i + 1 < S; ++i) deltas[i] = ts[i + 1] - ts[i];
    deltas[S - 1] = std::max(t_far - ts[S - 1], T(1e-12));
    std::vector<T> flat;
    for (const auto& c : colors) flat.insert(flat.end(), c.begin(), c.end());
    NoGradGuard ng;
    auto out = integrate_rays(Tensor<T>::from_data({1, S}, sigmas),
                              Tensor<T>::from_data({S, 3}, flat), deltas, background);
    return {out.rgb[0], out.rgb[1], out.rgb[2]};
}

// A rendered coarse frame plus its per-pixel accumulated opacity; pixels the
// renderer never touched hold the background value with zero opacity.
template <typename T>
struct CoarseFrame {
    Tensor<T> image;        // [3,Hc,Wc] graph tensor
    Tensor<T> opacity;      // [Hc*Wc] plain values
    Tensor<T> deformation;  // [N,3] graph tensor (empty when deformation off)
    std::vector<std::size_t> pixel_index;
};

struct RenderOptions {
    std::size_t resolution = 64;
    std::size_t n_samples = 32;
    bool jitter = false;
    std::uint64_t seed = 0;
    double background = 0.5;
    // restrict rays to these pixel indices (y*W+x); empty = full frame
    std::vector<std::size_t> pixels;
};

// Ray march every requested pixel: generate the ray, stratify depths, deform
// points, sample the source planes at Inv(P_src) * deformed, decode and
// integrate. Differentiable to every upstream weight.
template <typename T>
CoarseFrame<T> render_coarse(const TriPlaneSet<T>& planes, const DeformationField<T>& field,
                             const DeformContext<T>& ctx, const TriplaneDecoder<T>& decoder,
                             const Pose& src_pose, const Pose& tar_pose,
                             const RenderOptions& opt) {
    const std::size_t res = opt.resolution;
    const Intrinsics intr = Intrinsics::synthetic(res, res);
    std::vector<std::size_t> pixel_index = opt.pixels;
    if (pixel_index.empty()) {
        pixel_index.resize(res * res);
        for (std::size_t i = 0; i < res * res; ++i) pixel_index[i] = i;
    }
    const std::size_t R = pixel_index.size(), S = opt.n_samples;
    const double dist = norm(tar_pose.translation);
    const double t_near = std::max(0.05, dist - field.config().t_margin);
    const double t_far = dist + field.config().t_margin;

    std::vector<T> pts(R * S * 3);
    std::vector<T> deltas(R * S);
    for (std::size_t r = 0; r < R; ++r) {
        const double u = double(pixel_index[r] % res) + 0.5;
        const double v = double(pixel_index[r] / res) + 0.5;
        Ray ray = generate_ray(tar_pose, intr, u, v, t_near, t_far);
        auto ts = stratified_depths(ray, S, opt.jitter, opt.seed, pixel_index[r]);
        for (std::size_t s = 0; s < S; ++s) {
            Vec3 p = ray_point(ray, ts[s]);
            for (int a = 0; a < 3; ++a) pts[(r * S + s) * 3 + a] = static_cast<T>(p[a]);
            deltas[r * S + s] =
                static_cast<T>((s + 1 < S ? ts[s + 1] : ray.t_far) - ts[s]);
        }
    }
    Tensor<T> points = Tensor<T>::from_data({R * S, 3}, std::move(pts));

    Tensor<T> deformed = points;
    Tensor<T> delta;
    if (field.config().deform_enabled) {
        delta = field(points, ctx, tar_pose);
        deformed = ops::add(points, delta);
    }
    Tensor<T> features = sample_triplane(planes, src_pose, deformed, field.config().cam_distance);
    if (field.config().audio_to_decoder)
        features = ops::concat_cols<T>(
            {features, ops::broadcast_rows(ctx.pooled_audio, features.extent(0))});
    auto [color, sigma] = decoder(features);
    auto integrated = integrate_rays(ops::reshape(sigma, {R, S}), color, deltas,
                                     static_cast<T>(opt.background));

    CoarseFrame<T> frame;
    frame.image = ops::scatter_pixels(integrated.rgb, pixel_index, res, res,
                                      static_cast<T>(opt.background));
    std::vector<T> opac(res * res, T(0));
    for (std::size_t r = 0; r < R; ++r) opac[pixel_index[r]] = integrated.opacity[r];
    frame.opacity = Tensor<T>::from_data({res * res}, std::move(opac));
    frame.deformation = delta;
    frame.pixel_index = std::move(pixel_index);
    return frame;
}

} // namespace s3d
