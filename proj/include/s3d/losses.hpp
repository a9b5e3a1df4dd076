#pragma once

#include "s3d/config.hpp"
#include "s3d/nn.hpp"

namespace s3d {

// Training losses: masked pixel reconstruction, a frozen-random perceptual
// metric, non-saturating logistic adversarial terms, and the deformation
// regularizer, assembled into the weighted total.

// Mean squared error; with a mask, the mean runs over the masked pixels only
// (mask [H,W] against images [C,H,W]).
template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& gen, const Tensor<T>& gt, const Tensor<T>& mask) {
    check_shape(gen.dims() == gt.dims(),
                "pixel_loss: " + dims_str(gen.dims()) + " vs " + dims_str(gt.dims()));
    auto diff = ops::sub(gen, gt);
    auto sq = ops::mul(diff, diff);
    if (!mask.defined()) return ops::mean_all(sq);
    check_shape(gen.rank() == 3 && mask.rank() == 2 && mask.extent(0) == gen.extent(1) &&
                    mask.extent(1) == gen.extent(2),
                "pixel_loss mask " + dims_str(mask.dims()) + " does not match image " +
                    dims_str(gen.dims()));
    const std::size_t C = gen.extent(0), HW = mask.size();
    double count = 0;
    std::vector<T> m3(C * HW);
    for (std::size_t i = 0; i < HW; ++i)
        if (mask[i] > T(0.5)) count += 1;
    check_contract(count > 0, "pixel_loss: empty mask");
    for (std::size_t c = 0; c < C; ++c)
        std::copy(mask.data().begin(), mask.data().end(), m3.begin() + c * HW);
    auto masked = ops::mul(sq, Tensor<T>::from_data(gen.dims(), std::move(m3)));
    return ops::mul_scalar(ops::sum_all(masked), T(1.0 / (count * double(C))));
}

template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& gen, const Tensor<T>& gt) {
    return pixel_loss(gen, gt, Tensor<T>());
}

// Frozen, seeded 3-layer conv feature extractor; the perceptual distance is
// the mean squared gap between final-layer activations. Weights live outside
// the trainable store and are regenerated from the seed.
template <typename T>
class PerceptualNet {
public:
    explicit PerceptualNet(std::uint64_t seed = 77) {
        Rng rng(seed);
        c1_ = make_conv(3, 8, rng);
        c2_ = make_conv(8, 16, rng);
        c3_ = make_conv(16, 16, rng);
    }

    Tensor<T> features(const Tensor<T>& img) const {
        auto h = ops::relu(ops::conv2d(img, c1_, 2, 1));
        h = ops::relu(ops::conv2d(h, c2_, 2, 1));
        return ops::conv2d(h, c3_, 2, 1);
    }

    Tensor<T> operator()(const Tensor<T>& gen, const Tensor<T>& gt) const {
        check_shape(gen.dims() == gt.dims(), "perceptual_loss: " + dims_str(gen.dims()) +
                                                 " vs " + dims_str(gt.dims()));
        auto diff = ops::sub(features(gen), features(gt));
        return ops::mean_all(ops::mul(diff, diff));
    }

private:
    static Tensor<T> make_conv(std::size_t in, std::size_t out, Rng& rng) {
        const double bound = 1.0 / std::sqrt(double(in * 9));
        std::vector<T> w(out * in * 9);
        for (auto& x : w) x = static_cast<T>(rng.uniform(-bound, bound));
        return Tensor<T>::from_data({out, in, 3, 3}, std::move(w));
    }
    Tensor<T> c1_, c2_, c3_;
};

// Small stride-2 conv classifier emitting one logit (mean-pooled head).
template <typename T>
class ImageDiscriminator {
public:
    ImageDiscriminator() = default;
    ImageDiscriminator(ParamStore<T>& ps, const std::string& prefix, Rng& rng) {
        c1_ = nn::Conv2d<T>::create(ps, prefix + "/c1", 3, 16, 3, 2, 1, rng);
        c2_ = nn::Conv2d<T>::create(ps, prefix + "/c2", 16, 32, 3, 2, 1, rng);
        c3_ = nn::Conv2d<T>::create(ps, prefix + "/c3", 32, 64, 3, 2, 1, rng);
        c4_ = nn::Conv2d<T>::create(ps, prefix + "/c4", 64, 64, 3, 2, 1, rng);
        head_ = nn::Linear<T>::create(ps, prefix + "/head", 64, 1, rng);
    }

    // [3,H,W] -> scalar logit
    Tensor<T> operator()(const Tensor<T>& img) const {
        auto h = ops::leaky_relu(c1_(img), T(0.2));
        h = ops::leaky_relu(c2_(h), T(0.2));
        h = ops::leaky_relu(c3_(h), T(0.2));
        h = ops::leaky_relu(c4_(h), T(0.2));
        // global average over spatial sites
        const std::size_t c = h.extent(0), hw = h.extent(1) * h.extent(2);
        auto flat = ops::reshape(h, {c, hw});
        auto pooled = ops::transpose2d(
            ops::matmul(flat, Tensor<T>::full({hw, 1}, T(1) / static_cast<T>(hw))));
        return ops::reshape(head_(pooled), {1});
    }

private:
    nn::Conv2d<T> c1_, c2_, c3_, c4_;
    nn::Linear<T> head_;
};

// Non-saturating logistic GAN losses on single logits:
//   L_G = softplus(-logit_fake);  L_D = softplus(-logit_real) + softplus(logit_fake).
template <typename T>
Tensor<T> adversarial_generator_loss(const Tensor<T>& logit_fake) {
    return ops::reshape(ops::softplus(ops::neg(logit_fake)), {1});
}

template <typename T>
Tensor<T> adversarial_discriminator_loss(const Tensor<T>& logit_real,
                                         const Tensor<T>& logit_fake) {
    return ops::reshape(
        ops::add(ops::softplus(ops::neg(logit_real)), ops::softplus(logit_fake)), {1});
}

// mean over points of the squared deformation norm (per-point sum of squares)
template <typename T>
Tensor<T> deform_reg(const Tensor<T>& delta) {
    check_shape(delta.rank() == 2 && delta.extent(1) == 3,
                "deform_reg expects [N,3], got " + dims_str(delta.dims()));
    auto sq = ops::mul(delta, delta);
    return ops::mul_scalar(ops::sum_all(sq), T(1) / static_cast<T>(delta.extent(0)));
}

// Per-step loss bookkeeping. `total` must always equal the recomputed
// weighted sum of the parts.
struct LossReport {
    std::size_t step = 0;
    double pix = 0, per = 0, adv = 0, sync = 0, deform = 0;
    double total = 0;

    static LossReport make(std::size_t step, double pix, double per, double adv, double sync,
                           double deform, const Config& cfg) {
        LossReport r;
        r.step = step;
        r.pix = pix;
        r.per = per;
        r.adv = adv;
        r.sync = sync;
        r.deform = deform;
        r.total = pix + cfg.lambda_per * per + cfg.lambda_adv * adv + cfg.lambda_sync * sync +
                  cfg.lambda_deform * deform;
        return r;
    }

    double recomputed_total(const Config& cfg) const {
        return pix + cfg.lambda_per * per + cfg.lambda_adv * adv + cfg.lambda_sync * sync +
               cfg.lambda_deform * deform;
    }

    std::string line() const {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "step=%zu pix=%.6f per=%.6f adv=%.6f sync=%.6f deform=%.6f total=%.6f",
                      step, pix, per, adv, sync, deform, total);
        return buf;
    }
};

// weighted total as a graph node for the backward pass
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pix, const Tensor<T>& per, const Tensor<T>& adv,
                     const Tensor<T>& sync, const Tensor<T>& deform, const Config& cfg) {
    auto acc = pix;
    acc = ops::add(acc, ops::mul_scalar(per, static_cast<T>(cfg.lambda_per)));
    acc = ops::add(acc, ops::mul_scalar(adv, static_cast<T>(cfg.lambda_adv)));
    acc = ops::add(acc, ops::mul_scalar(sync, static_cast<T>(cfg.lambda_sync)));
    acc = ops::add(acc, ops::mul_scalar(deform, static_cast<T>(cfg.lambda_deform)));
    return acc;
}

} // namespace s3d
