#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s3d/ops.hpp"
#include "s3d/random.hpp"
#include "s3d/tensor.hpp"

namespace s3d {
namespace gradcheck {

// Central-difference verification of reverse-mode gradients, float64.
// An element passes when |fd - ad| < tol * max(|fd|, |ad|) with an absolute
// fallback of tol * floor near zero (floor = 1e-3 so the fallback equals
// 1e-7 at the default tol of 1e-4).

struct Report {
    std::string name;
    double max_err = 0.0;
    bool pass = true;
};

using D = double;
using Td = Tensor<double>;

// loss_fn maps the (leaf) inputs to a scalar tensor
inline double max_rel_error(std::vector<Td> inputs,
                            const std::function<Td(const std::vector<Td>&)>& loss_fn,
                            double h = 1e-5) {
    for (auto& in : inputs) in.set_requires_grad(true);
    Td loss = loss_fn(inputs);
    run_backward(loss);
    double worst = 0.0;
    for (auto& in : inputs) {
        std::vector<double> ad(in.size(), 0.0);
        if (in.raw()->grad.size() == in.size()) ad = in.raw()->grad;
        for (std::size_t i = 0; i < in.size(); ++i) {
            NoGradGuard ng;
            const double orig = in.mutable_data()[i];
            in.mutable_data()[i] = orig + h;
            const double fp = loss_fn(inputs).scalar();
            in.mutable_data()[i] = orig - h;
            const double fm = loss_fn(inputs).scalar();
            in.mutable_data()[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(ad[i]), 1e-3});
            worst = std::max(worst, std::abs(fd - ad[i]) / denom);
        }
    }
    return worst;
}

namespace detail {

inline Td rand_tensor(Dims dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(dims));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Td::from_data(std::move(dims), std::move(v));
}

// keep activation inputs away from relu-style kinks so central differences
// stay valid at h = 1e-5
inline Td rand_tensor_kink_free(Dims dims, Rng& rng, double margin = 0.05) {
    Td t = rand_tensor(std::move(dims), rng);
    for (auto& x : t.mutable_data()) {
        if (std::abs(x) < margin) x = x < 0 ? x - margin : x + margin;
    }
    return t;
}

} // namespace detail

// Finite-difference sweep over the whole differentiable operation set.
inline std::vector<Report> run_op_suite(double tol = 1e-4, std::uint64_t seed = 2024) {
    namespace o = ops;
    Rng rng(seed);
    std::vector<Report> reports;
    auto check = [&](const std::string& name, std::vector<Td> inputs,
                     std::function<Td(const std::vector<Td>&)> fn) {
        const double err = max_rel_error(std::move(inputs), fn);
        reports.push_back({name, err, err < tol});
    };

    auto weighted_sum = [&](const Td& t) {
        // fixed pseudo-random projection keeps the scalarization generic
        Rng wr(seed ^ 0x5150);
        std::vector<double> w(t.size());
        for (auto& x : w) x = wr.uniform(-1.0, 1.0);
        return o::sum_all(o::mul(t, Td::from_data(t.dims(), std::move(w))));
    };

    check("add", {detail::rand_tensor({3, 4}, rng), detail::rand_tensor({3, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::add(in[0], in[1])); });
    check("sub", {detail::rand_tensor({3, 4}, rng), detail::rand_tensor({3, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::sub(in[0], in[1])); });
    check("mul", {detail::rand_tensor({3, 4}, rng), detail::rand_tensor({3, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::mul(in[0], in[1])); });
    check("div", {detail::rand_tensor({3, 4}, rng), detail::rand_tensor({3, 4}, rng, 0.5, 1.5)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::div(in[0], in[1])); });
    check("add_scalar", {detail::rand_tensor({5}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::add_scalar(in[0], 0.7)); });
    check("mul_scalar", {detail::rand_tensor({5}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::mul_scalar(in[0], -1.3)); });
    check("add_rowvec", {detail::rand_tensor({4, 3}, rng), detail::rand_tensor({3}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::add_rowvec(in[0], in[1])); });
    check("mul_rowvec", {detail::rand_tensor({4, 3}, rng), detail::rand_tensor({3}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::mul_rowvec(in[0], in[1])); });
    check("broadcast_rows", {detail::rand_tensor({3}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::broadcast_rows(in[0], 5)); });
    check("exp", {detail::rand_tensor({3, 3}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::exp(in[0])); });
    check("log", {detail::rand_tensor({3, 3}, rng, 0.2, 1.0)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::log(in[0])); });
    check("sqrt", {detail::rand_tensor({3, 3}, rng, 0.2, 1.0)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::sqrt(in[0])); });
    check("recip", {detail::rand_tensor({3, 3}, rng, 0.4, 1.0)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::recip(in[0])); });
    check("relu", {detail::rand_tensor_kink_free({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::relu(in[0])); });
    check("leaky_relu", {detail::rand_tensor_kink_free({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::leaky_relu(in[0], 0.2)); });
    check("sigmoid", {detail::rand_tensor({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::sigmoid(in[0])); });
    check("tanh", {detail::rand_tensor({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::tanh_op(in[0])); });
    check("softplus", {detail::rand_tensor({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::softplus(in[0])); });
    check("logit_clamped", {detail::rand_tensor({4, 4}, rng, 0.1, 0.9)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::logit_clamped(in[0], 1e-6));
          });
    check("matmul", {detail::rand_tensor({3, 4}, rng), detail::rand_tensor({4, 5}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::matmul(in[0], in[1])); });
    check("transpose2d", {detail::rand_tensor({3, 5}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::transpose2d(in[0])); });
    check("reshape", {detail::rand_tensor({3, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::reshape(in[0], {2, 6})); });
    check("concat_axis0", {detail::rand_tensor({2, 3}, rng), detail::rand_tensor({4, 3}, rng)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::concat_axis0<double>({in[0], in[1]}));
          });
    check("slice_axis0", {detail::rand_tensor({6, 3}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::slice_axis0(in[0], 1, 4)); });
    check("concat_cols", {detail::rand_tensor({3, 2}, rng), detail::rand_tensor({3, 4}, rng)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::concat_cols<double>({in[0], in[1]}));
          });
    check("slice_cols", {detail::rand_tensor({3, 6}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::slice_cols(in[0], 2, 5)); });
    check("sum_all", {detail::rand_tensor({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return o::sum_all(in[0]); });
    check("mean_all", {detail::rand_tensor({4, 4}, rng)},
          [&](const std::vector<Td>& in) { return o::mean_all(in[0]); });
    check("softmax_rows", {detail::rand_tensor({4, 6}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::softmax_rows(in[0])); });
    check("softmax_axis0", {detail::rand_tensor({4, 6}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::softmax(in[0], 0)); });
    check("cumsum_exclusive_rows", {detail::rand_tensor({3, 5}, rng)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::cumsum_exclusive_rows(in[0]));
          });
    check("conv2d",
          {detail::rand_tensor({2, 6, 7}, rng), detail::rand_tensor({3, 2, 3, 3}, rng),
           detail::rand_tensor({3}, rng)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::conv2d(in[0], in[1], in[2], 2, 1));
          });
    check("conv1d",
          {detail::rand_tensor({2, 12}, rng), detail::rand_tensor({4, 2, 5}, rng),
           detail::rand_tensor({4}, rng)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::conv1d(in[0], in[1], in[2], 2, 2));
          });
    check("upsample2x_nearest", {detail::rand_tensor({2, 3, 4}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::upsample2x_nearest(in[0])); });
    check("avgpool2x2", {detail::rand_tensor({2, 4, 6}, rng)},
          [&](const std::vector<Td>& in) { return weighted_sum(o::avgpool2x2(in[0])); });
    {
        // coordinates strictly inside the plane and away from texel centers,
        // where the bilinear kernel is smooth
        Td plane = detail::rand_tensor({3, 5, 6}, rng);
        std::vector<double> cv;
        for (int i = 0; i < 7; ++i) {
            cv.push_back(rng.uniform(0.2, 4.6));
            cv.push_back(rng.uniform(0.2, 3.6));
        }
        for (auto& c : cv) {
            const double frac = c - std::floor(c);
            if (frac < 0.05) c += 0.1;
            if (frac > 0.95) c -= 0.1;
        }
        Td coords = Td::from_data({7, 2}, std::move(cv));
        check("grid_sample_bilinear", {plane, coords}, [&](const std::vector<Td>& in) {
            return weighted_sum(o::grid_sample_bilinear(in[0], in[1]));
        });
    }
    // composite: softmax over projected features, the attention core
    check("softmax_matmul",
          {detail::rand_tensor({3, 4}, rng), detail::rand_tensor({4, 5}, rng)},
          [&](const std::vector<Td>& in) {
              return weighted_sum(o::softmax_rows(o::matmul(in[0], in[1])));
          });
    return reports;
}

} // namespace gradcheck
} // namespace s3d
