#pragma once

#include <cmath>
#include <vector>

#include "s3d/tensor.hpp"

namespace s3d {

// Evaluation helpers: PSNR against [0,1] images (capped at 99 dB for exact
// matches), Pearson correlation, and mouth-region intensity readout.

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double cap = 99.0) {
    check_shape(a.dims() == b.dims(), "psnr: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    double mse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        mse += d * d;
    }
    mse /= double(a.size());
    if (mse <= 0) return cap;
    return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    check_contract(x.size() == y.size() && x.size() >= 2, "pearson needs matched series");
    const double n = double(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    if (vx <= 1e-12 || vy <= 1e-12) return 0.0;
    return cov / std::sqrt(vx * vy);
}

// mean intensity (channel mean) inside a pixel box of a [3,H,W] image
template <typename T>
double region_intensity(const Tensor<T>& img, const std::array<float, 4>& box) {
    check_shape(img.rank() == 3 && img.extent(0) == 3, "region_intensity expects [3,H,W]");
    const std::size_t H = img.extent(1), W = img.extent(2);
    const std::size_t x0 = std::min<std::size_t>(W - 1, std::size_t(std::max(0.f, box[0])));
    const std::size_t y0 = std::min<std::size_t>(H - 1, std::size_t(std::max(0.f, box[1])));
    const std::size_t x1 = std::min<std::size_t>(W, std::size_t(std::max(box[2], box[0] + 1)));
    const std::size_t y1 = std::min<std::size_t>(H, std::size_t(std::max(box[3], box[1] + 1)));
    double acc = 0;
    std::size_t count = 0;
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) acc += img[(std::size_t(c) * H + y) * W + x];
            ++count;
        }
    check_contract(count > 0, "region_intensity: empty box");
    return acc / double(count * 3);
}

// moving-average smoothing for loss-trend checks
inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
    std::vector<double> out;
    if (v.size() < window || window == 0) return out;
    double acc = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= window) acc -= v[i - window];
        if (i + 1 >= window) out.push_back(acc / double(window));
    }
    return out;
}

} // namespace s3d
