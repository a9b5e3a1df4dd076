#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (triple loops, direct formulas) so they cannot share a
// bug with the library path they check.

#include <cmath>
#include <vector>

#include "s3d/tensor.hpp"

namespace oracle {

// c[m,n] = a[m,k] b[k,n], naive triple loop
inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

// sliding-window convolution, [C,H,W] x [O,C,kh,kw]
inline std::vector<double> sliding_conv2d(const std::vector<double>& in,
                                          const std::vector<double>& kn, std::size_t C,
                                          std::size_t H, std::size_t W, std::size_t O,
                                          std::size_t kh, std::size_t kw, std::size_t stride,
                                          std::size_t pad) {
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(O * Ho * Wo, 0.0);
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t x = 0; x < Wo; ++x) {
                double acc = 0.0;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long iy = long(y * stride + ky) - long(pad);
                            const long ix = long(x * stride + kx) - long(pad);
                            if (iy < 0 || iy >= long(H) || ix < 0 || ix >= long(W)) continue;
                            acc += in[(c * H + iy) * W + ix] * kn[((o * C + c) * kh + ky) * kw + kx];
                        }
                out[(o * Ho + y) * Wo + x] = acc;
            }
    return out;
}

// 4x4 homogeneous matrix application
inline std::array<double, 3> homogeneous_apply(const std::array<double, 9>& R,
                                               const std::array<double, 3>& T,
                                               const std::array<double, 3>& x) {
    double m[16] = {R[0], R[1], R[2], T[0], R[3], R[4], R[5], T[1],
                    R[6], R[7], R[8], T[2], 0,    0,    0,    1};
    double in[4] = {x[0], x[1], x[2], 1.0};
    double out[4] = {0, 0, 0, 0};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) out[i] += m[i * 4 + j] * in[j];
    return {out[0] / out[3], out[1] / out[3], out[2] / out[3]};
}

// per-row attention reference: softmax(q k^T / sqrt(d)) v
inline std::vector<double> naive_attention(const std::vector<double>& q,
                                           const std::vector<double>& k,
                                           const std::vector<double>& v, std::size_t nq,
                                           std::size_t nk, std::size_t d, std::size_t dv) {
    std::vector<double> out(nq * dv, 0.0);
    for (std::size_t i = 0; i < nq; ++i) {
        std::vector<double> logits(nk, 0.0);
        for (std::size_t j = 0; j < nk; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < d; ++p) s += q[i * d + p] * k[j * d + p];
            logits[j] = s / std::sqrt(double(d));
        }
        double m = logits[0];
        for (double l : logits) m = std::max(m, l);
        double z = 0.0;
        for (double& l : logits) {
            l = std::exp(l - m);
            z += l;
        }
        for (std::size_t j = 0; j < nk; ++j)
            for (std::size_t p = 0; p < dv; ++p) out[i * dv + p] += (logits[j] / z) * v[j * dv + p];
    }
    return out;
}

// Closed-form volume-rendering integral for a piecewise-constant field:
// C = sum_i c_i * [T(a_i) - T(b_i)] with T(t) = exp(-int_0^t sigma),
// over constancy intervals [a_i, b_i).
struct ConstSegment {
    double t0, t1, sigma;
    std::array<double, 3> color;
};
inline std::array<double, 3> transmittance_integral(const std::vector<ConstSegment>& segs) {
    std::array<double, 3> c = {0, 0, 0};
    double optical_depth = 0.0;
    for (const auto& s : segs) {
        const double T0 = std::exp(-optical_depth);
        optical_depth += s.sigma * (s.t1 - s.t0);
        const double T1 = std::exp(-optical_depth);
        for (int i = 0; i < 3; ++i) c[i] += s.color[i] * (T0 - T1);
    }
    return c;
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / double(a.size());
}

} // namespace oracle
