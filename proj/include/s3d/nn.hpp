#pragma once

#include "s3d/ops.hpp"
#include "s3d/tensor.hpp"

namespace s3d {
namespace nn {

// Thin parameter-owning layers. Construction registers named tensors in the
// caller's ParamStore; forward passes are free-function compositions of ops.

template <typename T>
struct Linear {
    Tensor<T> w; // [in,out]
    Tensor<T> b; // [out], undefined when bias-free

    static Linear create(ParamStore<T>& ps, const std::string& prefix, std::size_t in,
                         std::size_t out, Rng& rng, bool bias = true) {
        Linear l;
        l.w = ps.create_uniform(prefix + "/w", {in, out}, in, rng);
        if (bias) l.b = ps.create(prefix + "/b", {out}, T(0));
        return l;
    }

    static Linear create_zero(ParamStore<T>& ps, const std::string& prefix, std::size_t in,
                              std::size_t out, bool bias = true) {
        Linear l;
        l.w = ps.create(prefix + "/w", {in, out}, T(0));
        if (bias) l.b = ps.create(prefix + "/b", {out}, T(0));
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto y = ops::matmul(x, w);
        return b.defined() ? ops::add_rowvec(y, b) : y;
    }
};

template <typename T>
struct Conv2d {
    Tensor<T> w; // [O,C,kh,kw]
    Tensor<T> b; // [O]
    std::size_t stride = 1, pad = 0;

    static Conv2d create(ParamStore<T>& ps, const std::string& prefix, std::size_t in,
                         std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                         Rng& rng) {
        Conv2d c;
        c.w = ps.create_uniform(prefix + "/w", {out, in, k, k}, in * k * k, rng);
        c.b = ps.create(prefix + "/b", {out}, T(0));
        c.stride = stride;
        c.pad = pad;
        return c;
    }

    static Conv2d create_zero(ParamStore<T>& ps, const std::string& prefix, std::size_t in,
                              std::size_t out, std::size_t k, std::size_t stride,
                              std::size_t pad) {
        Conv2d c;
        c.w = ps.create(prefix + "/w", {out, in, k, k}, T(0));
        c.b = ps.create(prefix + "/b", {out}, T(0));
        c.stride = stride;
        c.pad = pad;
        return c;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ops::conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct Conv1d {
    Tensor<T> w; // [O,C,k]
    Tensor<T> b;
    std::size_t stride = 1, pad = 0;

    static Conv1d create(ParamStore<T>& ps, const std::string& prefix, std::size_t in,
                         std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                         Rng& rng) {
        Conv1d c;
        c.w = ps.create_uniform(prefix + "/w", {out, in, k}, in * k, rng);
        c.b = ps.create(prefix + "/b", {out}, T(0));
        c.stride = stride;
        c.pad = pad;
        return c;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return ops::conv1d(x, w, b, stride, pad); }
};

} // namespace nn
} // namespace s3d
