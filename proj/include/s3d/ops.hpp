#pragma once

#include <cmath>
#include <cstring>

#include "s3d/tensor.hpp"

namespace s3d {
namespace ops {

// Differentiable operation set. Broadcasting is deliberately restricted: the
// *_rowvec ops broadcast a vector over the leading axis of a matrix and
// nothing else, so every gradient rule stays auditable.

namespace detail {

template <typename T>
Tensor<T> make_node(Dims dims, std::vector<T> value, std::vector<Tensor<T>> parents,
                    std::function<void(TensorNode<T>&)> bp) {
    auto out = Tensor<T>::from_data(std::move(dims), std::move(value));
    bool wire = grad_mode_flag();
    if (wire) {
        bool any = false;
        for (const auto& p : parents)
            if (p.requires_grad()) any = true;
        wire = any;
    }
    if (wire) {
        out.raw()->requires_grad = true;
        for (const auto& p : parents) out.raw()->parents.push_back(p.node());
        out.raw()->backprop = std::move(bp);
    }
    return out;
}

template <typename T>
inline void accum(TensorNode<T>* n, std::size_t i, T v) {
    n->ensure_grad();
    n->grad[i] += v;
}

// parent gradient buffer, allocated on first touch
template <typename T>
inline T* gbuf(TensorNode<T>* n) {
    n->ensure_grad();
    return n->grad.data();
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.dims() == b.dims(),
                "add: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    return detail::make_node<T>(a.dims(), std::move(v), {a, b}, [](TensorNode<T>& n) {
        T* ga = detail::gbuf(n.parents[0].get());
        T* gb = detail::gbuf(n.parents[1].get());
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] += n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.dims() == b.dims(),
                "sub: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    return detail::make_node<T>(a.dims(), std::move(v), {a, b}, [](TensorNode<T>& n) {
        T* ga = detail::gbuf(n.parents[0].get());
        T* gb = detail::gbuf(n.parents[1].get());
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i];
            gb[i] -= n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.dims() == b.dims(),
                "mul: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
    return detail::make_node<T>(a.dims(), std::move(v), {a, b}, [](TensorNode<T>& n) {
        auto* pa = n.parents[0].get();
        auto* pb = n.parents[1].get();
        T* ga = detail::gbuf(pa);
        T* gb = detail::gbuf(pb);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            ga[i] += n.grad[i] * pb->value[i];
            gb[i] += n.grad[i] * pa->value[i];
        }
    });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.dims() == b.dims(),
                "div: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] / b[i];
    return detail::make_node<T>(a.dims(), std::move(v), {a, b}, [](TensorNode<T>& n) {
        auto* pa = n.parents[0].get();
        auto* pb = n.parents[1].get();
        T* ga = detail::gbuf(pa);
        T* gb = detail::gbuf(pb);
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            T inv = T(1) / pb->value[i];
            ga[i] += n.grad[i] * inv;
            gb[i] -= n.grad[i] * pa->value[i] * inv * inv;
        }
    });
}

// ---------------------------------------------------------------------------
// scalar and row-vector broadcasts

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + c;
    return detail::make_node<T>(a.dims(), std::move(v), {a}, [](TensorNode<T>& n) {
        T* ga = detail::gbuf(n.parents[0].get());
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * c;
    return detail::make_node<T>(a.dims(), std::move(v), {a}, [c](TensorNode<T>& n) {
        T* ga = detail::gbuf(n.parents[0].get());
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * c;
    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return mul_scalar(a, T(-1));
}

// [N,D] + [D] broadcast over the leading axis
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
    check_shape(a.rank() == 2 && v.rank() == 1 && a.extent(1) == v.extent(0),
                "add_rowvec: " + dims_str(a.dims()) + " vs " + dims_str(v.dims()));
    const std::size_t n = a.extent(0), d = a.extent(1);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a[i * d + j] + v[j];
    return detail::make_node<T>(a.dims(), std::move(out), {a, v}, [n, d](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        T* gv = detail::gbuf(nd.parents[1].get());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                ga[i * d + j] += nd.grad[i * d + j];
                gv[j] += nd.grad[i * d + j];
            }
    });
}

template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
    check_shape(a.rank() == 2 && v.rank() == 1 && a.extent(1) == v.extent(0),
                "mul_rowvec: " + dims_str(a.dims()) + " vs " + dims_str(v.dims()));
    const std::size_t n = a.extent(0), d = a.extent(1);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a[i * d + j] * v[j];
    return detail::make_node<T>(a.dims(), std::move(out), {a, v}, [n, d](TensorNode<T>& nd) {
        auto* pa = nd.parents[0].get();
        auto* pv = nd.parents[1].get();
        T* ga = detail::gbuf(pa);
        T* gv = detail::gbuf(pv);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                ga[i * d + j] += nd.grad[i * d + j] * pv->value[j];
                gv[j] += nd.grad[i * d + j] * pa->value[i * d + j];
            }
    });
}

// [D] -> [N,D]
template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& v, std::size_t n) {
    check_shape(v.rank() == 1, "broadcast_rows expects a vector, got " + dims_str(v.dims()));
    const std::size_t d = v.extent(0);
    std::vector<T> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[j];
    return detail::make_node<T>({n, d}, std::move(out), {v}, [n, d](TensorNode<T>& nd) {
        T* gv = detail::gbuf(nd.parents[0].get());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gv[j] += nd.grad[i * d + j];
    });
}

// ---------------------------------------------------------------------------
// elementwise unary

namespace detail {
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df_from_xy) {
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a[i]);
    return make_node<T>(a.dims(), std::move(v), {a}, [df_from_xy](TensorNode<T>& n) {
        auto* pa = n.parents[0].get();
        T* ga = gbuf(pa);
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            ga[i] += n.grad[i] * df_from_xy(pa->value[i], n.value[i]);
    });
}
} // namespace detail

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return std::sqrt(x); },
        [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> recip(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return T(1) / x; }, [](T, T y) { return -y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2)) {
    return detail::unary(
        a, [slope](T x) { return x > T(0) ? x : slope * x; },
        [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary(
        a,
        [](T x) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    return detail::unary(
        a,
        [](T x) {
            // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
            T m = x > T(0) ? x : T(0);
            return m + std::log1p(std::exp(-std::abs(x)));
        },
        [](T x, T) {
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            T e = std::exp(x);
            return e / (T(1) + e);
        });
}

// log(x'/(1-x')) with x' = clamp(x, eps, 1-eps); inverse of sigmoid away from
// the clamp region, zero gradient inside it.
template <typename T>
Tensor<T> logit_clamped(const Tensor<T>& a, T eps) {
    return detail::unary(
        a,
        [eps](T x) {
            T c = std::min(std::max(x, eps), T(1) - eps);
            return std::log(c / (T(1) - c));
        },
        [eps](T x, T) {
            if (x <= eps || x >= T(1) - eps) return T(0);
            return T(1) / (x * (T(1) - x));
        });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    return Tensor<T>::from_data(a.dims(), a.data());
}

// ---------------------------------------------------------------------------
// matmul and friends

namespace detail {
// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}
// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}
// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}
} // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.rank() == 2 && b.rank() == 2 && a.extent(1) == b.extent(0),
                "matmul: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<T> v(m * n, T(0));
    detail::gemm_nn(a.data().data(), b.data().data(), v.data(), m, k, n);
    return detail::make_node<T>({m, n}, std::move(v), {a, b}, [m, k, n](TensorNode<T>& nd) {
        auto* pa = nd.parents[0].get();
        auto* pb = nd.parents[1].get();
        // dA = G * B^T ; dB = A^T * G
        detail::gemm_nt(nd.grad.data(), pb->value.data(), detail::gbuf(pa), m, n, k);
        detail::gemm_tn(pa->value.data(), nd.grad.data(), detail::gbuf(pb), m, k, n);
    });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    check_shape(a.rank() == 2, "transpose2d expects rank 2, got " + dims_str(a.dims()));
    const std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<T> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a[i * n + j];
    return detail::make_node<T>({n, m}, std::move(v), {a}, [m, n](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += nd.grad[j * m + i];
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Dims dims) {
    check_shape(numel(dims) == a.size(),
                "reshape: " + dims_str(a.dims()) + " -> " + dims_str(dims));
    return detail::make_node<T>(std::move(dims), a.data(), {a}, [](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t i = 0; i < nd.grad.size(); ++i) ga[i] += nd.grad[i];
    });
}

// ---------------------------------------------------------------------------
// concat / slice

template <typename T>
Tensor<T> concat_axis0(const std::vector<Tensor<T>>& parts) {
    check_contract(!parts.empty(), "concat_axis0 with no inputs");
    Dims d0 = parts[0].dims();
    std::size_t total = 0;
    for (const auto& p : parts) {
        check_shape(p.rank() == d0.size(), "concat_axis0: rank mismatch");
        for (std::size_t i = 1; i < d0.size(); ++i)
            check_shape(p.extent(i) == d0[i], "concat_axis0: trailing dims differ");
        total += p.extent(0);
    }
    Dims od = d0;
    od[0] = total;
    std::vector<T> v;
    v.reserve(numel(od));
    for (const auto& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.size());
    return detail::make_node<T>(std::move(od), std::move(v), parts, [sizes](TensorNode<T>& nd) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
            T* g = detail::gbuf(nd.parents[pi].get());
            for (std::size_t i = 0; i < sizes[pi]; ++i) g[i] += nd.grad[off + i];
            off += sizes[pi];
        }
    });
}

template <typename T>
Tensor<T> slice_axis0(const Tensor<T>& a, std::size_t from, std::size_t to) {
    check_shape(a.rank() >= 1 && from < to && to <= a.extent(0),
                "slice_axis0 [" + std::to_string(from) + "," + std::to_string(to) + ") on " +
                    dims_str(a.dims()));
    Dims od = a.dims();
    od[0] = to - from;
    std::size_t inner = a.size() / a.extent(0);
    std::vector<T> v(a.data().begin() + from * inner, a.data().begin() + to * inner);
    return detail::make_node<T>(std::move(od), std::move(v), {a},
                                [from, inner](TensorNode<T>& nd) {
                                    T* ga = detail::gbuf(nd.parents[0].get());
                                    for (std::size_t i = 0; i < nd.grad.size(); ++i)
                                        ga[from * inner + i] += nd.grad[i];
                                });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    check_contract(!parts.empty(), "concat_cols with no inputs");
    const std::size_t n = parts[0].extent(0);
    std::size_t dtot = 0;
    for (const auto& p : parts) {
        check_shape(p.rank() == 2 && p.extent(0) == n, "concat_cols: row count mismatch");
        dtot += p.extent(1);
    }
    std::vector<T> v(n * dtot);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t d = p.extent(1);
        for (std::size_t i = 0; i < n; ++i)
            std::memcpy(v.data() + i * dtot + off, p.data().data() + i * d, d * sizeof(T));
        off += d;
    }
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(p.extent(1));
    return detail::make_node<T>({n, dtot}, std::move(v), parts,
                                [n, dtot, widths](TensorNode<T>& nd) {
                                    std::size_t off2 = 0;
                                    for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
                                        T* g = detail::gbuf(nd.parents[pi].get());
                                        const std::size_t d = widths[pi];
                                        for (std::size_t i = 0; i < n; ++i)
                                            for (std::size_t j = 0; j < d; ++j)
                                                g[i * d + j] += nd.grad[i * dtot + off2 + j];
                                        off2 += d;
                                    }
                                });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t from, std::size_t to) {
    check_shape(a.rank() == 2 && from < to && to <= a.extent(1),
                "slice_cols [" + std::to_string(from) + "," + std::to_string(to) + ") on " +
                    dims_str(a.dims()));
    const std::size_t n = a.extent(0), d = a.extent(1), w = to - from;
    std::vector<T> v(n * w);
    for (std::size_t i = 0; i < n; ++i)
        std::memcpy(v.data() + i * w, a.data().data() + i * d + from, w * sizeof(T));
    return detail::make_node<T>({n, w}, std::move(v), {a}, [n, d, w, from](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * d + from + j] += nd.grad[i * w + j];
    });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return detail::make_node<T>({1}, {s}, {a}, [](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        const T g = nd.grad[0];
        for (std::size_t i = 0; i < nd.parents[0]->value.size(); ++i) ga[i] += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.size()));
}

// ---------------------------------------------------------------------------
// softmax over the last axis of a 2-D tensor, max-subtracted for stability

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    check_shape(a.rank() == 2, "softmax_rows expects rank 2, got " + dims_str(a.dims()));
    const std::size_t n = a.extent(0), d = a.extent(1);
    std::vector<T> v(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = a.data().data() + i * d;
        T m = row[0];
        for (std::size_t j = 1; j < d; ++j) m = std::max(m, row[j]);
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            v[i * d + j] = std::exp(row[j] - m);
            s += v[i * d + j];
        }
        const T inv = T(1) / s;
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] *= inv;
    }
    return detail::make_node<T>(a.dims(), std::move(v), {a}, [n, d](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t i = 0; i < n; ++i) {
            const T* y = nd.value.data() + i * d;
            const T* g = nd.grad.data() + i * d;
            T dot = T(0);
            for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
            for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += y[j] * (g[j] - dot);
        }
    });
}

// softmax along a chosen axis of a 2-D tensor
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
    check_shape(a.rank() == 2 && axis < 2, "softmax: axis " + std::to_string(axis) +
                                               " on " + dims_str(a.dims()));
    if (axis == 1) return softmax_rows(a);
    return transpose2d(softmax_rows(transpose2d(a)));
}

// ---------------------------------------------------------------------------
// exclusive prefix sum along the last axis of [N,S] (per-ray accumulation)

template <typename T>
Tensor<T> cumsum_exclusive_rows(const Tensor<T>& a) {
    check_shape(a.rank() == 2, "cumsum_exclusive_rows expects rank 2");
    const std::size_t n = a.extent(0), s = a.extent(1);
    std::vector<T> v(n * s);
    for (std::size_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (std::size_t j = 0; j < s; ++j) {
            v[i * s + j] = acc;
            acc += a[i * s + j];
        }
    }
    return detail::make_node<T>(a.dims(), std::move(v), {a}, [n, s](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t i = 0; i < n; ++i) {
            // d out[j'] / d in[j] = 1 for j < j'  =>  grad_in[j] = sum_{j'>j} g[j']
            T acc = T(0);
            for (std::size_t j = s; j-- > 0;) {
                ga[i * s + j] += acc;
                acc += nd.grad[i * s + j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// convolutions

namespace detail {
// gather [Ho*Wo, C*kh*kw] patch matrix (zero padding)
template <typename T>
void im2col(const T* in, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo,
            T* cols) {
    const std::size_t K = C * kh * kw;
    for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
            T* row = cols + (y * Wo + x) * K;
            std::size_t k = 0;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(y * stride + ky) - std::ptrdiff_t(pad);
                    if (iy < 0 || iy >= std::ptrdiff_t(H)) {
                        for (std::size_t kx = 0; kx < kw; ++kx) row[k++] = T(0);
                        continue;
                    }
                    const T* src = in + (c * H + iy) * W;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = std::ptrdiff_t(x * stride + kx) - std::ptrdiff_t(pad);
                        row[k++] = (ix < 0 || ix >= std::ptrdiff_t(W)) ? T(0) : src[ix];
                    }
                }
        }
}

// scatter-add the patch-matrix gradient back onto the input
template <typename T>
void col2im_add(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t Ho,
                std::size_t Wo, T* gin) {
    const std::size_t K = C * kh * kw;
    for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
            const T* row = cols + (y * Wo + x) * K;
            std::size_t k = 0;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = std::ptrdiff_t(y * stride + ky) - std::ptrdiff_t(pad);
                    if (iy < 0 || iy >= std::ptrdiff_t(H)) {
                        k += kw;
                        continue;
                    }
                    T* dst = gin + (c * H + iy) * W;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::ptrdiff_t ix = std::ptrdiff_t(x * stride + kx) - std::ptrdiff_t(pad);
                        if (ix >= 0 && ix < std::ptrdiff_t(W)) dst[ix] += row[k];
                        ++k;
                    }
                }
        }
}
} // namespace detail

// input [C,H,W], kernel [O,C,kh,kw], optional bias [O]; zero padding.
// Forward and both weight/input gradients run as patch-matrix products.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
    check_shape(input.rank() == 3, "conv2d input must be [C,H,W], got " + dims_str(input.dims()));
    check_shape(kernel.rank() == 4, "conv2d kernel must be [O,C,kh,kw], got " + dims_str(kernel.dims()));
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    const std::size_t O = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
    check_shape(kernel.extent(1) == C, "conv2d channel mismatch: input " + dims_str(input.dims()) +
                                           " kernel " + dims_str(kernel.dims()));
    check_shape(kh <= H + 2 * pad && kw <= W + 2 * pad,
                "conv2d kernel larger than padded input: kernel " + dims_str(kernel.dims()) +
                    " input " + dims_str(input.dims()));
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
    check_shape(Ho >= 1 && Wo >= 1, "conv2d non-positive output extent");
    const bool has_bias = bias.defined();
    if (has_bias)
        check_shape(bias.rank() == 1 && bias.extent(0) == O,
                    "conv2d bias must be [O], got " + dims_str(bias.dims()));

    const std::size_t K = C * kh * kw, HW = Ho * Wo;
    std::vector<T> cols(HW * K);
    detail::im2col(input.data().data(), C, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
    // out[p, o] = cols[p, :] . kernel[o, :]
    std::vector<T> out_pm(HW * O, T(0));
    detail::gemm_nt(cols.data(), kernel.data().data(), out_pm.data(), HW, K, O);
    std::vector<T> v(O * HW);
    for (std::size_t p = 0; p < HW; ++p)
        for (std::size_t o = 0; o < O; ++o)
            v[o * HW + p] = out_pm[p * O + o] + (has_bias ? bias[o] : T(0));

    std::vector<Tensor<T>> parents = {input, kernel};
    if (has_bias) parents.push_back(bias);
    return detail::make_node<T>(
        {O, Ho, Wo}, std::move(v), parents,
        [C, H, W, O, kh, kw, Ho, Wo, K, HW, stride, pad, has_bias](TensorNode<T>& nd) {
            auto* pin = nd.parents[0].get();
            auto* pkn = nd.parents[1].get();
            T* gin = detail::gbuf(pin);
            T* gkn = detail::gbuf(pkn);
            // grad as patch matrix g_pm[p, o]
            std::vector<T> g_pm(HW * O);
            for (std::size_t o = 0; o < O; ++o)
                for (std::size_t p = 0; p < HW; ++p) g_pm[p * O + o] = nd.grad[o * HW + p];
            if (has_bias) {
                T* gb = detail::gbuf(nd.parents[2].get());
                for (std::size_t o = 0; o < O; ++o)
                    for (std::size_t p = 0; p < HW; ++p) gb[o] += nd.grad[o * HW + p];
            }
            std::vector<T> cols(HW * K);
            detail::im2col(pin->value.data(), C, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());
            // dK[o, :] += sum_p g_pm[p, o] * cols[p, :]
            detail::gemm_tn(g_pm.data(), cols.data(), gkn, HW, O, K);
            // dcols[p, :] = sum_o g_pm[p, o] * kernel[o, :]
            std::vector<T> dcols(HW * K, T(0));
            detail::gemm_nn(g_pm.data(), pkn->value.data(), dcols.data(), HW, O, K);
            detail::col2im_add(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo, gin);
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad) {
    return conv2d(input, kernel, Tensor<T>(), stride, pad);
}

// input [C,L], kernel [O,C,k] -> [O,L']
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
    check_shape(input.rank() == 2, "conv1d input must be [C,L], got " + dims_str(input.dims()));
    check_shape(kernel.rank() == 3, "conv1d kernel must be [O,C,k], got " + dims_str(kernel.dims()));
    Tensor<T> in3 = reshape(input, {input.extent(0), std::size_t(1), input.extent(1)});
    Tensor<T> k4 = reshape(kernel,
                           {kernel.extent(0), kernel.extent(1), std::size_t(1), kernel.extent(2)});
    // pad applies along L only; height is 1 with kernel height 1, so a zero
    // height-pad is implied by construction
    const std::size_t C = input.extent(0), L = input.extent(1);
    const std::size_t O = kernel.extent(0), k = kernel.extent(2);
    check_shape(k <= L + 2 * pad, "conv1d kernel longer than padded input");
    std::vector<T> v;
    // reuse conv2d on the [C,1,L] view with asymmetric pad emulated by manual widening
    if (pad == 0) {
        Tensor<T> out = conv2d(in3, k4, bias, stride, 0);
        return reshape(out, {out.extent(0), out.extent(2)});
    }
    // widen L with zeros, then stride without further padding
    std::vector<T> wide(C * (L + 2 * pad), T(0));
    for (std::size_t c = 0; c < C; ++c)
        std::memcpy(wide.data() + c * (L + 2 * pad) + pad, input.data().data() + c * L,
                    L * sizeof(T));
    Tensor<T> widened = detail::make_node<T>({C, L + 2 * pad}, std::move(wide), {input},
                                             [C, L, pad](TensorNode<T>& nd) {
                                                 T* g = detail::gbuf(nd.parents[0].get());
                                                 for (std::size_t c = 0; c < C; ++c)
                                                     for (std::size_t i = 0; i < L; ++i)
                                                         g[c * L + i] +=
                                                             nd.grad[c * (L + 2 * pad) + pad + i];
                                             });
    Tensor<T> w3 = reshape(widened, {C, std::size_t(1), L + 2 * pad});
    Tensor<T> out = conv2d(w3, k4, bias, stride, 0);
    return reshape(out, {out.extent(0), out.extent(2)});
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad) {
    return conv1d(input, kernel, Tensor<T>(), stride, pad);
}

// ---------------------------------------------------------------------------
// spatial resampling

template <typename T>
Tensor<T> upsample2x_nearest(const Tensor<T>& a) {
    check_shape(a.rank() == 3, "upsample2x_nearest expects [C,H,W]");
    const std::size_t C = a.extent(0), H = a.extent(1), W = a.extent(2);
    std::vector<T> v(C * 4 * H * W);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < 2 * H; ++y)
            for (std::size_t x = 0; x < 2 * W; ++x)
                v[(c * 2 * H + y) * 2 * W + x] = a[(c * H + y / 2) * W + x / 2];
    return detail::make_node<T>({C, 2 * H, 2 * W}, std::move(v), {a}, [C, H, W](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t x = 0; x < 2 * W; ++x)
                    ga[(c * H + y / 2) * W + x / 2] += nd.grad[(c * 2 * H + y) * 2 * W + x];
    });
}

template <typename T>
Tensor<T> avgpool2x2(const Tensor<T>& a) {
    check_shape(a.rank() == 3 && a.extent(1) % 2 == 0 && a.extent(2) % 2 == 0,
                "avgpool2x2 expects [C,2h,2w], got " + dims_str(a.dims()));
    const std::size_t C = a.extent(0), H = a.extent(1) / 2, W = a.extent(2) / 2;
    std::vector<T> v(C * H * W);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * x;
                v[(c * H + y) * W + x] =
                    (a[base] + a[base + 1] + a[base + 2 * W] + a[base + 2 * W + 1]) * T(0.25);
            }
    return detail::make_node<T>({C, H, W}, std::move(v), {a}, [C, H, W](TensorNode<T>& nd) {
        T* ga = detail::gbuf(nd.parents[0].get());
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    const T g = nd.grad[(c * H + y) * W + x] * T(0.25);
                    const std::size_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * x;
                    ga[base] += g;
                    ga[base + 1] += g;
                    ga[base + 2 * W] += g;
                    ga[base + 2 * W + 1] += g;
                }
    });
}

// ---------------------------------------------------------------------------
// bilinear plane sampling
//
// plane [C,H,W], coords [N,2] in pixel units (x along W, y along H).
// Out-of-range coordinates are clamped to the border, which also zeroes the
// coordinate gradient there. Differentiable w.r.t. plane and coords.

template <typename T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& plane, const Tensor<T>& coords) {
    check_shape(plane.rank() == 3, "grid_sample: plane must be [C,H,W], got " + dims_str(plane.dims()));
    check_shape(coords.rank() == 2 && coords.extent(1) == 2,
                "grid_sample: coords must be [N,2], got " + dims_str(coords.dims()));
    const std::size_t C = plane.extent(0), H = plane.extent(1), W = plane.extent(2);
    const std::size_t N = coords.extent(0);
    std::vector<T> v(N * C);
    const T* pd = plane.data().data();
    const T* cd = coords.data().data();

    auto cell = [W, H](T cx, T cy, std::size_t& x0, std::size_t& y0, T& fx, T& fy) {
        cx = std::min(std::max(cx, T(0)), static_cast<T>(W - 1));
        cy = std::min(std::max(cy, T(0)), static_cast<T>(H - 1));
        T fx0 = std::floor(cx), fy0 = std::floor(cy);
        if (fx0 > static_cast<T>(W - 2)) fx0 = static_cast<T>(W >= 2 ? W - 2 : 0);
        if (fy0 > static_cast<T>(H - 2)) fy0 = static_cast<T>(H >= 2 ? H - 2 : 0);
        x0 = static_cast<std::size_t>(fx0);
        y0 = static_cast<std::size_t>(fy0);
        fx = W >= 2 ? cx - fx0 : T(0);
        fy = H >= 2 ? cy - fy0 : T(0);
    };

    for (std::size_t i = 0; i < N; ++i) {
        std::size_t x0, y0;
        T fx, fy;
        cell(cd[i * 2 + 0], cd[i * 2 + 1], x0, y0, fx, fy);
        const std::size_t x1 = W >= 2 ? x0 + 1 : x0, y1 = H >= 2 ? y0 + 1 : y0;
        const T w00 = (T(1) - fx) * (T(1) - fy), w10 = fx * (T(1) - fy);
        const T w01 = (T(1) - fx) * fy, w11 = fx * fy;
        for (std::size_t c = 0; c < C; ++c) {
            const T* pl = pd + c * H * W;
            v[i * C + c] = w00 * pl[y0 * W + x0] + w10 * pl[y0 * W + x1] +
                           w01 * pl[y1 * W + x0] + w11 * pl[y1 * W + x1];
        }
    }
    return detail::make_node<T>(
        {N, C}, std::move(v), {plane, coords}, [C, H, W, N, cell](TensorNode<T>& nd) {
            auto* pp = nd.parents[0].get();
            auto* pc = nd.parents[1].get();
            T* gp = detail::gbuf(pp);
            T* gc = detail::gbuf(pc);
            const T* pd = pp->value.data();
            const T* cd = pc->value.data();
            for (std::size_t i = 0; i < N; ++i) {
                const T rawx = cd[i * 2 + 0], rawy = cd[i * 2 + 1];
                std::size_t x0, y0;
                T fx, fy;
                cell(rawx, rawy, x0, y0, fx, fy);
                const std::size_t x1 = W >= 2 ? x0 + 1 : x0, y1 = H >= 2 ? y0 + 1 : y0;
                const T w00 = (T(1) - fx) * (T(1) - fy), w10 = fx * (T(1) - fy);
                const T w01 = (T(1) - fx) * fy, w11 = fx * fy;
                const bool in_x = rawx > T(0) && rawx < static_cast<T>(W - 1);
                const bool in_y = rawy > T(0) && rawy < static_cast<T>(H - 1);
                T dx = T(0), dy = T(0);
                for (std::size_t c = 0; c < C; ++c) {
                    const T g = nd.grad[i * C + c];
                    T* gpl = gp + c * H * W;
                    gpl[y0 * W + x0] += g * w00;
                    gpl[y0 * W + x1] += g * w10;
                    gpl[y1 * W + x0] += g * w01;
                    gpl[y1 * W + x1] += g * w11;
                    const T* pl = pd + c * H * W;
                    const T v00 = pl[y0 * W + x0], v10 = pl[y0 * W + x1];
                    const T v01 = pl[y1 * W + x0], v11 = pl[y1 * W + x1];
                    dx += g * ((T(1) - fy) * (v10 - v00) + fy * (v11 - v01));
                    dy += g * ((T(1) - fx) * (v01 - v00) + fx * (v11 - v10));
                }
                if (in_x) gc[i * 2 + 0] += dx;
                if (in_y) gc[i * 2 + 1] += dy;
            }
        });
}

// ---------------------------------------------------------------------------
// place per-pixel rows into an image filled with a background value
//
// pix [R,3] and pixel_index[r] = y*W + x. Rows not covered keep `bg`.

template <typename T>
Tensor<T> scatter_pixels(const Tensor<T>& pix, const std::vector<std::size_t>& pixel_index,
                         std::size_t H, std::size_t W, T bg) {
    check_shape(pix.rank() == 2 && pix.extent(1) == 3,
                "scatter_pixels expects [R,3], got " + dims_str(pix.dims()));
    check_contract(pix.extent(0) == pixel_index.size(), "scatter_pixels index count mismatch");
    const std::size_t R = pix.extent(0);
    std::vector<T> v(3 * H * W, bg);
    for (std::size_t r = 0; r < R; ++r) {
        const std::size_t p = pixel_index[r];
        check_contract(p < H * W, "scatter_pixels index out of range");
        for (std::size_t c = 0; c < 3; ++c) v[c * H * W + p] = pix[r * 3 + c];
    }
    return detail::make_node<T>({3, H, W}, std::move(v), {pix},
                                [pixel_index, H, W](TensorNode<T>& nd) {
                                    T* g = detail::gbuf(nd.parents[0].get());
                                    for (std::size_t r = 0; r < pixel_index.size(); ++r)
                                        for (std::size_t c = 0; c < 3; ++c)
                                            g[r * 3 + c] += nd.grad[c * H * W + pixel_index[r]];
                                });
}

} // namespace ops
} // namespace s3d
