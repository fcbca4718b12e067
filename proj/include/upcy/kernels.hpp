#pragma once

// Dense kernels shared by the model, the MoE layer and the trainer.
//
// Reduction order is pinned: every output element accumulates its k-terms
// left to right in the element type, so results are bit-identical across
// runs, thread counts and loop tilings. Rows may be computed in parallel;
// the per-row order never changes.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "upcy/core.hpp"

namespace upcy {

namespace detail {

// c[i,:] += a[i,k] * b[k,:], k ascending. The j-inner loop vectorizes
// without touching the per-element accumulation order over k.
template <class T>
void matmul_rows(const T* a, const T* b, T* c, std::size_t lo, std::size_t hi,
                 std::size_t k_dim, std::size_t n) {
    for (std::size_t i = lo; i < hi; ++i) {
        const T* arow = a + i * k_dim;
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
        for (std::size_t k = 0; k < k_dim; ++k) {
            const T aik = arow[k];
            const T* brow = b + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

}  // namespace detail

// a (m x k) * b (k x n) -> (m x n)
template <class T>
tensor2d<T> matmul(const tensor2d<T>& a, const tensor2d<T>& b) {
    if (a.cols() != b.rows()) {
        throw shape_error("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()) + ")");
    }
    tensor2d<T> c(a.rows(), b.cols());
    const std::size_t work = a.cols() * b.cols();
    const std::size_t grain = work >= 1 ? std::max<std::size_t>(1, 16384 / std::max<std::size_t>(work, 1)) : 1;
    parallel_for(a.rows(), std::max<std::size_t>(grain, 1), [&](std::size_t lo, std::size_t hi) {
        detail::matmul_rows(a.data(), b.data(), c.data(), lo, hi, a.cols(), b.cols());
    });
    return c;
}

// a (m x k) * b^T where b is (n x k) -> (m x n)
template <class T>
tensor2d<T> matmul_nt(const tensor2d<T>& a, const tensor2d<T>& b) {
    if (a.cols() != b.cols()) throw shape_error("matmul_nt: inner dimensions differ");
    tensor2d<T> c(a.rows(), b.rows());
    const std::size_t k_dim = a.cols();
    const std::size_t n = b.rows();
    parallel_for(a.rows(), std::max<std::size_t>(1, 8192 / std::max<std::size_t>(k_dim * n, 1)),
                 [&](std::size_t lo, std::size_t hi) {
                     for (std::size_t i = lo; i < hi; ++i) {
                         const T* arow = a.data() + i * k_dim;
                         T* crow = c.data() + i * n;
                         for (std::size_t j = 0; j < n; ++j) {
                             const T* brow = b.data() + j * k_dim;
                             T acc = T(0);
                             for (std::size_t k = 0; k < k_dim; ++k) acc += arow[k] * brow[k];
                             crow[j] = acc;
                         }
                     }
                 });
    return c;
}

// a^T where a is (k x m), times b (k x n) -> (m x n); used for weight grads
template <class T>
tensor2d<T> matmul_tn(const tensor2d<T>& a, const tensor2d<T>& b) {
    if (a.rows() != b.rows()) throw shape_error("matmul_tn: inner dimensions differ");
    const std::size_t m = a.cols(), n = b.cols(), k_dim = a.rows();
    tensor2d<T> c(m, n);
    parallel_for(m, std::max<std::size_t>(1, 8192 / std::max<std::size_t>(k_dim * n, 1)),
                 [&](std::size_t lo, std::size_t hi) {
                     for (std::size_t i = lo; i < hi; ++i) {
                         T* crow = c.data() + i * n;
                         for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
                         for (std::size_t k = 0; k < k_dim; ++k) {
                             const T aki = a(k, i);
                             const T* brow = b.data() + k * n;
                             for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
                         }
                     }
                 });
    return c;
}

template <class T>
tensor2d<T> transpose(const tensor2d<T>& a) {
    tensor2d<T> t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

template <class T>
void add_inplace(tensor2d<T>& a, const tensor2d<T>& b) {
    if (!a.same_shape(b)) throw shape_error("add_inplace: shape mismatch");
    T* pa = a.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

// max-subtracted row softmax
template <class T>
tensor2d<T> softmax_rows(const tensor2d<T>& x) {
    if (!x.all_finite()) throw numeric_error("softmax_rows: non-finite input");
    tensor2d<T> out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        auto o = out.row(i);
        T m = in[0];
        for (const T v : in) m = std::max(m, v);
        T denom = T(0);
        for (std::size_t j = 0; j < in.size(); ++j) {
            o[j] = std::exp(in[j] - m);
            denom += o[j];
        }
        const T inv = T(1) / denom;
        for (std::size_t j = 0; j < in.size(); ++j) o[j] *= inv;
    }
    return out;
}

// mean negative log-likelihood in nats over all positions
template <class T>
double cross_entropy(const tensor2d<T>& logits, std::span<const int> targets) {
    if (targets.size() != logits.rows()) {
        throw shape_error("cross_entropy: one target per logit row required");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= logits.cols()) {
            throw index_error("cross_entropy: target " + std::to_string(t) + " outside vocab");
        }
        auto row = logits.row(i);
        double m = row[0];
        for (const T v : row) m = std::max<double>(m, v);
        double sum = 0.0;
        for (const T v : row) sum += std::exp(static_cast<double>(v) - m);
        total += m + std::log(sum) - static_cast<double>(row[t]);
    }
    const double loss = total / static_cast<double>(logits.rows());
    if (!std::isfinite(loss)) throw numeric_error("cross_entropy: non-finite loss");
    return loss;
}

// d(mean NLL)/d(logits) = (softmax - onehot) / rows
template <class T>
tensor2d<T> cross_entropy_grad(const tensor2d<T>& logits, std::span<const int> targets) {
    if (targets.size() != logits.rows()) {
        throw shape_error("cross_entropy_grad: one target per logit row required");
    }
    tensor2d<T> g = softmax_rows(logits);
    const T inv_n = T(1) / static_cast<T>(logits.rows());
    for (std::size_t i = 0; i < g.rows(); ++i) {
        auto row = g.row(i);
        row[targets[i]] -= T(1);
        for (auto& v : row) v *= inv_n;
    }
    return g;
}

// ----------------------------------------------------------------------
// gradient checking (64-bit only; central differences are useless at f32)
// ----------------------------------------------------------------------

template <class Fn>
double grad_check(Fn&& f, tensor64& x, const tensor64& analytic, double eps) {
    if (!x.same_shape(analytic)) throw shape_error("grad_check: gradient shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + eps;
        const double fp = f(x);
        x.data()[i] = saved - eps;
        const double fm = f(x);
        x.data()[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw numeric_error("grad_check: non-finite function value");
        }
        const double fd = (fp - fm) / (2.0 * eps);
        const double an = analytic.data()[i];
        const double rel = std::abs(fd - an) / (std::abs(an) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace upcy
