#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "drq/kernels.hpp"

// Naive serial reference kernels. Deliberately the simplest possible loops;
// the test suite and the benchmark tool compare the OpenMP kernels against
// these. Accumulation runs in natural ascending order, which matches the
// per-element order of the tiled kernels exactly (gemm_acc, colsum_acc) or
// up to reassociation (gemm_nt_acc, which uses a lane split).

namespace drq {
namespace ref_kernels {

template <typename T>
void gemm_acc(const T* a, size_t ars, size_t aks, const T* b, T* c,
              int R, int K, int O) {
    for (int r = 0; r < R; ++r)
        for (int k = 0; k < K; ++k) {
            const T av = a[static_cast<size_t>(r) * ars + static_cast<size_t>(k) * aks];
            for (int o = 0; o < O; ++o) {
                T& cv = c[static_cast<size_t>(r) * O + o];
                cv = std::fma(av, b[static_cast<size_t>(k) * O + o], cv);
            }
        }
}

template <typename T>
void gemm_nt_acc(const T* dy, const T* w, T* dx, int R, int I, int O) {
    for (int r = 0; r < R; ++r)
        for (int i = 0; i < I; ++i) {
            T s = T(0);
            for (int o = 0; o < O; ++o)
                s = std::fma(dy[static_cast<size_t>(r) * O + o],
                             w[static_cast<size_t>(i) * O + o], s);
            dx[static_cast<size_t>(r) * I + i] += s;
        }
}

template <typename T>
void colsum_acc(const T* dy, T* db, int R, int O) {
    for (int o = 0; o < O; ++o)
        for (int r = 0; r < R; ++r) db[o] += dy[static_cast<size_t>(r) * O + o];
}

template <typename T>
void act_forward(Act a, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = kernels::act_eval(a, x[i]);
}

template <typename T>
void act_backward(Act a, const T* x, const T* y, const T* dy, T* dx, size_t n) {
    for (size_t i = 0; i < n; ++i)
        dx[i] = std::fma(dy[i], kernels::act_deriv(a, x[i], y[i]), dx[i]);
}

template <typename T>
void adamw_update(T* w, const T* g, T* m, T* v, size_t n, T lr, T beta1, T beta2,
                  T eps, T wd, int64_t t) {
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(t));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(t));
    const T decay = T(1) - lr * wd;
    for (size_t i = 0; i < n; ++i) {
        m[i] = std::fma(beta1, m[i], (T(1) - beta1) * g[i]);
        v[i] = std::fma(beta2, v[i], (T(1) - beta2) * g[i] * g[i]);
        const T upd = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        w[i] = std::fma(w[i], decay, -upd);
    }
}

} // namespace ref_kernels
} // namespace drq
