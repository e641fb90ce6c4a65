#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "drq/array.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense kernels behind the autodiff tape. All kernels are deterministic
// across thread counts: every output element is owned by exactly one loop
// iteration and its floating-point accumulation order is fixed by
// construction (ascending reduction index, or a fixed lane split), never by
// the OpenMP schedule.

namespace drq {

enum class Act : uint8_t { Identity = 0, ReLU = 1, ELU = 2, Tanh = 3 };

namespace kernels {

// c[r][o] += sum_k a(r,k) * b[k][o], with a(r,k) = a[r*ars + k*aks].
// Covers both y += x*W (ars=K, aks=1) and dW += x^T*dy (ars=1, aks=K_rows).
// Register-tiled axpy form: the inner column block keeps accumulation in
// k-ascending order per element, identical to the naive triple loop.
template <typename T>
void gemm_acc(const T* a, size_t ars, size_t aks, const T* b, T* c,
              int R, int K, int O) {
    constexpr int BR = 4;
    constexpr int BO = 32;
#pragma omp parallel for schedule(static)
    for (int r0 = 0; r0 < R; r0 += BR) {
        const int rn = std::min(BR, R - r0);
        const T* ar[BR];
        T* cr[BR];
        for (int j = 0; j < rn; ++j) {
            ar[j] = a + static_cast<size_t>(r0 + j) * ars;
            cr[j] = c + static_cast<size_t>(r0 + j) * O;
        }
        int o0 = 0;
        for (; o0 + BO <= O; o0 += BO) {
            if (rn == BR) {
                T a0[BO], a1[BO], a2[BO], a3[BO];
                for (int o = 0; o < BO; ++o) {
                    a0[o] = cr[0][o0 + o];
                    a1[o] = cr[1][o0 + o];
                    a2[o] = cr[2][o0 + o];
                    a3[o] = cr[3][o0 + o];
                }
                for (int k = 0; k < K; ++k) {
                    const T* br = b + static_cast<size_t>(k) * O + o0;
                    const T x0 = ar[0][k * aks];
                    const T x1 = ar[1][k * aks];
                    const T x2 = ar[2][k * aks];
                    const T x3 = ar[3][k * aks];
                    for (int o = 0; o < BO; ++o) {
                        const T wv = br[o];
                        a0[o] = std::fma(x0, wv, a0[o]);
                        a1[o] = std::fma(x1, wv, a1[o]);
                        a2[o] = std::fma(x2, wv, a2[o]);
                        a3[o] = std::fma(x3, wv, a3[o]);
                    }
                }
                for (int o = 0; o < BO; ++o) {
                    cr[0][o0 + o] = a0[o];
                    cr[1][o0 + o] = a1[o];
                    cr[2][o0 + o] = a2[o];
                    cr[3][o0 + o] = a3[o];
                }
            } else {
                for (int j = 0; j < rn; ++j) {
                    T acc[BO];
                    for (int o = 0; o < BO; ++o) acc[o] = cr[j][o0 + o];
                    for (int k = 0; k < K; ++k) {
                        const T xv = ar[j][k * aks];
                        const T* br = b + static_cast<size_t>(k) * O + o0;
                        for (int o = 0; o < BO; ++o)
                            acc[o] = std::fma(xv, br[o], acc[o]);
                    }
                    for (int o = 0; o < BO; ++o) cr[j][o0 + o] = acc[o];
                }
            }
        }
        if (o0 < O) {
            const int ow = O - o0;
            for (int j = 0; j < rn; ++j) {
                T acc[BO];
                for (int o = 0; o < ow; ++o) acc[o] = cr[j][o0 + o];
                for (int k = 0; k < K; ++k) {
                    const T xv = ar[j][k * aks];
                    const T* br = b + static_cast<size_t>(k) * O + o0;
                    for (int o = 0; o < ow; ++o) acc[o] = std::fma(xv, br[o], acc[o]);
                }
                for (int o = 0; o < ow; ++o) cr[j][o0 + o] = acc[o];
            }
        }
    }
}

// dx[r][i] += sum_o dy[r][o] * w[i][o]  (dx = dy * W^T with W kept [in][out]).
// Dot form over the contiguous o axis; a fixed lane split plus an in-order
// horizontal fold makes the sum order independent of threading. The lane
// count depends only on O, so results are a pure function of the inputs.
template <int NL, typename T>
void gemm_nt_lanes(const T* dy, const T* w, T* dx, int R, int I, int O) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        const T* dyr = dy + static_cast<size_t>(r) * O;
        T* dxr = dx + static_cast<size_t>(r) * I;
        for (int i = 0; i < I; ++i) {
            const T* wr = w + static_cast<size_t>(i) * O;
            T lanes[NL] = {};
            int o = 0;
            for (; o + NL <= O; o += NL)
                for (int l = 0; l < NL; ++l)
                    lanes[l] = std::fma(dyr[o + l], wr[o + l], lanes[l]);
            T tail = T(0);
            for (; o < O; ++o) tail = std::fma(dyr[o], wr[o], tail);
            T s = T(0);
            for (int l = 0; l < NL; ++l) s += lanes[l];
            dxr[i] += s + tail;
        }
    }
}

template <typename T>
void gemm_nt_acc(const T* dy, const T* w, T* dx, int R, int I, int O) {
    if (O >= 256)
        gemm_nt_lanes<64>(dy, w, dx, R, I, O);
    else if (O >= 16)
        gemm_nt_lanes<16>(dy, w, dx, R, I, O);
    else
        gemm_nt_lanes<1>(dy, w, dx, R, I, O);
}

// db[o] += sum_r dy[r][o], r ascending per column.
template <typename T>
void colsum_acc(const T* dy, T* db, int R, int O) {
    constexpr int BO = 256;
#pragma omp parallel for schedule(static)
    for (int o0 = 0; o0 < O; o0 += BO) {
        const int ow = std::min(BO, O - o0);
        for (int r = 0; r < R; ++r) {
            const T* dyr = dy + static_cast<size_t>(r) * O + o0;
            for (int o = 0; o < ow; ++o) db[o0 + o] += dyr[o];
        }
    }
}

// y[r][:] = bias for every row.
template <typename T>
void broadcast_rows(const T* bias, T* y, int R, int O) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        T* yr = y + static_cast<size_t>(r) * O;
        for (int o = 0; o < O; ++o) yr[o] = bias[o];
    }
}

template <typename T>
inline T act_eval(Act a, T x) {
    switch (a) {
        case Act::Identity: return x;
        case Act::ReLU: return x > T(0) ? x : T(0);
        case Act::ELU: return x > T(0) ? x : std::exp(x) - T(1);
        case Act::Tanh: return std::tanh(x);
    }
    return x;
}

// Derivative in terms of input x and stored output y (avoids recomputing exp).
template <typename T>
inline T act_deriv(Act a, T x, T y) {
    switch (a) {
        case Act::Identity: return T(1);
        case Act::ReLU: return x > T(0) ? T(1) : T(0);
        case Act::ELU: return x > T(0) ? T(1) : y + T(1);
        case Act::Tanh: return T(1) - y * y;
    }
    return T(1);
}

template <typename T>
void act_forward(Act a, const T* x, T* y, size_t n) {
    if (a == Act::Identity) {
        std::copy(x, x + n, y);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i)
        y[i] = act_eval(a, x[i]);
}

// dx[i] += dy[i] * f'(x[i])
template <typename T>
void act_backward(Act a, const T* x, const T* y, const T* dy, T* dx, size_t n) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i)
        dx[i] = std::fma(dy[i], act_deriv(a, x[i], y[i]), dx[i]);
}

// Decoupled-decay AdamW. Decay is applied first (w *= 1 - lr*wd), then the
// bias-corrected moment update; t is the 1-based step count.
template <typename T>
void adamw_update(T* w, const T* g, T* m, T* v, size_t n, T lr, T beta1, T beta2,
                  T eps, T wd, int64_t t) {
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(t));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(t));
    const T decay = T(1) - lr * wd;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
        // Explicit fma pins every contraction choice so the parallel and the
        // serial reference loops round identically.
        m[i] = std::fma(beta1, m[i], (T(1) - beta1) * g[i]);
        v[i] = std::fma(beta2, v[i], (T(1) - beta2) * g[i] * g[i]);
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        w[i] = std::fma(w[i], decay, -(lr * mhat / (std::sqrt(vhat) + eps)));
    }
}

// y = x*W + b. W is [in][out] row-major, b is [1][out].
template <typename T>
void linear_forward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b, Mat<T>& y) {
    check_shape(x.cols == w.rows, "linear: input dim mismatch");
    check_shape(b.cols == w.cols && b.rows == 1, "linear: bias dim mismatch");
    check_shape(y.rows == x.rows && y.cols == w.cols, "linear: output dim mismatch");
    broadcast_rows(b.data(), y.data(), y.rows, y.cols);
    gemm_acc(x.data(), static_cast<size_t>(x.cols), size_t(1), w.data(), y.data(),
             x.rows, x.cols, w.cols);
}

} // namespace kernels
} // namespace drq
