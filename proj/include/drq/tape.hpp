#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "drq/array.hpp"
#include "drq/kernels.hpp"

namespace drq {

// Reverse-mode autodiff over a per-step eager tape. Values are computed at
// node creation; backward() walks the tape in reverse. Scalar results are
// 1x1 matrices. Loss heads (cross-entropy, InfoNCE, Huber, MSE) are fused
// nodes with hand-written adjoints; everything composite is built from
// linear/activation/concat/slice.
//
// Gradient flow follows needs_grad: leaf() tracks gradients, constant() does
// not, and a node requires gradients iff any parent does. stop_gradient()
// re-enters a value as a constant.
template <typename T>
class Tape {
  public:
    struct Ref {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Ref leaf(const Mat<T>& m) { return push_value(m, true); }
    Ref constant(const Mat<T>& m) { return push_value(m, false); }

    Ref stop_gradient(Ref x) {
        Node n;
        n.op = Op::Const;
        n.val = value(x);
        n.needs_grad = false;
        return push(std::move(n));
    }

    // y = x*W + b with W [in][out], b [1][out].
    Ref linear(Ref x, Ref w, Ref b) {
        const Mat<T>& xv = value(x);
        const Mat<T>& wv = value(w);
        const Mat<T>& bv = value(b);
        Node n;
        n.op = Op::Linear;
        n.p0 = x.id;
        n.p1 = w.id;
        n.p2 = b.id;
        n.val = Mat<T>(xv.rows, wv.cols);
        kernels::linear_forward(xv, wv, bv, n.val);
        return push(std::move(n));
    }

    Ref activation(Ref x, Act a) {
        const Mat<T>& xv = value(x);
        Node n;
        n.op = Op::Activation;
        n.act = a;
        n.p0 = x.id;
        n.val = Mat<T>(xv.rows, xv.cols);
        kernels::act_forward(a, xv.data(), n.val.data(), xv.size());
        return push(std::move(n));
    }

    Ref concat_cols(Ref a, Ref b) {
        const Mat<T>& av = value(a);
        const Mat<T>& bv = value(b);
        check_shape(av.rows == bv.rows, "concat_cols: row mismatch");
        Node n;
        n.op = Op::ConcatCols;
        n.p0 = a.id;
        n.p1 = b.id;
        n.val = Mat<T>(av.rows, av.cols + bv.cols);
        for (int r = 0; r < av.rows; ++r) {
            std::copy(av.row(r), av.row(r) + av.cols, n.val.row(r));
            std::copy(bv.row(r), bv.row(r) + bv.cols, n.val.row(r) + av.cols);
        }
        return push(std::move(n));
    }

    // Row block [r0, r1).
    Ref slice_rows(Ref x, int r0, int r1) {
        const Mat<T>& xv = value(x);
        check_shape(0 <= r0 && r0 < r1 && r1 <= xv.rows, "slice_rows: bad range");
        Node n;
        n.op = Op::SliceRows;
        n.p0 = x.id;
        n.i0 = r0;
        n.i1 = r1;
        n.val = Mat<T>(r1 - r0, xv.cols);
        std::copy(xv.row(r0), xv.row(r1 - 1) + xv.cols, n.val.data());
        return push(std::move(n));
    }

    // Column block [c0, c1).
    Ref slice_cols(Ref x, int c0, int c1) {
        const Mat<T>& xv = value(x);
        check_shape(0 <= c0 && c0 < c1 && c1 <= xv.cols, "slice_cols: bad range");
        Node n;
        n.op = Op::SliceCols;
        n.p0 = x.id;
        n.i0 = c0;
        n.i1 = c1;
        n.val = Mat<T>(xv.rows, c1 - c0);
        for (int r = 0; r < xv.rows; ++r)
            std::copy(xv.row(r) + c0, xv.row(r) + c1, n.val.row(r));
        return push(std::move(n));
    }

    Ref hadamard(Ref a, Ref b) {
        const Mat<T>& av = value(a);
        const Mat<T>& bv = value(b);
        check_shape(av.same_shape(bv), "hadamard: shape mismatch");
        Node n;
        n.op = Op::Hadamard;
        n.p0 = a.id;
        n.p1 = b.id;
        n.val = Mat<T>(av.rows, av.cols);
        for (size_t i = 0; i < av.size(); ++i) n.val.v[i] = av.v[i] * bv.v[i];
        return push(std::move(n));
    }

    Ref scale(Ref x, T c) {
        const Mat<T>& xv = value(x);
        Node n;
        n.op = Op::Scale;
        n.p0 = x.id;
        n.scalar = c;
        n.val = Mat<T>(xv.rows, xv.cols);
        for (size_t i = 0; i < xv.size(); ++i) n.val.v[i] = c * xv.v[i];
        return push(std::move(n));
    }

    Ref sum_all(Ref x) { return reduce(x, false); }
    Ref mean_all(Ref x) { return reduce(x, true); }

    // mean over all elements of (pred - target)^2
    Ref mse_mean(Ref pred, Ref target) {
        const Mat<T>& p = value(pred);
        const Mat<T>& t = value(target);
        check_shape(p.same_shape(t), "mse_mean: shape mismatch");
        Node n;
        n.op = Op::MseMean;
        n.p0 = pred.id;
        n.p1 = target.id;
        n.val = Mat<T>(1, 1);
        T s = T(0);
        for (size_t i = 0; i < p.size(); ++i) {
            const T d = p.v[i] - t.v[i];
            s += d * d;
        }
        n.val.v[0] = s / static_cast<T>(p.size());
        return push(std::move(n));
    }

    // mean over all elements of the Huber penalty of (pred - target)
    Ref huber_mean(Ref pred, Ref target, T delta) {
        const Mat<T>& p = value(pred);
        const Mat<T>& t = value(target);
        check_shape(p.same_shape(t), "huber_mean: shape mismatch");
        if (!(delta > T(0))) throw config_error("huber delta must be positive");
        Node n;
        n.op = Op::HuberMean;
        n.p0 = pred.id;
        n.p1 = target.id;
        n.scalar = delta;
        n.val = Mat<T>(1, 1);
        T s = T(0);
        for (size_t i = 0; i < p.size(); ++i) {
            const T e = p.v[i] - t.v[i];
            const T ae = std::abs(e);
            s += ae <= delta ? T(0.5) * e * e : delta * (ae - T(0.5) * delta);
        }
        n.val.v[0] = s / static_cast<T>(p.size());
        return push(std::move(n));
    }

    // mean over rows of CE(softmax(logits), target); target rows are
    // probability vectors. d/dlogits = (softmax - target)/rows.
    Ref softmax_ce(Ref logits, Ref target) {
        const Mat<T>& lg = value(logits);
        const Mat<T>& tg = value(target);
        check_shape(lg.same_shape(tg), "softmax_ce: shape mismatch");
        Node n;
        n.op = Op::SoftmaxCE;
        n.p0 = logits.id;
        n.p1 = target.id;
        n.val = Mat<T>(1, 1);
        n.aux = Mat<T>(lg.rows, lg.cols); // softmax cache
        T total = T(0);
        for (int r = 0; r < lg.rows; ++r) {
            const T* row = lg.row(r);
            T mx = row[0];
            for (int c = 1; c < lg.cols; ++c) mx = std::max(mx, row[c]);
            T z = T(0);
            for (int c = 0; c < lg.cols; ++c) z += std::exp(row[c] - mx);
            const T lse = mx + std::log(z);
            T dot = T(0);
            for (int c = 0; c < lg.cols; ++c) {
                n.aux.at(r, c) = std::exp(row[c] - mx) / z;
                dot += tg.at(r, c) * row[c];
            }
            total += lse - dot;
        }
        n.val.v[0] = total / static_cast<T>(lg.rows);
        return push(std::move(n));
    }

    // -(1/N) sum_i log softmax_k( cos(zhat_i, ztgt_k)/tau )_{k=i}.
    // Gradients flow into zhat only; the target side is stopped by contract.
    Ref infonce(Ref zhat, Ref ztgt, T tau) {
        if (!(tau > T(0))) throw config_error("infonce temperature must be positive");
        const Mat<T>& zh = value(zhat);
        const Mat<T>& zt = value(ztgt);
        check_shape(zh.same_shape(zt), "infonce: shape mismatch");
        const int N = zh.rows, D = zh.cols;
        Node n;
        n.op = Op::InfoNce;
        n.p0 = zhat.id;
        n.p1 = ztgt.id;
        n.scalar = tau;
        n.val = Mat<T>(1, 1);
        // aux: row-softmax P over similarities [N x N]; aux2: packed
        // (nh | nt | norm_h) = [N x (2D+1)] caches for the backward pass.
        n.aux = Mat<T>(N, N);
        n.aux2 = Mat<T>(N, 2 * D + 1);
        const T guard = static_cast<T>(1e-8);
        for (int r = 0; r < N; ++r) {
            T nh2 = T(0), nt2 = T(0);
            for (int c = 0; c < D; ++c) {
                nh2 += zh.at(r, c) * zh.at(r, c);
                nt2 += zt.at(r, c) * zt.at(r, c);
            }
            const T nh = std::sqrt(nh2), nt = std::sqrt(nt2);
            for (int c = 0; c < D; ++c) {
                n.aux2.at(r, c) = zh.at(r, c) / (nh + guard);
                n.aux2.at(r, D + c) = zt.at(r, c) / (nt + guard);
            }
            n.aux2.at(r, 2 * D) = nh;
        }
        // S[i][k] = nh_i . nt_k / tau, computed into aux then softmaxed in place
        Mat<T> s(N, N);
        {
            // strided views over aux2: nh rows at offset 0, nt rows at offset D
            for (int i = 0; i < N; ++i)
                for (int k = 0; k < N; ++k) {
                    T d = T(0);
                    for (int c = 0; c < D; ++c)
                        d += n.aux2.at(i, c) * n.aux2.at(k, D + c);
                    s.at(i, k) = d / tau;
                }
        }
        T total = T(0);
        for (int i = 0; i < N; ++i) {
            T mx = s.at(i, 0);
            for (int k = 1; k < N; ++k) mx = std::max(mx, s.at(i, k));
            T z = T(0);
            for (int k = 0; k < N; ++k) z += std::exp(s.at(i, k) - mx);
            for (int k = 0; k < N; ++k) n.aux.at(i, k) = std::exp(s.at(i, k) - mx) / z;
            total += mx + std::log(z) - s.at(i, i);
        }
        n.val.v[0] = total / static_cast<T>(N);
        return push(std::move(n));
    }

    // sum_i coeff_i * scalar_i
    Ref weighted_sum(const std::vector<Ref>& terms, const std::vector<T>& coeffs) {
        check_shape(terms.size() == coeffs.size() && !terms.empty(),
                    "weighted_sum: arity mismatch");
        Node n;
        n.op = Op::WeightedSum;
        n.val = Mat<T>(1, 1);
        T s = T(0);
        for (size_t i = 0; i < terms.size(); ++i) {
            const Mat<T>& tv = value(terms[i]);
            check_shape(tv.rows == 1 && tv.cols == 1, "weighted_sum: non-scalar term");
            n.plist.push_back(terms[i].id);
            s += coeffs[i] * tv.v[0];
        }
        n.coeffs = coeffs;
        n.val.v[0] = s;
        return push(std::move(n));
    }

    const Mat<T>& value(Ref r) const { return node(r).val; }

    // Zero matrix for nodes that never required gradients.
    const Mat<T>& grad(Ref r) const {
        const Node& n = node(r);
        if (n.grad.size() == 0) {
            zero_like_.rows = n.val.rows;
            zero_like_.cols = n.val.cols;
            zero_like_.v.assign(n.val.size(), T(0));
            return zero_like_;
        }
        return n.grad;
    }

    void backward(Ref loss) {
        Node& ln = node(loss);
        check_shape(ln.val.rows == 1 && ln.val.cols == 1, "backward: loss must be scalar");
        if (!ln.needs_grad)
            throw state_error("backward: loss does not depend on any tracked leaf");
        ensure_grad(loss.id);
        ln.grad.v[0] = T(1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.needs_grad || n.grad.size() == 0) continue;
            backprop(n);
        }
    }

    size_t size() const { return nodes_.size(); }

  private:
    enum class Op : uint8_t {
        Const,
        Leaf,
        Linear,
        Activation,
        ConcatCols,
        SliceRows,
        SliceCols,
        Hadamard,
        Scale,
        Reduce,
        MseMean,
        HuberMean,
        SoftmaxCE,
        InfoNce,
        WeightedSum,
    };

    struct Node {
        Op op = Op::Const;
        Act act = Act::Identity;
        int p0 = -1, p1 = -1, p2 = -1;
        std::vector<int> plist;
        std::vector<T> coeffs;
        T scalar = T(0);
        int i0 = 0, i1 = 0;
        Mat<T> val, grad, aux, aux2;
        bool needs_grad = false;
    };

    Ref push_value(const Mat<T>& m, bool needs_grad) {
        Node n;
        n.op = needs_grad ? Op::Leaf : Op::Const;
        n.val = m;
        n.needs_grad = needs_grad;
        if (needs_grad) n.grad = Mat<T>(m.rows, m.cols);
        nodes_.push_back(std::move(n));
        return Ref{static_cast<int>(nodes_.size()) - 1};
    }

    Ref push(Node&& n) {
        n.needs_grad = parent_needs_grad(n);
        if (n.needs_grad) n.grad = Mat<T>(n.val.rows, n.val.cols);
        nodes_.push_back(std::move(n));
        return Ref{static_cast<int>(nodes_.size()) - 1};
    }

    bool parent_needs_grad(const Node& n) const {
        for (int p : {n.p0, n.p1, n.p2})
            if (p >= 0 && nodes_[p].needs_grad) return true;
        for (int p : n.plist)
            if (nodes_[p].needs_grad) return true;
        return false;
    }

    Ref reduce(Ref x, bool mean) {
        const Mat<T>& xv = value(x);
        Node n;
        n.op = Op::Reduce;
        n.p0 = x.id;
        n.scalar = mean ? T(1) / static_cast<T>(xv.size()) : T(1);
        n.val = Mat<T>(1, 1);
        T s = T(0);
        for (size_t i = 0; i < xv.size(); ++i) s += xv.v[i];
        n.val.v[0] = s * n.scalar;
        return push(std::move(n));
    }

    Node& node(Ref r) {
        if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
            throw state_error("tape: invalid node reference");
        return nodes_[r.id];
    }
    const Node& node(Ref r) const {
        if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
            throw state_error("tape: invalid node reference");
        return nodes_[r.id];
    }

    // Lazily materialize the gradient buffer of parent p; returns nullptr for
    // constants so callers can skip work.
    Mat<T>* want_grad(int p) {
        if (p < 0) return nullptr;
        Node& n = nodes_[p];
        if (!n.needs_grad) return nullptr;
        ensure_grad(p);
        return &n.grad;
    }

    void ensure_grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.size() == 0) n.grad = Mat<T>(n.val.rows, n.val.cols);
    }

    void backprop(Node& n) {
        const Mat<T>& gy = n.grad;
        switch (n.op) {
            case Op::Const:
            case Op::Leaf:
                return;
            case Op::Linear: {
                const Mat<T>& x = nodes_[n.p0].val;
                const Mat<T>& w = nodes_[n.p1].val;
                const int R = x.rows, I = x.cols, O = w.cols;
                if (Mat<T>* dx = want_grad(n.p0))
                    kernels::gemm_nt_acc(gy.data(), w.data(), dx->data(), R, I, O);
                if (Mat<T>* dw = want_grad(n.p1))
                    kernels::gemm_acc(x.data(), size_t(1), static_cast<size_t>(I),
                                      gy.data(), dw->data(), I, R, O);
                if (Mat<T>* db = want_grad(n.p2))
                    kernels::colsum_acc(gy.data(), db->data(), R, O);
                return;
            }
            case Op::Activation: {
                const Mat<T>& x = nodes_[n.p0].val;
                if (Mat<T>* dx = want_grad(n.p0))
                    kernels::act_backward(n.act, x.data(), n.val.data(), gy.data(),
                                          dx->data(), x.size());
                return;
            }
            case Op::ConcatCols: {
                const Mat<T>& a = nodes_[n.p0].val;
                const Mat<T>& b = nodes_[n.p1].val;
                if (Mat<T>* da = want_grad(n.p0))
                    for (int r = 0; r < a.rows; ++r)
                        for (int c = 0; c < a.cols; ++c) da->at(r, c) += gy.at(r, c);
                if (Mat<T>* db = want_grad(n.p1))
                    for (int r = 0; r < b.rows; ++r)
                        for (int c = 0; c < b.cols; ++c)
                            db->at(r, c) += gy.at(r, a.cols + c);
                return;
            }
            case Op::SliceRows: {
                if (Mat<T>* dx = want_grad(n.p0)) {
                    for (int r = n.i0; r < n.i1; ++r)
                        for (int c = 0; c < dx->cols; ++c)
                            dx->at(r, c) += gy.at(r - n.i0, c);
                }
                return;
            }
            case Op::SliceCols: {
                if (Mat<T>* dx = want_grad(n.p0)) {
                    for (int r = 0; r < dx->rows; ++r)
                        for (int c = n.i0; c < n.i1; ++c)
                            dx->at(r, c) += gy.at(r, c - n.i0);
                }
                return;
            }
            case Op::Hadamard: {
                const Mat<T>& a = nodes_[n.p0].val;
                const Mat<T>& b = nodes_[n.p1].val;
                if (Mat<T>* da = want_grad(n.p0))
                    for (size_t i = 0; i < a.size(); ++i) da->v[i] += gy.v[i] * b.v[i];
                if (Mat<T>* db = want_grad(n.p1))
                    for (size_t i = 0; i < b.size(); ++i) db->v[i] += gy.v[i] * a.v[i];
                return;
            }
            case Op::Scale: {
                if (Mat<T>* dx = want_grad(n.p0))
                    for (size_t i = 0; i < dx->size(); ++i)
                        dx->v[i] += n.scalar * gy.v[i];
                return;
            }
            case Op::Reduce: {
                if (Mat<T>* dx = want_grad(n.p0)) {
                    const T g = gy.v[0] * n.scalar;
                    for (size_t i = 0; i < dx->size(); ++i) dx->v[i] += g;
                }
                return;
            }
            case Op::MseMean: {
                const Mat<T>& p = nodes_[n.p0].val;
                const Mat<T>& t = nodes_[n.p1].val;
                const T g = gy.v[0] * T(2) / static_cast<T>(p.size());
                if (Mat<T>* dp = want_grad(n.p0))
                    for (size_t i = 0; i < p.size(); ++i)
                        dp->v[i] += g * (p.v[i] - t.v[i]);
                if (Mat<T>* dt = want_grad(n.p1))
                    for (size_t i = 0; i < t.size(); ++i)
                        dt->v[i] -= g * (p.v[i] - t.v[i]);
                return;
            }
            case Op::HuberMean: {
                const Mat<T>& p = nodes_[n.p0].val;
                const Mat<T>& t = nodes_[n.p1].val;
                const T g = gy.v[0] / static_cast<T>(p.size());
                const T delta = n.scalar;
                auto dr = [&](size_t i) {
                    const T e = p.v[i] - t.v[i];
                    if (std::abs(e) <= delta) return e;
                    return e > T(0) ? delta : -delta;
                };
                if (Mat<T>* dp = want_grad(n.p0))
                    for (size_t i = 0; i < p.size(); ++i) dp->v[i] += g * dr(i);
                if (Mat<T>* dt = want_grad(n.p1))
                    for (size_t i = 0; i < t.size(); ++i) dt->v[i] -= g * dr(i);
                return;
            }
            case Op::SoftmaxCE: {
                const Mat<T>& lg = nodes_[n.p0].val;
                const Mat<T>& tg = nodes_[n.p1].val;
                const T g = gy.v[0] / static_cast<T>(lg.rows);
                if (Mat<T>* dl = want_grad(n.p0))
                    for (size_t i = 0; i < lg.size(); ++i)
                        dl->v[i] += g * (n.aux.v[i] - tg.v[i]);
                if (Mat<T>* dt = want_grad(n.p1)) {
                    // d/dtarget of (lse - target.logits)/rows
                    for (size_t i = 0; i < tg.size(); ++i)
                        dt->v[i] -= g * lg.v[i];
                }
                return;
            }
            case Op::InfoNce: {
                Mat<T>* dz = want_grad(n.p0);
                if (!dz) return;
                const Mat<T>& zh = nodes_[n.p0].val;
                const int N = zh.rows, D = zh.cols;
                const T tau = n.scalar;
                const T guard = static_cast<T>(1e-8);
                const T g = gy.v[0] / static_cast<T>(N);
                // dL/dS = (P - I) * g; dL/dnh_i = (1/tau) sum_k dS_ik nt_k
                for (int i = 0; i < N; ++i) {
                    T gn[1024]; // dL/dnh_i, D <= 1024 by construction
                    check_shape(D <= 1024, "infonce: latent dim too large");
                    for (int c = 0; c < D; ++c) gn[c] = T(0);
                    for (int k = 0; k < N; ++k) {
                        T ds = n.aux.at(i, k) * g;
                        if (k == i) ds -= g;
                        ds /= tau;
                        for (int c = 0; c < D; ++c)
                            gn[c] += ds * n.aux2.at(k, D + c);
                    }
                    // chain through row normalization
                    const T nh = n.aux2.at(i, 2 * D);
                    const T u = T(1) / (nh + guard);
                    T gdotz = T(0);
                    for (int c = 0; c < D; ++c) gdotz += gn[c] * zh.at(i, c);
                    const T corr = nh > T(0) ? gdotz / (nh * (nh + guard) * (nh + guard))
                                             : T(0);
                    for (int c = 0; c < D; ++c)
                        dz->at(i, c) += gn[c] * u - corr * zh.at(i, c);
                }
                return;
            }
            case Op::WeightedSum: {
                for (size_t i = 0; i < n.plist.size(); ++i)
                    if (Mat<T>* dp = want_grad(n.plist[i]))
                        dp->v[0] += gy.v[0] * n.coeffs[i];
                return;
            }
        }
    }

    std::vector<Node> nodes_;
    mutable Mat<T> zero_like_;
};

} // namespace drq
