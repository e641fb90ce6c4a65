#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "drq/array.hpp"
#include "drq/kernels.hpp"
#include "drq/rng.hpp"
#include "drq/tape.hpp"

namespace drq {

struct MlpSpec {
    int input_dim = 0;
    std::vector<int> widths;
    std::vector<Act> acts;

    int output_dim() const { return widths.empty() ? input_dim : widths.back(); }

    void validate() const {
        if (input_dim < 1) throw config_error("mlp: input_dim must be >= 1");
        if (widths.empty()) throw config_error("mlp: at least one layer");
        if (widths.size() != acts.size())
            throw config_error("mlp: one activation per layer");
        for (int w : widths)
            if (w < 1) throw config_error("mlp: layer dims must be >= 1");
    }
};

// Named parameter tensors plus AdamW moment state. Names are unique and
// shapes frozen after add(). One store per optimizer group.
template <typename T>
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Mat<T>> vals, m, v;
    int64_t step = 0;

    int add(const std::string& name, Mat<T> init) {
        if (index_of(name) >= 0) throw config_error("duplicate parameter name: " + name);
        names.push_back(name);
        m.emplace_back(init.rows, init.cols);
        v.emplace_back(init.rows, init.cols);
        vals.push_back(std::move(init));
        return static_cast<int>(vals.size()) - 1;
    }

    int index_of(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return static_cast<int>(i);
        return -1;
    }

    size_t count() const { return vals.size(); }

    // Hard target sync: values only, by identical layout.
    void copy_values_from(const ParamStore& src) {
        if (src.names != names) throw state_error("param store layout mismatch");
        for (size_t i = 0; i < vals.size(); ++i) vals[i].v = src.vals[i].v;
    }
};

// Decoupled-weight-decay Adam over a full store. grads is parallel to
// store order; missing gradients are zero matrices (parameters outside the
// loss graph stay put apart from decay).
template <typename T>
void adamw_step(ParamStore<T>& ps, const std::vector<Mat<T>>& grads, T lr,
                T weight_decay, T beta1, T beta2, T eps) {
    if (!(lr > T(0))) throw config_error("adamw: lr must be positive");
    if (grads.size() != ps.count()) throw shape_error("adamw: grad count mismatch");
    ps.step += 1;
    for (size_t i = 0; i < ps.count(); ++i) {
        check_shape(grads[i].same_shape(ps.vals[i]), "adamw: grad shape mismatch");
        kernels::adamw_update(ps.vals[i].data(), grads[i].data(), ps.m[i].data(),
                              ps.v[i].data(), ps.vals[i].size(), lr, beta1, beta2,
                              eps, weight_decay, ps.step);
    }
}

// An MLP bound to parameter slots inside a ParamStore.
template <typename T>
struct Mlp {
    MlpSpec spec;
    std::vector<int> wi, bi; // per-layer store indices

    static Mlp create(ParamStore<T>& ps, const std::string& prefix,
                      const MlpSpec& spec, Rng rng) {
        spec.validate();
        Mlp net;
        net.spec = spec;
        int fan_in = spec.input_dim;
        for (size_t l = 0; l < spec.widths.size(); ++l) {
            const int fan_out = spec.widths[l];
            Mat<T> w(fan_in, fan_out);
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& x : w.v) x = static_cast<T>(rng.uniform(-bound, bound));
            net.wi.push_back(ps.add(prefix + ".l" + std::to_string(l) + ".w", std::move(w)));
            net.bi.push_back(ps.add(prefix + ".l" + std::to_string(l) + ".b",
                                    Mat<T>(1, fan_out)));
            fan_in = fan_out;
        }
        return net;
    }

    Mat<T> forward(const ParamStore<T>& ps, const Mat<T>& x) const {
        check_shape(x.cols == spec.input_dim, "mlp forward: input dim mismatch");
        Mat<T> cur = x;
        for (size_t l = 0; l < wi.size(); ++l) {
            Mat<T> y(cur.rows, ps.vals[wi[l]].cols);
            kernels::linear_forward(cur, ps.vals[wi[l]], ps.vals[bi[l]], y);
            kernels::act_forward(spec.acts[l], y.data(), y.data(), y.size());
            cur = std::move(y);
        }
        return cur;
    }

    // Parameter tape refs in store order; trainable -> leaf, frozen -> constant.
    struct TapeParams {
        std::vector<typename Tape<T>::Ref> w, b;
    };

    TapeParams push_params(Tape<T>& tape, const ParamStore<T>& ps, bool trainable) const {
        TapeParams tp;
        for (size_t l = 0; l < wi.size(); ++l) {
            tp.w.push_back(trainable ? tape.leaf(ps.vals[wi[l]])
                                     : tape.constant(ps.vals[wi[l]]));
            tp.b.push_back(trainable ? tape.leaf(ps.vals[bi[l]])
                                     : tape.constant(ps.vals[bi[l]]));
        }
        return tp;
    }

    typename Tape<T>::Ref forward_on_tape(Tape<T>& tape, const TapeParams& tp,
                                          typename Tape<T>::Ref x) const {
        typename Tape<T>::Ref cur = x;
        for (size_t l = 0; l < tp.w.size(); ++l) {
            cur = tape.linear(cur, tp.w[l], tp.b[l]);
            if (spec.acts[l] != Act::Identity) cur = tape.activation(cur, spec.acts[l]);
        }
        return cur;
    }

    // Accumulate tape gradients for this net into a store-parallel grad list.
    void collect_grads(const Tape<T>& tape, const TapeParams& tp,
                       std::vector<Mat<T>>& grads) const {
        for (size_t l = 0; l < wi.size(); ++l) {
            accum(grads[wi[l]], tape.grad(tp.w[l]));
            accum(grads[bi[l]], tape.grad(tp.b[l]));
        }
    }

  private:
    static void accum(Mat<T>& dst, const Mat<T>& src) {
        if (dst.size() == 0) {
            dst = src;
            return;
        }
        check_shape(dst.same_shape(src), "grad accumulate: shape mismatch");
        for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
    }
};

// Zero-filled grad list matching a store's layout.
template <typename T>
std::vector<Mat<T>> zero_grads(const ParamStore<T>& ps) {
    std::vector<Mat<T>> g;
    g.reserve(ps.count());
    for (const auto& p : ps.vals) g.emplace_back(p.rows, p.cols);
    return g;
}

// Spec-style convenience: fresh store holding one MLP.
template <typename T>
std::pair<ParamStore<T>, Mlp<T>> mlp_init(const MlpSpec& spec, uint64_t seed,
                                          const std::string& prefix = "net") {
    ParamStore<T> ps;
    Mlp<T> net = Mlp<T>::create(ps, prefix, spec, Rng(seed));
    return {std::move(ps), std::move(net)};
}

} // namespace drq
