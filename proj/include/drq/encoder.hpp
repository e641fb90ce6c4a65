#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "drq/checkpoint.hpp"
#include "drq/nets.hpp"
#include "drq/twohot.hpp"

namespace drq {

// Architecture dimensions for the representation stack: state encoder f,
// action embedding, state-action encoder g, and the linear MDP predictor M
// whose joint output is (reward logits | predicted next latent).
struct EncoderDims {
    int state_dim = 0;
    int action_dim = 0;
    int z_s_dim = 512;
    int z_sa_dim = 512;
    int z_a_dim = 256;
    int hidden_dim = 750;
    int reward_bins = 65;

    void validate() const {
        if (state_dim < 1) throw config_error("encoder: state_dim must be >= 1");
        if (action_dim < 1) throw config_error("encoder: action_dim must be >= 1");
        if (z_s_dim < 1 || z_sa_dim < 1 || z_a_dim < 1 || hidden_dim < 1)
            throw config_error("encoder: latent dims must be >= 1");
        if (reward_bins < 2) throw config_error("encoder: need at least 2 reward bins");
    }
};

// H-step subsequences (s_0, a_0, r_1, ..., r_H, s_H) assembled by the caller.
// valid(r, t) marks unroll step t+1 usable for row r; masks must be
// prefix-closed per row (once a step is invalid, all later ones are too).
// Rows beyond a row's valid prefix may hold arbitrary padding.
template <typename T>
struct UnrollBatch {
    int batch = 0;
    int horizon = 0;
    std::vector<Mat<T>> states;  // horizon+1 mats of [batch, state_dim]
    std::vector<Mat<T>> actions; // horizon mats of [batch, action_dim]
    Mat<T> rewards;              // [batch, horizon], r_{t+1} in column t
    std::vector<uint8_t> valid;  // row-major [batch, horizon]

    bool is_valid(int r, int t) const {
        return valid[static_cast<size_t>(r) * horizon + t] != 0;
    }
};

// Per-term breakdown of the unrolled loss. reward/dynamics/infonce are the
// valid-step-weighted means before their lambda weights, so
// total = lambda_r*reward + lambda_d*dynamics + lambda_m*infonce.
// Terms with a zero lambda are skipped and reported as 0.
struct EncoderLossTerms {
    double total = 0;
    double reward = 0;
    double dynamics = 0;
    double infonce = 0;
    int rows = 0;             // rows with at least one valid step
    int64_t valid_steps = 0;  // sum over steps of per-step valid row counts
};

// Standalone InfoNCE with cosine critic: -(1/N) sum_i log softmax over k of
// cos(z_hat_i, z_tgt_k)/tau at k = i. The target side carries no gradient.
template <typename T>
T infonce_loss(const Mat<T>& z_hat, const Mat<T>& z_tgt, T tau) {
    Tape<T> tape;
    return tape.value(tape.infonce(tape.constant(z_hat), tape.constant(z_tgt), tau))
        .v[0];
}

// State encoder f, action embedding, state-action encoder g, linear MDP
// predictor M, and a frozen target copy of f updated only by hard copy.
template <typename T>
class EncoderNets {
  public:
    EncoderNets(const EncoderDims& dims, uint64_t seed)
        : dims_(dims), grid_(dims.reward_bins) {
        dims_.validate();
        Rng root(seed);
        f_ = Mlp<T>::create(ps_, "f", f_spec(), root.substream("encoder.f"));
        embed_ = Mlp<T>::create(ps_, "embed", embed_spec(), root.substream("encoder.embed"));
        g_ = Mlp<T>::create(ps_, "g", g_spec(), root.substream("encoder.g"));
        m_ = Mlp<T>::create(ps_, "m", m_spec(), root.substream("encoder.m"));
        target_f_ = Mlp<T>::create(tgt_, "f", f_spec(), Rng(0));
        hard_update_target();
    }

    Mat<T> encode_state(const Mat<T>& s) const { return f_.forward(ps_, s); }

    Mat<T> encode_target(const Mat<T>& s) const { return target_f_.forward(tgt_, s); }

    Mat<T> encode_state_action(const Mat<T>& z_s, const Mat<T>& a) const {
        check_shape(z_s.rows == a.rows, "encode_state_action: row count mismatch");
        check_shape(z_s.cols == dims_.z_s_dim, "encode_state_action: z_s dim mismatch");
        const Mat<T> z_a = embed_.forward(ps_, a);
        return g_.forward(ps_, hcat(z_s, z_a));
    }

    std::pair<Mat<T>, Mat<T>> predict(const Mat<T>& z_sa) const {
        const Mat<T> y = m_.forward(ps_, z_sa);
        return {col_block(y, 0, dims_.reward_bins),
                col_block(y, dims_.reward_bins, dims_.reward_bins + dims_.z_s_dim)};
    }

    void hard_update_target() {
        for (size_t l = 0; l < f_.wi.size(); ++l) {
            tgt_.vals[target_f_.wi[l]].v = ps_.vals[f_.wi[l]].v;
            tgt_.vals[target_f_.bi[l]].v = ps_.vals[f_.bi[l]].v;
        }
    }

    EncoderLossTerms encoder_loss(const UnrollBatch<T>& batch, T lambda_r, T lambda_d,
                                  T lambda_m, T tau) const {
        return loss_impl(batch, lambda_r, lambda_d, lambda_m, tau, nullptr);
    }

    EncoderLossTerms encoder_loss_grads(const UnrollBatch<T>& batch, T lambda_r,
                                        T lambda_d, T lambda_m, T tau,
                                        std::vector<Mat<T>>& grads) const {
        return loss_impl(batch, lambda_r, lambda_d, lambda_m, tau, &grads);
    }

    // Tape-side forwards so downstream losses can optionally chain gradients
    // through the encoder. trainable=false pushes every parameter as a
    // constant (values still flow, gradients stop at the parameters).
    struct TapeCtx {
        typename Mlp<T>::TapeParams f, embed, g, m;
    };

    TapeCtx push_params(Tape<T>& tape, bool trainable) const {
        return {f_.push_params(tape, ps_, trainable),
                embed_.push_params(tape, ps_, trainable),
                g_.push_params(tape, ps_, trainable),
                m_.push_params(tape, ps_, trainable)};
    }

    typename Tape<T>::Ref encode_state_on_tape(Tape<T>& tape, const TapeCtx& ctx,
                                               typename Tape<T>::Ref s) const {
        return f_.forward_on_tape(tape, ctx.f, s);
    }

    typename Tape<T>::Ref encode_state_action_on_tape(Tape<T>& tape, const TapeCtx& ctx,
                                                      typename Tape<T>::Ref z_s,
                                                      typename Tape<T>::Ref a) const {
        auto z_a = embed_.forward_on_tape(tape, ctx.embed, a);
        return g_.forward_on_tape(tape, ctx.g, tape.concat_cols(z_s, z_a));
    }

    typename Tape<T>::Ref predict_on_tape(Tape<T>& tape, const TapeCtx& ctx,
                                          typename Tape<T>::Ref z_sa) const {
        return m_.forward_on_tape(tape, ctx.m, z_sa);
    }

    void collect_grads(const Tape<T>& tape, const TapeCtx& ctx,
                       std::vector<Mat<T>>& grads) const {
        f_.collect_grads(tape, ctx.f, grads);
        embed_.collect_grads(tape, ctx.embed, grads);
        g_.collect_grads(tape, ctx.g, grads);
        m_.collect_grads(tape, ctx.m, grads);
    }

    void save(Checkpoint& ck, const std::string& prefix) const {
        ck.put_store(prefix + "/online", ps_);
        ck.put_store(prefix + "/target", tgt_);
    }

    void load(const Checkpoint& ck, const std::string& prefix) {
        ck.get_store(prefix + "/online", ps_);
        ck.get_store(prefix + "/target", tgt_);
    }

    const EncoderDims& dims() const { return dims_; }
    const BinGrid& grid() const { return grid_; }
    ParamStore<T>& store() { return ps_; }
    const ParamStore<T>& store() const { return ps_; }
    const ParamStore<T>& target_store() const { return tgt_; }

  private:
    MlpSpec f_spec() const {
        return {dims_.state_dim, {dims_.hidden_dim, dims_.z_s_dim}, {Act::ELU, Act::ELU}};
    }
    MlpSpec embed_spec() const {
        return {dims_.action_dim, {dims_.z_a_dim}, {Act::ELU}};
    }
    MlpSpec g_spec() const {
        return {dims_.z_s_dim + dims_.z_a_dim,
                {dims_.hidden_dim, dims_.z_sa_dim},
                {Act::ELU, Act::ELU}};
    }
    MlpSpec m_spec() const {
        return {dims_.z_sa_dim, {dims_.reward_bins + dims_.z_s_dim}, {Act::Identity}};
    }

    static Mat<T> hcat(const Mat<T>& a, const Mat<T>& b) {
        check_shape(a.rows == b.rows, "hcat: row count mismatch");
        Mat<T> out(a.rows, a.cols + b.cols);
        for (int r = 0; r < a.rows; ++r) {
            std::copy(a.row(r), a.row(r) + a.cols, out.row(r));
            std::copy(b.row(r), b.row(r) + b.cols, out.row(r) + a.cols);
        }
        return out;
    }

    static Mat<T> col_block(const Mat<T>& x, int c0, int c1) {
        check_shape(0 <= c0 && c0 < c1 && c1 <= x.cols, "col_block: bad range");
        Mat<T> out(x.rows, c1 - c0);
        for (int r = 0; r < x.rows; ++r)
            std::copy(x.row(r) + c0, x.row(r) + c1, out.row(r));
        return out;
    }

    // Rows of src gathered by the first n entries of order.
    static Mat<T> gather_rows(const Mat<T>& src, const std::vector<int>& order, int n) {
        Mat<T> out(n, src.cols);
        for (int i = 0; i < n; ++i)
            std::copy(src.row(order[i]), src.row(order[i]) + src.cols, out.row(i));
        return out;
    }

    void validate_batch(const UnrollBatch<T>& b) const {
        if (b.batch < 1 || b.horizon < 1)
            throw input_error("encoder loss: empty batch or zero horizon");
        if (static_cast<int>(b.states.size()) != b.horizon + 1)
            throw shape_error("encoder loss: need horizon+1 state mats");
        if (static_cast<int>(b.actions.size()) != b.horizon)
            throw shape_error("encoder loss: need horizon action mats");
        for (const auto& s : b.states)
            check_shape(s.rows == b.batch && s.cols == dims_.state_dim,
                        "encoder loss: state mat shape mismatch");
        for (const auto& a : b.actions)
            check_shape(a.rows == b.batch && a.cols == dims_.action_dim,
                        "encoder loss: action mat shape mismatch");
        check_shape(b.rewards.rows == b.batch && b.rewards.cols == b.horizon,
                    "encoder loss: rewards shape mismatch");
        if (b.valid.size() != static_cast<size_t>(b.batch) * b.horizon)
            throw shape_error("encoder loss: valid mask size mismatch");
        for (int r = 0; r < b.batch; ++r)
            for (int t = 1; t < b.horizon; ++t)
                if (b.is_valid(r, t) && !b.is_valid(r, t - 1))
                    throw input_error("encoder loss: valid mask not prefix-closed");
    }

    // Unrolled three-term loss. Rows are permuted so the rows valid at step t
    // always form a leading prefix; each step then works on a sliced prefix
    // of the carried latent, and the predicted latent feeds the next step.
    EncoderLossTerms loss_impl(const UnrollBatch<T>& batch, T lambda_r, T lambda_d,
                               T lambda_m, T tau, std::vector<Mat<T>>* grads) const {
        if (!(tau > T(0))) throw config_error("encoder loss: tau must be positive");
        validate_batch(batch);

        std::vector<int> usable(batch.batch, 0);
        for (int r = 0; r < batch.batch; ++r) {
            int u = 0;
            while (u < batch.horizon && batch.is_valid(r, u)) ++u;
            usable[r] = u;
        }
        std::vector<int> order(batch.batch);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return usable[a] > usable[b]; });

        std::vector<int> n_at(batch.horizon + 1, 0); // n_at[t] rows valid at step t
        for (int t = 1; t <= batch.horizon; ++t)
            for (int r = 0; r < batch.batch; ++r)
                if (usable[r] >= t) ++n_at[t];
        const int rows = n_at[1];
        if (rows == 0) throw state_error("encoder loss: batch has no valid steps");
        int64_t total_n = 0;
        for (int t = 1; t <= batch.horizon; ++t) total_n += n_at[t];

        Tape<T> tape;
        const TapeCtx ctx = push_params(tape, grads != nullptr);

        std::vector<typename Tape<T>::Ref> terms;
        std::vector<T> coeffs;
        EncoderLossTerms out;
        out.rows = rows;
        out.valid_steps = total_n;

        auto z = encode_state_on_tape(tape, ctx,
                                      tape.constant(gather_rows(batch.states[0], order, rows)));
        for (int t = 1; t <= batch.horizon; ++t) {
            const int n = n_at[t];
            if (n == 0) break;
            if (tape.value(z).rows > n) z = tape.slice_rows(z, 0, n);
            auto a = tape.constant(gather_rows(batch.actions[t - 1], order, n));
            auto z_sa = encode_state_action_on_tape(tape, ctx, z, a);
            auto my = predict_on_tape(tape, ctx, z_sa);
            auto logits = tape.slice_cols(my, 0, dims_.reward_bins);
            auto z_hat = tape.slice_cols(my, dims_.reward_bins,
                                         dims_.reward_bins + dims_.z_s_dim);

            // Targets are plain values: the target encoder and the true
            // rewards never enter the gradient graph.
            auto z_tgt = tape.constant(encode_target(gather_rows(batch.states[t], order, n)));
            const T w = static_cast<T>(n) / static_cast<T>(total_n);

            if (lambda_r != T(0)) {
                std::vector<double> rs(n);
                for (int i = 0; i < n; ++i)
                    rs[i] = static_cast<double>(batch.rewards.at(order[i], t - 1));
                auto ce = tape.softmax_ce(logits, tape.constant(twohot_targets<T>(rs, grid_)));
                out.reward += static_cast<double>(w) * tape.value(ce).v[0];
                terms.push_back(ce);
                coeffs.push_back(lambda_r * w);
            }
            if (lambda_d != T(0)) {
                auto mse = tape.mse_mean(z_hat, z_tgt);
                out.dynamics += static_cast<double>(w) * tape.value(mse).v[0];
                terms.push_back(mse);
                coeffs.push_back(lambda_d * w);
            }
            if (lambda_m != T(0)) {
                auto nce = tape.infonce(z_hat, z_tgt, tau);
                out.infonce += static_cast<double>(w) * tape.value(nce).v[0];
                terms.push_back(nce);
                coeffs.push_back(lambda_m * w);
            }
            z = z_hat;
        }

        if (!terms.empty()) {
            auto loss = tape.weighted_sum(terms, coeffs);
            out.total = tape.value(loss).v[0];
            if (grads) {
                tape.backward(loss);
                *grads = zero_grads(ps_);
                collect_grads(tape, ctx, *grads);
            }
        } else if (grads) {
            *grads = zero_grads(ps_);
        }
        return out;
    }

    EncoderDims dims_;
    BinGrid grid_;
    ParamStore<T> ps_;  // f, embed, g, m
    ParamStore<T> tgt_; // target copy of f
    Mlp<T> f_, embed_, g_, m_, target_f_;
};

} // namespace drq
