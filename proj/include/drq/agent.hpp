#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "drq/checkpoint.hpp"
#include "drq/encoder.hpp"
#include "drq/nets.hpp"

namespace drq {

struct NoiseSpec {
    double exploration_sigma = 0.2;
    double smoothing_sigma = 0.2;
    double smoothing_clip = 0.3;

    void validate() const {
        if (exploration_sigma < 0 || smoothing_sigma < 0 || smoothing_clip < 0)
            throw config_error("noise spec: parameters must be nonnegative");
    }
};

struct AgentDims {
    int z_s_dim = 512;
    int z_sa_dim = 512;
    int action_dim = 0;
    int hidden_dim = 512;

    void validate() const {
        if (action_dim < 1) throw config_error("agent: action_dim must be >= 1");
        if (z_s_dim < 1 || z_sa_dim < 1 || hidden_dim < 1)
            throw config_error("agent: dims must be >= 1");
    }
};

enum class ActionMode { Explore, Exploit };

// Batch of multi-step target assembly units. Row r sums n_steps[r] rewards
// (1 <= n_steps[r] <= rewards.cols) and, unless the run ended on a true
// terminal (bootstrap[r] == 0), bootstraps from end_states row r at
// gamma^n_steps[r]. Columns of rewards beyond n_steps[r] are ignored.
template <typename T>
struct CriticBatch {
    Mat<T> states;                // [B, state_dim] s_0
    Mat<T> actions;               // [B, action_dim] a_0 (behavior action)
    Mat<T> rewards;               // [B, H_Q]
    std::vector<int> n_steps;     // per-row usable reward count
    std::vector<uint8_t> bootstrap;
    Mat<T> end_states;            // [B, state_dim] s_{n_steps[r]}
};

struct CriticLossResult {
    double loss = 0;
    std::vector<double> abs_td; // per row, max over the two critics
};

// TD3-style deterministic actor and clipped double critics over frozen
// per-step encoder latents, with hard-synchronized target copies.
template <typename T>
class AgentNets {
  public:
    AgentNets(const AgentDims& dims, const NoiseSpec& noise, uint64_t seed)
        : dims_(dims), noise_(noise) {
        dims_.validate();
        noise_.validate();
        Rng root(seed);
        actor_ = Mlp<T>::create(actor_ps_, "actor", actor_spec(), root.substream("agent.actor"));
        q1_ = Mlp<T>::create(critic_ps_, "q1", critic_spec(), root.substream("agent.q1"));
        q2_ = Mlp<T>::create(critic_ps_, "q2", critic_spec(), root.substream("agent.q2"));
        actor_t_ = Mlp<T>::create(actor_tgt_, "actor", actor_spec(), Rng(0));
        q1_t_ = Mlp<T>::create(critic_tgt_, "q1", critic_spec(), Rng(0));
        q2_t_ = Mlp<T>::create(critic_tgt_, "q2", critic_spec(), Rng(0));
        hard_update_targets();
    }

    // Behavior: target actor plus unclipped exploration noise, final clip to
    // [-1, 1]. Evaluation: live actor, deterministic.
    Mat<T> select_action(const EncoderNets<T>& enc, const Mat<T>& s, ActionMode mode,
                         Rng& rng) const {
        const Mat<T> z_s = enc.encode_state(s);
        if (mode == ActionMode::Exploit) return actor_.forward(actor_ps_, z_s);
        Mat<T> a = actor_t_.forward(actor_tgt_, z_s);
        for (auto& x : a.v) {
            x += static_cast<T>(rng.normal(0.0, noise_.exploration_sigma));
            x = std::clamp(x, T(-1), T(1));
        }
        return a;
    }

    // y = sum_{t<k} gamma^t r_t + gamma^k min_j Q'_j(g(z, a_pi)) with the
    // smoothing action a_pi = clip(pi'(z) + clip(psi, -c, c), -1, 1). The
    // bootstrap is dropped when the sequence ended on a terminal.
    T td_target(const EncoderNets<T>& enc, const std::vector<T>& rewards,
                const Mat<T>& end_state, bool bootstrap, T gamma, Rng& rng) const {
        if (rewards.empty()) throw input_error("td_target: empty reward slice");
        T y = T(0), disc = T(1);
        for (const T r : rewards) {
            y += disc * r;
            disc *= gamma;
        }
        if (!bootstrap) return y;
        if (end_state.rows != 1) throw input_error("td_target: end state must be one row");
        const Mat<T> z = enc.encode_state(end_state);
        Mat<T> a = actor_t_.forward(actor_tgt_, z);
        smooth_actions(a, rng);
        const Mat<T> z_sa = enc.encode_state_action(z, a);
        const Mat<T> q1 = q1_t_.forward(critic_tgt_, z_sa);
        const Mat<T> q2 = q2_t_.forward(critic_tgt_, z_sa);
        return y + disc * std::min(q1.at(0, 0), q2.at(0, 0));
    }

    // Mean over batch and both critics of Huber(Q_i(z_{s0 a0}) - y) with
    // threshold 1. Targets and, by default, the latent inputs are
    // gradient-free; encoder_grads routes critic gradients into the encoder
    // parameters instead (grads parallel to the encoder store).
    CriticLossResult critic_loss(const EncoderNets<T>& enc, const CriticBatch<T>& batch,
                                 T gamma, Rng& rng) const {
        return critic_impl(enc, batch, gamma, rng, nullptr, nullptr);
    }

    CriticLossResult critic_loss_grads(const EncoderNets<T>& enc,
                                       const CriticBatch<T>& batch, T gamma, Rng& rng,
                                       std::vector<Mat<T>>& grads,
                                       std::vector<Mat<T>>* encoder_grads = nullptr) const {
        return critic_impl(enc, batch, gamma, rng, &grads, encoder_grads);
    }

    // L = -(1/2) mean_batch (Q1 + Q2)(g(z_s, pi(z_s))); gradients reach the
    // actor parameters only.
    double actor_loss(const EncoderNets<T>& enc, const Mat<T>& states) const {
        return actor_impl(enc, states, nullptr);
    }

    double actor_loss_grads(const EncoderNets<T>& enc, const Mat<T>& states,
                            std::vector<Mat<T>>& grads) const {
        return actor_impl(enc, states, &grads);
    }

    void hard_update_targets() {
        actor_tgt_.copy_values_from(actor_ps_);
        critic_tgt_.copy_values_from(critic_ps_);
    }

    void save(Checkpoint& ck, const std::string& prefix) const {
        ck.put_store(prefix + "/actor", actor_ps_);
        ck.put_store(prefix + "/critic", critic_ps_);
        ck.put_store(prefix + "/actor_target", actor_tgt_);
        ck.put_store(prefix + "/critic_target", critic_tgt_);
    }

    void load(const Checkpoint& ck, const std::string& prefix) {
        ck.get_store(prefix + "/actor", actor_ps_);
        ck.get_store(prefix + "/critic", critic_ps_);
        ck.get_store(prefix + "/actor_target", actor_tgt_);
        ck.get_store(prefix + "/critic_target", critic_tgt_);
    }

    const AgentDims& dims() const { return dims_; }
    const NoiseSpec& noise() const { return noise_; }
    ParamStore<T>& actor_store() { return actor_ps_; }
    const ParamStore<T>& actor_store() const { return actor_ps_; }
    ParamStore<T>& critic_store() { return critic_ps_; }
    const ParamStore<T>& critic_store() const { return critic_ps_; }
    const ParamStore<T>& actor_target_store() const { return actor_tgt_; }
    const ParamStore<T>& critic_target_store() const { return critic_tgt_; }

    // Q values of explicit latent pairs (diagnostics/tests).
    std::pair<Mat<T>, Mat<T>> q_values(const Mat<T>& z_sa) const {
        return {q1_.forward(critic_ps_, z_sa), q2_.forward(critic_ps_, z_sa)};
    }
    std::pair<Mat<T>, Mat<T>> target_q_values(const Mat<T>& z_sa) const {
        return {q1_t_.forward(critic_tgt_, z_sa), q2_t_.forward(critic_tgt_, z_sa)};
    }
    Mat<T> actor_forward(const Mat<T>& z_s) const { return actor_.forward(actor_ps_, z_s); }
    Mat<T> target_actor_forward(const Mat<T>& z_s) const {
        return actor_t_.forward(actor_tgt_, z_s);
    }

  private:
    MlpSpec actor_spec() const {
        return {dims_.z_s_dim, {dims_.hidden_dim, dims_.action_dim}, {Act::ReLU, Act::Tanh}};
    }
    MlpSpec critic_spec() const {
        return {dims_.z_sa_dim, {dims_.hidden_dim, 1}, {Act::ELU, Act::Identity}};
    }

    void smooth_actions(Mat<T>& a, Rng& rng) const {
        const T c = static_cast<T>(noise_.smoothing_clip);
        for (auto& x : a.v) {
            const T psi = static_cast<T>(rng.normal(0.0, noise_.smoothing_sigma));
            x += std::clamp(psi, -c, c);
            x = std::clamp(x, T(-1), T(1));
        }
    }

    void validate_critic_batch(const CriticBatch<T>& b) const {
        const int rows = b.states.rows;
        if (rows < 1) throw input_error("critic batch: empty");
        check_shape(b.actions.rows == rows && b.rewards.rows == rows &&
                        b.end_states.rows == rows,
                    "critic batch: row count mismatch");
        check_shape(b.states.cols == b.end_states.cols, "critic batch: state dim mismatch");
        if (b.n_steps.size() != static_cast<size_t>(rows) ||
            b.bootstrap.size() != static_cast<size_t>(rows))
            throw shape_error("critic batch: per-row metadata size mismatch");
        for (int r = 0; r < rows; ++r)
            if (b.n_steps[r] < 1 || b.n_steps[r] > b.rewards.cols)
                throw input_error("critic batch: n_steps out of range");
    }

    CriticLossResult critic_impl(const EncoderNets<T>& enc, const CriticBatch<T>& batch,
                                 T gamma, Rng& rng, std::vector<Mat<T>>* grads,
                                 std::vector<Mat<T>>* encoder_grads) const {
        validate_critic_batch(batch);
        const int rows = batch.states.rows;

        // Target side, fully outside the tape: smoothing action from the
        // target actor, bootstrap from min of the target critics.
        const Mat<T> z_end = enc.encode_state(batch.end_states);
        Mat<T> a_smooth = actor_t_.forward(actor_tgt_, z_end);
        smooth_actions(a_smooth, rng);
        const Mat<T> z_sa_end = enc.encode_state_action(z_end, a_smooth);
        const Mat<T> q1t = q1_t_.forward(critic_tgt_, z_sa_end);
        const Mat<T> q2t = q2_t_.forward(critic_tgt_, z_sa_end);

        Mat<T> y(rows, 1);
        for (int r = 0; r < rows; ++r) {
            T acc = T(0), disc = T(1);
            for (int t = 0; t < batch.n_steps[r]; ++t) {
                acc += disc * batch.rewards.at(r, t);
                disc *= gamma;
            }
            if (batch.bootstrap[r])
                acc += disc * std::min(q1t.at(r, 0), q2t.at(r, 0));
            y.at(r, 0) = acc;
        }

        Tape<T> tape;
        const bool through_encoder = encoder_grads != nullptr;
        typename Tape<T>::Ref z_sa0;
        typename EncoderNets<T>::TapeCtx ectx;
        if (through_encoder) {
            ectx = enc.push_params(tape, true);
            auto z0 = enc.encode_state_on_tape(tape, ectx, tape.constant(batch.states));
            z_sa0 = enc.encode_state_action_on_tape(tape, ectx, z0,
                                                    tape.constant(batch.actions));
        } else {
            z_sa0 = tape.constant(
                enc.encode_state_action(enc.encode_state(batch.states), batch.actions));
        }

        const bool train = grads != nullptr;
        auto q1p = q1_.push_params(tape, critic_ps_, train);
        auto q2p = q2_.push_params(tape, critic_ps_, train);
        auto q1v = q1_.forward_on_tape(tape, q1p, z_sa0);
        auto q2v = q2_.forward_on_tape(tape, q2p, z_sa0);
        auto y_ref = tape.constant(y);
        auto h1 = tape.huber_mean(q1v, y_ref, T(1));
        auto h2 = tape.huber_mean(q2v, y_ref, T(1));
        auto loss = tape.weighted_sum({h1, h2}, {T(0.5), T(0.5)});

        CriticLossResult out;
        out.loss = tape.value(loss).v[0];
        out.abs_td.resize(rows);
        const Mat<T>& q1m = tape.value(q1v);
        const Mat<T>& q2m = tape.value(q2v);
        for (int r = 0; r < rows; ++r)
            out.abs_td[r] = std::max(std::abs(static_cast<double>(q1m.at(r, 0) - y.at(r, 0))),
                                     std::abs(static_cast<double>(q2m.at(r, 0) - y.at(r, 0))));

        if (train) {
            tape.backward(loss);
            *grads = zero_grads(critic_ps_);
            q1_.collect_grads(tape, q1p, *grads);
            q2_.collect_grads(tape, q2p, *grads);
            if (through_encoder) {
                *encoder_grads = zero_grads(enc.store());
                enc.collect_grads(tape, ectx, *encoder_grads);
            }
        }
        return out;
    }

    double actor_impl(const EncoderNets<T>& enc, const Mat<T>& states,
                      std::vector<Mat<T>>* grads) const {
        if (states.rows < 1) throw input_error("actor batch: empty");
        const Mat<T> z_s = enc.encode_state(states);

        Tape<T> tape;
        const bool train = grads != nullptr;
        auto ap = actor_.push_params(tape, actor_ps_, train);
        // Encoder and critic parameters enter as constants: values flow
        // through g and Q so the chain reaches the action, but their
        // parameters hold no gradient.
        auto ectx = enc.push_params(tape, false);
        auto q1p = q1_.push_params(tape, critic_ps_, false);
        auto q2p = q2_.push_params(tape, critic_ps_, false);

        auto z_ref = tape.constant(z_s);
        auto a_pi = actor_.forward_on_tape(tape, ap, z_ref);
        auto z_sa = enc.encode_state_action_on_tape(tape, ectx, z_ref, a_pi);
        auto q1v = q1_.forward_on_tape(tape, q1p, z_sa);
        auto q2v = q2_.forward_on_tape(tape, q2p, z_sa);
        auto loss = tape.weighted_sum({tape.mean_all(q1v), tape.mean_all(q2v)},
                                      {T(-0.5), T(-0.5)});
        if (train) {
            tape.backward(loss);
            *grads = zero_grads(actor_ps_);
            actor_.collect_grads(tape, ap, *grads);
        }
        return tape.value(loss).v[0];
    }

    AgentDims dims_;
    NoiseSpec noise_;
    ParamStore<T> actor_ps_, critic_ps_;   // separate optimizer groups
    ParamStore<T> actor_tgt_, critic_tgt_; // target copies, matching layouts
    Mlp<T> actor_, q1_, q2_, actor_t_, q1_t_, q2_t_;
};

} // namespace drq
