#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "drq/agent.hpp"
#include "drq/encoder.hpp"
#include "drq/envs.hpp"
#include "drq/replay.hpp"

namespace drq {

// Full run configuration. Field initializers are the fixed defaults shared
// across tasks; a config file overrides values explicitly and unknown keys
// are rejected.
struct TrainConfig {
    // run plumbing
    std::string env_name = "PointMass2D";
    int64_t total_steps = 30000;
    int64_t eval_every = 1000;
    int eval_episodes = 10;
    uint64_t seed = 0;
    std::string out_dir;
    int64_t log_every = 1000;

    // core loop
    double gamma = 0.99;
    int buffer_capacity = 1000000;
    int batch_size = 256;
    int target_update_rate = 250; // hard sync cadence and encoder burst length
    int replay_ratio = 1;
    int64_t exploration_steps = 10000;

    // noise
    double exploration_sigma = 0.2;
    double smoothing_sigma = 0.2;
    double smoothing_clip = 0.3;

    // replay prioritization
    double per_alpha = 0.4;
    double min_priority = 1.0;
    double eps = 1e-4;    // recency forgetting rate
    double eps_low = 0.1; // decay-weight floor

    // encoder
    double encoder_lr = 3e-4;
    double encoder_weight_decay = 0.01;
    int z_s_dim = 512;
    int z_sa_dim = 512;
    int z_a_dim = 256;
    int enc_hidden_dim = 750;
    int reward_bins = 65;
    int horizon = 5; // unroll length H
    double lambda_d = 1.0;
    double lambda_r = 0.1;
    double lambda_m = 0.1;
    double tau = 0.1; // InfoNCE temperature

    // actor-critic
    double actor_lr = 3e-4;
    double critic_lr = 3e-4;
    int agent_hidden_dim = 512;
    int q_horizon = 3; // multi-step target length

    // optimizer
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // ablation switches
    bool no_infonce = false;
    bool lap_only = false;
    bool forget_only = false;
    bool no_dyn_loss = false;
    bool mrq_baseline = false;

    // optional: route critic gradients into the encoder (off by default; the
    // encoder trains on its own unrolled loss only)
    bool critic_grads_encoder = false;

    void validate() const;
    void apply_ablation(const std::string& variant);

    double effective_lambda_m() const {
        return (no_infonce || mrq_baseline) ? 0.0 : lambda_m;
    }
    double effective_lambda_d() const { return no_dyn_loss ? 0.0 : lambda_d; }
    double effective_eps() const { return (lap_only || mrq_baseline) ? 0.0 : eps; }
    bool pinned_priorities() const { return forget_only; }

    std::string to_json() const;
    // Fail-closed: any key not named above is a configuration error.
    static TrainConfig from_json(const std::string& text);
    static TrainConfig from_json_file(const std::string& path);
};

struct EvalResult {
    double mean = 0.0;
    double half_width = 0.0; // 1.96 * sample sigma / sqrt(n); 0 when n < 2
    int episodes = 0;
    double success_rate = 0.0; // fraction of episodes with return > 0
    std::vector<double> returns;
};

// Greedy (deterministic-actor) rollouts; per-episode env seeds derive from
// seed alone, so evaluation consumes no training randomness.
EvalResult evaluate(const EncoderNets<float>& enc, const AgentNets<float>& agent,
                    const std::string& env_name, int episodes, uint64_t seed);

// Loads the embedded config and network weights; no buffer state is needed.
EvalResult evaluate_checkpoint(const std::string& ckpt_path, int episodes,
                               uint64_t seed, const std::string& env_override = "");

struct StepCounters {
    int64_t env_steps = 0;
    int64_t critic_steps = 0;
    int64_t actor_steps = 0;
    int64_t encoder_steps = 0;
    int64_t target_syncs = 0;
    int64_t episodes = 0;
};

// Orchestrates the training loop: uniform-random warm-up, then per step one
// behavior action + store, hard target sync followed by an encoder burst
// every target_update_rate steps, and one critic + one actor update per step
// with same-step priority refresh.
class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    // One environment step including any scheduled gradient updates.
    void step();

    // Advances to target_steps, writing one JSONL metrics row per log_every
    // steps (and evaluation fields every eval_every steps) to metrics if
    // non-null. target_steps beyond total_steps is an input error.
    void run_until(int64_t target_steps, std::ostream* metrics);

    // Full run: metrics.jsonl, summary.json, and checkpoint_final.ck under
    // out_dir (no files if out_dir is empty). Returns the final evaluation.
    EvalResult run();

    void save_checkpoint(const std::string& path) const;
    void restore(const std::string& path); // config must match the embedded one
    static std::unique_ptr<Trainer> from_checkpoint(const std::string& path);

    EvalResult evaluate_now(int episodes, uint64_t seed) const;

    const TrainConfig& config() const { return cfg_; }
    const StepCounters& counters() const { return counters_; }
    int64_t env_steps() const { return counters_.env_steps; }
    FadedBuffer& buffer() { return buffer_; }
    const FadedBuffer& buffer() const { return buffer_; }
    EncoderNets<float>& encoder() { return enc_; }
    AgentNets<float>& agent() { return agent_; }
    const EncoderNets<float>& encoder() const { return enc_; }
    const AgentNets<float>& agent() const { return agent_; }

  private:
    void encoder_step();
    void critic_actor_step();
    UnrollBatch<float> assemble_unroll(const std::vector<FadedBuffer::SeqRef>& refs) const;
    CriticBatch<float> assemble_critic(const std::vector<FadedBuffer::SeqRef>& refs) const;
    std::string metrics_row(bool with_eval);
    uint64_t eval_seed_at(int64_t step) const;

    TrainConfig cfg_;
    std::unique_ptr<Env> env_;
    FadedBuffer buffer_;
    EncoderNets<float> enc_;
    AgentNets<float> agent_;
    Rng env_rng_, action_rng_, replay_rng_, td_rng_;
    StepCounters counters_;

    std::vector<float> obs_;
    double ep_return_ = 0.0;
    int64_t ep_len_ = 0;
    double last_ep_return_ = 0.0;
    bool has_last_ep_ = false;

    EvalResult last_eval_;
    bool has_eval_ = false;

    // per-window accumulators, reset after each metrics row
    double win_critic_loss_ = 0.0, win_actor_loss_ = 0.0;
    double win_enc_total_ = 0.0, win_enc_r_ = 0.0, win_enc_d_ = 0.0, win_enc_i_ = 0.0;
    double win_abs_td_ = 0.0;
    int64_t win_critic_n_ = 0, win_actor_n_ = 0, win_enc_n_ = 0;
    int64_t win_td_rows_ = 0;
};

} // namespace drq
