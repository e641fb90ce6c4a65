#include "drq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "drq/checkpoint.hpp"

namespace drq {

using nlohmann::json;

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { throw config_error("config: " + what); };
    if (env_name != "PointMass2D" && env_name != "PendulumSwingUp" &&
        env_name != "SparseGoal2D")
        bad("unknown env_name " + env_name);
    if (total_steps < 0) bad("total_steps must be >= 0");
    if (eval_every < 1) bad("eval_every must be >= 1");
    if (eval_episodes < 1) bad("eval_episodes must be >= 1");
    if (log_every < 1) bad("log_every must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) bad("gamma must be in (0, 1]");
    if (buffer_capacity < 1) bad("buffer_capacity must be >= 1");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (target_update_rate < 1) bad("target_update_rate must be >= 1");
    if (replay_ratio < 1) bad("replay_ratio must be >= 1");
    if (exploration_steps < 0) bad("exploration_steps must be >= 0");
    if (exploration_sigma < 0.0) bad("exploration_sigma must be >= 0");
    if (smoothing_sigma < 0.0) bad("smoothing_sigma must be >= 0");
    if (smoothing_clip < 0.0) bad("smoothing_clip must be >= 0");
    if (!(per_alpha > 0.0)) bad("per_alpha must be > 0");
    if (!(min_priority > 0.0)) bad("min_priority must be > 0");
    if (!(eps >= 0.0 && eps < 1.0)) bad("eps must be in [0, 1)");
    if (!(eps_low > 0.0 && eps_low <= 1.0)) bad("eps_low must be in (0, 1]");
    if (!(encoder_lr > 0.0)) bad("encoder_lr must be > 0");
    if (encoder_weight_decay < 0.0) bad("encoder_weight_decay must be >= 0");
    if (z_s_dim < 1 || z_sa_dim < 1 || z_a_dim < 1 || enc_hidden_dim < 1)
        bad("encoder dims must be >= 1");
    if (reward_bins < 2) bad("reward_bins must be >= 2");
    if (horizon < 1) bad("horizon must be >= 1");
    if (lambda_d < 0.0 || lambda_r < 0.0 || lambda_m < 0.0)
        bad("loss weights must be >= 0");
    if (!(tau > 0.0)) bad("tau must be > 0");
    if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) bad("actor/critic lr must be > 0");
    if (agent_hidden_dim < 1) bad("agent_hidden_dim must be >= 1");
    if (q_horizon < 1) bad("q_horizon must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("adam_beta2 must be in [0, 1)");
    if (!(adam_eps > 0.0)) bad("adam_eps must be > 0");
}

void TrainConfig::apply_ablation(const std::string& variant) {
    if (variant.empty()) return;
    if (variant == "no_infonce")
        no_infonce = true;
    else if (variant == "lap_only")
        lap_only = true;
    else if (variant == "forget_only")
        forget_only = true;
    else if (variant == "no_dyn_loss")
        no_dyn_loss = true;
    else if (variant == "mrq_baseline")
        mrq_baseline = true;
    else
        throw config_error("unknown ablation variant: " + variant);
}

namespace {

// Single source of truth for the JSON schema: one visitor applied to every
// field keeps to_json and the fail-closed from_json in lockstep.
template <typename F>
void for_each_field(TrainConfig& c, F&& f) {
    f("env_name", c.env_name);
    f("total_steps", c.total_steps);
    f("eval_every", c.eval_every);
    f("eval_episodes", c.eval_episodes);
    f("seed", c.seed);
    f("out_dir", c.out_dir);
    f("log_every", c.log_every);
    f("gamma", c.gamma);
    f("buffer_capacity", c.buffer_capacity);
    f("batch_size", c.batch_size);
    f("target_update_rate", c.target_update_rate);
    f("replay_ratio", c.replay_ratio);
    f("exploration_steps", c.exploration_steps);
    f("exploration_sigma", c.exploration_sigma);
    f("smoothing_sigma", c.smoothing_sigma);
    f("smoothing_clip", c.smoothing_clip);
    f("per_alpha", c.per_alpha);
    f("min_priority", c.min_priority);
    f("eps", c.eps);
    f("eps_low", c.eps_low);
    f("encoder_lr", c.encoder_lr);
    f("encoder_weight_decay", c.encoder_weight_decay);
    f("z_s_dim", c.z_s_dim);
    f("z_sa_dim", c.z_sa_dim);
    f("z_a_dim", c.z_a_dim);
    f("enc_hidden_dim", c.enc_hidden_dim);
    f("reward_bins", c.reward_bins);
    f("horizon", c.horizon);
    f("lambda_d", c.lambda_d);
    f("lambda_r", c.lambda_r);
    f("lambda_m", c.lambda_m);
    f("tau", c.tau);
    f("actor_lr", c.actor_lr);
    f("critic_lr", c.critic_lr);
    f("agent_hidden_dim", c.agent_hidden_dim);
    f("q_horizon", c.q_horizon);
    f("adam_beta1", c.adam_beta1);
    f("adam_beta2", c.adam_beta2);
    f("adam_eps", c.adam_eps);
    f("no_infonce", c.no_infonce);
    f("lap_only", c.lap_only);
    f("forget_only", c.forget_only);
    f("no_dyn_loss", c.no_dyn_loss);
    f("mrq_baseline", c.mrq_baseline);
    f("critic_grads_encoder", c.critic_grads_encoder);
}

} // namespace

std::string TrainConfig::to_json() const {
    json j = json::object();
    for_each_field(const_cast<TrainConfig&>(*this),
                   [&](const char* key, auto& field) { j[key] = field; });
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config: top level must be an object");
    TrainConfig c;
    std::vector<std::string> known;
    for_each_field(c, [&](const char* key, auto& field) {
        known.emplace_back(key);
        auto it = j.find(key);
        if (it == j.end()) return;
        try {
            field = it->get<std::decay_t<decltype(field)>>();
        } catch (const json::exception&) {
            throw config_error(std::string("config: bad value type for key ") + key);
        }
    });
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw config_error("config: unknown key " + it.key());
    return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json(ss.str());
}

// ---------------------------------------------------------------------------

namespace {

Mat<float> row_mat(const std::vector<float>& v) {
    Mat<float> m(1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

} // namespace

EvalResult evaluate(const EncoderNets<float>& enc, const AgentNets<float>& agent,
                    const std::string& env_name, int episodes, uint64_t seed) {
    if (episodes < 1) throw config_error("evaluate: episodes must be >= 1");
    auto env = make_env(env_name);
    if (env->spec().state_dim != enc.dims().state_dim ||
        env->spec().action_dim != enc.dims().action_dim)
        throw config_error("evaluate: env dims do not match the networks");
    Rng seeder(seed);
    Rng unused(0); // exploit mode draws nothing
    EvalResult out;
    out.episodes = episodes;
    for (int ep = 0; ep < episodes; ++ep) {
        std::vector<float> obs = env->reset(seeder.next_u64());
        double ret = 0.0;
        while (true) {
            const Mat<float> a =
                agent.select_action(enc, row_mat(obs), ActionMode::Exploit, unused);
            auto res = env->step(std::vector<float>(a.v.begin(), a.v.end()));
            ret += res.reward;
            obs = res.obs;
            if (res.done) break;
        }
        out.returns.push_back(ret);
    }
    double sum = 0.0;
    for (double r : out.returns) sum += r;
    out.mean = sum / episodes;
    if (episodes >= 2) {
        double ss = 0.0;
        for (double r : out.returns) ss += (r - out.mean) * (r - out.mean);
        const double sigma = std::sqrt(ss / (episodes - 1));
        out.half_width = 1.96 * sigma / std::sqrt(static_cast<double>(episodes));
    }
    int succ = 0;
    for (double r : out.returns)
        if (r > 0.0) ++succ;
    out.success_rate = static_cast<double>(succ) / episodes;
    return out;
}

EvalResult evaluate_checkpoint(const std::string& ckpt_path, int episodes,
                               uint64_t seed, const std::string& env_override) {
    const Checkpoint ck = Checkpoint::load(ckpt_path);
    TrainConfig cfg = TrainConfig::from_json(ck.get_text("config"));
    if (!env_override.empty()) cfg.env_name = env_override;
    cfg.validate();
    auto env_spec = make_env(cfg.env_name)->spec();
    EncoderDims ed;
    ed.state_dim = env_spec.state_dim;
    ed.action_dim = env_spec.action_dim;
    ed.z_s_dim = cfg.z_s_dim;
    ed.z_sa_dim = cfg.z_sa_dim;
    ed.z_a_dim = cfg.z_a_dim;
    ed.hidden_dim = cfg.enc_hidden_dim;
    ed.reward_bins = cfg.reward_bins;
    EncoderNets<float> enc(ed, 0);
    AgentDims ad{cfg.z_s_dim, cfg.z_sa_dim, env_spec.action_dim, cfg.agent_hidden_dim};
    NoiseSpec ns{cfg.exploration_sigma, cfg.smoothing_sigma, cfg.smoothing_clip};
    AgentNets<float> agent(ad, ns, 0);
    enc.load(ck, "enc");
    agent.load(ck, "agent");
    return evaluate(enc, agent, cfg.env_name, episodes, seed);
}

// ---------------------------------------------------------------------------

namespace {

EncoderDims encoder_dims_of(const TrainConfig& cfg, const EnvSpec& spec) {
    EncoderDims d;
    d.state_dim = spec.state_dim;
    d.action_dim = spec.action_dim;
    d.z_s_dim = cfg.z_s_dim;
    d.z_sa_dim = cfg.z_sa_dim;
    d.z_a_dim = cfg.z_a_dim;
    d.hidden_dim = cfg.enc_hidden_dim;
    d.reward_bins = cfg.reward_bins;
    return d;
}

FadedConfig buffer_config_of(const TrainConfig& cfg, const EnvSpec& spec) {
    FadedConfig f;
    f.capacity = cfg.buffer_capacity;
    f.state_dim = spec.state_dim;
    f.action_dim = spec.action_dim;
    f.alpha = cfg.per_alpha;
    f.eps = cfg.effective_eps();
    f.eps_low = cfg.eps_low;
    f.min_priority = cfg.min_priority;
    f.pin_priorities = cfg.pinned_priorities();
    return f;
}

} // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      env_(make_env(cfg.env_name)),
      buffer_(buffer_config_of(cfg, env_->spec())),
      enc_(encoder_dims_of(cfg, env_->spec()),
           Rng(cfg.seed).substream("init.encoder").next_u64()),
      agent_(AgentDims{cfg.z_s_dim, cfg.z_sa_dim, env_->spec().action_dim,
                       cfg.agent_hidden_dim},
             NoiseSpec{cfg.exploration_sigma, cfg.smoothing_sigma, cfg.smoothing_clip},
             Rng(cfg.seed).substream("init.agent").next_u64()),
      env_rng_(Rng(cfg.seed).substream("env")),
      action_rng_(Rng(cfg.seed).substream("action-noise")),
      replay_rng_(Rng(cfg.seed).substream("buffer")),
      td_rng_(Rng(cfg.seed).substream("td-noise")) {
    obs_ = env_->reset(env_rng_.next_u64());
}

void Trainer::step() {
    const int64_t t = counters_.env_steps + 1;
    const int action_dim = env_->spec().action_dim;

    std::vector<float> action(action_dim);
    if (t <= cfg_.exploration_steps) {
        for (auto& x : action)
            x = static_cast<float>(action_rng_.uniform(-1.0, 1.0));
    } else {
        const Mat<float> a =
            agent_.select_action(enc_, row_mat(obs_), ActionMode::Explore, action_rng_);
        std::copy(a.v.begin(), a.v.end(), action.begin());
    }

    auto res = env_->step(action);
    buffer_.push({obs_, action, res.reward, res.obs, res.done, res.truncated});
    ep_return_ += res.reward;
    ep_len_ += 1;
    obs_ = res.obs;
    if (res.done) {
        last_ep_return_ = ep_return_;
        has_last_ep_ = true;
        counters_.episodes += 1;
        ep_return_ = 0.0;
        ep_len_ = 0;
        obs_ = env_->reset(env_rng_.next_u64());
    }
    counters_.env_steps = t;

    if (t <= cfg_.exploration_steps) return;

    if (t % cfg_.target_update_rate == 0) {
        enc_.hard_update_target();
        agent_.hard_update_targets();
        counters_.target_syncs += 1;
        for (int k = 0; k < cfg_.target_update_rate; ++k) encoder_step();
    }
    for (int u = 0; u < cfg_.replay_ratio; ++u) critic_actor_step();
}

UnrollBatch<float> Trainer::assemble_unroll(
    const std::vector<FadedBuffer::SeqRef>& refs) const {
    const int B = static_cast<int>(refs.size());
    const int H = cfg_.horizon;
    const int sd = env_->spec().state_dim;
    const int ad = env_->spec().action_dim;
    UnrollBatch<float> b;
    b.batch = B;
    b.horizon = H;
    b.states.assign(H + 1, Mat<float>(B, sd));
    b.actions.assign(H, Mat<float>(B, ad));
    b.rewards = Mat<float>(B, H);
    b.valid.assign(static_cast<size_t>(B) * H, 0);
    for (int r = 0; r < B; ++r) {
        const auto& ref = refs[r];
        std::copy_n(buffer_.state(ref.start), sd, b.states[0].row(r));
        for (int tt = 0; tt < ref.usable; ++tt) {
            const uint64_t idx = ref.start + tt;
            std::copy_n(buffer_.action(idx), ad, b.actions[tt].row(r));
            std::copy_n(buffer_.next_state(idx), sd, b.states[tt + 1].row(r));
            b.rewards.at(r, tt) = buffer_.reward(idx);
            b.valid[static_cast<size_t>(r) * H + tt] = 1;
        }
    }
    return b;
}

CriticBatch<float> Trainer::assemble_critic(
    const std::vector<FadedBuffer::SeqRef>& refs) const {
    const int B = static_cast<int>(refs.size());
    const int H = cfg_.q_horizon;
    const int sd = env_->spec().state_dim;
    const int ad = env_->spec().action_dim;
    CriticBatch<float> b;
    b.states = Mat<float>(B, sd);
    b.actions = Mat<float>(B, ad);
    b.rewards = Mat<float>(B, H);
    b.n_steps.assign(B, 0);
    b.bootstrap.assign(B, 0);
    b.end_states = Mat<float>(B, sd);
    for (int r = 0; r < B; ++r) {
        const auto& ref = refs[r];
        std::copy_n(buffer_.state(ref.start), sd, b.states.row(r));
        std::copy_n(buffer_.action(ref.start), ad, b.actions.row(r));
        for (int tt = 0; tt < ref.usable; ++tt)
            b.rewards.at(r, tt) = buffer_.reward(ref.start + tt);
        b.n_steps[r] = ref.usable;
        b.bootstrap[r] = ref.terminal ? 0 : 1;
        std::copy_n(buffer_.next_state(ref.start + ref.usable - 1), sd,
                    b.end_states.row(r));
    }
    return b;
}

void Trainer::encoder_step() {
    const auto refs = buffer_.sample_sequences(cfg_.batch_size, cfg_.horizon, replay_rng_);
    const UnrollBatch<float> batch = assemble_unroll(refs);
    std::vector<Mat<float>> grads;
    const EncoderLossTerms terms = enc_.encoder_loss_grads(
        batch, static_cast<float>(cfg_.lambda_r),
        static_cast<float>(cfg_.effective_lambda_d()),
        static_cast<float>(cfg_.effective_lambda_m()), static_cast<float>(cfg_.tau),
        grads);
    adamw_step(enc_.store(), grads, static_cast<float>(cfg_.encoder_lr),
               static_cast<float>(cfg_.encoder_weight_decay),
               static_cast<float>(cfg_.adam_beta1), static_cast<float>(cfg_.adam_beta2),
               static_cast<float>(cfg_.adam_eps));
    counters_.encoder_steps += 1;
    win_enc_total_ += terms.total;
    win_enc_r_ += terms.reward;
    win_enc_d_ += terms.dynamics;
    win_enc_i_ += terms.infonce;
    win_enc_n_ += 1;
}

void Trainer::critic_actor_step() {
    const auto refs = buffer_.sample_sequences(cfg_.batch_size, cfg_.q_horizon, replay_rng_);
    const CriticBatch<float> batch = assemble_critic(refs);

    std::vector<Mat<float>> cgrads;
    std::vector<Mat<float>> egrads;
    const CriticLossResult res = agent_.critic_loss_grads(
        enc_, batch, static_cast<float>(cfg_.gamma), td_rng_, cgrads,
        cfg_.critic_grads_encoder ? &egrads : nullptr);
    adamw_step(agent_.critic_store(), cgrads, static_cast<float>(cfg_.critic_lr), 0.0f,
               static_cast<float>(cfg_.adam_beta1), static_cast<float>(cfg_.adam_beta2),
               static_cast<float>(cfg_.adam_eps));
    if (cfg_.critic_grads_encoder)
        adamw_step(enc_.store(), egrads, static_cast<float>(cfg_.encoder_lr),
                   static_cast<float>(cfg_.encoder_weight_decay),
                   static_cast<float>(cfg_.adam_beta1),
                   static_cast<float>(cfg_.adam_beta2),
                   static_cast<float>(cfg_.adam_eps));
    counters_.critic_steps += 1;

    std::vector<uint64_t> indices(refs.size());
    for (size_t i = 0; i < refs.size(); ++i) indices[i] = refs[i].start;
    buffer_.update_priorities(indices, res.abs_td, cfg_.per_alpha);

    std::vector<Mat<float>> agrads;
    const double aloss = agent_.actor_loss_grads(enc_, batch.states, agrads);
    adamw_step(agent_.actor_store(), agrads, static_cast<float>(cfg_.actor_lr), 0.0f,
               static_cast<float>(cfg_.adam_beta1), static_cast<float>(cfg_.adam_beta2),
               static_cast<float>(cfg_.adam_eps));
    counters_.actor_steps += 1;

    win_critic_loss_ += res.loss;
    win_actor_loss_ += aloss;
    win_critic_n_ += 1;
    win_actor_n_ += 1;
    for (double d : res.abs_td) win_abs_td_ += d;
    win_td_rows_ += static_cast<int64_t>(res.abs_td.size());
}

uint64_t Trainer::eval_seed_at(int64_t step) const {
    return Rng(cfg_.seed)
        .substream("eval")
        .substream(static_cast<uint64_t>(step / cfg_.eval_every))
        .next_u64();
}

EvalResult Trainer::evaluate_now(int episodes, uint64_t seed) const {
    return evaluate(enc_, agent_, cfg_.env_name, episodes, seed);
}

std::string Trainer::metrics_row(bool with_eval) {
    json j;
    j["step"] = counters_.env_steps;
    j["buffer_size"] = buffer_.size();
    j["episodes"] = counters_.episodes;
    if (has_last_ep_) j["episode_return"] = last_ep_return_;
    if (win_critic_n_ > 0) j["critic_loss"] = win_critic_loss_ / win_critic_n_;
    if (win_actor_n_ > 0) j["actor_loss"] = win_actor_loss_ / win_actor_n_;
    if (win_enc_n_ > 0) {
        j["encoder_loss"] = win_enc_total_ / win_enc_n_;
        j["encoder_reward_loss"] = win_enc_r_ / win_enc_n_;
        j["encoder_dynamics_loss"] = win_enc_d_ / win_enc_n_;
        j["encoder_infonce_loss"] = win_enc_i_ / win_enc_n_;
    }
    if (win_td_rows_ > 0) j["mean_abs_td"] = win_abs_td_ / win_td_rows_;
    j["win_critic_steps"] = win_critic_n_;
    j["win_actor_steps"] = win_actor_n_;
    j["win_encoder_steps"] = win_enc_n_;
    if (with_eval) {
        last_eval_ = evaluate_now(cfg_.eval_episodes, eval_seed_at(counters_.env_steps));
        has_eval_ = true;
        j["eval_return_mean"] = last_eval_.mean;
        if (last_eval_.episodes >= 2) j["eval_return_ci"] = last_eval_.half_width;
        j["eval_success_rate"] = last_eval_.success_rate;
    }
    win_critic_loss_ = win_actor_loss_ = 0.0;
    win_enc_total_ = win_enc_r_ = win_enc_d_ = win_enc_i_ = 0.0;
    win_abs_td_ = 0.0;
    win_critic_n_ = win_actor_n_ = win_enc_n_ = 0;
    win_td_rows_ = 0;
    return j.dump();
}

void Trainer::run_until(int64_t target_steps, std::ostream* metrics) {
    if (target_steps > cfg_.total_steps)
        throw input_error("run_until: target beyond total_steps");
    while (counters_.env_steps < target_steps) {
        step();
        if (!metrics) continue;
        const int64_t t = counters_.env_steps;
        const bool log_now = (t % cfg_.log_every == 0) || (t == cfg_.total_steps);
        const bool eval_now = (t % cfg_.eval_every == 0) || (t == cfg_.total_steps);
        if (log_now || eval_now) *metrics << metrics_row(eval_now) << "\n";
    }
}

EvalResult Trainer::run() {
    namespace fs = std::filesystem;
    std::ofstream metrics;
    if (!cfg_.out_dir.empty()) {
        fs::create_directories(cfg_.out_dir);
        metrics.open(cfg_.out_dir + "/metrics.jsonl", std::ios::trunc);
        if (!metrics) throw input_error("cannot open metrics file in " + cfg_.out_dir);
    }
    run_until(cfg_.total_steps, metrics.is_open() ? &metrics : nullptr);

    const EvalResult final_eval =
        has_eval_ ? last_eval_
                  : evaluate_now(cfg_.eval_episodes, eval_seed_at(counters_.env_steps));
    if (!cfg_.out_dir.empty()) {
        save_checkpoint(cfg_.out_dir + "/checkpoint_final.ck");
        json s;
        s["env"] = cfg_.env_name;
        s["seed"] = cfg_.seed;
        s["total_steps"] = counters_.env_steps;
        s["episodes"] = counters_.episodes;
        s["critic_steps"] = counters_.critic_steps;
        s["actor_steps"] = counters_.actor_steps;
        s["encoder_steps"] = counters_.encoder_steps;
        s["target_syncs"] = counters_.target_syncs;
        s["eval_return_mean"] = final_eval.mean;
        s["eval_return_ci"] = final_eval.half_width;
        s["eval_episodes"] = final_eval.episodes;
        s["eval_success_rate"] = final_eval.success_rate;
        s["config"] = json::parse(cfg_.to_json());
        std::ofstream summary(cfg_.out_dir + "/summary.json", std::ios::trunc);
        summary << s.dump(2) << "\n";
    }
    return final_eval;
}

void Trainer::save_checkpoint(const std::string& path) const {
    Checkpoint ck;
    ck.put_text("config", cfg_.to_json());
    enc_.save(ck, "enc");
    agent_.save(ck, "agent");
    buffer_.save(ck, "buffer");
    ck.put_vec("rng/env", env_rng_.save());
    ck.put_vec("rng/action", action_rng_.save());
    ck.put_vec("rng/replay", replay_rng_.save());
    ck.put_vec("rng/td", td_rng_.save());
    ck.put_vec("env/phys", env_->phys_state());
    ck.put_vec("env/obs", obs_);
    ck.put_scalar_i64("ctr/env_steps", counters_.env_steps);
    ck.put_scalar_i64("ctr/critic_steps", counters_.critic_steps);
    ck.put_scalar_i64("ctr/actor_steps", counters_.actor_steps);
    ck.put_scalar_i64("ctr/encoder_steps", counters_.encoder_steps);
    ck.put_scalar_i64("ctr/target_syncs", counters_.target_syncs);
    ck.put_scalar_i64("ctr/episodes", counters_.episodes);
    ck.put_scalar_f64("ep/return", ep_return_);
    ck.put_scalar_i64("ep/len", ep_len_);
    ck.put_scalar_f64("ep/last_return", last_ep_return_);
    ck.put_scalar_u64("ep/has_last", has_last_ep_ ? 1 : 0);
    ck.put_scalar_f64("win/critic_loss", win_critic_loss_);
    ck.put_scalar_f64("win/actor_loss", win_actor_loss_);
    ck.put_scalar_f64("win/enc_total", win_enc_total_);
    ck.put_scalar_f64("win/enc_r", win_enc_r_);
    ck.put_scalar_f64("win/enc_d", win_enc_d_);
    ck.put_scalar_f64("win/enc_i", win_enc_i_);
    ck.put_scalar_f64("win/abs_td", win_abs_td_);
    ck.put_scalar_i64("win/critic_n", win_critic_n_);
    ck.put_scalar_i64("win/actor_n", win_actor_n_);
    ck.put_scalar_i64("win/enc_n", win_enc_n_);
    ck.put_scalar_i64("win/td_rows", win_td_rows_);
    ck.save(path);
}

void Trainer::restore(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path);
    if (ck.get_text("config") != cfg_.to_json())
        throw config_error("restore: checkpoint config does not match");
    enc_.load(ck, "enc");
    agent_.load(ck, "agent");
    buffer_.load(ck, "buffer");
    env_rng_.load(ck.get_vec<uint64_t>("rng/env"));
    action_rng_.load(ck.get_vec<uint64_t>("rng/action"));
    replay_rng_.load(ck.get_vec<uint64_t>("rng/replay"));
    td_rng_.load(ck.get_vec<uint64_t>("rng/td"));
    env_->set_phys_state(ck.get_vec<double>("env/phys"));
    obs_ = ck.get_vec<float>("env/obs");
    counters_.env_steps = ck.get_scalar_i64("ctr/env_steps");
    counters_.critic_steps = ck.get_scalar_i64("ctr/critic_steps");
    counters_.actor_steps = ck.get_scalar_i64("ctr/actor_steps");
    counters_.encoder_steps = ck.get_scalar_i64("ctr/encoder_steps");
    counters_.target_syncs = ck.get_scalar_i64("ctr/target_syncs");
    counters_.episodes = ck.get_scalar_i64("ctr/episodes");
    ep_return_ = ck.get_scalar_f64("ep/return");
    ep_len_ = ck.get_scalar_i64("ep/len");
    last_ep_return_ = ck.get_scalar_f64("ep/last_return");
    has_last_ep_ = ck.get_scalar_u64("ep/has_last") != 0;
    win_critic_loss_ = ck.get_scalar_f64("win/critic_loss");
    win_actor_loss_ = ck.get_scalar_f64("win/actor_loss");
    win_enc_total_ = ck.get_scalar_f64("win/enc_total");
    win_enc_r_ = ck.get_scalar_f64("win/enc_r");
    win_enc_d_ = ck.get_scalar_f64("win/enc_d");
    win_enc_i_ = ck.get_scalar_f64("win/enc_i");
    win_abs_td_ = ck.get_scalar_f64("win/abs_td");
    win_critic_n_ = ck.get_scalar_i64("win/critic_n");
    win_actor_n_ = ck.get_scalar_i64("win/actor_n");
    win_enc_n_ = ck.get_scalar_i64("win/enc_n");
    win_td_rows_ = ck.get_scalar_i64("win/td_rows");
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const std::string& path) {
    const Checkpoint ck = Checkpoint::load(path);
    const TrainConfig cfg = TrainConfig::from_json(ck.get_text("config"));
    auto t = std::make_unique<Trainer>(cfg);
    t->restore(path);
    return t;
}

} // namespace drq
