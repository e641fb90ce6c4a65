#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "drq/trainer.hpp"

using namespace drq;
using nlohmann::json;

namespace {

// Desk-scale configuration: full control flow, toy network sizes.
TrainConfig tiny(int64_t total, int64_t explore, int target_rate) {
    TrainConfig c;
    c.env_name = "PointMass2D";
    c.total_steps = total;
    c.exploration_steps = explore;
    c.target_update_rate = target_rate;
    c.eval_every = total;
    c.log_every = total;
    c.eval_episodes = 2;
    c.buffer_capacity = 4096;
    c.batch_size = 8;
    c.z_s_dim = 8;
    c.z_sa_dim = 8;
    c.z_a_dim = 4;
    c.enc_hidden_dim = 16;
    c.reward_bins = 5;
    c.horizon = 3;
    c.q_horizon = 2;
    c.agent_hidden_dim = 16;
    return c;
}

std::vector<json> parse_rows(const std::string& text) {
    std::vector<json> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(json::parse(line));
    return rows;
}

} // namespace

TEST_CASE("default configuration carries the fixed hyperparameters") {
    const TrainConfig c;
    CHECK(c.env_name == "PointMass2D");
    CHECK(c.gamma == 0.99);
    CHECK(c.buffer_capacity == 1000000);
    CHECK(c.batch_size == 256);
    CHECK(c.target_update_rate == 250);
    CHECK(c.replay_ratio == 1);
    CHECK(c.exploration_steps == 10000);
    CHECK(c.exploration_sigma == 0.2);
    CHECK(c.smoothing_sigma == 0.2);
    CHECK(c.smoothing_clip == 0.3);
    CHECK(c.per_alpha == 0.4);
    CHECK(c.min_priority == 1.0);
    CHECK(c.eps == 1e-4);
    CHECK(c.eps_low == 0.1);
    CHECK(c.encoder_lr == 3e-4);
    CHECK(c.encoder_weight_decay == 0.01);
    CHECK(c.z_s_dim == 512);
    CHECK(c.z_sa_dim == 512);
    CHECK(c.z_a_dim == 256);
    CHECK(c.enc_hidden_dim == 750);
    CHECK(c.reward_bins == 65);
    CHECK(c.horizon == 5);
    CHECK(c.lambda_d == 1.0);
    CHECK(c.lambda_r == 0.1);
    CHECK(c.lambda_m == 0.1);
    CHECK(c.tau == 0.1);
    CHECK(c.actor_lr == 3e-4);
    CHECK(c.critic_lr == 3e-4);
    CHECK(c.agent_hidden_dim == 512);
    CHECK(c.q_horizon == 3);
    CHECK(c.adam_beta1 == 0.9);
    CHECK(c.adam_beta2 == 0.999);
    CHECK(c.adam_eps == 1e-8);
    CHECK_FALSE(c.critic_grads_encoder);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("validation rejects out-of-range fields") {
    auto broken = [](auto&& mut) {
        TrainConfig c;
        mut(c);
        CHECK_THROWS_AS(c.validate(), config_error);
    };
    broken([](TrainConfig& c) { c.env_name = "Atari"; });
    broken([](TrainConfig& c) { c.gamma = 0.0; });
    broken([](TrainConfig& c) { c.gamma = 1.5; });
    broken([](TrainConfig& c) { c.batch_size = 0; });
    broken([](TrainConfig& c) { c.eps = 1.0; });
    broken([](TrainConfig& c) { c.eps_low = 0.0; });
    broken([](TrainConfig& c) { c.tau = 0.0; });
    broken([](TrainConfig& c) { c.q_horizon = 0; });
    broken([](TrainConfig& c) { c.reward_bins = 1; });
    broken([](TrainConfig& c) { c.adam_beta1 = 1.0; });
    broken([](TrainConfig& c) { c.replay_ratio = 0; });
    broken([](TrainConfig& c) { c.min_priority = 0.0; });

    TrainConfig edge;
    edge.gamma = 1.0; // inclusive upper end
    CHECK_NOTHROW(edge.validate());
}

TEST_CASE("JSON round trip preserves every field") {
    TrainConfig c = tiny(120, 40, 20);
    c.lambda_m = 0.25;
    c.critic_grads_encoder = true;
    c.seed = 77;
    const std::string s = c.to_json();
    const TrainConfig back = TrainConfig::from_json(s);
    CHECK(back.to_json() == s);
    CHECK(back.lambda_m == 0.25);
    CHECK(back.critic_grads_encoder);
    CHECK(back.seed == 77);

    // Missing keys keep their defaults; present keys override.
    const TrainConfig empty = TrainConfig::from_json("{}");
    CHECK(empty.to_json() == TrainConfig{}.to_json());
    const TrainConfig one = TrainConfig::from_json(R"({"gamma": 0.5})");
    CHECK(one.gamma == 0.5);
    CHECK(one.batch_size == 256);
}

TEST_CASE("config parsing fails closed") {
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"gama": 0.9})"), config_error);
    CHECK_THROWS_AS(TrainConfig::from_json(R"({"gamma": "high"})"), config_error);
    CHECK_THROWS_AS(TrainConfig::from_json("[1, 2]"), config_error);
    CHECK_THROWS_AS(TrainConfig::from_json("not json"), config_error);
    try {
        TrainConfig::from_json(R"({"gama": 0.9})");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("unknown key gama") != std::string::npos);
    }
}

TEST_CASE("ablation switches rewire the effective settings") {
    TrainConfig c;
    CHECK(c.effective_lambda_m() == c.lambda_m);
    CHECK(c.effective_lambda_d() == c.lambda_d);
    CHECK(c.effective_eps() == c.eps);
    CHECK_FALSE(c.pinned_priorities());

    c.apply_ablation("no_infonce");
    CHECK(c.effective_lambda_m() == 0.0);
    CHECK(c.effective_eps() == c.eps);

    TrainConfig lap;
    lap.apply_ablation("lap_only");
    CHECK(lap.effective_eps() == 0.0);
    CHECK(lap.effective_lambda_m() == lap.lambda_m);

    TrainConfig forget;
    forget.apply_ablation("forget_only");
    CHECK(forget.pinned_priorities());

    TrainConfig nodyn;
    nodyn.apply_ablation("no_dyn_loss");
    CHECK(nodyn.effective_lambda_d() == 0.0);

    TrainConfig base;
    base.apply_ablation("mrq_baseline");
    CHECK(base.effective_lambda_m() == 0.0);
    CHECK(base.effective_eps() == 0.0);
    CHECK_FALSE(base.pinned_priorities());

    base.apply_ablation(""); // no-op
    CHECK_THROWS_AS(base.apply_ablation("cheat_mode"), config_error);
}

TEST_CASE("no gradient work happens during pure exploration") {
    TrainConfig c = tiny(50, 50, 10);
    Trainer t(c);
    t.run_until(50, nullptr);
    CHECK(t.counters().env_steps == 50);
    CHECK(t.counters().critic_steps == 0);
    CHECK(t.counters().actor_steps == 0);
    CHECK(t.counters().encoder_steps == 0);
    CHECK(t.counters().target_syncs == 0);
    CHECK(t.buffer().size() == 50);
    CHECK(t.buffer().pushes() == 50);
}

TEST_CASE("sync cadence drives encoder bursts and per-step updates") {
    TrainConfig c = tiny(100, 40, 20);
    Trainer t(c);
    t.run_until(100, nullptr);
    // Learning spans steps 41..100; syncs land on 60, 80, 100.
    CHECK(t.counters().env_steps == 100);
    CHECK(t.counters().target_syncs == 3);
    CHECK(t.counters().encoder_steps == 60);
    CHECK(t.counters().critic_steps == 60);
    CHECK(t.counters().actor_steps == 60);
    CHECK(t.buffer().size() == 100);
}

TEST_CASE("metrics windows account for every scheduled update") {
    TrainConfig c = tiny(100, 40, 20);
    c.log_every = 20;
    c.eval_every = 100;
    Trainer t(c);
    std::ostringstream out;
    t.run_until(100, &out);
    const auto rows = parse_rows(out.str());
    REQUIRE(rows.size() == 5);
    for (size_t i = 0; i < rows.size(); ++i) {
        const int64_t step = rows[i]["step"].get<int64_t>();
        CHECK(step == static_cast<int64_t>(20 * (i + 1)));
        CHECK(rows[i]["buffer_size"].get<int64_t>() == step);
    }
    CHECK(rows[0]["win_critic_steps"] == 0);
    CHECK(rows[1]["win_critic_steps"] == 0);
    for (size_t i = 2; i < 5; ++i) {
        CHECK(rows[i]["win_critic_steps"] == 20);
        CHECK(rows[i]["win_actor_steps"] == 20);
        CHECK(rows[i]["win_encoder_steps"] == 20);
        CHECK(rows[i].contains("critic_loss"));
        CHECK(rows[i].contains("encoder_loss"));
        CHECK(rows[i].contains("mean_abs_td"));
    }
    CHECK(rows[4].contains("eval_return_mean"));
    CHECK(rows[4].contains("eval_return_ci"));
    CHECK(rows[4].contains("eval_success_rate"));
    CHECK_FALSE(rows[0].contains("eval_return_mean"));
}

TEST_CASE("evaluation statistics follow the normal-interval formula") {
    EncoderDims ed;
    ed.state_dim = 4;
    ed.action_dim = 2;
    ed.z_s_dim = 8;
    ed.z_sa_dim = 8;
    ed.z_a_dim = 4;
    ed.hidden_dim = 16;
    ed.reward_bins = 5;
    EncoderNets<float> enc(ed, 3);
    AgentDims ad{8, 8, 2, 16};
    AgentNets<float> agent(ad, NoiseSpec{}, 4);

    const EvalResult two = evaluate(enc, agent, "PointMass2D", 2, 9);
    REQUIRE(two.episodes == 2);
    REQUIRE(two.returns.size() == 2);
    const double r0 = two.returns[0], r1 = two.returns[1];
    CHECK(two.mean == doctest::Approx((r0 + r1) / 2).epsilon(1e-12));
    // Sample sigma of two points is |r0-r1|/sqrt(2); CI scales by 1.96/sqrt(2).
    CHECK(two.half_width ==
          doctest::Approx(1.96 * std::abs(r0 - r1) / 2.0).epsilon(1e-9));
    double wins = 0;
    for (double r : two.returns)
        if (r > 0) wins += 1;
    CHECK(two.success_rate == doctest::Approx(wins / 2.0).epsilon(1e-12));

    const EvalResult one = evaluate(enc, agent, "PointMass2D", 1, 9);
    CHECK(one.half_width == 0.0);
    CHECK(one.returns.size() == 1);

    // Same seed, same rollouts; evaluation is self-contained.
    const EvalResult again = evaluate(enc, agent, "PointMass2D", 2, 9);
    CHECK(again.returns == two.returns);
    const EvalResult other = evaluate(enc, agent, "PointMass2D", 2, 10);
    CHECK(other.returns != two.returns);

    CHECK_THROWS_AS(evaluate(enc, agent, "PointMass2D", 0, 9), config_error);
    CHECK_THROWS_AS(evaluate(enc, agent, "PendulumSwingUp", 2, 9), config_error);
}

TEST_CASE("fixed seeds reproduce the whole run") {
    TrainConfig c = tiny(120, 40, 20);
    c.log_every = 40;
    c.eval_every = 120;
    Trainer a(c), b(c);
    std::ostringstream sa, sb;
    a.run_until(120, &sa);
    b.run_until(120, &sb);
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
    CHECK(a.counters().episodes == b.counters().episodes);
    CHECK(a.buffer().total_mass() == b.buffer().total_mass());
}

TEST_CASE("mid-run evaluation leaves the training trajectory untouched") {
    TrainConfig c = tiny(60, 20, 20);
    Trainer a(c), b(c);
    for (int i = 0; i < 30; ++i) a.step();
    for (int i = 0; i < 30; ++i) b.step();
    (void)b.evaluate_now(3, 99); // extra eval must not consume training draws
    for (int i = 0; i < 30; ++i) a.step();
    for (int i = 0; i < 30; ++i) b.step();
    const EvalResult ea = a.evaluate_now(2, 5);
    const EvalResult eb = b.evaluate_now(2, 5);
    CHECK(ea.returns == eb.returns);
    CHECK(a.counters().critic_steps == b.counters().critic_steps);
}

TEST_CASE("a restored checkpoint continues the run identically") {
    namespace fs = std::filesystem;
    const std::string path = "tmp_trainer_resume.ck";
    TrainConfig c = tiny(120, 40, 20);
    c.log_every = 20;
    c.eval_every = 60;

    Trainer a(c);
    std::ostringstream ignore;
    a.run_until(60, &ignore);
    a.save_checkpoint(path);
    std::ostringstream rest_a;
    a.run_until(120, &rest_a);

    auto b = Trainer::from_checkpoint(path);
    CHECK(b->config().to_json() == c.to_json());
    CHECK(b->counters().env_steps == 60);
    std::ostringstream rest_b;
    b->run_until(120, &rest_b);

    CHECK(rest_a.str() == rest_b.str());
    CHECK(!rest_a.str().empty());
    CHECK(a.counters().target_syncs == b->counters().target_syncs);
    CHECK(a.buffer().pushes() == b->buffer().pushes());

    // A trainer built from a different config refuses the snapshot.
    TrainConfig other = c;
    other.total_steps = 240;
    Trainer wrong(other);
    CHECK_THROWS_AS(wrong.restore(path), config_error);
    fs::remove(path);
}

TEST_CASE("a full run writes metrics, summary, and a usable checkpoint") {
    namespace fs = std::filesystem;
    const std::string dir = "tmp_trainer_run";
    fs::remove_all(dir);
    TrainConfig c = tiny(60, 20, 20);
    c.log_every = 20;
    c.eval_every = 60;
    c.out_dir = dir;
    Trainer t(c);
    const EvalResult final_eval = t.run();
    CHECK(final_eval.episodes == 2);

    std::ifstream metrics(dir + "/metrics.jsonl");
    REQUIRE(metrics.good());
    std::stringstream buf;
    buf << metrics.rdbuf();
    const auto rows = parse_rows(buf.str());
    REQUIRE(rows.size() == 3);
    CHECK(rows.back()["step"] == 60);
    CHECK(rows.back()["eval_return_mean"].get<double>() == final_eval.mean);

    std::ifstream summary_in(dir + "/summary.json");
    REQUIRE(summary_in.good());
    const json s = json::parse(summary_in);
    CHECK(s["env"] == "PointMass2D");
    CHECK(s["total_steps"] == 60);
    CHECK(s["critic_steps"] == 40);
    CHECK(s["encoder_steps"] == 40);
    CHECK(s["target_syncs"] == 2);
    CHECK(s["eval_return_mean"].get<double>() == final_eval.mean);
    CHECK(s["config"]["batch_size"] == c.batch_size);

    // The final checkpoint evaluates standalone, also on a same-shape env.
    const std::string ck = dir + "/checkpoint_final.ck";
    const EvalResult re = evaluate_checkpoint(ck, 2, 9);
    CHECK(re.episodes == 2);
    const EvalResult sparse = evaluate_checkpoint(ck, 2, 9, "SparseGoal2D");
    CHECK(sparse.episodes == 2);
    CHECK_THROWS(evaluate_checkpoint(ck, 2, 9, "PendulumSwingUp"));
    CHECK_THROWS_AS(evaluate_checkpoint(ck, 2, 9, "Atari"), config_error);
    fs::remove_all(dir);
}

TEST_CASE("running past the configured budget is rejected") {
    TrainConfig c = tiny(50, 50, 10);
    Trainer t(c);
    CHECK_THROWS_AS(t.run_until(51, nullptr), input_error);
}

TEST_CASE("baseline ablation turns off fading and the contrastive term") {
    TrainConfig c = tiny(60, 20, 20);
    c.apply_ablation("mrq_baseline");
    Trainer t(c);
    CHECK(t.buffer().config().eps == 0.0);
    CHECK_FALSE(t.buffer().config().pin_priorities);
    std::ostringstream out;
    t.run_until(60, &out);
    const auto rows = parse_rows(out.str());
    REQUIRE(!rows.empty());
    CHECK(rows.back()["encoder_infonce_loss"].get<double>() == 0.0);
    CHECK(rows.back()["encoder_loss"].get<double>() != 0.0);
}

TEST_CASE("pinned-priority ablation keeps every priority at one") {
    TrainConfig c = tiny(60, 20, 20);
    c.apply_ablation("forget_only");
    Trainer t(c);
    CHECK(t.buffer().config().pin_priorities);
    t.run_until(60, nullptr);
    for (const auto& row : t.buffer().table()) CHECK(row.priority == 1.0);

    // Whereas the full algorithm refreshes priorities from TD errors.
    TrainConfig full = tiny(60, 20, 20);
    Trainer f(full);
    f.run_until(60, nullptr);
    bool moved = false;
    for (const auto& row : f.buffer().table())
        if (row.priority != 1.0) moved = true;
    CHECK(moved);
}
