#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "drq/errors.hpp"
#include "drq/oracles.hpp"
#include "drq/trainer.hpp"

namespace {

using drq::oracles::OracleReport;
using nlohmann::json;

json report_json(const OracleReport& r) {
    json j;
    j["suite"] = r.suite;
    j["pass"] = r.pass;
    json vals = json::object();
    for (const auto& [k, v] : r.values) vals[k] = v;
    j["values"] = vals;
    j["failures"] = r.failures;
    return j;
}

json merge_reports(const std::string& suite, const std::vector<OracleReport>& reps) {
    json j;
    j["suite"] = suite;
    bool pass = true;
    json parts = json::array();
    for (const auto& r : reps) {
        pass = pass && r.pass;
        parts.push_back(report_json(r));
    }
    j["pass"] = pass;
    j["reports"] = parts;
    return j;
}

// VALUE parses as JSON when possible (numbers, booleans), else as a string.
json parse_override_value(const std::string& value) {
    json parsed = json::parse(value, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
    return json(value);
}

drq::TrainConfig build_config(const std::string& config_path,
                              const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw drq::config_error("config: cannot open " + config_path);
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw drq::config_error(std::string("config: invalid JSON: ") + e.what());
        }
    }
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw drq::config_error("--set expects KEY=VALUE, got: " + kv);
        j[kv.substr(0, eq)] = parse_override_value(kv.substr(eq + 1));
    }
    return drq::TrainConfig::from_json(j.dump());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent-space actor-critic with faded prioritized replay"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Run one seeded training job");
    std::string env_name, config_path, out_dir, ablation;
    std::vector<std::string> overrides;
    int64_t steps = -1;
    uint64_t seed = 0;
    train->add_option("--env", env_name, "environment name");
    train->add_option("--steps", steps, "total environment steps");
    train->add_option("--seed", seed, "master seed");
    train->add_option("--config", config_path, "JSON config file");
    train->add_option("--out", out_dir, "output directory for metrics/checkpoint");
    train->add_option("--ablation", ablation,
                      "variant: no_infonce | lap_only | forget_only | no_dyn_loss | "
                      "mrq_baseline");
    train->add_option("--set", overrides, "KEY=VALUE config override (repeatable)");

    auto* ev = app.add_subcommand("eval", "Evaluate a saved checkpoint greedily");
    std::string ckpt_path, eval_env;
    int episodes = 10;
    uint64_t eval_seed = 0;
    ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    ev->add_option("--episodes", episodes, "evaluation episodes");
    ev->add_option("--seed", eval_seed, "evaluation seed");
    ev->add_option("--env", eval_env, "override the env recorded in the checkpoint");

    auto* orc = app.add_subcommand("oracle", "Run a numerical verification suite");
    std::string suite, oracle_out;
    uint64_t oracle_seed = 20240817;
    orc->add_option("--suite", suite, "replay | gaussian | infonce | gradcheck")
        ->required()
        ->check(CLI::IsMember({"replay", "gaussian", "infonce", "gradcheck"}));
    orc->add_option("--out", oracle_out, "also write the JSON report to this file");
    orc->add_option("--seed", oracle_seed, "suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            drq::TrainConfig cfg = build_config(config_path, overrides);
            if (train->count("--env")) cfg.env_name = env_name;
            if (train->count("--steps")) cfg.total_steps = steps;
            if (train->count("--seed")) cfg.seed = seed;
            if (train->count("--out")) cfg.out_dir = out_dir;
            cfg.apply_ablation(ablation);
            drq::Trainer trainer(cfg);
            const drq::EvalResult final_eval = trainer.run();
            json out;
            out["env"] = cfg.env_name;
            out["seed"] = cfg.seed;
            out["steps"] = trainer.env_steps();
            out["eval_return_mean"] = final_eval.mean;
            out["eval_return_ci"] = final_eval.half_width;
            out["eval_success_rate"] = final_eval.success_rate;
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (*ev) {
            const drq::EvalResult r =
                drq::evaluate_checkpoint(ckpt_path, episodes, eval_seed, eval_env);
            json out;
            out["episodes"] = r.episodes;
            out["mean"] = r.mean;
            if (r.episodes >= 2) out["ci_half_width"] = r.half_width;
            out["success_rate"] = r.success_rate;
            out["returns"] = r.returns;
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        // oracle
        namespace orcs = drq::oracles;
        json out;
        if (suite == "replay") {
            out = report_json(
                orcs::theorem3_check(100, 1000, {1e-4, 0.01, 0.5}, 0.4, oracle_seed));
        } else if (suite == "gaussian") {
            out = merge_reports("gaussian",
                                {orcs::theorem1_check(1000000, oracle_seed),
                                 orcs::lemma2_suite(1000, oracle_seed + 1)});
        } else if (suite == "infonce") {
            out = merge_reports(
                "infonce",
                {orcs::infonce_bound_check(16, 4, 1.0, 200, 0.1, oracle_seed),
                 orcs::infonce_bound_check(256, 8, 0.01, 200, 0.1, oracle_seed + 1),
                 orcs::infonce_bound_check(256, 4, 1.0, 200, 0.1, oracle_seed + 2)});
        } else {
            out = report_json(orcs::gradcheck_suite(100, oracle_seed));
        }
        std::cout << out.dump(2) << "\n";
        if (!oracle_out.empty()) {
            std::ofstream f(oracle_out, std::ios::trunc);
            f << out.dump(2) << "\n";
        }
        return out["pass"].get<bool>() ? 0 : 1;
    } catch (const drq::config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
