#include <functional>

#include "drq/agent.hpp"
#include "drq/encoder.hpp"
#include "drq/oracles.hpp"

namespace drq::oracles {

namespace {

EncoderDims tiny_dims() {
    EncoderDims d;
    d.state_dim = 3;
    d.action_dim = 2;
    d.z_s_dim = 6;
    d.z_sa_dim = 6;
    d.z_a_dim = 4;
    d.hidden_dim = 8;
    d.reward_bins = 7;
    return d;
}

Mat<double> random_mat(int rows, int cols, double scale, Rng& rng) {
    Mat<double> m(rows, cols);
    for (auto& x : m.v) x = rng.uniform(-scale, scale);
    return m;
}

UnrollBatch<double> random_unroll(const EncoderDims& d, int batch, int horizon,
                                  Rng& rng) {
    UnrollBatch<double> b;
    b.batch = batch;
    b.horizon = horizon;
    for (int t = 0; t <= horizon; ++t)
        b.states.push_back(random_mat(batch, d.state_dim, 1.5, rng));
    for (int t = 0; t < horizon; ++t)
        b.actions.push_back(random_mat(batch, d.action_dim, 1.0, rng));
    b.rewards = random_mat(batch, horizon, 3.0, rng);
    b.valid.assign(static_cast<size_t>(batch) * horizon, 0);
    for (int r = 0; r < batch; ++r) {
        const int usable = 1 + static_cast<int>(rng.below(horizon));
        for (int t = 0; t < usable; ++t)
            b.valid[static_cast<size_t>(r) * horizon + t] = 1;
    }
    return b;
}

CriticBatch<double> random_critic(const EncoderDims& d, int batch, int q_horizon,
                                  Rng& rng) {
    CriticBatch<double> b;
    b.states = random_mat(batch, d.state_dim, 1.5, rng);
    b.actions = random_mat(batch, d.action_dim, 1.0, rng);
    b.rewards = random_mat(batch, q_horizon, 3.0, rng);
    b.end_states = random_mat(batch, d.state_dim, 1.5, rng);
    for (int r = 0; r < batch; ++r) {
        b.n_steps.push_back(1 + static_cast<int>(rng.below(q_horizon)));
        b.bootstrap.push_back(rng.uniform() < 0.7 ? 1 : 0);
    }
    return b;
}

// Worst relative FD error across every parameter of the store. eval must
// recompute the loss from the store's current values.
double store_fd_worst(ParamStore<double>& ps,
                      const std::vector<Mat<double>>& analytic,
                      const std::function<double()>& eval) {
    double worst = 0.0;
    for (size_t i = 0; i < ps.count(); ++i) {
        auto f = [&](const Mat<double>& x) {
            const Mat<double> keep = ps.vals[i];
            ps.vals[i] = x;
            const double v = eval();
            ps.vals[i] = keep;
            return v;
        };
        const Mat<double> fd = fd_gradient(f, ps.vals[i]);
        worst = std::max(worst, max_rel_error(analytic[i], fd));
    }
    return worst;
}

// The actor hidden layer is piecewise-linear, so central differences are
// unreliable when a preactivation sits within the probe step of its kink;
// such configurations are redrawn.
bool actor_point_ok(const AgentNets<double>& agent, const EncoderNets<double>& enc,
                    const Mat<double>& states) {
    const Mat<double> z = enc.encode_state(states);
    const auto& ps = agent.actor_store();
    const Mat<double>& w = ps.vals[ps.index_of("actor.l0.w")];
    const Mat<double>& bias = ps.vals[ps.index_of("actor.l0.b")];
    for (int r = 0; r < z.rows; ++r)
        for (int j = 0; j < w.cols; ++j) {
            double pre = bias.at(0, j);
            for (int k = 0; k < z.cols; ++k) pre += z.at(r, k) * w.at(k, j);
            if (std::abs(pre) < 1e-4) return false;
        }
    return true;
}

} // namespace

OracleReport gradcheck_suite(int points, uint64_t seed) {
    OracleReport rep;
    rep.suite = "gradcheck";
    if (points < 1) throw input_error("gradcheck: points must be >= 1");
    const EncoderDims dims = tiny_dims();
    const double tol = 1e-4;
    const int batch = 4, horizon = 3, q_horizon = 2;

    struct Variant {
        const char* name;
        double lr, ld, lm;
    };
    const Variant variants[] = {
        {"reward_coding", 1.0, 0.0, 0.0},
        {"latent_dynamics", 0.0, 1.0, 0.0},
        {"contrastive", 0.0, 0.0, 1.0},
        {"combined_unrolled", 0.1, 1.0, 0.1},
    };
    Rng root(seed);

    for (const auto& var : variants) {
        double worst = 0.0;
        Rng stream = root.substream(std::string("enc.") + var.name);
        for (int p = 0; p < points; ++p) {
            EncoderNets<double> enc(dims, stream.next_u64());
            const UnrollBatch<double> b = random_unroll(dims, batch, horizon, stream);
            std::vector<Mat<double>> grads;
            enc.encoder_loss_grads(b, var.lr, var.ld, var.lm, 0.1, grads);
            worst = std::max(
                worst, store_fd_worst(enc.store(), grads, [&] {
                    return enc.encoder_loss(b, var.lr, var.ld, var.lm, 0.1).total;
                }));
        }
        rep.note(std::string(var.name) + "_worst_rel", worst);
        rep.require(worst <= tol, std::string(var.name) + " gradient exceeds tolerance");
    }

    const AgentDims adims{dims.z_s_dim, dims.z_sa_dim, dims.action_dim, 8};
    const NoiseSpec noise{0.2, 0.2, 0.3};

    {
        double worst = 0.0;
        Rng stream = root.substream("critic");
        for (int p = 0; p < points; ++p) {
            EncoderNets<double> enc(dims, stream.next_u64());
            AgentNets<double> agent(adims, noise, stream.next_u64());
            const CriticBatch<double> b = random_critic(dims, batch, q_horizon, stream);
            const Rng noise_base = stream.substream("td");
            std::vector<Mat<double>> grads;
            {
                Rng r = noise_base;
                agent.critic_loss_grads(enc, b, 0.99, r, grads);
            }
            worst = std::max(worst,
                             store_fd_worst(agent.critic_store(), grads, [&] {
                                 Rng r = noise_base;
                                 return agent.critic_loss(enc, b, 0.99, r).loss;
                             }));
        }
        rep.note("critic_worst_rel", worst);
        rep.require(worst <= tol, "critic gradient exceeds tolerance");
    }

    {
        double worst = 0.0;
        Rng stream = root.substream("critic-through-encoder");
        const int routed_points = std::max(1, points / 10);
        for (int p = 0; p < routed_points; ++p) {
            EncoderNets<double> enc(dims, stream.next_u64());
            AgentNets<double> agent(adims, noise, stream.next_u64());
            CriticBatch<double> b = random_critic(dims, batch, q_horizon, stream);
            // The TD target bootstraps through the live encoder but is
            // gradient-free by contract, so finite differences over encoder
            // parameters would disagree wherever the bootstrap moves. Dropping
            // the bootstrap pins the target to the reward sum and leaves only
            // the differentiated path.
            for (auto& f : b.bootstrap) f = 0;
            const Rng noise_base = stream.substream("td");
            std::vector<Mat<double>> grads, enc_grads;
            {
                Rng r = noise_base;
                agent.critic_loss_grads(enc, b, 0.99, r, grads, &enc_grads);
            }
            worst = std::max(worst,
                             store_fd_worst(enc.store(), enc_grads, [&] {
                                 Rng r = noise_base;
                                 return agent.critic_loss(enc, b, 0.99, r).loss;
                             }));
        }
        rep.note("critic_encoder_route_worst_rel", worst);
        rep.require(worst <= tol, "critic-to-encoder gradient exceeds tolerance");
    }

    {
        double worst = 0.0;
        Rng stream = root.substream("actor");
        for (int p = 0; p < points; ++p) {
            EncoderNets<double> enc(dims, stream.next_u64());
            AgentNets<double> agent(adims, noise, stream.next_u64());
            Mat<double> states = random_mat(batch, dims.state_dim, 1.5, stream);
            int tries = 0;
            while (!actor_point_ok(agent, enc, states) && tries++ < 64)
                states = random_mat(batch, dims.state_dim, 1.5, stream);
            std::vector<Mat<double>> grads;
            agent.actor_loss_grads(enc, states, grads);
            worst = std::max(worst, store_fd_worst(agent.actor_store(), grads, [&] {
                                 return agent.actor_loss(enc, states);
                             }));
        }
        rep.note("actor_worst_rel", worst);
        rep.require(worst <= tol, "actor gradient exceeds tolerance");
    }

    return rep;
}

} // namespace drq::oracles
