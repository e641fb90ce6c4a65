#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "drq/array.hpp"
#include "drq/errors.hpp"
#include "drq/rng.hpp"

namespace drq::oracles {

// Pass/fail record of one verification suite, serializable by the CLI.
struct OracleReport {
    std::string suite;
    bool pass = true;
    std::vector<std::pair<std::string, double>> values;
    std::vector<std::string> failures;

    void note(const std::string& name, double v) { values.emplace_back(name, v); }
    void require(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            failures.push_back(what);
        }
    }
    double value_of(const std::string& name) const {
        for (const auto& [k, v] : values)
            if (k == name) return v;
        throw input_error("oracle report: no value named " + name);
    }
};

// Gaussian pair Z_sa = X, Z_s' = X + eps with X ~ N(0, I_d),
// eps ~ N(0, sigma^2 I_d): closed-form deviation and mutual information.
inline double additive_mse(int d, double sigma2) {
    if (!(sigma2 > 0.0)) throw input_error("additive family: sigma^2 must be positive");
    return sigma2 * d;
}

inline double additive_mi(int d, double sigma2) {
    if (!(sigma2 > 0.0)) throw input_error("additive family: sigma^2 must be positive");
    return 0.5 * d * std::log(1.0 + 1.0 / sigma2);
}

// Scaled pair Z_sa = X, Z_s' = kX: both terms grow with k (differential
// entropy convention, nats).
inline std::pair<double, double> scaling_pair(int d, double k) {
    if (!(k > 1.0)) throw input_error("scaling family: k must exceed 1");
    const double mse = (1.0 - k) * (1.0 - k) * d;
    const double mi =
        0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e * k * k);
    return {mse, mi};
}

// Monte-Carlo estimate of E[||X - (X+eps)||^2] for the additive family.
double additive_mse_mc(int d, double sigma2, int64_t samples, Rng& rng);

// Entropy/MI bookkeeping of a discrete joint p(w, z) held row-major
// [n x n]. h_z and h_z_given_w use direct definitions; mi uses the KL form,
// so h_z - mi - h_z_given_w is a genuine three-way consistency check.
struct JointStats {
    double h_z = 0;
    double h_w = 0;
    double h_z_given_w = 0;
    double mi = 0;
};
JointStats joint_stats(const std::vector<double>& joint, int n);

// Absolute identity residual |H(Z) - I - H(Z|W)| of one joint.
double lemma2_residual(const std::vector<double>& joint, int n);

// Verifies on constructed 4x4 joints with marginal entropy H(Z) = entropy
// that raising the mutual information by mi_delta lowers the conditional
// entropy by exactly mi_delta (within 1e-9 of the bisection target), and
// that the H(Z|W) = H(Z) - I identity holds at both endpoints.
bool lemma2_check(double mi_delta, double entropy);

// Random-joint sweep of the identity plus the named endpoint examples.
OracleReport lemma2_suite(int joints, uint64_t seed);

// Anti-correlation on the additive family, co-movement on the scaling
// family, closed forms cross-checked by Monte-Carlo.
OracleReport theorem1_check(int64_t mc_samples, uint64_t seed);

// Per-entry probabilities of the faded distribution in its unfloored form
// (raw |td|^alpha priorities, pure (1-eps)^age decay with no eps_low clamp),
// computed entirely in log space so thousand-step decays at large eps stay
// representable. abs_td is ordered newest first (age = i). Entries with
// abs_td = 0 get -inf.
std::vector<double> faded_log_probabilities(const std::vector<double>& abs_td,
                                            double alpha, double eps);

// Linear-space mirror of the replay module's exact_distribution: same
// expressions in the same order over (priority, age) pairs, newest first,
// for bit-for-bit cross-validation.
std::vector<double> faded_probabilities(const std::vector<double>& priorities,
                                        double eps, double eps_low);

// Exhaustive verification of the three claims on random buffers: (i) equal
// TD errors sample older strictly less; (ii) plain-PER lower bound
// P_hat(i)(1-eps)^i <= P(i); (iii) expected draw counts strictly inside
// (0, N) for positive-priority entries.
OracleReport theorem3_check(int buffers, int max_size,
                            const std::vector<double>& eps_values, double alpha,
                            uint64_t seed);

// ln(N) - mean InfoNCE loss (cosine critic, temperature tau) must stay at or
// below the closed-form mutual information plus 0.05 nats, on paired
// Gaussians and on shuffled (independent) pairs.
OracleReport infonce_bound_check(int n, int d, double sigma2, int reps, double tau,
                                 uint64_t seed);

// Analytic gradients of every training loss (reward coding, latent dynamics,
// contrastive, combined unrolled, critic, actor) against central finite
// differences in float64 on small random nets; worst relative error per loss
// must stay at or below 1e-4 over `points` random configurations each.
OracleReport gradcheck_suite(int points, uint64_t seed);

// Central-difference gradient of a scalar functional at x.
inline Mat<double> fd_gradient(const std::function<double(const Mat<double>&)>& f,
                               const Mat<double>& x, double h = 1e-5) {
    Mat<double> g(x.rows, x.cols);
    Mat<double> probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        const double keep = probe.v[i];
        probe.v[i] = keep + h;
        const double up = f(probe);
        probe.v[i] = keep - h;
        const double dn = f(probe);
        probe.v[i] = keep;
        g.v[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

// Largest elementwise relative error max(|a-b|) / max(floor, |a|, |b|).
inline double max_rel_error(const Mat<double>& a, const Mat<double>& b,
                            double floor = 1e-6) {
    check_shape(a.same_shape(b), "max_rel_error: shape mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({floor, std::abs(a.v[i]), std::abs(b.v[i])});
        worst = std::max(worst, std::abs(a.v[i] - b.v[i]) / denom);
    }
    return worst;
}

} // namespace drq::oracles
