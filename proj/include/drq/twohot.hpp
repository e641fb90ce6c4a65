#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "drq/array.hpp"
#include "drq/errors.hpp"

namespace drq {

// Symmetric exponential warp and inverse: symexp(x) = sign(x)(e^|x| - 1),
// symlog(x) = sign(x) ln(1 + |x|).
inline double symexp(double x) {
    const double s = x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0);
    return s * (std::exp(std::abs(x)) - 1.0);
}

inline double symlog(double x) {
    const double s = x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0);
    return s * std::log1p(std::abs(x));
}

struct TwoHotCode {
    int lo_index = 0;
    double lo_weight = 1.0; // hi_index = lo_index + 1 carries 1 - lo_weight
};

// Fixed reward grid: centers at symexp of a uniform grid in symlog space.
// All internal arithmetic is double so the encode/decode roundtrip holds to
// well below 1e-6 across the whole range.
struct BinGrid {
    int num_bins;
    double symlog_low, symlog_high;
    std::vector<double> centers;

    explicit BinGrid(int bins = 65, double low = -10.0, double high = 10.0)
        : num_bins(bins), symlog_low(low), symlog_high(high) {
        if (bins < 2) throw config_error("bin grid needs at least 2 bins");
        if (!(low < high)) throw config_error("bin grid range inverted");
        centers.resize(bins);
        const double step = (high - low) / (bins - 1);
        for (int i = 0; i < bins; ++i) centers[i] = symexp(low + i * step);
        for (int i = 1; i < bins; ++i)
            if (!(centers[i] > centers[i - 1]))
                throw state_error("bin centers not strictly increasing");
    }

    double min_center() const { return centers.front(); }
    double max_center() const { return centers.back(); }
};

// Linear interpolation between the two adjacent centers in raw reward space;
// out-of-range rewards clamp to the outermost centers.
inline TwoHotCode encode(double r, const BinGrid& grid) {
    if (std::isnan(r)) throw input_error("two-hot encode: NaN reward");
    const auto& c = grid.centers;
    if (r <= c.front()) return {0, 1.0};
    if (r >= c.back()) return {grid.num_bins - 2, 0.0};
    // largest k with c[k] <= r
    const auto it = std::upper_bound(c.begin(), c.end(), r);
    const int k = static_cast<int>(it - c.begin()) - 1;
    const double w = (c[k + 1] - r) / (c[k + 1] - c[k]);
    return {k, w};
}

// decode = sum_k probs[k] * centers[k]; probs must be a near-normalized
// nonnegative categorical.
inline double decode(const double* probs, int n, const BinGrid& grid) {
    if (n != grid.num_bins) throw shape_error("two-hot decode: bin count mismatch");
    double mass = 0.0, out = 0.0;
    for (int k = 0; k < n; ++k) {
        if (probs[k] < 0.0) throw input_error("two-hot decode: negative probability");
        mass += probs[k];
        out += probs[k] * grid.centers[k];
    }
    if (std::abs(mass - 1.0) > 1e-6)
        throw input_error("two-hot decode: probabilities must sum to 1");
    return out;
}

inline double decode(const std::vector<double>& probs, const BinGrid& grid) {
    return decode(probs.data(), static_cast<int>(probs.size()), grid);
}

inline double decode_code(const TwoHotCode& code, const BinGrid& grid) {
    return code.lo_weight * grid.centers[code.lo_index] +
           (1.0 - code.lo_weight) * grid.centers[code.lo_index + 1];
}

// Stabilized cross-entropy between softmax(logits) and the two-hot target of
// r_true: logsumexp(logits) - sum_k target_k logits_k.
inline double reward_loss(const double* logits, int n, double r_true,
                          const BinGrid& grid) {
    if (n != grid.num_bins) throw shape_error("reward_loss: bin count mismatch");
    for (int k = 0; k < n; ++k)
        if (!std::isfinite(logits[k])) throw input_error("reward_loss: non-finite logit");
    const TwoHotCode code = encode(r_true, grid);
    double mx = logits[0];
    for (int k = 1; k < n; ++k) mx = std::max(mx, logits[k]);
    double z = 0.0;
    for (int k = 0; k < n; ++k) z += std::exp(logits[k] - mx);
    const double lse = mx + std::log(z);
    const double dot = code.lo_weight * logits[code.lo_index] +
                       (1.0 - code.lo_weight) * logits[code.lo_index + 1];
    return lse - dot;
}

inline double reward_loss(const std::vector<double>& logits, double r_true,
                          const BinGrid& grid) {
    return reward_loss(logits.data(), static_cast<int>(logits.size()), r_true, grid);
}

// Dense [n x num_bins] target rows for a batch of rewards (training path).
template <typename T>
Mat<T> twohot_targets(const std::vector<double>& rewards, const BinGrid& grid) {
    Mat<T> out(static_cast<int>(rewards.size()), grid.num_bins);
    for (size_t i = 0; i < rewards.size(); ++i) {
        const TwoHotCode code = encode(rewards[i], grid);
        out.at(static_cast<int>(i), code.lo_index) = static_cast<T>(code.lo_weight);
        out.at(static_cast<int>(i), code.lo_index + 1) +=
            static_cast<T>(1.0 - code.lo_weight);
    }
    return out;
}

} // namespace drq
