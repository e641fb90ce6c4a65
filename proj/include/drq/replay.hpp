#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "drq/checkpoint.hpp"
#include "drq/errors.hpp"
#include "drq/rng.hpp"

namespace drq {

// One environment step. done marks any episode end; truncated additionally
// marks time-limit ends, which the trainer bootstraps through.
struct Transition {
    std::vector<float> state;
    std::vector<float> action;
    float reward = 0.0f;
    std::vector<float> next_state;
    bool done = false;
    bool truncated = false;
};

// Positive-mass sampling tree. Parents are recomputed as the exact sum of
// their children on every update (no delta propagation), so the node==sum
// invariant holds exactly and a bottom-up rebuild from leaves reproduces the
// incremental state bit-for-bit.
class SumTree {
  public:
    explicit SumTree(int capacity = 0);

    void set(int leaf, double value);
    double get(int leaf) const;
    double total() const;
    // Returns the leaf owning mass offset u, u in [0, total).
    int pick(double u) const;
    void scale_all(double factor);
    int capacity() const { return cap_; }

    const std::vector<double>& leaves_raw() const { return leaf_; }
    void load_leaves(const std::vector<double>& leaves);
    // Max |parent - (left+right)| over internal nodes; diagnostics/tests.
    double max_node_error() const;

  private:
    void rebuild();
    int cap_ = 0;
    int base_ = 1; // leaves occupy heap_[base_ .. base_+cap_)
    std::vector<double> leaf_;
    std::vector<double> heap_;
};

struct FadedConfig {
    int capacity = 0;
    int state_dim = 0;
    int action_dim = 0;
    double alpha = 0.4;        // priority exponent
    double eps = 1e-4;         // forgetting rate
    double eps_low = 0.1;      // decay-weight floor
    double min_priority = 1.0; // LAP floor
    bool pin_priorities = false; // forget-only ablation: all priorities 1
};

// Faded prioritized replay. Per-entry sampling weight
//   w(i) = max(|delta_i|^alpha, 1) * max(eps_low, (1-eps)^age_i)
// with age 0 = newest. Entries younger than
// age_floor = ceil(ln(eps_low)/ln(1-eps)) live in a Decaying tree storing
// priority*(1-eps)^(rebase - insert_step) with the global factor
// (1-eps)^(newest - rebase) applied at query time; older entries migrate
// lazily to a Floored tree weighted priority*eps_low. Public indices are
// stable insertion counters; slots are index % capacity.
class FadedBuffer {
  public:
    enum class Tier : uint8_t { Decaying = 0, Floored = 1 };

    explicit FadedBuffer(const FadedConfig& cfg);

    uint64_t push(const Transition& t);
    size_t size() const { return live_; }
    bool empty() const { return live_ == 0; }
    uint64_t pushes() const { return next_insert_; }
    // Insertion counter of the newest entry.
    uint64_t newest() const;
    uint64_t age_of(uint64_t index) const;
    uint64_t age_floor() const { return age_floor_; }

    bool alive(uint64_t index) const;
    const float* state(uint64_t index) const;
    const float* action(uint64_t index) const;
    const float* next_state(uint64_t index) const;
    float reward(uint64_t index) const;
    bool done(uint64_t index) const;
    bool truncated(uint64_t index) const;
    double priority_of(uint64_t index) const;
    Tier tier_of(uint64_t index) const;

    // Independent draws (with replacement) from the faded distribution.
    std::vector<uint64_t> sample(int batch, Rng& rng) const;

    // A sampled start plus the contiguous run length usable before an
    // episode boundary or the write head cuts it off (1 <= usable <= horizon).
    // terminal is set when the run ended on a non-truncated done.
    struct SeqRef {
        uint64_t start = 0;
        int usable = 0;
        bool terminal = false;
    };
    std::vector<SeqRef> sample_sequences(int batch, int horizon, Rng& rng) const;
    SeqRef extend(uint64_t start, int horizon) const;

    void update_priorities(const std::vector<uint64_t>& indices,
                           const std::vector<double>& abs_td, double alpha);

    // Direct per-entry evaluation of the sampling distribution, newest
    // first; the brute-force oracle for the tree sampler.
    struct Row {
        uint64_t index = 0;
        uint64_t age = 0;
        double priority = 0;
        double decay_weight = 0;
        double probability = 0;
    };
    std::vector<Row> table() const;
    std::vector<double> exact_distribution() const;
    void dump_csv(std::ostream& os) const;

    double total_mass() const;
    double decay_global_factor() const;
    // Forces an exponent rebase regardless of the overflow threshold (tests).
    void force_rebase();
    double max_tree_node_error() const;

    void save(Checkpoint& ck, const std::string& prefix) const;
    void load(const Checkpoint& ck, const std::string& prefix);

    const FadedConfig& config() const { return cfg_; }

  private:
    int slot_of(uint64_t index) const { return static_cast<int>(index % cfg_.capacity); }
    void check_live(uint64_t index) const;
    void migrate_aged();
    void maybe_rebase();
    void set_leaf(int slot);
    double decaying_stored(int slot) const;
    static uint64_t compute_age_floor(double eps, double eps_low);

    FadedConfig cfg_;
    size_t live_ = 0;
    uint64_t next_insert_ = 0;
    uint64_t rebase_ = 0;      // insert counter at last rebase
    uint64_t dec_head_ = 0;    // smallest insert counter possibly still Decaying
    uint64_t age_floor_ = 0;
    double max_priority_seen_ = 1.0;

    // slot-parallel storage
    std::vector<float> states_, actions_, next_states_, rewards_;
    std::vector<uint8_t> dones_, truncs_, occupied_;
    std::vector<uint64_t> insert_steps_;
    std::vector<double> priorities_;
    std::vector<uint8_t> tiers_;

    SumTree dec_tree_, flo_tree_;
};

} // namespace drq
