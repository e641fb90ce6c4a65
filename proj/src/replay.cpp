#include "drq/replay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace drq {

SumTree::SumTree(int capacity) : cap_(capacity) {
    if (capacity < 0) throw config_error("sum tree capacity must be nonnegative");
    base_ = 1;
    while (base_ < std::max(capacity, 1)) base_ *= 2;
    leaf_.assign(static_cast<size_t>(cap_), 0.0);
    heap_.assign(static_cast<size_t>(base_) * 2, 0.0);
}

void SumTree::set(int leaf, double value) {
    if (leaf < 0 || leaf >= cap_) throw input_error("sum tree: leaf out of range");
    if (!(value >= 0.0) || !std::isfinite(value))
        throw input_error("sum tree: leaf value must be finite and nonnegative");
    leaf_[leaf] = value;
    size_t i = static_cast<size_t>(base_) + leaf;
    heap_[i] = value;
    for (i /= 2; i >= 1; i /= 2) heap_[i] = heap_[2 * i] + heap_[2 * i + 1];
}

double SumTree::get(int leaf) const {
    if (leaf < 0 || leaf >= cap_) throw input_error("sum tree: leaf out of range");
    return leaf_[leaf];
}

double SumTree::total() const { return heap_[1]; }

int SumTree::pick(double u) const {
    const double t = total();
    if (!(t > 0.0)) throw state_error("sum tree: pick on zero total mass");
    if (u >= t) u = std::nextafter(t, 0.0);
    if (u < 0.0) u = 0.0;
    size_t i = 1;
    while (i < static_cast<size_t>(base_)) {
        const double left = heap_[2 * i];
        if (u < left) {
            i = 2 * i;
        } else {
            u -= left;
            i = 2 * i + 1;
        }
    }
    return static_cast<int>(i - base_);
}

void SumTree::scale_all(double factor) {
    for (auto& x : leaf_) x *= factor;
    rebuild();
}

void SumTree::load_leaves(const std::vector<double>& leaves) {
    if (leaves.size() != leaf_.size()) throw input_error("sum tree: leaf count mismatch");
    leaf_ = leaves;
    rebuild();
}

void SumTree::rebuild() {
    std::fill(heap_.begin(), heap_.end(), 0.0);
    for (int i = 0; i < cap_; ++i) heap_[static_cast<size_t>(base_) + i] = leaf_[i];
    for (size_t i = base_ - 1; i >= 1; --i) heap_[i] = heap_[2 * i] + heap_[2 * i + 1];
}

double SumTree::max_node_error() const {
    double worst = 0.0;
    for (size_t i = 1; i < static_cast<size_t>(base_); ++i)
        worst = std::max(worst, std::abs(heap_[i] - (heap_[2 * i] + heap_[2 * i + 1])));
    return worst;
}

uint64_t FadedBuffer::compute_age_floor(double eps, double eps_low) {
    if (eps <= 0.0) return std::numeric_limits<uint64_t>::max();
    if (eps_low <= 0.0) return std::numeric_limits<uint64_t>::max();
    if (eps_low >= 1.0) return 0;
    const double f = std::ceil(std::log(eps_low) / std::log1p(-eps));
    if (f >= 1e18) return std::numeric_limits<uint64_t>::max();
    return f <= 0.0 ? 0 : static_cast<uint64_t>(f);
}

FadedBuffer::FadedBuffer(const FadedConfig& cfg)
    : cfg_(cfg), dec_tree_(cfg.capacity), flo_tree_(cfg.capacity) {
    if (cfg.capacity < 1) throw config_error("replay capacity must be >= 1");
    if (cfg.state_dim < 1 || cfg.action_dim < 1)
        throw config_error("replay dims must be >= 1");
    if (!(cfg.alpha > 0.0)) throw config_error("replay alpha must be positive");
    if (cfg.eps < 0.0 || cfg.eps >= 1.0)
        throw config_error("replay eps must be in [0, 1)");
    if (cfg.eps_low < 0.0 || cfg.eps_low > 1.0)
        throw config_error("replay eps_low must be in [0, 1]");
    if (!(cfg.min_priority > 0.0))
        throw config_error("replay min priority must be positive");
    age_floor_ = compute_age_floor(cfg.eps, cfg.eps_low);
    max_priority_seen_ = cfg.min_priority;
    const size_t cap = static_cast<size_t>(cfg.capacity);
    states_.assign(cap * cfg.state_dim, 0.0f);
    next_states_.assign(cap * cfg.state_dim, 0.0f);
    actions_.assign(cap * cfg.action_dim, 0.0f);
    rewards_.assign(cap, 0.0f);
    dones_.assign(cap, 0);
    truncs_.assign(cap, 0);
    occupied_.assign(cap, 0);
    insert_steps_.assign(cap, 0);
    priorities_.assign(cap, 0.0);
    tiers_.assign(cap, 0);
}

uint64_t FadedBuffer::push(const Transition& t) {
    if (static_cast<int>(t.state.size()) != cfg_.state_dim ||
        static_cast<int>(t.next_state.size()) != cfg_.state_dim ||
        static_cast<int>(t.action.size()) != cfg_.action_dim)
        throw input_error("replay push: transition dims do not match buffer schema");
    const uint64_t idx = next_insert_;
    const int slot = slot_of(idx);
    if (occupied_[slot]) {
        // evict: clear whichever tree holds the old entry
        dec_tree_.set(slot, 0.0);
        flo_tree_.set(slot, 0.0);
        live_ -= 1;
        if (insert_steps_[slot] >= dec_head_) dec_head_ = insert_steps_[slot] + 1;
    }
    std::copy(t.state.begin(), t.state.end(),
              states_.begin() + static_cast<size_t>(slot) * cfg_.state_dim);
    std::copy(t.next_state.begin(), t.next_state.end(),
              next_states_.begin() + static_cast<size_t>(slot) * cfg_.state_dim);
    std::copy(t.action.begin(), t.action.end(),
              actions_.begin() + static_cast<size_t>(slot) * cfg_.action_dim);
    rewards_[slot] = t.reward;
    dones_[slot] = t.done ? 1 : 0;
    truncs_[slot] = t.truncated ? 1 : 0;
    occupied_[slot] = 1;
    insert_steps_[slot] = idx;
    priorities_[slot] = cfg_.pin_priorities ? 1.0 : max_priority_seen_;
    next_insert_ += 1;
    live_ += 1;
    maybe_rebase();
    if (age_floor_ == 0) {
        tiers_[slot] = static_cast<uint8_t>(Tier::Floored);
    } else {
        tiers_[slot] = static_cast<uint8_t>(Tier::Decaying);
    }
    set_leaf(slot);
    migrate_aged();
    return idx;
}

uint64_t FadedBuffer::newest() const {
    if (empty()) throw state_error("replay: empty buffer has no newest entry");
    return next_insert_ - 1;
}

uint64_t FadedBuffer::age_of(uint64_t index) const {
    check_live(index);
    return newest() - index;
}

bool FadedBuffer::alive(uint64_t index) const {
    if (index >= next_insert_) return false;
    const int slot = slot_of(index);
    return occupied_[slot] && insert_steps_[slot] == index;
}

void FadedBuffer::check_live(uint64_t index) const {
    if (!alive(index)) throw input_error("replay: index does not reference a live entry");
}

const float* FadedBuffer::state(uint64_t index) const {
    check_live(index);
    return states_.data() + static_cast<size_t>(slot_of(index)) * cfg_.state_dim;
}
const float* FadedBuffer::action(uint64_t index) const {
    check_live(index);
    return actions_.data() + static_cast<size_t>(slot_of(index)) * cfg_.action_dim;
}
const float* FadedBuffer::next_state(uint64_t index) const {
    check_live(index);
    return next_states_.data() + static_cast<size_t>(slot_of(index)) * cfg_.state_dim;
}
float FadedBuffer::reward(uint64_t index) const {
    check_live(index);
    return rewards_[slot_of(index)];
}
bool FadedBuffer::done(uint64_t index) const {
    check_live(index);
    return dones_[slot_of(index)] != 0;
}
bool FadedBuffer::truncated(uint64_t index) const {
    check_live(index);
    return truncs_[slot_of(index)] != 0;
}
double FadedBuffer::priority_of(uint64_t index) const {
    check_live(index);
    return priorities_[slot_of(index)];
}
FadedBuffer::Tier FadedBuffer::tier_of(uint64_t index) const {
    check_live(index);
    return static_cast<Tier>(tiers_[slot_of(index)]);
}

double FadedBuffer::decay_global_factor() const {
    if (cfg_.eps <= 0.0 || empty()) return 1.0;
    return std::pow(1.0 - cfg_.eps, static_cast<double>(newest() - rebase_));
}

double FadedBuffer::decaying_stored(int slot) const {
    if (cfg_.eps <= 0.0) return priorities_[slot];
    // (1-eps)^(rebase - insert): insert >= rebase gives a growing factor,
    // bounded by the rebase threshold.
    const double expo = static_cast<double>(rebase_) -
                        static_cast<double>(insert_steps_[slot]);
    return priorities_[slot] * std::pow(1.0 - cfg_.eps, expo);
}

void FadedBuffer::set_leaf(int slot) {
    if (!occupied_[slot]) {
        dec_tree_.set(slot, 0.0);
        flo_tree_.set(slot, 0.0);
        return;
    }
    if (tiers_[slot] == static_cast<uint8_t>(Tier::Decaying)) {
        dec_tree_.set(slot, decaying_stored(slot));
        flo_tree_.set(slot, 0.0);
    } else {
        dec_tree_.set(slot, 0.0);
        flo_tree_.set(slot, priorities_[slot]);
    }
}

void FadedBuffer::migrate_aged() {
    if (age_floor_ == std::numeric_limits<uint64_t>::max() || empty()) return;
    const uint64_t now = newest();
    while (dec_head_ < next_insert_ && now - dec_head_ >= age_floor_) {
        const uint64_t idx = dec_head_;
        dec_head_ += 1;
        const int slot = slot_of(idx);
        if (!occupied_[slot] || insert_steps_[slot] != idx) continue; // evicted
        if (tiers_[slot] != static_cast<uint8_t>(Tier::Decaying)) continue;
        tiers_[slot] = static_cast<uint8_t>(Tier::Floored);
        set_leaf(slot);
    }
}

void FadedBuffer::maybe_rebase() {
    if (cfg_.eps <= 0.0 || next_insert_ == 0) return;
    const uint64_t now = next_insert_ - 1;
    // rebase when (1-eps)^-(now - rebase) would exceed 1e100
    const double growth = -static_cast<double>(now - rebase_) * std::log1p(-cfg_.eps);
    if (growth <= std::log(1e100)) return;
    force_rebase();
}

void FadedBuffer::force_rebase() {
    if (cfg_.eps <= 0.0 || empty()) return;
    const uint64_t now = newest();
    if (now == rebase_) return;
    const double factor = std::pow(1.0 - cfg_.eps, static_cast<double>(now - rebase_));
    dec_tree_.scale_all(factor);
    rebase_ = now;
}

std::vector<uint64_t> FadedBuffer::sample(int batch, Rng& rng) const {
    if (empty()) throw state_error("replay sample: empty buffer");
    if (batch < 1) throw input_error("replay sample: batch must be >= 1");
    const double g = decay_global_factor();
    const double m_dec = dec_tree_.total() * g;
    const double m_flo = flo_tree_.total() * cfg_.eps_low;
    const double total = m_dec + m_flo;
    if (!(total > 0.0)) throw state_error("replay sample: zero total mass");
    std::vector<uint64_t> out;
    out.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        const double u = rng.uniform() * total;
        int slot;
        if (u < m_dec) {
            slot = dec_tree_.pick(u / g);
        } else {
            slot = flo_tree_.pick((u - m_dec) / cfg_.eps_low);
        }
        out.push_back(insert_steps_[slot]);
    }
    return out;
}

FadedBuffer::SeqRef FadedBuffer::extend(uint64_t start, int horizon) const {
    check_live(start);
    if (horizon < 1) throw input_error("replay: horizon must be >= 1");
    SeqRef ref;
    ref.start = start;
    ref.usable = 1;
    const uint64_t now = newest();
    // extend while the previous transition continues the episode and the
    // next index has not been clipped by the write head
    while (ref.usable < horizon) {
        const uint64_t prev = start + ref.usable - 1;
        if (dones_[slot_of(prev)] != 0) break;
        const uint64_t next = start + ref.usable;
        if (next > now) break;
        if (!alive(next)) break;
        ref.usable += 1;
    }
    const int last_slot = slot_of(start + ref.usable - 1);
    ref.terminal = dones_[last_slot] != 0 && truncs_[last_slot] == 0;
    return ref;
}

std::vector<FadedBuffer::SeqRef> FadedBuffer::sample_sequences(int batch, int horizon,
                                                               Rng& rng) const {
    const std::vector<uint64_t> starts = sample(batch, rng);
    std::vector<SeqRef> out;
    out.reserve(starts.size());
    for (uint64_t s : starts) out.push_back(extend(s, horizon));
    return out;
}

void FadedBuffer::update_priorities(const std::vector<uint64_t>& indices,
                                    const std::vector<double>& abs_td, double alpha) {
    if (!(alpha > 0.0)) throw config_error("replay: alpha must be positive");
    if (indices.size() != abs_td.size())
        throw input_error("replay: indices/td size mismatch");
    for (size_t i = 0; i < indices.size(); ++i) {
        if (!alive(indices[i])) continue; // evicted since sampling
        const int slot = slot_of(indices[i]);
        double p = 1.0;
        if (!cfg_.pin_priorities) {
            p = std::max(std::pow(std::abs(abs_td[i]), alpha), cfg_.min_priority);
            max_priority_seen_ = std::max(max_priority_seen_, p);
        }
        priorities_[slot] = p;
        set_leaf(slot);
    }
}

std::vector<FadedBuffer::Row> FadedBuffer::table() const {
    std::vector<Row> rows;
    if (empty()) return rows;
    rows.reserve(live_);
    const uint64_t now = newest();
    // newest first; ring scan by descending insert counter
    const uint64_t oldest = next_insert_ >= static_cast<uint64_t>(cfg_.capacity)
                                ? next_insert_ - cfg_.capacity
                                : 0;
    double norm = 0.0;
    for (uint64_t idx = now + 1; idx-- > oldest;) {
        const int slot = slot_of(idx);
        if (!occupied_[slot] || insert_steps_[slot] != idx) continue;
        Row r;
        r.index = idx;
        r.age = now - idx;
        r.priority = priorities_[slot];
        const double decay =
            cfg_.eps > 0.0 ? std::pow(1.0 - cfg_.eps, static_cast<double>(r.age)) : 1.0;
        r.decay_weight = std::max(cfg_.eps_low, decay);
        norm += r.priority * r.decay_weight;
        rows.push_back(r);
    }
    for (auto& r : rows) r.probability = r.priority * r.decay_weight / norm;
    return rows;
}

std::vector<double> FadedBuffer::exact_distribution() const {
    if (empty()) throw state_error("replay: exact_distribution on empty buffer");
    std::vector<Row> rows = table();
    std::vector<double> probs;
    probs.reserve(rows.size());
    for (const auto& r : rows) probs.push_back(r.probability);
    return probs;
}

void FadedBuffer::dump_csv(std::ostream& os) const {
    os << "age,priority,decay_weight,exact_probability\n";
    for (const auto& r : table())
        os << r.age << ',' << r.priority << ',' << r.decay_weight << ','
           << r.probability << '\n';
}

double FadedBuffer::total_mass() const {
    return dec_tree_.total() * decay_global_factor() +
           flo_tree_.total() * cfg_.eps_low;
}

double FadedBuffer::max_tree_node_error() const {
    return std::max(dec_tree_.max_node_error(), flo_tree_.max_node_error());
}

void FadedBuffer::save(Checkpoint& ck, const std::string& prefix) const {
    ck.put_vec(prefix + "/states", states_);
    ck.put_vec(prefix + "/next_states", next_states_);
    ck.put_vec(prefix + "/actions", actions_);
    ck.put_vec(prefix + "/rewards", rewards_);
    auto put_u8 = [&](const std::string& name, const std::vector<uint8_t>& v) {
        std::vector<uint64_t> wide(v.begin(), v.end());
        ck.put_vec(name, wide);
    };
    put_u8(prefix + "/dones", dones_);
    put_u8(prefix + "/truncs", truncs_);
    put_u8(prefix + "/occupied", occupied_);
    put_u8(prefix + "/tiers", tiers_);
    ck.put_vec(prefix + "/insert_steps", insert_steps_);
    ck.put_vec(prefix + "/priorities", priorities_);
    ck.put_vec(prefix + "/dec_leaves", dec_tree_.leaves_raw());
    ck.put_vec(prefix + "/flo_leaves", flo_tree_.leaves_raw());
    ck.put_scalar_u64(prefix + "/next_insert", next_insert_);
    ck.put_scalar_u64(prefix + "/rebase", rebase_);
    ck.put_scalar_u64(prefix + "/dec_head", dec_head_);
    ck.put_scalar_u64(prefix + "/live", live_);
    ck.put_scalar_f64(prefix + "/max_priority_seen", max_priority_seen_);
}

void FadedBuffer::load(const Checkpoint& ck, const std::string& prefix) {
    states_ = ck.get_vec<float>(prefix + "/states");
    next_states_ = ck.get_vec<float>(prefix + "/next_states");
    actions_ = ck.get_vec<float>(prefix + "/actions");
    rewards_ = ck.get_vec<float>(prefix + "/rewards");
    auto get_u8 = [&](const std::string& name) {
        std::vector<uint64_t> wide = ck.get_vec<uint64_t>(name);
        return std::vector<uint8_t>(wide.begin(), wide.end());
    };
    dones_ = get_u8(prefix + "/dones");
    truncs_ = get_u8(prefix + "/truncs");
    occupied_ = get_u8(prefix + "/occupied");
    tiers_ = get_u8(prefix + "/tiers");
    insert_steps_ = ck.get_vec<uint64_t>(prefix + "/insert_steps");
    priorities_ = ck.get_vec<double>(prefix + "/priorities");
    const size_t cap = static_cast<size_t>(cfg_.capacity);
    if (states_.size() != cap * cfg_.state_dim || occupied_.size() != cap)
        throw input_error("replay load: capacity/schema mismatch");
    dec_tree_.load_leaves(ck.get_vec<double>(prefix + "/dec_leaves"));
    flo_tree_.load_leaves(ck.get_vec<double>(prefix + "/flo_leaves"));
    next_insert_ = ck.get_scalar_u64(prefix + "/next_insert");
    rebase_ = ck.get_scalar_u64(prefix + "/rebase");
    dec_head_ = ck.get_scalar_u64(prefix + "/dec_head");
    live_ = ck.get_scalar_u64(prefix + "/live");
    max_priority_seen_ = ck.get_scalar_f64(prefix + "/max_priority_seen");
}

} // namespace drq
