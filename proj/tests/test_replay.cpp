#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "drq/checkpoint.hpp"
#include "drq/replay.hpp"
#include "drq/rng.hpp"

using namespace drq;

namespace {

FadedConfig tiny_config(int capacity, double eps = 1e-4, double eps_low = 0.1) {
    FadedConfig cfg;
    cfg.capacity = capacity;
    cfg.state_dim = 2;
    cfg.action_dim = 1;
    cfg.eps = eps;
    cfg.eps_low = eps_low;
    return cfg;
}

Transition make_transition(float tag) {
    Transition t;
    t.state = {tag, -tag};
    t.action = {0.5f * tag};
    t.reward = tag;
    t.next_state = {tag + 1.0f, -tag - 1.0f};
    return t;
}

void push_n(FadedBuffer& buf, int n, float tag0 = 0.0f) {
    for (int i = 0; i < n; ++i) buf.push(make_transition(tag0 + static_cast<float>(i)));
}

} // namespace

TEST_CASE("sum tree: point updates, totals and prefix picks") {
    SumTree tree(5);
    CHECK(tree.total() == 0.0);
    tree.set(0, 1.0);
    tree.set(2, 3.0);
    tree.set(4, 0.5);
    CHECK(tree.total() == 4.5);
    CHECK(tree.get(2) == 3.0);

    CHECK(tree.pick(0.0) == 0);
    CHECK(tree.pick(0.999) == 0);
    CHECK(tree.pick(1.0) == 2);
    CHECK(tree.pick(3.999) == 2);
    CHECK(tree.pick(4.2) == 4);
    // Off-the-end mass lands on the last positive leaf.
    CHECK(tree.pick(100.0) == 4);

    CHECK_THROWS_AS(tree.set(1, -1.0), input_error);
    CHECK_THROWS_AS(tree.set(1, std::nan("")), input_error);
    CHECK(tree.max_node_error() == 0.0);

    tree.scale_all(0.5);
    CHECK(tree.total() == doctest::Approx(2.25).epsilon(1e-15));
    CHECK(tree.max_node_error() == 0.0);

    SumTree empty(3);
    CHECK_THROWS_AS(empty.pick(0.0), state_error);
}

TEST_CASE("a single entry takes all the probability") {
    FadedBuffer buf(tiny_config(8));
    buf.push(make_transition(1.0f));
    const auto table = buf.table();
    REQUIRE(table.size() == 1);
    CHECK(table[0].probability == 1.0);
    CHECK(table[0].age == 0);

    const auto probs = buf.exact_distribution();
    REQUIRE(probs.size() == 1);
    CHECK(probs[0] == 1.0);
}

TEST_CASE("two equal-priority entries at a strong forgetting rate") {
    FadedBuffer buf(tiny_config(8, 0.5, 0.1));
    push_n(buf, 2);
    const auto probs = buf.exact_distribution();
    REQUIRE(probs.size() == 2);
    // weights 1 and 0.5, newest first
    CHECK(probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("three equal-priority entries follow the decay weights exactly") {
    {
        FadedBuffer buf(tiny_config(8, 0.5, 0.1));
        push_n(buf, 3);
        const auto p = buf.exact_distribution();
        // weights 1, 0.5, 0.25 normalized by 1.75
        CHECK(p[0] == doctest::Approx(0.5714285714).epsilon(1e-9));
        CHECK(p[1] == doctest::Approx(0.2857142857).epsilon(1e-9));
        CHECK(p[2] == doctest::Approx(0.1428571429).epsilon(1e-9));
    }
    {
        // A higher floor catches the oldest entry: weights 1, 0.5, 0.3.
        FadedBuffer buf(tiny_config(8, 0.5, 0.3));
        push_n(buf, 3);
        const auto p = buf.exact_distribution();
        CHECK(p[0] == doctest::Approx(0.5555555556).epsilon(1e-9));
        CHECK(p[1] == doctest::Approx(0.2777777778).epsilon(1e-9));
        CHECK(p[2] == doctest::Approx(0.1666666667).epsilon(1e-9));
    }
}

TEST_CASE("zero forgetting rate leaves equal priorities uniform") {
    FadedBuffer buf(tiny_config(16, 0.0, 0.1));
    push_n(buf, 10);
    for (double p : buf.exact_distribution())
        CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(buf.age_floor() == UINT64_MAX); // decay never reaches the floor
}

TEST_CASE("the age ratio between two entries matches the closed form") {
    // Two entries aged 0 and 5 with equal priorities: ratio (1-eps)^-5.
    FadedBuffer buf(tiny_config(16, 0.1, 1e-9));
    push_n(buf, 6);
    const auto p = buf.exact_distribution();
    CHECK(p[0] / p[5] == doctest::Approx(std::pow(0.9, -5.0)).epsilon(1e-9));
    CHECK(p[0] / p[5] == doctest::Approx(1.6935).epsilon(1e-4));
}

TEST_CASE("probabilities always sum to one") {
    FadedBuffer buf(tiny_config(64, 0.05, 0.2));
    push_n(buf, 50);
    Rng rng(3);
    std::vector<uint64_t> idx;
    std::vector<double> td;
    for (uint64_t i = 5; i < 45; i += 3) {
        idx.push_back(i);
        td.push_back(rng.uniform(0.0, 9.0));
    }
    buf.update_priorities(idx, td, 0.4);
    double s = 0.0;
    for (double p : buf.exact_distribution()) s += p;
    CHECK(std::abs(s - 1.0) <= 1e-12);
}

TEST_CASE("priority updates apply the exponent and the floor") {
    FadedBuffer buf(tiny_config(8, 0.0, 0.1));
    push_n(buf, 3);
    buf.update_priorities({0, 1, 2}, {16.0, 1.0, 0.0}, 0.4);
    CHECK(buf.priority_of(0) == doctest::Approx(std::pow(16.0, 0.4)).epsilon(1e-12));
    CHECK(buf.priority_of(0) == doctest::Approx(3.0314).epsilon(1e-4));
    CHECK(buf.priority_of(1) == 1.0); // 1^0.4 = 1
    CHECK(buf.priority_of(2) == 1.0); // floored at the minimum priority

    CHECK_THROWS_AS(buf.update_priorities({0}, {1.0, 2.0}, 0.4), input_error);
    CHECK_THROWS_AS(buf.update_priorities({0}, {1.0}, 0.0), config_error);
    CHECK_THROWS_AS(buf.update_priorities({0}, {1.0}, -0.4), config_error);
}

TEST_CASE("new entries inherit the largest priority seen so far") {
    FadedBuffer buf(tiny_config(8, 0.0, 0.1));
    push_n(buf, 2);
    CHECK(buf.priority_of(0) == 1.0);
    buf.update_priorities({0}, {32.0}, 0.4);
    buf.push(make_transition(9.0f));
    CHECK(buf.priority_of(2) == doctest::Approx(std::pow(32.0, 0.4)).epsilon(1e-12));
}

TEST_CASE("stale indices are skipped silently after eviction") {
    FadedBuffer buf(tiny_config(2, 0.0, 0.1));
    push_n(buf, 3); // index 0 evicted by index 2
    CHECK(!buf.alive(0));
    CHECK(buf.alive(1));
    CHECK(buf.alive(2));
    CHECK(buf.size() == 2);
    const double p1 = buf.priority_of(1);
    CHECK_NOTHROW(buf.update_priorities({0, 1}, {50.0, 2.0}, 0.4));
    CHECK(buf.priority_of(1) == doctest::Approx(std::pow(2.0, 0.4)).epsilon(1e-12));
    CHECK(p1 == 1.0);
    CHECK_THROWS_AS(buf.priority_of(0), input_error);
    CHECK_THROWS_AS(buf.state(0), input_error);
}

TEST_CASE("pinned priorities stay at one for the forgetting-only variant") {
    auto cfg = tiny_config(8, 0.1, 0.1);
    cfg.pin_priorities = true;
    FadedBuffer buf(cfg);
    push_n(buf, 4);
    buf.update_priorities({0, 1, 2, 3}, {9.0, 16.0, 25.0, 0.1}, 0.4);
    for (uint64_t i = 0; i < 4; ++i) CHECK(buf.priority_of(i) == 1.0);
}

TEST_CASE("entries migrate to the floored tier at the age bound") {
    // eps=0.5, eps_low=0.1: floor = ceil(ln 0.1 / ln 0.5) = 4.
    FadedBuffer buf(tiny_config(32, 0.5, 0.1));
    CHECK(buf.age_floor() == 4);
    push_n(buf, 6);
    CHECK(buf.tier_of(5) == FadedBuffer::Tier::Decaying); // age 0
    CHECK(buf.tier_of(2) == FadedBuffer::Tier::Decaying); // age 3
    CHECK(buf.tier_of(1) == FadedBuffer::Tier::Floored);  // age 4
    CHECK(buf.tier_of(0) == FadedBuffer::Tier::Floored);  // age 5

    // Floored entries weigh priority * eps_low regardless of age.
    const auto table = buf.table();
    CHECK(table.back().decay_weight == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(table[4].decay_weight == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(table[0].decay_weight == 1.0);
}

TEST_CASE("rebasing the decay tree does not change the distribution") {
    FadedBuffer buf(tiny_config(128, 0.01, 0.05));
    push_n(buf, 100);
    Rng rng(5);
    std::vector<uint64_t> idx;
    std::vector<double> td;
    for (uint64_t i = 0; i < 100; i += 7) {
        idx.push_back(i);
        td.push_back(rng.uniform(0.0, 20.0));
    }
    buf.update_priorities(idx, td, 0.4);

    const auto before = buf.exact_distribution();
    buf.force_rebase();
    const auto after = buf.exact_distribution();
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i)
        CHECK(std::abs(before[i] - after[i]) <= 1e-9 * std::max(1e-30, before[i]));
    CHECK(buf.max_tree_node_error() == 0.0);
}

TEST_CASE("the tree sampler tracks the exact distribution") {
    FadedBuffer buf(tiny_config(128, 0.05, 0.1));
    push_n(buf, 100);
    Rng rng(6);
    std::vector<uint64_t> idx;
    std::vector<double> td;
    for (uint64_t i = 0; i < 100; ++i)
        if (i % 3 == 0) {
            idx.push_back(i);
            td.push_back(rng.uniform(0.0, 30.0));
        }
    buf.update_priorities(idx, td, 0.4);

    std::map<uint64_t, double> exact;
    {
        const auto table = buf.table();
        for (const auto& row : table) exact[row.index] = row.probability;
    }
    const int draws = 200000;
    std::map<uint64_t, int> counts;
    for (int chunk = 0; chunk < 20; ++chunk)
        for (uint64_t i : buf.sample(draws / 20, rng)) counts[i] += 1;

    double tv = 0.0;
    for (const auto& [index, p] : exact)
        tv += std::abs(static_cast<double>(counts[index]) / draws - p);
    CHECK(0.5 * tv <= 0.02);
}

TEST_CASE("sampling requires a non-empty buffer and allows replacement") {
    FadedBuffer buf(tiny_config(4));
    Rng rng(7);
    CHECK_THROWS_AS(buf.sample(1, rng), state_error);
    push_n(buf, 2);
    const auto got = buf.sample(64, rng); // with replacement: batch > live
    CHECK(got.size() == 64);
    for (uint64_t i : got) CHECK(buf.alive(i));
}

TEST_CASE("push validates dimensions and rejects bad priorities") {
    FadedBuffer buf(tiny_config(4));
    Transition t = make_transition(0.0f);
    t.state = {1.0f};
    CHECK_THROWS_AS(buf.push(t), input_error);
    t = make_transition(0.0f);
    t.action = {1.0f, 2.0f};
    CHECK_THROWS_AS(buf.push(t), input_error);

    FadedConfig bad = tiny_config(0);
    CHECK_THROWS_AS(FadedBuffer{bad}, config_error);
    bad = tiny_config(4);
    bad.alpha = 0.0;
    CHECK_THROWS_AS(FadedBuffer{bad}, config_error);
}

TEST_CASE("sequence extension follows episodes, the write head and terminals") {
    FadedBuffer buf(tiny_config(32));
    // Episode of 3 steps ending in a true terminal.
    Transition t = make_transition(0.0f);
    buf.push(t);
    buf.push(t);
    Transition last = make_transition(2.0f);
    last.done = true;
    buf.push(last);

    auto seq = buf.extend(0, 5);
    CHECK(seq.start == 0);
    CHECK(seq.usable == 3);
    CHECK(seq.terminal);

    // A truncated done is not a terminal for bootstrapping.
    Transition cut = make_transition(3.0f);
    cut.done = true;
    cut.truncated = true;
    buf.push(make_transition(3.0f));
    buf.push(cut);
    seq = buf.extend(3, 5);
    CHECK(seq.usable == 2);
    CHECK(!seq.terminal);

    // The write head clips an unfinished run.
    buf.push(make_transition(5.0f));
    seq = buf.extend(5, 4);
    CHECK(seq.usable == 1);
    CHECK(!seq.terminal);
    buf.push(make_transition(6.0f));
    seq = buf.extend(5, 4);
    CHECK(seq.usable == 2);

    // Sampled sequences respect the same bounds.
    Rng rng(8);
    for (const auto& s : buf.sample_sequences(32, 3, rng)) {
        CHECK(s.usable >= 1);
        CHECK(s.usable <= 3);
        CHECK(buf.alive(s.start));
    }
}

TEST_CASE("the table is ordered newest first with normalized decay weights") {
    FadedBuffer buf(tiny_config(16, 0.2, 0.01));
    push_n(buf, 5);
    const auto table = buf.table();
    REQUIRE(table.size() == 5);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(table[i].age == i);
        CHECK(table[i].index == 4 - i);
        CHECK(table[i].decay_weight ==
              doctest::Approx(std::pow(0.8, static_cast<double>(i))).epsilon(1e-12));
    }
}

TEST_CASE("the csv dump carries the audit header and one row per entry") {
    FadedBuffer buf(tiny_config(8, 0.1, 0.1));
    push_n(buf, 3);
    std::ostringstream os;
    buf.dump_csv(os);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "age,priority,decay_weight,exact_probability");
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("save and load restore the buffer bit for bit") {
    FadedBuffer buf(tiny_config(16, 0.03, 0.2));
    push_n(buf, 20); // wraps: 4 evictions
    Rng rng(9);
    std::vector<uint64_t> idx = {6, 9, 12, 19};
    buf.update_priorities(idx, {2.0, 0.5, 7.0, 1.3}, 0.4);

    Checkpoint ck;
    buf.save(ck, "buffer");

    FadedBuffer back(tiny_config(16, 0.03, 0.2));
    back.load(ck, "buffer");

    CHECK(back.size() == buf.size());
    CHECK(back.pushes() == buf.pushes());
    CHECK(back.newest() == buf.newest());
    CHECK(back.total_mass() == buf.total_mass());
    CHECK(back.decay_global_factor() == buf.decay_global_factor());
    const auto pa = buf.exact_distribution();
    const auto pb = back.exact_distribution();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);

    for (uint64_t i = buf.newest() - buf.size() + 1; i <= buf.newest(); ++i) {
        CHECK(buf.priority_of(i) == back.priority_of(i));
        CHECK(buf.reward(i) == back.reward(i));
        CHECK(buf.state(i)[0] == back.state(i)[0]);
        CHECK(buf.tier_of(i) == back.tier_of(i));
    }

    // Sampling streams continue identically.
    Rng ra(10), rb(10);
    CHECK(buf.sample(256, ra) == back.sample(256, rb));
}

TEST_CASE("long pushes keep the internal trees exactly consistent") {
    FadedBuffer buf(tiny_config(64, 0.02, 0.05));
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        buf.push(make_transition(static_cast<float>(i % 17)));
        if (i % 13 == 0 && !buf.empty()) {
            const uint64_t pick = buf.newest();
            buf.update_priorities({pick}, {rng.uniform(0.0, 40.0)}, 0.4);
        }
    }
    CHECK(buf.max_tree_node_error() == 0.0);
    CHECK(buf.size() == 64);
    double s = 0.0;
    for (double p : buf.exact_distribution()) s += p;
    CHECK(std::abs(s - 1.0) <= 1e-12);
}
