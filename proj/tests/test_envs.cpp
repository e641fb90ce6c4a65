#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "drq/envs.hpp"
#include "drq/rng.hpp"

using namespace drq;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("environment registry and specs") {
    CHECK_THROWS_AS(make_env("NoSuchEnv"), config_error);

    auto pm = make_env("PointMass2D");
    CHECK(pm->spec().name == "PointMass2D");
    CHECK(pm->spec().state_dim == 4);
    CHECK(pm->spec().action_dim == 2);
    CHECK(pm->spec().episode_len == 100);
    CHECK(pm->spec().dt == 0.05);

    auto sg = make_env("SparseGoal2D");
    CHECK(sg->spec().state_dim == 4);
    CHECK(sg->spec().action_dim == 2);
    CHECK(sg->spec().episode_len == 100);

    auto pend = make_env("PendulumSwingUp");
    CHECK(pend->spec().state_dim == 3);
    CHECK(pend->spec().action_dim == 1);
    CHECK(pend->spec().episode_len == 200);
    CHECK(pend->spec().dt == 0.05);
}

TEST_CASE("point mass integrates one hand-computed step") {
    auto env = make_env("PointMass2D");
    env->reset(0);
    env->set_phys_state({1.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    const auto r = env->step({-1.0f, 0.0f});
    // v = -0.05, p = 1 - 0.0025, reward = -|p'| after the update.
    CHECK(r.obs[0] == doctest::Approx(0.9975).epsilon(1e-6));
    CHECK(r.obs[1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.obs[2] == doctest::Approx(-0.05).epsilon(1e-6));
    CHECK(r.obs[3] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.reward == doctest::Approx(-0.9975).epsilon(1e-6));
    CHECK_FALSE(r.done);
    CHECK_FALSE(r.truncated);

    // At the origin with no push the cost is exactly zero.
    env->set_phys_state({0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    CHECK(env->step({0.0f, 0.0f}).reward == 0.0f);
}

TEST_CASE("point mass caps the velocity componentwise") {
    auto env = make_env("PointMass2D");
    env->reset(3);
    env->set_phys_state({0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    for (int i = 0; i < 60; ++i) env->step({1.0f, -1.0f});
    const auto s = env->phys_state();
    CHECK(s[2] == 2.0);
    CHECK(s[3] == -2.0);
}

TEST_CASE("point mass times out truncated and refuses further steps") {
    auto env = make_env("PointMass2D");
    env->reset(1);
    env->set_phys_state({0.5, -0.5, 0.0, 0.0, 99.0, 0.0});
    const auto r = env->step({0.0f, 0.0f});
    CHECK(r.done);
    CHECK(r.truncated);
    CHECK_THROWS_AS(env->step({0.0f, 0.0f}), state_error);
}

TEST_CASE("point mass rewards are never positive") {
    auto env = make_env("PointMass2D");
    env->reset(17);
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        const auto r = env->step({static_cast<float>(rng.uniform(-1.0, 1.0)),
                                  static_cast<float>(rng.uniform(-1.0, 1.0))});
        CHECK(r.reward <= 0.0f);
        if (r.done) break;
    }
}

TEST_CASE("point mass reset spreads positions and zeroes velocity") {
    auto env = make_env("PointMass2D");
    double lo = 1e9, hi = -1e9;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const auto obs = env->reset(seed);
        CHECK(obs[0] >= -1.0f);
        CHECK(obs[0] <= 1.0f);
        CHECK(obs[1] >= -1.0f);
        CHECK(obs[1] <= 1.0f);
        CHECK(obs[2] == 0.0f);
        CHECK(obs[3] == 0.0f);
        lo = std::min(lo, static_cast<double>(obs[0]));
        hi = std::max(hi, static_cast<double>(obs[0]));
    }
    CHECK(lo < -0.5);
    CHECK(hi > 0.5);
}

TEST_CASE("actions outside the range behave like their clipped values") {
    auto a = make_env("PointMass2D");
    auto b = make_env("PointMass2D");
    a->reset(5);
    b->reset(5);
    a->set_phys_state({0.2, -0.3, 0.1, 0.0, 0.0, 0.0});
    b->set_phys_state({0.2, -0.3, 0.1, 0.0, 0.0, 0.0});
    const auto ra = a->step({10.0f, -42.0f});
    const auto rb = b->step({1.0f, -1.0f});
    CHECK(ra.obs == rb.obs);
    CHECK(ra.reward == rb.reward);
}

TEST_CASE("sparse goal pays only inside the goal disc and terminates there") {
    auto env = make_env("SparseGoal2D");
    env->reset(0);
    env->set_phys_state({0.05, 0.0, 0.0, 0.0, 0.0, 0.0});
    const auto hit = env->step({0.0f, 0.0f});
    CHECK(hit.reward == 1.0f);
    CHECK(hit.done);
    CHECK_FALSE(hit.truncated); // genuine terminal, not a timeout

    env->reset(0);
    env->set_phys_state({0.5, 0.5, 0.0, 0.0, 0.0, 0.0});
    const auto miss = env->step({0.0f, 0.0f});
    CHECK(miss.reward == 0.0f);
    CHECK_FALSE(miss.done);

    // Timing out away from the goal is a truncation.
    env->reset(0);
    env->set_phys_state({0.5, 0.5, 0.0, 0.0, 99.0, 0.0});
    const auto out = env->step({0.0f, 0.0f});
    CHECK(out.reward == 0.0f);
    CHECK(out.done);
    CHECK(out.truncated);
}

TEST_CASE("pendulum starts hanging near the bottom at rest") {
    auto env = make_env("PendulumSwingUp");
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const auto obs = env->reset(seed);
        CHECK(obs[0] <= -0.9987f); // cos(theta), theta within 0.05 of pi
        CHECK(std::abs(obs[1]) <= 0.051f);
        CHECK(obs[2] == 0.0f);
    }
}

TEST_CASE("pendulum balanced upright at rest stays put with zero cost") {
    auto env = make_env("PendulumSwingUp");
    env->reset(0);
    env->set_phys_state({0.0, 0.0, 0.0, 0.0});
    const auto r = env->step({0.0f});
    CHECK(r.reward == 0.0f);
    CHECK(r.obs[0] == 1.0f);
    CHECK(r.obs[1] == 0.0f);
    CHECK(r.obs[2] == 0.0f);
}

TEST_CASE("pendulum integrates one hand-computed step") {
    auto env = make_env("PendulumSwingUp");
    env->reset(0);
    env->set_phys_state({kPi / 2, 0.0, 0.0, 0.0});

    const auto before = env->observe();
    CHECK(std::abs(before[0]) <= 1e-7f);
    CHECK(before[1] == doctest::Approx(1.0).epsilon(1e-7));

    const auto r = env->step({0.5f});
    // u = 1, thetadd = 15*sin(pi/2) + 3 = 18, thetad = 0.9 (semi-implicit),
    // theta = pi/2 + 0.045.
    const double theta = kPi / 2 + 0.045;
    const double expect_reward = -(theta * theta + 0.1 * 0.81 + 0.001 * 1.0);
    CHECK(r.obs[0] == doctest::Approx(std::cos(theta)).epsilon(1e-6));
    CHECK(r.obs[1] == doctest::Approx(std::sin(theta)).epsilon(1e-6));
    CHECK(r.obs[2] == doctest::Approx(0.9 / 8.0).epsilon(1e-6));
    CHECK(r.reward == doctest::Approx(expect_reward).epsilon(1e-6));
    CHECK(env->phys_state()[1] == 0.9);
}

TEST_CASE("pendulum angular velocity saturates at the clamp") {
    auto env = make_env("PendulumSwingUp");
    env->reset(0);
    env->set_phys_state({kPi / 2, 7.9, 0.0, 0.0});
    env->step({1.0f});
    CHECK(env->phys_state()[1] == 8.0);
}

TEST_CASE("pendulum observations stay inside the unit box") {
    auto env = make_env("PendulumSwingUp");
    env->reset(9);
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const auto r = env->step({static_cast<float>(rng.uniform(-1.0, 1.0))});
        for (float x : r.obs) {
            CHECK(x <= 1.0f);
            CHECK(x >= -1.0f);
        }
        CHECK(r.reward <= 0.0f);
        if (r.done) {
            CHECK(r.truncated); // the swing-up task only ends by timeout
            break;
        }
    }
}

TEST_CASE("free pendulum swings with little energy drift") {
    // With no torque the dynamics are conservative:
    // E = thetad^2/6 + 5 cos(theta) (rod about its pivot). The semi-implicit
    // update is symplectic, so the energy should oscillate near E0 rather
    // than drift. Released from theta=2 the speed peaks near 4.2, well away
    // from the velocity clamp.
    auto env = make_env("PendulumSwingUp");
    env->reset(0);
    env->set_phys_state({2.0, 0.0, 0.0, 0.0});
    const auto energy = [&]() {
        const auto s = env->phys_state();
        return s[1] * s[1] / 6.0 + 5.0 * std::cos(s[0]);
    };
    const double e0 = energy();
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        env->step({0.0f});
        worst = std::max(worst, std::abs(energy() - e0));
        CHECK(std::abs(env->phys_state()[1]) < 8.0);
    }
    CHECK(worst / std::abs(e0) <= 0.35);       // bounded oscillation
    CHECK(std::abs(energy() - e0) / std::abs(e0) <= 0.35);
}

TEST_CASE("episodes are reproducible from the seed") {
    for (const char* name : {"PointMass2D", "SparseGoal2D", "PendulumSwingUp"}) {
        auto a = make_env(name);
        auto b = make_env(name);
        CHECK(a->reset(123) == b->reset(123));
        Rng ra(7), rb(7);
        for (int i = 0; i < 50; ++i) {
            std::vector<float> act(a->spec().action_dim);
            for (auto& x : act) x = static_cast<float>(ra.uniform(-1.0, 1.0));
            std::vector<float> act2(b->spec().action_dim);
            for (auto& x : act2) x = static_cast<float>(rb.uniform(-1.0, 1.0));
            const auto sa = a->step(act);
            const auto sb = b->step(act2);
            CHECK(sa.obs == sb.obs);
            CHECK(sa.reward == sb.reward);
            CHECK(sa.done == sb.done);
            if (sa.done) break;
        }
        CHECK(a->reset(1) != a->reset(2));
    }
}

TEST_CASE("physical state snapshots resume exactly") {
    for (const char* name : {"PointMass2D", "PendulumSwingUp"}) {
        auto env = make_env(name);
        env->reset(42);
        std::vector<float> act(env->spec().action_dim, 0.37f);
        for (int i = 0; i < 10; ++i) env->step(act);
        const auto snap = env->phys_state();
        const auto r1 = env->step(act);

        auto fresh = make_env(name);
        fresh->reset(999); // unrelated seed; the snapshot overrides it
        fresh->set_phys_state(snap);
        const auto r2 = fresh->step(act);
        CHECK(r1.obs == r2.obs);
        CHECK(r1.reward == r2.reward);
        CHECK(r1.done == r2.done);
    }
}

TEST_CASE("malformed inputs are rejected") {
    auto pm = make_env("PointMass2D");
    pm->reset(0);
    CHECK_THROWS_AS(pm->step({1.0f}), input_error);
    CHECK_THROWS_AS(pm->step({1.0f, 0.0f, 0.0f}), input_error);
    CHECK_THROWS_AS(pm->set_phys_state({1.0, 2.0, 3.0}), input_error);

    auto pend = make_env("PendulumSwingUp");
    pend->reset(0);
    CHECK_THROWS_AS(pend->step({1.0f, 1.0f}), input_error);
    CHECK_THROWS_AS(pend->set_phys_state({1.0, 2.0, 3.0, 4.0, 5.0}), input_error);
}
