#include "drq/envs.hpp"

#include <algorithm>
#include <cmath>

namespace drq {

namespace {

float clipf(float x, float lo, float hi) { return std::min(std::max(x, lo), hi); }

double wrap_pi(double x) {
    // into (-pi, pi]
    const double two_pi = 6.283185307179586476925286766559;
    double y = std::fmod(x, two_pi);
    if (y <= -3.14159265358979323846) y += two_pi;
    if (y > 3.14159265358979323846) y -= two_pi;
    return y;
}

// Shared double-integrator point mass: v += a*dt (|v| <= 2 per component),
// p += v*dt. Sparse variant layers its own reward/termination on top.
class PointMassBase : public Env {
  public:
    PointMassBase(std::string name, int episode_len)
        : spec_{std::move(name), 4, 2, episode_len, 0.05} {}

    const EnvSpec& spec() const override { return spec_; }

    std::vector<float> reset(uint64_t seed) override {
        Rng rng(seed);
        px_ = rng.uniform(-1.0, 1.0);
        py_ = rng.uniform(-1.0, 1.0);
        vx_ = vy_ = 0.0;
        steps_ = 0;
        finished_ = false;
        return observe();
    }

    StepResult step(const std::vector<float>& action) override {
        if (finished_) throw state_error(spec_.name + ": step on a finished episode");
        if (action.size() != 2) throw input_error(spec_.name + ": action must be 2-d");
        const double ax = clipf(action[0], -1.0f, 1.0f);
        const double ay = clipf(action[1], -1.0f, 1.0f);
        vx_ = std::clamp(vx_ + ax * spec_.dt, -2.0, 2.0);
        vy_ = std::clamp(vy_ + ay * spec_.dt, -2.0, 2.0);
        px_ += vx_ * spec_.dt;
        py_ += vy_ * spec_.dt;
        steps_ += 1;
        StepResult r;
        r.obs = observe();
        r.reward = reward_fn();
        const bool at_goal = terminal_fn();
        const bool timeout = steps_ >= spec_.episode_len;
        r.done = at_goal || timeout;
        r.truncated = timeout && !at_goal;
        finished_ = r.done;
        return r;
    }

    std::vector<float> observe() const override {
        return {static_cast<float>(px_), static_cast<float>(py_),
                static_cast<float>(vx_), static_cast<float>(vy_)};
    }

    std::vector<double> phys_state() const override {
        return {px_, py_, vx_, vy_, static_cast<double>(steps_),
                finished_ ? 1.0 : 0.0};
    }

    void set_phys_state(const std::vector<double>& s) override {
        if (s.size() != 6) throw input_error(spec_.name + ": bad state vector");
        px_ = s[0];
        py_ = s[1];
        vx_ = s[2];
        vy_ = s[3];
        steps_ = static_cast<int>(s[4]);
        finished_ = s[5] != 0.0;
    }

  protected:
    double dist() const { return std::sqrt(px_ * px_ + py_ * py_); }
    virtual float reward_fn() const = 0;
    virtual bool terminal_fn() const = 0;

    EnvSpec spec_;
    double px_ = 0, py_ = 0, vx_ = 0, vy_ = 0;
    int steps_ = 0;
    bool finished_ = false;
};

class PointMass2D final : public PointMassBase {
  public:
    PointMass2D() : PointMassBase("PointMass2D", 100) {}

  private:
    float reward_fn() const override { return static_cast<float>(-dist()); }
    bool terminal_fn() const override { return false; }
};

class SparseGoal2D final : public PointMassBase {
  public:
    SparseGoal2D() : PointMassBase("SparseGoal2D", 100) {}

  private:
    float reward_fn() const override { return dist() <= 0.1 ? 1.0f : 0.0f; }
    bool terminal_fn() const override { return dist() <= 0.1; }
};

// Rod pendulum pivoted at one end, theta measured from upright.
// thetadd = (3g/2l) sin(theta) + (3/ml^2) u, u = 2*action, semi-implicit
// Euler, thetad clipped to [-8, 8].
class PendulumSwingUp final : public Env {
  public:
    PendulumSwingUp() : spec_{"PendulumSwingUp", 3, 1, 200, 0.05} {}

    const EnvSpec& spec() const override { return spec_; }

    std::vector<float> reset(uint64_t seed) override {
        Rng rng(seed);
        theta_ = kPi + rng.uniform(-0.05, 0.05);
        thetad_ = 0.0;
        steps_ = 0;
        finished_ = false;
        return observe();
    }

    StepResult step(const std::vector<float>& action) override {
        if (finished_) throw state_error("PendulumSwingUp: step on a finished episode");
        if (action.size() != 1) throw input_error("PendulumSwingUp: action must be 1-d");
        const double u = 2.0 * clipf(action[0], -1.0f, 1.0f);
        const double thetadd = (3.0 * kG / (2.0 * kL)) * std::sin(theta_) +
                               (3.0 / (kM * kL * kL)) * u;
        thetad_ = std::clamp(thetad_ + thetadd * spec_.dt, -8.0, 8.0);
        theta_ += thetad_ * spec_.dt;
        steps_ += 1;
        StepResult r;
        r.obs = observe();
        const double w = wrap_pi(theta_);
        r.reward = static_cast<float>(-(w * w + 0.1 * thetad_ * thetad_ + 0.001 * u * u));
        r.done = steps_ >= spec_.episode_len;
        r.truncated = r.done;
        finished_ = r.done;
        return r;
    }

    std::vector<float> observe() const override {
        return {static_cast<float>(std::cos(theta_)),
                static_cast<float>(std::sin(theta_)),
                static_cast<float>(thetad_ / 8.0)};
    }

    std::vector<double> phys_state() const override {
        return {theta_, thetad_, static_cast<double>(steps_), finished_ ? 1.0 : 0.0};
    }

    void set_phys_state(const std::vector<double>& s) override {
        if (s.size() != 4) throw input_error("PendulumSwingUp: bad state vector");
        theta_ = s[0];
        thetad_ = s[1];
        steps_ = static_cast<int>(s[2]);
        finished_ = s[3] != 0.0;
    }

  private:
    static constexpr double kPi = 3.14159265358979323846;
    static constexpr double kG = 10.0, kM = 1.0, kL = 1.0;

    EnvSpec spec_;
    double theta_ = kPi, thetad_ = 0.0;
    int steps_ = 0;
    bool finished_ = false;
};

} // namespace

std::unique_ptr<Env> make_env(const std::string& name) {
    if (name == "PointMass2D") return std::make_unique<PointMass2D>();
    if (name == "PendulumSwingUp") return std::make_unique<PendulumSwingUp>();
    if (name == "SparseGoal2D") return std::make_unique<SparseGoal2D>();
    throw config_error("unknown environment: " + name);
}

} // namespace drq
