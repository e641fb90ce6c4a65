#pragma once

#include <memory>
#include <string>
#include <vector>

#include "drq/errors.hpp"
#include "drq/rng.hpp"

namespace drq {

struct EnvSpec {
    std::string name;
    int state_dim = 0;
    int action_dim = 0;
    int episode_len = 0;
    double dt = 0.0;
};

// Deterministic toy continuous-control environments. Actions are
// componentwise in [-1, 1] (clipped defensively). reset(seed) fully
// determines the trajectory for a fixed action sequence.
class Env {
  public:
    virtual ~Env() = default;

    struct StepResult {
        std::vector<float> obs;
        float reward = 0.0f;
        bool done = false;
        bool truncated = false;
    };

    virtual const EnvSpec& spec() const = 0;
    virtual std::vector<float> reset(uint64_t seed) = 0;
    virtual StepResult step(const std::vector<float>& action) = 0;
    virtual std::vector<float> observe() const = 0;

    // Physical coordinates plus step counter; enough to resume mid-episode.
    virtual std::vector<double> phys_state() const = 0;
    virtual void set_phys_state(const std::vector<double>& s) = 0;
};

// name in {PointMass2D, PendulumSwingUp, SparseGoal2D}
std::unique_ptr<Env> make_env(const std::string& name);

} // namespace drq
