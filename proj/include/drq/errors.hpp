#pragma once

#include <stdexcept>
#include <string>

namespace drq {

// Base for all library errors.
struct error : std::runtime_error {
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Bad or unknown configuration. Configs fail closed: unknown keys are errors.
struct config_error : error {
    explicit config_error(const std::string& what) : error("config error: " + what) {}
};

// Tensor/network dimension mismatch.
struct shape_error : error {
    explicit shape_error(const std::string& what) : error("shape error: " + what) {}
};

// Invalid runtime input (bad argument values, malformed files).
struct input_error : error {
    explicit input_error(const std::string& what) : error("input error: " + what) {}
};

// Object used in a state that does not permit the operation, or a broken
// internal invariant.
struct state_error : error {
    explicit state_error(const std::string& what) : error("state error: " + what) {}
};

} // namespace drq
