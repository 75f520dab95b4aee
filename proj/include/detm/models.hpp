#pragma once

// Built-in systems, written in the same JSON schema as user configs.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "detm/config.hpp"

namespace detm {

struct ExpectedConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double mu = 0.0;
    double M_bar = 0.0;
    double c3 = 0.0;
};

struct ModelPreset {
    std::string name;
    std::string description;
    RunConfig config;
    std::optional<ExpectedConstants> expected;

    Problem build() const { return build_problem(config); }
};

/// Satellite pitch motion with a stochastic disturbance.
ModelPreset satellite_preset();

/// dx = -a x dt + sigma dW with zero controllers and V = x^2. Throws
/// std::invalid_argument unless a > 0 and sigma >= 0.
ModelPreset ou_preset(double a = 1.0, double sigma = 0.5);

std::vector<std::string> preset_names();
std::optional<ModelPreset> find_preset(std::string_view name);

/// Embedded JSON document of a preset, or nullptr.
const std::string* find_preset_text(std::string_view name);

}  // namespace detm
