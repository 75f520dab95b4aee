#include "detm/models.hpp"

#include <stdexcept>

#include "detm/format.hpp"

namespace detm {

namespace {

const std::string kSatellite = R"json({
  "system": {
    "label": "satellite pitch motion",
    "dim_state": 2,
    "dim_noise": 1,
    "dim_control": 1,
    "drift": ["x2", "-x2 + 0.1*sin(2*x1) + u1"],
    "diffusion": [["0"], ["-0.5*(x1 + x2)"]]
  },
  "controller": {
    "label": "k1 = -x1, k2 = 0",
    "k1": ["-x1"],
    "k2": ["0"]
  },
  "lyapunov": {
    "V": "47/36*x1^2 + 10/9*x1*x2 + x2^2 - 1/5*sin(x1)^2",
    "grad": ["47/18*x1 + 10/9*x2 - 0.2*sin(2*x1)", "10/9*x1 + 2*x2"],
    "hess": [["47/18 - 0.4*cos(2*x1)", "10/9"], ["10/9", "2"]]
  },
  "trigger": {
    "form": "exponential",
    "M1": 0.8,
    "M2": 0.5,
    "lambda": 0.1,
    "tau": 0.5
  },
  "grid": {"t0": 0, "dt": 0.1, "steps": 500},
  "ensemble": {"n_paths": 100, "seed": 42},
  "x0": [-2, 3],
  "verify": {
    "box": [[-3, 3], [-3, 3]],
    "samples": 100000,
    "axis_points": 64,
    "M_bar": 0,
    "claims": {"c1": 0.47, "c2": 1.73, "mu": 0.3333333333333333, "c3": 2}
  }
}
)json";

std::string ou_text(double a, double sigma) {
    const std::string as = format_number(a);
    const std::string ss = format_number(sigma);
    return R"json({
  "system": {
    "label": "Ornstein-Uhlenbeck a=)json" + as + ", sigma=" + ss + R"json(",
    "dim_state": 1,
    "dim_noise": 1,
    "dim_control": 0,
    "drift": ["-)json" + as + R"json(*x1"],
    "diffusion": [[")json" + ss + R"json("]]
  },
  "controller": {"label": "none", "k1": [], "k2": []},
  "lyapunov": {
    "V": "x1^2",
    "grad": ["2*x1"],
    "hess": [["2"]]
  },
  "trigger": {
    "form": "exponential",
    "M1": 1,
    "M2": 0.5,
    "lambda": 0.1,
    "tau": 0
  },
  "grid": {"t0": 0, "dt": 0.01, "steps": 200},
  "ensemble": {"n_paths": 10000, "seed": 7},
  "x0": [1]
}
)json";
}

const std::string& ou_default_text() {
    static const std::string text = ou_text(1.0, 0.5);
    return text;
}

}  // namespace

ModelPreset satellite_preset() {
    ModelPreset p;
    p.name = "satellite";
    p.description = "satellite pitch motion, k1 = -x1 / k2 = 0, exponential thresholds";
    p.config = parse_config_text(kSatellite);
    p.expected = ExpectedConstants{0.47, 1.73, 1.0 / 3.0, 0.0, 2.0};
    return p;
}

ModelPreset ou_preset(double a, double sigma) {
    if (!(a > 0.0)) throw std::invalid_argument("ou_preset: a must be positive");
    if (!(sigma >= 0.0)) throw std::invalid_argument("ou_preset: sigma must be non-negative");
    ModelPreset p;
    p.name = "ou";
    p.description = "scalar Ornstein-Uhlenbeck process, no control";
    p.config = parse_config_text(a == 1.0 && sigma == 0.5 ? ou_default_text() : ou_text(a, sigma));
    return p;
}

std::vector<std::string> preset_names() { return {"satellite", "ou"}; }

std::optional<ModelPreset> find_preset(std::string_view name) {
    if (name == "satellite") return satellite_preset();
    if (name == "ou") return ou_preset();
    return std::nullopt;
}

const std::string* find_preset_text(std::string_view name) {
    if (name == "satellite") return &kSatellite;
    if (name == "ou") return &ou_default_text();
    return nullptr;
}

}  // namespace detm
