#pragma once

// Numerical side of the Lyapunov argument: the Ito generator
//
//     LV(x, u) = dV/dx f(x, u) + 1/2 trace(g(x)^T d2V/dx2 g(x))
//
// and sampled certification of the sandwich, dissipation and rate
// conditions. A PASS means no violation was found at the sampled
// resolution, nothing stronger.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "detm/control.hpp"
#include "detm/sde.hpp"
#include "detm/types.hpp"

namespace detm {

struct LyapunovCandidate {
    std::size_t dim = 0;
    std::function<double(std::span<const double>)> V;
    /// dV/dx into `out` (length n). Central differences when absent.
    std::function<void(std::span<const double>, std::span<double>)> grad;
    /// d2V/dx2 row-major into `out` (n x n). Central differences when absent.
    std::function<void(std::span<const double>, std::span<double>)> hess;

    Vector gradient(std::span<const double> x) const;
    Vector hessian(std::span<const double> x) const;
};

/// Finite-difference steps, scaled by max(1, |x|_inf).
inline constexpr double kGradientStep = 1e-6;
inline constexpr double kHessianStep = 1e-4;

Vector fd_gradient(const std::function<double(std::span<const double>)>& V, std::span<const double> x);
Vector fd_hessian(const std::function<double(std::span<const double>)>& V, std::span<const double> x);

class GeneratorError : public std::runtime_error {
public:
    GeneratorError(const std::string& what, Vector point);
    const Vector& point() const noexcept { return point_; }

private:
    Vector point_;
};

double ito_generator(const SdeSystem& sys, const LyapunovCandidate& cand, std::span<const double> x,
                     std::span<const double> u, double t = 0.0);

struct DomainBox {
    Vector lower;
    Vector upper;

    std::size_t dim() const { return lower.size(); }
};

/// Deterministic enumeration: box corners, then evenly spaced points on each
/// coordinate axis, then a Halton sequence over the box. Sample i maps to the
/// same point regardless of thread count.
struct SamplerSpec {
    std::size_t samples = 100000;   // Halton points
    std::size_t axis_points = 64;   // per coordinate axis
    bool corners = true;
    double t_max = 0.0;             // time range [0, t_max] for time-dependent checks
};

enum class Execution { Parallel, Serial };

class Sampler {
public:
    Sampler(DomainBox box, SamplerSpec spec);

    std::size_t size() const noexcept { return total_; }
    /// Writes point `i` into `x`; returns false for the origin (skipped).
    bool point(std::size_t i, std::span<double> x) const;
    /// Time coordinate paired with sample `i`.
    double time(std::size_t i) const;
    const DomainBox& box() const noexcept { return box_; }

private:
    DomainBox box_;
    SamplerSpec spec_;
    std::size_t n_corners_;
    std::size_t n_axis_;
    std::size_t total_;
};

/// Halton radical inverse of `index` in `base`.
double radical_inverse(std::size_t index, unsigned base);

struct SandwichCertificate {
    double c1 = 0.0;
    double c2 = 0.0;
    Vector argmin;  // where V/|x|^2 is smallest
    Vector argmax;
    std::size_t sample_count = 0;
};

/// c1 = min, c2 = max of V(x)/|x|^2 over the samples.
SandwichCertificate certify_sandwich(const LyapunovCandidate& cand, const DomainBox& box, const SamplerSpec& sampler,
                                     Execution exec = Execution::Parallel);

/// LV(x, k1(x)) <= -mu |x|^2 + M_bar e^{-lambda_bar t}.
struct PrimaryForm {
    double M_bar = 0.0;
    /// Required when M_bar > 0: the claimed constants to check pointwise.
    std::optional<double> mu;
    std::optional<double> lambda_bar;
};
/// LV(x, k2(x)) <= c3 |x|^2.
struct SecondaryForm {};
using DissipationForm = std::variant<PrimaryForm, SecondaryForm>;

struct DissipationCertificate {
    bool primary = true;
    /// Primary, M_bar = 0: certified mu = min(-LV/|x|^2). Secondary: c3 = max(LV/|x|^2).
    /// Primary, M_bar > 0: the largest violation of the claimed inequality (<= 0 passes).
    double value = 0.0;
    Vector witness;
    double witness_time = 0.0;
    std::size_t sample_count = 0;
    bool pass = true;
};

DissipationCertificate certify_dissipation(const SdeSystem& sys, const LyapunovCandidate& cand, const ControlMap& k,
                                           const DomainBox& box, const SamplerSpec& sampler,
                                           const DissipationForm& form, Execution exec = Execution::Parallel);

/// Constants a model asserts; each is checked against the sampled certificate.
struct ClaimedConstants {
    std::optional<double> c1;
    std::optional<double> c2;
    std::optional<double> mu;
    std::optional<double> c3;
};

struct Violation {
    std::string assumption;
    std::string message;
    Vector point;
};

struct AssumptionReport {
    // sampled values
    double certified_c1 = 0.0;
    double certified_c2 = 0.0;
    double certified_mu = 0.0;  // meaningful when M_bar == 0
    double certified_c3 = 0.0;
    // values used downstream: the claim where one was given, else the certified value
    double c1 = 0.0;
    double c2 = 0.0;
    double mu = 0.0;
    double M_bar = 0.0;
    std::optional<double> lambda_bar;
    double c3 = 0.0;
    double lambda_max_admissible = 0.0;  // mu / c2, strict
    std::size_t sample_count = 0;
    DomainBox box;
    bool assumption1_pass = false;
    bool assumption2_pass = false;
    std::vector<Violation> violations;
};

struct VerifyInputs {
    const SdeSystem* system = nullptr;
    const SwitchingController* controller = nullptr;
    const LyapunovCandidate* candidate = nullptr;
    DomainBox box;
    SamplerSpec sampler;
    PrimaryForm primary;
    ClaimedConstants claims;
};

AssumptionReport verify_assumptions(const VerifyInputs& in, Execution exec = Execution::Parallel);

struct RateCheck {
    bool pass = false;
    std::string detail;
};

/// lambda < mu/c2 when M_bar == 0; lambda < lambda_bar < mu/c2 when M_bar > 0.
RateCheck check_rate_admissibility(const AssumptionReport& report, double lambda);

struct TheoremBounds {
    double gamma = 0.0;
    double K = 0.0;
    std::optional<double> L1_limit;
};

class InadmissibleRate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// gamma defaults to the midpoint of (lambda, mu/c2);
/// K = max{(c2/c1) E|x0|^2, ((c2 gamma + c3) M1 v M_bar) / (c1 (gamma - lambda))};
/// L1_limit = (c2/c1 + c3/(c1 lambda)) delta for a constant delta.
TheoremBounds theorem_bounds(const AssumptionReport& report, double lambda, double M1, double M_bar,
                             double x0_second_moment, std::optional<double> constant_delta = {},
                             std::optional<double> gamma = {});

}  // namespace detm
