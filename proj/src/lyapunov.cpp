#include "detm/lyapunov.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace detm {

namespace {

double inf_norm(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::fabs(v));
    return m;
}

std::string format_point(std::span<const double> x) {
    std::ostringstream s;
    s << '(';
    for (std::size_t i = 0; i < x.size(); ++i) s << (i ? ", " : "") << x[i];
    s << ')';
    return s.str();
}

constexpr std::array<unsigned, 20> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};

// Extreme values of a per-sample score together with the sample index that
// attains them. Ties resolve to the smaller index, so the result does not
// depend on how samples were split across threads.
struct Extrema {
    double min = std::numeric_limits<double>::infinity();
    std::size_t argmin = 0;
    double max = -std::numeric_limits<double>::infinity();
    std::size_t argmax = 0;
    std::size_t count = 0;

    void add(double v, std::size_t i) {
        ++count;
        if (v < min || (v == min && i < argmin)) {
            min = v;
            argmin = i;
        }
        if (v > max || (v == max && i < argmax)) {
            max = v;
            argmax = i;
        }
    }

    void merge(const Extrema& o) {
        count += o.count;
        if (o.count == 0) return;
        if (o.min < min || (o.min == min && o.argmin < argmin)) {
            min = o.min;
            argmin = o.argmin;
        }
        if (o.max > max || (o.max == max && o.argmax < argmax)) {
            max = o.max;
            argmax = o.argmax;
        }
    }
};

// score(i, x, t) -> value for sample i; samples at the origin are skipped.
template <class Score>
Extrema scan(const Sampler& sampler, Execution exec, const Score& score) {
    const std::size_t total = sampler.size();
    const std::size_t n = sampler.box().dim();
    Extrema result;
    std::exception_ptr error;
    std::size_t error_index = std::numeric_limits<std::size_t>::max();

    auto body = [&](std::size_t i, Vector& x, Extrema& local) {
        if (!sampler.point(i, x)) return;
        local.add(score(x, sampler.time(i)), i);
    };

    if (exec == Execution::Serial) {
        Vector x(n);
        for (std::size_t i = 0; i < total; ++i) body(i, x, result);
        return result;
    }

#pragma omp parallel
    {
        Extrema local;
        Vector x(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(total); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            try {
                body(i, x, local);
            } catch (...) {
#pragma omp critical(detm_scan_error)
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
#pragma omp critical(detm_scan_merge)
        result.merge(local);
    }
    if (error) std::rethrow_exception(error);
    return result;
}

Vector sample_at(const Sampler& sampler, std::size_t i) {
    Vector x(sampler.box().dim());
    sampler.point(i, x);
    return x;
}

}  // namespace

Vector fd_gradient(const std::function<double(std::span<const double>)>& V, std::span<const double> x) {
    const std::size_t n = x.size();
    const double h = kGradientStep * std::max(1.0, inf_norm(x));
    Vector g(n);
    Vector p(x.begin(), x.end());
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = x[i] + h;
        const double fp = V(p);
        p[i] = x[i] - h;
        const double fm = V(p);
        p[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Vector fd_hessian(const std::function<double(std::span<const double>)>& V, std::span<const double> x) {
    const std::size_t n = x.size();
    const double h = kHessianStep * std::max(1.0, inf_norm(x));
    Vector H(n * n);
    Vector p(x.begin(), x.end());
    const double f0 = V(x);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = x[i] + h;
        const double fp = V(p);
        p[i] = x[i] - h;
        const double fm = V(p);
        p[i] = x[i];
        H[i * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for (std::size_t j = i + 1; j < n; ++j) {
            auto at = [&](double si, double sj) {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                const double v = V(p);
                p[i] = x[i];
                p[j] = x[j];
                return v;
            };
            const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
            H[i * n + j] = v;
            H[j * n + i] = v;
        }
    }
    return H;
}

Vector LyapunovCandidate::gradient(std::span<const double> x) const {
    if (!grad) return fd_gradient(V, x);
    Vector g(x.size());
    grad(x, g);
    return g;
}

Vector LyapunovCandidate::hessian(std::span<const double> x) const {
    if (!hess) return fd_hessian(V, x);
    Vector H(x.size() * x.size());
    hess(x, H);
    return H;
}

GeneratorError::GeneratorError(const std::string& what, Vector point)
    : std::runtime_error(what + " at x = " + format_point(point)), point_(std::move(point)) {}

double ito_generator(const SdeSystem& sys, const LyapunovCandidate& cand, std::span<const double> x,
                     std::span<const double> u, double t) {
    const std::size_t n = sys.dim_state;
    const std::size_t m = sys.dim_noise;
    const Vector f = sys.eval_drift(x, u, t);
    const Vector g = sys.eval_diffusion(x, t);
    const Vector dV = cand.gradient(x);
    const Vector H = cand.hessian(x);

    double drift_term = 0.0;
    for (std::size_t i = 0; i < n; ++i) drift_term += dV[i] * f[i];

    // trace(g^T H g) = sum_k g_k^T H g_k over noise columns k
    double trace = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += H[i * n + j] * g[j * m + k];
            trace += g[i * m + k] * row;
        }
    }
    const double value = drift_term + 0.5 * trace;
    if (!std::isfinite(value)) throw GeneratorError("non-finite generator value", Vector(x.begin(), x.end()));
    return value;
}

double radical_inverse(std::size_t index, unsigned base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= base;
    }
    return result;
}

Sampler::Sampler(DomainBox box, SamplerSpec spec) : box_(std::move(box)), spec_(spec) {
    const std::size_t n = box_.dim();
    if (n == 0 || box_.upper.size() != n) throw std::invalid_argument("degenerate domain box: dimension");
    if (n + 1 > kPrimes.size()) throw std::invalid_argument("domain box dimension too large for Halton sampling");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(box_.upper[i] > box_.lower[i])) {
            throw std::invalid_argument("degenerate domain box: upper must exceed lower in every coordinate");
        }
    }
    n_corners_ = spec_.corners && n <= 16 ? (std::size_t{1} << n) : 0;
    n_axis_ = n * spec_.axis_points;
    total_ = n_corners_ + n_axis_ + spec_.samples;
}

bool Sampler::point(std::size_t i, std::span<double> x) const {
    const std::size_t n = box_.dim();
    if (i < n_corners_) {
        for (std::size_t d = 0; d < n; ++d) x[d] = (i >> d) & 1U ? box_.upper[d] : box_.lower[d];
    } else if (i < n_corners_ + n_axis_) {
        const std::size_t j = i - n_corners_;
        const std::size_t axis = j / spec_.axis_points;
        const std::size_t k = j % spec_.axis_points;
        for (std::size_t d = 0; d < n; ++d) x[d] = std::clamp(0.0, box_.lower[d], box_.upper[d]);
        const double frac = (static_cast<double>(k) + 0.5) / static_cast<double>(spec_.axis_points);
        x[axis] = box_.lower[axis] + frac * (box_.upper[axis] - box_.lower[axis]);
    } else {
        const std::size_t h = i - n_corners_ - n_axis_ + 1;
        for (std::size_t d = 0; d < n; ++d) {
            x[d] = box_.lower[d] + radical_inverse(h, kPrimes[d]) * (box_.upper[d] - box_.lower[d]);
        }
    }
    return inf_norm(x) > 0.0;
}

double Sampler::time(std::size_t i) const {
    if (!(spec_.t_max > 0.0)) return 0.0;
    return radical_inverse(i + 1, kPrimes[box_.dim()]) * spec_.t_max;
}

SandwichCertificate certify_sandwich(const LyapunovCandidate& cand, const DomainBox& box, const SamplerSpec& sampler,
                                     Execution exec) {
    const Sampler s(box, sampler);
    const Extrema e = scan(s, exec, [&](std::span<const double> x, double) {
        const double v = cand.V(x);
        if (!std::isfinite(v)) throw GeneratorError("non-finite V", Vector(x.begin(), x.end()));
        return v / squared_norm(x);
    });
    SandwichCertificate c;
    c.c1 = e.min;
    c.c2 = e.max;
    c.argmin = sample_at(s, e.argmin);
    c.argmax = sample_at(s, e.argmax);
    c.sample_count = e.count;
    return c;
}

DissipationCertificate certify_dissipation(const SdeSystem& sys, const LyapunovCandidate& cand, const ControlMap& k,
                                           const DomainBox& box, const SamplerSpec& sampler,
                                           const DissipationForm& form, Execution exec) {
    const Sampler s(box, sampler);
    auto generator_with = [&](std::span<const double> x, double t) {
        Vector u(sys.dim_control, 0.0);
        if (sys.dim_control > 0 && k) k(x, u);
        return ito_generator(sys, cand, x, u, t);
    };

    DissipationCertificate cert;
    if (const auto* p = std::get_if<PrimaryForm>(&form)) {
        cert.primary = true;
        if (p->M_bar == 0.0) {
            const Extrema e = scan(s, exec, [&](std::span<const double> x, double t) {
                return -generator_with(x, t) / squared_norm(x);
            });
            cert.value = e.min;
            cert.witness = sample_at(s, e.argmin);
            cert.witness_time = s.time(e.argmin);
            cert.sample_count = e.count;
            cert.pass = true;
        } else {
            if (!p->mu || !p->lambda_bar) {
                throw std::invalid_argument("M_bar > 0 requires claimed mu and lambda_bar to check");
            }
            const double mu = *p->mu;
            const double lb = *p->lambda_bar;
            const double mb = p->M_bar;
            const Extrema e = scan(s, exec, [&](std::span<const double> x, double t) {
                return generator_with(x, t) + mu * squared_norm(x) - mb * std::exp(-lb * t);
            });
            cert.value = e.max;
            cert.witness = sample_at(s, e.argmax);
            cert.witness_time = s.time(e.argmax);
            cert.sample_count = e.count;
            cert.pass = e.max <= 0.0;
        }
    } else {
        cert.primary = false;
        const Extrema e = scan(s, exec, [&](std::span<const double> x, double t) {
            return generator_with(x, t) / squared_norm(x);
        });
        cert.value = e.max;
        cert.witness = sample_at(s, e.argmax);
        cert.witness_time = s.time(e.argmax);
        cert.sample_count = e.count;
        cert.pass = true;
    }
    return cert;
}

AssumptionReport verify_assumptions(const VerifyInputs& in, Execution exec) {
    if (in.system == nullptr || in.controller == nullptr || in.candidate == nullptr) {
        throw std::invalid_argument("verify_assumptions: system, controller and candidate are required");
    }
    const SdeSystem& sys = *in.system;
    const LyapunovCandidate& cand = *in.candidate;
    AssumptionReport r;
    r.box = in.box;
    r.M_bar = in.primary.M_bar;
    r.lambda_bar = in.primary.lambda_bar;

    auto fail = [&](std::string assumption, std::string message, Vector point) {
        r.violations.push_back({std::move(assumption), std::move(message), std::move(point)});
    };

    // Assumption 1
    const auto sw = certify_sandwich(cand, in.box, in.sampler, exec);
    r.certified_c1 = sw.c1;
    r.certified_c2 = sw.c2;
    r.sample_count = sw.sample_count;
    r.c1 = in.claims.c1.value_or(sw.c1);
    r.c2 = in.claims.c2.value_or(sw.c2);
    if (in.claims.c1 && *in.claims.c1 > sw.c1) {
        fail("assumption1", "V(x) < c1 |x|^2 for claimed c1 = " + std::to_string(*in.claims.c1), sw.argmin);
    }
    if (in.claims.c2 && *in.claims.c2 < sw.c2) {
        fail("assumption1", "V(x) > c2 |x|^2 for claimed c2 = " + std::to_string(*in.claims.c2), sw.argmax);
    }
    if (!(r.c1 > 0.0)) fail("assumption1", "c1 must be positive", sw.argmin);
    if (!(r.c1 <= r.c2)) fail("assumption1", "c1 must not exceed c2", {});
    {
        const Vector origin(sys.dim_state, 0.0);
        if (cand.V(origin) != 0.0) fail("assumption1", "V(0) must be 0", origin);
    }
    r.assumption1_pass = std::none_of(r.violations.begin(), r.violations.end(),
                                      [](const Violation& v) { return v.assumption == "assumption1"; });

    // Assumption 2
    const SwitchingController& ctl = *in.controller;
    {
        const Vector origin(sys.dim_state, 0.0);
        for (Mode mode : {Mode::Primary, Mode::Secondary}) {
            const auto u = control_input(ctl, mode, origin).u;
            if (std::any_of(u.begin(), u.end(), [](double v) { return v != 0.0; })) {
                fail("assumption2", std::string(to_string(mode)) + " control map is not zero at the origin", origin);
            }
        }
    }
    auto clamped_map = [&](Mode mode) -> ControlMap {
        return [&ctl, mode](std::span<const double> x, std::span<double> u) {
            const auto ci = control_input(ctl, mode, x);
            std::copy(ci.u.begin(), ci.u.end(), u.begin());
        };
    };
    const auto primary = certify_dissipation(sys, cand, clamped_map(Mode::Primary), in.box, in.sampler,
                                             PrimaryForm{}, exec);
    r.certified_mu = primary.value;
    if (in.primary.M_bar > 0.0) {
        PrimaryForm form = in.primary;
        if (!form.mu) form.mu = in.claims.mu;
        if (!form.mu || !form.lambda_bar) {
            fail("assumption2", "M_bar > 0 needs claimed mu and lambda_bar", {});
            r.mu = in.claims.mu.value_or(primary.value);
        } else {
            const auto check =
                certify_dissipation(sys, cand, clamped_map(Mode::Primary), in.box, in.sampler, form, exec);
            r.mu = *form.mu;
            if (!check.pass) {
                std::ostringstream msg;
                msg << "LV(x,k1(x)) exceeds -mu|x|^2 + M_bar e^{-lambda_bar t} by " << check.value
                    << " at t = " << check.witness_time;
                fail("assumption2", msg.str(), check.witness);
            }
        }
    } else {
        r.mu = in.claims.mu.value_or(primary.value);
        if (in.claims.mu && *in.claims.mu > primary.value) {
            fail("assumption2", "LV(x,k1(x)) > -mu |x|^2 for claimed mu = " + std::to_string(*in.claims.mu),
                 primary.witness);
        }
    }
    const auto secondary = certify_dissipation(sys, cand, clamped_map(Mode::Secondary), in.box, in.sampler,
                                               SecondaryForm{}, exec);
    r.certified_c3 = secondary.value;
    r.c3 = in.claims.c3.value_or(secondary.value);
    if (in.claims.c3 && *in.claims.c3 < secondary.value) {
        fail("assumption2", "LV(x,k2(x)) > c3 |x|^2 for claimed c3 = " + std::to_string(*in.claims.c3),
             secondary.witness);
    }
    r.assumption2_pass = std::none_of(r.violations.begin(), r.violations.end(),
                                      [](const Violation& v) { return v.assumption == "assumption2"; });
    r.lambda_max_admissible = r.mu / r.c2;
    return r;
}

RateCheck check_rate_admissibility(const AssumptionReport& report, double lambda) {
    std::ostringstream msg;
    const double bound = report.mu / report.c2;
    if (!(lambda > 0.0)) {
        msg << "lambda > 0 violated: lambda = " << lambda;
        return {false, msg.str()};
    }
    if (report.M_bar == 0.0) {
        if (lambda < bound) {
            msg << "lambda = " << lambda << " < mu/c2 = " << bound;
            return {true, msg.str()};
        }
        msg << "lambda < mu/c2 violated: lambda = " << lambda << ", mu/c2 = " << bound;
        return {false, msg.str()};
    }
    if (!report.lambda_bar) return {false, "lambda_bar is required when M_bar > 0"};
    const double lb = *report.lambda_bar;
    if (!(lb < bound)) {
        msg << "lambda_bar < mu/c2 violated: lambda_bar = " << lb << ", mu/c2 = " << bound;
        return {false, msg.str()};
    }
    if (!(lambda < lb)) {
        msg << "lambda < lambda_bar violated: lambda = " << lambda << ", lambda_bar = " << lb;
        return {false, msg.str()};
    }
    msg << "lambda = " << lambda << " < lambda_bar = " << lb << " < mu/c2 = " << bound;
    return {true, msg.str()};
}

TheoremBounds theorem_bounds(const AssumptionReport& report, double lambda, double M1, double M_bar,
                             double x0_second_moment, std::optional<double> constant_delta,
                             std::optional<double> gamma) {
    AssumptionReport effective = report;
    effective.M_bar = M_bar;
    const RateCheck rate = check_rate_admissibility(effective, lambda);
    if (!rate.pass) throw InadmissibleRate(rate.detail);

    const double upper = report.mu / report.c2;
    TheoremBounds b;
    b.gamma = gamma.value_or(0.5 * (lambda + upper));
    if (!(b.gamma > lambda && b.gamma < upper)) throw InadmissibleRate("gamma must lie strictly in (lambda, mu/c2)");
    const double c1 = report.c1;
    const double c2 = report.c2;
    const double c3 = report.c3;
    const double initial = (c2 / c1) * x0_second_moment;
    const double forced = std::max((c2 * b.gamma + c3) * M1, M_bar) / (c1 * (b.gamma - lambda));
    b.K = std::max(initial, forced);
    if (constant_delta) b.L1_limit = (c2 / c1 + c3 / (c1 * lambda)) * *constant_delta;
    return b;
}

}  // namespace detm
