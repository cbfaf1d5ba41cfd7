#include "copularisk/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "copularisk/diagnostics.hpp"
#include "copularisk/rng.hpp"

namespace copularisk {

// ---------------------------------------------------------------------------
// DFP
// ---------------------------------------------------------------------------

std::vector<double> central_gradient(const ScalarFunction& f, std::span<const double> x, double step) {
    std::vector<double> g(x.size());
    std::vector<double> probe(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = probe[i];
        probe[i] = xi + step;
        const double up = f(probe);
        probe[i] = xi - step;
        const double down = f(probe);
        probe[i] = xi;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

struct LinePoint {
    double a = 0.0;
    double f = 0.0;
    double d = 0.0;  // directional derivative along p
    std::vector<double> x;
    std::vector<double> g;
};

// Strong Wolfe line search (bracketing then zoom). Falls back to the best point with
// sufficient decrease when the curvature condition cannot be met, e.g. on noisy objectives.
std::optional<LinePoint> wolfe_search(const ScalarFunction& f, std::span<const double> x, double f0, double d0,
                                      std::span<const double> p, const GradientFunction& grad) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.1;
    const std::size_t n = x.size();
    const double xscale = 1.0 + max_abs(x);
    const double pnorm = max_abs(p);

    auto eval = [&](double a) {
        LinePoint t;
        t.a = a;
        t.x.resize(n);
        for (std::size_t i = 0; i < n; ++i) t.x[i] = x[i] + a * p[i];
        t.f = f(t.x);
        if (!std::isfinite(t.f)) {
            t.f = std::numeric_limits<double>::infinity();
            return t;
        }
        t.g = grad(t.x);
        if (!all_finite(t.g)) {
            t.f = std::numeric_limits<double>::infinity();
            return t;
        }
        t.d = dot(t.g, p);
        return t;
    };
    auto armijo = [&](const LinePoint& t) { return std::isfinite(t.f) && t.f <= f0 + c1 * t.a * d0; };
    auto curvature = [&](const LinePoint& t) { return std::abs(t.d) <= -c2 * d0; };

    LinePoint lo{0.0, f0, d0, {}, {}};
    std::optional<LinePoint> best;  // lowest point with sufficient decrease
    auto note = [&](const LinePoint& t) {
        if (armijo(t) && (!best || t.f < best->f)) best = t;
    };

    auto zoom = [&](LinePoint a_lo, LinePoint a_hi) -> std::optional<LinePoint> {
        for (int j = 0; j < 30; ++j) {
            const double width = a_hi.a - a_lo.a;
            if (std::abs(width) * pnorm <= 1e-15 * xscale) break;
            double a = a_lo.a + 0.5 * width;
            if (std::isfinite(a_hi.f)) {
                // minimizer of the quadratic through f(lo), f'(lo), f(hi)
                const double denom = 2.0 * (a_hi.f - a_lo.f - a_lo.d * width);
                if (denom > 0.0) {
                    const double q = a_lo.a - a_lo.d * width * width / denom;
                    const double lo_b = std::min(a_lo.a, a_hi.a) + 0.1 * std::abs(width);
                    const double hi_b = std::max(a_lo.a, a_hi.a) - 0.1 * std::abs(width);
                    a = std::clamp(q, lo_b, hi_b);
                }
            }
            LinePoint t = eval(a);
            note(t);
            if (!armijo(t) || t.f >= a_lo.f) {
                a_hi = std::move(t);
            } else {
                if (curvature(t)) return t;
                if (t.d * (a_hi.a - a_lo.a) >= 0.0) a_hi = a_lo;
                a_lo = std::move(t);
            }
        }
        return best;
    };

    double a = 1.0;
    for (int i = 0; i < 40; ++i) {
        LinePoint t = eval(a);
        note(t);
        if (!armijo(t) || (i > 0 && t.f >= lo.f)) return zoom(lo, t);
        if (curvature(t)) return t;
        if (t.d >= 0.0) return zoom(t, lo);
        lo = std::move(t);
        a *= 2.0;
    }
    return best;
}

}  // namespace

DfpResult dfp_minimize(const ScalarFunction& f, std::vector<double> x0, const DfpOptions& options) {
    const double step = options.gradient_step;
    return dfp_minimize(
        f, [&f, step](std::span<const double> x) { return central_gradient(f, x, step); }, std::move(x0), options);
}

DfpResult dfp_minimize(const ScalarFunction& f, const GradientFunction& grad, std::vector<double> x0,
                       const DfpOptions& options) {
    const std::size_t n = x0.size();
    if (n == 0) throw std::invalid_argument("dfp_minimize needs at least one coordinate");
    if (!(options.gradient_step > 0.0) || !(options.tolerance > 0.0) || options.max_iter < 0) {
        throw std::invalid_argument("invalid DFP options");
    }

    DfpResult res;
    res.x = std::move(x0);
    res.value = f(res.x);
    if (!std::isfinite(res.value)) throw std::domain_error("objective is not finite at the start point");
    auto g = grad(res.x);
    if (!all_finite(g)) throw std::domain_error("objective gradient is not finite at the start point");

    // row-major inverse Hessian approximation
    std::vector<double> H(n * n, 0.0);
    auto reset = [&] {
        std::fill(H.begin(), H.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
    };
    reset();
    bool identity = true;

    std::vector<double> p(n), trial(n), s(n), y(n), Hy(n);

    for (int it = 0;; ++it) {
        res.iterations = it;
        res.gradient_norm = max_abs(g);
        if (res.gradient_norm <= options.tolerance) {
            res.status = DfpStatus::GradientTolerance;
            res.converged = true;
            return res;
        }
        if (it >= options.max_iter) {
            res.status = DfpStatus::MaxIterations;
            res.converged = false;
            return res;
        }

        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc -= H[i * n + j] * g[j];
            p[i] = acc;
        }
        double slope = dot(g, p);
        if (!(slope < 0.0)) {
            reset();
            identity = true;
            for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
            slope = dot(g, p);
        }

        const double xscale = 1.0 + max_abs(res.x);
        auto step = wolfe_search(f, res.x, res.value, slope, p, grad);
        if (!step) {
            if (!identity) {
                reset();
                identity = true;
                continue;
            }
            res.status = DfpStatus::LineSearchFailure;
            res.converged = false;
            return res;
        }

        trial = std::move(step->x);
        const double f_new = step->f;
        auto g_new = std::move(step->g);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = trial[i] - res.x[i];
            y[i] = g_new[i] - g[i];
        }
        const double f_old = res.value;
        res.x = trial;
        res.value = f_new;
        g = std::move(g_new);

        if (max_abs(s) <= 1e-12 * xscale && std::abs(f_old - f_new) <= 1e-14 * (1.0 + std::abs(f_old))) {
            res.iterations = it + 1;
            res.gradient_norm = max_abs(g);
            res.status = DfpStatus::StepTolerance;
            res.converged = true;
            return res;
        }

        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            if (identity) {
                // first curvature pair: rescale the identity before updating
                const double scale = sy / dot(y, y);
                for (std::size_t i = 0; i < n; ++i) H[i * n + i] = scale;
            }
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * y[j];
                Hy[i] = acc;
            }
            const double yHy = dot(y, Hy);
            if (yHy > 0.0) {
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        H[i * n + j] += s[i] * s[j] / sy - Hy[i] * Hy[j] / yHy;
                    }
                }
                identity = false;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Cases
// ---------------------------------------------------------------------------

CaseSpec CaseSpec::make(int id, std::optional<double> r) {
    if (id < 1 || id > 4) throw std::invalid_argument("case id must be 1..4, got " + std::to_string(id));
    CaseSpec c;
    c.case_id = id;
    c.return_fixed = id <= 2;
    c.w1_boxed = id == 2 || id == 4;
    if (c.return_fixed) c.r = r;
    c.validate();
    return c;
}

void CaseSpec::validate() const {
    if (case_id < 1 || case_id > 4) throw std::invalid_argument("case id must be 1..4");
    if (return_fixed != (case_id <= 2) || w1_boxed != (case_id == 2 || case_id == 4)) {
        throw std::invalid_argument("case flags do not match case " + std::to_string(case_id));
    }
    if (return_fixed && (!r || !std::isfinite(*r))) {
        throw std::invalid_argument("case " + std::to_string(case_id) + " needs a finite target return");
    }
    if (!return_fixed && r) throw std::invalid_argument("case " + std::to_string(case_id) + " takes no target return");
}

namespace {

using W = std::array<double, 3>;

double box_distance(double w1) {
    if (w1 < 0.0) return -w1;
    if (w1 > 1.0) return w1 - 1.0;
    return 0.0;
}

// Feasible set after exact elimination of the equality constraints: either the line
// p0 + t d (budget and return fixed) or the budget plane parametrized by (w1, w2).
struct Reduced {
    bool line = false;
    W p0{};
    W d{};

    std::size_t dim() const { return line ? 1 : 2; }

    W along(double t) const { return {p0[0] + t * d[0], p0[1] + t * d[1], p0[2] + t * d[2]}; }

    W weights(std::span<const double> x) const {
        if (line) return along(x[0]);
        return {x[0], x[1], 1.0 - x[0] - x[1]};
    }

    std::vector<double> coords(const W& w) const {
        if (line) return {(w[0] - p0[0]) * d[0] + (w[1] - p0[1]) * d[1] + (w[2] - p0[2]) * d[2]};
        return {w[0], w[1]};
    }

    bool w1_fixed() const { return line && std::abs(d[0]) <= 1e-12; }
    /// d w1 / d(first coordinate); w1 does not depend on the second plane coordinate.
    double dw1() const { return line ? d[0] : 1.0; }
};

std::optional<Reduced> reduce(const CaseSpec& spec, const W& mu) {
    Reduced red;
    if (!spec.return_fixed) return red;
    const double r = *spec.r;
    const double mbar = (mu[0] + mu[1] + mu[2]) / 3.0;
    const W c{mu[0] - mbar, mu[1] - mbar, mu[2] - mbar};
    const double cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
    const double scale = std::max({std::abs(mu[0]), std::abs(mu[1]), std::abs(mu[2]), 1e-300});
    if (std::sqrt(cc) <= 1e-12 * scale) {
        // all asset means equal: every budget portfolio earns mbar
        if (std::abs(r - mbar) > 1e-12 * std::max(scale, std::abs(r))) return std::nullopt;
        return red;
    }
    red.line = true;
    // minimum-norm point of {sum w = 1, w . mu = r}; centred mu is orthogonal to (1,1,1)
    for (std::size_t i = 0; i < 3; ++i) red.p0[i] = 1.0 / 3.0 + (r - mbar) / cc * c[i];
    W d{mu[2] - mu[1], mu[0] - mu[2], mu[1] - mu[0]};
    const double dn = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    for (double& v : d) v /= dn;
    red.d = d;
    return red;
}

// Moves w (already on the reduced set) into the w1 box; false when impossible.
bool clamp_into_box(const Reduced& red, W& w) {
    if (w[0] >= 0.0 && w[0] <= 1.0) return true;
    const double bound = w[0] < 0.0 ? 0.0 : 1.0;
    if (red.line) {
        if (red.w1_fixed()) return std::abs(w[0] - bound) <= 1e-12;
        w = red.along((bound - red.p0[0]) / red.d[0]);
        w[0] = bound;
        return true;
    }
    w[0] = bound;
    w[2] = 1.0 - w[0] - w[1];
    return true;
}

W project_naive(const Reduced& red, const W& w) {
    if (!red.line) return w;
    const auto x = red.coords(w);
    return red.weights(x);
}

struct Candidate {
    W w{};
    double hard = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

}  // namespace

double evaluate_objective(RiskMeasure measure, const CaseSpec& spec, const RegimeProblem& problem,
                          std::span<const double, 3> w, TailMode mode, double bandwidth) {
    const auto& s = problem.scenarios;
    switch (measure) {
        case RiskMeasure::Variance: return variance_of(w, s, false).value;
        case RiskMeasure::Semivariance: {
            const double target = spec.return_fixed ? *spec.r : expected_return_of(w, s);
            return semivariance_of(w, s, target, false).value;
        }
        case RiskMeasure::TailRisk: return tail_risk_of(w, s, TailSpec{problem.tail.q5, bandwidth}, mode, false).value;
    }
    throw std::invalid_argument("unknown risk measure");
}

std::optional<PortfolioWeights> project_feasible(const CaseSpec& spec, const RegimeProblem& problem,
                                                 const PortfolioWeights& w) {
    spec.validate();
    const auto red = reduce(spec, problem.mu);
    if (!red) return std::nullopt;
    W x = project_naive(*red, w.values());
    if (spec.w1_boxed && !clamp_into_box(*red, x)) return std::nullopt;
    return PortfolioWeights(x[0], x[1], 1.0 - x[0] - x[1]);
}

RegimeProblem make_regime_problem(const Marginals& dists, const CopulaModel& model, const IntegrationConfig& cfg,
                                  double target_r, std::vector<ReturnTriplet> history) {
    RegimeProblem p;
    p.scenarios = build_scenarios(model, dists, cfg);
    p.mu = p.scenarios.asset_means();
    p.tail = tail_spec_for(dists);
    p.target_r = target_r;
    p.history = std::move(history);
    return p;
}

OptimizationResult solve_case(const CaseSpec& spec, RiskMeasure measure, const RegimeProblem& problem,
                              const SolverOptions& options) {
    spec.validate();
    const auto red_opt = reduce(spec, problem.mu);
    if (!red_opt) throw InfeasibleError("return target is unattainable: all asset means are equal");
    const Reduced red = *red_opt;
    if (spec.w1_boxed && red.w1_fixed() && (red.p0[0] < -1e-12 || red.p0[0] > 1.0 + 1e-12)) {
        throw InfeasibleError("return target forces w1 outside [0, 1]");
    }

    const bool tail = measure == RiskMeasure::TailRisk;
    const std::size_t stages = std::max(spec.w1_boxed ? options.penalty_schedule.size() : std::size_t{1},
                                        tail ? options.bandwidth_schedule.size() : std::size_t{1});
    if ((spec.w1_boxed && options.penalty_schedule.empty()) || (tail && options.bandwidth_schedule.empty())) {
        throw std::invalid_argument("empty continuation schedule");
    }
    auto rho_at = [&](std::size_t k) {
        return spec.w1_boxed ? options.penalty_schedule[std::min(k, options.penalty_schedule.size() - 1)] : 0.0;
    };
    auto h_at = [&](std::size_t k) {
        return tail ? options.bandwidth_schedule[std::min(k, options.bandwidth_schedule.size() - 1)]
                    : problem.tail.smoothing_bandwidth;
    };
    auto smooth_obj = [&](const W& w, double h) {
        return evaluate_objective(measure, spec, problem, w, TailMode::Smooth, h);
    };
    auto hard_obj = [&](const W& w) { return evaluate_objective(measure, spec, problem, w, TailMode::Hard); };
    // After a failed line search the point still counts as stationary when its gradient is below
    // the accuracy of the difference gradient itself, judged by comparing steps h and 2h.
    auto stationary = [&](const DfpResult& r, const ScalarFunction& f) {
        if (r.converged) return true;
        if (r.status != DfpStatus::LineSearchFailure) return false;
        if (r.gradient_norm <= options.stationarity) return true;
        const double h = options.dfp.gradient_step;
        const auto g1 = central_gradient(f, r.x, h);
        const auto g2 = central_gradient(f, r.x, 2.0 * h);
        double noise = 0.0;
        for (std::size_t i = 0; i < g1.size(); ++i) noise = std::max(noise, std::abs(g1[i] - g2[i]));
        return r.gradient_norm <= noise;
    };

    // start points: naive weights projected onto the feasible set, then seeded perturbations
    std::vector<W> starts;
    {
        W w = project_naive(red, PortfolioWeights::naive().values());
        if (spec.w1_boxed) clamp_into_box(red, w);
        starts.push_back(w);
    }
    for (int k = 0; k < options.random_starts; ++k) {
        std::mt19937_64 rng(derive_seed(options.seed, static_cast<std::uint64_t>(k)));
        std::normal_distribution<double> normal;
        W w{};
        if (red.line) {
            w = red.along(red.coords(starts.front())[0] + 0.5 * normal(rng));
        } else {
            const double w1 = spec.w1_boxed ? std::uniform_real_distribution<double>(0.0, 1.0)(rng)
                                            : 1.0 / 3.0 + 0.5 * normal(rng);
            const double w2 = 1.0 / 3.0 + 0.5 * normal(rng);
            w = {w1, w2, 1.0 - w1 - w2};
        }
        if (spec.w1_boxed) clamp_into_box(red, w);
        starts.push_back(w);
    }

    auto feasible = [&](const W& w) {
        if (!std::isfinite(w[0]) || !std::isfinite(w[1]) || !std::isfinite(w[2])) return false;
        if (std::abs(w[0] + w[1] + w[2] - 1.0) > 1e-8) return false;
        if (spec.return_fixed &&
            std::abs(w[0] * problem.mu[0] + w[1] * problem.mu[1] + w[2] * problem.mu[2] - *spec.r) > 1e-6) {
            return false;
        }
        if (spec.w1_boxed && (w[0] < -1e-8 || w[0] > 1.0 + 1e-8)) return false;
        return true;
    };

    std::optional<Candidate> best;
    auto offer = [&](const Candidate& c) {
        if (!feasible(c.w) || !std::isfinite(c.hard)) return;
        if (!best || c.hard < best->hard) best = c;
    };

    std::string last_error;
    for (const W& start : starts) {
        // the start itself competes, which keeps the result no worse than the projected naive portfolio
        Candidate base{start, hard_obj(start), 0, false};
        try {
            std::vector<double> x = red.coords(start);
            int iterations = 0;
            bool converged = false;
            double h = h_at(0);
            for (std::size_t k = 0; k < stages; ++k) {
                const double rho = rho_at(k);
                h = h_at(k);
                const double f0 = std::abs(smooth_obj(red.weights(x), h));
                const double scale = f0 > 1e-300 && std::isfinite(f0) ? f0 : 1.0;
                const ScalarFunction Fobj = [&, h, scale](std::span<const double> z) {
                    return smooth_obj(red.weights(z), h) / scale;
                };
                const ScalarFunction F = [&, rho](std::span<const double> z) {
                    const double dist = box_distance(red.weights(z)[0]);
                    return Fobj(z) + rho * dist * dist;
                };
                // the penalty's curvature jump at the bound is far sharper than the difference step,
                // so it gets its exact gradient; only the risk objective is differenced
                const GradientFunction G = [&, rho](std::span<const double> z) {
                    auto g = central_gradient(Fobj, z, options.dfp.gradient_step);
                    const double w1 = red.weights(z)[0];
                    const double excess = w1 < 0.0 ? w1 : (w1 > 1.0 ? w1 - 1.0 : 0.0);
                    g[0] += 2.0 * rho * excess * red.dw1();
                    return g;
                };
                const auto r = dfp_minimize(F, G, x, options.dfp);
                x = r.x;
                iterations += r.iterations;
                converged = stationary(r, F);
            }

            W w = red.weights(x);
            if (spec.w1_boxed && box_distance(w[0]) > 0.0) {
                if (!clamp_into_box(red, w)) continue;
                if (!red.line) {
                    // w1 pinned at the violated bound; re-polish the remaining free coordinate
                    const double w1 = w[0];
                    const double f0 = std::abs(smooth_obj(w, h));
                    const double scale = f0 > 1e-300 && std::isfinite(f0) ? f0 : 1.0;
                    const ScalarFunction G = [&, w1, h, scale](std::span<const double> z) {
                        return smooth_obj(W{w1, z[0], 1.0 - w1 - z[0]}, h) / scale;
                    };
                    const auto r = dfp_minimize(G, {w[1]}, options.dfp);
                    w = {w1, r.x[0], 1.0 - w1 - r.x[0]};
                    iterations += r.iterations;
                    converged = stationary(r, G);
                } else {
                    converged = true;  // the clamped point is the whole feasible set left on the line
                }
                // the active bound must actually hold the objective back: moving w1 inward cannot help
                const double f0 = std::abs(smooth_obj(w, h));
                const double scale = f0 > 1e-300 && std::isfinite(f0) ? f0 : 1.0;
                const ScalarFunction F = [&, h, scale](std::span<const double> z) {
                    return smooth_obj(red.weights(z), h) / scale;
                };
                const auto g = central_gradient(F, red.coords(w), options.dfp.gradient_step);
                const double inward = (w[0] >= 1.0 ? -1.0 : 1.0) * (red.dw1() < 0.0 ? -1.0 : 1.0);
                converged = converged && inward * g[0] >= -options.stationarity;
            }
            Candidate c{w, hard_obj(w), iterations, converged};
            base.iterations = iterations;
            base.converged = converged;
            offer(c);
        } catch (const std::exception& e) {
            last_error = e.what();
        }
        offer(base);
    }
    if (!best) {
        throw InfeasibleError("no feasible multi-start point" + (last_error.empty() ? "" : ": " + last_error));
    }

    W w = best->w;
    OptimizationResult out;
    out.case_id = spec.case_id;
    out.measure = measure;
    out.weights = PortfolioWeights(w[0], w[1], w[2]);
    out.achieved_r = expected_return_of(w, problem.scenarios);
    out.objective = best->hard;
    out.iterations = best->iterations;
    out.converged = best->converged;
    out.residuals.budget = w[0] + w[1] + w[2] - 1.0;
    if (spec.return_fixed) out.residuals.target_return = out.achieved_r - *spec.r;
    if (spec.w1_boxed) out.residuals.box = box_distance(w[0]);
    if (!problem.history.empty()) {
        std::vector<double> daily;
        daily.reserve(problem.history.size());
        for (const auto& R : problem.history) daily.push_back(w[0] * R[0] + w[1] * R[1] + w[2] * R[2]);
        out.upr = upr(daily, spec.return_fixed ? *spec.r : out.achieved_r);
    }
    return out;
}

OptimizationResult solve_case(const CaseSpec& spec, RiskMeasure measure, const Marginals& dists,
                              const CopulaModel& model, const IntegrationConfig& cfg, const SolverOptions& options) {
    const auto problem = make_regime_problem(dists, model, cfg, spec.r.value_or(0.0));
    return solve_case(spec, measure, problem, options);
}

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

const CellResult* ResultMatrix::find(int regime_id, int case_id, RiskMeasure measure) const {
    for (const auto& c : cells) {
        if (c.regime_id == regime_id && c.case_id == case_id && c.measure == measure) return &c;
    }
    return nullptr;
}

std::size_t ResultMatrix::failed() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok(); }));
}

std::size_t ResultMatrix::not_converged() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok() && !c.result->converged; }));
}

namespace {

std::uint64_t measure_index(RiskMeasure m) { return static_cast<std::uint64_t>(m); }

void solve_regime(const RegimeSpec& reg, const ReturnPanel& panel, std::span<const int> cases,
                  std::span<const RiskMeasure> measures, const IntegrationConfig& cfg, const SolverOptions& options,
                  std::vector<CellResult>& out) {
    auto fail_all = [&](const std::string& why) {
        for (auto& c : out) c.error = why;
    };
    if (!reg.fixed_params) {
        fail_all("regime has no fitted copula parameters");
        return;
    }
    ReturnPanel sub;
    try {
        sub = slice_by_regime(panel, reg);
    } catch (const std::exception& e) {
        fail_all(e.what());
        return;
    }
    if (sub.size() < 30) {
        fail_all("regime has " + std::to_string(sub.size()) + " observations, need at least 30");
        return;
    }
    std::optional<RegimeProblem> problem;
    try {
        const Marginals dists = Marginals::from_panel(sub);
        const double r = naive_stats(sub).target;
        IntegrationConfig rc = cfg;
        rc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(reg.id));
        problem = make_regime_problem(dists, *reg.fixed_params, rc, r, sub.returns);
    } catch (const std::exception& e) {
        fail_all(e.what());
        return;
    }
    std::size_t idx = 0;
    for (int c : cases) {
        for (RiskMeasure m : measures) {
            CellResult& cell = out[idx++];
            try {
                const CaseSpec spec = CaseSpec::make(c, c <= 2 ? std::optional<double>(problem->target_r) : std::nullopt);
                SolverOptions opts = options;
                opts.seed = derive_seed(options.seed, static_cast<std::uint64_t>(reg.id) * 1000 +
                                                          static_cast<std::uint64_t>(c) * 10 + measure_index(m));
                cell.result = solve_case(spec, m, *problem, opts);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    }
}

// A restricted case can never beat its parent; when the parent's local search ended higher,
// the restricted solution is also feasible for the parent and replaces it.
void enforce_nesting(std::vector<CellResult>& cells, int parent, int child) {
    for (auto& p : cells) {
        if (p.case_id != parent || !p.ok()) continue;
        for (const auto& c : cells) {
            if (c.case_id != child || !c.ok() || c.regime_id != p.regime_id || c.measure != p.measure) continue;
            if (c.result->objective < p.result->objective) {
                OptimizationResult r = *c.result;
                r.case_id = parent;
                r.residuals.box.reset();
                p.result = r;
            }
        }
    }
}

}  // namespace

ResultMatrix solve_all(const RegimeTable& regimes, const ReturnPanel& panel, std::span<const int> cases,
                       std::span<const RiskMeasure> measures, const IntegrationConfig& cfg,
                       const SolverOptions& options) {
    const std::size_t per_regime = cases.size() * measures.size();
    std::vector<std::vector<CellResult>> blocks(regimes.regimes.size());
    for (std::size_t i = 0; i < regimes.regimes.size(); ++i) {
        for (int c : cases) {
            for (RiskMeasure m : measures) blocks[i].push_back(CellResult{regimes.regimes[i].id, c, m, std::nullopt, {}});
        }
    }

    // regimes are independent; each worker writes only its own block
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < blocks.size(); i = next++) {
            solve_regime(regimes.regimes[i], panel, cases, measures, cfg, options, blocks[i]);
        }
    };
    const std::size_t threads =
        std::min<std::size_t>(blocks.size(), std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ResultMatrix out;
    out.cells.reserve(blocks.size() * per_regime);
    for (auto& b : blocks) {
        for (auto& c : b) out.cells.push_back(std::move(c));
    }
    enforce_nesting(out.cells, 1, 2);
    enforce_nesting(out.cells, 3, 4);
    return out;
}

}  // namespace copularisk
