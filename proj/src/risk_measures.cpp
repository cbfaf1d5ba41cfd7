#include "copularisk/risk_measures.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "copularisk/copula_detail.hpp"
#include "copularisk/diagnostics.hpp"

namespace copularisk {

PortfolioWeights::PortfolioWeights(double w1, double w2, double w3) : w_{w1, w2, w3} {
    if (!std::isfinite(w1) || !std::isfinite(w2) || !std::isfinite(w3)) {
        throw std::invalid_argument("portfolio weights must be finite");
    }
    if (std::abs(budget_residual()) > 1e-8) throw std::invalid_argument("portfolio weights must sum to 1");
}

PortfolioWeights PortfolioWeights::completing(double w1, double w2) { return {w1, w2, 1.0 - w1 - w2}; }

PortfolioWeights PortfolioWeights::naive() { return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}; }

Marginals Marginals::from_panel(const ReturnPanel& panel) {
    return {EmpiricalDistribution(panel.column(0)), EmpiricalDistribution(panel.column(1)),
            EmpiricalDistribution(panel.column(2))};
}

const EmpiricalDistribution& Marginals::operator[](std::size_t i) const {
    switch (i) {
        case 0: return sp500;
        case 1: return oil;
        case 2: return gas;
    }
    throw std::out_of_range("marginal index");
}

void IntegrationConfig::validate() const {
    if (method == IntegrationMethod::Grid && grid_points_per_axis < 8) {
        throw std::invalid_argument("grid integration needs at least 8 points per axis");
    }
    if (method == IntegrationMethod::MonteCarlo && mc_samples < 10000) {
        throw std::invalid_argument("Monte Carlo integration needs at least 10^4 samples");
    }
}

std::array<double, 3> ScenarioSet::asset_means() const {
    std::array<double, 3> mu{};
    for (std::size_t a = 0; a < 3; ++a) {
        double acc = 0.0;
        for (std::size_t k = 0; k < size(); ++k) acc += weights[k] * returns[a][k];
        mu[a] = acc;
    }
    return mu;
}

void for_each_scenario(const CopulaModel& model, const Marginals& dists, const IntegrationConfig& cfg,
                       const std::function<void(const UnitPoint&, const ReturnTriplet&, double)>& visit) {
    cfg.validate();
    if (cfg.method == IntegrationMethod::MonteCarlo) {
        const auto points = sample(model, cfg.mc_samples, cfg.seed);
        const double w = 1.0 / static_cast<double>(points.size());
        for (const auto& p : points) {
            const ReturnTriplet q{dists.sp500.quantile(p[0]), dists.oil.quantile(p[1]), dists.gas.quantile(p[2])};
            visit(p, q, w);
        }
        return;
    }

    const int n = cfg.grid_points_per_axis;
    const double h = 1.0 / n;
    const double cell = h * h * h;
    std::vector<double> nodes(n);
    std::vector<detail::AxisTerm> terms(n);
    std::array<std::vector<double>, 3> q;
    for (int i = 0; i < n; ++i) {
        nodes[i] = (i + 0.5) * h;
        terms[i] = detail::axis_term(model, nodes[i]);
        for (std::size_t a = 0; a < 3; ++a) q[a].push_back(dists[a].quantile(nodes[i]));
    }

    if (is_archimedean(model.family())) {
        // Tail-dependent densities blow up along the diagonal near the corners, where c * h^3
        // overstates the mass by O(h). The closed-form CDF gives each cell's mass exactly.
        const int m = n + 1;
        std::vector<double> lattice(static_cast<std::size_t>(m) * m * m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                for (int k = 0; k < m; ++k) lattice[(i * m + j) * m + k] = cdf(model, i * h, j * h, k * h);
        auto C = [&](int i, int j, int k) { return lattice[(i * m + j) * m + k]; };
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                for (int k = 0; k < n; ++k) {
                    const double mass = C(i + 1, j + 1, k + 1) - C(i, j + 1, k + 1) - C(i + 1, j, k + 1) -
                                        C(i + 1, j + 1, k) + C(i, j, k + 1) + C(i, j + 1, k) + C(i + 1, j, k) -
                                        C(i, j, k);
                    visit(UnitPoint{nodes[i], nodes[j], nodes[k]}, ReturnTriplet{q[0][i], q[1][j], q[2][k]},
                          std::max(mass, 0.0));
                }
            }
        }
        return;
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                const double c = std::exp(detail::combine_log_density(model, terms[i], terms[j], terms[k]));
                visit(UnitPoint{nodes[i], nodes[j], nodes[k]}, ReturnTriplet{q[0][i], q[1][j], q[2][k]}, c * cell);
            }
        }
    }
}

ScenarioSet build_scenarios(const CopulaModel& model, const Marginals& dists, const IntegrationConfig& cfg) {
    ScenarioSet s;
    s.method = cfg.method;
    const std::size_t expected = cfg.method == IntegrationMethod::MonteCarlo
                                     ? cfg.mc_samples
                                     : static_cast<std::size_t>(cfg.grid_points_per_axis) * cfg.grid_points_per_axis *
                                           cfg.grid_points_per_axis;
    for (auto& col : s.returns) col.reserve(expected);
    s.weights.reserve(expected);
    double mass = 0.0;
    for_each_scenario(model, dists, cfg, [&](const UnitPoint& p, const ReturnTriplet& q, double w) {
        if (!std::isfinite(w)) {
            std::ostringstream msg;
            msg << "non-finite copula density at (" << p[0] << ", " << p[1] << ", " << p[2] << ")";
            throw std::domain_error(msg.str());
        }
        for (double x : p) {
            if (x <= kBoundaryClamp || x >= 1.0 - kBoundaryClamp) ++s.clamped_coordinates;
        }
        for (std::size_t a = 0; a < 3; ++a) s.returns[a].push_back(q[a]);
        s.weights.push_back(w);
        mass += w;
    });
    if (!(mass > 0.0)) throw std::domain_error("scenario set has zero total mass");
    s.raw_mass = mass;
    for (double& w : s.weights) w /= mass;
    return s;
}

double portfolio_return(const PortfolioWeights& weights, const Marginals& dists, const UnitPoint& point) {
    return weights[0] * dists.sp500.quantile(point[0]) + weights[1] * dists.oil.quantile(point[1]) +
           weights[2] * dists.gas.quantile(point[2]);
}

double expectation(const CopulaModel& model, const Marginals& dists, const Integrand& f, const IntegrationConfig& cfg) {
    double acc = 0.0;
    double mass = 0.0;
    for_each_scenario(model, dists, cfg, [&](const UnitPoint& p, const ReturnTriplet& q, double w) {
        const double value = f(p, q);
        if (!std::isfinite(value)) {
            std::ostringstream msg;
            msg << "non-finite integrand at (" << p[0] << ", " << p[1] << ", " << p[2] << ")";
            throw std::domain_error(msg.str());
        }
        acc += value * w;
        mass += w;
    });
    // Self-normalized: the grid's cell masses are rescaled to a probability measure.
    if (!(mass > 0.0)) throw std::domain_error("scenario set has zero total mass");
    return acc / mass;
}

TailSpec tail_spec_for(const Marginals& dists, double bandwidth) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("smoothing bandwidth must be > 0");
    return {dists.sp500.quantile(0.05), bandwidth};
}

std::string_view to_string(RiskMeasure m) {
    switch (m) {
        case RiskMeasure::Variance: return "variance";
        case RiskMeasure::Semivariance: return "semivariance";
        case RiskMeasure::TailRisk: return "tail_risk";
    }
    return "?";
}

std::optional<RiskMeasure> parse_measure(std::string_view text) {
    for (auto m : kAllMeasures) {
        if (to_string(m) == text) return m;
    }
    return std::nullopt;
}

namespace {

inline double rp_at(std::span<const double, 3> w, const ScenarioSet& s, std::size_t k) {
    return w[0] * s.returns[0][k] + w[1] * s.returns[1][k] + w[2] * s.returns[2][k];
}

// Weighted variance of g(Rp) with a delta-method standard error for Monte Carlo sets.
template <class Transform>
Estimate weighted_variance(std::span<const double, 3> w, const ScenarioSet& s, Transform g, bool with_error) {
    double mean = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) mean += s.weights[k] * g(rp_at(w, s, k));
    double var = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double d = g(rp_at(w, s, k)) - mean;
        var += s.weights[k] * d * d;
    }
    Estimate e{var, 0.0};
    if (with_error && s.method == IntegrationMethod::MonteCarlo) {
        double spread = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            const double d = g(rp_at(w, s, k)) - mean;
            spread += s.weights[k] * (d * d - var) * (d * d - var);
        }
        e.std_error = std::sqrt(spread / static_cast<double>(s.size()));
    }
    return e;
}

inline double logistic_below(double x, double threshold, double h) {
    const double z = (x - threshold) / h;
    if (z > 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

}  // namespace

double expected_return_of(std::span<const double, 3> w, const ScenarioSet& s) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += s.weights[k] * rp_at(w, s, k);
    return acc;
}

Estimate variance_of(std::span<const double, 3> w, const ScenarioSet& s, bool with_error) {
    return weighted_variance(w, s, [](double x) { return x; }, with_error);
}

Estimate semivariance_of(std::span<const double, 3> w, const ScenarioSet& s, double target, bool with_error) {
    return weighted_variance(w, s, [target](double x) { return std::min(0.0, x - target); }, with_error);
}

Estimate tail_risk_of(std::span<const double, 3> w, const ScenarioSet& s, const TailSpec& tail, TailMode mode,
                      bool with_error) {
    if (!(tail.smoothing_bandwidth > 0.0)) throw std::invalid_argument("smoothing bandwidth must be > 0");
    double p = 0.0;
    double second = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double x = rp_at(w, s, k);
        const double v = mode == TailMode::Hard ? (x <= tail.q5 ? 1.0 : 0.0)
                                                : logistic_below(x, tail.q5, tail.smoothing_bandwidth);
        p += s.weights[k] * v;
        second += s.weights[k] * v * v;
    }
    Estimate e{std::clamp(p, 0.0, 1.0), 0.0};
    if (with_error && s.method == IntegrationMethod::MonteCarlo) {
        e.std_error = std::sqrt(std::max(0.0, second - p * p) / static_cast<double>(s.size()));
    }
    return e;
}

double variance_measure(const PortfolioWeights& w, const Marginals& dists, const CopulaModel& model,
                        const IntegrationConfig& cfg) {
    return variance_of(w.values(), build_scenarios(model, dists, cfg)).value;
}

double semivariance_measure(const PortfolioWeights& w, const Marginals& dists, const CopulaModel& model,
                            const IntegrationConfig& cfg, double target) {
    return semivariance_of(w.values(), build_scenarios(model, dists, cfg), target).value;
}

double tail_risk_measure(const PortfolioWeights& w, const Marginals& dists, const CopulaModel& model,
                         const IntegrationConfig& cfg, const TailSpec& tail, TailMode mode) {
    return tail_risk_of(w.values(), build_scenarios(model, dists, cfg), tail, mode).value;
}

double target_return(double naive_daily_mean) { return naive_daily_mean + 0.5 * std::abs(naive_daily_mean); }

double NaiveStats::annualized_std_percent() const { return std_dev * std::sqrt(kTradingDays) * 100.0; }

NaiveStats naive_stats(const ReturnPanel& panel) {
    if (panel.size() < 30) {
        throw std::invalid_argument("naive statistics need at least 30 observations, got " + std::to_string(panel.size()));
    }
    std::vector<double> daily;
    daily.reserve(panel.size());
    for (const auto& r : panel.returns) daily.push_back((r[0] + r[1] + r[2]) / 3.0);

    NaiveStats st;
    const double n = static_cast<double>(daily.size());
    st.observations = daily.size();
    st.mean = std::accumulate(daily.begin(), daily.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : daily) {
        const double d = x - st.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    st.std_dev = std::sqrt(m2 / (n - 1.0));
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (m2 <= 1e-14 * std::max(1.0, st.mean * st.mean)) {
        st.degenerate = true;
        st.skewness = std::numeric_limits<double>::quiet_NaN();
        st.excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
    } else {
        st.skewness = m3 / std::pow(m2, 1.5);
        st.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    }
    st.target = target_return(st.mean);
    st.upr = upr(daily, st.target);
    return st;
}

}  // namespace copularisk
