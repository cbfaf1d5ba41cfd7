#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "copularisk/copula.hpp"
#include "copularisk/empirical.hpp"
#include "copularisk/marketdata.hpp"

namespace copularisk {

/// Wealth fractions for (SP500, Oil, Gas). Short positions and leverage are allowed;
/// only the budget w1 + w2 + w3 = 1 (within 1e-8) is enforced.
class PortfolioWeights {
public:
    PortfolioWeights(double w1, double w2, double w3);
    /// w3 = 1 - w1 - w2.
    static PortfolioWeights completing(double w1, double w2);
    static PortfolioWeights naive();

    double operator[](std::size_t i) const { return w_[i]; }
    const std::array<double, 3>& values() const { return w_; }
    double budget_residual() const { return w_[0] + w_[1] + w_[2] - 1.0; }

    friend bool operator==(const PortfolioWeights&, const PortfolioWeights&) = default;

private:
    std::array<double, 3> w_;
};

/// One empirical marginal per asset, in (SP500, Oil, Gas) order.
struct Marginals {
    EmpiricalDistribution sp500;
    EmpiricalDistribution oil;
    EmpiricalDistribution gas;

    static Marginals from_panel(const ReturnPanel& panel);
    const EmpiricalDistribution& operator[](std::size_t i) const;
};

enum class IntegrationMethod { Grid, MonteCarlo };

struct IntegrationConfig {
    IntegrationMethod method = IntegrationMethod::MonteCarlo;
    int grid_points_per_axis = 64;
    std::size_t mc_samples = 100000;
    std::uint64_t seed = 20150101;

    /// Throws std::invalid_argument: grid needs >= 8 points per axis, Monte Carlo >= 10^4 samples.
    void validate() const;
};

/// Discretized joint law of the three asset returns: quantile values at unit-cube
/// points with probability weights summing to one.
///
/// Grid mode evaluates the quantiles at cell midpoints. Cell masses are exact CDF box
/// probabilities for the Archimedean families and c(midpoint) * cell volume for the
/// elliptical ones, renormalized by their total. Monte Carlo mode draws from the copula
/// with equal weights.
struct ScenarioSet {
    IntegrationMethod method = IntegrationMethod::MonteCarlo;
    std::array<std::vector<double>, 3> returns;
    std::vector<double> weights;
    /// Raw grid mass sum(c * cell volume) before normalization; 1 for Monte Carlo.
    double raw_mass = 1.0;
    /// Coordinates moved onto [1e-12, 1 - 1e-12] before density evaluation or sampling.
    std::size_t clamped_coordinates = 0;

    std::size_t size() const { return weights.size(); }
    /// E[F_i^-1(U_i)] under this discrete law.
    std::array<double, 3> asset_means() const;
};

ScenarioSet build_scenarios(const CopulaModel& model, const Marginals& dists, const IntegrationConfig& cfg);

/// Calls `visit(point, quantile_returns, weight)` for every cell or sample; weights are unnormalized
/// grid cell masses in grid mode and 1/N in Monte Carlo mode.
void for_each_scenario(const CopulaModel& model, const Marginals& dists, const IntegrationConfig& cfg,
                       const std::function<void(const UnitPoint&, const ReturnTriplet&, double)>& visit);

/// Portfolio daily return at a unit-cube point: sum_i w_i F_i^-1(point_i).
double portfolio_return(const PortfolioWeights& weights, const Marginals& dists, const UnitPoint& point);

using Integrand = std::function<double(const UnitPoint& point, const ReturnTriplet& quantiles)>;

/// Midpoint grid quadrature (grid mode) or sample mean over copula draws (Monte Carlo mode).
/// Throws std::domain_error naming the cube point when the integrand is not finite.
double expectation(const CopulaModel& model, const Marginals& dists, const Integrand& f, const IntegrationConfig& cfg);

struct Estimate {
    double value = 0.0;
    /// Monte Carlo standard error; zero in grid mode.
    double std_error = 0.0;
};

struct TailSpec {
    double q5 = 0.0;
    double smoothing_bandwidth = 1e-2;
};

/// q5 from the SP500 marginal via the empirical quantile convention.
TailSpec tail_spec_for(const Marginals& dists, double bandwidth = 1e-2);

enum class TailMode { Hard, Smooth };

enum class RiskMeasure { Variance, Semivariance, TailRisk };
inline constexpr std::array<RiskMeasure, 3> kAllMeasures{RiskMeasure::Variance, RiskMeasure::Semivariance,
                                                        RiskMeasure::TailRisk};
std::string_view to_string(RiskMeasure m);
std::optional<RiskMeasure> parse_measure(std::string_view text);

// Scenario-level evaluations, used directly by the optimizer. `with_error` = false skips the
// standard-error pass.
Estimate variance_of(std::span<const double, 3> w, const ScenarioSet& s, bool with_error = true);
Estimate semivariance_of(std::span<const double, 3> w, const ScenarioSet& s, double target, bool with_error = true);
Estimate tail_risk_of(std::span<const double, 3> w, const ScenarioSet& s, const TailSpec& tail, TailMode mode,
                      bool with_error = true);
double expected_return_of(std::span<const double, 3> w, const ScenarioSet& s);

/// E[Rp^2] - (E[Rp])^2.
double variance_measure(const PortfolioWeights& w, const Marginals& dists, const CopulaModel& model,
                        const IntegrationConfig& cfg);
/// Var[min(0, Rp - r)], r in daily units.
double semivariance_measure(const PortfolioWeights& w, const Marginals& dists, const CopulaModel& model,
                            const IntegrationConfig& cfg, double target);
/// Pr(Rp <= q5); smooth mode replaces the indicator with 1 / (1 + exp((Rp - q5) / h)).
double tail_risk_measure(const PortfolioWeights& w, const Marginals& dists, const CopulaModel& model,
                         const IntegrationConfig& cfg, const TailSpec& tail, TailMode mode);

/// r = m + 0.5 |m|.
double target_return(double naive_daily_mean);

inline constexpr double kTradingDays = 252.0;

struct NaiveStats {
    std::size_t observations = 0;
    double mean = 0.0;             ///< daily
    double std_dev = 0.0;          ///< daily, n-1 denominator
    double skewness = 0.0;         ///< NaN when degenerate
    double excess_kurtosis = 0.0;  ///< NaN when degenerate
    std::optional<double> upr;     ///< empty when no return falls below the target
    double target = 0.0;           ///< daily
    bool degenerate = false;       ///< zero dispersion

    // Reporting units: percent, annualized by 252 trading days where applicable.
    double annualized_mean_percent() const { return mean * kTradingDays * 100.0; }
    double annualized_target_percent() const { return target * kTradingDays * 100.0; }
    double annualized_std_percent() const;
};

/// Equal-weight benchmark statistics over a regime sub-panel; needs >= 30 observations.
NaiveStats naive_stats(const ReturnPanel& panel);

}  // namespace copularisk
