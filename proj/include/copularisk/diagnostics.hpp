#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "copularisk/marketdata.hpp"
#include "copularisk/optimizer.hpp"
#include "copularisk/risk_measures.hpp"

namespace copularisk {

/// Upside potential ratio: mean(max(x - r, 0)) / sqrt(mean(min(x - r, 0)^2)).
/// std::nullopt when nothing falls below r (no downside). Throws std::invalid_argument on empty input.
std::optional<double> upr(std::span<const double> daily_returns, double r);

/// (1/3) sqrt(sum (a_i - b_i)^2) with weights given in percent.
double dissimilarity(std::span<const double, 3> a_percent, std::span<const double, 3> b_percent);
/// Same index on fractional weights, converted to percent first.
double dissimilarity(const PortfolioWeights& a, const PortfolioWeights& b);

/// Regime-switching buy-and-hold: weights chosen per regime, applied to every day of that regime.
struct StrategyPath {
    std::vector<Date> dates;
    std::vector<double> daily;       ///< portfolio log return per day
    std::vector<int> regime_of_day;  ///< regime id per day
    std::map<int, PortfolioWeights> weights;
    std::map<int, std::string> labels;  ///< measure label(s) per regime, informational
};

/// Throws DataError when a panel date is not covered by a regime that has weights.
StrategyPath build_strategy(const ReturnPanel& panel, const RegimeTable& regimes,
                            const std::map<int, PortfolioWeights>& weights,
                            const std::map<int, std::string>& labels = {});

struct CumulativeReturn {
    std::vector<double> cumulative;  ///< running sum of daily log returns
    double total = 0.0;
    double annualized_percent = 0.0;  ///< total / days * 252 * 100
};

CumulativeReturn cumulative_return(std::span<const double> daily);
CumulativeReturn cumulative_return(const StrategyPath& path);
/// Restricted to the days of one regime.
CumulativeReturn regime_cumulative_return(const StrategyPath& path, int regime_id);

/// X_t = mu t + sigma W_t on [0, horizon], time in days.
struct DrawdownInput {
    double mu = 0.0;
    double sigma = 0.0;
    double horizon = 1.0;

    void validate() const;
};

struct DrawdownMc {
    std::size_t paths = 20000;
    std::size_t steps = 1000;
    std::uint64_t seed = 20150101;
};

/// Expected maximum drawdown in the units of X (multiply by 100 for percent of log wealth).
/// sigma = 0 is evaluated exactly.
Estimate expected_max_drawdown(const DrawdownInput& input, const DrawdownMc& mc = {});

/// Winning measures for one (regime, case) cell; more than one on ties.
struct Winner {
    int regime_id = 0;
    int case_id = 0;
    std::vector<RiskMeasure> measures;
    double annualized_percent = 0.0;
};

/// Highest regime annualized cumulative return among the measures present in `results`.
/// Returns within `tie_tolerance` (annualized percent) of the best are joint winners.
/// Throws std::invalid_argument when a requested cell has no successful result.
std::vector<Winner> best_per_regime(const ResultMatrix& results, const RegimeTable& regimes,
                                    const ReturnPanel& panel, std::span<const int> cases,
                                    std::span<const RiskMeasure> measures, double tie_tolerance = 1e-9);

struct SuperoptimalReport {
    int case_id = 0;
    StrategyPath path;
    CumulativeReturn cumulative;
    Estimate emdd;  ///< in log-return units
};

/// Stitches the first winning measure's weights per regime for `case_id`. EMDD drift and
/// volatility are the sample mean and standard deviation of the stitched daily series.
SuperoptimalReport superoptimal(const ResultMatrix& results, std::span<const Winner> winners, int case_id,
                                const RegimeTable& regimes, const ReturnPanel& panel, const DrawdownMc& mc = {});

/// Weights of one (case, measure) across all regimes, as a strategy. Throws when a regime cell failed.
StrategyPath measure_strategy(const ResultMatrix& results, int case_id, RiskMeasure measure,
                              const RegimeTable& regimes, const ReturnPanel& panel);

/// Sample mean and standard deviation (n - 1) of a daily series, as EMDD input over its length.
DrawdownInput drawdown_input_for(std::span<const double> daily);

}  // namespace copularisk
