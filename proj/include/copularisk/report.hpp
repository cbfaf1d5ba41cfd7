#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "copularisk/diagnostics.hpp"
#include "copularisk/optimizer.hpp"

namespace copularisk {

/// What produced a result matrix; echoed into every output header.
struct RunInfo {
    std::uint64_t seed = 0;
    IntegrationConfig integration;
    std::vector<int> cases;
    std::vector<RiskMeasure> measures;
};

nlohmann::json results_to_json(const ResultMatrix& results, const RunInfo& info);
/// Inverse of results_to_json. Throws DataError on malformed documents.
ResultMatrix results_from_json(const nlohmann::json& doc, RunInfo& info);

/// Optimal weights per (regime, case) for one measure: weights and r in percent, r annualized.
std::string optimal_portfolios_csv(const ResultMatrix& results, RiskMeasure measure, const RunInfo& info);

struct RegimeNaive {
    int regime_id = 0;
    std::optional<NaiveStats> stats;  ///< empty when the regime is too short
    std::string error;
};

struct DissimilarityRow {
    RiskMeasure measure = RiskMeasure::Variance;
    int regime_id = 0;
    std::map<std::pair<int, int>, std::optional<double>> pairs;  ///< (case a, case b), a < b
};

struct StrategyReturns {
    int case_id = 0;
    RiskMeasure measure = RiskMeasure::Variance;
    std::map<int, double> per_regime;  ///< annualized percent by regime id
    double whole = 0.0;                ///< annualized percent over the sample
    DrawdownInput drawdown;
    Estimate emdd;  ///< log-return units
    StrategyPath path;
};

/// Everything the diagnose step reports.
struct DiagnosticsBundle {
    RunInfo info;
    std::vector<int> regime_ids;
    std::vector<RegimeNaive> naive;
    std::vector<DissimilarityRow> dissimilarity;
    std::vector<StrategyReturns> strategies;  ///< (case, measure) pairs with results in every regime
    std::vector<Winner> winners;
    std::vector<SuperoptimalReport> superoptimal;
    std::vector<std::string> warnings;  ///< cells skipped because of failed solves
};

/// Cells that failed are left out (and listed in `warnings`) instead of aborting the report.
/// The panel must be covered by the regime table.
DiagnosticsBundle compute_diagnostics(const ResultMatrix& results, const RunInfo& info, const RegimeTable& regimes,
                                      const ReturnPanel& panel, const DrawdownMc& mc);

/// File name (relative to the output directory) -> contents.
std::map<std::string, std::string> render_diagnostics(const DiagnosticsBundle& bundle);

/// Fixed-point rendering used by every table.
std::string fixed(double value, int decimals = 4);

}  // namespace copularisk
