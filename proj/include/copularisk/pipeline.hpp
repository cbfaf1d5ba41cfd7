#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "copularisk/diagnostics.hpp"
#include "copularisk/optimizer.hpp"

namespace copularisk {

enum ExitCode : int { kExitSuccess = 0, kExitUsage = 1, kExitData = 2, kExitPartial = 3, kExitTotal = 4 };

/// Bad flags or an unusable regime config.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::filesystem::path sp500;
    std::filesystem::path oil;
    std::filesystem::path gas;
    std::filesystem::path regime_config;
    std::filesystem::path out = "out";
    std::vector<int> cases{1, 2, 3, 4};
    std::vector<RiskMeasure> measures{kAllMeasures.begin(), kAllMeasures.end()};
    IntegrationConfig integration;
    std::uint64_t seed = 20150101;
    bool family_from_config = false;
    std::optional<CopulaFamily> family;  ///< forces one family for every regime
    DrawdownMc drawdown;

    /// Throws UsageError.
    void validate() const;
};

/// "1,3" -> {1, 3}; throws UsageError on anything outside 1..4 or duplicates.
std::vector<int> parse_cases(std::string_view text);
/// "variance,tail_risk"; throws UsageError.
std::vector<RiskMeasure> parse_measures(std::string_view text);

// Intermediate artifacts, relative to the output directory.
inline constexpr std::string_view kPanelFile = "panel.csv";
inline constexpr std::string_view kFittedConfigFile = "regimes_fitted.json";
inline constexpr std::string_view kResultsFile = "results.json";

/// Restricts the panel to [first regime start, last regime end]. Throws DataError when a
/// date inside that span falls between regimes.
ReturnPanel trim_to_regimes(const ReturnPanel& panel, const RegimeTable& regimes);

// Each command returns an ExitCode; errors go to `err` and never escape as exceptions.
int cmd_ingest(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_fit(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_optimize(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_diagnose(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);
/// ingest, fit, optimize, diagnose; stops at the first usage, data or total failure.
int cmd_pipeline(const PipelineConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace copularisk
