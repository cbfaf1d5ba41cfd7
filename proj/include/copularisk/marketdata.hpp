#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "copularisk/copula.hpp"

namespace copularisk {

/// Thrown for malformed or inconsistent input data (CSV rows, regime configs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Calendar day, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    explicit Date(std::chrono::sys_days d) : days_(d.time_since_epoch().count()) {}
    Date(int y, unsigned m, unsigned d);

    /// Parses `YYYY-MM-DD`; std::nullopt if malformed or not a real calendar day.
    static std::optional<Date> parse(std::string_view text);

    std::string iso() const;
    std::int64_t days() const { return days_; }
    Date add_days(std::int64_t n) const {
        Date d = *this;
        d.days_ += n;
        return d;
    }

    friend constexpr auto operator<=>(const Date&, const Date&) = default;

private:
    std::int64_t days_ = 0;
};

struct PriceObservation {
    Date date;
    double price = 0.0;
};

struct PriceSeries {
    std::string asset_id;
    std::vector<PriceObservation> observations;
};

inline constexpr std::size_t kAssetCount = 3;
inline constexpr std::array<std::string_view, kAssetCount> kAssetNames{"sp500", "oil", "gas"};

using ReturnTriplet = std::array<double, kAssetCount>;

/// Aligned daily log returns, one triplet (SP500, Oil, Gas) per date.
struct ReturnPanel {
    std::vector<Date> dates;
    std::vector<ReturnTriplet> returns;

    std::size_t size() const { return dates.size(); }
    bool empty() const { return dates.empty(); }
    /// One asset's column, in date order.
    std::vector<double> column(std::size_t asset) const;
};

enum class VarianceLabel { VeryLow, Low, Medium, High };

std::string_view to_string(VarianceLabel label);
std::optional<VarianceLabel> parse_variance_label(std::string_view text);

struct RegimeSpec {
    int id = 0;
    Date start;
    Date end;
    std::array<VarianceLabel, kAssetCount> labels{};
    CopulaFamily family = CopulaFamily::Gauss;
    std::optional<CopulaModel> fixed_params;

    bool contains(Date d) const { return start <= d && d <= end; }
};

struct RegimeTable {
    std::vector<RegimeSpec> regimes;

    /// Index of the regime covering `d`, if any.
    std::optional<std::size_t> find(Date d) const;
};

PriceSeries load_price_csv(const std::filesystem::path& path, std::string asset_id);
PriceSeries parse_price_csv(std::string_view text, std::string asset_id);

/// Intersects the three date sets, then takes ln(p_k / p_{k-1}) over consecutive common dates.
ReturnPanel log_returns(const PriceSeries& sp500, const PriceSeries& oil, const PriceSeries& gas);

/// Sub-panel of dates within [spec.start, spec.end]. Throws DataError when empty.
ReturnPanel slice_by_regime(const ReturnPanel& panel, const RegimeSpec& spec);

RegimeTable load_regime_table(const std::filesystem::path& path);
RegimeTable parse_regime_table(std::string_view json_text);
/// Throws DataError on overlapping or unordered windows or duplicate ids.
void validate_regime_table(const RegimeTable& table);
std::string regime_table_to_json(const RegimeTable& table);

/// Panel cache CSV: `date,sp500,oil,gas`.
void write_panel_csv(const std::filesystem::path& path, const ReturnPanel& panel);
ReturnPanel load_panel_csv(const std::filesystem::path& path);

}  // namespace copularisk
