#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "copularisk/copula.hpp"
#include "copularisk/marketdata.hpp"

namespace copularisk {

/// One block of days whose daily log returns have normal marginals joined by `model`.
struct SyntheticRegime {
    CopulaModel model = CopulaModel::independence();
    std::array<double, 3> mean{};
    std::array<double, 3> sd{0.01, 0.01, 0.01};
    int days = 500;
};

struct SyntheticMarket {
    PriceSeries sp500;
    PriceSeries oil;
    PriceSeries gas;
    /// Families set to the generating ones, no parameters.
    RegimeTable regimes;
};

/// Weekday calendar starting at `first_day` (the first price); regimes follow back to back.
SyntheticMarket make_synthetic_market(std::span<const SyntheticRegime> blocks, Date first_day, std::uint64_t seed);

/// Bundled fixture: 4 regimes x 500 days, one each of Clayton, Gumbel, Gauss and Frank.
std::vector<SyntheticRegime> fixture_regimes();

/// `date,price` rows, prices to 12 significant digits.
std::string price_csv(const PriceSeries& series);

}  // namespace copularisk
