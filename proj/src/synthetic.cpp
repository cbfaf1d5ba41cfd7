#include "copularisk/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "copularisk/rng.hpp"

namespace copularisk {

namespace {

Date next_weekday(Date d) {
    do {
        d = d.add_days(1);
    } while (std::chrono::weekday(std::chrono::sys_days(std::chrono::days(d.days()))).iso_encoding() > 5);
    return d;
}

VarianceLabel label_for(double daily_sd) {
    const double annual = daily_sd * std::sqrt(252.0);
    if (annual < 0.15) return VarianceLabel::VeryLow;
    if (annual < 0.30) return VarianceLabel::Low;
    if (annual < 0.45) return VarianceLabel::Medium;
    return VarianceLabel::High;
}

}  // namespace

SyntheticMarket make_synthetic_market(std::span<const SyntheticRegime> blocks, Date first_day, std::uint64_t seed) {
    if (blocks.empty()) throw std::invalid_argument("need at least one regime block");
    SyntheticMarket m;
    m.sp500.asset_id = "sp500";
    m.oil.asset_id = "oil";
    m.gas.asset_id = "gas";
    std::array<PriceSeries*, 3> series{&m.sp500, &m.oil, &m.gas};
    std::array<double, 3> price{1000.0, 50.0, 3.0};
    Date day = first_day;
    for (std::size_t i = 0; i < 3; ++i) series[i]->observations.push_back({day, price[i]});

    const boost::math::normal_distribution<double> z;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& blk = blocks[b];
        if (blk.days < 1) throw std::invalid_argument("regime block needs at least one day");
        const auto u = sample(blk.model, static_cast<std::size_t>(blk.days), derive_seed(seed, b + 1));
        RegimeSpec spec;
        spec.id = static_cast<int>(b) + 1;
        spec.family = blk.model.family();
        for (std::size_t i = 0; i < 3; ++i) spec.labels[i] = label_for(blk.sd[i]);
        for (int t = 0; t < blk.days; ++t) {
            day = next_weekday(day);
            if (t == 0) spec.start = day;
            for (std::size_t i = 0; i < 3; ++i) {
                const double r = blk.mean[i] + blk.sd[i] * quantile(z, u[static_cast<std::size_t>(t)][i]);
                price[i] *= std::exp(r);
                series[i]->observations.push_back({day, price[i]});
            }
        }
        spec.end = day;
        m.regimes.regimes.push_back(spec);
    }
    return m;
}

std::vector<SyntheticRegime> fixture_regimes() {
    return {
        {CopulaModel::clayton(2.0), {4e-4, 2e-4, -1e-4}, {0.010, 0.020, 0.030}, 500},
        {CopulaModel::gumbel(1.8), {-2e-4, 5e-4, 3e-4}, {0.018, 0.025, 0.035}, 500},
        {CopulaModel::gauss(0.5, 0.3, 0.4), {3e-4, -3e-4, 2e-4}, {0.008, 0.015, 0.025}, 500},
        {CopulaModel::frank(6.0), {1e-4, 4e-4, -2e-4}, {0.012, 0.030, 0.040}, 500},
    };
}

std::string price_csv(const PriceSeries& series) {
    std::ostringstream s;
    s << "date,price\n";
    char buf[64];
    for (const auto& o : series.observations) {
        std::snprintf(buf, sizeof buf, "%.12g", o.price);
        s << o.date.iso() << ',' << buf << '\n';
    }
    return s.str();
}

}  // namespace copularisk
