#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "copularisk/diagnostics.hpp"

namespace copularisk::test {

namespace {

OptimizationResult result_with(int case_id, RiskMeasure m, PortfolioWeights w) {
    OptimizationResult r;
    r.case_id = case_id;
    r.measure = m;
    r.weights = w;
    r.converged = true;
    return r;
}

RegimeTable regimes(int count, int days_each, Date start = Date(2005, 1, 3)) {
    RegimeTable t;
    for (int i = 0; i < count; ++i) {
        RegimeSpec r;
        r.id = i + 1;
        r.start = start.add_days(static_cast<std::int64_t>(i) * days_each);
        r.end = r.start.add_days(days_each - 1);
        t.regimes.push_back(r);
    }
    return t;
}

ReturnPanel random_panel(const RegimeTable& t, std::uint64_t seed) {
    ReturnPanel p;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    for (const auto& r : t.regimes) {
        for (Date d = r.start; d <= r.end; d = d.add_days(1)) {
            p.dates.push_back(d);
            p.returns.push_back({3e-4 + 0.01 * z(rng), 0.02 * z(rng), -1e-4 + 0.015 * z(rng)});
        }
    }
    return p;
}

double direct_annualized(const ReturnPanel& p, const RegimeSpec& r, const PortfolioWeights& w) {
    double total = 0.0;
    int n = 0;
    for (std::size_t t = 0; t < p.size(); ++t) {
        if (!r.contains(p.dates[t])) continue;
        total += w[0] * p.returns[t][0] + w[1] * p.returns[t][1] + w[2] * p.returns[t][2];
        ++n;
    }
    return total / n * 252.0 * 100.0;
}

}  // namespace

TEST(Upr, TwoPointArithmetic) {
    const double r = 0.003;
    const std::vector<double> x{r + 1.0, r - 1.0};
    ASSERT_TRUE(upr(x, r).has_value());
    EXPECT_NEAR(*upr(x, r), 0.5 / std::sqrt(0.5), 1e-12);
    EXPECT_NEAR(*upr(x, r), 0.7071, 1e-4);
}

TEST(Upr, NoDownside) {
    const std::vector<double> x{0.02, 0.03, 0.011};
    EXPECT_FALSE(upr(x, 0.01).has_value());
    EXPECT_THROW(upr(std::vector<double>{}, 0.0), std::invalid_argument);
}

TEST(Upr, SymmetricSampleMatchesFoldedFormula) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    const double r = -0.002;
    std::vector<double> x;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (int i = 0; i < 50000; ++i) {
        const double d = 0.01 * z(rng);
        x.push_back(r + d);
        x.push_back(r - d);
        abs_sum += 2.0 * std::abs(d);
        sq_sum += 2.0 * d * d;
    }
    const double n = static_cast<double>(x.size());
    const double folded = 0.5 * (abs_sum / n) / std::sqrt(0.5 * sq_sum / n);
    EXPECT_NEAR(*upr(x, r), folded, 1e-12);
    // centred normal: (sigma / sqrt(2 pi)) / (sigma / sqrt(2)) = 1 / sqrt(pi)
    EXPECT_NEAR(*upr(x, r), std::sqrt(1.0 / M_PI), 1e-2);
}

TEST(Upr, TranslationCovariant) {
    const std::vector<double> x{0.01, -0.02, 0.005, -0.001, 0.03};
    std::vector<double> y = x;
    for (double& v : y) v += 0.7;
    EXPECT_NEAR(*upr(y, 0.001 + 0.7), *upr(x, 0.001), 1e-9);
}

TEST(Dissimilarity, Examples) {
    const std::array<double, 3> a{100, 0, 0}, b{0, 100, 0};
    EXPECT_EQ(dissimilarity(a, a), 0.0);
    EXPECT_NEAR(dissimilarity(a, b), std::sqrt(20000.0) / 3.0, 1e-12);
    EXPECT_NEAR(dissimilarity(a, b), 47.1405, 1e-4);
    EXPECT_NEAR(dissimilarity(PortfolioWeights(1, 0, 0), PortfolioWeights(0, 1, 0)), 47.1405, 1e-4);
}

TEST(Dissimilarity, PublishedRegimeTwoVariancePair) {
    const std::array<double, 3> case1{104.9556, 9.2022, -14.1578}, case2{99.9998, 11.5459, -11.5457};
    EXPECT_NEAR(dissimilarity(case1, case2), 2.0242, 5e-4);
}

TEST(Dissimilarity, MetricProperties) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-300, 300);
    for (int t = 0; t < 200; ++t) {
        const std::array<double, 3> a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)}, c{u(rng), u(rng), u(rng)};
        EXPECT_DOUBLE_EQ(dissimilarity(a, b), dissimilarity(b, a));
        EXPECT_LE(dissimilarity(a, c), dissimilarity(a, b) + dissimilarity(b, c) + 1e-12);
    }
}

TEST(CumulativeReturn, ConstantDailyReturn) {
    const std::vector<double> x(400, 0.0007);
    const auto c = cumulative_return(x);
    EXPECT_NEAR(c.annualized_percent, 252.0 * 0.0007 * 100.0, 1e-10);
    EXPECT_NEAR(c.total, 400 * 0.0007, 1e-12);
    EXPECT_EQ(c.cumulative.size(), 400u);
    EXPECT_THROW(cumulative_return(std::vector<double>{}), std::invalid_argument);
}

TEST(CumulativeReturn, ZeroPanelIsZero) {
    const auto t = regimes(2, 30);
    ReturnPanel p = random_panel(t, 1);
    for (auto& r : p.returns) r = {0.0, 0.0, 0.0};
    const auto path = build_strategy(p, t, {{1, PortfolioWeights::naive()}, {2, PortfolioWeights::naive()}});
    EXPECT_EQ(cumulative_return(path).annualized_percent, 0.0);
}

TEST(CumulativeReturn, SingleRegimeIsBuyAndHold) {
    const auto t = regimes(1, 500);
    const auto p = random_panel(t, 2);
    const PortfolioWeights w(1.3, -0.5, 0.2);
    const auto path = build_strategy(p, t, {{1, w}});
    double direct = 0.0;
    for (const auto& R : p.returns) direct += w[0] * R[0] + w[1] * R[1] + w[2] * R[2];
    EXPECT_NEAR(cumulative_return(path).total, direct, 1e-12);
}

TEST(CumulativeReturn, AdditiveOverRegimes) {
    const auto t = regimes(3, 120);
    const auto p = random_panel(t, 3);
    const auto path = build_strategy(
        p, t, {{1, PortfolioWeights(0.2, 0.3, 0.5)}, {2, PortfolioWeights(2, -1, 0)}, {3, PortfolioWeights::naive()}});
    double parts = 0.0;
    for (int id = 1; id <= 3; ++id) parts += regime_cumulative_return(path, id).total;
    EXPECT_NEAR(cumulative_return(path).total, parts, 1e-12);
}

TEST(CumulativeReturn, UncoveredDatesRejected) {
    const auto t = regimes(2, 30);
    ReturnPanel p = random_panel(t, 4);
    p.dates.push_back(t.regimes.back().end.add_days(5));
    p.returns.push_back({0, 0, 0});
    EXPECT_THROW(build_strategy(p, t, {{1, PortfolioWeights::naive()}, {2, PortfolioWeights::naive()}}), DataError);
    EXPECT_THROW(build_strategy(random_panel(t, 4), t, {{1, PortfolioWeights::naive()}}), DataError);
}

TEST(Drawdown, ZeroVolatilityIsExact) {
    EXPECT_EQ(expected_max_drawdown({0.001, 0.0, 250.0}).value, 0.0);
    EXPECT_EQ(expected_max_drawdown({0.0, 0.0, 250.0}).value, 0.0);
    const auto e = expected_max_drawdown({-0.002, 0.0, 250.0});
    EXPECT_NEAR(e.value, 0.5, 1e-15);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(Drawdown, InputValidation) {
    EXPECT_THROW(expected_max_drawdown({0.0, -1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(expected_max_drawdown({0.0, 1.0, 0.0}), std::invalid_argument);
}

TEST(Drawdown, DeterministicForSeed) {
    const DrawdownMc mc{2000, 200, 42};
    const auto a = expected_max_drawdown({0.0, 1.0, 1.0}, mc);
    const auto b = expected_max_drawdown({0.0, 1.0, 1.0}, mc);
    EXPECT_EQ(a.value, b.value);
    EXPECT_GT(a.std_error, 0.0);
}

TEST(Drawdown, MonotoneInVolatilityHorizonAndDrift) {
    // common random numbers across the grid keep the comparisons sharp
    const DrawdownMc mc{4000, 250, 9};
    const double sig[3] = {0.5, 1.0, 2.0};
    const double hor[3] = {0.5, 1.0, 2.0};
    const double mu[3] = {-0.5, 0.0, 0.5};
    double v[3][3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) v[i][j][k] = expected_max_drawdown({mu[k], sig[i], hor[j]}, mc).value;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                if (i + 1 < 3) EXPECT_LE(v[i][j][k], v[i + 1][j][k]);
                if (j + 1 < 3) EXPECT_LE(v[i][j][k], v[i][j + 1][k]);
                if (k + 1 < 3) EXPECT_GE(v[i][j][k], v[i][j][k + 1]);
            }
}

TEST(Drawdown, InputFromSeries) {
    const std::vector<double> x{0.01, -0.01, 0.02, 0.0};
    const auto in = drawdown_input_for(x);
    EXPECT_NEAR(in.mu, 0.005, 1e-15);
    EXPECT_NEAR(in.sigma, std::sqrt((0.005 * 0.005 + 0.015 * 0.015 + 0.015 * 0.015 + 0.005 * 0.005) / 3.0), 1e-15);
    EXPECT_EQ(in.horizon, 4.0);
}

namespace {

// Three regimes; each measure gets its own weights per regime.
struct Fixture {
    RegimeTable table = regimes(3, 90);
    ReturnPanel panel = random_panel(table, 77);
    ResultMatrix matrix;

    void put(int reg, RiskMeasure m, PortfolioWeights w, int case_id = 1) {
        CellResult c{reg, case_id, m, result_with(case_id, m, w), {}};
        matrix.cells.push_back(c);
    }
};

}  // namespace

TEST(BestPerRegime, DominatingMeasureWinsEverywhere) {
    Fixture f;
    // the variance weights load on the highest-drift asset each regime, the others do not
    for (int reg = 1; reg <= 3; ++reg) {
        const auto sub = slice_by_regime(f.panel, f.table.regimes[reg - 1]);
        double best = -1e9;
        int arg = 0;
        for (int a = 0; a < 3; ++a) {
            double s = 0.0;
            for (const auto& R : sub.returns) s += R[a];
            if (s > best) best = s, arg = a;
        }
        std::array<double, 3> w{0, 0, 0};
        w[arg] = 1.0;
        f.put(reg, RiskMeasure::Variance, PortfolioWeights(w[0], w[1], w[2]));
        std::array<double, 3> v{0.5, 0.5, 0.5};
        v[arg] = 0.0;
        f.put(reg, RiskMeasure::Semivariance, PortfolioWeights(v[0], v[1], v[2]));
        f.put(reg, RiskMeasure::TailRisk, PortfolioWeights(v[0], v[1], v[2]));
    }
    const std::vector<int> cases{1};
    const auto winners = best_per_regime(f.matrix, f.table, f.panel, cases, kAllMeasures);
    ASSERT_EQ(winners.size(), 3u);
    for (const auto& w : winners) {
        ASSERT_EQ(w.measures.size(), 1u);
        EXPECT_EQ(w.measures[0], RiskMeasure::Variance);
    }
}

TEST(BestPerRegime, IdenticalWeightsAreJointWinners) {
    Fixture f;
    for (int reg = 1; reg <= 3; ++reg) {
        f.put(reg, RiskMeasure::Variance, PortfolioWeights(0.6, 0.2, 0.2));
        f.put(reg, RiskMeasure::Semivariance, PortfolioWeights(0.6, 0.2, 0.2));
        f.put(reg, RiskMeasure::TailRisk, PortfolioWeights(-3.0, 2.0, 2.0));
    }
    const std::vector<int> cases{1};
    const std::vector<RiskMeasure> two{RiskMeasure::Variance, RiskMeasure::Semivariance};
    for (const auto& w : best_per_regime(f.matrix, f.table, f.panel, cases, two)) {
        EXPECT_EQ(w.measures.size(), 2u);
    }
}

TEST(BestPerRegime, MatchesExhaustiveComparison) {
    Fixture f;
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int reg = 1; reg <= 3; ++reg) {
        for (RiskMeasure m : kAllMeasures) {
            for (int c : {1, 3}) f.put(reg, m, PortfolioWeights::completing(u(rng), u(rng)), c);
        }
    }
    const std::vector<int> cases{1, 3};
    const auto winners = best_per_regime(f.matrix, f.table, f.panel, cases, kAllMeasures);
    ASSERT_EQ(winners.size(), 6u);
    for (const auto& w : winners) {
        const auto& reg = f.table.regimes[w.regime_id - 1];
        double best = -1e300;
        RiskMeasure arg = RiskMeasure::Variance;
        for (RiskMeasure m : kAllMeasures) {
            const double s = direct_annualized(f.panel, reg, f.matrix.find(w.regime_id, w.case_id, m)->result->weights);
            if (s > best) best = s, arg = m;
        }
        ASSERT_EQ(w.measures.size(), 1u);
        EXPECT_EQ(w.measures[0], arg);
        EXPECT_NEAR(w.annualized_percent, best, 1e-9);
        for (RiskMeasure m : kAllMeasures) {
            EXPECT_GE(w.annualized_percent + 1e-12,
                      direct_annualized(f.panel, reg, f.matrix.find(w.regime_id, w.case_id, m)->result->weights));
        }
    }
}

TEST(BestPerRegime, EmptyCellIsAnError) {
    Fixture f;
    f.put(1, RiskMeasure::Variance, PortfolioWeights::naive());
    const std::vector<int> cases{1};
    EXPECT_THROW(best_per_regime(f.matrix, f.table, f.panel, cases, kAllMeasures), std::invalid_argument);
}

TEST(Superoptimal, SingleMeasureWinnerReproducesItsStrategy) {
    Fixture f;
    for (int reg = 1; reg <= 3; ++reg) {
        f.put(reg, RiskMeasure::Variance, PortfolioWeights(0.5 * reg, 0.2, 0.8 - 0.5 * reg));
        f.put(reg, RiskMeasure::Semivariance, PortfolioWeights(0.1, 0.1, 0.8));
    }
    std::vector<Winner> winners;
    for (int reg = 1; reg <= 3; ++reg) winners.push_back({reg, 1, {RiskMeasure::Variance}, 0.0});
    const DrawdownMc mc{500, 100, 1};
    const auto rep = superoptimal(f.matrix, winners, 1, f.table, f.panel, mc);
    const auto ref = measure_strategy(f.matrix, 1, RiskMeasure::Variance, f.table, f.panel);
    EXPECT_EQ(rep.path.daily, ref.daily);
    EXPECT_EQ(rep.cumulative.annualized_percent, cumulative_return(ref).annualized_percent);
    EXPECT_EQ(rep.emdd.value, expected_max_drawdown(drawdown_input_for(ref.daily), mc).value);
}

TEST(Superoptimal, DominatesEverySingleMeasureStrategy) {
    Fixture f;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int reg = 1; reg <= 3; ++reg)
        for (RiskMeasure m : kAllMeasures) f.put(reg, m, PortfolioWeights::completing(u(rng), u(rng)));
    const std::vector<int> cases{1};
    const auto winners = best_per_regime(f.matrix, f.table, f.panel, cases, kAllMeasures);
    const auto rep = superoptimal(f.matrix, winners, 1, f.table, f.panel, DrawdownMc{200, 50, 1});
    for (RiskMeasure m : kAllMeasures) {
        const auto single = cumulative_return(measure_strategy(f.matrix, 1, m, f.table, f.panel));
        EXPECT_GE(rep.cumulative.annualized_percent, single.annualized_percent - 1e-9) << to_string(m);
    }
    EXPECT_GT(rep.emdd.value, 0.0);
}

}  // namespace copularisk::test
