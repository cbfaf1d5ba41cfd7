#include "copularisk/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "copularisk/rng.hpp"

namespace copularisk {

std::optional<double> upr(std::span<const double> daily_returns, double r) {
    if (daily_returns.empty()) throw std::invalid_argument("upr needs at least one return");
    double upper = 0.0;
    double lower = 0.0;
    for (double x : daily_returns) {
        const double d = x - r;
        if (d > 0.0) upper += d;
        else lower += d * d;
    }
    if (!(lower > 0.0)) return std::nullopt;
    const double n = static_cast<double>(daily_returns.size());
    return (upper / n) / std::sqrt(lower / n);
}

double dissimilarity(std::span<const double, 3> a_percent, std::span<const double, 3> b_percent) {
    double ss = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double d = a_percent[i] - b_percent[i];
        ss += d * d;
    }
    return std::sqrt(ss) / 3.0;
}

double dissimilarity(const PortfolioWeights& a, const PortfolioWeights& b) {
    std::array<double, 3> pa{}, pb{};
    for (std::size_t i = 0; i < 3; ++i) {
        pa[i] = a[i] * 100.0;
        pb[i] = b[i] * 100.0;
    }
    return dissimilarity(pa, pb);
}

StrategyPath build_strategy(const ReturnPanel& panel, const RegimeTable& regimes,
                            const std::map<int, PortfolioWeights>& weights, const std::map<int, std::string>& labels) {
    StrategyPath path;
    path.weights = weights;
    path.labels = labels;
    path.dates.reserve(panel.size());
    path.daily.reserve(panel.size());
    path.regime_of_day.reserve(panel.size());
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const auto idx = regimes.find(panel.dates[t]);
        if (!idx) throw DataError("date " + panel.dates[t].iso() + " is not covered by any regime");
        const int id = regimes.regimes[*idx].id;
        const auto it = weights.find(id);
        if (it == weights.end()) {
            throw DataError("no weights for regime " + std::to_string(id) + " covering " + panel.dates[t].iso());
        }
        const auto& w = it->second;
        const auto& R = panel.returns[t];
        path.dates.push_back(panel.dates[t]);
        path.daily.push_back(w[0] * R[0] + w[1] * R[1] + w[2] * R[2]);
        path.regime_of_day.push_back(id);
    }
    return path;
}

CumulativeReturn cumulative_return(std::span<const double> daily) {
    if (daily.empty()) throw std::invalid_argument("cumulative return of an empty series");
    CumulativeReturn out;
    out.cumulative.reserve(daily.size());
    double acc = 0.0;
    for (double x : daily) {
        acc += x;
        out.cumulative.push_back(acc);
    }
    out.total = acc;
    out.annualized_percent = acc / static_cast<double>(daily.size()) * kTradingDays * 100.0;
    return out;
}

CumulativeReturn cumulative_return(const StrategyPath& path) { return cumulative_return(path.daily); }

CumulativeReturn regime_cumulative_return(const StrategyPath& path, int regime_id) {
    std::vector<double> sub;
    for (std::size_t t = 0; t < path.daily.size(); ++t) {
        if (path.regime_of_day[t] == regime_id) sub.push_back(path.daily[t]);
    }
    if (sub.empty()) throw std::invalid_argument("strategy has no days in regime " + std::to_string(regime_id));
    return cumulative_return(sub);
}

void DrawdownInput::validate() const {
    if (!std::isfinite(mu)) throw std::invalid_argument("drawdown drift must be finite");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("drawdown volatility must be >= 0");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("drawdown horizon must be > 0");
}

Estimate expected_max_drawdown(const DrawdownInput& input, const DrawdownMc& mc) {
    input.validate();
    if (input.sigma == 0.0) return {input.mu < 0.0 ? -input.mu * input.horizon : 0.0, 0.0};
    if (mc.paths < 2 || mc.steps < 1) throw std::invalid_argument("drawdown simulation needs >= 2 paths and >= 1 step");

    const double dt = input.horizon / static_cast<double>(mc.steps);
    const double drift = input.mu * dt;
    const double vol = input.sigma * std::sqrt(dt);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t p = 0; p < mc.paths; ++p) {
        // each path has its own stream so results do not depend on evaluation order
        std::mt19937_64 rng(derive_seed(mc.seed, p));
        std::normal_distribution<double> normal;
        double x = 0.0, peak = 0.0, mdd = 0.0;
        for (std::size_t s = 0; s < mc.steps; ++s) {
            x += drift + vol * normal(rng);
            peak = std::max(peak, x);
            mdd = std::max(mdd, peak - x);
        }
        sum += mdd;
        sum_sq += mdd * mdd;
    }
    const double n = static_cast<double>(mc.paths);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

DrawdownInput drawdown_input_for(std::span<const double> daily) {
    if (daily.size() < 2) throw std::invalid_argument("drawdown input needs at least two daily returns");
    const double n = static_cast<double>(daily.size());
    double mean = 0.0;
    for (double x : daily) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : daily) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)), n};
}

StrategyPath measure_strategy(const ResultMatrix& results, int case_id, RiskMeasure measure,
                              const RegimeTable& regimes, const ReturnPanel& panel) {
    std::map<int, PortfolioWeights> weights;
    std::map<int, std::string> labels;
    for (const auto& reg : regimes.regimes) {
        const CellResult* cell = results.find(reg.id, case_id, measure);
        if (!cell || !cell->ok()) {
            std::ostringstream msg;
            msg << "no result for regime " << reg.id << ", case " << case_id << ", " << to_string(measure);
            throw std::invalid_argument(msg.str());
        }
        weights.emplace(reg.id, cell->result->weights);
        labels.emplace(reg.id, std::string(to_string(measure)));
    }
    return build_strategy(panel, regimes, weights, labels);
}

std::vector<Winner> best_per_regime(const ResultMatrix& results, const RegimeTable& regimes, const ReturnPanel& panel,
                                    std::span<const int> cases, std::span<const RiskMeasure> measures,
                                    double tie_tolerance) {
    if (measures.empty()) throw std::invalid_argument("best_per_regime needs at least one measure");
    std::vector<Winner> out;
    for (int c : cases) {
        for (const auto& reg : regimes.regimes) {
            const ReturnPanel sub = slice_by_regime(panel, reg);
            std::vector<std::pair<RiskMeasure, double>> scores;
            for (RiskMeasure m : measures) {
                const CellResult* cell = results.find(reg.id, c, m);
                if (!cell || !cell->ok()) {
                    std::ostringstream msg;
                    msg << "empty cell: regime " << reg.id << ", case " << c << ", " << to_string(m);
                    throw std::invalid_argument(msg.str());
                }
                const auto& w = cell->result->weights;
                std::vector<double> daily;
                daily.reserve(sub.size());
                for (const auto& R : sub.returns) daily.push_back(w[0] * R[0] + w[1] * R[1] + w[2] * R[2]);
                scores.emplace_back(m, cumulative_return(daily).annualized_percent);
            }
            double best = scores.front().second;
            for (const auto& [m, s] : scores) best = std::max(best, s);
            Winner win{reg.id, c, {}, best};
            for (const auto& [m, s] : scores) {
                if (s >= best - tie_tolerance) win.measures.push_back(m);
            }
            out.push_back(std::move(win));
        }
    }
    return out;
}

SuperoptimalReport superoptimal(const ResultMatrix& results, std::span<const Winner> winners, int case_id,
                                const RegimeTable& regimes, const ReturnPanel& panel, const DrawdownMc& mc) {
    std::map<int, PortfolioWeights> weights;
    std::map<int, std::string> labels;
    for (const auto& reg : regimes.regimes) {
        const auto it = std::find_if(winners.begin(), winners.end(),
                                     [&](const Winner& w) { return w.regime_id == reg.id && w.case_id == case_id; });
        if (it == winners.end() || it->measures.empty()) {
            throw std::invalid_argument("no winner for regime " + std::to_string(reg.id) + ", case " +
                                        std::to_string(case_id));
        }
        const CellResult* cell = results.find(reg.id, case_id, it->measures.front());
        if (!cell || !cell->ok()) throw std::invalid_argument("winning cell has no result");
        weights.emplace(reg.id, cell->result->weights);
        std::string label;
        for (std::size_t i = 0; i < it->measures.size(); ++i) {
            if (i) label += "+";
            label += to_string(it->measures[i]);
        }
        labels.emplace(reg.id, label);
    }
    SuperoptimalReport rep;
    rep.case_id = case_id;
    rep.path = build_strategy(panel, regimes, weights, labels);
    rep.cumulative = cumulative_return(rep.path);
    rep.emdd = expected_max_drawdown(drawdown_input_for(rep.path.daily), mc);
    return rep;
}

}  // namespace copularisk
