#include "copularisk/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "copularisk/rng.hpp"

namespace copularisk {

using nlohmann::json;

std::string fixed(double value, int decimals) {
    if (!std::isfinite(value)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    std::string s(buf);
    // -0.0000 reads as a sign error in a table
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
    return s;
}

namespace {

std::string method_text(const IntegrationConfig& c) {
    if (c.method == IntegrationMethod::Grid) return "grid:" + std::to_string(c.grid_points_per_axis);
    return "mc:" + std::to_string(c.mc_samples);
}

std::string header(const std::string& title, const std::string& units, const RunInfo& info) {
    std::ostringstream h;
    h << "# " << title << "\n";
    h << "# units: " << units << "\n";
    h << "# seed: " << info.seed << "; integration: " << method_text(info.integration) << "\n";
    return h.str();
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

std::string measure_name(RiskMeasure m) { return std::string(to_string(m)); }

}  // namespace

json results_to_json(const ResultMatrix& results, const RunInfo& info) {
    json doc;
    doc["seed"] = info.seed;
    doc["integration"] = {{"method", info.integration.method == IntegrationMethod::Grid ? "grid" : "mc"},
                          {"grid_points_per_axis", info.integration.grid_points_per_axis},
                          {"mc_samples", info.integration.mc_samples},
                          {"seed", info.integration.seed}};
    doc["cases"] = info.cases;
    json ms = json::array();
    for (RiskMeasure m : info.measures) ms.push_back(measure_name(m));
    doc["measures"] = ms;
    json cells = json::array();
    for (const auto& c : results.cells) {
        json cell{{"regime", c.regime_id}, {"case", c.case_id}, {"measure", measure_name(c.measure)}};
        if (c.ok()) {
            const auto& r = *c.result;
            cell["weights"] = r.weights.values();
            cell["achieved_r"] = r.achieved_r;
            cell["objective"] = r.objective;
            cell["upr"] = optional_number(r.upr);
            cell["iterations"] = r.iterations;
            cell["converged"] = r.converged;
            cell["residuals"] = {{"budget", r.residuals.budget},
                                 {"target_return", optional_number(r.residuals.target_return)},
                                 {"box", optional_number(r.residuals.box)}};
        } else {
            cell["error"] = c.error;
        }
        cells.push_back(std::move(cell));
    }
    doc["cells"] = std::move(cells);
    return doc;
}

ResultMatrix results_from_json(const json& doc, RunInfo& info) {
    ResultMatrix out;
    try {
        info.seed = doc.at("seed").get<std::uint64_t>();
        const auto& ic = doc.at("integration");
        info.integration.method =
            ic.at("method").get<std::string>() == "grid" ? IntegrationMethod::Grid : IntegrationMethod::MonteCarlo;
        info.integration.grid_points_per_axis = ic.at("grid_points_per_axis").get<int>();
        info.integration.mc_samples = ic.at("mc_samples").get<std::size_t>();
        info.integration.seed = ic.at("seed").get<std::uint64_t>();
        info.cases = doc.at("cases").get<std::vector<int>>();
        info.measures.clear();
        for (const auto& m : doc.at("measures")) {
            const auto parsed = parse_measure(m.get<std::string>());
            if (!parsed) throw DataError("unknown measure '" + m.get<std::string>() + "'");
            info.measures.push_back(*parsed);
        }
        for (const auto& j : doc.at("cells")) {
            CellResult c;
            c.regime_id = j.at("regime").get<int>();
            c.case_id = j.at("case").get<int>();
            const auto m = parse_measure(j.at("measure").get<std::string>());
            if (!m) throw DataError("unknown measure in cell");
            c.measure = *m;
            if (j.contains("weights")) {
                OptimizationResult r;
                r.case_id = c.case_id;
                r.measure = c.measure;
                const auto w = j.at("weights").get<std::array<double, 3>>();
                r.weights = PortfolioWeights(w[0], w[1], w[2]);
                r.achieved_r = j.at("achieved_r").get<double>();
                r.objective = j.at("objective").get<double>();
                r.upr = number_or_null(j, "upr");
                r.iterations = j.at("iterations").get<int>();
                r.converged = j.at("converged").get<bool>();
                const auto& res = j.at("residuals");
                r.residuals.budget = res.at("budget").get<double>();
                r.residuals.target_return = number_or_null(res, "target_return");
                r.residuals.box = number_or_null(res, "box");
                c.result = r;
            } else {
                c.error = j.value("error", std::string("unknown failure"));
            }
            out.cells.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed results document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("malformed results document: ") + e.what());
    }
    return out;
}

std::string optimal_portfolios_csv(const ResultMatrix& results, RiskMeasure measure, const RunInfo& info) {
    std::ostringstream s;
    s << header("optimal portfolios, " + measure_name(measure) + " minimization",
                "w1,w2,w3 percent of wealth (sp500, oil, gas); r annualized percent (x252); upr percent (ratio x100); "
                "objective daily units",
                info);
    s << "regime,case,w1,w2,w3,r,upr,objective,iterations,converged,error\n";
    for (const auto& c : results.cells) {
        if (c.measure != measure) continue;
        s << c.regime_id << ',' << c.case_id << ',';
        if (c.ok()) {
            const auto& r = *c.result;
            s << fixed(100.0 * r.weights[0]) << ',' << fixed(100.0 * r.weights[1]) << ','
              << fixed(100.0 * r.weights[2]) << ',' << fixed(r.achieved_r * kTradingDays * 100.0) << ','
              << (r.upr ? fixed(100.0 * *r.upr) : "NA") << ',' << fixed(r.objective, 10) << ',' << r.iterations << ','
              << (r.converged ? "yes" : "no") << ",\n";
        } else {
            std::string why = c.error;
            std::replace(why.begin(), why.end(), ',', ';');
            std::replace(why.begin(), why.end(), '\n', ' ');
            s << "NA,NA,NA,NA,NA,NA,0,no," << why << '\n';
        }
    }
    return s.str();
}

DiagnosticsBundle compute_diagnostics(const ResultMatrix& results, const RunInfo& info, const RegimeTable& regimes,
                                      const ReturnPanel& panel, const DrawdownMc& mc) {
    DiagnosticsBundle b;
    b.info = info;
    std::map<int, ReturnPanel> subs;
    for (const auto& reg : regimes.regimes) {
        b.regime_ids.push_back(reg.id);
        RegimeNaive n{reg.id, std::nullopt, {}};
        try {
            subs.emplace(reg.id, slice_by_regime(panel, reg));
            n.stats = naive_stats(subs.at(reg.id));
        } catch (const std::exception& e) {
            n.error = e.what();
        }
        b.naive.push_back(std::move(n));
    }

    auto ok_cell = [&](int reg, int c, RiskMeasure m) -> const OptimizationResult* {
        const CellResult* cell = results.find(reg, c, m);
        return cell && cell->ok() ? &*cell->result : nullptr;
    };

    for (RiskMeasure m : info.measures) {
        for (int reg : b.regime_ids) {
            DissimilarityRow row{m, reg, {}};
            for (std::size_t i = 0; i < info.cases.size(); ++i) {
                for (std::size_t j = i + 1; j < info.cases.size(); ++j) {
                    const auto* a = ok_cell(reg, info.cases[i], m);
                    const auto* c = ok_cell(reg, info.cases[j], m);
                    std::optional<double> di;
                    if (a && c) di = dissimilarity(a->weights, c->weights);
                    row.pairs[{info.cases[i], info.cases[j]}] = di;
                }
            }
            b.dissimilarity.push_back(std::move(row));
        }
    }

    for (int c : info.cases) {
        for (RiskMeasure m : info.measures) {
            bool all = true;
            for (int reg : b.regime_ids) {
                if (!ok_cell(reg, c, m)) {
                    all = false;
                    b.warnings.push_back("case " + std::to_string(c) + ", " + measure_name(m) + ": regime " +
                                         std::to_string(reg) + " has no result");
                }
            }
            if (!all) continue;
            StrategyReturns sr;
            sr.case_id = c;
            sr.measure = m;
            sr.path = measure_strategy(results, c, m, regimes, panel);
            for (int reg : b.regime_ids) sr.per_regime[reg] = regime_cumulative_return(sr.path, reg).annualized_percent;
            sr.whole = cumulative_return(sr.path).annualized_percent;
            sr.drawdown = drawdown_input_for(sr.path.daily);
            DrawdownMc local = mc;
            local.seed = derive_seed(mc.seed, static_cast<std::uint64_t>(c) * 10 + static_cast<std::uint64_t>(m));
            sr.emdd = expected_max_drawdown(sr.drawdown, local);
            b.strategies.push_back(std::move(sr));
        }

        // winners per regime among the measures that solved there
        bool every_regime = true;
        std::vector<Winner> case_winners;
        for (const auto& reg : regimes.regimes) {
            std::vector<RiskMeasure> present;
            for (RiskMeasure m : info.measures) {
                if (ok_cell(reg.id, c, m)) present.push_back(m);
            }
            if (present.empty()) {
                every_regime = false;
                continue;
            }
            RegimeTable one;
            one.regimes.push_back(reg);
            const int cases_one[] = {c};
            for (auto& w : best_per_regime(results, one, panel, cases_one, present)) case_winners.push_back(w);
        }
        b.winners.insert(b.winners.end(), case_winners.begin(), case_winners.end());
        if (every_regime) {
            DrawdownMc local = mc;
            local.seed = derive_seed(mc.seed, 1000 + static_cast<std::uint64_t>(c));
            b.superoptimal.push_back(superoptimal(results, case_winners, c, regimes, panel, local));
        } else {
            b.warnings.push_back("case " + std::to_string(c) + ": no superoptimal portfolio, a regime has no results");
        }
    }
    return b;
}

namespace {

std::string winners_label(const std::vector<RiskMeasure>& ms) {
    std::string s;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (i) s += '+';
        s += to_string(ms[i]);
    }
    return s;
}

std::string cumulative_csv(const DiagnosticsBundle& b) {
    std::ostringstream s;
    s << header("annualized cumulative returns of optimal portfolios",
                "percent, annualized (mean daily log return x252 x100), per regime and over the whole sample",
                b.info);
    s << "case,measure";
    for (int id : b.regime_ids) s << ",regime_" << id;
    s << ",whole_sample\n";
    for (const auto& sr : b.strategies) {
        s << sr.case_id << ',' << to_string(sr.measure);
        for (int id : b.regime_ids) s << ',' << fixed(sr.per_regime.at(id));
        s << ',' << fixed(sr.whole) << '\n';
    }
    for (const auto& so : b.superoptimal) {
        s << so.case_id << ",superoptimal";
        for (int id : b.regime_ids) s << ',' << fixed(regime_cumulative_return(so.path, id).annualized_percent);
        s << ',' << fixed(so.cumulative.annualized_percent) << '\n';
    }
    return s.str();
}

std::string trajectory_csv(const DiagnosticsBundle& b, int case_id) {
    std::vector<std::pair<std::string, const StrategyPath*>> cols;
    for (const auto& sr : b.strategies) {
        if (sr.case_id == case_id) cols.emplace_back(std::string(to_string(sr.measure)), &sr.path);
    }
    for (const auto& so : b.superoptimal) {
        if (so.case_id == case_id) cols.emplace_back("superoptimal", &so.path);
    }
    std::ostringstream s;
    s << header("cumulative return trajectories, case " + std::to_string(case_id),
                "percent, running sum of daily portfolio log returns x100 (not annualized)", b.info);
    s << "date";
    for (const auto& c : cols) s << ',' << c.first;
    s << '\n';
    if (cols.empty()) return s.str();
    std::vector<CumulativeReturn> cum;
    for (const auto& c : cols) cum.push_back(cumulative_return(c.second->daily));
    const auto& dates = cols.front().second->dates;
    for (std::size_t t = 0; t < dates.size(); ++t) {
        s << dates[t].iso();
        for (const auto& c : cum) s << ',' << fixed(100.0 * c.cumulative[t], 6);
        s << '\n';
    }
    return s.str();
}

json bundle_json(const DiagnosticsBundle& b) {
    json doc;
    doc["seed"] = b.info.seed;
    doc["integration"] = method_text(b.info.integration);
    doc["units"] = {{"returns", "percent, annualized x252"},
                    {"emdd", "percent of cumulative log return"},
                    {"dissimilarity", "percent-weight scale"},
                    {"upr", "ratio"}};
    json naive = json::array();
    for (const auto& n : b.naive) {
        json j{{"regime", n.regime_id}};
        if (n.stats) {
            j["observations"] = n.stats->observations;
            j["mean"] = n.stats->annualized_mean_percent();
            j["std"] = n.stats->annualized_std_percent();
            j["skewness"] = std::isfinite(n.stats->skewness) ? json(n.stats->skewness) : json(nullptr);
            j["excess_kurtosis"] =
                std::isfinite(n.stats->excess_kurtosis) ? json(n.stats->excess_kurtosis) : json(nullptr);
            j["r"] = n.stats->annualized_target_percent();
            j["upr"] = optional_number(n.stats->upr);
        } else {
            j["error"] = n.error;
        }
        naive.push_back(j);
    }
    doc["naive"] = naive;
    json di = json::array();
    for (const auto& row : b.dissimilarity) {
        json pairs = json::object();
        for (const auto& [k, v] : row.pairs) {
            pairs[std::to_string(k.first) + "-" + std::to_string(k.second)] = optional_number(v);
        }
        di.push_back({{"measure", measure_name(row.measure)}, {"regime", row.regime_id}, {"pairs", pairs}});
    }
    doc["dissimilarity"] = di;
    json strat = json::array();
    for (const auto& sr : b.strategies) {
        json per = json::object();
        for (const auto& [id, v] : sr.per_regime) per[std::to_string(id)] = v;
        strat.push_back({{"case", sr.case_id},
                         {"measure", measure_name(sr.measure)},
                         {"cumulative_by_regime", per},
                         {"cumulative", sr.whole},
                         {"emdd", 100.0 * sr.emdd.value},
                         {"emdd_std_error", 100.0 * sr.emdd.std_error},
                         {"drift_daily", sr.drawdown.mu},
                         {"volatility_daily", sr.drawdown.sigma},
                         {"days", sr.drawdown.horizon}});
    }
    doc["strategies"] = strat;
    json win = json::array();
    for (const auto& w : b.winners) {
        json ms = json::array();
        for (RiskMeasure m : w.measures) ms.push_back(measure_name(m));
        win.push_back({{"regime", w.regime_id}, {"case", w.case_id}, {"measures", ms},
                       {"cumulative", w.annualized_percent}});
    }
    doc["best_per_regime"] = win;
    json so = json::array();
    for (const auto& s : b.superoptimal) {
        json labels = json::object();
        for (const auto& [id, l] : s.path.labels) labels[std::to_string(id)] = l;
        so.push_back({{"case", s.case_id},
                      {"cumulative", s.cumulative.annualized_percent},
                      {"emdd", 100.0 * s.emdd.value},
                      {"emdd_std_error", 100.0 * s.emdd.std_error},
                      {"measures_by_regime", labels}});
    }
    doc["superoptimal"] = so;
    doc["warnings"] = b.warnings;
    return doc;
}

}  // namespace

std::map<std::string, std::string> render_diagnostics(const DiagnosticsBundle& b) {
    std::map<std::string, std::string> files;

    {
        std::ostringstream s;
        s << header("naive (equal-weight) benchmark per regime",
                    "mean, std, r annualized percent (x252, std x sqrt(252)); upr percent (ratio x100); skewness "
                    "and excess kurtosis unitless",
                    b.info);
        s << "regime,observations,mean,std,skewness,excess_kurtosis,r,upr\n";
        for (const auto& n : b.naive) {
            s << n.regime_id << ',';
            if (!n.stats) {
                s << "0,NA,NA,NA,NA,NA,NA\n";
                continue;
            }
            const auto& st = *n.stats;
            s << st.observations << ',' << fixed(st.annualized_mean_percent()) << ','
              << fixed(st.annualized_std_percent()) << ',' << fixed(st.skewness) << ','
              << fixed(st.excess_kurtosis) << ',' << fixed(st.annualized_target_percent()) << ','
              << (st.upr ? fixed(100.0 * *st.upr) : "NA") << '\n';
        }
        files["naive_benchmark.csv"] = s.str();
    }

    {
        std::ostringstream s;
        s << header("dissimilarity between optimal portfolios of different cases",
                    "(1/3) euclidean distance of weight vectors in percent", b.info);
        s << "measure,regime";
        std::vector<std::pair<int, int>> keys;
        if (!b.dissimilarity.empty()) {
            for (const auto& [k, v] : b.dissimilarity.front().pairs) keys.push_back(k);
        }
        for (const auto& k : keys) s << ",pair_" << k.first << '_' << k.second;
        s << '\n';
        for (const auto& row : b.dissimilarity) {
            s << to_string(row.measure) << ',' << row.regime_id;
            for (const auto& k : keys) {
                const auto& v = row.pairs.at(k);
                s << ',' << (v ? fixed(*v) : "NA");
            }
            s << '\n';
        }
        files["dissimilarity.csv"] = s.str();
    }

    {
        std::ostringstream s;
        s << header("best-performing risk measure per regime and case",
                    "cumulative return annualized percent over the regime; ties listed jointly", b.info);
        s << "regime,case,measures,cumulative\n";
        for (const auto& w : b.winners) {
            s << w.regime_id << ',' << w.case_id << ',' << winners_label(w.measures) << ','
              << fixed(w.annualized_percent) << '\n';
        }
        files["best_per_regime.csv"] = s.str();
    }

    files["cumulative_returns.csv"] = cumulative_csv(b);

    {
        std::ostringstream s;
        s << header("expected maximum drawdown of optimal portfolios over the whole sample",
                    "emdd and its standard error in percent of cumulative log return; drift and volatility daily "
                    "log-return units; horizon in trading days",
                    b.info);
        s << "case,measure,drift,volatility,days,emdd,std_error\n";
        for (const auto& sr : b.strategies) {
            s << sr.case_id << ',' << to_string(sr.measure) << ',' << fixed(sr.drawdown.mu, 8) << ','
              << fixed(sr.drawdown.sigma, 8) << ',' << static_cast<long long>(sr.drawdown.horizon) << ','
              << fixed(100.0 * sr.emdd.value) << ',' << fixed(100.0 * sr.emdd.std_error) << '\n';
        }
        files["emdd.csv"] = s.str();
    }

    {
        std::ostringstream s;
        s << header("superoptimal portfolios (best measure per regime, stitched)",
                    "cumulative return annualized percent; emdd and standard error percent of cumulative log return",
                    b.info);
        s << "case,cumulative,emdd,std_error,measures_by_regime\n";
        for (const auto& so : b.superoptimal) {
            std::string labels;
            for (const auto& [id, l] : so.path.labels) {
                if (!labels.empty()) labels += ';';
                labels += std::to_string(id) + ':' + l;
            }
            s << so.case_id << ',' << fixed(so.cumulative.annualized_percent) << ',' << fixed(100.0 * so.emdd.value)
              << ',' << fixed(100.0 * so.emdd.std_error) << ',' << labels << '\n';
        }
        files["superoptimal.csv"] = s.str();
    }

    for (int c : b.info.cases) files["trajectory_case" + std::to_string(c) + ".csv"] = trajectory_csv(b, c);

    files["report.json"] = bundle_json(b).dump(2) + "\n";
    return files;
}

}  // namespace copularisk
