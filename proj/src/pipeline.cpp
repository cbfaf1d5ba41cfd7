#include "copularisk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "copularisk/copula.hpp"
#include "copularisk/empirical.hpp"
#include "copularisk/io.hpp"
#include "copularisk/report.hpp"
#include "copularisk/rng.hpp"

namespace copularisk {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
    if (cases.empty()) throw UsageError("no cases requested");
    if (measures.empty()) throw UsageError("no risk measures requested");
    for (int c : cases) {
        if (c < 1 || c > 4) throw UsageError("case " + std::to_string(c) + " is not one of 1,2,3,4");
    }
    if (family_from_config && family) throw UsageError("--family and --family-from-config are exclusive");
    try {
        integration.validate();
        DrawdownInput{0.0, 1.0, 1.0}.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (drawdown.paths < 2 || drawdown.steps < 1) throw UsageError("drawdown simulation needs >= 2 paths");
    if (out.empty()) throw UsageError("no output directory");
}

namespace {

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == ',') {
            parts.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur += ch;
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace

std::vector<int> parse_cases(std::string_view text) {
    std::vector<int> out;
    for (const auto& p : split_list(text)) {
        if (p.size() != 1 || p[0] < '1' || p[0] > '4') throw UsageError("bad case '" + p + "', expected 1..4");
        const int c = p[0] - '0';
        if (std::find(out.begin(), out.end(), c) != out.end()) throw UsageError("case " + p + " listed twice");
        out.push_back(c);
    }
    return out;
}

std::vector<RiskMeasure> parse_measures(std::string_view text) {
    std::vector<RiskMeasure> out;
    for (const auto& p : split_list(text)) {
        const auto m = parse_measure(p);
        if (!m) throw UsageError("bad measure '" + p + "', expected variance, semivariance or tail_risk");
        if (std::find(out.begin(), out.end(), *m) != out.end()) throw UsageError("measure " + p + " listed twice");
        out.push_back(*m);
    }
    return out;
}

ReturnPanel trim_to_regimes(const ReturnPanel& panel, const RegimeTable& regimes) {
    if (regimes.regimes.empty()) throw DataError("regime table is empty");
    const Date first = regimes.regimes.front().start;
    const Date last = regimes.regimes.back().end;
    ReturnPanel out;
    for (std::size_t t = 0; t < panel.size(); ++t) {
        const Date d = panel.dates[t];
        if (d < first || d > last) continue;
        if (!regimes.find(d)) throw DataError("date " + d.iso() + " falls between regimes");
        out.dates.push_back(d);
        out.returns.push_back(panel.returns[t]);
    }
    if (out.empty()) throw DataError("no panel dates inside the regime windows");
    return out;
}

namespace {

fs::path artifact(const PipelineConfig& cfg, std::string_view name) { return cfg.out / fs::path(std::string(name)); }

void prepare_out(const PipelineConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec || !fs::is_directory(cfg.out)) {
        throw UsageError("output directory " + cfg.out.string() + " cannot be created");
    }
}

RegimeTable load_config(const fs::path& path) {
    if (path.empty()) throw UsageError("--config is required");
    try {
        auto t = load_regime_table(path);
        validate_regime_table(t);
        return t;
    } catch (const IoError& e) {
        throw UsageError(e.what());
    } catch (const DataError& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
}

/// The fitted table from an earlier `fit`, else the user's config.
RegimeTable load_fitted_or_config(const PipelineConfig& cfg, std::ostream& out) {
    const fs::path fitted = artifact(cfg, kFittedConfigFile);
    if (fs::exists(fitted)) return load_config(fitted);
    out << "note: " << fitted.string() << " not found, using " << cfg.regime_config.string() << "\n";
    return load_config(cfg.regime_config);
}

ReturnPanel load_panel(const PipelineConfig& cfg) {
    const fs::path p = artifact(cfg, kPanelFile);
    if (!fs::exists(p)) throw DataError("missing cached panel " + p.string() + " (run ingest first)");
    return load_panel_csv(p);
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << "\n";
        return kExitTotal;
    }
}

struct Moments {
    double mean = 0, sd = 0, skew = 0, kurt = 0, min = 0, max = 0;
};

Moments moments(const std::vector<double>& x) {
    Moments m;
    const double n = static_cast<double>(x.size());
    for (double v : x) m.mean += v;
    m.mean /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : x) {
        const double d = v - m.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m.sd = x.size() > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.skew = m2 > 0 ? m3 / std::pow(m2, 1.5) : NAN;
    m.kurt = m2 > 0 ? m4 / (m2 * m2) - 3.0 : NAN;
    m.min = *std::min_element(x.begin(), x.end());
    m.max = *std::max_element(x.begin(), x.end());
    return m;
}

}  // namespace

int cmd_ingest(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        if (cfg.sp500.empty() || cfg.oil.empty() || cfg.gas.empty()) {
            throw UsageError("ingest needs --sp500, --oil and --gas");
        }
        prepare_out(cfg);
        // loaded in order so the first missing file is the one reported
        const auto sp500 = load_price_csv(cfg.sp500, "sp500");
        const auto oil = load_price_csv(cfg.oil, "oil");
        const auto gas = load_price_csv(cfg.gas, "gas");
        const auto panel = log_returns(sp500, oil, gas);
        if (panel.empty()) throw DataError("the three series share fewer than two dates");
        write_panel_csv(artifact(cfg, kPanelFile), panel);

        out << "aligned return rows: " << panel.size() << "\n";
        out << "span: " << panel.dates.front().iso() << " .. " << panel.dates.back().iso() << "\n";
        out << "series   mean%/yr    std%/yr   skewness   ex.kurt   min%/day   max%/day\n";
        for (std::size_t a = 0; a < kAssetCount; ++a) {
            const auto m = moments(panel.column(a));
            out << std::left << std::setw(6) << kAssetNames[a] << std::right << std::setw(11)
                << fixed(m.mean * 252 * 100, 3) << std::setw(11) << fixed(m.sd * std::sqrt(252.0) * 100, 3)
                << std::setw(11) << fixed(m.skew, 3) << std::setw(10) << fixed(m.kurt, 3) << std::setw(11)
                << fixed(m.min * 100, 3) << std::setw(11) << fixed(m.max * 100, 3) << "\n";
        }
        out << "panel written to " << artifact(cfg, kPanelFile).string() << "\n";
        return kExitSuccess;
    });
}

int cmd_fit(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        prepare_out(cfg);
        RegimeTable table = load_config(cfg.regime_config);
        const ReturnPanel panel = load_panel(cfg);
        int fitted = 0, failed = 0;
        for (auto& reg : table.regimes) {
            out << "regime " << reg.id << " [" << reg.start.iso() << " .. " << reg.end.iso() << "]";
            ReturnPanel sub;
            try {
                sub = slice_by_regime(panel, reg);
            } catch (const DataError&) {
            }
            if (sub.size() < 30) {
                out << "\n";
                err << "warning: regime " << reg.id << " has " << sub.size()
                    << " observations (< 30), skipped\n";
                reg.fixed_params.reset();
                continue;
            }
            out << " n=" << sub.size() << "\n";
            std::array<std::vector<double>, 3> u;
            for (std::size_t a = 0; a < 3; ++a) u[a] = pit(sub.column(a));
            std::vector<UnitPoint> obs(sub.size());
            for (std::size_t t = 0; t < sub.size(); ++t) obs[t] = {u[0][t], u[1][t], u[2][t]};
            try {
                if (cfg.family_from_config || cfg.family) {
                    const CopulaFamily fam = cfg.family ? *cfg.family : reg.family;
                    const auto model = fit_ml(obs, fam);
                    reg.family = fam;
                    reg.fixed_params = model;
                    out << "  forced " << to_string(fam) << "  loglik " << fixed(log_likelihood(model, obs), 3)
                        << "  params " << params_to_json(model).dump() << "\n";
                } else {
                    const auto sel = select(obs, kAllFamilies);
                    out << "  family       loglik        aic\n";
                    for (const auto& s : sel.scores) {
                        out << "  " << std::left << std::setw(10) << to_string(s.family) << std::right;
                        if (s.model) {
                            out << std::setw(10) << fixed(s.log_likelihood, 3) << std::setw(11) << fixed(s.aic, 3)
                                << (s.family == sel.best.family() ? "  *" : "") << "\n";
                        } else {
                            out << "  failed: " << s.error << "\n";
                        }
                    }
                    reg.family = sel.best.family();
                    reg.fixed_params = sel.best;
                    out << "  selected " << to_string(reg.family) << "  params "
                        << params_to_json(sel.best).dump() << "\n";
                }
                ++fitted;
            } catch (const std::exception& e) {
                ++failed;
                reg.fixed_params.reset();
                err << "warning: regime " << reg.id << " fit failed: " << e.what() << "\n";
            }
        }
        write_file_atomic(artifact(cfg, kFittedConfigFile), regime_table_to_json(table));
        out << "fitted config written to " << artifact(cfg, kFittedConfigFile).string() << "\n";
        if (fitted == 0) return failed > 0 ? int(kExitTotal) : int(kExitData);
        return failed > 0 ? int(kExitPartial) : int(kExitSuccess);
    });
}

int cmd_optimize(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        prepare_out(cfg);
        const RegimeTable table = load_fitted_or_config(cfg, out);
        const ReturnPanel panel = load_panel(cfg);
        IntegrationConfig ic = cfg.integration;
        ic.seed = cfg.seed;
        SolverOptions opts;
        opts.seed = cfg.seed;
        const auto results = solve_all(table, panel, cfg.cases, cfg.measures, ic, opts);

        const RunInfo info{cfg.seed, ic, cfg.cases, cfg.measures};
        std::map<std::string, std::string> files;
        files[std::string(kResultsFile)] = results_to_json(results, info).dump(2) + "\n";
        for (RiskMeasure m : cfg.measures) {
            files["optimal_" + std::string(to_string(m)) + ".csv"] = optimal_portfolios_csv(results, m, info);
        }
        for (const auto& [name, text] : files) write_file_atomic(cfg.out / name, text);

        double budget = 0, target = 0, box = 0;
        std::size_t ok = 0;
        for (const auto& c : results.cells) {
            if (!c.ok()) {
                err << "cell regime " << c.regime_id << " case " << c.case_id << " " << to_string(c.measure)
                    << " failed: " << c.error << "\n";
                continue;
            }
            ++ok;
            const auto& r = c.result->residuals;
            budget = std::max(budget, std::abs(r.budget));
            if (r.target_return) target = std::max(target, std::abs(*r.target_return));
            if (r.box) box = std::max(box, *r.box);
            if (!c.result->converged) {
                err << "cell regime " << c.regime_id << " case " << c.case_id << " " << to_string(c.measure)
                    << " did not converge\n";
            }
        }
        out << "cells: " << results.cells.size() << "  solved: " << ok << "  failed: " << results.failed()
            << "  not converged: " << results.not_converged() << "\n";
        std::ostringstream res;
        res << std::scientific << std::setprecision(2) << "max residuals: budget " << budget << "  target return "
            << target << "  box " << box << "\n";
        out << res.str();
        if (ok == 0) return int(kExitTotal);
        return results.failed() == 0 && results.not_converged() == 0 ? int(kExitSuccess) : int(kExitPartial);
    });
}

int cmd_diagnose(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        prepare_out(cfg);
        const fs::path rp = artifact(cfg, kResultsFile);
        if (!fs::exists(rp)) throw DataError("missing result matrix " + rp.string() + " (run optimize first)");
        RunInfo info;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_text_file(rp));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(rp.string() + ": " + e.what());
        }
        const ResultMatrix results = results_from_json(doc, info);
        const RegimeTable table = load_fitted_or_config(cfg, out);
        const ReturnPanel panel = trim_to_regimes(load_panel(cfg), table);

        DrawdownMc mc = cfg.drawdown;
        mc.seed = derive_seed(info.seed, 0xDD);
        const auto bundle = compute_diagnostics(results, info, table, panel, mc);
        const auto files = render_diagnostics(bundle);
        for (const auto& [name, text] : files) write_file_atomic(cfg.out / name, text);

        for (const auto& w : bundle.warnings) err << "warning: " << w << "\n";
        for (const auto& so : bundle.superoptimal) {
            out << "case " << so.case_id << " superoptimal: cumulative " << fixed(so.cumulative.annualized_percent)
                << " %/yr, emdd " << fixed(100.0 * so.emdd.value) << " % (se " << fixed(100.0 * so.emdd.std_error)
                << ")\n";
        }
        out << files.size() << " report files written to " << cfg.out.string() << "\n";
        return bundle.warnings.empty() ? int(kExitSuccess) : int(kExitPartial);
    });
}

int cmd_pipeline(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    int worst = kExitSuccess;
    using Step = int (*)(const PipelineConfig&, std::ostream&, std::ostream&);
    const std::pair<const char*, Step> steps[] = {
        {"ingest", cmd_ingest}, {"fit", cmd_fit}, {"optimize", cmd_optimize}, {"diagnose", cmd_diagnose}};
    for (const auto& [name, step] : steps) {
        out << "== " << name << "\n";
        const int code = step(cfg, out, err);
        if (code == kExitPartial) {
            worst = kExitPartial;
            continue;
        }
        if (code != kExitSuccess) return code;
    }
    return worst;
}

}  // namespace copularisk
