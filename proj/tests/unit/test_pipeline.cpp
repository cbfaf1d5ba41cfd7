#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "copularisk/io.hpp"
#include "copularisk/pipeline.hpp"
#include "copularisk/report.hpp"
#include "copularisk/synthetic.hpp"

namespace copularisk::test {

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("copularisk_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

// Rows of a report CSV without its comment header.
std::vector<std::vector<std::string>> rows(const std::string& text, std::vector<std::string>* comments = nullptr) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') {
            if (comments) comments->push_back(line);
            continue;
        }
        std::vector<std::string> fields;
        std::string f;
        std::istringstream ls(line);
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        out.push_back(fields);
    }
    return out;
}

// Writes a synthetic market and returns a config pointing at it.
PipelineConfig synthetic_config(const fs::path& dir, std::span<const SyntheticRegime> blocks, std::uint64_t seed) {
    const auto m = make_synthetic_market(blocks, Date(2010, 1, 4), seed);
    write_file_atomic(dir / "sp500.csv", price_csv(m.sp500));
    write_file_atomic(dir / "oil.csv", price_csv(m.oil));
    write_file_atomic(dir / "gas.csv", price_csv(m.gas));
    write_file_atomic(dir / "regimes.json", regime_table_to_json(m.regimes));
    PipelineConfig cfg;
    cfg.sp500 = dir / "sp500.csv";
    cfg.oil = dir / "oil.csv";
    cfg.gas = dir / "gas.csv";
    cfg.regime_config = dir / "regimes.json";
    cfg.out = dir / "out";
    cfg.integration.mc_samples = 10000;
    cfg.drawdown = DrawdownMc{2000, 200, 1};
    return cfg;
}

std::vector<SyntheticRegime> small_blocks() {
    return {
        {CopulaModel::clayton(2.0), {4e-4, 2e-4, -1e-4}, {0.010, 0.020, 0.030}, 250},
        {CopulaModel::gauss(0.5, 0.3, 0.4), {-2e-4, 5e-4, 3e-4}, {0.018, 0.025, 0.035}, 250},
        {CopulaModel::frank(6.0), {1e-4, 4e-4, -2e-4}, {0.012, 0.030, 0.040}, 250},
    };
}

}  // namespace

TEST(CliParsing, CasesAndMeasures) {
    EXPECT_EQ(parse_cases("1,2,3,4"), (std::vector<int>{1, 2, 3, 4}));
    EXPECT_EQ(parse_cases("3, 1"), (std::vector<int>{3, 1}));
    EXPECT_THROW(parse_cases("0"), UsageError);
    EXPECT_THROW(parse_cases("1,5"), UsageError);
    EXPECT_THROW(parse_cases("1,1"), UsageError);
    EXPECT_THROW(parse_cases(""), UsageError);
    EXPECT_EQ(parse_measures("tail_risk,variance"),
              (std::vector<RiskMeasure>{RiskMeasure::TailRisk, RiskMeasure::Variance}));
    EXPECT_THROW(parse_measures("variance,cvar"), UsageError);
}

TEST(CliParsing, ConfigValidation) {
    PipelineConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.cases.clear();
    EXPECT_THROW(cfg.validate(), UsageError);
    cfg = PipelineConfig{};
    cfg.integration.mc_samples = 10;
    EXPECT_THROW(cfg.validate(), UsageError);
    cfg = PipelineConfig{};
    cfg.family_from_config = true;
    cfg.family = CopulaFamily::Frank;
    EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Report, FixedRendering) {
    EXPECT_EQ(fixed(-0.00001), "0.0000");
    EXPECT_EQ(fixed(-1.23456), "-1.2346");
    EXPECT_EQ(fixed(std::nan("")), "NA");
    EXPECT_EQ(fixed(887.24969, 4), "887.2497");
}

TEST(Report, ResultsJsonRoundTrip) {
    ResultMatrix m;
    OptimizationResult r;
    r.case_id = 2;
    r.measure = RiskMeasure::TailRisk;
    r.weights = PortfolioWeights(0.1234567890123, 0.3, 1.0 - 0.1234567890123 - 0.3);
    r.achieved_r = 1.0 / 3.0e4;
    r.objective = 0.0512;
    r.upr = std::nullopt;
    r.iterations = 17;
    r.converged = true;
    r.residuals = {1e-17, -2e-18, 0.0};
    m.cells.push_back({4, 2, RiskMeasure::TailRisk, r, {}});
    m.cells.push_back({4, 1, RiskMeasure::Variance, std::nullopt, "infeasible: equal means"});
    const RunInfo info{99, IntegrationConfig{}, {1, 2}, {RiskMeasure::Variance, RiskMeasure::TailRisk}};

    RunInfo back_info;
    const auto back = results_from_json(nlohmann::json::parse(results_to_json(m, info).dump(2)), back_info);
    EXPECT_EQ(back_info.seed, 99u);
    EXPECT_EQ(back_info.cases, info.cases);
    EXPECT_EQ(back_info.measures, info.measures);
    ASSERT_EQ(back.cells.size(), 2u);
    ASSERT_TRUE(back.cells[0].ok());
    const auto& b = *back.cells[0].result;
    EXPECT_EQ(b.weights, r.weights);
    EXPECT_EQ(b.achieved_r, r.achieved_r);
    EXPECT_FALSE(b.upr.has_value());
    EXPECT_EQ(*b.residuals.target_return, -2e-18);
    EXPECT_FALSE(back.cells[1].ok());
    EXPECT_EQ(back.cells[1].error, "infeasible: equal means");
    EXPECT_THROW(results_from_json(nlohmann::json::parse(R"({"seed": 1})"), back_info), DataError);
}

TEST(Report, OptimalPortfolioTableShape) {
    ResultMatrix m;
    OptimizationResult r;
    r.case_id = 1;
    r.weights = PortfolioWeights(0.490351, 0.559687, -0.050038);
    r.achieved_r = 0.0004;
    r.upr = 0.61234;
    r.converged = true;
    m.cells.push_back({1, 1, RiskMeasure::Variance, r, {}});
    m.cells.push_back({1, 2, RiskMeasure::Variance, std::nullopt, "no feasible point, really"});
    m.cells.push_back({1, 1, RiskMeasure::Semivariance, r, {}});
    const RunInfo info{7, IntegrationConfig{}, {1, 2}, {RiskMeasure::Variance}};
    std::vector<std::string> comments;
    const auto t = rows(optimal_portfolios_csv(m, RiskMeasure::Variance, info), &comments);
    ASSERT_EQ(comments.size(), 3u);
    EXPECT_NE(comments[1].find("percent"), std::string::npos);
    EXPECT_NE(comments[1].find("annualized"), std::string::npos);
    EXPECT_NE(comments[2].find("seed: 7"), std::string::npos);
    ASSERT_EQ(t.size(), 3u);
    for (const auto& row : t) EXPECT_EQ(row.size(), t[0].size());
    EXPECT_EQ(t[1][2], "49.0351");
    EXPECT_EQ(t[1][3], "55.9687");
    EXPECT_EQ(t[1][4], "-5.0038");
    EXPECT_EQ(t[1][5], "10.0800");
    EXPECT_EQ(t[1][6], "61.2340");
    EXPECT_EQ(t[2][2], "NA");
    EXPECT_EQ(t[2].back(), "no feasible point; really");
}

TEST(Pipeline, TrimToRegimes) {
    RegimeTable t;
    RegimeSpec a, b;
    a.id = 1, a.start = Date(2010, 1, 4), a.end = Date(2010, 1, 8);
    b.id = 2, b.start = Date(2010, 1, 11), b.end = Date(2010, 1, 15);
    t.regimes = {a, b};
    ReturnPanel p;
    for (int d = 1; d <= 20; ++d) {
        if (d == 9 || d == 10) continue;  // weekend between the regimes
        p.dates.push_back(Date(2010, 1, static_cast<unsigned>(d)));
        p.returns.push_back({0, 0, 0});
    }
    const auto trimmed = trim_to_regimes(p, t);
    EXPECT_EQ(trimmed.dates.front(), Date(2010, 1, 4));
    EXPECT_EQ(trimmed.dates.back(), Date(2010, 1, 15));
    EXPECT_EQ(trimmed.size(), 10u);
    p.dates.insert(p.dates.begin() + 8, Date(2010, 1, 9));
    p.returns.push_back({0, 0, 0});
    EXPECT_THROW(trim_to_regimes(p, t), DataError);
}

TEST(Pipeline, IngestReportsAlignedCount) {
    const auto dir = scratch("ingest");
    auto cfg = synthetic_config(dir, small_blocks(), 5);
    std::ostringstream out, err;
    EXPECT_EQ(cmd_ingest(cfg, out, err), kExitSuccess) << err.str();
    EXPECT_NE(out.str().find("aligned return rows: 750"), std::string::npos) << out.str();
    EXPECT_TRUE(fs::exists(cfg.out / "panel.csv"));
    EXPECT_EQ(load_panel_csv(cfg.out / "panel.csv").size(), 750u);
}

TEST(Pipeline, IngestMissingFileNamesPath) {
    const auto dir = scratch("ingest_missing");
    auto cfg = synthetic_config(dir, small_blocks(), 5);
    cfg.oil = dir / "no_such_oil.csv";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_ingest(cfg, out, err), kExitData);
    EXPECT_NE(err.str().find("no_such_oil.csv"), std::string::npos) << err.str();
}

TEST(Pipeline, FitFromConfigKeepsFamiliesAndSkipsShortRegimes) {
    const auto dir = scratch("fit_forced");
    std::vector<SyntheticRegime> blocks = small_blocks();
    blocks.push_back({CopulaModel::gumbel(1.5), {0, 0, 0}, {0.01, 0.01, 0.01}, 20});
    auto cfg = synthetic_config(dir, blocks, 11);
    // config families deliberately differ from the generating ones
    auto table = load_regime_table(cfg.regime_config);
    table.regimes[0].family = CopulaFamily::Gumbel;
    table.regimes[1].family = CopulaFamily::StudentT;
    table.regimes[2].family = CopulaFamily::Clayton;
    write_file_atomic(cfg.regime_config, regime_table_to_json(table));
    cfg.family_from_config = true;

    std::ostringstream out, err;
    ASSERT_EQ(cmd_ingest(cfg, out, err), kExitSuccess);
    EXPECT_EQ(cmd_fit(cfg, out, err), kExitSuccess) << err.str();
    EXPECT_NE(err.str().find("regime 4 has 20 observations"), std::string::npos) << err.str();
    const auto fitted = load_regime_table(cfg.out / "regimes_fitted.json");
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(fitted.regimes[i].family, table.regimes[i].family);
        ASSERT_TRUE(fitted.regimes[i].fixed_params.has_value());
        EXPECT_EQ(fitted.regimes[i].fixed_params->family(), table.regimes[i].family);
    }
    EXPECT_FALSE(fitted.regimes[3].fixed_params.has_value());

    // the skipped regime cannot be solved: partial failure, others populated
    cfg.cases = {1, 3};
    cfg.measures = {RiskMeasure::Variance};
    EXPECT_EQ(cmd_optimize(cfg, out, err), kExitPartial);
    RunInfo info;
    const auto res = results_from_json(nlohmann::json::parse(slurp(cfg.out / "results.json")), info);
    EXPECT_EQ(res.cells.size(), 8u);
    EXPECT_EQ(res.failed(), 2u);
}

TEST(Pipeline, SelectionRecoversGeneratingFamilies) {
    const auto dir = scratch("fit_select");
    const CopulaModel models[] = {CopulaModel::clayton(2.5),
                                  CopulaModel::gumbel(2.0),
                                  CopulaModel::frank(7.0),
                                  CopulaModel::gauss(0.6, 0.2, 0.4),
                                  CopulaModel::clayton(1.5),
                                  CopulaModel::gumbel(1.6),
                                  CopulaModel::frank(5.0),
                                  CopulaModel::gauss(-0.3, 0.5, 0.2),
                                  CopulaModel::student_t(CopulaModel::gauss(0.5, 0.5, 0.5).corr(), 4.0),
                                  CopulaModel::clayton(3.0)};
    std::vector<SyntheticRegime> blocks;
    for (const auto& m : models) blocks.push_back({m, {0, 0, 0}, {0.01, 0.02, 0.03}, 400});
    auto cfg = synthetic_config(dir, blocks, 3);
    std::ostringstream out, err;
    ASSERT_EQ(cmd_ingest(cfg, out, err), kExitSuccess);
    ASSERT_EQ(cmd_fit(cfg, out, err), kExitSuccess) << err.str();
    const auto fitted = load_regime_table(cfg.out / "regimes_fitted.json");
    int hits = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) hits += fitted.regimes[i].family == models[i].family();
    EXPECT_GE(hits, 8) << out.str();
}

TEST(Pipeline, TenRegimeMatrixCardinality) {
    const auto dir = scratch("ten_regimes");
    std::vector<SyntheticRegime> blocks;
    for (int i = 0; i < 10; ++i) {
        blocks.push_back({CopulaModel::gauss(0.3, 0.2, 0.1),
                          {1e-4 * (i % 3), -1e-4 * (i % 2), 2e-4},
                          {0.01, 0.015 + 0.001 * i, 0.02},
                          60});
    }
    auto cfg = synthetic_config(dir, blocks, 9);
    cfg.family = CopulaFamily::Gauss;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_ingest(cfg, out, err), kExitSuccess);
    ASSERT_EQ(cmd_fit(cfg, out, err), kExitSuccess) << err.str();
    const int code = cmd_optimize(cfg, out, err);
    EXPECT_TRUE(code == kExitSuccess || code == kExitPartial) << err.str();
    RunInfo info;
    const auto res = results_from_json(nlohmann::json::parse(slurp(cfg.out / "results.json")), info);
    EXPECT_EQ(res.cells.size(), 120u);
    EXPECT_EQ(rows(slurp(cfg.out / "optimal_variance.csv")).size(), 41u);  // header + 10 x 4
}

// Shared run of the small fixture through every step.
class PipelineRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fs::path(scratch("run"));
        cfg_ = new PipelineConfig(synthetic_config(*dir_, small_blocks(), 21));
        std::ostringstream out, err;
        code_ = cmd_pipeline(*cfg_, out, err);
        log_ = new std::string(out.str() + err.str());
    }
    static void TearDownTestSuite() {
        delete dir_;
        delete cfg_;
        delete log_;
    }
    static inline fs::path* dir_ = nullptr;
    static inline PipelineConfig* cfg_ = nullptr;
    static inline std::string* log_ = nullptr;
    static inline int code_ = -1;
};

TEST_F(PipelineRun, Succeeds) { EXPECT_EQ(code_, kExitSuccess) << *log_; }

TEST_F(PipelineRun, AllReportFilesPresentAndWellFormed) {
    const char* names[] = {"panel.csv",           "regimes_fitted.json",   "results.json",
                           "optimal_variance.csv", "optimal_semivariance.csv", "optimal_tail_risk.csv",
                           "naive_benchmark.csv", "dissimilarity.csv",     "best_per_regime.csv",
                           "cumulative_returns.csv", "emdd.csv",           "superoptimal.csv",
                           "report.json",         "trajectory_case1.csv",  "trajectory_case4.csv"};
    for (const char* n : names) EXPECT_TRUE(fs::exists(cfg_->out / n)) << n;

    for (const auto& entry : fs::directory_iterator(cfg_->out)) {
        const auto name = entry.path().filename().string();
        EXPECT_EQ(name.find(".tmp"), std::string::npos) << "leftover temporary " << name;
        if (entry.path().extension() != ".csv" || name == "panel.csv") continue;
        std::vector<std::string> comments;
        const auto t = rows(slurp(entry.path()), &comments);
        ASSERT_GE(comments.size(), 3u) << name;
        EXPECT_EQ(comments[1].rfind("# units:", 0), 0u) << name;
        EXPECT_NE(comments[2].find("seed: " + std::to_string(cfg_->seed)), std::string::npos) << name;
        ASSERT_GE(t.size(), 2u) << name;
        for (const auto& row : t) EXPECT_EQ(row.size(), t[0].size()) << name;
    }
    const auto report = nlohmann::json::parse(slurp(cfg_->out / "report.json"));
    for (const char* key : {"naive", "dissimilarity", "strategies", "best_per_regime", "superoptimal"}) {
        EXPECT_TRUE(report.contains(key)) << key;
    }
    EXPECT_EQ(report["superoptimal"].size(), 4u);
    EXPECT_EQ(rows(slurp(cfg_->out / "trajectory_case1.csv")).size(), 751u);
}

TEST_F(PipelineRun, SuperoptimalDominatesSingleMeasures) {
    const auto t = rows(slurp(cfg_->out / "cumulative_returns.csv"));
    std::map<int, double> super, best_single;
    for (std::size_t i = 1; i < t.size(); ++i) {
        const int c = std::stoi(t[i][0]);
        const double whole = std::stod(t[i].back());
        if (t[i][1] == "superoptimal") super[c] = whole;
        else best_single[c] = std::max(best_single.count(c) ? best_single[c] : -1e300, whole);
    }
    ASSERT_EQ(super.size(), 4u);
    for (const auto& [c, v] : super) EXPECT_GE(v, best_single[c] - 1e-4) << "case " << c;  // 4-decimal rounding
}

TEST_F(PipelineRun, DiagnoseOnIdenticalWeightsGivesZeroDissimilarity) {
    const auto dir = scratch("identical");
    PipelineConfig cfg = *cfg_;
    cfg.out = dir;
    fs::copy_file(cfg_->out / "panel.csv", dir / "panel.csv");
    fs::copy_file(cfg_->out / "regimes_fitted.json", dir / "regimes_fitted.json");
    RunInfo info;
    auto res = results_from_json(nlohmann::json::parse(slurp(cfg_->out / "results.json")), info);
    for (auto& c : res.cells) c.result->weights = PortfolioWeights(0.2, 0.5, 0.3);
    write_file_atomic(dir / "results.json", results_to_json(res, info).dump(2));
    std::ostringstream out, err;
    ASSERT_EQ(cmd_diagnose(cfg, out, err), kExitSuccess) << err.str();
    const auto t = rows(slurp(dir / "dissimilarity.csv"));
    ASSERT_EQ(t.size(), 1u + 3u * 3u);
    for (std::size_t i = 1; i < t.size(); ++i) {
        for (std::size_t j = 2; j < t[i].size(); ++j) EXPECT_EQ(t[i][j], "0.0000");
    }
    // every measure ties everywhere
    for (const auto& row : rows(slurp(dir / "best_per_regime.csv"))) {
        if (row[0] != "regime") EXPECT_EQ(row[2], "variance+semivariance+tail_risk");
    }
}

TEST_F(PipelineRun, DiagnoseWithoutMatrixIsADataError) {
    PipelineConfig cfg = *cfg_;
    cfg.out = scratch("no_matrix");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_diagnose(cfg, out, err), kExitData);
    EXPECT_NE(err.str().find("results.json"), std::string::npos);
}

TEST_F(PipelineRun, RepeatedOptimizeIsByteIdentical) {
    PipelineConfig cfg = *cfg_;
    cfg.out = scratch("repeat");
    fs::copy_file(cfg_->out / "panel.csv", cfg.out / "panel.csv");
    fs::copy_file(cfg_->out / "regimes_fitted.json", cfg.out / "regimes_fitted.json");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_optimize(cfg, out, err), kExitSuccess) << err.str();
    for (const char* n : {"results.json", "optimal_variance.csv", "optimal_semivariance.csv", "optimal_tail_risk.csv"}) {
        EXPECT_EQ(slurp(cfg.out / n), slurp(cfg_->out / n)) << n;
    }
}

#ifdef COPULARISK_CLI
TEST(CliBinary, ExitCodes) {
    const std::string cli = COPULARISK_CLI;
    const auto dir = scratch("cli");
    auto run = [&](const std::string& args) {
        const int status = std::system((cli + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    EXPECT_EQ(run("optimize --cases 1,7 --out " + dir.string()), kExitUsage);
    EXPECT_EQ(run("optimize --method simplex"), kExitUsage);
    EXPECT_EQ(run("frobnicate"), kExitUsage);
    EXPECT_EQ(run("ingest --sp500 /nonexistent/sp.csv --oil x --gas y --out " + dir.string()), kExitData);
    EXPECT_NE(slurp(dir / "log.txt").find("/nonexistent/sp.csv"), std::string::npos);
    EXPECT_EQ(run("diagnose --config x --out " + dir.string()), kExitData);
    EXPECT_EQ(run("--help"), kExitSuccess);
}
#endif

}  // namespace copularisk::test
