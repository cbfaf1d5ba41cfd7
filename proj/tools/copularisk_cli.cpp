#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "copularisk/pipeline.hpp"

using namespace copularisk;

int main(int argc, char** argv) {
    CLI::App app{"Regime-dependent copula portfolio optimization"};
    app.require_subcommand(1);

    PipelineConfig cfg;
    std::string cases = "1,2,3,4";
    std::string measures = "variance,semivariance,tail_risk";
    std::string method = "mc";
    std::string family;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--sp500", cfg.sp500, "S&P 500 price CSV (date,price)");
        sub->add_option("--oil", cfg.oil, "crude oil price CSV");
        sub->add_option("--gas", cfg.gas, "natural gas price CSV");
        sub->add_option("--config", cfg.regime_config, "regime config JSON");
        sub->add_option("--cases", cases, "constraint cases, e.g. 1,2,3,4");
        sub->add_option("--measures", measures, "variance,semivariance,tail_risk");
        sub->add_option("--method", method, "integration: grid or mc")->check(CLI::IsMember({"grid", "mc"}));
        sub->add_option("--mc-samples", cfg.integration.mc_samples, "Monte Carlo sample count");
        sub->add_option("--grid", cfg.integration.grid_points_per_axis, "grid points per axis");
        sub->add_option("--seed", cfg.seed, "root seed for every random stream");
        sub->add_option("--out", cfg.out, "output directory");
        sub->add_flag("--family-from-config", cfg.family_from_config, "fit the family named in the config");
        sub->add_option("--family", family, "fit this family for every regime");
        sub->add_option("--emdd-paths", cfg.drawdown.paths, "drawdown simulation paths");
        sub->add_option("--emdd-steps", cfg.drawdown.steps, "drawdown simulation steps per path");
    };

    int (*command)(const PipelineConfig&, std::ostream&, std::ostream&) = nullptr;
    const std::pair<const char*, decltype(command)> subs[] = {
        {"ingest", cmd_ingest},     {"fit", cmd_fit},           {"optimize", cmd_optimize},
        {"diagnose", cmd_diagnose}, {"pipeline", cmd_pipeline},
    };
    const char* help[] = {"align the three price series and cache log returns",
                          "fit a copula per regime and write the fitted config",
                          "minimize each risk measure per regime and case",
                          "benchmark, dissimilarity, returns, drawdowns, superoptimal portfolios",
                          "ingest, fit, optimize and diagnose in order"};
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        auto* sub = app.add_subcommand(subs[i].first, help[i]);
        add_common(sub);
        auto fn = subs[i].second;
        sub->callback([&command, fn] { command = fn; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitSuccess : kExitUsage;
    }

    try {
        cfg.cases = parse_cases(cases);
        cfg.measures = parse_measures(measures);
        cfg.integration.method = method == "grid" ? IntegrationMethod::Grid : IntegrationMethod::MonteCarlo;
        if (!family.empty()) {
            cfg.family = parse_family(family);
            if (!cfg.family) throw UsageError("unknown copula family '" + family + "'");
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return command(cfg, std::cout, std::cerr);
}
