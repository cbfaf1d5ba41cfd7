// Writes the bundled synthetic fixture: three price files and a regime config.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "copularisk/io.hpp"
#include "copularisk/synthetic.hpp"

using namespace copularisk;

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic three-asset fixture"};
    std::filesystem::path out = "data/fixture";
    std::uint64_t seed = 424242;
    app.add_option("--out", out, "target directory");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    const auto blocks = fixture_regimes();
    const auto m = make_synthetic_market(blocks, Date(2006, 1, 2), seed);
    std::filesystem::create_directories(out);
    write_file_atomic(out / "sp500.csv", price_csv(m.sp500));
    write_file_atomic(out / "oil.csv", price_csv(m.oil));
    write_file_atomic(out / "gas.csv", price_csv(m.gas));
    write_file_atomic(out / "regimes.json", regime_table_to_json(m.regimes));
    std::cout << m.sp500.observations.size() << " prices per series, " << m.regimes.regimes.size()
              << " regimes written to " << out.string() << "\n";
    return 0;
}
