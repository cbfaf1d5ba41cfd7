#include "copularisk/marketdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "copularisk/io.hpp"

namespace copularisk {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        auto next = line.find(sep, pos);
        out.push_back(line.substr(pos, next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

}  // namespace

Date::Date(int y, unsigned m, unsigned d) {
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw DataError("invalid calendar date");
    days_ = std::chrono::sys_days{ymd}.time_since_epoch().count();
}

std::optional<Date> Date::parse(std::string_view text) {
    text = trim(text);
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
    auto field = [&](std::size_t off, std::size_t len) -> std::optional<int> {
        int v = 0;
        auto [ptr, ec] = std::from_chars(text.data() + off, text.data() + off + len, v);
        if (ec != std::errc{} || ptr != text.data() + off + len) return std::nullopt;
        return v;
    };
    auto y = field(0, 4);
    auto m = field(5, 2);
    auto d = field(8, 2);
    if (!y || !m || !d || *m < 1 || *d < 1) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
                                    std::chrono::day{static_cast<unsigned>(*d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{std::chrono::sys_days{ymd}};
}

std::string Date::iso() const {
    std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::vector<double> ReturnPanel::column(std::size_t asset) const {
    std::vector<double> out;
    out.reserve(returns.size());
    for (const auto& r : returns) out.push_back(r.at(asset));
    return out;
}

std::string_view to_string(VarianceLabel label) {
    switch (label) {
        case VarianceLabel::VeryLow: return "VL";
        case VarianceLabel::Low: return "L";
        case VarianceLabel::Medium: return "M";
        case VarianceLabel::High: return "H";
    }
    return "?";
}

std::optional<VarianceLabel> parse_variance_label(std::string_view text) {
    if (text == "VL") return VarianceLabel::VeryLow;
    if (text == "L") return VarianceLabel::Low;
    if (text == "M") return VarianceLabel::Medium;
    if (text == "H") return VarianceLabel::High;
    return std::nullopt;
}

std::optional<std::size_t> RegimeTable::find(Date d) const {
    for (std::size_t i = 0; i < regimes.size(); ++i) {
        if (regimes[i].contains(d)) return i;
    }
    return std::nullopt;
}

PriceSeries parse_price_csv(std::string_view text, std::string asset_id) {
    PriceSeries series;
    series.asset_id = std::move(asset_id);
    std::size_t row = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos <= text.size()) {
        auto next = text.find('\n', pos);
        auto line = trim(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        pos = next == std::string_view::npos ? text.size() + 1 : next + 1;
        ++row;
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (line == "date,price") continue;
            // Headerless files are accepted when the first row parses as data.
        }
        auto fields = split(line, ',');
        const std::string where = series.asset_id + " row " + std::to_string(row);
        if (fields.size() != 2) throw DataError(where + ": expected `date,price`");
        auto date = Date::parse(fields[0]);
        if (!date) throw DataError(where + ": malformed date '" + std::string(trim(fields[0])) + "'");
        auto price = parse_double(fields[1]);
        if (!price) throw DataError(where + ": missing or malformed price");
        if (!(*price > 0.0) || !std::isfinite(*price)) throw DataError(where + ": non-positive price");
        if (!series.observations.empty()) {
            const Date prev = series.observations.back().date;
            if (*date == prev) throw DataError(where + ": duplicate date " + date->iso());
            if (*date < prev) throw DataError(where + ": dates not increasing at " + date->iso());
        }
        series.observations.push_back({*date, *price});
    }
    if (series.observations.empty()) throw DataError(series.asset_id + ": empty price file");
    return series;
}

PriceSeries load_price_csv(const std::filesystem::path& path, std::string asset_id) {
    return parse_price_csv(read_text_file(path), std::move(asset_id));
}

ReturnPanel log_returns(const PriceSeries& sp500, const PriceSeries& oil, const PriceSeries& gas) {
    const std::array<const PriceSeries*, kAssetCount> series{&sp500, &oil, &gas};
    std::map<Date, std::array<double, kAssetCount>> joined;
    std::map<Date, int> seen;
    for (std::size_t a = 0; a < kAssetCount; ++a) {
        for (const auto& obs : series[a]->observations) {
            joined[obs.date][a] = obs.price;
            ++seen[obs.date];
        }
    }
    std::vector<std::pair<Date, std::array<double, kAssetCount>>> common;
    for (const auto& [date, prices] : joined) {
        if (seen[date] == static_cast<int>(kAssetCount)) common.emplace_back(date, prices);
    }
    if (common.size() < 2) throw DataError("fewer than 2 common dates across the three series");

    ReturnPanel panel;
    panel.dates.reserve(common.size() - 1);
    panel.returns.reserve(common.size() - 1);
    for (std::size_t k = 1; k < common.size(); ++k) {
        ReturnTriplet r{};
        for (std::size_t a = 0; a < kAssetCount; ++a) r[a] = std::log(common[k].second[a] / common[k - 1].second[a]);
        panel.dates.push_back(common[k].first);
        panel.returns.push_back(r);
    }
    return panel;
}

ReturnPanel slice_by_regime(const ReturnPanel& panel, const RegimeSpec& spec) {
    ReturnPanel out;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (spec.contains(panel.dates[i])) {
            out.dates.push_back(panel.dates[i]);
            out.returns.push_back(panel.returns[i]);
        }
    }
    if (out.empty()) {
        throw DataError("regime " + std::to_string(spec.id) + " [" + spec.start.iso() + ", " + spec.end.iso() +
                        "] has no panel dates");
    }
    return out;
}

void validate_regime_table(const RegimeTable& table) {
    if (table.regimes.empty()) throw DataError("regime table is empty");
    std::set<int> ids;
    for (std::size_t i = 0; i < table.regimes.size(); ++i) {
        const auto& r = table.regimes[i];
        if (r.end < r.start) throw DataError("regime " + std::to_string(r.id) + ": end before start");
        if (!ids.insert(r.id).second) throw DataError("duplicate regime id " + std::to_string(r.id));
        if (i > 0) {
            const auto& prev = table.regimes[i - 1];
            if (r.start <= prev.end) {
                throw DataError("regimes " + std::to_string(prev.id) + " and " + std::to_string(r.id) +
                                " overlap or are out of order");
            }
        }
    }
}

RegimeTable parse_regime_table(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("regime config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("regimes") || !doc["regimes"].is_array()) {
        throw DataError("regime config must be an object with a `regimes` array");
    }
    RegimeTable table;
    for (const auto& item : doc["regimes"]) {
        RegimeSpec spec;
        try {
            spec.id = item.at("id").get<int>();
            auto start = Date::parse(item.at("start").get<std::string>());
            auto end = Date::parse(item.at("end").get<std::string>());
            if (!start || !end) throw DataError("regime " + std::to_string(spec.id) + ": malformed date");
            spec.start = *start;
            spec.end = *end;
            const auto& labels = item.at("labels");
            if (!labels.is_array() || labels.size() != kAssetCount) {
                throw DataError("regime " + std::to_string(spec.id) + ": labels must hold three entries");
            }
            for (std::size_t a = 0; a < kAssetCount; ++a) {
                auto label = parse_variance_label(labels[a].get<std::string>());
                if (!label) {
                    throw DataError("regime " + std::to_string(spec.id) + ": unknown variance label '" +
                                    labels[a].get<std::string>() + "'");
                }
                spec.labels[a] = *label;
            }
            const auto family_text = item.at("family").get<std::string>();
            auto family = parse_family(family_text);
            if (!family) {
                throw DataError("regime " + std::to_string(spec.id) + ": unknown copula family '" + family_text + "'");
            }
            spec.family = *family;
            if (item.contains("params") && !item["params"].is_null()) {
                try {
                    spec.fixed_params = params_from_json(spec.family, item["params"]);
                } catch (const std::invalid_argument& e) {
                    throw DataError("regime " + std::to_string(spec.id) + ": " + e.what());
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("regime config field error: ") + e.what());
        }
        table.regimes.push_back(std::move(spec));
    }
    validate_regime_table(table);
    return table;
}

RegimeTable load_regime_table(const std::filesystem::path& path) {
    return parse_regime_table(read_text_file(path));
}

std::string regime_table_to_json(const RegimeTable& table) {
    nlohmann::json regimes = nlohmann::json::array();
    for (const auto& r : table.regimes) {
        nlohmann::json item;
        item["id"] = r.id;
        item["start"] = r.start.iso();
        item["end"] = r.end.iso();
        item["labels"] = {to_string(r.labels[0]), to_string(r.labels[1]), to_string(r.labels[2])};
        item["family"] = to_string(r.family);
        if (r.fixed_params) item["params"] = params_to_json(*r.fixed_params);
        regimes.push_back(std::move(item));
    }
    nlohmann::json doc;
    doc["regimes"] = std::move(regimes);
    return doc.dump(2) + "\n";
}

void write_panel_csv(const std::filesystem::path& path, const ReturnPanel& panel) {
    std::ostringstream out;
    out << "# units: daily log returns\n";
    out << "date,sp500,oil,gas\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < panel.size(); ++i) {
        out << panel.dates[i].iso();
        for (double r : panel.returns[i]) out << ',' << r;
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

ReturnPanel load_panel_csv(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    ReturnPanel panel;
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++row;
        auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        if (!header) {
            header = true;
            if (view != "date,sp500,oil,gas") throw DataError(path.string() + ": unexpected panel header");
            continue;
        }
        auto fields = split(view, ',');
        if (fields.size() != 4) throw DataError(path.string() + " row " + std::to_string(row) + ": expected 4 fields");
        auto date = Date::parse(fields[0]);
        if (!date) throw DataError(path.string() + " row " + std::to_string(row) + ": malformed date");
        ReturnTriplet r{};
        for (std::size_t a = 0; a < kAssetCount; ++a) {
            auto v = parse_double(fields[a + 1]);
            if (!v) throw DataError(path.string() + " row " + std::to_string(row) + ": malformed return");
            r[a] = *v;
        }
        if (!panel.dates.empty() && !(panel.dates.back() < *date)) {
            throw DataError(path.string() + " row " + std::to_string(row) + ": dates not increasing");
        }
        panel.dates.push_back(*date);
        panel.returns.push_back(r);
    }
    if (panel.empty()) throw DataError(path.string() + ": empty panel");
    return panel;
}

}  // namespace copularisk
