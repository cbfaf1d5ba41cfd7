#include "copularisk/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace copularisk {

EmpiricalDistribution::EmpiricalDistribution(std::span<const double> sample) : sorted_(sample.begin(), sample.end()) {
    if (sorted_.size() < 2) throw std::invalid_argument("empirical distribution needs at least 2 observations");
    for (double x : sorted_) {
        if (!std::isfinite(x)) throw std::invalid_argument("empirical distribution sample contains non-finite value");
    }
    std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalDistribution::ecdf(double x) const {
    const auto count = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return static_cast<double>(count) / static_cast<double>(sorted_.size() + 1);
}

std::size_t EmpiricalDistribution::quantile_index(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("quantile level must lie in (0,1)");
    const double n1 = static_cast<double>(sorted_.size() + 1);
    // The slack absorbs rounding in u = k/(n+1), so ecdf round-trips land on rank k.
    double rank = std::ceil(u * n1 - 1e-9);
    rank = std::clamp(rank, 1.0, static_cast<double>(sorted_.size()));
    return static_cast<std::size_t>(rank) - 1;
}

double EmpiricalDistribution::quantile(double u) const { return sorted_[quantile_index(u)]; }

double EmpiricalDistribution::mean() const {
    return std::accumulate(sorted_.begin(), sorted_.end(), 0.0) / static_cast<double>(sorted_.size());
}

double ecdf(const EmpiricalDistribution& d, double x) { return d.ecdf(x); }
double quantile(const EmpiricalDistribution& d, double u) { return d.quantile(u); }

std::vector<double> pit(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 2) throw std::invalid_argument("pit needs at least 2 observations");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return series[a] < series[b]; });
    std::vector<double> out(n);
    const double n1 = static_cast<double>(n + 1);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && series[order[j + 1]] == series[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg_rank / n1;
        i = j + 1;
    }
    return out;
}

}  // namespace copularisk
