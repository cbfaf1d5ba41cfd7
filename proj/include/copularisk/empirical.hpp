#pragma once

#include <span>
#include <vector>

namespace copularisk {

/// Empirical distribution of one regime-specific return series.
///
/// The CDF uses the (n+1) denominator, F(x) = #{x_i <= x} / (n+1), so transformed
/// points never touch the boundary of the unit cube. The quantile is the
/// left-continuous generalized inverse of that step function:
/// F^-1(u) = sorted[ceil(u (n+1))], index clamped to [1, n].
class EmpiricalDistribution {
public:
    /// Requires at least two finite values; throws std::invalid_argument otherwise.
    explicit EmpiricalDistribution(std::span<const double> sample);

    std::size_t size() const { return sorted_.size(); }
    const std::vector<double>& sorted() const { return sorted_; }
    double min() const { return sorted_.front(); }
    double max() const { return sorted_.back(); }

    double ecdf(double x) const;
    /// Requires 0 < u < 1.
    double quantile(double u) const;
    /// Index (0-based) into sorted() selected by quantile(u).
    std::size_t quantile_index(double u) const;
    /// Sample mean. The quantile function's own mean differs by O(1/n): the top rank
    /// carries mass 2/(n+1) under the clamp.
    double mean() const;

private:
    std::vector<double> sorted_;
};

double ecdf(const EmpiricalDistribution& d, double x);
double quantile(const EmpiricalDistribution& d, double u);

/// Pseudo-observations rank(x_i)/(n+1) in the original order, ties by average rank.
std::vector<double> pit(std::span<const double> series);

}  // namespace copularisk
