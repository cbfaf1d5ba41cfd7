#include "copularisk/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "copularisk/copula_detail.hpp"
#include "copularisk/rng.hpp"

namespace copularisk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double u) {
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, u);
}

void check_interior(double u, double v, double w) {
    for (double x : {u, v, w}) {
        if (!(x > 0.0 && x < 1.0)) throw std::domain_error("copula density argument outside the open unit cube");
    }
}

bool is_valid_correlation(const Eigen::Matrix3d& corr) {
    if (!corr.allFinite()) return false;
    if (!corr.isApprox(corr.transpose(), 1e-12)) return false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(corr(i, i) - 1.0) > 1e-12) return false;
    }
    Eigen::LLT<Eigen::Matrix3d> llt(corr);
    return llt.info() == Eigen::Success;
}

}  // namespace

std::string_view to_string(CopulaFamily family) {
    switch (family) {
        case CopulaFamily::Clayton: return "clayton";
        case CopulaFamily::Frank: return "frank";
        case CopulaFamily::Gumbel: return "gumbel";
        case CopulaFamily::Gauss: return "gauss";
        case CopulaFamily::StudentT: return "student_t";
    }
    return "?";
}

std::optional<CopulaFamily> parse_family(std::string_view text) {
    for (auto f : kAllFamilies) {
        if (to_string(f) == text) return f;
    }
    return std::nullopt;
}

bool is_archimedean(CopulaFamily family) {
    return family == CopulaFamily::Clayton || family == CopulaFamily::Frank || family == CopulaFamily::Gumbel;
}

int parameter_count(CopulaFamily family) {
    switch (family) {
        case CopulaFamily::Gauss: return 3;
        case CopulaFamily::StudentT: return 4;
        default: return 1;
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

CopulaModel CopulaModel::clayton(double theta) {
    if (!(theta > 0.0) || !std::isfinite(theta)) throw std::invalid_argument("Clayton theta must be > 0");
    CopulaModel m;
    m.family_ = CopulaFamily::Clayton;
    m.theta_ = theta;
    return m;
}

CopulaModel CopulaModel::frank(double theta) {
    // Trivariate Frank is a copula only for positive dependence.
    if (!(theta > 0.0) || !std::isfinite(theta)) throw std::invalid_argument("trivariate Frank theta must be > 0");
    CopulaModel m;
    m.family_ = CopulaFamily::Frank;
    m.theta_ = theta;
    return m;
}

CopulaModel CopulaModel::gumbel(double theta) {
    if (!(theta >= 1.0) || !std::isfinite(theta)) throw std::invalid_argument("Gumbel theta must be >= 1");
    CopulaModel m;
    m.family_ = CopulaFamily::Gumbel;
    m.theta_ = theta;
    return m;
}

CopulaModel CopulaModel::gauss(const Eigen::Matrix3d& corr) {
    if (!is_valid_correlation(corr)) throw std::invalid_argument("Gauss copula needs a positive-definite correlation matrix");
    CopulaModel m;
    m.family_ = CopulaFamily::Gauss;
    m.corr_ = corr;
    m.prepare_elliptical();
    return m;
}

CopulaModel CopulaModel::gauss(double rho12, double rho13, double rho23) {
    Eigen::Matrix3d c;
    c << 1.0, rho12, rho13, rho12, 1.0, rho23, rho13, rho23, 1.0;
    return gauss(c);
}

CopulaModel CopulaModel::student_t(const Eigen::Matrix3d& corr, double dof) {
    if (!is_valid_correlation(corr)) throw std::invalid_argument("Student t copula needs a positive-definite correlation matrix");
    if (!(dof > 2.0) || !std::isfinite(dof)) throw std::invalid_argument("Student t copula dof must be > 2");
    CopulaModel m;
    m.family_ = CopulaFamily::StudentT;
    m.corr_ = corr;
    m.dof_ = dof;
    m.prepare_elliptical();
    return m;
}

CopulaModel CopulaModel::independence() { return gauss(Eigen::Matrix3d::Identity()); }

void CopulaModel::prepare_elliptical() {
    Eigen::LLT<Eigen::Matrix3d> llt(corr_);
    chol_ = llt.matrixL();
    corr_inv_ = llt.solve(Eigen::Matrix3d::Identity());
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

// ---------------------------------------------------------------------------
// Density
// ---------------------------------------------------------------------------

namespace detail {

AxisTerm axis_term(const CopulaModel& m, double t) {
    const double theta = m.theta();
    switch (m.family()) {
        case CopulaFamily::Clayton: {
            const double lt = std::log(t);
            return {-theta * lt, -(theta + 1.0) * lt};
        }
        case CopulaFamily::Gumbel: {
            const double mlt = -std::log(t);
            return {std::pow(mlt, theta), (theta - 1.0) * std::log(mlt) + mlt};
        }
        case CopulaFamily::Frank: {
            const double la = std::log(-std::expm1(-theta * t));
            return {la, -theta * t - la};
        }
        case CopulaFamily::Gauss:
            return {normal_quantile(t), 0.0};
        case CopulaFamily::StudentT: {
            const boost::math::students_t_distribution<double> dist(m.dof());
            const double x = boost::math::quantile(dist, t);
            return {x, std::log1p(x * x / m.dof())};
        }
    }
    return {};
}

double combine_log_density(const CopulaModel& m, const AxisTerm& a, const AxisTerm& b, const AxisTerm& c) {
    const double theta = m.theta();
    switch (m.family()) {
        case CopulaFamily::Clayton: {
            // 1 + theta*s = sum_i t_i^-theta - 2, evaluated in log space.
            const double top = std::max({a.a, b.a, c.a});
            const double scaled = std::exp(a.a - top) + std::exp(b.a - top) + std::exp(c.a - top) - 2.0 * std::exp(-top);
            const double log_base = top + std::log(scaled);
            return std::log1p(theta) + std::log1p(2.0 * theta) - (1.0 / theta + 3.0) * log_base + a.b + b.b + c.b;
        }
        case CopulaFamily::Gumbel: {
            // c = psi(s) theta^3 a s^(a-3) [a^2 g^2 + 3a(1-a) g + (1-a)(2-a)] prod (-ln t)^(theta-1)/t,
            // with a = 1/theta and g = s^a.
            const double s = a.a + b.a + c.a;
            const double inv = 1.0 / theta;
            const double log_s = std::log(s);
            const double g = std::exp(inv * log_s);
            const double poly = inv * inv * g * g + 3.0 * inv * (1.0 - inv) * g + (1.0 - inv) * (2.0 - inv);
            return -g + std::log(inv) + (inv - 3.0) * log_s + std::log(poly) + 3.0 * std::log(theta) + a.b + b.b + c.b;
        }
        case CopulaFamily::Frank: {
            // x = prod(1 - e^(-theta t_i)) / (1 - e^-theta)^2; c = theta^2 x (1+x) / (1-x)^3 prod e^(-theta t)/(1-e^(-theta t)).
            const double log_x = a.a + b.a + c.a - 2.0 * std::log(-std::expm1(-theta));
            const double x = std::exp(log_x);
            return 2.0 * std::log(theta) + log_x + std::log1p(x) - 3.0 * std::log1p(-x) + a.b + b.b + c.b;
        }
        case CopulaFamily::Gauss: {
            const Eigen::Vector3d z(a.a, b.a, c.a);
            const double quad = z.dot(m.corr_inverse() * z) - z.squaredNorm();
            return -0.5 * m.corr_log_det() - 0.5 * quad;
        }
        case CopulaFamily::StudentT: {
            const double nu = m.dof();
            const Eigen::Vector3d x(a.a, b.a, c.a);
            const double quad = x.dot(m.corr_inverse() * x);
            const double norm = std::lgamma(0.5 * (nu + 3.0)) + 2.0 * std::lgamma(0.5 * nu) - 3.0 * std::lgamma(0.5 * (nu + 1.0));
            return norm - 0.5 * m.corr_log_det() - 0.5 * (nu + 3.0) * std::log1p(quad / nu) +
                   0.5 * (nu + 1.0) * (a.b + b.b + c.b);
        }
    }
    return 0.0;
}

}  // namespace detail

double log_density(const CopulaModel& m, double u, double v, double w) {
    check_interior(u, v, w);
    return detail::combine_log_density(m, detail::axis_term(m, u), detail::axis_term(m, v), detail::axis_term(m, w));
}

double density(const CopulaModel& m, double u, double v, double w) { return std::exp(log_density(m, u, v, w)); }

int clamp_to_interior(UnitPoint& p) {
    int moved = 0;
    for (double& x : p) {
        const double clamped = std::clamp(x, kBoundaryClamp, 1.0 - kBoundaryClamp);
        if (clamped != x) {
            x = clamped;
            ++moved;
        }
    }
    return moved;
}

// ---------------------------------------------------------------------------
// CDF
// ---------------------------------------------------------------------------

namespace {

double generator(const CopulaModel& m, double t) {
    const double theta = m.theta();
    switch (m.family()) {
        case CopulaFamily::Clayton: return std::expm1(-theta * std::log(t)) / theta;
        case CopulaFamily::Gumbel: return std::pow(-std::log(t), theta);
        case CopulaFamily::Frank: return -std::log(std::expm1(-theta * t) / std::expm1(-theta));
        default: break;
    }
    throw std::logic_error("generator requested for an elliptical family");
}

double generator_inverse(const CopulaModel& m, double s) {
    const double theta = m.theta();
    switch (m.family()) {
        case CopulaFamily::Clayton: return std::exp(-std::log1p(theta * s) / theta);
        case CopulaFamily::Gumbel: return std::exp(-std::pow(s, 1.0 / theta));
        case CopulaFamily::Frank: return -std::log1p(std::expm1(-theta) * std::exp(-s)) / theta;
        default: break;
    }
    throw std::logic_error("generator requested for an elliptical family");
}

// Genz separation of variables over a rank-1 lattice with random shifts.
double elliptical_cdf(const CopulaModel& m, const std::array<double, 3>& u) {
    const bool student = m.family() == CopulaFamily::StudentT;
    std::array<double, 3> bound{};
    for (int i = 0; i < 3; ++i) {
        if (u[i] >= 1.0) {
            bound[i] = kInf;
        } else if (student) {
            bound[i] = boost::math::quantile(boost::math::students_t_distribution<double>(m.dof()), u[i]);
        } else {
            bound[i] = normal_quantile(u[i]);
        }
    }
    if (std::isinf(bound[0]) && std::isinf(bound[1]) && std::isinf(bound[2])) return 1.0;

    const Eigen::Matrix3d& L = m.corr_cholesky();
    constexpr std::size_t kPoints = 4096;
    constexpr int kShifts = 8;
    const std::array<double, 3> gen{std::numbers::sqrt2, std::sqrt(3.0), std::sqrt(5.0)};
    SplitMix64 shift_rng(0x5eed5eedULL);

    double total = 0.0;
    for (int s = 0; s < kShifts; ++s) {
        std::array<double, 3> shift{};
        for (double& x : shift) x = to_open_unit(shift_rng.next());
        double acc = 0.0;
        for (std::size_t k = 0; k < kPoints; ++k) {
            std::array<double, 3> q{};
            for (int d = 0; d < 3; ++d) {
                double x = std::fmod(static_cast<double>(k + 1) * gen[d] + shift[d], 1.0);
                q[d] = std::abs(2.0 * x - 1.0);  // baker's transform
                q[d] = std::clamp(q[d], 1e-15, 1.0 - 1e-15);
            }
            double scale = 1.0;
            if (student) {
                const double chi2 = 2.0 * boost::math::gamma_p_inv(0.5 * m.dof(), q[2]);
                scale = std::sqrt(chi2 / m.dof());
            }
            double f = 1.0;
            std::array<double, 2> y{};
            for (int i = 0; i < 3; ++i) {
                double shifted = bound[i] * scale;
                for (int j = 0; j < i; ++j) shifted -= L(i, j) * y[j];
                const double e = std::isinf(bound[i]) ? 1.0 : normal_cdf(shifted / L(i, i));
                f *= e;
                if (f == 0.0) break;
                if (i < 2) y[i] = normal_quantile(std::clamp(q[i] * e, 1e-300, 1.0 - 1e-16));
            }
            acc += f;
        }
        total += acc / static_cast<double>(kPoints);
    }
    return std::clamp(total / kShifts, 0.0, 1.0);
}

}  // namespace

double cdf(const CopulaModel& m, double u, double v, double w) {
    for (double x : {u, v, w}) {
        if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("copula cdf argument outside [0,1]");
    }
    if (u == 0.0 || v == 0.0 || w == 0.0) return 0.0;
    // Uniform margins hold exactly.
    if (v == 1.0 && w == 1.0) return u;
    if (u == 1.0 && w == 1.0) return v;
    if (u == 1.0 && v == 1.0) return w;
    if (is_archimedean(m.family())) {
        const double s = generator(m, u) + generator(m, v) + generator(m, w);
        return generator_inverse(m, s);
    }
    return elliptical_cdf(m, {u, v, w});
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

// Kemp's LK algorithm for the logarithmic series with p = 1 - e^-theta.
std::uint64_t sample_log_series(double theta, std::mt19937_64& rng) {
    const double p = -std::expm1(-theta);
    const double u2 = to_open_unit(rng());
    if (u2 > p) return 1;
    const double u1 = to_open_unit(rng());
    const double q = -std::expm1(-theta * u1);  // 1 - (1-p)^u1
    if (u2 < q * q) {
        const double k = std::floor(1.0 + std::log(u2) / std::log(q));
        return k < 1.0 ? 1 : static_cast<std::uint64_t>(k);
    }
    return u2 > q ? 1 : 2;
}

// Positive stable variate with Laplace transform exp(-s^alpha), 0 < alpha <= 1 (Kanter).
double sample_positive_stable(double alpha, std::mt19937_64& rng) {
    if (alpha >= 1.0) return 1.0;
    const double angle = std::numbers::pi * to_open_unit(rng());
    const double e = -std::log(to_open_unit(rng()));
    const double a = std::sin(alpha * angle) / std::pow(std::sin(angle), 1.0 / alpha);
    const double b = std::pow(std::sin((1.0 - alpha) * angle) / e, (1.0 - alpha) / alpha);
    return a * b;
}

}  // namespace

std::vector<UnitPoint> sample(const CopulaModel& m, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("sample count must be >= 1");
    std::mt19937_64 rng(SplitMix64(seed).next());
    std::vector<UnitPoint> out(count);
    const double theta = m.theta();
    std::normal_distribution<double> normal;

    for (auto& p : out) {
        switch (m.family()) {
            case CopulaFamily::Clayton: {
                std::gamma_distribution<double> frailty(1.0 / theta, 1.0);
                const double v = frailty(rng);
                for (double& x : p) {
                    const double e = -std::log(to_open_unit(rng()));
                    x = std::exp(-std::log1p(e / v) / theta);
                }
                break;
            }
            case CopulaFamily::Gumbel: {
                const double alpha = 1.0 / theta;
                const double v = sample_positive_stable(alpha, rng);
                for (double& x : p) {
                    const double e = -std::log(to_open_unit(rng()));
                    x = std::exp(-std::pow(e / v, alpha));
                }
                break;
            }
            case CopulaFamily::Frank: {
                const double v = static_cast<double>(sample_log_series(theta, rng));
                for (double& x : p) {
                    const double e = -std::log(to_open_unit(rng()));
                    x = -std::log1p(std::expm1(-theta) * std::exp(-e / v)) / theta;
                }
                break;
            }
            case CopulaFamily::Gauss: {
                const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
                const Eigen::Vector3d y = m.corr_cholesky() * z;
                for (int i = 0; i < 3; ++i) p[i] = normal_cdf(y[i]);
                break;
            }
            case CopulaFamily::StudentT: {
                const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
                const Eigen::Vector3d y = m.corr_cholesky() * z;
                std::chi_squared_distribution<double> chi2(m.dof());
                const double scale = std::sqrt(m.dof() / chi2(rng));
                const boost::math::students_t_distribution<double> dist(m.dof());
                for (int i = 0; i < 3; ++i) p[i] = boost::math::cdf(dist, y[i] * scale);
                break;
            }
        }
        clamp_to_interior(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dependence measures
// ---------------------------------------------------------------------------

namespace {

// Counts inversions (strict y[i] > y[j], i < j) while merge-sorting.
std::uint64_t merge_count(std::vector<double>& y, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = merge_count(y, buf, lo, mid) + merge_count(y, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (y[j] < y[i]) {
            swaps += mid - i;
            buf[k++] = y[j++];
        } else {
            buf[k++] = y[i++];
        }
    }
    while (i < mid) buf[k++] = y[i++];
    while (j < hi) buf[k++] = y[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              y.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

double tie_pairs(const std::vector<double>& sorted_values) {
    double pairs = 0.0;
    std::size_t i = 0;
    while (i < sorted_values.size()) {
        std::size_t j = i;
        while (j + 1 < sorted_values.size() && sorted_values[j + 1] == sorted_values[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        pairs += t * (t - 1.0) / 2.0;
        i = j + 1;
    }
    return pairs;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw std::invalid_argument("kendall_tau needs two equal-length columns of length >= 2");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[idx[i]];
        ys[i] = y[idx[i]];
    }
    const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    const double n1 = tie_pairs(xs);
    double n3 = 0.0;
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && xs[j + 1] == xs[i] && ys[j + 1] == ys[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            n3 += t * (t - 1.0) / 2.0;
            i = j + 1;
        }
    }
    std::vector<double> buf(n);
    const double swaps = static_cast<double>(merge_count(ys, buf, 0, n));
    const double n2 = tie_pairs(ys);
    const double denom = std::sqrt((n0 - n1) * (n0 - n2));
    if (denom == 0.0) return 0.0;
    return (n0 - n1 - n2 + n3 - 2.0 * swaps) / denom;
}

namespace {

std::array<std::vector<double>, 3> columns_of(std::span<const UnitPoint> obs) {
    std::array<std::vector<double>, 3> cols;
    for (auto& c : cols) c.reserve(obs.size());
    for (const auto& p : obs) {
        for (int i = 0; i < 3; ++i) cols[i].push_back(p[i]);
    }
    return cols;
}

double debye1(double theta) {
    if (theta < 1e-8) return 1.0 - theta / 4.0;
    auto integrand = [](double t) { return t < 1e-12 ? 1.0 : t / std::expm1(t); };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, theta, 10, 1e-12) / theta;
}

}  // namespace

double mean_kendall_tau(std::span<const UnitPoint> obs) {
    const auto cols = columns_of(obs);
    return (kendall_tau(cols[0], cols[1]) + kendall_tau(cols[0], cols[2]) + kendall_tau(cols[1], cols[2])) / 3.0;
}

double tau_from_theta(CopulaFamily family, double theta) {
    switch (family) {
        case CopulaFamily::Clayton: return theta / (theta + 2.0);
        case CopulaFamily::Gumbel: return 1.0 - 1.0 / theta;
        case CopulaFamily::Frank: return 1.0 + 4.0 * (debye1(theta) - 1.0) / theta;
        default: break;
    }
    throw std::invalid_argument("tau_from_theta applies to Archimedean families only");
}

double theta_from_tau(CopulaFamily family, double tau) {
    tau = std::clamp(tau, 1e-4, 0.98);
    switch (family) {
        case CopulaFamily::Clayton: return 2.0 * tau / (1.0 - tau);
        case CopulaFamily::Gumbel: return 1.0 / (1.0 - tau);
        case CopulaFamily::Frank: {
            auto f = [tau](double th) { return tau_from_theta(CopulaFamily::Frank, th) - tau; };
            std::uintmax_t iters = 200;
            auto [lo, hi] = boost::math::tools::toms748_solve(f, 1e-6, 500.0, boost::math::tools::eps_tolerance<double>(40),
                                                               iters);
            return 0.5 * (lo + hi);
        }
        default: break;
    }
    throw std::invalid_argument("theta_from_tau applies to Archimedean families only");
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

double log_likelihood(const CopulaModel& m, std::span<const UnitPoint> obs) {
    double total = 0.0;
    for (const auto& p : obs) {
        const double ld = log_density(m, p[0], p[1], p[2]);
        if (!std::isfinite(ld)) return -kInf;
        total += ld;
    }
    return total;
}

namespace {

void check_fit_input(std::span<const UnitPoint> obs) {
    if (obs.size() < 30) throw FitError("copula fit needs at least 30 observations");
    for (const auto& p : obs) {
        for (double x : p) {
            if (!(x > 0.0 && x < 1.0)) throw FitError("pseudo-observations must lie strictly inside (0,1)");
        }
    }
    for (int i = 0; i < 3; ++i) {
        const double first = obs.front()[i];
        const bool constant = std::all_of(obs.begin(), obs.end(), [&](const UnitPoint& p) { return p[i] == first; });
        if (constant) throw FitError("degenerate input: column " + std::to_string(i) + " is constant");
    }
}

struct ArchimedeanSearch {
    double lo;
    double hi;
    double offset;  // theta = offset + exp(x)
};

ArchimedeanSearch search_range(CopulaFamily family) {
    switch (family) {
        case CopulaFamily::Clayton: return {std::log(1e-4), std::log(100.0), 0.0};
        case CopulaFamily::Gumbel: return {std::log(1e-6), std::log(100.0), 1.0};
        case CopulaFamily::Frank: return {std::log(1e-4), std::log(150.0), 0.0};
        default: break;
    }
    throw std::logic_error("not an Archimedean family");
}

CopulaModel make_archimedean(CopulaFamily family, double theta) {
    switch (family) {
        case CopulaFamily::Clayton: return CopulaModel::clayton(theta);
        case CopulaFamily::Gumbel: return CopulaModel::gumbel(theta);
        case CopulaFamily::Frank: return CopulaModel::frank(theta);
        default: break;
    }
    throw std::logic_error("not an Archimedean family");
}

CopulaModel fit_archimedean(std::span<const UnitPoint> obs, CopulaFamily family) {
    const auto range = search_range(family);
    auto negative_loglik = [&](double x) {
        const double ll = log_likelihood(make_archimedean(family, range.offset + std::exp(x)), obs);
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
    };

    // Coarse scan seeded with the Kendall's tau inversion, then Brent between neighbours.
    constexpr int kScan = 40;
    std::vector<double> xs;
    for (int i = 0; i <= kScan; ++i) xs.push_back(range.lo + (range.hi - range.lo) * i / kScan);
    const double tau_theta = theta_from_tau(family, mean_kendall_tau(obs));
    if (tau_theta - range.offset > 0.0) {
        xs.push_back(std::clamp(std::log(tau_theta - range.offset), range.lo, range.hi));
        std::sort(xs.begin(), xs.end());
    }
    std::size_t best = 0;
    std::vector<double> fx(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        fx[i] = negative_loglik(xs[i]);
        if (fx[i] < fx[best]) best = i;
    }
    const double lo = xs[best == 0 ? 0 : best - 1];
    const double hi = xs[std::min(best + 1, xs.size() - 1)];
    std::uintmax_t iters = 200;
    auto [x_star, f_star] = boost::math::tools::brent_find_minima(negative_loglik, lo, hi, 40, iters);
    if (iters >= 200) throw FitError(std::string(to_string(family)) + " fit did not converge");
    if (fx[best] < f_star) x_star = xs[best];
    return make_archimedean(family, range.offset + std::exp(x_star));
}

Eigen::Matrix3d nearest_correlation(const Eigen::Matrix3d& raw) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(0.5 * (raw + raw.transpose()));
    Eigen::Vector3d vals = eig.eigenvalues().cwiseMax(1e-6);
    Eigen::Matrix3d pd = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    const Eigen::Vector3d inv_sd = pd.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::Matrix3d corr = inv_sd.asDiagonal() * pd * inv_sd.asDiagonal();
    corr.diagonal().setOnes();
    return 0.5 * (corr + corr.transpose());
}

CopulaModel fit_gauss(std::span<const UnitPoint> obs) {
    const double n = static_cast<double>(obs.size());
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> z;
    z.reserve(obs.size());
    for (const auto& p : obs) {
        z.emplace_back(normal_quantile(p[0]), normal_quantile(p[1]), normal_quantile(p[2]));
        mean += z.back();
    }
    mean /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& zi : z) cov += (zi - mean) * (zi - mean).transpose();
    const Eigen::Vector3d inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
    if (!inv_sd.allFinite()) throw FitError("degenerate input: zero normal-score variance");
    return CopulaModel::gauss(nearest_correlation(inv_sd.asDiagonal() * cov * inv_sd.asDiagonal()));
}

CopulaModel fit_student_t(std::span<const UnitPoint> obs) {
    const auto cols = columns_of(obs);
    Eigen::Matrix3d raw = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            raw(i, j) = raw(j, i) = std::sin(0.5 * std::numbers::pi * kendall_tau(cols[i], cols[j]));
        }
    }
    const Eigen::Matrix3d corr = nearest_correlation(raw);
    std::optional<CopulaModel> best;
    double best_ll = -kInf;
    for (int nu = 3; nu <= 30; ++nu) {
        auto m = CopulaModel::student_t(corr, nu);
        const double ll = log_likelihood(m, obs);
        if (ll > best_ll) {
            best_ll = ll;
            best = m;
        }
    }
    if (!best) throw FitError("student_t fit: likelihood not finite for any dof");
    return *best;
}

}  // namespace

CopulaModel fit_ml(std::span<const UnitPoint> obs, CopulaFamily family) {
    check_fit_input(obs);
    switch (family) {
        case CopulaFamily::Gauss: return fit_gauss(obs);
        case CopulaFamily::StudentT: return fit_student_t(obs);
        default: return fit_archimedean(obs, family);
    }
}

SelectionResult select(std::span<const UnitPoint> obs, std::span<const CopulaFamily> families) {
    if (families.empty()) throw std::invalid_argument("select needs at least one family");
    SelectionResult result;
    std::optional<std::size_t> best;
    for (auto family : families) {
        FamilyScore score;
        score.family = family;
        try {
            score.model = fit_ml(obs, family);
            score.log_likelihood = log_likelihood(*score.model, obs);
            score.aic = 2.0 * parameter_count(family) - 2.0 * score.log_likelihood;
            if (!std::isfinite(score.aic)) throw FitError("non-finite likelihood at the fitted parameters");
        } catch (const std::exception& e) {
            score.model.reset();
            score.error = e.what();
        }
        result.scores.push_back(score);
        const std::size_t idx = result.scores.size() - 1;
        if (score.model && (!best || score.aic < result.scores[*best].aic)) best = idx;
    }
    if (!best) {
        std::string msg = "all copula fits failed:";
        for (const auto& s : result.scores) msg += " " + std::string(to_string(s.family)) + ": " + s.error + ";";
        throw FitError(msg);
    }
    result.best = *result.scores[*best].model;
    return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

nlohmann::json params_to_json(const CopulaModel& m) {
    nlohmann::json j;
    if (is_archimedean(m.family())) {
        j["theta"] = m.theta();
        return j;
    }
    const auto& c = m.corr();
    j["rho"] = {c(0, 1), c(0, 2), c(1, 2)};
    if (m.family() == CopulaFamily::StudentT) j["dof"] = m.dof();
    return j;
}

CopulaModel params_from_json(CopulaFamily family, const nlohmann::json& params) {
    try {
        switch (family) {
            case CopulaFamily::Clayton: return CopulaModel::clayton(params.at("theta").get<double>());
            case CopulaFamily::Frank: return CopulaModel::frank(params.at("theta").get<double>());
            case CopulaFamily::Gumbel: return CopulaModel::gumbel(params.at("theta").get<double>());
            case CopulaFamily::Gauss:
            case CopulaFamily::StudentT: {
                const auto& rho = params.at("rho");
                if (!rho.is_array() || rho.size() != 3) throw std::invalid_argument("`rho` must hold three entries");
                Eigen::Matrix3d c;
                const double r12 = rho[0].get<double>(), r13 = rho[1].get<double>(), r23 = rho[2].get<double>();
                c << 1.0, r12, r13, r12, 1.0, r23, r13, r23, 1.0;
                if (family == CopulaFamily::Gauss) return CopulaModel::gauss(c);
                return CopulaModel::student_t(c, params.at("dof").get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("copula params: ") + e.what());
    }
    throw std::invalid_argument("unknown copula family");
}

}  // namespace copularisk
