#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace copularisk {

enum class CopulaFamily { Clayton, Frank, Gumbel, Gauss, StudentT };

inline constexpr std::array<CopulaFamily, 5> kAllFamilies{
    CopulaFamily::Clayton, CopulaFamily::Frank, CopulaFamily::Gumbel,
    CopulaFamily::Gauss, CopulaFamily::StudentT};

/// Config labels: "clayton", "frank", "gumbel", "gauss", "student_t".
std::string_view to_string(CopulaFamily family);
std::optional<CopulaFamily> parse_family(std::string_view text);

bool is_archimedean(CopulaFamily family);
/// Free parameter count used by the AIC: 1 Archimedean, 3 Gauss, 4 StudentT.
int parameter_count(CopulaFamily family);

/// A point of the open unit cube (u, v, w).
using UnitPoint = std::array<double, 3>;

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Trivariate copula. Archimedean families are exchangeable with one parameter;
/// the elliptical families carry a full 3x3 correlation matrix.
///
/// Parameter domains: Clayton theta > 0, Frank theta > 0, Gumbel theta >= 1,
/// Gauss/StudentT correlation positive-definite with unit diagonal, StudentT dof > 2.
/// Construction throws std::invalid_argument outside these domains.
class CopulaModel {
public:
    static CopulaModel clayton(double theta);
    static CopulaModel frank(double theta);
    static CopulaModel gumbel(double theta);
    static CopulaModel gauss(const Eigen::Matrix3d& corr);
    /// Off-diagonals ordered (sp500-oil, sp500-gas, oil-gas).
    static CopulaModel gauss(double rho12, double rho13, double rho23);
    static CopulaModel student_t(const Eigen::Matrix3d& corr, double dof);
    static CopulaModel independence();

    CopulaFamily family() const { return family_; }
    double theta() const { return theta_; }
    const Eigen::Matrix3d& corr() const { return corr_; }
    double dof() const { return dof_; }

    // Precomputed for the elliptical families.
    const Eigen::Matrix3d& corr_inverse() const { return corr_inv_; }
    const Eigen::Matrix3d& corr_cholesky() const { return chol_; }
    double corr_log_det() const { return log_det_; }

private:
    CopulaModel() = default;
    void prepare_elliptical();

    CopulaFamily family_ = CopulaFamily::Gauss;
    double theta_ = 0.0;
    Eigen::Matrix3d corr_ = Eigen::Matrix3d::Identity();
    double dof_ = 0.0;
    Eigen::Matrix3d corr_inv_ = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d chol_ = Eigen::Matrix3d::Identity();
    double log_det_ = 0.0;
};

/// Copula density c(u, v, w). Arguments must lie strictly inside (0,1).
double density(const CopulaModel& m, double u, double v, double w);
double log_density(const CopulaModel& m, double u, double v, double w);

inline constexpr double kBoundaryClamp = 1e-12;

/// Clamps each coordinate to [1e-12, 1 - 1e-12]; returns the number of coordinates moved.
int clamp_to_interior(UnitPoint& p);

/// Copula CDF C(u, v, w) on the closed cube. Closed form for the Archimedean
/// families; the elliptical families integrate with a randomized lattice rule
/// (absolute error well below 1e-4).
double cdf(const CopulaModel& m, double u, double v, double w);

/// Deterministic for fixed (model, count, seed); every coordinate lies in (0,1).
std::vector<UnitPoint> sample(const CopulaModel& m, std::size_t count, std::uint64_t seed);

/// Pairwise Kendall's tau of two columns (tau-b, O(n^2)).
double kendall_tau(std::span<const double> x, std::span<const double> y);
/// Average of the three pairwise Kendall taus.
double mean_kendall_tau(std::span<const UnitPoint> obs);

/// One-parameter Archimedean theta implied by Kendall's tau (clipped to the family domain).
double theta_from_tau(CopulaFamily family, double tau);
double tau_from_theta(CopulaFamily family, double theta);

double log_likelihood(const CopulaModel& m, std::span<const UnitPoint> obs);

/// Pseudo-maximum-likelihood fit. Requires at least 30 strictly interior observations.
/// Throws FitError on degenerate input or non-convergence.
CopulaModel fit_ml(std::span<const UnitPoint> obs, CopulaFamily family);

struct FamilyScore {
    CopulaFamily family{};
    std::optional<CopulaModel> model;
    double log_likelihood = 0.0;
    double aic = 0.0;
    std::string error;  ///< Non-empty when the fit failed; the family is then skipped.
};

struct SelectionResult {
    CopulaModel best = CopulaModel::independence();
    std::vector<FamilyScore> scores;
};

/// Fits every requested family and keeps the one with the lowest AIC = 2k - 2 loglik.
/// Throws FitError only if all fits fail.
SelectionResult select(std::span<const UnitPoint> obs, std::span<const CopulaFamily> families);

/// Parameter object of the regime config: {"theta": x} or {"rho": [r12, r13, r23], "dof": nu}.
nlohmann::json params_to_json(const CopulaModel& m);
CopulaModel params_from_json(CopulaFamily family, const nlohmann::json& params);

}  // namespace copularisk
