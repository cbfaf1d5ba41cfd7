#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "copularisk/risk_measures.hpp"

namespace copularisk {

// ---------------------------------------------------------------------------
// Davidon-Fletcher-Powell quasi-Newton minimization
// ---------------------------------------------------------------------------

using ScalarFunction = std::function<double(std::span<const double>)>;
using GradientFunction = std::function<std::vector<double>(std::span<const double>)>;

struct DfpOptions {
    /// Central-difference step for gradients.
    double gradient_step = 1e-4;
    /// Stop once the max-norm of the gradient falls below this.
    double tolerance = 1e-7;
    int max_iter = 500;
};

enum class DfpStatus { GradientTolerance, StepTolerance, LineSearchFailure, MaxIterations };

struct DfpResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    DfpStatus status = DfpStatus::MaxIterations;
    double gradient_norm = 0.0;  ///< max-norm of the gradient at x
};

std::vector<double> central_gradient(const ScalarFunction& f, std::span<const double> x, double step);

/// Inverse-Hessian DFP updates with a strong Wolfe line search (sufficient decrease plus
/// curvature). Trial points where f is not finite are rejected by the line search.
/// Throws std::domain_error when f is not finite at the start point.
DfpResult dfp_minimize(const ScalarFunction& f, std::vector<double> x0, const DfpOptions& options = {});
/// Same, with a caller-supplied gradient (options.gradient_step is then unused).
DfpResult dfp_minimize(const ScalarFunction& f, const GradientFunction& grad, std::vector<double> x0,
                       const DfpOptions& options = {});

// ---------------------------------------------------------------------------
// Constraint cases
// ---------------------------------------------------------------------------

/// Case 1: r fixed.  Case 2: r fixed, w1 in [0,1].  Case 3: r free.  Case 4: r free, w1 in [0,1].
struct CaseSpec {
    int case_id = 1;
    bool return_fixed = true;
    bool w1_boxed = false;
    std::optional<double> r;  ///< daily target, required iff return_fixed

    /// Flag pattern for `id` in 1..4; throws std::invalid_argument otherwise.
    static CaseSpec make(int id, std::optional<double> r = std::nullopt);
    void validate() const;
};

class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConstraintResiduals {
    double budget = 0.0;                 ///< sum(w) - 1
    std::optional<double> target_return; ///< E[Rp] - r, cases 1-2
    std::optional<double> box;           ///< distance of w1 outside [0,1], cases 2 and 4
};

struct OptimizationResult {
    int case_id = 0;
    RiskMeasure measure = RiskMeasure::Variance;
    PortfolioWeights weights = PortfolioWeights::naive();
    double achieved_r = 0.0;  ///< E[Rp] under the regime's scenario law, daily
    double objective = 0.0;   ///< tail risk is always reported in hard mode
    std::optional<double> upr;
    int iterations = 0;
    bool converged = false;
    ConstraintResiduals residuals;
};

/// Everything one regime's solves share: the discretized joint law and its derived inputs.
struct RegimeProblem {
    ScenarioSet scenarios;
    std::array<double, 3> mu{};  ///< E[F_i^-1(U)] under the scenario law
    TailSpec tail;
    double target_r = 0.0;  ///< daily target used by cases 1-2
    /// Realized daily return triplets of the regime; used for the UPR when non-empty.
    std::vector<ReturnTriplet> history;
};

RegimeProblem make_regime_problem(const Marginals& dists, const CopulaModel& model, const IntegrationConfig& cfg,
                                  double target_r, std::vector<ReturnTriplet> history = {});

struct SolverOptions {
    DfpOptions dfp;
    int random_starts = 5;
    std::uint64_t seed = 1;
    std::vector<double> penalty_schedule{1e2, 1e4, 1e6};
    std::vector<double> bandwidth_schedule{1e-2, 1e-3, 1e-4};
    /// A line-search failure still counts as converged when the (scaled) gradient max-norm is
    /// below this, or below the disagreement of step-h and step-2h difference gradients:
    /// gradients of sample-based objectives are not more accurate than that.
    double stationarity = 1e-4;
};

/// Objective of `measure` at `w` under `problem`; tail risk in the requested mode.
double evaluate_objective(RiskMeasure measure, const CaseSpec& spec, const RegimeProblem& problem,
                          std::span<const double, 3> w, TailMode mode = TailMode::Hard, double bandwidth = 1e-2);

/// Naive weights moved onto the case's feasible set (projection onto the return line for
/// cases 1-2, w1 clamped for the boxed cases). std::nullopt when the set is empty.
std::optional<PortfolioWeights> project_feasible(const CaseSpec& spec, const RegimeProblem& problem,
                                                 const PortfolioWeights& w);

/// Throws InfeasibleError when the constraints admit no portfolio.
OptimizationResult solve_case(const CaseSpec& spec, RiskMeasure measure, const RegimeProblem& problem,
                              const SolverOptions& options = {});

OptimizationResult solve_case(const CaseSpec& spec, RiskMeasure measure, const Marginals& dists,
                              const CopulaModel& model, const IntegrationConfig& cfg,
                              const SolverOptions& options = {});

// ---------------------------------------------------------------------------
// Batch
// ---------------------------------------------------------------------------

struct CellResult {
    int regime_id = 0;
    int case_id = 0;
    RiskMeasure measure = RiskMeasure::Variance;
    std::optional<OptimizationResult> result;
    std::string error;  ///< set when the cell failed

    bool ok() const { return result.has_value(); }
};

struct ResultMatrix {
    std::vector<CellResult> cells;

    const CellResult* find(int regime_id, int case_id, RiskMeasure measure) const;
    std::size_t failed() const;
    std::size_t not_converged() const;
};

/// One result per (regime x case x measure). Regimes need fitted copula parameters
/// (RegimeSpec::fixed_params); failures are recorded per cell.
ResultMatrix solve_all(const RegimeTable& regimes, const ReturnPanel& panel, std::span<const int> cases,
                       std::span<const RiskMeasure> measures, const IntegrationConfig& cfg,
                       const SolverOptions& options = {});

}  // namespace copularisk
