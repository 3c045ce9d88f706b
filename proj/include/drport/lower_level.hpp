#pragma once

// Lower-level problem f(z): the worst-case regularized loss of the best
// portfolio supported on the selection z.
//
// The dual is posed on the k selected coordinates only (reduced dual), solved
// with the conic IPM, and then lifted back to all N coordinates by completing
// the off-support blocks through Sigma_{1-z,z} Sigma_{z,z}^{-1}. The lifted
// omega gives the cut gradient -(gamma/2) omega o omega.

#include "drport/conic.hpp"
#include "drport/model.hpp"

#include <string>
#include <vector>

namespace drport {

/// Solution of the reduced (or full) dual. Matrices live on the coordinates in
/// `index`; omega is indexed the same way.
struct LowerDualSolution {
    std::vector<int> index;
    Vector omega;
    std::vector<Matrix> B;
    std::vector<Vector> beta;
    Vector eta;
    Vector lambda;
    double pi = 0.0;
    double f_prime = 0.0;
    int iterations = 0;
};

struct LiftedDualSolution {
    Vector omega_bar;
    std::vector<Vector> beta_bar;
    Vector lambda_bar;
    std::vector<Matrix> B_bar;
    Vector eta;
    double pi = 0.0;
};

/// Residuals of the full dual constraints at a point, each already >= 0.
struct DualFeasibility {
    double omega_bound = 0.0;   ///< omega >= sum a beta + pi 1
    double b_balance = 0.0;     ///< sum B = kappa2 Sigma - mu mu^T + mu (sum beta)^T + (sum beta) mu^T
    double beta_balance = 0.0;  ///< sum beta = lambda + mu
    double eta_sum = 0.0;       ///< sum eta = 1
    double piece_psd = 0.0;     ///< [[B, beta], [beta^T, eta]] psd
    double moment_psd = 0.0;    ///< [[Sigma, lambda], [lambda^T, kappa1]] psd
    double completion_psd = 0.0; ///< kappa2 Sigma - sum (1/eta)(beta - eta mu)(beta - eta mu)^T psd

    double worst() const;
    std::string worst_name() const;
};

struct LowerPrimalSolution {
    Portfolio x;
    Matrix P, Q;
    Vector p, q;
    double r = 0.0;
    double s = 0.0;
    double objective = 0.0;
    int iterations = 0;
};

/// theta >= value + gradient^T (z' - anchor)
struct Cut {
    Selection anchor;
    double value = 0.0;
    Vector gradient;

    double evaluate(const Vector& z) const;
};

/// Pieces with eta at or below this get (B, beta) = 0 when lifting.
inline constexpr double kEtaFloor = 1e-9;
/// Absolute tolerance of lift certification, multiplied by `lift_scale`.
inline constexpr double kLiftTolerance = 1e-7;
/// Solver tolerance of the single retry after a NumericFailure or IterLimit.
inline constexpr double kRetryTolerance = 1e-7;

/// max(1, kappa2 |Sigma|_max, |mu|_max^2, kappa1): magnitude of the dual data.
double lift_scale(const Instance& instance);

conic::ConeProgram build_reduced_dual(const Instance& instance, const Selection& z);

LowerDualSolution solve_lower(const Instance& instance, const Selection& z, const conic::IpmSettings& settings = {});

/// Completes a reduced solution to all N coordinates; throws LiftInfeasible
/// when the result misses the full dual constraints by more than
/// kLiftTolerance * lift_scale.
LiftedDualSolution lift(const Instance& instance, const Selection& z, const LowerDualSolution& sol);

/// Constraint residuals of the full dual at a lifted point.
DualFeasibility full_dual_feasibility(const Instance& instance, const LiftedDualSolution& point);

/// Full dual objective -(gamma/2) z^T (omega o omega) - sum eta b + pi.
double full_dual_objective(const Instance& instance, const Selection& z, const LiftedDualSolution& point);

Cut subgradient_cut(const Instance& instance, const Selection& z, const LiftedDualSolution& lifted, double f_value);

/// The dual over all N coordinates. Off-support omega entries are set to
/// [sum a beta + pi]_+ after solving since they do not enter the objective.
LowerDualSolution solve_full_dual(const Instance& instance, const Selection& z,
                                  const conic::IpmSettings& settings = {});

/// Primal lower-level problem on the support of z_hat; x is embedded into
/// length N with zeros elsewhere.
LowerPrimalSolution recover_portfolio(const Instance& instance, const Selection& z_hat,
                                      const conic::IpmSettings& settings = {});

/// Primal lower-level problem with P, Q, p, q over all N coordinates and x
/// fixed to zero off the support.
LowerPrimalSolution solve_full_primal(const Instance& instance, const Selection& z,
                                      const conic::IpmSettings& settings = {});

/// solve_lower + lift + subgradient_cut.
struct LowerEvaluation {
    double value = 0.0;
    Cut cut;
    int iterations = 0;
};
LowerEvaluation evaluate_selection(const Instance& instance, const Selection& z,
                                   const conic::IpmSettings& settings = {});

} // namespace drport
