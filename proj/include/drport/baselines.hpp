#pragma once

// Cardinality-constrained mean-variance comparator
//
//     minimize x^T Sigma x  s.t.  mu^T x >= r, 1^T x = 1, x >= 0, |x|_0 <= k
//
// solved with the same cutting-plane master as the robust model. The value
// function g(z) of the QP with x_i <= z_i is convex in z, and a dual solution of
// the QP on the support gives its subgradient. Selections whose assets cannot
// reach the required return are excluded by no-good cuts.

#include "drport/conic.hpp"
#include "drport/model.hpp"
#include "drport/upper_level.hpp"

#include <optional>

namespace drport {

struct MeanVarianceSpec {
    Moments moments;
    double required_return = 0.0;
    int k = 1;
    /// Adds |x|^2 / (2 gamma_mv) to the objective when set.
    std::optional<double> gamma_mv;
};

struct MeanVarianceQp {
    bool feasible = false;
    Portfolio x; ///< full length N, zero off the support
    double objective = 0.0;
    double rho = 0.0; ///< multiplier of the return constraint
    double pi = 0.0;  ///< multiplier of the budget constraint
    Cut cut;          ///< valid only when feasible
};

void validate_mean_variance(const MeanVarianceSpec& spec);

/// The QP restricted to the support of z (any number of ones).
MeanVarianceQp solve_mean_variance_selection(const MeanVarianceSpec& spec, const Selection& z,
                                             const conic::IpmSettings& settings = {});

SolveResult solve_mean_variance(const MeanVarianceSpec& spec, const SolveConfig& config = {});

/// Lower quartile of the entries of mu, linear interpolation at rank 0.25 (N - 1).
double first_quartile_return(const Moments& moments);

} // namespace drport
