#pragma once

// Seeded random instances: mu uniform in [0, 2], Sigma = A^T A / N + 0.1 I
// with A uniform in [-1, 1]^{N x N}, so Sigma is positive definite by construction.

#include "drport/model.hpp"

#include <cstdint>

namespace drport {

struct SyntheticSpec {
    int n = 6;
    int k = 3;
    int pieces = 3; ///< tangent points spread evenly over [0, mu_max]
    double gamma = 1.0;
    double kappa1 = 1.0;
    double kappa2 = 4.0;
    double alpha = 10.0;
    std::uint64_t seed = 1;
};

Moments synthetic_moments(int n, std::uint64_t seed);

/// `pieces` evenly spaced tangent points on [0, mu_max] (just {0} for one piece).
std::vector<double> spread_tangent_points(double mu_max, int pieces);

Instance synthetic_instance(const SyntheticSpec& spec);

} // namespace drport
