#include "drport/synthetic.hpp"

#include "drport/error.hpp"

#include <random>

namespace drport {

Moments synthetic_moments(int n, std::uint64_t seed) {
    if (n < 1) {
        throw Error(ErrorCode::InvalidConfig, "synthetic instance needs n >= 1", "n");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mean_dist(0.0, 2.0);
    std::uniform_real_distribution<double> entry_dist(-1.0, 1.0);
    Moments m;
    m.mean.resize(n);
    for (int i = 0; i < n; ++i) {
        m.mean(i) = mean_dist(rng);
    }
    Matrix a(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            a(i, j) = entry_dist(rng);
        }
    }
    m.covariance = SymMatrix(a.transpose() * a / n + 0.1 * Matrix::Identity(n, n));
    return m;
}

std::vector<double> spread_tangent_points(double mu_max, int pieces) {
    if (pieces < 1) {
        throw Error(ErrorCode::InvalidConfig, "need at least one tangent point", "pieces");
    }
    std::vector<double> pts(pieces, 0.0);
    for (int l = 1; l < pieces; ++l) {
        pts[l] = mu_max * l / (pieces - 1);
    }
    return pts;
}

Instance synthetic_instance(const SyntheticSpec& spec) {
    Instance inst;
    inst.moments = synthetic_moments(spec.n, spec.seed);
    inst.ambiguity = {spec.kappa1, spec.kappa2};
    const double mu_max = inst.moments.mean.maxCoeff();
    inst.utility = build_utility_tangents(mu_max, spec.alpha, spread_tangent_points(mu_max, spec.pieces));
    inst.gamma = spec.gamma;
    inst.k = spec.k;
    validate_instance(inst);
    return inst;
}

} // namespace drport
