#include "doctest.h"

#include "drport/baselines.hpp"
#include "drport/error.hpp"
#include "drport/synthetic.hpp"
#include "oracles.hpp"

#include <bit>
#include <cmath>
#include <random>

using namespace drport;
using namespace drport::testing;

namespace {

double mv_enumeration(const MeanVarianceSpec& spec) {
    const int n = spec.moments.n_assets();
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != spec.k) {
            continue;
        }
        std::vector<int> sup;
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                sup.push_back(i);
            }
        }
        best = std::min(best, qp_by_active_sets(spec.moments, spec.required_return, sup));
    }
    return best;
}

MeanVarianceSpec spec_for(int n, int k, std::uint64_t seed) {
    MeanVarianceSpec spec;
    spec.moments = synthetic_moments(n, seed);
    spec.required_return = first_quartile_return(spec.moments);
    spec.k = k;
    return spec;
}

} // namespace

TEST_CASE("first quartile uses linear interpolation at rank 0.25(N-1)") {
    Moments m;
    m.mean = (Vector(5) << 5, 1, 4, 2, 3).finished();
    CHECK(first_quartile_return(m) == 2.0);
    m.mean = (Vector(4) << 4, 3, 2, 1).finished();
    CHECK(first_quartile_return(m) == doctest::Approx(1.75));
    m.mean = (Vector(1) << 7).finished();
    CHECK(first_quartile_return(m) == 7.0);
}

TEST_CASE("identity covariance with equal means gives the uniform portfolio") {
    MeanVarianceSpec spec;
    spec.moments.mean = Vector::Constant(4, 0.3);
    spec.moments.covariance = SymMatrix::identity(4);
    spec.required_return = 0.3;
    spec.k = 4;
    const SolveResult r = solve_mean_variance(spec);
    CHECK(r.objective == doctest::Approx(0.25).epsilon(1e-7));
    for (int i = 0; i < 4; ++i) {
        CHECK(r.x(i) == doctest::Approx(0.25).epsilon(1e-6));
    }
}

TEST_CASE("required return above every mean is globally infeasible") {
    MeanVarianceSpec spec = spec_for(5, 2, 3);
    spec.required_return = spec.moments.mean.maxCoeff() + 0.01;
    try {
        solve_mean_variance(spec);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GloballyInfeasible);
    }
}

TEST_CASE("selection QP matches the active-set oracle") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 6;
        MeanVarianceSpec spec = spec_for(n, 3, 100 + trial);
        std::vector<int> idx{0, 1, 2, 3, 4, 5};
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(1 + trial % 4);
        const Selection z = Selection::from_support(n, idx);
        const MeanVarianceQp qp = solve_mean_variance_selection(spec, z);
        const double oracle = qp_by_active_sets(spec.moments, spec.required_return, z.support());
        CAPTURE(trial);
        CHECK(qp.feasible == std::isfinite(oracle));
        if (qp.feasible) {
            CHECK(qp.objective == doctest::Approx(oracle).epsilon(1e-6));
            CHECK(spec.moments.mean.dot(qp.x) >= spec.required_return - 1e-8);
            CHECK(qp.x.sum() == doctest::Approx(1.0));
            CHECK(qp.x.minCoeff() >= 0.0);
        }
    }
}

TEST_CASE("mean-variance cuts underestimate the value function") {
    const int n = 7;
    const MeanVarianceSpec spec = spec_for(n, 3, 17);
    std::vector<MeanVarianceQp> qps;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        if (std::popcount(mask) == 3) {
            std::vector<int> sup;
            for (int i = 0; i < n; ++i) {
                if (mask & (1u << i)) {
                    sup.push_back(i);
                }
            }
            qps.push_back(solve_mean_variance_selection(spec, Selection::from_support(n, sup)));
        }
    }
    int checked = 0;
    for (const MeanVarianceQp& a : qps) {
        if (!a.feasible) {
            continue;
        }
        for (const MeanVarianceQp& b : qps) {
            if (b.feasible) {
                CHECK(b.objective >= a.cut.evaluate(b.cut.anchor.as_vector()) - 1e-6);
                ++checked;
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("mean-variance solver matches enumeration and is monotone in k") {
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
        double previous = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 6; ++k) {
            const MeanVarianceSpec spec = spec_for(6, k, seed);
            const double oracle = mv_enumeration(spec);
            for (const SolveMode mode : {SolveMode::Iterative, SolveMode::SingleTree}) {
                SolveConfig config;
                config.mode = mode;
                config.epsilon = 1e-8;
                const SolveResult r = solve_mean_variance(spec, config);
                CAPTURE(seed);
                CAPTURE(k);
                CHECK(std::abs(r.objective - oracle) <= 1e-6 * (1.0 + oracle));
                CHECK(r.selection.count() == k);
                CHECK(spec.moments.mean.dot(r.x) >= spec.required_return - 1e-8);
            }
            CHECK(oracle <= previous + 1e-12);
            previous = oracle;
        }
    }
}

TEST_CASE("k = N equals the unconstrained QP") {
    const MeanVarianceSpec spec = spec_for(6, 6, 4);
    const SolveResult r = solve_mean_variance(spec);
    const double direct = qp_by_active_sets(spec.moments, spec.required_return, {0, 1, 2, 3, 4, 5});
    CHECK(r.objective == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("regularized variant adds the ridge term") {
    MeanVarianceSpec spec = spec_for(5, 5, 2);
    const double base = solve_mean_variance(spec).objective;
    spec.gamma_mv = 1.0;
    const SolveResult r = solve_mean_variance(spec);
    CHECK(r.objective > base);
    CHECK_THROWS_AS(solve_mean_variance(MeanVarianceSpec{spec.moments, 0.0, 2, -1.0}), Error);
}
