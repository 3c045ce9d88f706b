#include "drport/baselines.hpp"

#include "drport/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace drport {

namespace {

SymMatrix effective_covariance(const MeanVarianceSpec& spec) {
    Matrix m = spec.moments.covariance.matrix();
    if (spec.gamma_mv) {
        m.diagonal().array() += 0.5 / *spec.gamma_mv;
    }
    return SymMatrix(m);
}

conic::ConicSolution solve_checked(const conic::ConeProgram& p, const conic::IpmSettings& settings) {
    conic::ConicSolution sol = conic::solve(p, settings);
    if (sol.status == conic::Status::NumericFailure || sol.status == conic::Status::IterLimit) {
        conic::IpmSettings loose = settings;
        loose.feas_tol = std::max(settings.feas_tol, kRetryTolerance);
        loose.gap_tol = std::max(settings.gap_tol, kRetryTolerance);
        sol = conic::solve(p, loose);
    }
    return sol;
}

} // namespace

void validate_mean_variance(const MeanVarianceSpec& spec) {
    Instance probe;
    probe.moments = spec.moments;
    probe.utility.pieces = {UtilityPiece{}};
    probe.k = spec.k;
    validate_instance(probe);
    if (!std::isfinite(spec.required_return)) {
        throw Error(ErrorCode::InvalidConfig, "required return must be finite", "required_return");
    }
    if (spec.gamma_mv && !(*spec.gamma_mv > 0.0)) {
        throw Error(ErrorCode::InvalidGamma, "gamma_mv must be positive", "gamma_mv");
    }
}

MeanVarianceQp solve_mean_variance_selection(const MeanVarianceSpec& spec, const Selection& z,
                                             const conic::IpmSettings& settings) {
    const int n = spec.moments.n_assets();
    if (z.size() != n || z.count() < 1) {
        throw Error(ErrorCode::InvalidSelection, "selection must have length N and at least one asset",
                    z.to_string());
    }
    const std::vector<int> sup = z.support();
    const int k = static_cast<int>(sup.size());
    const Vector mu = spec.moments.mean;
    MeanVarianceQp out;
    out.x = Vector::Zero(n);
    double best_mu = -std::numeric_limits<double>::infinity();
    for (const int i : sup) {
        best_mu = std::max(best_mu, mu(i));
    }
    if (best_mu < spec.required_return) {
        return out;
    }

    const SymMatrix cov = effective_covariance(spec);
    const Matrix l = cholesky(cov.principal(sup));

    // Variables: x (k), excess e >= 0 with mu^T x - e = r, (t, 1/2, w) with w = L^T x.
    conic::ConeProgram p;
    const int xb = p.add_block(conic::Cone::NonNeg, k);
    const int eb = p.add_block(conic::Cone::NonNeg, 1);
    const int qb = p.add_block(conic::Cone::RotatedSecondOrder, k + 2);
    p.add_cost(p.var(qb, 0), 1.0);
    const int ret = p.add_row(spec.required_return);
    const int budget = p.add_row(1.0);
    for (int j = 0; j < k; ++j) {
        p.add_term(ret, p.var(xb, j), mu(sup[j]));
        p.add_term(budget, p.var(xb, j), 1.0);
    }
    p.add_term(ret, p.var(eb, 0), -1.0);
    p.add_term(p.add_row(0.5), p.var(qb, 1), 1.0);
    for (int j = 0; j < k; ++j) {
        const int row = p.add_row(0.0);
        p.add_term(row, p.var(qb, 2 + j), 1.0);
        for (int i = j; i < k; ++i) {
            p.add_term(row, p.var(xb, i), -l(i, j));
        }
    }

    const conic::ConicSolution sol = solve_checked(p, settings);
    if (sol.status == conic::Status::Infeasible) {
        return out;
    }
    if (sol.status != conic::Status::Optimal) {
        throw Error(ErrorCode::SolverFailure,
                    "mean-variance QP ended with " + std::string(conic::to_string(sol.status)), z.to_string());
    }
    for (int j = 0; j < k; ++j) {
        out.x(sup[j]) = std::max(0.0, sol.x(p.var(xb, j)));
    }
    out.x /= out.x.sum();
    out.feasible = true;
    out.objective = out.x.dot(cov.matrix() * out.x);
    out.rho = std::max(0.0, sol.y(ret));
    out.pi = sol.y(budget);

    // Off the support the bound x_i <= 0 carries [rho mu_i + pi - 2 (Sigma x)_i]_+.
    const Vector grad = 2.0 * cov.matrix() * out.x;
    out.cut.anchor = z;
    out.cut.value = out.objective;
    out.cut.gradient = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (!z[i]) {
            out.cut.gradient(i) = -std::max(0.0, out.rho * mu(i) + out.pi - grad(i));
        }
    }
    return out;
}

SolveResult solve_mean_variance(const MeanVarianceSpec& spec, const SolveConfig& config) {
    validate_mean_variance(spec);
    const int n = spec.moments.n_assets();
    if (spec.required_return > spec.moments.mean.maxCoeff()) {
        throw Error(ErrorCode::GloballyInfeasible, "required return exceeds every asset mean", "required_return");
    }
    const auto start = std::chrono::steady_clock::now();
    const MeanVarianceQp all = solve_mean_variance_selection(spec, Selection::all(n), config.ipm);
    if (!all.feasible) {
        throw Error(ErrorCode::GloballyInfeasible, "no portfolio reaches the required return", "required_return");
    }
    const SelectionOracle oracle = [&](const Selection& z) {
        MeanVarianceQp qp = solve_mean_variance_selection(spec, z, config.ipm);
        return OracleResult{qp.feasible, std::move(qp.cut)};
    };
    SolveResult res = run_cutting_plane(n, spec.k, all.objective, oracle, config);
    const MeanVarianceQp best = solve_mean_variance_selection(spec, res.selection, config.ipm);
    res.x = best.x;
    res.objective = best.objective;
    res.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

double first_quartile_return(const Moments& moments) {
    std::vector<double> v(moments.mean.data(), moments.mean.data() + moments.mean.size());
    if (v.empty()) {
        throw Error(ErrorCode::DimensionMismatch, "no assets");
    }
    std::sort(v.begin(), v.end());
    const double rank = 0.25 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace drport
