#include "drport/lower_level.hpp"

#include "drport/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace drport {

using conic::Cone;
using conic::ConeProgram;

namespace {

// Dual program over the coordinates `index`; omega (and its bound) exists only
// at the positions `omega_pos` within index.
struct DualLayout {
    ConeProgram program;
    std::vector<int> index;
    std::vector<int> omega_pos;
    int omega = -1;
    int epi = -1;
    int slack = -1;
    std::vector<int> pieces;
    int moment = -1;
    int pi = -1;
};

DualLayout build_dual(const Instance& inst, std::vector<int> index, std::vector<int> omega_pos) {
    DualLayout out;
    out.index = std::move(index);
    out.omega_pos = std::move(omega_pos);
    const int d = static_cast<int>(out.index.size());
    const int kk = static_cast<int>(out.omega_pos.size());
    const int L = inst.utility.size();
    const Vector& mu = inst.moments.mean;
    const SymMatrix& sigma = inst.moments.covariance;
    const double kappa1 = inst.ambiguity.kappa1;
    const double kappa2 = inst.ambiguity.kappa2;
    ConeProgram& p = out.program;

    out.omega = p.add_block(Cone::Free, kk);
    out.epi = p.add_block(Cone::RotatedSecondOrder, kk + 2);
    out.slack = p.add_block(Cone::NonNeg, kk);
    for (int l = 0; l < L; ++l) {
        out.pieces.push_back(p.add_block(Cone::Psd, d + 1));
    }
    out.moment = p.add_block(Cone::Psd, d + 1);
    out.pi = p.add_block(Cone::Free, 1);

    // minimize (gamma/2) t + sum eta b - pi
    p.add_cost(p.var(out.epi, 0), inst.gamma / 2.0);
    for (int l = 0; l < L; ++l) {
        p.add_cost_entry(out.pieces[l], d, d, inst.utility.pieces[l].intercept);
    }
    p.add_cost(p.var(out.pi, 0), -1.0);

    // (t, 1/2, omega) in the rotated cone: t >= |omega|^2
    p.add_term(p.add_row(0.5), p.var(out.epi, 1), 1.0);
    for (int i = 0; i < kk; ++i) {
        const int r = p.add_row(0.0);
        p.add_term(r, p.var(out.epi, 2 + i), 1.0);
        p.add_term(r, p.var(out.omega, i), -1.0);
    }
    // omega - slack - sum a beta - pi = 0
    for (int i = 0; i < kk; ++i) {
        const int r = p.add_row(0.0);
        p.add_term(r, p.var(out.omega, i), 1.0);
        p.add_term(r, p.var(out.slack, i), -1.0);
        for (int l = 0; l < L; ++l) {
            p.add_entry_term(r, out.pieces[l], out.omega_pos[i], d, -inst.utility.pieces[l].slope);
        }
        p.add_term(r, p.var(out.pi, 0), -1.0);
    }
    // sum B = kappa2 Sigma - mu mu^T + mu (sum beta)^T + (sum beta) mu^T
    for (int j = 0; j < d; ++j) {
        const double mj = mu(out.index[j]);
        for (int i = j; i < d; ++i) {
            const double mi = mu(out.index[i]);
            const int r = p.add_row(kappa2 * sigma(out.index[i], out.index[j]) - mi * mj);
            for (int l = 0; l < L; ++l) {
                p.add_entry_term(r, out.pieces[l], i, j, 1.0);
                if (i == j) {
                    p.add_entry_term(r, out.pieces[l], i, d, -2.0 * mi);
                } else {
                    p.add_entry_term(r, out.pieces[l], j, d, -mi);
                    p.add_entry_term(r, out.pieces[l], i, d, -mj);
                }
            }
        }
    }
    // sum beta - lambda = mu
    for (int i = 0; i < d; ++i) {
        const int r = p.add_row(mu(out.index[i]));
        for (int l = 0; l < L; ++l) {
            p.add_entry_term(r, out.pieces[l], i, d, 1.0);
        }
        p.add_entry_term(r, out.moment, i, d, -1.0);
    }
    // sum eta = 1
    {
        const int r = p.add_row(1.0);
        for (int l = 0; l < L; ++l) {
            p.add_entry_term(r, out.pieces[l], d, d, 1.0);
        }
    }
    // moment block [[Sigma, lambda], [lambda^T, kappa1]] with the data entries pinned
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) {
            p.add_entry_term(p.add_row(sigma(out.index[i], out.index[j])), out.moment, i, j, 1.0);
        }
    }
    p.add_entry_term(p.add_row(kappa1), out.moment, d, d, 1.0);
    return out;
}

LowerDualSolution extract_dual(const Instance& inst, const DualLayout& lay, const conic::ConicSolution& sol) {
    const ConeProgram& p = lay.program;
    const int d = static_cast<int>(lay.index.size());
    const int L = inst.utility.size();
    LowerDualSolution out;
    out.index = lay.index;
    out.omega = Vector::Zero(d);
    const Vector w = p.block_values(sol.x, lay.omega);
    for (int i = 0; i < static_cast<int>(lay.omega_pos.size()); ++i) {
        out.omega(lay.omega_pos[i]) = w(i);
    }
    out.eta.resize(L);
    for (int l = 0; l < L; ++l) {
        const Matrix X = p.psd_matrix(sol.x, lay.pieces[l]);
        out.B.push_back(X.topLeftCorner(d, d));
        out.beta.push_back(X.col(d).head(d));
        out.eta(l) = X(d, d);
    }
    out.lambda = p.psd_matrix(sol.x, lay.moment).col(d).head(d);
    out.pi = sol.x(p.var(lay.pi, 0));
    double penalty = 0.0;
    for (int pos : lay.omega_pos) {
        penalty += out.omega(pos) * out.omega(pos);
    }
    double eta_b = 0.0;
    for (int l = 0; l < L; ++l) {
        eta_b += out.eta(l) * inst.utility.pieces[l].intercept;
    }
    out.f_prime = -inst.gamma / 2.0 * penalty - eta_b + out.pi;
    out.iterations = sol.iterations;
    return out;
}

conic::ConicSolution solve_checked(const ConeProgram& program, const Selection& z, const conic::IpmSettings& settings,
                                   const char* what) {
    conic::ConicSolution sol = conic::solve(program, settings);
    if (sol.status == conic::Status::NumericFailure || sol.status == conic::Status::IterLimit) {
        // Accuracy floors near 1e-8 show up on a few ill-conditioned selections.
        conic::IpmSettings loose = settings;
        loose.feas_tol = std::max(settings.feas_tol, kRetryTolerance);
        loose.gap_tol = std::max(settings.gap_tol, kRetryTolerance);
        if (loose.feas_tol != settings.feas_tol || loose.gap_tol != settings.gap_tol) {
            sol = conic::solve(program, loose);
        }
    }
    if (sol.status != conic::Status::Optimal) {
        std::ostringstream msg;
        msg << what << " for selection " << z.to_string() << " ended with " << conic::to_string(sol.status);
        throw Error(ErrorCode::SolverFailure, msg.str(), z.to_string());
    }
    return sol;
}

std::vector<int> iota(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) {
        v[i] = i;
    }
    return v;
}

// Primal program: x on the selected assets, Y_l = [[Q, q/2 + a_l x/2], [., r + b_l]],
// V = [[P, p], [p^T, s]]. Q, q, r are read off Y_1 so only links to Y_1 are needed.
struct PrimalLayout {
    ConeProgram program;
    std::vector<int> index;
    std::vector<int> x_pos; ///< position within index of each selected asset
    int x = -1;
    int epi = -1;
    std::vector<int> pieces;
    int moment = -1;
};

PrimalLayout build_primal(const Instance& inst, std::vector<int> index, std::vector<int> x_pos) {
    PrimalLayout out;
    out.index = std::move(index);
    out.x_pos = std::move(x_pos);
    const int d = static_cast<int>(out.index.size());
    const int kk = static_cast<int>(out.x_pos.size());
    const int L = inst.utility.size();
    const Vector& mu = inst.moments.mean;
    const SymMatrix& sigma = inst.moments.covariance;
    const auto& pieces = inst.utility.pieces;
    ConeProgram& p = out.program;

    out.x = p.add_block(Cone::NonNeg, kk);
    out.epi = p.add_block(Cone::RotatedSecondOrder, kk + 2);
    for (int l = 0; l < L; ++l) {
        out.pieces.push_back(p.add_block(Cone::Psd, d + 1));
    }
    out.moment = p.add_block(Cone::Psd, d + 1);
    const int y1 = out.pieces[0];
    const int v = out.moment;

    std::vector<int> x_at(d, -1); // index position -> x slot
    for (int i = 0; i < kk; ++i) {
        x_at[out.x_pos[i]] = i;
    }

    // (1/(2 gamma)) u + (kappa2 Sigma - mu mu^T) . Q + r + Sigma . P - 2 mu^T p + kappa1 s   (r = Y1_dd - b_1)
    p.add_cost(p.var(out.epi, 0), 1.0 / (2.0 * inst.gamma));
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) {
            const int a = out.index[i];
            const int b = out.index[j];
            const double mult = i == j ? 1.0 : 2.0;
            p.add_cost_entry(y1, i, j, mult * (inst.ambiguity.kappa2 * sigma(a, b) - mu(a) * mu(b)));
            p.add_cost_entry(v, i, j, mult * sigma(a, b));
        }
        p.add_cost_entry(v, j, d, -2.0 * mu(out.index[j]));
    }
    p.add_cost_entry(y1, d, d, 1.0);
    p.add_cost_entry(v, d, d, inst.ambiguity.kappa1);

    {
        const int r = p.add_row(1.0);
        for (int i = 0; i < kk; ++i) {
            p.add_term(r, p.var(out.x, i), 1.0);
        }
    }
    p.add_term(p.add_row(0.5), p.var(out.epi, 1), 1.0);
    for (int i = 0; i < kk; ++i) {
        const int r = p.add_row(0.0);
        p.add_term(r, p.var(out.epi, 2 + i), 1.0);
        p.add_term(r, p.var(out.x, i), -1.0);
    }
    for (int l = 1; l < L; ++l) {
        const int yl = out.pieces[l];
        for (int j = 0; j < d; ++j) {
            for (int i = j; i < d; ++i) {
                const int r = p.add_row(0.0);
                p.add_entry_term(r, yl, i, j, 1.0);
                p.add_entry_term(r, y1, i, j, -1.0);
            }
        }
        for (int i = 0; i < d; ++i) {
            const int r = p.add_row(0.0);
            p.add_entry_term(r, yl, i, d, 1.0);
            p.add_entry_term(r, y1, i, d, -1.0);
            if (x_at[i] >= 0) {
                p.add_term(r, p.var(out.x, x_at[i]), -(pieces[l].slope - pieces[0].slope) / 2.0);
            }
        }
        const int r = p.add_row(pieces[l].intercept - pieces[0].intercept);
        p.add_entry_term(r, yl, d, d, 1.0);
        p.add_entry_term(r, y1, d, d, -1.0);
    }
    // p = -q/2 - Q mu with q/2 = Y1_{.d} - a_1 x/2
    for (int i = 0; i < d; ++i) {
        const int r = p.add_row(0.0);
        p.add_entry_term(r, v, i, d, 1.0);
        p.add_entry_term(r, y1, i, d, 1.0);
        if (x_at[i] >= 0) {
            p.add_term(r, p.var(out.x, x_at[i]), -pieces[0].slope / 2.0);
        }
        for (int j = 0; j < d; ++j) {
            p.add_entry_term(r, y1, i, j, mu(out.index[j]));
        }
    }
    return out;
}

LowerPrimalSolution extract_primal(const Instance& inst, const PrimalLayout& lay, const conic::ConicSolution& sol) {
    const ConeProgram& p = lay.program;
    const int d = static_cast<int>(lay.index.size());
    const int n = inst.n();
    LowerPrimalSolution out;
    out.x = Vector::Zero(n);
    const Vector xs = p.block_values(sol.x, lay.x);
    Vector x_local = Vector::Zero(d);
    for (int i = 0; i < static_cast<int>(lay.x_pos.size()); ++i) {
        out.x(lay.index[lay.x_pos[i]]) = xs(i);
        x_local(lay.x_pos[i]) = xs(i);
    }
    const Matrix Y1 = p.psd_matrix(sol.x, lay.pieces[0]);
    const Matrix V = p.psd_matrix(sol.x, lay.moment);
    const double a1 = inst.utility.pieces[0].slope;
    out.Q = Y1.topLeftCorner(d, d);
    out.q = 2.0 * Y1.col(d).head(d) - a1 * x_local;
    out.r = Y1(d, d) - inst.utility.pieces[0].intercept;
    out.P = V.topLeftCorner(d, d);
    out.p = V.col(d).head(d);
    out.s = V(d, d);
    Vector mu_local(d);
    Matrix sigma_local(d, d);
    for (int i = 0; i < d; ++i) {
        mu_local(i) = inst.moments.mean(lay.index[i]);
        for (int j = 0; j < d; ++j) {
            sigma_local(i, j) = inst.moments.covariance(lay.index[i], lay.index[j]);
        }
    }
    const Matrix C = inst.ambiguity.kappa2 * sigma_local - mu_local * mu_local.transpose();
    out.objective = xs.squaredNorm() / (2.0 * inst.gamma) + (C.cwiseProduct(out.Q)).sum() + out.r +
                    (sigma_local.cwiseProduct(out.P)).sum() - 2.0 * mu_local.dot(out.p) +
                    inst.ambiguity.kappa1 * out.s;
    out.iterations = sol.iterations;
    return out;
}

// A piece is left out of the completion only when both its weight and its
// first-moment block are negligible; a tiny eta can still carry a beta far above
// the feasibility tolerance, and zeroing that beta would break sum beta = lambda + mu.
bool dropped_piece(double eta, const Vector& beta) {
    return eta <= kEtaFloor && (beta.size() == 0 || beta.cwiseAbs().maxCoeff() <= kEtaFloor);
}

double psd_violation(const Matrix& m) { return std::max(0.0, -min_eigenvalue(m)); }

Matrix augmented(const Matrix& top, const Vector& col, double corner) {
    const auto d = top.rows();
    Matrix m(d + 1, d + 1);
    m.topLeftCorner(d, d) = top;
    m.col(d).head(d) = col;
    m.row(d).head(d) = col.transpose();
    m(d, d) = corner;
    return m;
}

} // namespace

double DualFeasibility::worst() const {
    return std::max({omega_bound, b_balance, beta_balance, eta_sum, piece_psd, moment_psd, completion_psd});
}

std::string DualFeasibility::worst_name() const {
    const std::array<std::pair<double, const char*>, 7> all{{{omega_bound, "omega bound"},
                                                            {b_balance, "B balance"},
                                                            {beta_balance, "beta balance"},
                                                            {eta_sum, "eta sum"},
                                                            {piece_psd, "piece psd"},
                                                            {moment_psd, "moment psd"},
                                                            {completion_psd, "completion psd"}}};
    return std::max_element(all.begin(), all.end(), [](auto a, auto b) { return a.first < b.first; })->second;
}

double Cut::evaluate(const Vector& z) const { return value + gradient.dot(z - anchor.as_vector()); }

double lift_scale(const Instance& instance) {
    const double mu = instance.moments.mean.cwiseAbs().maxCoeff();
    return std::max({1.0, instance.ambiguity.kappa2 * instance.moments.covariance.max_abs(), mu * mu,
                     instance.ambiguity.kappa1});
}

ConeProgram build_reduced_dual(const Instance& instance, const Selection& z) {
    validate_instance(instance);
    check_selection(instance, z);
    return build_dual(instance, z.support(), iota(z.count())).program;
}

LowerDualSolution solve_lower(const Instance& instance, const Selection& z, const conic::IpmSettings& settings) {
    validate_instance(instance);
    check_selection(instance, z);
    const DualLayout lay = build_dual(instance, z.support(), iota(z.count()));
    return extract_dual(instance, lay, solve_checked(lay.program, z, settings, "reduced dual"));
}

LowerDualSolution solve_full_dual(const Instance& instance, const Selection& z, const conic::IpmSettings& settings) {
    validate_instance(instance);
    check_selection(instance, z);
    const DualLayout lay = build_dual(instance, iota(instance.n()), z.support());
    LowerDualSolution out = extract_dual(instance, lay, solve_checked(lay.program, z, settings, "full dual"));
    for (int n : z.complement()) {
        double v = out.pi;
        for (int l = 0; l < instance.utility.size(); ++l) {
            v += instance.utility.pieces[l].slope * out.beta[l](n);
        }
        out.omega(n) = std::max(0.0, v);
    }
    return out;
}

LiftedDualSolution lift(const Instance& instance, const Selection& z, const LowerDualSolution& sol) {
    const int n = instance.n();
    const int L = instance.utility.size();
    const std::vector<int> on = z.support();
    const std::vector<int> off = z.complement();
    const int k = static_cast<int>(on.size());
    if (static_cast<int>(sol.index.size()) != k || sol.index != on) {
        throw Error(ErrorCode::DimensionMismatch, "lift: solution is not on the support of z");
    }
    const Vector& mu = instance.moments.mean;
    const SymMatrix& sigma = instance.moments.covariance;

    // K = Sigma_{off,on} Sigma_{on,on}^{-1}, via a Cholesky solve on the k x k block
    Matrix K(off.size(), k);
    if (!off.empty()) {
        Matrix cross(k, off.size());
        for (int i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < off.size(); ++j) {
                cross(i, j) = sigma(on[i], off[j]);
            }
        }
        K = solve_posdef(sigma.principal(on), cross).transpose();
    }
    Vector mu_on(k), mu_off(off.size());
    for (int i = 0; i < k; ++i) {
        mu_on(i) = mu(on[i]);
    }
    for (std::size_t j = 0; j < off.size(); ++j) {
        mu_off(j) = mu(off[j]);
    }
    const auto scatter = [&](const Vector& head, const Vector& tail) {
        Vector full(n);
        for (int i = 0; i < k; ++i) {
            full(on[i]) = head(i);
        }
        for (std::size_t j = 0; j < off.size(); ++j) {
            full(off[j]) = tail(j);
        }
        return full;
    };

    LiftedDualSolution out;
    out.eta = sol.eta;
    out.pi = sol.pi;
    Vector beta_sum = Vector::Zero(n);
    for (int l = 0; l < L; ++l) {
        const double eta = sol.eta(l);
        Vector b = scatter(sol.beta[l], K * (sol.beta[l] - eta * mu_on) + eta * mu_off);
        if (dropped_piece(eta, b)) {
            b.setZero();
        }
        beta_sum += b;
        out.beta_bar.push_back(std::move(b));
    }
    out.lambda_bar = scatter(sol.lambda, K * sol.lambda);

    Vector bound = Vector::Constant(n, sol.pi);
    for (int l = 0; l < L; ++l) {
        bound += instance.utility.pieces[l].slope * out.beta_bar[l];
    }
    out.omega_bar = Vector::Zero(n);
    for (int i = 0; i < k; ++i) {
        out.omega_bar(on[i]) = sol.omega(i);
    }
    for (int j : off) {
        out.omega_bar(j) = std::max(0.0, bound(j));
    }

    const Matrix rhs = instance.ambiguity.kappa2 * sigma.matrix() - mu * mu.transpose() + mu * beta_sum.transpose() +
                       beta_sum * mu.transpose();
    Matrix tilde_sum = Matrix::Zero(n, n);
    for (int l = 0; l < L; ++l) {
        Matrix bl = Matrix::Zero(n, n);
        if (!dropped_piece(sol.eta(l), out.beta_bar[l])) {
            bl = out.beta_bar[l] * out.beta_bar[l].transpose() / sol.eta(l);
        }
        tilde_sum += bl;
        out.B_bar.push_back(std::move(bl));
    }
    out.B_bar[0] += rhs - tilde_sum;

    const DualFeasibility feas = full_dual_feasibility(instance, out);
    const double tol = kLiftTolerance * lift_scale(instance);
    if (!(feas.worst() <= tol)) {
        std::ostringstream msg;
        msg << "lifted dual point for " << z.to_string() << " violates " << feas.worst_name() << " by "
            << feas.worst() << " (tolerance " << tol << ")";
        throw Error(ErrorCode::LiftInfeasible, msg.str(), feas.worst_name());
    }
    return out;
}

DualFeasibility full_dual_feasibility(const Instance& instance, const LiftedDualSolution& pt) {
    const int n = instance.n();
    const int L = instance.utility.size();
    const Vector& mu = instance.moments.mean;
    const SymMatrix& sigma = instance.moments.covariance;
    DualFeasibility f;

    Vector bound = Vector::Constant(n, pt.pi);
    Vector beta_sum = Vector::Zero(n);
    Matrix b_sum = Matrix::Zero(n, n);
    for (int l = 0; l < L; ++l) {
        bound += instance.utility.pieces[l].slope * pt.beta_bar[l];
        beta_sum += pt.beta_bar[l];
        b_sum += pt.B_bar[l];
    }
    f.omega_bound = std::max(0.0, (bound - pt.omega_bar).maxCoeff());
    const Matrix rhs = instance.ambiguity.kappa2 * sigma.matrix() - mu * mu.transpose() + mu * beta_sum.transpose() +
                       beta_sum * mu.transpose();
    f.b_balance = (b_sum - rhs).cwiseAbs().maxCoeff();
    f.beta_balance = (beta_sum - pt.lambda_bar - mu).cwiseAbs().maxCoeff();
    f.eta_sum = std::abs(pt.eta.sum() - 1.0);
    for (int l = 0; l < L; ++l) {
        f.piece_psd = std::max(f.piece_psd, psd_violation(augmented(pt.B_bar[l], pt.beta_bar[l], pt.eta(l))));
    }
    f.moment_psd = psd_violation(augmented(sigma.matrix(), pt.lambda_bar, instance.ambiguity.kappa1));
    Matrix completion = instance.ambiguity.kappa2 * sigma.matrix();
    for (int l = 0; l < L; ++l) {
        if (!dropped_piece(pt.eta(l), pt.beta_bar[l])) {
            const Vector dev = pt.beta_bar[l] - pt.eta(l) * mu;
            completion -= dev * dev.transpose() / pt.eta(l);
        }
    }
    f.completion_psd = psd_violation(completion);
    return f;
}

double full_dual_objective(const Instance& instance, const Selection& z, const LiftedDualSolution& pt) {
    double value = pt.pi;
    for (int i : z.support()) {
        value -= instance.gamma / 2.0 * pt.omega_bar(i) * pt.omega_bar(i);
    }
    for (int l = 0; l < instance.utility.size(); ++l) {
        value -= pt.eta(l) * instance.utility.pieces[l].intercept;
    }
    return value;
}

Cut subgradient_cut(const Instance& instance, const Selection& z, const LiftedDualSolution& lifted, double f_value) {
    Cut c;
    c.anchor = z;
    c.value = f_value;
    c.gradient = -(instance.gamma / 2.0) * lifted.omega_bar.cwiseProduct(lifted.omega_bar);
    return c;
}

LowerPrimalSolution recover_portfolio(const Instance& instance, const Selection& z_hat,
                                      const conic::IpmSettings& settings) {
    validate_instance(instance);
    check_selection(instance, z_hat);
    const PrimalLayout lay = build_primal(instance, z_hat.support(), iota(z_hat.count()));
    return extract_primal(instance, lay, solve_checked(lay.program, z_hat, settings, "primal lower level"));
}

LowerPrimalSolution solve_full_primal(const Instance& instance, const Selection& z,
                                      const conic::IpmSettings& settings) {
    validate_instance(instance);
    check_selection(instance, z);
    const PrimalLayout lay = build_primal(instance, iota(instance.n()), z.support());
    return extract_primal(instance, lay, solve_checked(lay.program, z, settings, "full primal lower level"));
}

LowerEvaluation evaluate_selection(const Instance& instance, const Selection& z, const conic::IpmSettings& settings) {
    const LowerDualSolution sol = solve_lower(instance, z, settings);
    const LiftedDualSolution lifted = lift(instance, z, sol);
    LowerEvaluation ev;
    ev.value = sol.f_prime;
    ev.cut = subgradient_cut(instance, z, lifted, sol.f_prime);
    ev.iterations = sol.iterations;
    return ev;
}

} // namespace drport
