// Homogeneous self-dual interior-point method with Nesterov-Todd scaling.
//
// Embedding (x, y, s, tau, kappa):
//     A x - b tau = 0,   A^T y + s - c tau = 0 (s = 0 on free blocks),
//     b^T y - c^T x - kappa = 0,   x, s in K,   tau, kappa >= 0.
// The scaling W maps both points to the same scaled point: W x = W^{-T} s = lambda.

#include "drport/conic.hpp"

#include "drport/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

namespace drport::conic {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStepFraction = 0.99;
constexpr double kRetryRegularization = 1e-8;
constexpr int kRefinementSteps = 6;
constexpr int kStallIterations = 6;
constexpr double kPolish = 0.1;

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class Kind { NonNeg, Soc, Psd };

Matrix smat(const Vector& v, int d) {
    Matrix m(d, d);
    int idx = 0;
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i, ++idx) {
            const double val = i == j ? v(idx) : v(idx) * kInvSqrt2;
            m(i, j) = val;
            m(j, i) = val;
        }
    }
    return m;
}

Vector svec(const Matrix& m) {
    const int d = static_cast<int>(m.rows());
    Vector v(d * (d + 1) / 2);
    int idx = 0;
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i, ++idx) {
            v(idx) = i == j ? m(i, j) : 0.5 * (m(i, j) + m(j, i)) * kSqrt2;
        }
    }
    return v;
}

double min_sym_eigenvalue(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

struct RowEntries {
    int row;
    std::vector<std::pair<int, double>> terms; // (local scalar index, coefficient)
};

struct PsdTerm {
    int a;
    int b;
    double weight; // coefficient times the basis normalization
};

struct ConeState {
    Kind kind = Kind::NonNeg;
    int size = 0;
    int offset = 0;
    int length = 0;
    bool rotated = false;

    Vector w;       // NonNeg: W = diag(w)
    Matrix W, Winv; // Soc: symmetric
    Matrix R, Rti;  // Psd: W(X) = R^T X R and Rti = R^{-T}
    Vector eig;     // Psd: diagonal of the scaled point
    Vector lambda;  // scaled point in block storage

    std::vector<RowEntries> rows;
    std::vector<std::vector<PsdTerm>> psd_terms;                 // Psd, parallel to rows
    std::vector<std::vector<std::pair<int, double>>> columns;    // NonNeg: (row, coeff)

    int degree() const {
        switch (kind) {
        case Kind::NonNeg: return size;
        case Kind::Soc: return 1;
        case Kind::Psd: return size;
        }
        return 0;
    }
};

// ---- cone geometry -------------------------------------------------------

Vector identity_element(const ConeState& c) {
    Vector e = Vector::Zero(c.length);
    switch (c.kind) {
    case Kind::NonNeg: e.setOnes(); break;
    case Kind::Soc: e(0) = 1.0; break;
    case Kind::Psd: e = svec(Matrix::Identity(c.size, c.size)); break;
    }
    return e;
}

// Smallest "eigenvalue" of v in the Jordan algebra of the cone.
double cone_min_eig(const ConeState& c, const Vector& v) {
    switch (c.kind) {
    case Kind::NonNeg: return v.minCoeff();
    case Kind::Soc: return v(0) - (c.length > 1 ? v.tail(c.length - 1).norm() : 0.0);
    case Kind::Psd: return min_sym_eigenvalue(smat(v, c.size));
    }
    return 0.0;
}

double soc_jnorm(const Vector& u) {
    const double t = u.size() > 1 ? u.tail(u.size() - 1).norm() : 0.0;
    const double prod = (u(0) - t) * (u(0) + t);
    return prod > 0.0 ? std::sqrt(prod) : 0.0;
}

// Largest alpha with x + alpha d in the second-order cone (x interior).
double soc_max_step(const Vector& x, const Vector& d) {
    const int n = static_cast<int>(x.size());
    const double a = d(0) * d(0) - (n > 1 ? d.tail(n - 1).squaredNorm() : 0.0);
    const double b = x(0) * d(0) - (n > 1 ? x.tail(n - 1).dot(d.tail(n - 1)) : 0.0);
    const double c = x(0) * x(0) - (n > 1 ? x.tail(n - 1).squaredNorm() : 0.0);
    double step = kInf;
    // x0 + alpha d0 >= 0
    if (d(0) < 0.0) {
        step = -x(0) / d(0);
    }
    if (a >= 0.0 && b >= 0.0) {
        return step;
    }
    const double disc = b * b - a * c;
    if (disc < 0.0) {
        return step;
    }
    // smallest positive root of a t^2 + 2 b t + c = 0
    double root;
    if (b < 0.0) {
        root = c / (-b + std::sqrt(disc));
    } else {
        root = (a < 0.0) ? (-b - std::sqrt(disc)) / a : kInf;
    }
    if (root > 0.0) {
        step = std::min(step, root);
    }
    return step;
}

double max_scaled_step(const ConeState& c, const Vector& d) {
    switch (c.kind) {
    case Kind::NonNeg: {
        double step = kInf;
        for (int i = 0; i < c.length; ++i) {
            if (d(i) < 0.0) {
                step = std::min(step, -c.lambda(i) / d(i));
            }
        }
        return step;
    }
    case Kind::Soc:
        return soc_max_step(c.lambda, d);
    case Kind::Psd: {
        Matrix m = smat(d, c.size);
        const Vector inv_sqrt = c.eig.cwiseSqrt().cwiseInverse();
        m = inv_sqrt.asDiagonal() * m * inv_sqrt.asDiagonal();
        const double e = min_sym_eigenvalue(m);
        return e < 0.0 ? -1.0 / e : kInf;
    }
    }
    return kInf;
}

// Jordan product a o b.
Vector jordan_product(const ConeState& c, const Vector& a, const Vector& b) {
    switch (c.kind) {
    case Kind::NonNeg:
        return a.cwiseProduct(b);
    case Kind::Soc: {
        Vector out(c.length);
        out(0) = a.dot(b);
        if (c.length > 1) {
            out.tail(c.length - 1) = a(0) * b.tail(c.length - 1) + b(0) * a.tail(c.length - 1);
        }
        return out;
    }
    case Kind::Psd: {
        const Matrix am = smat(a, c.size);
        const Matrix bm = smat(b, c.size);
        return svec(0.5 * (am * bm + bm * am));
    }
    }
    return {};
}

// Solves lambda o v = r for v.
Vector lambda_solve(const ConeState& c, const Vector& r) {
    const Vector& l = c.lambda;
    switch (c.kind) {
    case Kind::NonNeg:
        return r.cwiseQuotient(l);
    case Kind::Soc: {
        Vector v(c.length);
        const int n = c.length;
        const double det = (n > 1) ? (l(0) - l.tail(n - 1).norm()) * (l(0) + l.tail(n - 1).norm()) : l(0) * l(0);
        const double tail_dot = n > 1 ? l.tail(n - 1).dot(r.tail(n - 1)) : 0.0;
        v(0) = (l(0) * r(0) - tail_dot) / det;
        if (n > 1) {
            v.tail(n - 1) = (r.tail(n - 1) - v(0) * l.tail(n - 1)) / l(0);
        }
        return v;
    }
    case Kind::Psd: {
        Matrix m = smat(r, c.size);
        for (int j = 0; j < c.size; ++j) {
            for (int i = 0; i < c.size; ++i) {
                m(i, j) *= 2.0 / (c.eig(i) + c.eig(j));
            }
        }
        return svec(m);
    }
    }
    return {};
}

// ---- scaling operators ---------------------------------------------------

Vector apply_W(const ConeState& c, const Vector& v) {
    switch (c.kind) {
    case Kind::NonNeg: return c.w.cwiseProduct(v);
    case Kind::Soc: return c.W * v;
    case Kind::Psd: return svec(c.R.transpose() * smat(v, c.size) * c.R);
    }
    return {};
}

Vector apply_WT(const ConeState& c, const Vector& v) {
    switch (c.kind) {
    case Kind::NonNeg: return c.w.cwiseProduct(v);
    case Kind::Soc: return c.W * v;
    case Kind::Psd: return svec(c.R * smat(v, c.size) * c.R.transpose());
    }
    return {};
}

Vector apply_Winv(const ConeState& c, const Vector& v) {
    switch (c.kind) {
    case Kind::NonNeg: return v.cwiseQuotient(c.w);
    case Kind::Soc: return c.Winv * v;
    case Kind::Psd: return svec(c.Rti * smat(v, c.size) * c.Rti.transpose());
    }
    return {};
}

Vector apply_WinvT(const ConeState& c, const Vector& v) {
    switch (c.kind) {
    case Kind::NonNeg: return v.cwiseQuotient(c.w);
    case Kind::Soc: return c.Winv * v;
    case Kind::Psd: return svec(c.Rti.transpose() * smat(v, c.size) * c.Rti);
    }
    return {};
}

// H = W^{-1} W^{-T}
Vector apply_H(const ConeState& c, const Vector& v) { return apply_Winv(c, apply_WinvT(c, v)); }
// H^{-1} = W^T W
Vector apply_Hinv(const ConeState& c, const Vector& v) { return apply_WT(c, apply_W(c, v)); }

void set_identity_scaling(ConeState& c) {
    switch (c.kind) {
    case Kind::NonNeg:
        c.w = Vector::Ones(c.length);
        break;
    case Kind::Soc:
        c.W = Matrix::Identity(c.length, c.length);
        c.Winv = c.W;
        break;
    case Kind::Psd:
        c.R = Matrix::Identity(c.size, c.size);
        c.Rti = c.R;
        c.eig = Vector::Ones(c.size);
        break;
    }
    c.lambda = identity_element(c);
}

bool psd_scaling_from(const Matrix& x, const Matrix& s, Matrix& r_out, Matrix& rti_out, Vector& eig_out) {
    Eigen::LLT<Matrix> lx(x);
    Eigen::LLT<Matrix> ls(s);
    if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) {
        return false;
    }
    const Matrix Lx = lx.matrixL();
    const Matrix Ls = ls.matrixL();
    Eigen::JacobiSVD<Matrix> svd(Ls.transpose() * Lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector sv = svd.singularValues();
    if (!(sv.minCoeff() > 0.0) || !sv.allFinite()) {
        return false;
    }
    const Vector inv_sqrt = sv.cwiseSqrt().cwiseInverse();
    r_out = Ls * svd.matrixU() * inv_sqrt.asDiagonal();
    rti_out = Lx * svd.matrixV() * inv_sqrt.asDiagonal();
    eig_out = sv;
    return true;
}

// Scaling computed directly from interior points x (primal) and s (dual).
bool compute_scaling(ConeState& c, const Vector& x, const Vector& s) {
    switch (c.kind) {
    case Kind::NonNeg:
        if (!(x.minCoeff() > 0.0) || !(s.minCoeff() > 0.0)) {
            return false;
        }
        c.w = s.cwiseQuotient(x).cwiseSqrt();
        c.lambda = x.cwiseProduct(s).cwiseSqrt();
        return true;
    case Kind::Soc: {
        const int n = c.length;
        const double aa = soc_jnorm(x);
        const double bb = soc_jnorm(s);
        if (!(aa > 0.0) || !(bb > 0.0)) {
            return false;
        }
        const double beta = std::sqrt(bb / aa);
        const Vector xb = x / aa;
        const Vector sb = s / bb;
        const double cc = std::sqrt(0.5 * (1.0 + xb.dot(sb)));
        Vector v(n);
        v(0) = (sb(0) + xb(0)) / (2.0 * cc);
        if (n > 1) {
            v.tail(n - 1) = (sb.tail(n - 1) - xb.tail(n - 1)) / (2.0 * cc);
        }
        v(0) += 1.0;
        v /= std::sqrt(2.0 * v(0));
        Vector jv = v;
        if (n > 1) {
            jv.tail(n - 1) *= -1.0;
        }
        Matrix J = -Matrix::Identity(n, n);
        J(0, 0) = 1.0;
        c.W = beta * (2.0 * v * v.transpose() - J);
        c.Winv = (1.0 / beta) * (2.0 * jv * jv.transpose() - J);
        c.lambda = c.W * x;
        return c.lambda.allFinite();
    }
    case Kind::Psd:
        if (!psd_scaling_from(smat(x, c.size), smat(s, c.size), c.R, c.Rti, c.eig)) {
            return false;
        }
        c.lambda = svec(Matrix(c.eig.asDiagonal()));
        return true;
    }
    return false;
}

// Moves a PSD scaling forward given the new scaled points lambda + a dx, lambda + a ds.
bool update_psd_scaling(ConeState& c, const Vector& xt, const Vector& st) {
    Matrix r2, rti2;
    Vector eig;
    if (!psd_scaling_from(smat(xt, c.size), smat(st, c.size), r2, rti2, eig)) {
        return false;
    }
    c.R = c.R * r2;
    c.Rti = c.Rti * rti2;
    c.eig = eig;
    c.lambda = svec(Matrix(eig.asDiagonal()));
    return true;
}

// ---- problem data --------------------------------------------------------

struct Data {
    int n = 0;
    int m = 0;
    SparseMatrix A; // m x n, internal coordinates (rotated cones turned into plain SOCs)
    Vector b;
    Vector c;
    std::vector<ConeState> cones;
    std::vector<int> free_idx;
    Matrix AF; // m x nF
    int degree = 0;
};

// Rotated cone {2 x0 x1 >= |x2:|^2} equals T * SOC with T = [[1,1],[1,-1]]/sqrt2 on the
// first two coordinates; T is symmetric and orthogonal, so x = T x' substitutes cleanly.
Data build_data(const ConeProgram& p) {
    Data d;
    d.n = p.num_vars();
    d.m = p.num_rows();
    d.b = Vector::Map(p.rhs().data(), d.m);
    d.c = Vector::Map(p.cost().data(), d.n);

    std::vector<int> rotated_head(d.n, -1); // var -> offset of its rotated block if among first two
    for (const Block& blk : p.blocks()) {
        if (blk.cone == Cone::Free) {
            for (int i = 0; i < blk.length; ++i) {
                d.free_idx.push_back(blk.offset + i);
            }
            continue;
        }
        ConeState cs;
        cs.size = blk.size;
        cs.offset = blk.offset;
        cs.length = blk.length;
        switch (blk.cone) {
        case Cone::NonNeg: cs.kind = Kind::NonNeg; break;
        case Cone::SecondOrder: cs.kind = Kind::Soc; break;
        case Cone::RotatedSecondOrder:
            cs.kind = Kind::Soc;
            cs.rotated = true;
            rotated_head[blk.offset] = blk.offset;
            rotated_head[blk.offset + 1] = blk.offset;
            break;
        case Cone::Psd: cs.kind = Kind::Psd; break;
        case Cone::Free: break;
        }
        d.degree += cs.degree();
        d.cones.push_back(std::move(cs));
    }

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(p.entries().size() * 2);
    for (const auto& e : p.entries()) {
        const int head = rotated_head[e.var];
        if (head < 0) {
            trips.emplace_back(e.row, e.var, e.coeff);
        } else {
            const double sign = e.var == head ? 1.0 : -1.0;
            trips.emplace_back(e.row, head, e.coeff * kInvSqrt2);
            trips.emplace_back(e.row, head + 1, sign * e.coeff * kInvSqrt2);
        }
    }
    d.A.resize(d.m, d.n);
    d.A.setFromTriplets(trips.begin(), trips.end());
    d.A.makeCompressed();
    for (const ConeState& cs : d.cones) {
        if (cs.rotated) {
            const double c0 = d.c(cs.offset);
            const double c1 = d.c(cs.offset + 1);
            d.c(cs.offset) = (c0 + c1) * kInvSqrt2;
            d.c(cs.offset + 1) = (c0 - c1) * kInvSqrt2;
        }
    }

    // per-block row structure for the Newton matrix
    std::vector<int> slot(d.m, -1);
    for (ConeState& cs : d.cones) {
        if (cs.kind == Kind::NonNeg) {
            cs.columns.resize(cs.length);
        }
        std::vector<int> touched;
        for (int j = 0; j < cs.length; ++j) {
            for (SparseMatrix::InnerIterator it(d.A, cs.offset + j); it; ++it) {
                if (it.value() == 0.0) {
                    continue;
                }
                const int r = static_cast<int>(it.row());
                if (slot[r] < 0) {
                    slot[r] = static_cast<int>(cs.rows.size());
                    cs.rows.push_back({r, {}});
                    touched.push_back(r);
                }
                cs.rows[slot[r]].terms.emplace_back(j, it.value());
                if (cs.kind == Kind::NonNeg) {
                    cs.columns[j].emplace_back(r, it.value());
                }
            }
        }
        for (int r : touched) {
            slot[r] = -1;
        }
        if (cs.kind == Kind::Psd) {
            // local svec index -> (a, b)
            std::vector<std::pair<int, int>> pos;
            for (int j = 0; j < cs.size; ++j) {
                for (int i = j; i < cs.size; ++i) {
                    pos.emplace_back(i, j);
                }
            }
            for (const RowEntries& re : cs.rows) {
                std::vector<PsdTerm> terms;
                for (const auto& [idx, coeff] : re.terms) {
                    const auto [a, b] = pos[idx];
                    terms.push_back({a, b, coeff * (a == b ? 0.5 : kInvSqrt2)});
                }
                cs.psd_terms.push_back(std::move(terms));
            }
        }
    }

    d.AF = Matrix::Zero(d.m, static_cast<int>(d.free_idx.size()));
    for (int f = 0; f < static_cast<int>(d.free_idx.size()); ++f) {
        for (SparseMatrix::InnerIterator it(d.A, d.free_idx[f]); it; ++it) {
            d.AF(it.row(), f) = it.value();
        }
    }
    return d;
}

// ---- Newton system -------------------------------------------------------

// A_K H A_K^T, dense.
Matrix assemble_normal_matrix(const Data& d) {
    Matrix M = Matrix::Zero(d.m, d.m);
    for (const ConeState& cs : d.cones) {
        switch (cs.kind) {
        case Kind::NonNeg: {
            for (int j = 0; j < cs.length; ++j) {
                const double h = 1.0 / (cs.w(j) * cs.w(j));
                const auto& col = cs.columns[j];
                for (const auto& [ri, ai] : col) {
                    for (const auto& [rj, aj] : col) {
                        M(ri, rj) += h * ai * aj;
                    }
                }
            }
            break;
        }
        case Kind::Soc: {
            const Matrix H = cs.Winv * cs.Winv;
            const int nr = static_cast<int>(cs.rows.size());
            Matrix dense = Matrix::Zero(nr, cs.length);
            for (int i = 0; i < nr; ++i) {
                for (const auto& [idx, coeff] : cs.rows[i].terms) {
                    dense(i, idx) += coeff;
                }
            }
            const Matrix contrib = dense * H * dense.transpose();
            for (int i = 0; i < nr; ++i) {
                for (int j = 0; j < nr; ++j) {
                    M(cs.rows[i].row, cs.rows[j].row) += contrib(i, j);
                }
            }
            break;
        }
        case Kind::Psd: {
            const Matrix T = cs.Rti * cs.Rti.transpose();
            const int nr = static_cast<int>(cs.rows.size());
            for (int i = 0; i < nr; ++i) {
                const auto& ti = cs.psd_terms[i];
                for (int j = i; j < nr; ++j) {
                    const auto& tj = cs.psd_terms[j];
                    double sum = 0.0;
                    for (const PsdTerm& p : ti) {
                        for (const PsdTerm& q : tj) {
                            sum += p.weight * q.weight *
                                   (T(p.a, q.a) * T(p.b, q.b) + T(p.a, q.b) * T(p.b, q.a));
                        }
                    }
                    sum *= 2.0;
                    const int ri = cs.rows[i].row;
                    const int rj = cs.rows[j].row;
                    M(ri, rj) += sum;
                    if (i != j) {
                        M(rj, ri) += sum;
                    }
                }
            }
            break;
        }
        }
    }
    return M;
}

// Newton systems [-H^{-1} on cones, A^T; A, 0] (dx, dy) = (rx, ry); free rows have no
// H term. Solved through the normal matrix A H A^T with iterative refinement. When
// refinement stalls on a small system, the whole matrix is factored with
// partial-pivoting LU for the rest of the iteration.
class NewtonSolver {
public:
    explicit NewtonSolver(const Data& d) : d_(d) {}

    bool factor_augmented(double delta) {
        const int n = d_.n;
        const int m = d_.m;
        Matrix K = Matrix::Zero(n + m, n + m);
        for (const ConeState& cs : d_.cones) {
            for (int j = 0; j < cs.length; ++j) {
                Vector e = Vector::Zero(cs.length);
                e(j) = 1.0;
                K.block(cs.offset, cs.offset + j, cs.length, 1) = -apply_Hinv(cs, e);
            }
        }
        for (int i = 0; i < n; ++i) {
            K(i, i) -= delta;
        }
        for (int k = 0; k < d_.A.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(d_.A, k); it; ++it) {
                K(n + it.row(), it.col()) += it.value();
                K(it.col(), n + it.row()) += it.value();
            }
        }
        for (int i = 0; i < m; ++i) {
            K(n + i, n + i) += delta;
        }
        lu_.compute(K);
        return lu_.matrixLU().allFinite() && lu_.matrixLU().diagonal().cwiseAbs().minCoeff() > 0.0;
    }

    bool factor_normal(const Matrix& M, double delta, double reg) {
        augmented_ = false;
        augmented_tried_ = false;
        delta_ = delta;
        const double scale = 1.0 + (d_.m > 0 ? M.diagonal().cwiseAbs().maxCoeff() : 0.0);
        Matrix Md = M;
        Md.diagonal().array() += delta;
        const int nf = static_cast<int>(d_.free_idx.size());
        // Free columns leave M singular in general; adding rho A_F A_F^T (a multiple of
        // the free block rows A_F^T dy = r_F) keeps the leading block positive definite.
        rho_ = 0.0;
        if (nf > 0) {
            const Matrix aat = d_.AF * d_.AF.transpose();
            const double aat_scale = aat.diagonal().maxCoeff();
            if (aat_scale > 0.0) {
                rho_ = scale / aat_scale;
                Md += rho_ * aat;
            }
        }
        llt_m_.compute(Md);
        if (llt_m_.info() != Eigen::Success) {
            return false;
        }
        if (nf > 0) {
            minv_af_ = llt_m_.solve(d_.AF);
            Matrix S = d_.AF.transpose() * minv_af_;
            S.diagonal().array() += reg * (1e-300 + S.diagonal().cwiseAbs().maxCoeff());
            llt_s_.compute(S);
            if (llt_s_.info() != Eigen::Success) {
                return false;
            }
        }
        return minv_af_.allFinite();
    }

    bool solve(const Vector& rx, const Vector& ry, Vector& dx, Vector& dy) {
        const double rhs_norm = std::max(norm_inf(rx), norm_inf(ry));
        solve_regularized(rx, ry, dx, dy);
        double res = refine(rx, ry, dx, dy, rhs_norm);
        if (!augmented_ && !augmented_tried_ && d_.n + d_.m <= kAugmentedLimit && !(res <= kStall * (1.0 + rhs_norm))) {
            augmented_tried_ = true;
            if (factor_augmented(delta_)) {
                augmented_ = true;
                Vector ax, ay;
                solve_regularized(rx, ry, ax, ay);
                const double ares = refine(rx, ry, ax, ay, rhs_norm);
                if (ares < res || !std::isfinite(res)) {
                    dx = std::move(ax);
                    dy = std::move(ay);
                    res = ares;
                } else {
                    augmented_ = false;
                }
            }
        }
        return dx.allFinite() && dy.allFinite();
    }

private:
    static constexpr int kAugmentedLimit = 2000;
    static constexpr double kStall = 1e-11;

    static double norm_inf(const Vector& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

    double refine(const Vector& rx, const Vector& ry, Vector& dx, Vector& dy, double rhs_norm) const {
        Vector ex, ey;
        double res = std::numeric_limits<double>::infinity();
        for (int it = 0; it <= kRefinementSteps; ++it) {
            Vector kx, ky;
            apply(dx, dy, kx, ky);
            ex = rx - kx;
            ey = ry - ky;
            res = std::max(norm_inf(ex), norm_inf(ey));
            if (!(res > 1e-15 * (1.0 + rhs_norm)) || it == kRefinementSteps) {
                break;
            }
            Vector cx, cy;
            solve_regularized(ex, ey, cx, cy);
            dx += cx;
            dy += cy;
        }
        return res;
    }

    void apply(const Vector& dx, const Vector& dy, Vector& kx, Vector& ky) const {
        kx = d_.A.transpose() * dy;
        for (const ConeState& cs : d_.cones) {
            kx.segment(cs.offset, cs.length) -= apply_Hinv(cs, dx.segment(cs.offset, cs.length));
        }
        ky = d_.A * dx;
    }

    void solve_regularized(const Vector& rx, const Vector& ry, Vector& dx, Vector& dy) const {
        if (augmented_) {
            Vector rhs(d_.n + d_.m);
            rhs << rx, ry;
            const Vector sol = lu_.solve(rhs);
            dx = sol.head(d_.n);
            dy = sol.tail(d_.m);
            // Cone rows recomputed from dy so that they hold to rounding, as below.
            const Vector g = d_.A.transpose() * dy;
            for (const ConeState& cs : d_.cones) {
                dx.segment(cs.offset, cs.length) =
                    apply_H(cs, g.segment(cs.offset, cs.length) - rx.segment(cs.offset, cs.length));
            }
            return;
        }
        Vector hr = Vector::Zero(d_.n);
        for (const ConeState& cs : d_.cones) {
            hr.segment(cs.offset, cs.length) = apply_H(cs, rx.segment(cs.offset, cs.length));
        }
        Vector rhs1 = ry + d_.A * hr;
        const int nf = static_cast<int>(d_.free_idx.size());
        Vector rf(nf);
        for (int f = 0; f < nf; ++f) {
            rf(f) = rx(d_.free_idx[f]);
        }
        if (nf > 0 && rho_ > 0.0) {
            rhs1 += rho_ * (d_.AF * rf);
        }
        const Vector u = llt_m_.solve(rhs1);
        dx = Vector::Zero(d_.n);
        if (nf > 0) {
            const Vector dxf = llt_s_.solve(d_.AF.transpose() * u - rf);
            dy = u - minv_af_ * dxf;
            for (int f = 0; f < nf; ++f) {
                dx(d_.free_idx[f]) = dxf(f);
            }
        } else {
            dy = u;
        }
        const Vector g = d_.A.transpose() * dy;
        for (const ConeState& cs : d_.cones) {
            dx.segment(cs.offset, cs.length) =
                apply_H(cs, g.segment(cs.offset, cs.length) - rx.segment(cs.offset, cs.length));
        }
    }

    const Data& d_;
    bool augmented_ = false;
    bool augmented_tried_ = false;
    double delta_ = 0.0;
    double rho_ = 0.0;
    Eigen::PartialPivLU<Matrix> lu_;
    Eigen::LLT<Matrix> llt_m_;
    Eigen::LLT<Matrix> llt_s_;
    Matrix minv_af_;
};

double norm_inf(const Vector& v) { return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0; }

// Shifts v into the cone interior when it is not comfortably inside already.
void shift_into_cones(const Data& d, Vector& v) {
    if (d.cones.empty()) {
        return;
    }
    double t = -kInf;
    for (const ConeState& cs : d.cones) {
        t = std::max(t, -cone_min_eig(cs, v.segment(cs.offset, cs.length)));
    }
    double cone_norm = 0.0;
    for (const ConeState& cs : d.cones) {
        cone_norm += v.segment(cs.offset, cs.length).squaredNorm();
    }
    cone_norm = std::sqrt(cone_norm);
    if (t >= -1e-8 * std::max(cone_norm, 1.0)) {
        for (const ConeState& cs : d.cones) {
            v.segment(cs.offset, cs.length) += (1.0 + t) * identity_element(cs);
        }
    }
}

Vector to_external(const Data& d, Vector v) {
    for (const ConeState& cs : d.cones) {
        if (cs.rotated) {
            const double a = v(cs.offset);
            const double b = v(cs.offset + 1);
            v(cs.offset) = (a + b) * kInvSqrt2;
            v(cs.offset + 1) = (a - b) * kInvSqrt2;
        }
    }
    return v;
}

struct Direction {
    Vector dx, dy, ds;
    Vector dxt, dst; // scaled cone parts, laid out like dx
    double dtau = 0.0;
    double dkappa = 0.0;
};

} // namespace

ConicSolution solve(const ConeProgram& program, const IpmSettings& settings) {
    if (!(settings.feas_tol > 0.0) || !(settings.gap_tol > 0.0) || settings.max_iterations < 1 ||
        !(settings.regularization > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "IpmSettings: tolerances must be positive and max_iterations >= 1");
    }
    const auto start = std::chrono::steady_clock::now();
    Data d = build_data(program);
    const int n = d.n;
    const int m = d.m;

    ConicSolution sol;
    sol.feas_tol = settings.feas_tol;
    sol.gap_tol = settings.gap_tol;
    sol.x = Vector::Zero(n);
    sol.y = Vector::Zero(m);
    sol.s = Vector::Zero(n);

    NewtonSolver newton(d);
    // Static regularization first, then the retry value, then a short ladder
    // relative to the largest diagonal of M for late iterations where M is huge.
    const auto factor = [&] {
        const double retry = std::max(kRetryRegularization, settings.regularization);
        const Matrix M = assemble_normal_matrix(d);
        const double diag = m > 0 ? M.diagonal().cwiseAbs().maxCoeff() : 0.0;
        for (const double delta : {settings.regularization, retry, 1e-12 * diag, 1e-10 * diag, retry * diag}) {
            if (delta >= settings.regularization && newton.factor_normal(M, delta, settings.regularization)) {
                return true;
            }
        }
        return false;
    };

    // Starting point: least-norm primal and dual solutions, shifted into the cones.
    for (ConeState& cs : d.cones) {
        set_identity_scaling(cs);
    }
    Vector x, y, s;
    {
        if (!factor()) {
            sol.status = Status::NumericFailure;
            return sol;
        }
        Vector dy;
        if (!newton.solve(Vector::Zero(n), d.b, x, dy)) {
            sol.status = Status::NumericFailure;
            return sol;
        }
        Vector dx;
        if (!newton.solve(d.c, Vector::Zero(m), dx, y)) {
            sol.status = Status::NumericFailure;
            return sol;
        }
        s = Vector::Zero(n);
        for (const ConeState& cs : d.cones) {
            s.segment(cs.offset, cs.length) = -dx.segment(cs.offset, cs.length);
        }
        shift_into_cones(d, x);
        shift_into_cones(d, s);
    }
    double tau = 1.0;
    double kappa = 1.0;

    const double b_norm = std::max(1.0, norm_inf(d.b));
    const double c_norm = std::max(1.0, norm_inf(d.c));

    const auto finish = [&](Status status, double scale_x, double scale_ys) {
        sol.status = status;
        sol.x = to_external(d, x * scale_x);
        sol.y = y * scale_ys;
        sol.s = to_external(d, s * scale_ys);
        const Vector c_ext = Vector::Map(program.cost().data(), n);
        sol.primal_objective = c_ext.dot(sol.x);
        sol.dual_objective = d.b.dot(sol.y);
        sol.gap = sol.x.dot(sol.s);
        return sol;
    };
    // The loop aims for kPolish times the tolerances. The best iterate by
    // max(pres, dres, gap) relative to the tolerances is kept; it is returned when
    // the solve stalls or fails, as Optimal if it meets the tolerances.
    struct Snapshot {
        Vector x, y, s;
        double tau = 0.0, pres = 0.0, dres = 0.0, merit = kInf;
        int iter = 0;
    };
    Snapshot best;
    const auto fallback = [&](Status status) {
        if (best.merit < kInf) {
            x = best.x;
            y = best.y;
            s = best.s;
            tau = best.tau;
            finish(best.merit <= 1.0 ? Status::Optimal : status, 1.0 / tau, 1.0 / tau);
            sol.primal_residual = best.pres;
            sol.dual_residual = best.dres;
            return sol;
        }
        return finish(status, 1.0 / tau, 1.0 / tau);
    };
    const auto fail = [&](const char* stage) {
        if (settings.verbose) {
            std::fprintf(stderr, "numeric failure in %s\n", stage);
        }
        return fallback(Status::NumericFailure);
    };

    for (int iter = 0;; ++iter) {
        sol.iterations = iter;
        const Vector rp = d.b * tau - d.A * x;
        const Vector rd = d.c * tau - d.A.transpose() * y - s;
        const double cx = d.c.dot(x);
        const double by = d.b.dot(y);
        const double rg = kappa + cx - by;
        const double xs = x.dot(s);
        const double mu = (xs + tau * kappa) / (d.degree + 1);

        const double pobj = cx / tau;
        const double dobj = by / tau;
        const double pres = norm_inf(rp) / tau / b_norm;
        const double dres = norm_inf(rd) / tau / c_norm;
        const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
        sol.primal_residual = pres;
        sol.dual_residual = dres;
        if (settings.verbose) {
            std::fprintf(stderr, "%3d pobj %+.9e dobj %+.9e pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e\n",
                         iter, pobj, dobj, pres, dres, relgap, tau, kappa);
        }

        if (pres <= kPolish * settings.feas_tol && dres <= kPolish * settings.feas_tol &&
            relgap <= kPolish * settings.gap_tol) {
            return finish(Status::Optimal, 1.0 / tau, 1.0 / tau);
        }
        const double merit =
            std::max({pres / settings.feas_tol, dres / settings.feas_tol, relgap / settings.gap_tol});
        if (merit < best.merit) {
            best = Snapshot{x, y, s, tau, pres, dres, merit, iter};
        } else if (iter - best.iter >= kStallIterations) {
            if (settings.verbose) {
                std::fprintf(stderr, "stalled, best iterate %d\n", best.iter);
            }
            return fallback(Status::NumericFailure);
        }
        if (by > 0.0) {
            const Vector aty_s = d.A.transpose() * y + s;
            if (norm_inf(aty_s) / by <= settings.feas_tol) {
                return finish(Status::Infeasible, 0.0, 1.0 / by);
            }
        }
        if (cx < 0.0) {
            const Vector ax = d.A * x;
            if (norm_inf(ax) / (-cx) <= settings.feas_tol) {
                return finish(Status::Unbounded, 1.0 / (-cx), 0.0);
            }
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (iter >= settings.max_iterations || elapsed > settings.time_limit_s) {
            return fallback(Status::IterLimit);
        }

        // Scaling: NonNeg and SOC from the current iterate; PSD was carried forward.
        bool scaled = true;
        for (ConeState& cs : d.cones) {
            if (iter == 0 || cs.kind != Kind::Psd) {
                scaled = scaled && compute_scaling(cs, x.segment(cs.offset, cs.length), s.segment(cs.offset, cs.length));
            }
        }
        if (!scaled) {
            return fail("scaling");
        }
        if (!factor()) {
            return fail("factorization");
        }

        Vector d2x, d2y;
        if (!newton.solve(d.c, d.b, d2x, d2y)) {
            return fail("newton solve");
        }
        const double denom = kappa + tau * (d.b.dot(d2y) - d.c.dot(d2x));

        // rc: target for lambda o (dxt + dst); rtau: target for tau dkappa + kappa dtau.
        const auto direction = [&](const std::vector<Vector>& rc, double rtau, double eta, Direction& dir) {
            Vector rx = eta * rd;
            std::vector<Vector> q(d.cones.size());
            for (std::size_t k = 0; k < d.cones.size(); ++k) {
                const ConeState& cs = d.cones[k];
                q[k] = lambda_solve(cs, rc[k]);
                rx.segment(cs.offset, cs.length) -= apply_WT(cs, q[k]);
            }
            Vector d1x, d1y;
            if (!newton.solve(rx, eta * rp, d1x, d1y)) {
                return false;
            }
            dir.dtau = (rtau + tau * eta * rg + tau * (d.c.dot(d1x) - d.b.dot(d1y))) / denom;
            dir.dx = d1x + dir.dtau * d2x;
            dir.dy = d1y + dir.dtau * d2y;
            dir.dkappa = (rtau - kappa * dir.dtau) / tau;
            dir.ds = Vector::Zero(n);
            dir.dxt = Vector::Zero(n);
            dir.dst = Vector::Zero(n);
            for (std::size_t k = 0; k < d.cones.size(); ++k) {
                const ConeState& cs = d.cones[k];
                const Vector dxt = apply_W(cs, dir.dx.segment(cs.offset, cs.length));
                const Vector dst = q[k] - dxt;
                dir.dxt.segment(cs.offset, cs.length) = dxt;
                dir.dst.segment(cs.offset, cs.length) = dst;
                dir.ds.segment(cs.offset, cs.length) = apply_WT(cs, dst);
            }
            return dir.dx.allFinite() && dir.dy.allFinite() && std::isfinite(dir.dtau);
        };
        const auto max_step = [&](const Direction& dir) {
            double step = kInf;
            for (const ConeState& cs : d.cones) {
                step = std::min(step, max_scaled_step(cs, dir.dxt.segment(cs.offset, cs.length)));
                step = std::min(step, max_scaled_step(cs, dir.dst.segment(cs.offset, cs.length)));
            }
            if (dir.dtau < 0.0) {
                step = std::min(step, -tau / dir.dtau);
            }
            if (dir.dkappa < 0.0) {
                step = std::min(step, -kappa / dir.dkappa);
            }
            return step;
        };

        std::vector<Vector> rc(d.cones.size());
        for (std::size_t k = 0; k < d.cones.size(); ++k) {
            rc[k] = -jordan_product(d.cones[k], d.cones[k].lambda, d.cones[k].lambda);
        }
        Direction aff;
        if (!direction(rc, -tau * kappa, 1.0, aff)) {
            return fail("affine direction");
        }
        const double alpha_aff = std::min(1.0, max_step(aff));
        const double sigma = std::pow(1.0 - alpha_aff, 3);

        for (std::size_t k = 0; k < d.cones.size(); ++k) {
            const ConeState& cs = d.cones[k];
            rc[k] += sigma * mu * identity_element(cs) -
                     jordan_product(cs, aff.dxt.segment(cs.offset, cs.length), aff.dst.segment(cs.offset, cs.length));
        }
        Direction dir;
        if (!direction(rc, -tau * kappa + sigma * mu - aff.dtau * aff.dkappa, 1.0 - sigma, dir)) {
            return fail("combined direction");
        }
        const double alpha = std::min(1.0, kStepFraction * max_step(dir));

        x += alpha * dir.dx;
        y += alpha * dir.dy;
        s += alpha * dir.ds;
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        for (const int f : d.free_idx) {
            s(f) = 0.0;
        }
        for (ConeState& cs : d.cones) {
            if (cs.kind != Kind::Psd) {
                continue;
            }
            const Vector xt = cs.lambda + alpha * dir.dxt.segment(cs.offset, cs.length);
            const Vector st = cs.lambda + alpha * dir.dst.segment(cs.offset, cs.length);
            if (!update_psd_scaling(cs, xt, st)) {
                return fail("psd scaling update");
            }
        }
    }
}

} // namespace drport::conic
