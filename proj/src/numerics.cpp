#include "drport/numerics.hpp"

#include "drport/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drport {

SymMatrix::SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
        throw Error(ErrorCode::DimensionMismatch, "SymMatrix needs a non-empty square matrix");
    }
    m_ = m.selfadjointView<Eigen::Lower>();
}

SymMatrix SymMatrix::identity(int n) { return SymMatrix(Matrix::Identity(n, n)); }

SymMatrix SymMatrix::zero(int n) { return SymMatrix(Matrix::Zero(n, n)); }

SymMatrix SymMatrix::diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

SymMatrix SymMatrix::principal(std::span<const int> idx) const {
    const int k = static_cast<int>(idx.size());
    Matrix sub(k, k);
    for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
            sub(a, b) = m_(idx[a], idx[b]);
        }
    }
    return SymMatrix(sub);
}

Matrix cholesky(const SymMatrix& a) {
    const int n = a.dim();
    const Matrix& m = a.matrix();
    const double scale = std::max(m.diagonal().maxCoeff(), 0.0);
    const double tol = kCholeskyPivotTolerance * scale;
    Matrix l = Matrix::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        double pivot = m(j, j);
        for (int p = 0; p < j; ++p) {
            pivot -= l(j, p) * l(j, p);
        }
        if (!(pivot > tol) || scale <= 0.0) {
            throw Error(ErrorCode::NotPositiveDefinite,
                        "cholesky: pivot " + std::to_string(pivot) + " at column " + std::to_string(j));
        }
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double v = m(i, j);
            for (int p = 0; p < j; ++p) {
                v -= l(i, p) * l(j, p);
            }
            l(i, j) = v / ljj;
        }
    }
    return l;
}

Vector solve_posdef(const SymMatrix& a, const Vector& b) {
    if (b.size() != a.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "solve_posdef: size mismatch");
    }
    const Matrix l = cholesky(a);
    Vector y = l.triangularView<Eigen::Lower>().solve(b);
    return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix solve_posdef(const SymMatrix& a, const Matrix& b) {
    if (b.rows() != a.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "solve_posdef: size mismatch");
    }
    const Matrix l = cholesky(a);
    Matrix y = l.triangularView<Eigen::Lower>().solve(b);
    return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

double min_eigenvalue(const Matrix& a) {
    if (a.rows() == 1) {
        return a(0, 0);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

double min_eigenvalue(const SymMatrix& a) { return min_eigenvalue(a.matrix()); }

} // namespace drport
