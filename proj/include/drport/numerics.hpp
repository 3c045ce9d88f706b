#pragma once

// Dense symmetric kernels. Matrices here are at most (N+1) x (N+1), so
// everything is dense and unblocked apart from what Eigen does internally.

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace drport {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Real symmetric matrix with dim >= 1. Storage is a full dense matrix that is
/// symmetrized on construction from the lower triangle, so (i,j) == (j,i) always.
class SymMatrix {
public:
    SymMatrix() = default;

    /// Takes the lower triangle of `m` as authoritative.
    explicit SymMatrix(const Matrix& m);

    static SymMatrix identity(int n);
    static SymMatrix zero(int n);
    static SymMatrix diagonal(const Vector& d);

    int dim() const noexcept { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    void set(int i, int j, double v) {
        m_(i, j) = v;
        m_(j, i) = v;
    }

    const Matrix& matrix() const noexcept { return m_; }
    double trace() const { return m_.trace(); }
    double max_abs() const { return m_.cwiseAbs().maxCoeff(); }

    /// Principal submatrix on `idx` (ordered).
    SymMatrix principal(std::span<const int> idx) const;

private:
    Matrix m_;
};

/// Lower-triangular L with L*L^T = a. Throws Error(NotPositiveDefinite) when a
/// pivot drops below 1e-12 times the largest diagonal entry.
Matrix cholesky(const SymMatrix& a);

/// Solves a*x = b through `cholesky`.
Vector solve_posdef(const SymMatrix& a, const Vector& b);

/// Solves a*X = B column-wise through one factorization.
Matrix solve_posdef(const SymMatrix& a, const Matrix& b);

double min_eigenvalue(const SymMatrix& a);
double min_eigenvalue(const Matrix& a); // reads the lower triangle

/// Pivot tolerance used by `cholesky`, relative to the largest diagonal entry.
inline constexpr double kCholeskyPivotTolerance = 1e-12;

} // namespace drport
