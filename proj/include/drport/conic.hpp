#pragma once

// Primal-dual interior-point solver for linear cone programs
//
//     minimize    c^T x
//     subject to  A x = b
//                 x_j in K_j  for every variable block j
//
// where each K_j is free, the nonnegative orthant, a second-order cone, a
// rotated second-order cone (2 x0 x1 >= |x_2:|^2, x0, x1 >= 0) or the cone of
// positive semidefinite matrices. The solver runs a Mehrotra predictor-corrector
// on the homogeneous self-dual embedding with Nesterov-Todd scaling, so
// infeasible and unbounded programs are reported instead of diverging.
//
// PSD blocks of order d occupy d(d+1)/2 scalars in column-major lower-triangle
// order; off-diagonal scalars hold sqrt(2) * X_ij so that the plain dot product
// of two blocks equals the matrix inner product A . B.

#include "drport/numerics.hpp"

#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace drport::conic {

enum class Cone { Free, NonNeg, SecondOrder, RotatedSecondOrder, Psd };

struct Block {
    Cone cone = Cone::Free;
    int size = 0;   ///< vector length, or matrix order for Psd
    int offset = 0; ///< first scalar index in the flattened variable vector
    int length = 0; ///< number of scalars
};

/// Number of scalars used by a block of the given cone and size.
int block_length(Cone cone, int size);

/// Index into a PSD block's svec storage for entry (i, j), either order.
int svec_index(int order, int i, int j);

class ConeProgram {
public:
    /// Appends a variable block and returns its index.
    int add_block(Cone cone, int size);

    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const Block& block(int b) const { return blocks_.at(b); }
    int num_vars() const noexcept { return num_vars_; }
    int num_rows() const noexcept { return static_cast<int>(rhs_.size()); }

    /// Scalar index of element i of a vector-type block.
    int var(int block, int i) const;
    /// Scalar index of entry (i, j) of a PSD block.
    int entry(int block, int i, int j) const;

    void add_cost(int var, double coeff);
    /// Adds coeff * X_ij to the objective (the matrix entry, not the svec scalar).
    void add_cost_entry(int block, int i, int j, double coeff);

    int add_row(double rhs);
    void add_term(int row, int var, double coeff);
    /// Adds coeff * X_ij to an equality row.
    void add_entry_term(int row, int block, int i, int j, double coeff);

    double rhs(int row) const { return rhs_.at(row); }
    const std::vector<double>& rhs() const noexcept { return rhs_; }
    const std::vector<double>& cost() const noexcept { return cost_; }

    struct Term {
        int var;
        double coeff;
    };
    /// Row terms with duplicate variables merged, in increasing variable order.
    std::vector<Term> row(int r) const;

    /// Values of block b taken from a flattened vector (svec for PSD blocks).
    Vector block_values(const Vector& flat, int b) const;
    /// Full symmetric matrix of PSD block b taken from a flattened vector.
    Matrix psd_matrix(const Vector& flat, int b) const;

    struct Entry {
        int row;
        int var;
        double coeff;
    };
    /// All constraint coefficients in insertion order, duplicates not merged.
    const std::vector<Entry>& entries() const noexcept { return entries_; }

private:
    std::vector<Block> blocks_;
    int num_vars_ = 0;
    std::vector<double> cost_;
    std::vector<double> rhs_;
    std::vector<Entry> entries_;
};

enum class Status { Optimal, Infeasible, Unbounded, NumericFailure, IterLimit };

std::string_view to_string(Status s);

struct IpmSettings {
    double feas_tol = 1e-8;
    double gap_tol = 1e-8;
    int max_iterations = 200;
    double regularization = 1e-10;
    /// Wall-clock budget; exceeding it ends the solve with IterLimit.
    double time_limit_s = std::numeric_limits<double>::infinity();
    /// Per-iteration progress lines on stderr.
    bool verbose = false;
};

struct ConicSolution {
    Status status = Status::NumericFailure;
    Vector x; ///< primal values, flattened
    Vector y; ///< multipliers of the equality rows
    Vector s; ///< dual slacks c - A^T y, zero on free blocks
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double gap = 0.0; ///< complementarity x . s
    double primal_residual = 0.0; ///< |Ax - b|_inf / max(1, |b|_inf)
    double dual_residual = 0.0;   ///< |A^T y + s - c|_inf / max(1, |c|_inf)
    double feas_tol = 0.0;
    double gap_tol = 0.0;
    int iterations = 0;
};

ConicSolution solve(const ConeProgram& program, const IpmSettings& settings = {});

struct CertificateReport {
    double primal_residual = 0.0; ///< |Ax - b|_inf
    double dual_residual = 0.0;   ///< |c - A^T y - s|_inf, with s forced to zero on free blocks
    double gap = 0.0;             ///< |c^T x - b^T y|
    double cone_violation = 0.0;  ///< worst distance outside the cone over x and s
};

/// Recomputes residuals straight from the program data, independent of the
/// solver's internal bookkeeping.
CertificateReport verify_certificate(const ConeProgram& program, const ConicSolution& solution);

} // namespace drport::conic
