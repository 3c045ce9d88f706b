#include "drport/conic.hpp"

#include "drport/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace drport::conic {

namespace {

constexpr double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

// Distance of v outside the (unrotated) second-order cone.
double soc_violation(const Vector& v) {
    const double tail = v.size() > 1 ? v.tail(v.size() - 1).norm() : 0.0;
    return std::max(0.0, tail - v(0));
}

Vector rotated_to_soc(const Vector& v) {
    Vector out = v;
    out(0) = (v(0) + v(1)) * kInvSqrt2;
    out(1) = (v(0) - v(1)) * kInvSqrt2;
    return out;
}

double cone_violation(const ConeProgram& p, const Vector& flat) {
    double worst = 0.0;
    for (int b = 0; b < static_cast<int>(p.blocks().size()); ++b) {
        const Block& blk = p.block(b);
        switch (blk.cone) {
        case Cone::Free:
            break;
        case Cone::NonNeg:
            worst = std::max(worst, -flat.segment(blk.offset, blk.length).minCoeff());
            break;
        case Cone::SecondOrder:
            worst = std::max(worst, soc_violation(flat.segment(blk.offset, blk.length)));
            break;
        case Cone::RotatedSecondOrder:
            worst = std::max(worst, soc_violation(rotated_to_soc(flat.segment(blk.offset, blk.length))));
            break;
        case Cone::Psd:
            worst = std::max(worst, -min_eigenvalue(p.psd_matrix(flat, b)));
            break;
        }
    }
    return worst;
}

} // namespace

int block_length(Cone cone, int size) {
    return cone == Cone::Psd ? size * (size + 1) / 2 : size;
}

int svec_index(int order, int i, int j) {
    if (i < j) {
        std::swap(i, j);
    }
    // column j starts after columns 0..j-1 of lengths order, order-1, ...
    return j * order - j * (j - 1) / 2 + (i - j);
}

int ConeProgram::add_block(Cone cone, int size) {
    if (size < 1 || (cone == Cone::RotatedSecondOrder && size < 2)) {
        throw Error(ErrorCode::DimensionMismatch, "cone block too small");
    }
    Block blk{cone, size, num_vars_, block_length(cone, size)};
    blocks_.push_back(blk);
    num_vars_ += blk.length;
    cost_.resize(num_vars_, 0.0);
    return static_cast<int>(blocks_.size()) - 1;
}

int ConeProgram::var(int block, int i) const {
    const Block& blk = blocks_.at(block);
    if (blk.cone == Cone::Psd || i < 0 || i >= blk.length) {
        throw Error(ErrorCode::DimensionMismatch, "var: bad block element");
    }
    return blk.offset + i;
}

int ConeProgram::entry(int block, int i, int j) const {
    const Block& blk = blocks_.at(block);
    if (blk.cone != Cone::Psd || i < 0 || j < 0 || i >= blk.size || j >= blk.size) {
        throw Error(ErrorCode::DimensionMismatch, "entry: bad PSD entry");
    }
    return blk.offset + svec_index(blk.size, i, j);
}

void ConeProgram::add_cost(int var, double coeff) { cost_.at(var) += coeff; }

void ConeProgram::add_cost_entry(int block, int i, int j, double coeff) {
    add_cost(entry(block, i, j), i == j ? coeff : coeff * kInvSqrt2);
}

int ConeProgram::add_row(double rhs) {
    rhs_.push_back(rhs);
    return static_cast<int>(rhs_.size()) - 1;
}

void ConeProgram::add_term(int row, int var, double coeff) {
    if (row < 0 || row >= num_rows() || var < 0 || var >= num_vars_) {
        throw Error(ErrorCode::DimensionMismatch, "add_term: row or variable out of range");
    }
    entries_.push_back({row, var, coeff});
}

void ConeProgram::add_entry_term(int row, int block, int i, int j, double coeff) {
    add_term(row, entry(block, i, j), i == j ? coeff : coeff * kInvSqrt2);
}

std::vector<ConeProgram::Term> ConeProgram::row(int r) const {
    std::vector<Term> out;
    for (const Entry& e : entries_) {
        if (e.row == r) {
            out.push_back({e.var, e.coeff});
        }
    }
    std::sort(out.begin(), out.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
    std::vector<Term> merged;
    for (const Term& t : out) {
        if (!merged.empty() && merged.back().var == t.var) {
            merged.back().coeff += t.coeff;
        } else {
            merged.push_back(t);
        }
    }
    return merged;
}

Vector ConeProgram::block_values(const Vector& flat, int b) const {
    const Block& blk = blocks_.at(b);
    return flat.segment(blk.offset, blk.length);
}

Matrix ConeProgram::psd_matrix(const Vector& flat, int b) const {
    const Block& blk = blocks_.at(b);
    if (blk.cone != Cone::Psd) {
        throw Error(ErrorCode::DimensionMismatch, "psd_matrix: block is not PSD");
    }
    const int d = blk.size;
    Matrix m(d, d);
    int idx = blk.offset;
    for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i, ++idx) {
            const double v = i == j ? flat(idx) : flat(idx) * kInvSqrt2;
            m(i, j) = v;
            m(j, i) = v;
        }
    }
    return m;
}

std::string_view to_string(Status s) {
    switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
    case Status::NumericFailure: return "NumericFailure";
    case Status::IterLimit: return "IterLimit";
    }
    return "Unknown";
}

CertificateReport verify_certificate(const ConeProgram& program, const ConicSolution& solution) {
    const int n = program.num_vars();
    const int m = program.num_rows();
    CertificateReport rep;
    if (solution.x.size() != n || solution.y.size() != m || solution.s.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "verify_certificate: solution does not match program");
    }
    Vector s = solution.s;
    for (const Block& blk : program.blocks()) {
        if (blk.cone == Cone::Free) {
            s.segment(blk.offset, blk.length).setZero();
        }
    }
    Vector dual = Vector::Map(program.cost().data(), n) - s;
    Vector ax = Vector::Zero(m);
    for (const auto& e : program.entries()) {
        ax(e.row) += e.coeff * solution.x(e.var);
        dual(e.var) -= e.coeff * solution.y(e.row);
    }
    const Vector b = Vector::Map(program.rhs().data(), m);
    const double by = b.dot(solution.y);
    rep.primal_residual = m > 0 ? (ax - b).cwiseAbs().maxCoeff() : 0.0;
    rep.dual_residual = n > 0 ? dual.cwiseAbs().maxCoeff() : 0.0;
    const double cx = Vector::Map(program.cost().data(), n).dot(solution.x);
    rep.gap = std::abs(cx - by);
    rep.cone_violation = std::max(cone_violation(program, solution.x), cone_violation(program, s));
    return rep;
}

} // namespace drport::conic
