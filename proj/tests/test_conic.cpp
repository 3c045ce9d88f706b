#include "doctest.h"

#include "drport/conic.hpp"

#include <cmath>
#include <random>

using namespace drport;
using namespace drport::conic;

namespace {

// min x s.t. x = 3 + slack, x, slack >= 0
ConeProgram lp_example() {
    ConeProgram p;
    const int b = p.add_block(Cone::NonNeg, 2);
    p.add_cost(p.var(b, 0), 1.0);
    const int r = p.add_row(3.0);
    p.add_term(r, p.var(b, 0), 1.0);
    p.add_term(r, p.var(b, 1), -1.0);
    return p;
}

// min trace(X) s.t. X psd 2x2, X11 = 1, X22 = 2
ConeProgram sdp_example() {
    ConeProgram p;
    const int b = p.add_block(Cone::Psd, 2);
    p.add_cost_entry(b, 0, 0, 1.0);
    p.add_cost_entry(b, 1, 1, 1.0);
    p.add_entry_term(p.add_row(1.0), b, 0, 0, 1.0);
    p.add_entry_term(p.add_row(2.0), b, 1, 1, 1.0);
    return p;
}

// min t s.t. (t, 3, 4) in soc
ConeProgram soc_example() {
    ConeProgram p;
    const int b = p.add_block(Cone::SecondOrder, 3);
    p.add_cost(p.var(b, 0), 1.0);
    p.add_term(p.add_row(3.0), p.var(b, 1), 1.0);
    p.add_term(p.add_row(4.0), p.var(b, 2), 1.0);
    return p;
}

void check_certificate(const ConeProgram& p, const ConicSolution& s, double tol) {
    const CertificateReport rep = verify_certificate(p, s);
    CHECK(rep.primal_residual <= tol);
    CHECK(rep.dual_residual <= tol);
    CHECK(rep.gap <= tol);
    CHECK(rep.cone_violation <= tol);
}

} // namespace

TEST_CASE("LP example") {
    const ConeProgram p = lp_example();
    const ConicSolution s = solve(p);
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.x(0) == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(s.primal_objective == doctest::Approx(3.0).epsilon(1e-8));
    check_certificate(p, s, 1e-8);
}

TEST_CASE("SDP example matches a brute-force grid over the off-diagonal") {
    const ConeProgram p = sdp_example();
    const ConicSolution s = solve(p);
    REQUIRE(s.status == Status::Optimal);
    // oracle: trace is 3 for every feasible X12 in [-sqrt2, sqrt2], so the grid minimum is 3
    double best = 1e300;
    for (int i = 0; i <= 2000; ++i) {
        const double x12 = -std::sqrt(2.0) + 2.0 * std::sqrt(2.0) * i / 2000.0;
        if (2.0 - x12 * x12 >= -1e-12) {
            best = std::min(best, 1.0 + 2.0);
        }
    }
    CHECK(s.primal_objective == doctest::Approx(best).epsilon(1e-8));
    const Matrix X = p.psd_matrix(s.x, 0);
    CHECK(std::abs(X(0, 1)) <= 1e-6);
    check_certificate(p, s, 1e-8);
}

TEST_CASE("SOC example") {
    const ConeProgram p = soc_example();
    const ConicSolution s = solve(p);
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.x(0) == doctest::Approx(5.0).epsilon(1e-8));
    check_certificate(p, s, 1e-8);
}

TEST_CASE("rotated SOC: min u s.t. 2 u (1/2) >= x^2, x = 3 gives 9") {
    ConeProgram p;
    const int b = p.add_block(Cone::RotatedSecondOrder, 3);
    p.add_cost(p.var(b, 0), 1.0);
    p.add_term(p.add_row(0.5), p.var(b, 1), 1.0);
    p.add_term(p.add_row(3.0), p.var(b, 2), 1.0);
    const ConicSolution s = solve(p);
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.primal_objective == doctest::Approx(9.0).epsilon(1e-7));
    check_certificate(p, s, 1e-7);
}

TEST_CASE("free variables: min (x - 2)^2 via epigraph with x free") {
    ConeProgram p;
    const int fx = p.add_block(Cone::Free, 1);
    const int q = p.add_block(Cone::RotatedSecondOrder, 3); // (t, 1/2, x - 2)
    p.add_cost(p.var(q, 0), 1.0);
    p.add_term(p.add_row(0.5), p.var(q, 1), 1.0);
    const int r = p.add_row(-2.0);
    p.add_term(r, p.var(q, 2), 1.0);
    p.add_term(r, p.var(fx, 0), -1.0);
    // plus a linear term -x that moves the minimizer to x = 2.5 with value -2.25
    p.add_cost(p.var(fx, 0), -1.0);
    const ConicSolution s = solve(p);
    REQUIRE(s.status == Status::Optimal);
    CHECK(s.x(0) == doctest::Approx(2.5).epsilon(1e-6));
    CHECK(s.primal_objective == doctest::Approx(-2.25).epsilon(1e-7));
    check_certificate(p, s, 1e-7);
}

TEST_CASE("certificate check catches perturbed and zero solutions") {
    const ConeProgram p = lp_example();
    ConicSolution s = solve(p);
    REQUIRE(s.status == Status::Optimal);
    ConicSolution perturbed = s;
    perturbed.x(0) += 1e-3;
    CHECK(verify_certificate(p, perturbed).primal_residual >= 1e-4);

    ConicSolution zero = s;
    zero.x.setZero();
    CHECK(verify_certificate(p, zero).primal_residual == doctest::Approx(3.0));
}

TEST_CASE("infeasible and unbounded LPs are flagged") {
    {
        // x1 + x2 = -1 with x >= 0
        ConeProgram p;
        const int b = p.add_block(Cone::NonNeg, 2);
        const int r = p.add_row(-1.0);
        p.add_term(r, p.var(b, 0), 1.0);
        p.add_term(r, p.var(b, 1), 1.0);
        CHECK(solve(p).status == Status::Infeasible);
    }
    {
        // min -x1 s.t. x1 - x2 = 0, x >= 0
        ConeProgram p;
        const int b = p.add_block(Cone::NonNeg, 2);
        p.add_cost(p.var(b, 0), -1.0);
        const int r = p.add_row(0.0);
        p.add_term(r, p.var(b, 0), 1.0);
        p.add_term(r, p.var(b, 1), -1.0);
        CHECK(solve(p).status == Status::Unbounded);
    }
}

TEST_CASE("iteration limit is reported") {
    IpmSettings st;
    st.max_iterations = 1;
    CHECK(solve(sdp_example(), st).status == Status::IterLimit);
}

namespace {

// Random mixed program that is feasible and bounded by construction: choose an
// interior x0 and dual (y0, s0 interior), then set b = A x0 and c = A^T y0 + s0.
ConeProgram random_program(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    ConeProgram p;
    const int nn = p.add_block(Cone::NonNeg, 3);
    const int sc = p.add_block(Cone::SecondOrder, 4);
    const int ps = p.add_block(Cone::Psd, 3);
    const int fr = p.add_block(Cone::Free, 2);
    const int n = p.num_vars();
    Vector x0(n), s0 = Vector::Zero(n);
    x0.segment(0, 3) << 1.0, 2.0, 0.5;
    s0.segment(0, 3) << 0.7, 0.3, 1.1;
    x0.segment(3, 4) << 3.0, 1.0, -1.0, 0.5;
    s0.segment(3, 4) << 2.0, 0.5, 0.5, -0.5;
    const Matrix X = (Matrix(3, 3) << 2, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0).finished();
    const Matrix S = (Matrix(3, 3) << 1, -0.2, 0, -0.2, 2, 0.1, 0, 0.1, 1.2).finished();
    int idx = p.block(ps).offset;
    for (int j = 0; j < 3; ++j) {
        for (int i = j; i < 3; ++i, ++idx) {
            const double f = i == j ? 1.0 : std::sqrt(2.0);
            x0(idx) = f * X(i, j);
            s0(idx) = f * S(i, j);
        }
    }
    x0.segment(p.block(fr).offset, 2) << 0.4, -1.3;
    const int m = 7;
    Matrix A(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            A(i, j) = g(rng);
        }
    }
    Vector y0(m);
    for (int i = 0; i < m; ++i) {
        y0(i) = g(rng);
    }
    const Vector b = A * x0;
    const Vector c = A.transpose() * y0 + s0;
    for (int i = 0; i < m; ++i) {
        const int r = p.add_row(b(i));
        for (int j = 0; j < n; ++j) {
            p.add_term(r, j, A(i, j));
        }
    }
    for (int j = 0; j < n; ++j) {
        p.add_cost(j, c(j));
    }
    (void)nn;
    (void)sc;
    return p;
}

} // namespace

TEST_CASE("property: weak duality, certificates and determinism on random programs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const ConeProgram p = random_program(rng);
        const ConicSolution s1 = solve(p);
        const ConicSolution s2 = solve(p);
        REQUIRE(s1.status == Status::Optimal);
        CHECK(s2.status == s1.status);
        CHECK(s1.primal_objective == s2.primal_objective);
        CHECK(s1.dual_objective == s2.dual_objective);
        CHECK(s1.primal_objective >= s1.dual_objective - s1.gap_tol * (1.0 + std::abs(s1.primal_objective)));
        CHECK(std::abs(s1.primal_objective - s1.dual_objective) <=
              s1.gap_tol * (1.0 + std::abs(s1.primal_objective)));
        CHECK(s1.primal_residual <= s1.feas_tol);
        CHECK(s1.dual_residual <= s1.feas_tol);
        const CertificateReport rep = verify_certificate(p, s1);
        CHECK(rep.cone_violation <= 1e-7);
    }
}

TEST_CASE("property: scaling the objective scales the optimum") {
    const ConeProgram base = soc_example();
    const double factor = 7.5;
    ConeProgram scaled = base;
    for (int j = 0; j < scaled.num_vars(); ++j) {
        scaled.add_cost(j, (factor - 1.0) * base.cost()[j]);
    }
    const ConicSolution a = solve(base);
    const ConicSolution b = solve(scaled);
    REQUIRE(a.status == Status::Optimal);
    REQUIRE(b.status == Status::Optimal);
    CHECK(std::abs(b.primal_objective - factor * a.primal_objective) <= a.gap_tol * factor * 10.0);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() <= 1e-6);
}
