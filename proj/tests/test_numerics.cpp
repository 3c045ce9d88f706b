#include "doctest.h"

#include "drport/error.hpp"
#include "drport/numerics.hpp"

#include <cmath>
#include <random>

using namespace drport;

namespace {

Matrix random_symmetric(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            a(i, j) = a(j, i) = u(rng);
        }
    }
    return a;
}

SymMatrix mat2(double a, double b, double c) {
    Matrix m(2, 2);
    m << a, b, b, c;
    return SymMatrix(m);
}

} // namespace

TEST_CASE("cholesky of identity is identity") {
    const Matrix l = cholesky(SymMatrix::identity(3));
    CHECK((l - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("cholesky of a 2x2 positive definite matrix") {
    const Matrix l = cholesky(mat2(4, 2, 3));
    CHECK(l(0, 0) == doctest::Approx(2.0));
    CHECK(l(1, 0) == doctest::Approx(1.0));
    CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(l(0, 1) == 0.0);
    const Matrix back = l * l.transpose();
    CHECK((back - mat2(4, 2, 3).matrix()).cwiseAbs().maxCoeff() <= 1e-12 * 4.0);
}

TEST_CASE("cholesky rejects an indefinite matrix") {
    try {
        cholesky(mat2(1, 2, 1));
        FAIL("expected NotPositiveDefinite");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotPositiveDefinite);
    }
}

TEST_CASE("solve_posdef examples") {
    const Vector x1 = solve_posdef(SymMatrix::identity(2), Vector{{3.0, -1.0}});
    CHECK(x1(0) == doctest::Approx(3.0));
    CHECK(x1(1) == doctest::Approx(-1.0));

    const SymMatrix a = mat2(4, 2, 3);
    const Vector b{{1.0, 0.0}};
    const Vector x2 = solve_posdef(a, b);
    CHECK(x2(0) == doctest::Approx(0.375));
    CHECK(x2(1) == doctest::Approx(-0.25));
    // multiply back
    CHECK((a.matrix() * x2 - b).norm() <= 1e-10 * (a.matrix().norm() * x2.norm() + b.norm()));

    CHECK_THROWS_AS(solve_posdef(mat2(2, 0, 0), Vector{{1.0, 1.0}}), Error);
}

TEST_CASE("min_eigenvalue examples") {
    CHECK(min_eigenvalue(SymMatrix::identity(4)) == doctest::Approx(1.0));
    CHECK(min_eigenvalue(SymMatrix::diagonal(Vector{{5.0, -2.0, 7.0}})) == doctest::Approx(-2.0));
    // roots of (2 - t)^2 - 1 = 0
    const double root = 2.0 - 1.0;
    CHECK(min_eigenvalue(mat2(2, 1, 2)) == doctest::Approx(root).epsilon(1e-12));
}

TEST_CASE("property: cholesky reconstructs random positive definite matrices") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + trial % 12;
        const Matrix g = random_symmetric(rng, n);
        const Matrix a = g * g.transpose() + 0.1 * Matrix::Identity(n, n);
        const Matrix l = cholesky(SymMatrix(a));
        CHECK((l * l.transpose() - a).norm() <= 1e-10 * a.norm());
    }
}

TEST_CASE("property: eigenvalue shift") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + trial % 9;
        const Matrix a = random_symmetric(rng, n);
        const double t = u(rng);
        const double shifted = min_eigenvalue(SymMatrix(a + t * Matrix::Identity(n, n)));
        CHECK(std::abs(shifted - (min_eigenvalue(SymMatrix(a)) + t)) <= 1e-8);
    }
}

TEST_CASE("SymMatrix mirrors the lower triangle and extracts principal blocks") {
    Matrix m(3, 3);
    m << 1, 99, 99, 2, 3, 99, 4, 5, 6;
    const SymMatrix s(m);
    CHECK(s(0, 1) == 2.0);
    CHECK(s(1, 0) == 2.0);
    const int idx[] = {0, 2};
    const SymMatrix p = s.principal(idx);
    CHECK(p.dim() == 2);
    CHECK(p(1, 0) == 4.0);
    CHECK(p(1, 1) == 6.0);
    CHECK_THROWS_AS(SymMatrix(Matrix(2, 3)), Error);
}
