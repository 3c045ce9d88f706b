#include "doctest.h"

#include "drport/error.hpp"
#include "drport/model.hpp"

#include <cmath>
#include <random>

using namespace drport;

namespace {

ReturnMatrix rows(std::initializer_list<std::initializer_list<double>> data) {
    ReturnMatrix r;
    const int m = static_cast<int>(data.size());
    const int n = static_cast<int>(data.begin()->size());
    r.values.resize(m, n);
    int i = 0;
    for (const auto& row : data) {
        int j = 0;
        for (double v : row) {
            r.values(i, j++) = v;
        }
        ++i;
    }
    return r;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::DimensionMismatch;
}

Instance valid_instance() {
    Instance inst;
    inst.moments.mean = Vector::Ones(3);
    inst.moments.covariance = SymMatrix::identity(3);
    inst.ambiguity = {1.0, 4.0};
    inst.utility = build_utility_tangents(1.0, 10.0, default_tangent_points(1.0));
    inst.gamma = 1.0;
    inst.k = 2;
    return inst;
}

} // namespace

TEST_CASE("estimate_moments examples") {
    const Moments flat = estimate_moments(rows({{1, 2}, {1, 2}}));
    CHECK(flat.mean(0) == 1.0);
    CHECK(flat.mean(1) == 2.0);
    CHECK(flat.covariance.max_abs() == 0.0);

    const Moments two = estimate_moments(rows({{0, 0}, {2, 2}}));
    CHECK(two.mean(0) == doctest::Approx(1.0));
    CHECK(two.mean(1) == doctest::Approx(1.0));
    // 1/M normalization: ((-1)^2 + 1^2) / 2 = 1
    CHECK(two.covariance(0, 0) == doctest::Approx(1.0));
    CHECK(two.covariance(0, 1) == doctest::Approx(1.0));
    CHECK(two.covariance(1, 1) == doctest::Approx(1.0));

    CHECK(code_of([] { estimate_moments(rows({{1, 2}})); }) == ErrorCode::TooFewObservations);
    ReturnMatrix missing = rows({{1, 2}, {3, 4}});
    missing.values(1, 0) = std::nan("");
    CHECK(code_of([&] { estimate_moments(missing); }) == ErrorCode::MissingValues);
}

TEST_CASE("build_utility_tangents examples") {
    const double mu_max = 2.0;
    const double alpha = 10.0;
    const UtilityPWL u = build_utility_tangents(mu_max, alpha, {0.0, mu_max / 2, mu_max});
    REQUIRE(u.size() == 3);
    CHECK(u.pieces[0].slope == doctest::Approx(1.0));
    CHECK(u.pieces[1].slope == doctest::Approx(std::exp(-5.0)));
    CHECK(u.pieces[2].slope == doctest::Approx(std::exp(-10.0)));
    const auto ut = [&](double y) { return mu_max * (1 - std::exp(-alpha * y / mu_max)) / alpha; };
    CHECK(u.pieces[0].intercept == doctest::Approx(0.0));
    CHECK(u.pieces[1].intercept == doctest::Approx(ut(1.0) - std::exp(-5.0) * 1.0));
    CHECK(u.pieces[2].intercept == doctest::Approx(ut(2.0) - std::exp(-10.0) * 2.0));

    const UtilityPWL one = build_utility_tangents(3.0, 0.7, {0.0});
    REQUIRE(one.size() == 1);
    CHECK(one.pieces[0].slope == 1.0);
    CHECK(one.pieces[0].intercept == 0.0);

    CHECK(code_of([] { build_utility_tangents(1.0, 10.0, {1.0, 0.0}); }) == ErrorCode::UnsortedPoints);
    CHECK(code_of([] { build_utility_tangents(1.0, 0.0, {0.0}); }) == ErrorCode::NonPositiveAlpha);
    CHECK(code_of([] { build_utility_tangents(-1.0, 1.0, {0.0}); }) == ErrorCode::NonPositiveMuMax);
}

TEST_CASE("loss examples") {
    UtilityPWL lin{{{1.0, 0.0}}};
    CHECK(loss(lin, Vector{{0.5}}, Vector{{1.0}}) == doctest::Approx(-0.5));

    UtilityPWL two{{{1.0, 0.0}, {0.5, 0.2}}};
    CHECK(loss(two, Vector{{1.0}}, Vector{{1.0}}) == doctest::Approx(-0.7));

    const UtilityPWL fig = build_utility_tangents(1.5, 10.0, default_tangent_points(1.5));
    for (const auto& p : fig.pieces) {
        CHECK(p.intercept >= 0.0);
    }
    CHECK(loss(fig, Vector{{0.3, 0.7}}, Vector{{0.0, 0.0}}) == doctest::Approx(0.0));
}

TEST_CASE("validate_instance examples") {
    const Instance ok = valid_instance();
    CHECK_NOTHROW(validate_instance(ok));

    Instance bad = ok;
    bad.ambiguity.kappa1 = 0.0;
    try {
        validate_instance(bad);
        FAIL("expected AssumptionViolation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AssumptionViolation);
        CHECK(e.detail() == "kappa1");
    }

    bad = ok;
    bad.moments.covariance = SymMatrix::diagonal(Vector{{1.0, 0.0, 2.0}});
    try {
        validate_instance(bad);
        FAIL("expected AssumptionViolation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AssumptionViolation);
        CHECK(e.detail() == "covariance");
    }

    bad = ok;
    bad.ambiguity.kappa2 = 0.5;
    CHECK(code_of([&] { validate_instance(bad); }) == ErrorCode::AssumptionViolation);
    bad = ok;
    bad.k = 4;
    CHECK(code_of([&] { validate_instance(bad); }) == ErrorCode::InvalidCardinality);
    bad = ok;
    bad.k = 0;
    CHECK(code_of([&] { validate_instance(bad); }) == ErrorCode::InvalidCardinality);
    bad = ok;
    bad.gamma = 0.0;
    CHECK(code_of([&] { validate_instance(bad); }) == ErrorCode::InvalidGamma);
    bad = ok;
    bad.utility.pieces[1].slope = 2.0;
    CHECK(code_of([&] { validate_instance(bad); }) == ErrorCode::InvalidUtility);
}

TEST_CASE("property: tangents overestimate the concave utility") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double mu_max = u(rng);
        const double alpha = u(rng) * 3;
        std::vector<double> pts{-mu_max, 0.0, mu_max * 0.3, mu_max};
        const UtilityPWL pwl = build_utility_tangents(mu_max, alpha, pts);
        for (int i = 0; i <= 200; ++i) {
            const double y = -2 * mu_max + 4 * mu_max * i / 200.0;
            const double exact = normalized_exponential_utility(y, mu_max, alpha);
            CHECK(pwl.value(y) >= exact - 1e-12 * std::max(1.0, std::abs(exact)));
        }
    }
}

TEST_CASE("property: loss is the negated utility of the portfolio return") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const UtilityPWL pwl = build_utility_tangents(1.0, 10.0, default_tangent_points(1.0));
    for (int trial = 0; trial < 100; ++trial) {
        Vector x(4), xi(4);
        for (int i = 0; i < 4; ++i) {
            x(i) = std::abs(g(rng));
            xi(i) = g(rng);
        }
        x /= x.sum();
        CHECK(loss(pwl, x, xi) == doctest::Approx(-pwl.value(xi.dot(x))).epsilon(1e-14));
    }
}

TEST_CASE("property: centered data has a zero mean estimate") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 10.0);
    for (int trial = 0; trial < 10; ++trial) {
        ReturnMatrix r;
        r.values.resize(30, 5);
        for (int i = 0; i < 30; ++i) {
            for (int j = 0; j < 5; ++j) {
                r.values(i, j) = g(rng);
            }
        }
        r.values.rowwise() -= r.values.colwise().mean();
        const double scale = r.values.cwiseAbs().maxCoeff();
        CHECK(estimate_moments(r).mean.norm() <= 1e-12 * scale * 30);
    }
}

TEST_CASE("Selection helpers") {
    const Selection z = Selection::from_support(5, {1, 3});
    CHECK(z.count() == 2);
    CHECK(z.to_string() == "01010");
    CHECK(z.support() == std::vector<int>{1, 3});
    CHECK(z.complement() == std::vector<int>{0, 2, 4});
    CHECK(Selection::first(4, 2).to_string() == "1100");
    CHECK(Selection::all(3).count() == 3);
    Instance inst = valid_instance();
    CHECK_NOTHROW(check_selection(inst, Selection::first(3, 2)));
    CHECK(code_of([&] { check_selection(inst, Selection::first(3, 1)); }) == ErrorCode::InvalidSelection);
}
