#pragma once

// Problem data for the cardinality-constrained distributionally robust
// portfolio model: moments, ambiguity radii, piecewise-linear utility,
// regularization and the cardinality bound.

#include "drport/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace drport {

/// M observations x N assets of period returns. Missing cells are NaN.
struct ReturnMatrix {
    Matrix values;
    std::vector<std::string> labels;
    std::vector<std::string> periods;

    int observations() const noexcept { return static_cast<int>(values.rows()); }
    int assets() const noexcept { return static_cast<int>(values.cols()); }
};

struct Moments {
    Vector mean;
    SymMatrix covariance;

    int n_assets() const noexcept { return static_cast<int>(mean.size()); }
};

struct UncertaintySet {
    double kappa1 = 1.0; ///< radius of the mean ellipsoid
    double kappa2 = 4.0; ///< bound on the second central moment, >= 1
};

struct UtilityPiece {
    double slope = 1.0;
    double intercept = 0.0;
};

/// Concave utility u(y) = min_l (a_l y + b_l), slopes strictly decreasing.
struct UtilityPWL {
    std::vector<UtilityPiece> pieces;

    int size() const noexcept { return static_cast<int>(pieces.size()); }
    double value(double y) const;
};

struct Instance {
    Moments moments;
    UncertaintySet ambiguity;
    UtilityPWL utility;
    double gamma = 1.0;
    int k = 1;

    int n() const noexcept { return moments.n_assets(); }
};

/// Binary asset selection z in {0,1}^N.
class Selection {
public:
    Selection() = default;
    explicit Selection(std::vector<std::uint8_t> mask);

    static Selection all(int n);
    static Selection from_support(int n, const std::vector<int>& support);
    /// {0, ..., k-1}
    static Selection first(int n, int k);

    int size() const noexcept { return static_cast<int>(mask_.size()); }
    int count() const noexcept;
    bool operator[](int i) const { return mask_.at(i) != 0; }
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
    std::vector<int> support() const;
    std::vector<int> complement() const;
    Vector as_vector() const;
    std::string to_string() const; ///< e.g. "0110"

    friend bool operator==(const Selection&, const Selection&) = default;
    friend auto operator<=>(const Selection&, const Selection&) = default;

private:
    std::vector<std::uint8_t> mask_;
};

using Portfolio = Vector;

/// Sample mean and covariance with the 1/M normalization.
Moments estimate_moments(const ReturnMatrix& returns);

/// u~(y) = mu_max (1 - exp(-alpha y / mu_max)) / alpha
double normalized_exponential_utility(double y, double mu_max, double alpha);

/// Tangent lines of the normalized exponential utility at the given points.
UtilityPWL build_utility_tangents(double mu_max, double alpha, const std::vector<double>& tangent_points);

/// {0, mu_max/2, mu_max}
std::vector<double> default_tangent_points(double mu_max);

/// Tangents at the default points with mu_max = max entry of the sample mean.
UtilityPWL default_utility(const Moments& moments, double alpha);

/// max_l (-a_l xi^T x - b_l)
double loss(const UtilityPWL& utility, const Portfolio& x, const Vector& xi);

/// Throws Error on the first violated condition; returns the instance unchanged.
const Instance& validate_instance(const Instance& instance);

/// Throws InvalidSelection unless z has length N and exactly k ones.
void check_selection(const Instance& instance, const Selection& z);

} // namespace drport
