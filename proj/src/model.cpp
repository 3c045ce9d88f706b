#include "drport/model.hpp"

#include "drport/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace drport {

double UtilityPWL::value(double y) const {
    double best = std::numeric_limits<double>::infinity();
    for (const UtilityPiece& p : pieces) {
        best = std::min(best, p.slope * y + p.intercept);
    }
    return best;
}

Selection::Selection(std::vector<std::uint8_t> mask) : mask_(std::move(mask)) {
    for (auto& v : mask_) {
        v = v != 0 ? 1 : 0;
    }
}

Selection Selection::all(int n) { return Selection(std::vector<std::uint8_t>(n, 1)); }

Selection Selection::from_support(int n, const std::vector<int>& support) {
    std::vector<std::uint8_t> mask(n, 0);
    for (int i : support) {
        if (i < 0 || i >= n) {
            throw Error(ErrorCode::InvalidSelection, "support index out of range");
        }
        mask[i] = 1;
    }
    return Selection(std::move(mask));
}

Selection Selection::first(int n, int k) {
    std::vector<std::uint8_t> mask(n, 0);
    std::fill(mask.begin(), mask.begin() + std::min(n, k), 1);
    return Selection(std::move(mask));
}

int Selection::count() const noexcept {
    return static_cast<int>(std::count(mask_.begin(), mask_.end(), 1));
}

std::vector<int> Selection::support() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (mask_[i]) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<int> Selection::complement() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (!mask_[i]) {
            out.push_back(i);
        }
    }
    return out;
}

Vector Selection::as_vector() const {
    Vector v(size());
    for (int i = 0; i < size(); ++i) {
        v(i) = mask_[i];
    }
    return v;
}

std::string Selection::to_string() const {
    std::string s;
    for (auto v : mask_) {
        s.push_back(v ? '1' : '0');
    }
    return s;
}

Moments estimate_moments(const ReturnMatrix& returns) {
    const Matrix& r = returns.values;
    const auto m = r.rows();
    if (m < 2) {
        throw Error(ErrorCode::TooFewObservations, "need at least two observations");
    }
    if (!r.allFinite()) {
        throw Error(ErrorCode::MissingValues, "return matrix has missing entries");
    }
    Moments out;
    out.mean = r.colwise().mean().transpose();
    const Matrix centered = r.rowwise() - out.mean.transpose();
    out.covariance = SymMatrix(centered.transpose() * centered / static_cast<double>(m));
    return out;
}

double normalized_exponential_utility(double y, double mu_max, double alpha) {
    return mu_max * (1.0 - std::exp(-alpha * y / mu_max)) / alpha;
}

UtilityPWL build_utility_tangents(double mu_max, double alpha, const std::vector<double>& tangent_points) {
    if (!(alpha > 0.0)) {
        throw Error(ErrorCode::NonPositiveAlpha, "alpha must be positive", "alpha");
    }
    if (!(mu_max > 0.0)) {
        throw Error(ErrorCode::NonPositiveMuMax, "largest mean return must be positive", "mu_max");
    }
    if (tangent_points.empty()) {
        throw Error(ErrorCode::InvalidUtility, "at least one tangent point required");
    }
    for (std::size_t i = 1; i < tangent_points.size(); ++i) {
        if (!(tangent_points[i] > tangent_points[i - 1])) {
            throw Error(ErrorCode::UnsortedPoints, "tangent points must be strictly increasing");
        }
    }
    UtilityPWL u;
    for (double y : tangent_points) {
        const double a = std::exp(-alpha * y / mu_max);
        u.pieces.push_back({a, normalized_exponential_utility(y, mu_max, alpha) - a * y});
    }
    return u;
}

std::vector<double> default_tangent_points(double mu_max) { return {0.0, mu_max / 2.0, mu_max}; }

UtilityPWL default_utility(const Moments& moments, double alpha) {
    const double mu_max = moments.mean.maxCoeff();
    return build_utility_tangents(mu_max, alpha, default_tangent_points(mu_max));
}

double loss(const UtilityPWL& utility, const Portfolio& x, const Vector& xi) {
    if (x.size() != xi.size()) {
        throw Error(ErrorCode::DimensionMismatch, "loss: portfolio and return sizes differ");
    }
    const double y = xi.dot(x);
    double worst = -std::numeric_limits<double>::infinity();
    for (const UtilityPiece& p : utility.pieces) {
        worst = std::max(worst, -p.slope * y - p.intercept);
    }
    return worst;
}

const Instance& validate_instance(const Instance& instance) {
    const int n = instance.n();
    if (n < 1 || instance.moments.covariance.dim() != n) {
        throw Error(ErrorCode::DimensionMismatch, "mean and covariance sizes differ");
    }
    if (!instance.moments.mean.allFinite() || !instance.moments.covariance.matrix().allFinite()) {
        throw Error(ErrorCode::MissingValues, "moments contain non-finite entries");
    }
    if (!(instance.ambiguity.kappa1 > 0.0)) {
        throw Error(ErrorCode::AssumptionViolation, "kappa1 must be positive", "kappa1");
    }
    if (!(instance.ambiguity.kappa2 >= 1.0)) {
        throw Error(ErrorCode::AssumptionViolation, "kappa2 must be at least 1", "kappa2");
    }
    const SymMatrix& cov = instance.moments.covariance;
    const double threshold = 1e-10 * cov.trace() / n;
    if (!(min_eigenvalue(cov) > threshold) || !(threshold > 0.0)) {
        throw Error(ErrorCode::AssumptionViolation, "covariance is not positive definite", "covariance");
    }
    const auto& pieces = instance.utility.pieces;
    if (pieces.empty()) {
        throw Error(ErrorCode::InvalidUtility, "utility needs at least one piece", "utility");
    }
    for (std::size_t l = 0; l < pieces.size(); ++l) {
        if (!(pieces[l].slope > 0.0) || !std::isfinite(pieces[l].intercept)) {
            throw Error(ErrorCode::InvalidUtility, "utility slopes must be positive", "utility");
        }
        if (l > 0 && !(pieces[l].slope < pieces[l - 1].slope)) {
            throw Error(ErrorCode::InvalidUtility, "utility slopes must be strictly decreasing", "utility");
        }
    }
    if (instance.k < 1 || instance.k > n) {
        throw Error(ErrorCode::InvalidCardinality, "k must lie in [1, N]", "k");
    }
    if (!(instance.gamma > 0.0) || !std::isfinite(instance.gamma)) {
        throw Error(ErrorCode::InvalidGamma, "gamma must be positive", "gamma");
    }
    return instance;
}

void check_selection(const Instance& instance, const Selection& z) {
    if (z.size() != instance.n() || z.count() != instance.k) {
        throw Error(ErrorCode::InvalidSelection, "selection must have length N and exactly k ones: " + z.to_string(),
                    z.to_string());
    }
}

} // namespace drport
