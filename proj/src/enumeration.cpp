#include "drport/enumeration.hpp"

#include "drport/error.hpp"

#include <limits>

namespace drport {

std::vector<Selection> enumerate_selections(int n, int k) {
    if (n < 1 || k < 1 || k > n) {
        throw Error(ErrorCode::InvalidCardinality, "enumeration needs 1 <= k <= N", "k");
    }
    std::vector<Selection> out;
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) {
        idx[i] = i;
    }
    while (true) {
        out.push_back(Selection::from_support(n, idx));
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i) {
            --i;
        }
        if (i < 0) {
            return out;
        }
        ++idx[i];
        for (int j = i + 1; j < k; ++j) {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

EnumerationResult brute_force(const Instance& instance, const conic::IpmSettings& settings) {
    validate_instance(instance);
    EnumerationResult out;
    out.value = std::numeric_limits<double>::infinity();
    for (const Selection& z : enumerate_selections(instance.n(), instance.k)) {
        const double v = solve_lower(instance, z, settings).f_prime;
        out.values.push_back(v);
        if (v < out.value) {
            out.value = v;
            out.best = z;
        }
    }
    return out;
}

} // namespace drport
