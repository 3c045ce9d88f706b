#pragma once

// Exhaustive reference solver over all C(N, k) selections, for verification at
// small N.

#include "drport/lower_level.hpp"
#include "drport/model.hpp"

#include <vector>

namespace drport {

/// Every k-subset of {0..n-1} in lexicographic order of supports.
std::vector<Selection> enumerate_selections(int n, int k);

struct EnumerationResult {
    Selection best;
    double value = 0.0;
    std::vector<double> values; ///< f(z) in enumeration order
};

/// min over Z_N^k of solve_lower; the first minimizer wins ties.
EnumerationResult brute_force(const Instance& instance, const conic::IpmSettings& settings = {});

} // namespace drport
