#pragma once

// Return-history CSV, OR-Library moment files and the result JSON schema.

#include "drport/model.hpp"
#include "drport/upper_level.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace drport {

struct ParsedReturns {
    ReturnMatrix returns;
    int dropped = 0;
    std::vector<std::string> dropped_labels;
};

/// Header row "period,label1,...", then one row per period. Any column with an
/// empty or non-numeric cell is dropped entirely.
ParsedReturns parse_returns_csv(std::istream& in);
ParsedReturns parse_returns_csv(const std::filesystem::path& path);

/// OR-Library portfolio format: N, then N lines "mean sd", then "i j rho"
/// triplets with 1-based indices. Every off-diagonal pair must be present.
Moments parse_orlibrary(std::istream& in, double mean_scale = 1.0, double cov_scale = 1.0);
Moments parse_orlibrary(const std::filesystem::path& path, double mean_scale = 1.0, double cov_scale = 1.0);

/// 100 (UB - LB) / max(|UB|, 1e-12)
double gap_percent(double upper, double lower);

/// obj, gap_pct, time_s, cuts, nodes, mode, selection (indices), weights, plus
/// lower_bound, upper_bound, iterations and status. `labels` adds asset names.
nlohmann::json result_to_json(const SolveResult& result, const std::vector<std::string>& labels = {});
void write_result_json(const SolveResult& result, std::ostream& out, const std::vector<std::string>& labels = {});

} // namespace drport
