#pragma once

// Cutting-plane master over Z_N^k = {z in {0,1}^N : sum z = k}.
//
//     minimize theta  s.t.  theta >= theta_LB,
//                           theta >= f_j + g_j^T (z - z_j)   for every pooled cut,
//                           z not in the excluded set (no-good cuts)
//
// The master is solved by a small branch and bound whose LP relaxations go
// through the conic IPM. Two drivers share it: the iterative loop that re-solves
// the master after every cut, and a single tree where integral nodes trigger a
// lazy lower-level evaluation.

#include "drport/conic.hpp"
#include "drport/lower_level.hpp"
#include "drport/model.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace drport {

enum class SolveMode { Iterative, SingleTree };
enum class Termination { EpsOptimal, TimeLimit, IterLimit };

std::string_view to_string(SolveMode mode);
std::string_view to_string(Termination reason);
std::optional<SolveMode> parse_mode(std::string_view text);

struct CutPool {
    std::vector<Cut> cuts;
    /// Selections cut off by no-good constraints.
    std::vector<Selection> excluded;

    /// max(theta_lb, max_j cut_j(z)), or +inf when z is excluded.
    double theta_at(const Selection& z, double theta_lb) const;
    bool has_anchor(const Selection& z) const;
    int size() const noexcept { return static_cast<int>(cuts.size() + excluded.size()); }
};

struct MasterSettings {
    long long node_budget = 10'000'000;
    conic::IpmSettings lp = default_lp_settings();

    static conic::IpmSettings default_lp_settings();
};

struct MasterSolution {
    Selection z;
    double theta = std::numeric_limits<double>::infinity(); ///< exact cut value at z
    double bound = -std::numeric_limits<double>::infinity(); ///< proven lower bound of the master
    long long nodes = 0;
    bool feasible = true;
    bool budget_exhausted = false;
};

/// Branch and bound: best bound first, ties (within 1e-9 relative) by lowest
/// node id, branching on the most fractional z_n with the down child first.
MasterSolution solve_master_relaxation(int n, int k, const CutPool& pool, double theta_lb,
                                       const MasterSettings& settings = {});

struct TraceRecord {
    int t = 0;
    double lb = 0.0;
    double ub = 0.0;
    int pool = 0;
    Selection anchor;
    double theta = 0.0; ///< cut-pool value at the anchor before it was evaluated
};

struct SolveConfig {
    double epsilon = 1e-5;
    double time_limit_s = 3600.0;
    SolveMode mode = SolveMode::SingleTree;
    long long node_budget = 10'000'000;
    /// Threads for node LPs and lower-level solves in single-tree mode. Results do
    /// not depend on it.
    int workers = 1;
    /// Line-delimited JSON trace records are written here when set.
    std::ostream* trace = nullptr;
    conic::IpmSettings ipm;
};

struct SolveResult {
    Selection selection;
    Portfolio x;
    double objective = 0.0;
    double lower_bound = 0.0;
    double upper_bound = 0.0;
    double gap = 0.0; ///< upper_bound - lower_bound
    int iterations = 0;
    int cuts = 0;
    long long nodes = 0;
    double time_s = 0.0;
    SolveMode mode = SolveMode::SingleTree;
    Termination reason = Termination::EpsOptimal;
    double theta_lb = 0.0;
    std::vector<TraceRecord> trace;
};

/// Value and cut of the lower level at z; feasible = false asks for a no-good cut.
struct OracleResult {
    bool feasible = true;
    Cut cut;
};
/// Must be safe to call concurrently.
using SelectionOracle = std::function<OracleResult(const Selection&)>;

/// Runs either driver against an arbitrary oracle. Fills everything except x and
/// objective, which are left to the caller.
SolveResult run_cutting_plane(int n, int k, double theta_lb, const SelectionOracle& oracle, const SolveConfig& config);

/// Above this N the full-dimension f(1) is too expensive for the dense solver and
/// initial_lower_bound falls back to nominal_lower_bound.
inline constexpr int kFullLowerBoundLimit = 40;

/// f(1): the lower level with every asset allowed, a lower bound on f over Z_N^k.
/// For N > kFullLowerBoundLimit, nominal_lower_bound instead.
double initial_lower_bound(const Instance& instance, const conic::IpmSettings& settings = {});

/// min over the simplex of loss(x, mu) + |x|^2 / (2 gamma). The point mass at mu
/// lies in the ambiguity set, so this is below f(z) for every z.
double nominal_lower_bound(const Instance& instance, const conic::IpmSettings& settings = {});

SolveResult cutting_plane_solve(const Instance& instance, const SolveConfig& config = {});

} // namespace drport
