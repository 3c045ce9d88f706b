#include "drport/upper_level.hpp"

#include "drport/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <ostream>
#include <sstream>
#include <thread>

namespace drport {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Node bounds this close count as ties; a rounded candidate this close to the LP
// bound closes its node.
constexpr double kTieTolerance = 1e-9;
constexpr double kCloseTolerance = 1e-7;
// Node batch of the single tree. Fixed so that results do not depend on workers.
constexpr int kBatch = 4;
// Fractional values are compared on this grid so that IPM noise cannot reorder ties.
constexpr double kGrid = 1e6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs fn(0..count-1) on up to `workers` threads. The exception of the lowest
// failing index is rethrown so that failures are deterministic too.
template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::atomic<int> next{0};
    const auto work = [&] {
        for (int i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> threads;
        for (int t = 1; t < std::min(workers, count); ++t) {
            threads.emplace_back(work);
        }
        work();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

long long grid(double v) { return std::llround(v * kGrid); }

struct Node {
    long long id = 0;
    std::vector<std::int8_t> fix; // -1 free, 0 or 1 fixed
    double bound = -kInf;
};

struct NodeResult {
    bool feasible = false;
    double bound = -kInf;
    Selection candidate;
    double candidate_theta = kInf;
    bool closed = false; ///< candidate attains the bound
    int branch = -1;
};

conic::ConicSolution solve_lp(const conic::ConeProgram& p, const conic::IpmSettings& settings) {
    conic::ConicSolution sol = conic::solve(p, settings);
    if (sol.status == conic::Status::NumericFailure || sol.status == conic::Status::IterLimit) {
        conic::IpmSettings loose = settings;
        loose.feas_tol = std::max(settings.feas_tol, kRetryTolerance);
        loose.gap_tol = std::max(settings.gap_tol, kRetryTolerance);
        sol = conic::solve(p, loose);
    }
    return sol;
}

// LP relaxation of the master at a node: z_F in [0,1], sum z = k, theta = theta_lb + t.
NodeResult solve_node(int n, int k, const CutPool& pool, double theta_lb, const Node& node,
                      const conic::IpmSettings& lp) {
    NodeResult out;
    std::vector<int> free;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
        if (node.fix[i] < 0) {
            free.push_back(i);
        } else {
            ones += node.fix[i];
        }
    }
    const int nf = static_cast<int>(free.size());
    const int r = k - ones;
    if (r < 0 || r > nf) {
        return out;
    }
    if (r == 0 || r == nf) {
        std::vector<std::uint8_t> mask(n);
        for (int i = 0; i < n; ++i) {
            mask[i] = node.fix[i] < 0 ? (r == 0 ? 0 : 1) : node.fix[i];
        }
        out.candidate = Selection(std::move(mask));
        out.candidate_theta = pool.theta_at(out.candidate, theta_lb);
        out.feasible = out.candidate_theta < kInf;
        out.bound = out.candidate_theta;
        out.closed = true;
        return out;
    }

    conic::ConeProgram p;
    const int zb = p.add_block(conic::Cone::NonNeg, nf);
    const int ub = p.add_block(conic::Cone::NonNeg, nf);
    const int tb = p.add_block(conic::Cone::NonNeg, 1);
    p.add_cost(p.var(tb, 0), 1.0);
    const int card = p.add_row(r);
    for (int j = 0; j < nf; ++j) {
        p.add_term(card, p.var(zb, j), 1.0);
        const int row = p.add_row(1.0);
        p.add_term(row, p.var(zb, j), 1.0);
        p.add_term(row, p.var(ub, j), 1.0);
    }
    if (!pool.cuts.empty()) {
        const int sb = p.add_block(conic::Cone::NonNeg, static_cast<int>(pool.cuts.size()));
        for (std::size_t c = 0; c < pool.cuts.size(); ++c) {
            const Cut& cut = pool.cuts[c];
            double rhs = cut.value - theta_lb;
            for (int i = 0; i < n; ++i) {
                rhs -= cut.gradient(i) * (cut.anchor[i] ? 1.0 : 0.0);
                if (node.fix[i] == 1) {
                    rhs += cut.gradient(i);
                }
            }
            const int row = p.add_row(rhs);
            p.add_term(row, p.var(tb, 0), 1.0);
            for (int j = 0; j < nf; ++j) {
                if (cut.gradient(free[j]) != 0.0) {
                    p.add_term(row, p.var(zb, j), -cut.gradient(free[j]));
                }
            }
            p.add_term(row, p.var(sb, static_cast<int>(c)), -1.0);
        }
    }
    // sum_{i in S} (1 - z_i) + sum_{i not in S} z_i >= 1
    struct NoGood {
        const Selection* s;
        double rhs;
    };
    std::vector<NoGood> active;
    for (const Selection& s : pool.excluded) {
        double fixed_part = 0.0;
        int in_free = 0;
        for (int i = 0; i < n; ++i) {
            if (node.fix[i] >= 0) {
                fixed_part += s[i] ? 1 - node.fix[i] : node.fix[i];
            } else if (s[i]) {
                ++in_free;
            }
        }
        if (fixed_part < 1.0) {
            active.push_back({&s, 1.0 - fixed_part - in_free});
        }
    }
    if (!active.empty()) {
        const int gb = p.add_block(conic::Cone::NonNeg, static_cast<int>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) {
            const int row = p.add_row(active[a].rhs);
            for (int j = 0; j < nf; ++j) {
                p.add_term(row, p.var(zb, j), (*active[a].s)[free[j]] ? -1.0 : 1.0);
            }
            p.add_term(row, p.var(gb, static_cast<int>(a)), -1.0);
        }
    }

    const conic::ConicSolution sol = solve_lp(p, lp);
    if (sol.status == conic::Status::Infeasible) {
        return out;
    }
    if (sol.status != conic::Status::Optimal) {
        throw Error(ErrorCode::SolverFailure,
                    "master relaxation ended with " + std::string(conic::to_string(sol.status)));
    }
    out.feasible = true;
    out.bound = std::max(node.bound, theta_lb + std::min(sol.primal_objective, sol.dual_objective));

    // Candidate: the r largest free values, lowest index first among equals.
    std::vector<int> order(nf);
    for (int j = 0; j < nf; ++j) {
        order[j] = j;
    }
    const auto zval = [&](int j) { return sol.x(p.var(zb, j)); };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return grid(zval(a)) > grid(zval(b)); });
    std::vector<std::uint8_t> mask(n);
    for (int i = 0; i < n; ++i) {
        mask[i] = node.fix[i] == 1 ? 1 : 0;
    }
    for (int j = 0; j < r; ++j) {
        mask[free[order[j]]] = 1;
    }
    out.candidate = Selection(std::move(mask));
    out.candidate_theta = pool.theta_at(out.candidate, theta_lb);
    out.closed = out.candidate_theta <= out.bound + kCloseTolerance * (1.0 + std::abs(out.bound));

    long long best = std::numeric_limits<long long>::max();
    for (int j = 0; j < nf; ++j) {
        const long long score = grid(std::abs(zval(j) - 0.5));
        if (score < best) {
            best = score;
            out.branch = free[j];
        }
    }
    return out;
}

bool ties(double a, double b) { return std::abs(a - b) <= kTieTolerance * (1.0 + std::abs(a)); }

// Open node list with best-bound selection; ids break ties.
class OpenNodes {
public:
    bool empty() const noexcept { return nodes_.empty(); }
    void push(Node node) { nodes_.push_back(std::move(node)); }

    double min_bound() const {
        double b = kInf;
        for (const Node& n : nodes_) {
            b = std::min(b, n.bound);
        }
        return b;
    }

    Node pop() {
        const double b = min_bound();
        std::size_t pick = nodes_.size();
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (ties(nodes_[i].bound, b) && (pick == nodes_.size() || nodes_[i].id < nodes_[pick].id)) {
                pick = i;
            }
        }
        Node out = std::move(nodes_[pick]);
        nodes_[pick] = std::move(nodes_.back());
        nodes_.pop_back();
        return out;
    }

private:
    std::vector<Node> nodes_;
};

void branch(OpenNodes& open, const Node& parent, int index, double bound, long long& next_id) {
    for (const std::int8_t value : {std::int8_t{0}, std::int8_t{1}}) {
        Node child;
        child.id = next_id++;
        child.fix = parent.fix;
        child.fix[index] = value;
        child.bound = bound;
        open.push(std::move(child));
    }
}

Node root_node(int n, double theta_lb) {
    Node root;
    root.fix.assign(n, -1);
    root.bound = theta_lb;
    return root;
}

void emit(const SolveConfig& config, SolveResult& result, TraceRecord record) {
    if (config.trace != nullptr) {
        nlohmann::json j = {{"t", record.t},
                            {"LB", record.lb},
                            {"UB", record.ub},
                            {"pool", record.pool},
                            {"anchor", record.anchor.to_string()},
                            {"theta", record.theta}};
        *config.trace << j.dump() << '\n';
    }
    result.trace.push_back(std::move(record));
}

void check_master_args(int n, int k) {
    if (n < 1 || k < 1 || k > n) {
        throw Error(ErrorCode::InvalidCardinality, "master needs 1 <= k <= N", "k");
    }
}

SolveResult iterative(int n, int k, double theta_lb, const SelectionOracle& oracle, const SolveConfig& config,
                      Clock::time_point start) {
    SolveResult res;
    res.mode = SolveMode::Iterative;
    res.theta_lb = theta_lb;
    CutPool pool;
    MasterSettings ms;
    ms.node_budget = config.node_budget;
    double ub = kInf;
    double lb = theta_lb;
    for (int t = 1;; ++t) {
        const MasterSolution master = solve_master_relaxation(n, k, pool, theta_lb, ms);
        res.nodes += master.nodes;
        if (!master.feasible) {
            throw Error(ErrorCode::GloballyInfeasible, "every selection is excluded");
        }
        if (master.budget_exhausted) {
            res.reason = Termination::IterLimit;
            if (ub == kInf) {
                throw Error(ErrorCode::SolverFailure, "node budget exhausted before the first incumbent");
            }
            break;
        }
        lb = std::max(lb, master.bound);
        res.iterations = t;
        const bool seen = pool.has_anchor(master.z);
        OracleResult ev;
        if (!seen) {
            ev = oracle(master.z);
            if (ev.feasible && ev.cut.value < ub) {
                ub = ev.cut.value;
                res.selection = master.z;
            }
        }
        emit(config, res, {t, std::min(lb, ub), ub, pool.size(), master.z, master.theta});
        if (ub - lb <= config.epsilon || seen) {
            res.reason = Termination::EpsOptimal;
            break;
        }
        if (ev.feasible) {
            pool.cuts.push_back(std::move(ev.cut));
        } else {
            pool.excluded.push_back(master.z);
        }
        if (seconds_since(start) > config.time_limit_s && ub < kInf) {
            res.reason = Termination::TimeLimit;
            break;
        }
    }
    res.lower_bound = std::min(lb, ub);
    res.upper_bound = ub;
    res.cuts = pool.size();
    return res;
}

SolveResult single_tree(int n, int k, double theta_lb, const SelectionOracle& oracle, const SolveConfig& config,
                        Clock::time_point start) {
    SolveResult res;
    res.mode = SolveMode::SingleTree;
    res.theta_lb = theta_lb;
    const conic::IpmSettings lp = MasterSettings::default_lp_settings();
    CutPool pool;
    OpenNodes open;
    open.push(root_node(n, theta_lb));
    long long next_id = 1;
    double ub = kInf;
    double closed_min = kInf; // bounds of subtrees that were pruned or resolved
    res.reason = Termination::EpsOptimal;
    const auto lower = [&] { return std::min({ub, closed_min, open.min_bound()}); };

    while (!open.empty()) {
        if (open.min_bound() >= ub - config.epsilon) {
            break;
        }
        if (ub < kInf && seconds_since(start) > config.time_limit_s) {
            res.reason = Termination::TimeLimit;
            break;
        }
        if (res.nodes >= config.node_budget && ub < kInf) {
            res.reason = Termination::IterLimit;
            break;
        }
        std::vector<Node> batch;
        while (static_cast<int>(batch.size()) < kBatch && !open.empty() && open.min_bound() < ub - config.epsilon) {
            batch.push_back(open.pop());
        }
        std::vector<NodeResult> results(batch.size());
        parallel_for(static_cast<int>(batch.size()), config.workers,
                     [&](int i) { results[i] = solve_node(n, k, pool, theta_lb, batch[i], lp); });
        res.nodes += static_cast<long long>(batch.size());

        std::vector<Selection> pending;
        std::vector<double> pending_theta;
        std::vector<Node> revisit;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const NodeResult& r = results[i];
            if (!r.feasible) {
                continue;
            }
            if (r.bound >= ub - config.epsilon) {
                closed_min = std::min(closed_min, r.bound);
                continue;
            }
            if (r.closed) {
                if (pool.has_anchor(r.candidate)) {
                    closed_min = std::min(closed_min, r.bound);
                    continue;
                }
                if (std::find(pending.begin(), pending.end(), r.candidate) == pending.end()) {
                    pending.push_back(r.candidate);
                    pending_theta.push_back(r.candidate_theta);
                }
                Node again = std::move(batch[i]);
                again.bound = r.bound;
                revisit.push_back(std::move(again));
                continue;
            }
            branch(open, batch[i], r.branch, r.bound, next_id);
        }

        std::vector<OracleResult> evals(pending.size());
        parallel_for(static_cast<int>(pending.size()), config.workers, [&](int i) { evals[i] = oracle(pending[i]); });
        for (std::size_t i = 0; i < pending.size(); ++i) {
            if (evals[i].feasible) {
                if (evals[i].cut.value < ub) {
                    ub = evals[i].cut.value;
                    res.selection = pending[i];
                }
                pool.cuts.push_back(std::move(evals[i].cut));
            } else {
                pool.excluded.push_back(pending[i]);
            }
        }
        for (Node& node : revisit) {
            open.push(std::move(node));
        }
        for (std::size_t i = 0; i < pending.size(); ++i) {
            ++res.iterations;
            emit(config, res, {res.iterations, lower(), ub, pool.size(), pending[i], pending_theta[i]});
        }
    }
    if (ub == kInf) {
        throw Error(ErrorCode::GloballyInfeasible, "every selection is excluded");
    }
    res.lower_bound = lower();
    res.upper_bound = ub;
    res.cuts = pool.size();
    return res;
}

} // namespace

std::string_view to_string(SolveMode mode) {
    return mode == SolveMode::Iterative ? "iterative" : "single-tree";
}

std::string_view to_string(Termination reason) {
    switch (reason) {
    case Termination::EpsOptimal: return "EpsOptimal";
    case Termination::TimeLimit: return "TimeLimit";
    case Termination::IterLimit: return "IterLimit";
    }
    return "unknown";
}

std::optional<SolveMode> parse_mode(std::string_view text) {
    if (text == "iterative") {
        return SolveMode::Iterative;
    }
    if (text == "single-tree") {
        return SolveMode::SingleTree;
    }
    return std::nullopt;
}

double CutPool::theta_at(const Selection& z, double theta_lb) const {
    for (const Selection& s : excluded) {
        if (s == z) {
            return kInf;
        }
    }
    double theta = theta_lb;
    for (const Cut& c : cuts) {
        double v = c.value;
        for (int i = 0; i < z.size(); ++i) {
            v += c.gradient(i) * ((z[i] ? 1.0 : 0.0) - (c.anchor[i] ? 1.0 : 0.0));
        }
        theta = std::max(theta, v);
    }
    return theta;
}

bool CutPool::has_anchor(const Selection& z) const {
    return std::any_of(cuts.begin(), cuts.end(), [&](const Cut& c) { return c.anchor == z; }) ||
           std::find(excluded.begin(), excluded.end(), z) != excluded.end();
}

conic::IpmSettings MasterSettings::default_lp_settings() {
    conic::IpmSettings s;
    s.feas_tol = 1e-9;
    s.gap_tol = 1e-9;
    return s;
}

MasterSolution solve_master_relaxation(int n, int k, const CutPool& pool, double theta_lb,
                                       const MasterSettings& settings) {
    check_master_args(n, k);
    MasterSolution out;
    OpenNodes open;
    open.push(root_node(n, theta_lb));
    long long next_id = 1;
    double closed_min = kInf;
    const auto prune_level = [&] { return out.theta - kTieTolerance * (1.0 + std::abs(out.theta)); };
    while (!open.empty()) {
        if (out.theta < kInf && open.min_bound() >= prune_level()) {
            closed_min = std::min(closed_min, open.min_bound());
            break;
        }
        if (out.nodes >= settings.node_budget) {
            out.budget_exhausted = true;
            closed_min = std::min(closed_min, open.min_bound());
            break;
        }
        const Node node = open.pop();
        ++out.nodes;
        const NodeResult r = solve_node(n, k, pool, theta_lb, node, settings.lp);
        if (!r.feasible) {
            continue;
        }
        if (r.candidate_theta < out.theta) {
            out.theta = r.candidate_theta;
            out.z = r.candidate;
        }
        if (r.closed || (out.theta < kInf && r.bound >= prune_level())) {
            closed_min = std::min(closed_min, r.bound);
            continue;
        }
        branch(open, node, r.branch, r.bound, next_id);
    }
    out.feasible = out.theta < kInf;
    out.bound = std::min(out.theta, closed_min);
    return out;
}

SolveResult run_cutting_plane(int n, int k, double theta_lb, const SelectionOracle& oracle, const SolveConfig& config) {
    check_master_args(n, k);
    if (!(config.epsilon >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "epsilon must be nonnegative", "epsilon");
    }
    const auto start = Clock::now();
    SolveResult res = config.mode == SolveMode::Iterative ? iterative(n, k, theta_lb, oracle, config, start)
                                                          : single_tree(n, k, theta_lb, oracle, config, start);
    res.gap = res.upper_bound - res.lower_bound;
    res.time_s = seconds_since(start);
    return res;
}

double initial_lower_bound(const Instance& instance, const conic::IpmSettings& settings) {
    validate_instance(instance);
    if (instance.n() > kFullLowerBoundLimit) {
        return nominal_lower_bound(instance, settings);
    }
    Instance relaxed = instance;
    relaxed.k = instance.n();
    return solve_full_dual(relaxed, Selection::all(instance.n()), settings).f_prime;
}

double nominal_lower_bound(const Instance& instance, const conic::IpmSettings& settings) {
    validate_instance(instance);
    const int n = instance.n();
    const auto& pieces = instance.utility.pieces;
    const int pl = static_cast<int>(pieces.size());
    // min v + t / (2 gamma)  s.t.  v >= -a_l mu^T x - b_l, 1^T x = 1, t >= |x|^2
    conic::ConeProgram p;
    const int xb = p.add_block(conic::Cone::NonNeg, n);
    const int vb = p.add_block(conic::Cone::Free, 1);
    const int sb = p.add_block(conic::Cone::NonNeg, pl);
    const int qb = p.add_block(conic::Cone::RotatedSecondOrder, n + 2);
    p.add_cost(p.var(vb, 0), 1.0);
    p.add_cost(p.var(qb, 0), 0.5 / instance.gamma);
    const int budget = p.add_row(1.0);
    for (int i = 0; i < n; ++i) {
        p.add_term(budget, p.var(xb, i), 1.0);
    }
    for (int l = 0; l < pl; ++l) {
        const int row = p.add_row(-pieces[l].intercept);
        p.add_term(row, p.var(vb, 0), 1.0);
        for (int i = 0; i < n; ++i) {
            p.add_term(row, p.var(xb, i), pieces[l].slope * instance.moments.mean(i));
        }
        p.add_term(row, p.var(sb, l), -1.0);
    }
    p.add_term(p.add_row(0.5), p.var(qb, 1), 1.0);
    for (int i = 0; i < n; ++i) {
        const int row = p.add_row(0.0);
        p.add_term(row, p.var(qb, 2 + i), 1.0);
        p.add_term(row, p.var(xb, i), -1.0);
    }
    const conic::ConicSolution sol = solve_lp(p, settings);
    if (sol.status != conic::Status::Optimal) {
        throw Error(ErrorCode::SolverFailure,
                    "nominal lower bound ended with " + std::string(conic::to_string(sol.status)));
    }
    const double value = std::min(sol.primal_objective, sol.dual_objective);
    return value - sol.gap_tol * (1.0 + std::abs(value));
}

SolveResult cutting_plane_solve(const Instance& instance, const SolveConfig& config) {
    validate_instance(instance);
    const auto start = Clock::now();
    const double theta_lb = initial_lower_bound(instance, config.ipm);
    const SelectionOracle oracle = [&](const Selection& z) {
        const LowerEvaluation ev = evaluate_selection(instance, z, config.ipm);
        return OracleResult{true, ev.cut};
    };
    SolveResult res = run_cutting_plane(instance.n(), instance.k, theta_lb, oracle, config);
    const LowerPrimalSolution primal = recover_portfolio(instance, res.selection, config.ipm);
    res.x = primal.x;
    res.objective = primal.objective;
    res.time_s = seconds_since(start);
    return res;
}

} // namespace drport
