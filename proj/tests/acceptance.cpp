// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed below.
// Report-only criteria print REPORT and optional ones SKIP without failing.

#include "drport/backtest.hpp"
#include "drport/baselines.hpp"
#include "drport/data_io.hpp"
#include "drport/enumeration.hpp"
#include "drport/error.hpp"
#include "drport/lower_level.hpp"
#include "drport/synthetic.hpp"
#include "drport/upper_level.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace drport;
using namespace drport::testing;

namespace {

constexpr double kEpsilon = 1e-5;        // criteria 1, 6
constexpr double kReductionTol = 1e-6;   // criterion 2, relative to 1 + |f|
constexpr double kDualityTol = 1e-6;     // criterion 3, relative
constexpr double kLiftTol = 1e-7;        // criterion 4, absolute
constexpr double kCutTol = 1e-6;         // criterion 5
constexpr double kClosedFormTol = 1e-5;  // criterion 7, relative
constexpr double kMeanVarianceTol = 1e-6; // criterion 8
constexpr double kMonotoneTol = 1e-6;    // criteria 8, 9
constexpr double kSpeedupTarget = 10.0;  // criterion 10
constexpr double kDatasetObjective = 3.034; // criterion 11
constexpr double kDatasetTol = 0.01;     // criterion 11, relative

int failures = 0;

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

void line(const char* verdict, int id, const std::string& name, const std::string& detail) {
    std::cout << verdict << " [" << id << "] " << name << ": " << detail << std::endl;
}

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
    line(ok ? "PASS" : "FAIL", id, name, detail);
    failures += ok ? 0 : 1;
}

// Runs a criterion; a library error counts as a failure of that criterion only.
void criterion(int id, const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        verdict(id, name, false, std::string("error: ") + e.what());
    }
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

Instance synthetic(int n, int k, int pieces, std::uint64_t seed, double gamma = 1.0) {
    SyntheticSpec spec;
    spec.n = n;
    spec.k = k;
    spec.pieces = pieces;
    spec.seed = seed;
    spec.gamma = gamma;
    return synthetic_instance(spec);
}

Selection random_selection(int n, int k, std::mt19937_64& rng) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) {
        idx[i] = i;
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    return Selection::from_support(n, idx);
}

struct Pair {
    Instance inst;
    Selection z;
};

// 50 seeded (instance, z) pairs with N <= 12.
std::vector<Pair> random_pairs() {
    std::mt19937_64 rng(2024);
    std::vector<Pair> out;
    for (int i = 0; i < 50; ++i) {
        const int n = 3 + static_cast<int>(rng() % 10);
        const int k = 1 + static_cast<int>(rng() % n);
        const int pieces = 1 + static_cast<int>(rng() % 3);
        Instance inst = synthetic(n, k, pieces, 500 + i, 10.0 / std::sqrt(static_cast<double>(n)));
        const Selection z = random_selection(n, k, rng);
        out.push_back({std::move(inst), z});
    }
    return out;
}

double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) {
        c = c * (n - k + i) / i;
    }
    return c;
}

struct VerifyRun {
    Instance inst;
    EnumerationResult brute;
    SolveResult iterative;
    SolveResult single_tree;
};

std::vector<VerifyRun> verify_runs;

void brute_force_equivalence() {
    const auto start = Clock::now();
    double worst = 0.0;
    int matched = 0;
    for (int i = 0; i < 20; ++i) {
        const int n = 6 + i % 3;
        const int k = 2 + (i / 3) % 2;
        VerifyRun run{synthetic(n, k, 3, 1000 + i), {}, {}, {}};
        run.brute = brute_force(run.inst);
        SolveConfig config;
        config.epsilon = kEpsilon;
        config.mode = SolveMode::Iterative;
        run.iterative = cutting_plane_solve(run.inst, config);
        config.mode = SolveMode::SingleTree;
        run.single_tree = cutting_plane_solve(run.inst, config);
        const double diff = std::max(std::abs(run.iterative.upper_bound - run.brute.value),
                                     std::abs(run.single_tree.upper_bound - run.brute.value));
        worst = std::max(worst, diff);
        matched += diff <= kEpsilon ? 1 : 0;
        verify_runs.push_back(std::move(run));
    }
    const double elapsed = seconds(start);
    verdict(1, "brute-force equivalence", matched == 20 && elapsed < 300.0,
            std::to_string(matched) + "/20 within " + fmt(kEpsilon) + ", worst diff " + fmt(worst) + ", " +
                fmt(elapsed) + " s");
}

void reduction_duality_lift(const std::vector<Pair>& pairs) {
    double worst_reduction = 0.0;
    double worst_duality = 0.0;
    double worst_lift = 0.0;
    double worst_lemma = 0.0;
    std::string worst_lift_name;
    for (const Pair& p : pairs) {
        const LowerDualSolution reduced = solve_lower(p.inst, p.z);
        const double f = solve_full_dual(p.inst, p.z).f_prime;
        worst_reduction = std::max(worst_reduction, std::abs(f - reduced.f_prime) / (1.0 + std::abs(f)));
        const double primal = solve_full_primal(p.inst, p.z).objective;
        worst_duality = std::max(worst_duality, std::abs(primal - f) / std::max(1.0, std::abs(f)));
        const DualFeasibility feas = full_dual_feasibility(p.inst, lift(p.inst, p.z, reduced));
        const double other = std::max({feas.omega_bound, feas.b_balance, feas.beta_balance, feas.eta_sum,
                                       feas.piece_psd, feas.moment_psd});
        if (other > worst_lift) {
            worst_lift = other;
            worst_lift_name = feas.worst_name();
        }
        worst_lemma = std::max(worst_lemma, feas.completion_psd);
    }
    verdict(2, "reduction equality f(z) = f'(z)", worst_reduction <= kReductionTol,
            "50 pairs, worst |f - f'| / (1 + |f|) = " + fmt(worst_reduction));
    verdict(3, "strong duality primal = dual", worst_duality <= kDualityTol,
            "50 pairs, worst relative gap " + fmt(worst_duality));
    verdict(4, "lift feasibility and completion certificate", worst_lift <= kLiftTol && worst_lemma <= kLiftTol,
            "worst constraint residual " + fmt(worst_lift) +
                (worst_lift_name.empty() ? "" : " (" + worst_lift_name + ")") + ", min eigenvalue " +
                fmt(-worst_lemma));
}

void cut_validity() {
    std::mt19937_64 rng(77);
    double worst = -std::numeric_limits<double>::infinity();
    int violations = 0;
    for (int i = 0; i < 100; ++i) {
        const int n = 4 + static_cast<int>(rng() % 7);
        const int k = 1 + static_cast<int>(rng() % (n - 1));
        const Instance inst = synthetic(n, k, 1 + i % 3, 3000 + i, 10.0 / std::sqrt(static_cast<double>(n)));
        const Selection z = random_selection(n, k, rng);
        const Selection other = random_selection(n, k, rng);
        const LowerEvaluation ev = evaluate_selection(inst, z);
        const double f_other = solve_lower(inst, other).f_prime;
        const double excess = ev.cut.evaluate(other.as_vector()) - f_other;
        worst = std::max(worst, excess);
        violations += excess > kCutTol ? 1 : 0;
    }
    verdict(5, "cut validity", violations == 0,
            "100 pairs, max cut(z') - f(z') = " + fmt(worst) + ", violations " + std::to_string(violations));
}

bool monotone_trace(const SolveResult& r) {
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        if (r.trace[i].ub > r.trace[i - 1].ub || r.trace[i].lb < r.trace[i - 1].lb) {
            return false;
        }
    }
    return true;
}

void algorithm_ledger() {
    int bad = 0;
    double worst_mode_diff = 0.0;
    for (const VerifyRun& run : verify_runs) {
        const double limit = binomial(run.inst.n(), run.inst.k);
        for (const SolveResult* r : {&run.iterative, &run.single_tree}) {
            const bool ok = monotone_trace(*r) && r->gap <= kEpsilon && r->cuts <= limit &&
                            r->reason == Termination::EpsOptimal;
            bad += ok ? 0 : 1;
        }
        worst_mode_diff = std::max(worst_mode_diff, std::abs(run.iterative.upper_bound - run.single_tree.upper_bound));
    }
    verdict(6, "cutting-plane ledger", bad == 0 && worst_mode_diff <= 2.0 * kEpsilon && !verify_runs.empty(),
            std::to_string(2 * verify_runs.size() - bad) + "/" + std::to_string(2 * verify_runs.size()) +
                " runs monotone with gap <= eps and cuts <= C(N,k), worst mode difference " + fmt(worst_mode_diff));
}

void closed_form_oracle() {
    std::mt19937_64 rng(31);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        SyntheticSpec spec;
        spec.n = 4 + i % 5;
        spec.k = 1 + i % 3;
        spec.pieces = 1;
        spec.seed = 4000 + i;
        spec.gamma = i % 2 == 0 ? 1.0 : 10.0 / std::sqrt(static_cast<double>(spec.n));
        spec.kappa1 = i % 3 == 0 ? 0.5 : (i % 3 == 1 ? 1.0 : 2.0);
        const Instance inst = synthetic_instance(spec);
        const Selection z = random_selection(spec.n, spec.k, rng);
        const double f = solve_lower(inst, z).f_prime;
        const double oracle = single_piece_oracle(inst, z);
        worst = std::max(worst, std::abs(f - oracle) / std::max(std::abs(oracle), 1e-12));
    }
    verdict(7, "single-piece oracle", worst <= kClosedFormTol, "20 instances, worst relative error " + fmt(worst));
}

void mean_variance_equivalence() {
    double worst = 0.0;
    bool monotone = true;
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 6; ++k) {
        MeanVarianceSpec spec;
        spec.moments = synthetic_moments(6, 99);
        spec.required_return = first_quartile_return(spec.moments);
        spec.k = k;
        double oracle = std::numeric_limits<double>::infinity();
        for (const Selection& z : enumerate_selections(6, k)) {
            oracle = std::min(oracle, qp_by_active_sets(spec.moments, spec.required_return, z.support()));
        }
        SolveConfig config;
        config.epsilon = 1e-8;
        const SolveResult r = solve_mean_variance(spec, config);
        worst = std::max(worst, std::abs(r.objective - oracle));
        monotone = monotone && r.objective <= previous + kMonotoneTol;
        previous = r.objective;
    }
    verdict(8, "mean-variance baseline", worst <= kMeanVarianceTol && monotone,
            "k = 1..6, worst |obj - enumeration| " + fmt(worst) + (monotone ? ", nonincreasing in k" : ", NOT monotone"));
}

void monotone_in_k() {
    std::string values;
    bool monotone = true;
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 6; ++k) {
        const double v = brute_force(synthetic(6, k, 3, 77)).value;
        monotone = monotone && v <= previous + kMonotoneTol;
        previous = v;
        values += (k > 1 ? ", " : "") + fmt(v);
    }
    verdict(9, "monotonicity in k", monotone, "enumeration optimum for k = 1..6: " + values);
}

void reduction_speedup() {
    // A full solve at N = 100 needs a dense normal matrix of order ~2e4 (gigabytes)
    // and hours, so the full side is timed at N = 40. Full-dimension cost grows
    // with N, so full(40) / reduced(100) is a lower bound on the N = 100 ratio.
    const Instance big = synthetic(100, 5, 3, 1, 1.0);
    const Selection z100 = Selection::first(100, 5);
    auto start = Clock::now();
    solve_lower(big, z100);
    const double reduced = seconds(start);
    const Instance mid = synthetic(40, 5, 3, 1, 1.0);
    start = Clock::now();
    solve_full_dual(mid, Selection::first(40, 5));
    const double full40 = seconds(start);
    const double ratio = full40 / reduced;
    line(ratio >= kSpeedupTarget ? "PASS" : "REPORT", 10, "reduction speedup (report only)",
         "reduced N=100: " + fmt(reduced) + " s, full N=40: " + fmt(full40) + " s, ratio >= " + fmt(ratio));
}

void dataset_spot_check() {
    const char* env = std::getenv("DRPORT_IND49_FIXTURE");
    const std::filesystem::path fixture = env != nullptr ? env : DRPORT_FIXTURE_DIR "/ind49.csv";
    if (!std::filesystem::exists(fixture)) {
        line("SKIP", 11, "dataset spot check", "fixture " + fixture.string() + " not present");
        return;
    }
    const ParsedReturns data = parse_returns_csv(fixture);
    RobustParams params;
    params.k = 10;
    params.gamma_scaled = 10.0;
    params.ambiguity = {1.0, 4.0};
    const SolveResult r = cutting_plane_solve(robust_instance(estimate_moments(data.returns), params));
    const double rel = std::abs(r.objective - kDatasetObjective) / kDatasetObjective;
    const double gap = gap_percent(r.upper_bound, r.lower_bound);
    verdict(11, "dataset spot check", rel <= kDatasetTol && gap < 0.05,
            "obj " + fmt(r.objective) + " vs 3.034, gap " + fmt(gap) + "%");
}

void backtest_arithmetic() {
    const std::vector<double> a{0.1, -0.1};
    const std::vector<double> b(52, 0.001);
    const std::vector<double> c{0.05, 0.02, -0.03, 0.0, 0.011};
    double hand_b = 1.0;
    for (int i = 0; i < 52; ++i) {
        hand_b *= 1.001;
    }
    const double hand_c = 1.0 * 1.05 * 1.02 * 0.97 * 1.0 * 1.011;
    const bool products = cumulative_return({}) == 1.0 && cumulative_return(a) == 1.1 * 0.9 &&
                          cumulative_return(b) == hand_b && cumulative_return(c) == hand_c;

    ReturnMatrix r;
    r.values.resize(9, 2);
    for (int m = 0; m < 9; ++m) {
        r.values(m, 0) = m;
        r.values(m, 1) = 0.01 * m;
    }
    std::vector<int> last_seen;
    const Strategy audit = [&](const ReturnMatrix& training) {
        last_seen.push_back(static_cast<int>(training.values(training.observations() - 1, 0)));
        SolveResult out;
        out.selection = Selection::all(2);
        out.x = Vector::Constant(2, 0.5);
        return out;
    };
    const BacktestReport report = rolling_backtest(r, BacktestConfig{3, 2, 2}, audit);
    bool no_look_ahead = report.windows.size() == 3 && last_seen.size() == 3;
    for (std::size_t w = 0; no_look_ahead && w < report.windows.size(); ++w) {
        no_look_ahead = last_seen[w] < report.windows[w].test_begin && last_seen[w] == report.windows[w].train_end - 1;
    }
    const bool reproducible = report.cumulative == cumulative_return(report.returns);
    verdict(12, "backtest arithmetic", products && no_look_ahead && reproducible,
            std::string("products ") + (products ? "exact" : "WRONG") + ", 3-window audit " +
                (no_look_ahead ? "clean" : "LOOK-AHEAD") + ", cumulative " +
                (reproducible ? "reproducible" : "NOT reproducible"));
}

} // namespace

int main() {
    const auto start = Clock::now();
    criterion(1, "brute-force equivalence", brute_force_equivalence);
    const std::vector<Pair> pairs = random_pairs();
    criterion(2, "reduction, duality and lift", [&] { reduction_duality_lift(pairs); });
    criterion(5, "cut validity", cut_validity);
    criterion(6, "cutting-plane ledger", algorithm_ledger);
    criterion(7, "single-piece oracle", closed_form_oracle);
    criterion(8, "mean-variance baseline", mean_variance_equivalence);
    criterion(9, "monotonicity in k", monotone_in_k);
    try {
        reduction_speedup();
    } catch (const std::exception& e) {
        line("REPORT", 10, "reduction speedup (report only)", std::string("error: ") + e.what());
    }
    criterion(11, "dataset spot check", dataset_spot_check);
    criterion(12, "backtest arithmetic", backtest_arithmetic);
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << " in " << fmt(seconds(start))
              << " s" << std::endl;
    return failures == 0 ? 0 : 1;
}
