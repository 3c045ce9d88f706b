// drport: command-line front end.
//
//   drport solve     --synthetic 8 --k 3
//   drport solve     --orlib port1.txt --mean-scale 100 --cov-scale 10000 --k 10
//   drport backtest  --returns weekly.csv --k 10 --strategy dr --csv returns.csv
//   drport bench     --returns monthly.csv --ks 5,10,15
//   drport verify    --n 7 --k 3 --instances 10 --seed 1
//
// Exit status: 0 success, 1 invalid input, 2 solver failure, 3 time or node
// limit reached with an incumbent. Errors are reported as JSON on stderr.

#include "drport/backtest.hpp"
#include "drport/baselines.hpp"
#include "drport/data_io.hpp"
#include "drport/enumeration.hpp"
#include "drport/error.hpp"
#include "drport/synthetic.hpp"
#include "drport/upper_level.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace drport;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitSolver = 2;
constexpr int kExitLimit = 3;

struct Source {
    std::string returns;
    std::string orlib;
    double mean_scale = 1.0;
    double cov_scale = 1.0;
    int synthetic = 0;
    std::uint64_t seed = 1;
};

struct ModelFlags {
    int k = 10;
    std::optional<double> gamma;
    double gamma_scaled = 10.0;
    double kappa1 = 1.0;
    double kappa2 = 4.0;
    double alpha = 10.0;
    std::vector<double> tangent_points;
};

struct SolverFlags {
    double epsilon = 1e-5;
    double time_limit = 3600.0;
    std::string mode = "single-tree";
    int workers = 1;
    long long node_budget = 10'000'000;
};

struct LoadedData {
    Moments moments;
    std::vector<std::string> labels;
};

int exit_code(ErrorCode code) {
    switch (code) {
    case ErrorCode::SolverFailure:
    case ErrorCode::LiftInfeasible:
    case ErrorCode::GloballyInfeasible: return kExitSolver;
    case ErrorCode::TimeLimit: return kExitLimit;
    default: return kExitInvalid;
    }
}

void report_error(std::string_view code, std::string_view message, std::string_view detail) {
    nlohmann::json j = {{"error", code}, {"message", message}};
    if (!detail.empty()) {
        j["detail"] = detail;
    }
    std::cerr << j.dump() << '\n';
}

template <class T>
std::optional<T> env_value(const char* name) {
    const char* raw = std::getenv(name);
    if (raw == nullptr || *raw == '\0') {
        return std::nullopt;
    }
    std::istringstream in(raw);
    T value{};
    if (!(in >> value) || !in.eof()) {
        throw Error(ErrorCode::InvalidConfig, std::string("cannot parse environment variable ") + name, name);
    }
    return value;
}

void add_source_options(CLI::App* cmd, Source& src) {
    auto* returns = cmd->add_option("--returns", src.returns, "CSV of period returns (header: period,labels...)");
    auto* orlib = cmd->add_option("--orlib", src.orlib, "OR-Library portfolio file");
    auto* synth = cmd->add_option("--synthetic", src.synthetic, "seeded synthetic instance with this many assets");
    returns->excludes(orlib)->excludes(synth);
    orlib->excludes(synth);
    cmd->add_option("--mean-scale", src.mean_scale, "factor applied to OR-Library means");
    cmd->add_option("--cov-scale", src.cov_scale, "factor applied to OR-Library covariances");
    cmd->add_option("--seed", src.seed, "seed of the synthetic generator");
}

void add_model_options(CLI::App* cmd, ModelFlags& m) {
    cmd->add_option("-k,--k", m.k, "cardinality bound");
    auto* g = cmd->add_option("--gamma", m.gamma, "regularization gamma");
    cmd->add_option("--gamma-scaled", m.gamma_scaled, "gamma = G / sqrt(N)")->excludes(g);
    cmd->add_option("--kappa1", m.kappa1, "radius of the mean ellipsoid");
    cmd->add_option("--kappa2", m.kappa2, "second-moment bound");
    cmd->add_option("--alpha", m.alpha, "risk aversion of the exponential utility");
    cmd->add_option("--tangent-points", m.tangent_points, "utility tangent points (default 0, mu_max/2, mu_max)")
        ->delimiter(',');
}

void add_solver_options(CLI::App* cmd, SolverFlags& s) {
    cmd->add_option("--epsilon", s.epsilon, "optimality tolerance on UB - LB");
    cmd->add_option("--time-limit", s.time_limit, "seconds; also DRPORT_TIME_LIMIT");
    cmd->add_option("--mode", s.mode, "iterative or single-tree")->check(CLI::IsMember({"iterative", "single-tree"}));
    cmd->add_option("--workers", s.workers, "threads for single-tree mode; also DRPORT_WORKERS")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--node-budget", s.node_budget, "branch-and-bound node limit");
}

LoadedData load_moments(const Source& src) {
    LoadedData out;
    if (!src.returns.empty()) {
        const ParsedReturns parsed = parse_returns_csv(std::filesystem::path(src.returns));
        out.moments = estimate_moments(parsed.returns);
        out.labels = parsed.returns.labels;
    } else if (!src.orlib.empty()) {
        out.moments = parse_orlibrary(std::filesystem::path(src.orlib), src.mean_scale, src.cov_scale);
    } else if (src.synthetic > 0) {
        out.moments = synthetic_moments(src.synthetic, src.seed);
    } else {
        throw Error(ErrorCode::InvalidConfig, "one of --returns, --orlib or --synthetic is required", "source");
    }
    return out;
}

RobustParams robust_params(const ModelFlags& m) {
    RobustParams p;
    p.k = m.k;
    p.gamma = m.gamma;
    p.gamma_scaled = m.gamma_scaled;
    p.ambiguity = {m.kappa1, m.kappa2};
    p.alpha = m.alpha;
    p.tangent_points = m.tangent_points;
    return p;
}

SolveConfig solve_config(const SolverFlags& s) {
    SolveConfig c;
    c.epsilon = s.epsilon;
    c.time_limit_s = s.time_limit;
    c.mode = *parse_mode(s.mode);
    c.workers = s.workers;
    c.node_budget = s.node_budget;
    if (!(c.epsilon >= 0.0) || !(c.time_limit_s > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "epsilon must be >= 0 and the time limit positive", "epsilon");
    }
    return c;
}

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) {
                throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing", path);
            }
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

int limit_status(const SolveResult& r) { return r.reason == Termination::EpsOptimal ? kExitOk : kExitLimit; }

int run_solve(const Source& src, const ModelFlags& model, const SolverFlags& solver, const std::string& output,
              const std::string& trace_path) {
    const LoadedData data = load_moments(src);
    const Instance inst = robust_instance(data.moments, robust_params(model));
    SolveConfig config = solve_config(solver);
    std::optional<std::ofstream> trace;
    if (!trace_path.empty()) {
        trace.emplace(trace_path);
        if (!*trace) {
            throw Error(ErrorCode::IoFailure, "cannot open " + trace_path + " for writing", trace_path);
        }
        config.trace = &*trace;
    }
    const SolveResult r = cutting_plane_solve(inst, config);
    Output out(output);
    write_result_json(r, out.stream(), data.labels);
    return limit_status(r);
}

int run_backtest(const Source& src, const ModelFlags& model, const SolverFlags& solver, const std::string& strategy,
                 std::optional<double> required_return, const BacktestConfig& bt, const std::string& output,
                 const std::string& csv) {
    if (src.returns.empty()) {
        throw Error(ErrorCode::InvalidConfig, "backtest needs --returns", "returns");
    }
    const ParsedReturns parsed = parse_returns_csv(std::filesystem::path(src.returns));
    const SolveConfig config = solve_config(solver);
    const Strategy chosen = strategy == "mv" ? mean_variance_strategy(model.k, required_return, config)
                                             : robust_strategy(robust_params(model), config);
    const BacktestReport report = rolling_backtest(parsed.returns, bt, chosen);
    Output out(output);
    nlohmann::json j = report_to_json(report, parsed.returns.labels);
    j["dropped_columns"] = parsed.dropped_labels;
    out.stream() << j.dump(2) << '\n';
    if (!csv.empty()) {
        Output csv_out(csv);
        write_returns_csv(report, csv_out.stream());
    }
    if (report.aborted) {
        report_error("BacktestAborted", report.error, "");
        return kExitSolver;
    }
    return kExitOk;
}

std::vector<std::pair<double, double>> parse_kappas(const std::vector<std::string>& raw) {
    std::vector<std::pair<double, double>> out;
    for (const std::string& s : raw) {
        const auto colon = s.find(':');
        try {
            if (colon == std::string::npos) {
                throw std::invalid_argument(s);
            }
            out.emplace_back(std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1)));
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "kappa pairs are written k1:k2, got " + s, "kappas");
        }
    }
    return out;
}

int run_bench(const Source& src, const ModelFlags& model, const SolverFlags& solver, const std::vector<int>& ks,
              const std::vector<std::string>& kappas, const std::vector<double>& gammas, const std::string& output) {
    const LoadedData data = load_moments(src);
    const SolveConfig config = solve_config(solver);
    const int n = data.moments.n_assets();
    Output out(output);
    std::ostream& os = out.stream();
    os << std::left << std::setw(5) << "k" << std::setw(12) << "kappa" << std::setw(9) << "gamma*" << std::right
       << std::setw(12) << "Obj" << std::setw(9) << "Gap(%)" << std::setw(10) << "Time" << std::setw(8) << "#Cuts"
       << std::setw(10) << "#Nodes" << '\n';
    int status = kExitOk;
    for (const auto& [k1, k2] : parse_kappas(kappas)) {
        for (const double g : gammas) {
            for (const int k : ks) {
                if (k > n) {
                    continue;
                }
                ModelFlags m = model;
                m.k = k;
                m.kappa1 = k1;
                m.kappa2 = k2;
                m.gamma.reset();
                m.gamma_scaled = g;
                const SolveResult r = cutting_plane_solve(robust_instance(data.moments, robust_params(m)), config);
                std::ostringstream kappa;
                kappa << '(' << k1 << ',' << k2 << ')';
                os << std::left << std::setw(5) << k << std::setw(12) << kappa.str() << std::setw(9) << g
                   << std::right << std::fixed << std::setprecision(3) << std::setw(12) << r.objective
                   << std::setprecision(1) << std::setw(9) << gap_percent(r.upper_bound, r.lower_bound)
                   << std::setw(10) << r.time_s << std::setw(8) << r.cuts << std::setw(10) << r.nodes << '\n';
                os.unsetf(std::ios::fixed);
                os << std::setprecision(6);
                status = std::max(status, limit_status(r));
            }
        }
    }
    return status;
}

int run_verify(int n, int k, int pieces, int instances, std::uint64_t seed, const SolverFlags& solver) {
    SolveConfig config = solve_config(solver);
    int passed = 0;
    for (int i = 0; i < instances; ++i) {
        SyntheticSpec spec;
        spec.n = n;
        spec.k = k;
        spec.pieces = pieces;
        spec.seed = seed + static_cast<std::uint64_t>(i);
        const Instance inst = synthetic_instance(spec);
        const EnumerationResult brute = brute_force(inst, config.ipm);
        const SolveResult r = cutting_plane_solve(inst, config);
        const double diff = std::abs(r.upper_bound - brute.value);
        const bool ok = diff <= config.epsilon;
        passed += ok ? 1 : 0;
        std::cout << "instance " << i << " seed " << spec.seed << ": " << (ok ? "PASS" : "FAIL")
                  << std::setprecision(10) << "  cutting-plane " << r.upper_bound << "  enumeration " << brute.value
                  << "  diff " << std::setprecision(3) << diff << "  cuts " << r.cuts << '\n';
    }
    std::cout << passed << "/" << instances << " instances match within " << config.epsilon << '\n';
    return passed == instances ? kExitOk : kExitSolver;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cardinality-constrained distributionally robust portfolio solver"};
    app.require_subcommand(1);

    Source src;
    ModelFlags model;
    SolverFlags solver;
    std::string output;

    auto* solve = app.add_subcommand("solve", "solve one instance and print the result JSON");
    add_source_options(solve, src);
    add_model_options(solve, model);
    add_solver_options(solve, solver);
    std::string trace;
    solve->add_option("-o,--output", output, "result JSON path (default stdout)");
    solve->add_option("--trace", trace, "write per-iteration LB/UB records (JSON lines) here");

    auto* backtest = app.add_subcommand("backtest", "rolling-window out-of-sample evaluation");
    add_source_options(backtest, src);
    add_model_options(backtest, model);
    add_solver_options(backtest, solver);
    std::string strategy = "dr";
    std::optional<double> required_return;
    BacktestConfig bt;
    std::string csv;
    backtest->add_option("--strategy", strategy, "dr or mv")->check(CLI::IsMember({"dr", "mv"}));
    backtest->add_option("--required-return", required_return, "MV target return (default: first quartile)");
    backtest->add_option("--training", bt.training, "training window length");
    backtest->add_option("--testing", bt.testing, "testing window length");
    backtest->add_option("--step", bt.step, "window step");
    backtest->add_option("--return-scale", bt.return_scale, "factor on realized returns (0.01 for percent data)");
    backtest->add_option("-o,--output", output, "report JSON path (default stdout)");
    backtest->add_option("--csv", csv, "write period,return rows here");

    auto* bench = app.add_subcommand("bench", "Obj / Gap(%) / Time / #Cuts / #Nodes over a parameter grid");
    add_source_options(bench, src);
    add_model_options(bench, model);
    add_solver_options(bench, solver);
    std::vector<int> ks{5, 10, 15};
    std::vector<std::string> kappas{"1:4"};
    std::vector<double> gammas{10.0};
    bench->add_option("--ks", ks, "cardinalities")->delimiter(',');
    bench->add_option("--kappas", kappas, "k1:k2 pairs")->delimiter(',');
    bench->add_option("--gammas-scaled", gammas, "values G of gamma = G / sqrt(N)")->delimiter(',');
    bench->add_option("-o,--output", output, "table path (default stdout)");

    auto* verify = app.add_subcommand("verify", "compare against exhaustive enumeration on synthetic instances");
    int vn = 7;
    int vk = 3;
    int pieces = 3;
    int instances = 10;
    verify->add_option("--n", vn, "assets")->check(CLI::Range(1, 20));
    verify->add_option("--k", vk, "cardinality");
    verify->add_option("--pieces", pieces, "utility pieces")->check(CLI::PositiveNumber);
    verify->add_option("--instances", instances, "number of instances")->check(CLI::PositiveNumber);
    verify->add_option("--seed", src.seed, "seed of the first instance");
    add_solver_options(verify, solver);

    try {
        if (const auto t = env_value<double>("DRPORT_TIME_LIMIT")) {
            solver.time_limit = *t;
        }
        if (const auto w = env_value<int>("DRPORT_WORKERS")) {
            solver.workers = *w;
        }
    } catch (const Error& e) {
        report_error(to_string(e.code()), e.what(), e.detail());
        return kExitInvalid;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        report_error("InvalidArguments", e.what(), "");
        return kExitInvalid;
    }

    try {
        if (*solve) {
            return run_solve(src, model, solver, output, trace);
        }
        if (*backtest) {
            return run_backtest(src, model, solver, strategy, required_return, bt, output, csv);
        }
        if (*bench) {
            return run_bench(src, model, solver, ks, kappas, gammas, output);
        }
        return run_verify(vn, vk, pieces, instances, src.seed, solver);
    } catch (const Error& e) {
        report_error(to_string(e.code()), e.what(), e.detail());
        return exit_code(e.code());
    } catch (const std::exception& e) {
        report_error("InternalError", e.what(), "");
        return kExitSolver;
    }
}
