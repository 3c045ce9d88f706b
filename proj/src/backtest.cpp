#include "drport/backtest.hpp"

#include "drport/data_io.hpp"
#include "drport/error.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

namespace drport {

namespace {

ReturnMatrix slice(const ReturnMatrix& r, int begin, int end) {
    ReturnMatrix out;
    out.values = r.values.middleRows(begin, end - begin);
    out.labels = r.labels;
    if (static_cast<int>(r.periods.size()) >= end) {
        out.periods.assign(r.periods.begin() + begin, r.periods.begin() + end);
    }
    return out;
}

std::string period_name(const ReturnMatrix& r, int m) {
    return m < static_cast<int>(r.periods.size()) ? r.periods[m] : std::to_string(m);
}

} // namespace

Instance robust_instance(const Moments& moments, const RobustParams& params) {
    Instance inst;
    inst.moments = moments;
    inst.ambiguity = params.ambiguity;
    inst.k = params.k;
    inst.gamma = params.gamma ? *params.gamma : params.gamma_scaled / std::sqrt(static_cast<double>(moments.n_assets()));
    const double mu_max = moments.mean.maxCoeff();
    if (!(mu_max > 0.0)) {
        throw Error(ErrorCode::NonPositiveMuMax, "largest mean return must be positive", "mean");
    }
    inst.utility = params.tangent_points.empty()
                       ? default_utility(moments, params.alpha)
                       : build_utility_tangents(mu_max, params.alpha, params.tangent_points);
    return inst;
}

Strategy robust_strategy(RobustParams params, SolveConfig config) {
    return [params = std::move(params), config](const ReturnMatrix& training) {
        return cutting_plane_solve(robust_instance(estimate_moments(training), params), config);
    };
}

Strategy mean_variance_strategy(int k, std::optional<double> required_return, SolveConfig config) {
    return [=](const ReturnMatrix& training) {
        MeanVarianceSpec spec;
        spec.moments = estimate_moments(training);
        spec.required_return = required_return ? *required_return : first_quartile_return(spec.moments);
        spec.k = k;
        return solve_mean_variance(spec, config);
    };
}

double cumulative_return(std::span<const double> returns) {
    double total = 1.0;
    for (const double r : returns) {
        total *= 1.0 + r;
    }
    return total;
}

BacktestReport rolling_backtest(const ReturnMatrix& returns, const BacktestConfig& config, const Strategy& strategy) {
    if (config.training < 1 || config.testing < 1 || config.step < 1) {
        throw Error(ErrorCode::InvalidConfig, "window lengths and step must be at least 1");
    }
    const int m = returns.observations();
    if (m < config.training + config.testing) {
        throw Error(ErrorCode::InsufficientData,
                    "need " + std::to_string(config.training + config.testing) + " periods, have " +
                        std::to_string(m));
    }
    if (!returns.values.allFinite()) {
        throw Error(ErrorCode::MissingValues, "return matrix has missing values");
    }
    const auto start = std::chrono::steady_clock::now();
    BacktestReport report;
    for (int begin = 0; begin + config.training + config.testing <= m; begin += config.step) {
        BacktestWindow w;
        w.train_begin = begin;
        w.train_end = begin + config.training;
        w.test_begin = w.train_end;
        w.test_end = w.test_begin + config.testing;
        SolveResult solved;
        try {
            solved = strategy(slice(returns, w.train_begin, w.train_end));
        } catch (const Error& e) {
            report.aborted = true;
            report.error = "window starting at " + period_name(returns, begin) + ": " + e.what();
            break;
        }
        w.selection = solved.selection;
        w.weights = solved.x;
        w.objective = solved.objective;
        w.gap_pct = gap_percent(solved.upper_bound, solved.lower_bound);
        w.time_s = solved.time_s;
        for (int t = w.test_begin; t < w.test_end; ++t) {
            report.periods.push_back(period_name(returns, t));
            report.returns.push_back(config.return_scale * returns.values.row(t).dot(w.weights));
        }
        report.windows.push_back(std::move(w));
    }
    report.cumulative = cumulative_return(report.returns);
    report.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

nlohmann::json report_to_json(const BacktestReport& report, const std::vector<std::string>& labels) {
    nlohmann::json windows = nlohmann::json::array();
    for (const BacktestWindow& w : report.windows) {
        nlohmann::json j = {{"train", {w.train_begin, w.train_end}},
                            {"test", {w.test_begin, w.test_end}},
                            {"selection", w.selection.support()},
                            {"weights", std::vector<double>(w.weights.data(), w.weights.data() + w.weights.size())},
                            {"obj", w.objective},
                            {"gap_pct", w.gap_pct},
                            {"time_s", w.time_s}};
        if (!labels.empty()) {
            std::vector<std::string> names;
            for (const int i : w.selection.support()) {
                names.push_back(labels.at(i));
            }
            j["selected_labels"] = names;
        }
        windows.push_back(std::move(j));
    }
    nlohmann::json out = {{"windows", windows},
                          {"periods", report.periods},
                          {"returns", report.returns},
                          {"cumulative_return", report.cumulative},
                          {"time_s", report.time_s},
                          {"aborted", report.aborted}};
    if (report.aborted) {
        out["error"] = report.error;
    }
    return out;
}

void write_returns_csv(const BacktestReport& report, std::ostream& out) {
    out << "period,return\n";
    out.precision(17);
    for (std::size_t i = 0; i < report.returns.size(); ++i) {
        out << report.periods[i] << ',' << report.returns[i] << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::IoFailure, "failed to write returns CSV");
    }
}

} // namespace drport
