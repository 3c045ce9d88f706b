#pragma once

// Rolling-horizon out-of-sample evaluation. Each window estimates moments on a
// training slice, solves a strategy, and holds the weights through the next
// testing slice. Windows that would run past the data are skipped.

#include "drport/baselines.hpp"
#include "drport/model.hpp"
#include "drport/upper_level.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drport {

/// Receives only the training rows of a window.
using Strategy = std::function<SolveResult(const ReturnMatrix& training)>;

struct RobustParams {
    int k = 10;
    std::optional<double> gamma;        ///< absolute gamma
    double gamma_scaled = 10.0;         ///< gamma = gamma_scaled / sqrt(N) when gamma is unset
    UncertaintySet ambiguity;
    double alpha = 10.0;
    std::vector<double> tangent_points; ///< empty: {0, mu_max/2, mu_max}
};

/// Instance for the robust model built from sample moments.
Instance robust_instance(const Moments& moments, const RobustParams& params);

Strategy robust_strategy(RobustParams params, SolveConfig config);
/// Required return defaults to the first quartile of the training means.
Strategy mean_variance_strategy(int k, std::optional<double> required_return, SolveConfig config);

struct BacktestConfig {
    int training = 156;
    int testing = 52;
    int step = 52;
    /// Multiplies xi^T x before compounding; 0.01 for returns quoted in percent.
    double return_scale = 1.0;
};

struct BacktestWindow {
    int train_begin = 0; ///< rows [train_begin, train_end) were visible to the strategy
    int train_end = 0;
    int test_begin = 0;
    int test_end = 0;
    Selection selection;
    Portfolio weights;
    double objective = 0.0;
    double gap_pct = 0.0;
    double time_s = 0.0;
};

struct BacktestReport {
    std::vector<BacktestWindow> windows;
    std::vector<std::string> periods; ///< one per realized return
    std::vector<double> returns;
    double cumulative = 1.0;
    double time_s = 0.0;
    bool aborted = false;
    std::string error;
};

/// prod (1 + r_m); 1 for an empty series.
double cumulative_return(std::span<const double> returns);

BacktestReport rolling_backtest(const ReturnMatrix& returns, const BacktestConfig& config, const Strategy& strategy);

nlohmann::json report_to_json(const BacktestReport& report, const std::vector<std::string>& labels = {});
/// "period,return" rows.
void write_returns_csv(const BacktestReport& report, std::ostream& out);

} // namespace drport
