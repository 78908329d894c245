#pragma once

#include "tailreg/gpd.hpp"
#include "tailreg/io.hpp"
#include "tailreg/types.hpp"

#include <string>
#include <vector>

namespace tailreg {

// Probability mass the model places at or below the threshold when forecasting
// value-at-risk from an empirical fit.
inline constexpr double kDefaultThresholdProb = 0.90;

// Risk levels reported by the backtester: 0.90 .. 0.99 in steps of 0.01, then
// 0.999 and 0.9999.
std::vector<double> default_var_alphas();

// Value-at-risk at level alpha when losses exceed u with probability
// 1 - threshold_prob and the excess over u is GPD(theta):
//   VaR = u + (sigma/k) (((1 - alpha)/(1 - threshold_prob))^(-k) - 1).
// Requires threshold_prob <= alpha < 1; at alpha = threshold_prob the
// forecast is u itself.
double var_level(const GpdParams& theta, double u, double threshold_prob, double alpha);

// A dated forecast together with the parameter values it used.
struct VarForecast {
    int t = 0;
    double alpha = 0.0;
    double var = 0.0;
    double u = 0.0;
    GpdParams theta{0.0, 0.0};
};

// Forecast at index t (default: the last row). Panel rows are producer-lagged,
// so row t carries only information dated t-1 or earlier; the scale recursion
// is evaluated causally over rows 0..t.
VarForecast var_forecast(const CoefVector& beta, const PredictorPanel& panel, double u_t,
                         double threshold_prob, double alpha, int t = -1);

// Whole-path forecasts at a fixed level: element t pairs (k_t, sigma_t) with
// u(t). The second overload takes a per-period threshold probability, for
// self-tests against a generating process whose exceedance probability moves
// with t.
Eigen::VectorXd var_path(const ParamPath& path, const Eigen::VectorXd& u,
                         double threshold_prob, double alpha);
Eigen::VectorXd var_path(const ParamPath& path, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& threshold_prob, double alpha);

// Fraction of periods whose loss is at or below the forecast.
double coverage_rate(const Eigen::VectorXd& losses, const Eigen::VectorXd& var);

struct KsTest {
    double statistic = 0.0;
    double p_value = 1.0;
    int n = 0;
};

// One-sample Kolmogorov-Smirnov test of the values against Uniform(0,1),
// asymptotic p-value. Requires at least 10 values, all strictly inside (0,1).
KsTest ks_uniform_test(const Eigen::VectorXd& pit);

// Out-of-sample scorecard: per-level coverage plus the K-S test of the
// exceedance probability integral transforms.
struct BacktestReport {
    int n_total = 0;
    int split_index = 0;  // first out-of-sample period
    int n_out = 0;
    double threshold_prob = kDefaultThresholdProb;
    double exceed_rate = 0.0;  // realized out-of-sample P(loss > u)
    std::vector<double> alphas;
    std::vector<double> coverage;  // aligned with alphas
    Eigen::VectorXd pit;           // out-of-sample exceedance transforms
    KsTest ks;
};

// Scores fixed coefficients on the final (1 - split) fraction of the series.
// The parameter path is evaluated causally over all T rows, so the
// out-of-sample forecasts inherit the in-sample recursion state; losses, u,
// and panel rows must align. Nothing is refit.
BacktestReport backtest(const CoefVector& beta, const PredictorPanel& panel,
                        const Eigen::VectorXd& losses, const Eigen::VectorXd& u,
                        double split = 0.9, std::vector<double> alphas = default_var_alphas(),
                        double threshold_prob = kDefaultThresholdProb);

ordered_json backtest_to_json(const BacktestReport& report);
BacktestReport backtest_from_json(const ordered_json& j);

// Single-row wide table: one coverage column per risk level (cov_<alpha>),
// then the K-S columns and the sample-size diagnostics.
void write_backtest_csv(const std::string& path, const BacktestReport& report);

} // namespace tailreg
