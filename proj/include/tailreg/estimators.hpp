#pragma once

#include "tailreg/likelihood.hpp"
#include "tailreg/optim.hpp"
#include "tailreg/types.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tailreg {

enum class Criterion { AIC, HQ, BIC };

std::string criterion_name(Criterion c);
std::optional<Criterion> criterion_from_name(const std::string& name);

// Descending log-equispaced tuning grid from lam_max down to the fixed floor
// 1e-6: values[j] = exp(log lam_max - j (log lam_max - log 1e-6)/(n-1)).
struct TuningGrid {
    Eigen::VectorXd values;

    static TuningGrid make(double lam_max, int n);
};

inline constexpr double kGridFloor = 1e-6;
inline constexpr int kDefaultShapeGridSize = 50;
inline constexpr int kDefaultScaleGridSize = 30;

// Penalty weights built from preliminary MLEs: shape weights use the product
// of the partial-model and full-model estimates, scale weights the full-model
// estimate. Denominators are floored at 1e-8 so exact zeros translate into
// effectively infinite penalties.
struct AdaptiveWeights {
    Eigen::VectorXd w_k;      // length p, shape slopes
    Eigen::VectorXd w_sigma;  // length p+1, scale slopes then AR
};

// Scale-block active indices use 0..p-1 for predictor slopes and p for the
// AR coefficient.
struct PathEntry {
    double lambda_k = 0.0;
    double lambda_sigma = 0.0;
    double loglik = 0.0;
    int n_active = 0;
    double ic = 0.0;
    bool converged = false;
};

struct FitResult {
    CoefVector beta_hat;
    std::vector<int> active_k;      // shape slopes, 0-based predictor index
    std::vector<int> active_sigma;  // scale slopes 0..p-1, plus p for AR
    double lambda_k = 0.0;
    double lambda_sigma = 0.0;
    std::string criterion;          // "aic" | "hq" | "bic" | "mle"
    double ic = std::numeric_limits<double>::quiet_NaN();
    double loglik = 0.0;
    bool converged = false;
    bool warning_low_exceedances = false;
    std::vector<PathEntry> path;
};

// Full-model MLE, started from the intercept-only optimum.
FitResult fit_mle(const ExceedanceSeries& series, const PredictorPanel& panel);

// MLE of the partial model with all scale slopes and the AR coefficient
// pinned at zero (scale intercept free); used only to build weights.
CoefVector fit_partial_k_mle(const ExceedanceSeries& series, const PredictorPanel& panel);

AdaptiveWeights adaptive_weights(const CoefVector& full_mle, const CoefVector& partial_mle);

// -2 loglik + penalty * n_active with penalty 2 (AIC), 2 log log T (HQ),
// log T (BIC). n_active counts nonzero penalized coefficients.
double ic_value(double loglik, int n_active, int T, Criterion criterion);

// One-step ALMLE: solves the doubly penalized problem on the full
// grid_k x grid_sigma product with warm starts, then selects by IC. Ties
// break toward larger (lambda_k, lambda_sigma) lexicographically.
FitResult fit_almle(const ExceedanceSeries& series, const PredictorPanel& panel,
                    const AdaptiveWeights& weights, const TuningGrid& grid_k,
                    const TuningGrid& grid_sigma, Criterion criterion);

// One-step ALMLE with everything derived from the data: preliminary MLEs for
// the weights, and grid tops at the smallest penalties that empty each block
// at the intercept-only optimum.
FitResult fit_almle_auto(const ExceedanceSeries& series, const PredictorPanel& panel,
                         Criterion criterion, int shape_grid = kDefaultShapeGridSize,
                         int scale_grid = kDefaultScaleGridSize);

// Two-step ALMLE. Step 1 sweeps the shape penalty on the scale-pinned model
// and picks lambda_k by IC (counting shape actives only). Step 2 keeps the
// Step-1 exclusions pinned, sweeps the scale penalty on the full model, and
// picks lambda_sigma by IC over both blocks.
FitResult fit_two_step_almle(const ExceedanceSeries& series, const PredictorPanel& panel,
                             Criterion criterion, int shape_grid = kDefaultShapeGridSize,
                             int scale_grid = kDefaultScaleGridSize);

// Shared-path variant: the Step-1 sweep and preliminary MLEs are computed
// once and each criterion selects from it (Step-2 sweeps are cached per
// distinct Step-1 choice). Results are identical to calling
// fit_two_step_almle per criterion.
std::vector<FitResult> fit_two_step_almle_multi(const ExceedanceSeries& series,
                                                const PredictorPanel& panel,
                                                const std::vector<Criterion>& criteria,
                                                int shape_grid = kDefaultShapeGridSize,
                                                int scale_grid = kDefaultScaleGridSize);

// Determinant of the Hessian block over the intercepts and active
// coordinates, normalized as det(D^{-1/2} H D^{-1/2}) with D = |diag(H)| so
// the value is unit-free. Values below 1e-10 * dim indicate a near-singular
// selection (e.g. duplicated predictors).
double det_condition_diagnostic(const CoefVector& beta, const ExceedanceSeries& series,
                                const PredictorPanel& panel);

// Divides each column by its empirical (population) standard deviation and
// multiplies the recorded scale factor. Integration-order flags pass through.
PredictorPanel standardize_panel(const PredictorPanel& raw);

} // namespace tailreg
