#pragma once

#include "tailreg/gpd.hpp"
#include "tailreg/types.hpp"

#include <functional>

namespace tailreg {

// Packed-gradient ordering follows CoefVector::packed(): shape block first,
// then the scale block with the AR coefficient last.
using ScoreVector = Eigen::VectorXd;
using HessianMatrix = Eigen::MatrixXd;

// Censored log-likelihood: sum over exceedances of the conditional GPD
// log-density at (k_t, sigma_t) from param_path. Throws ScaleOverflowError
// when the recursion diverges.
double loglik(const CoefVector& beta, const ExceedanceSeries& series,
              const PredictorPanel& panel);

// Exact analytic gradient of loglik, including the chain through the lagged
// log-scale and the fixed-point initialization. The scale-block sensitivity
// s_t = d log sigma_t / d beta2 obeys s_t = [1, z_t', log sigma_{t-1}]' +
// ar * s_{t-1}, accumulated forward in O(T p).
ScoreVector score(const CoefVector& beta, const ExceedanceSeries& series,
                  const PredictorPanel& panel);

// Exact analytic Hessian, symmetric by construction; O(T p^2).
HessianMatrix hessian(const CoefVector& beta, const ExceedanceSeries& series,
                      const PredictorPanel& panel);

// Central-difference gradient oracle; per-coordinate step h_j = step * max(1, |beta_j|).
ScoreVector fd_gradient(const CoefVector& beta, const ExceedanceSeries& series,
                        const PredictorPanel& panel, double step = 1e-5);

// One optimizer-facing evaluation: the objective value is the log-likelihood
// (maximization orientation). feasible = false flags a diverged scale
// recursion or a unit-root AR coefficient; value/grad are unusable then.
// The shape path needs no guard: the logit link maps any linear predictor
// into (0, 0.5) and saturates smoothly at both ends.
struct ObjectiveEval {
    double value = 0.0;
    Eigen::VectorXd grad;
    bool feasible = false;
};

using SmoothObjective = std::function<ObjectiveEval(const Eigen::VectorXd&)>;

// Binds (series, panel) into a closure over packed coefficients. Captures by
// reference: the data must outlive the closure. Pure and reentrant; safe to
// share across threads.
SmoothObjective make_loglik_objective(const ExceedanceSeries& series,
                                      const PredictorPanel& panel);

} // namespace tailreg
