#pragma once

#include "tailreg/types.hpp"

namespace tailreg {

// Magnitude bound on log sigma_t beyond which the scale recursion is treated
// as divergent.
inline constexpr double kLogSigmaBound = 50.0;

// Linear predictors for the shape link are clamped to this magnitude before
// exponentiation; the link is flat to machine precision far inside the bound.
inline constexpr double kEtaClamp = 35.0;

// P(Y <= y) for an excess y >= 0: 1 - (1 + k y / sigma)^(-1/k).
double gpd_cdf(double y, const GpdParams& params);

// log f(y) = -log sigma - (1/k + 1) log(1 + k y / sigma), y > 0.
double gpd_logpdf(double y, const GpdParams& params);

// Inverse cdf: (sigma/k) ((1 - q)^(-k) - 1), q in [0, 1).
double gpd_quantile(double q, const GpdParams& params);

// Scaled logit link: k = 0.5 / (1 + exp(-eta)), strictly inside (0, 0.5).
double link_shape(double eta);

// Inverse of link_shape: eta = log(k / (0.5 - k)).
double link_shape_inverse(double k);

// Thrown when the scale recursion leaves [-kLogSigmaBound, kLogSigmaBound].
struct ScaleOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Evaluates the parameter equations over the panel:
//   eta_t      = shape ' [1, z_t]
//   log sig_t  = scale_intercept + slopes ' z_t + ar * log sig_{t-1}
// seeded with log sig_init = scale_intercept / (1 - ar), the recursion's fixed
// point under zero predictors. Throws ScaleOverflowError on divergence.
ParamPath param_path(const CoefVector& beta, const PredictorPanel& panel,
                     double log_sigma_bound = kLogSigmaBound);

} // namespace tailreg
