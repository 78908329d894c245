#include "tailreg/gpd.hpp"

#include <algorithm>
#include <cmath>

namespace tailreg {

namespace {

void check_params(const GpdParams& params, const char* fn) {
    if (!params.valid())
        throw std::domain_error(std::string(fn) + ": requires 0 < k < 0.5 and sigma > 0");
}

} // namespace

double gpd_cdf(double y, const GpdParams& params) {
    check_params(params, "gpd_cdf");
    if (!(y >= 0.0) || !std::isfinite(y))
        throw std::domain_error("gpd_cdf: excess must be finite and >= 0");
    // 1 - exp(-(1/k) log1p(k y / sigma)), kept in log1p/expm1 form for small y.
    return -std::expm1(-std::log1p(params.shape * y / params.scale) / params.shape);
}

double gpd_logpdf(double y, const GpdParams& params) {
    check_params(params, "gpd_logpdf");
    if (!(y > 0.0) || !std::isfinite(y))
        throw std::domain_error("gpd_logpdf: excess must be finite and > 0");
    return -std::log(params.scale)
           - (1.0 / params.shape + 1.0) * std::log1p(params.shape * y / params.scale);
}

double gpd_quantile(double q, const GpdParams& params) {
    check_params(params, "gpd_quantile");
    if (!(q >= 0.0 && q < 1.0))
        throw std::domain_error("gpd_quantile: probability must be in [0, 1)");
    // (sigma/k) ((1-q)^(-k) - 1) = (sigma/k) expm1(-k log1p(-q))
    return params.scale / params.shape * std::expm1(-params.shape * std::log1p(-q));
}

double link_shape(double eta) {
    if (!std::isfinite(eta))
        throw std::domain_error("link_shape: eta must be finite");
    const double e = std::clamp(eta, -kEtaClamp, kEtaClamp);
    return 0.5 / (1.0 + std::exp(-e));
}

double link_shape_inverse(double k) {
    if (!(k > 0.0 && k < 0.5))
        throw std::domain_error("link_shape_inverse: k must be in (0, 0.5)");
    return std::log(k / (0.5 - k));
}

ParamPath param_path(const CoefVector& beta, const PredictorPanel& panel,
                     double log_sigma_bound) {
    if (!beta.dims_consistent() || beta.n_predictors() != panel.p())
        throw std::invalid_argument("param_path: coefficient/panel dimension mismatch");
    const double ar = beta.ar();
    if (!(std::abs(ar) < 1.0))
        throw std::invalid_argument("param_path: |ar| must be < 1");

    const int T = panel.T();
    const int p = panel.p();
    ParamPath path;
    path.k.resize(T);
    path.sigma.resize(T);
    path.log_sigma.resize(T);
    path.log_sigma0 = beta.scale(0) / (1.0 - ar);

    const Eigen::VectorXd eta =
        (panel.values * beta.shape.tail(p)).array() + beta.shape(0);
    const Eigen::VectorXd drive =
        (panel.values * beta.scale.segment(1, p)).array() + beta.scale(0);

    double m_prev = path.log_sigma0;
    for (int t = 0; t < T; ++t) {
        const double m = drive(t) + ar * m_prev;
        if (!(std::abs(m) <= log_sigma_bound))
            throw ScaleOverflowError("param_path: |log sigma| exceeded bound at t=" +
                                     std::to_string(t));
        path.log_sigma(t) = m;
        path.sigma(t) = std::exp(m);
        path.k(t) = link_shape(eta(t));
        m_prev = m;
    }
    return path;
}

} // namespace tailreg
