#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailreg {

// Static GPD parameter pair. The shape is restricted to (0, 0.5) throughout;
// the k <= 0 branches of the GPD are not modeled.
struct GpdParams {
    double shape;
    double scale;

    bool valid() const {
        return shape > 0.0 && shape < 0.5 && scale > 0.0 && std::isfinite(scale);
    }
};

// Regression coefficients for the two parameter equations.
//   shape: [intercept, slope_1..slope_p]                     (length p+1)
//   scale: [intercept, slope_1..slope_p, ar]                 (length p+2)
// The AR coefficient multiplies the lagged log-scale and sits last so that
// penalty masks and sensitivities index the two blocks uniformly.
struct CoefVector {
    Eigen::VectorXd shape;
    Eigen::VectorXd scale;

    CoefVector() = default;
    explicit CoefVector(int p)
        : shape(Eigen::VectorXd::Zero(p + 1)), scale(Eigen::VectorXd::Zero(p + 2)) {}

    int n_predictors() const { return static_cast<int>(shape.size()) - 1; }
    int packed_size() const { return static_cast<int>(shape.size() + scale.size()); }

    double ar() const { return scale(scale.size() - 1); }
    double& ar() { return scale(scale.size() - 1); }

    bool dims_consistent() const {
        return shape.size() >= 1 && scale.size() == shape.size() + 1;
    }

    // Packed layout: [shape block | scale block], AR last.
    Eigen::VectorXd packed() const {
        Eigen::VectorXd x(packed_size());
        x.head(shape.size()) = shape;
        x.tail(scale.size()) = scale;
        return x;
    }

    static CoefVector from_packed(const Eigen::VectorXd& x, int p) {
        if (x.size() != 2 * p + 3)
            throw std::invalid_argument("CoefVector::from_packed: size mismatch");
        CoefVector b(p);
        b.shape = x.head(p + 1);
        b.scale = x.tail(p + 2);
        return b;
    }
};

enum class IntegrationOrder { I0, I1 };

// Predictor observations feeding the parameter equations. Row t holds the
// predictor values that drive the parameters at time t, i.e. the producer has
// already applied the one-step lag. scale_factors record the divisors applied
// by standardization (1.0 when untouched).
struct PredictorPanel {
    Eigen::MatrixXd values;                       // T x p
    std::vector<std::string> names;               // length p
    std::vector<IntegrationOrder> integration_order;  // length p
    std::vector<double> scale_factors;            // length p, > 0

    int T() const { return static_cast<int>(values.rows()); }
    int p() const { return static_cast<int>(values.cols()); }

    void validate() const {
        const auto pc = static_cast<std::size_t>(p());
        if (names.size() != pc || integration_order.size() != pc || scale_factors.size() != pc)
            throw std::invalid_argument("PredictorPanel: metadata length mismatch");
        if (!values.allFinite())
            throw std::invalid_argument("PredictorPanel: non-finite values");
        for (double s : scale_factors)
            if (!(s > 0.0))
                throw std::invalid_argument("PredictorPanel: scale factor must be > 0");
    }

    static PredictorPanel plain(Eigen::MatrixXd vals) {
        PredictorPanel panel;
        const int p = static_cast<int>(vals.cols());
        panel.values = std::move(vals);
        panel.names.reserve(p);
        for (int j = 0; j < p; ++j) panel.names.push_back("z" + std::to_string(j + 1));
        panel.integration_order.assign(p, IntegrationOrder::I0);
        panel.scale_factors.assign(p, 1.0);
        return panel;
    }
};

// Per-t parameter values implied by (CoefVector, PredictorPanel).
struct ParamPath {
    Eigen::VectorXd k;          // in (0, 0.5)
    Eigen::VectorXd sigma;      // > 0
    Eigen::VectorXd log_sigma;  // the recursion state, kept to avoid re-logging
    double log_sigma0 = 0.0;    // initialization value used
};

// Censored excess series: y_t = max(l_t - u_t, 0). y_t > 0 marks an
// exceedance; censored periods contribute nothing to the likelihood.
struct ExceedanceSeries {
    Eigen::VectorXd y;
    Eigen::VectorXd u;

    int T() const { return static_cast<int>(y.size()); }

    int exceed_count() const {
        int n = 0;
        for (Eigen::Index t = 0; t < y.size(); ++t)
            if (y(t) > 0.0) ++n;
        return n;
    }

    void validate() const {
        if (u.size() != y.size())
            throw std::invalid_argument("ExceedanceSeries: u/y length mismatch");
        for (Eigen::Index t = 0; t < y.size(); ++t)
            if (!(y(t) >= 0.0) || !std::isfinite(y(t)))
                throw std::invalid_argument("ExceedanceSeries: excesses must be finite and >= 0");
    }
};

} // namespace tailreg
