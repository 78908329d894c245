#include "tailreg/likelihood.hpp"

#include <cmath>

namespace tailreg {

namespace {

// Scalar derivatives of ell = -m - (1/k + 1) log(1 + k y e^{-m}) with respect
// to the shape linear predictor eta (via dk/deta = k (1 - 2k)) and m = log
// sigma. Verified symbolically and against central differences.
struct PointDerivs {
    double ell;
    double g_eta;
    double g_m;
    double h_ee;
    double h_em;
    double h_mm;
};

inline PointDerivs point_derivs(double k, double sigma, double y, bool want_hess) {
    // The naive expressions pair 1/k with differences like 1 - 1/A that carry
    // absolute rounding error ~eps; at k near the link's lower saturation
    // (1/k up to ~3e15) that amplifies to O(1) garbage per observation. Every
    // factor of 1/k below therefore multiplies a quantity computed with
    // *relative* accuracy: c = y/sigma directly, and R = L - w/A = O(w^2)
    // whose absolute error is O(eps * w), so 1/k * R is accurate to eps * c.
    const double c = y / sigma;
    const double w = k * c;
    const double A = 1.0 + w;
    const double L = std::log1p(w);
    const double inv_k = 1.0 / k;
    const double q = w / A;
    const double R = L - q;

    PointDerivs d{};
    d.ell = -std::log(sigma) - (inv_k + 1.0) * L;
    d.g_eta = inv_k * R - 2.0 * L + (1.0 + 2.0 * k) * q;
    d.g_m = (c - 1.0) / A;
    if (want_hess) {
        const double one_m2k = 1.0 - 2.0 * k;
        d.h_ee = one_m2k * (inv_k * (q * q - R) + 2.0 * (k - 1.0) * q + (1.0 + 2.0 * k) * q / A);
        d.h_em = one_m2k * w * (1.0 - c) / (A * A);
        d.h_mm = -c * (1.0 + k) / (A * A);
    }
    return d;
}

struct CoreEval {
    bool overflowed = false;
    int overflow_t = -1;
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

// Single forward pass computing the likelihood and, on request, its exact
// gradient and Hessian. Sensitivities propagate through every t; only
// exceedance periods contribute terms.
CoreEval evaluate_core(const CoefVector& beta, const ExceedanceSeries& series,
                       const PredictorPanel& panel, bool want_grad, bool want_hess,
                       double log_sigma_bound = kLogSigmaBound) {
    if (!beta.dims_consistent() || beta.n_predictors() != panel.p())
        throw std::invalid_argument("likelihood: coefficient/panel dimension mismatch");
    if (series.T() != panel.T())
        throw std::invalid_argument("likelihood: series/panel length mismatch");
    const double ar = beta.ar();
    if (!(std::abs(ar) < 1.0))
        throw std::invalid_argument("likelihood: |ar| must be < 1");

    const int T = panel.T();
    const int p = panel.p();
    const int nk = p + 1;
    const int ns = p + 2;
    const int last = ns - 1;

    CoreEval out;
    if (want_grad) out.grad = Eigen::VectorXd::Zero(nk + ns);
    if (want_hess) out.hess = Eigen::MatrixXd::Zero(nk + ns, nk + ns);

    // Precomputed linear drives; the AR part is added sequentially.
    const Eigen::VectorXd eta =
        (panel.values * beta.shape.tail(p)).array() + beta.shape(0);
    const Eigen::VectorXd drive =
        (panel.values * beta.scale.segment(1, p)).array() + beta.scale(0);

    const double one_m_ar = 1.0 - ar;
    double m_prev = beta.scale(0) / one_m_ar;

    // s = d m_t / d beta2, seeded by differentiating the fixed-point init.
    Eigen::VectorXd s;
    Eigen::MatrixXd M;
    if (want_grad) {
        s = Eigen::VectorXd::Zero(ns);
        s(0) = 1.0 / one_m_ar;
        s(last) = beta.scale(0) / (one_m_ar * one_m_ar);
    }
    if (want_hess) {
        M = Eigen::MatrixXd::Zero(ns, ns);
        M(0, last) = M(last, 0) = 1.0 / (one_m_ar * one_m_ar);
        M(last, last) = 2.0 * beta.scale(0) / (one_m_ar * one_m_ar * one_m_ar);
    }

    Eigen::VectorXd a(nk);
    a(0) = 1.0;

    for (int t = 0; t < T; ++t) {
        if (want_hess) {
            // M_t = ar M_{t-1} + e_last s_{t-1}' + s_{t-1} e_last'
            M *= ar;
            M.col(last) += s;
            M.row(last) += s.transpose();
        }
        if (want_grad) {
            // s_t = ar s_{t-1} + [1, z_t', m_{t-1}]'
            s *= ar;
            s(0) += 1.0;
            s.segment(1, p) += panel.values.row(t).transpose();
            s(last) += m_prev;
        }

        const double m = drive(t) + ar * m_prev;
        if (!(std::abs(m) <= log_sigma_bound)) {
            out.overflowed = true;
            out.overflow_t = t;
            return out;
        }
        const double k = link_shape(eta(t));
        m_prev = m;

        const double y = series.y(t);
        if (y > 0.0) {
            const double sigma = std::exp(m);
            const PointDerivs d = point_derivs(k, sigma, y, want_hess);
            out.value += d.ell;
            if (want_grad) {
                a.tail(p) = panel.values.row(t).transpose();
                out.grad.head(nk).noalias() += d.g_eta * a;
                out.grad.tail(ns).noalias() += d.g_m * s;
            }
            if (want_hess) {
                out.hess.topLeftCorner(nk, nk).noalias() += d.h_ee * a * a.transpose();
                out.hess.topRightCorner(nk, ns).noalias() += d.h_em * a * s.transpose();
                out.hess.bottomRightCorner(ns, ns).noalias() +=
                    d.h_mm * s * s.transpose() + d.g_m * M;
            }
        }
    }

    if (want_hess) {
        // Within-block scalar-times-outer-product accumulation rounds the two
        // triangles differently; mirror the upper one for exact symmetry.
        out.hess.bottomLeftCorner(ns, nk) = out.hess.topRightCorner(nk, ns).transpose();
        out.hess.triangularView<Eigen::StrictlyLower>() = out.hess.transpose();
    }
    return out;
}

[[noreturn]] void throw_overflow(int t) {
    throw ScaleOverflowError("likelihood: |log sigma| exceeded bound at t=" +
                             std::to_string(t));
}

} // namespace

double loglik(const CoefVector& beta, const ExceedanceSeries& series,
              const PredictorPanel& panel) {
    CoreEval e = evaluate_core(beta, series, panel, false, false);
    if (e.overflowed) throw_overflow(e.overflow_t);
    return e.value;
}

ScoreVector score(const CoefVector& beta, const ExceedanceSeries& series,
                  const PredictorPanel& panel) {
    CoreEval e = evaluate_core(beta, series, panel, true, false);
    if (e.overflowed) throw_overflow(e.overflow_t);
    return e.grad;
}

HessianMatrix hessian(const CoefVector& beta, const ExceedanceSeries& series,
                      const PredictorPanel& panel) {
    CoreEval e = evaluate_core(beta, series, panel, true, true);
    if (e.overflowed) throw_overflow(e.overflow_t);
    return e.hess;
}

ScoreVector fd_gradient(const CoefVector& beta, const ExceedanceSeries& series,
                        const PredictorPanel& panel, double step) {
    if (!(step > 0.0))
        throw std::invalid_argument("fd_gradient: step must be > 0");
    const int p = beta.n_predictors();
    Eigen::VectorXd x = beta.packed();
    ScoreVector g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = step * std::max(1.0, std::abs(x(j)));
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        const double fp = loglik(CoefVector::from_packed(xp, p), series, panel);
        const double fm = loglik(CoefVector::from_packed(xm, p), series, panel);
        g(j) = (fp - fm) / (2.0 * h);
    }
    return g;
}

SmoothObjective make_loglik_objective(const ExceedanceSeries& series,
                                      const PredictorPanel& panel) {
    const int p = panel.p();
    return [&series, &panel, p](const Eigen::VectorXd& x) -> ObjectiveEval {
        ObjectiveEval r;
        const CoefVector beta = CoefVector::from_packed(x, p);
        if (!(std::abs(beta.ar()) < 1.0)) return r;
        CoreEval e = evaluate_core(beta, series, panel, true, false);
        if (e.overflowed) return r;
        r.value = e.value;
        r.grad = std::move(e.grad);
        r.feasible = true;
        return r;
    };
}

} // namespace tailreg
