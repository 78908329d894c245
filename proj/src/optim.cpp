#include "tailreg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace tailreg {

BoxBounds BoxBounds::standard(int p, double coef_bound, double ar_bound) {
    const int n = 2 * p + 3;
    BoxBounds b;
    b.lower = Eigen::VectorXd::Constant(n, -coef_bound);
    b.upper = Eigen::VectorXd::Constant(n, coef_bound);
    b.lower(n - 1) = -ar_bound;
    b.upper(n - 1) = ar_bound;
    return b;
}

void BoxBounds::validate() const {
    if (lower.size() != upper.size())
        throw std::invalid_argument("BoxBounds: lower/upper size mismatch");
    for (Eigen::Index j = 0; j < lower.size(); ++j)
        if (!(lower(j) < upper(j)))
            throw std::invalid_argument("BoxBounds: lower must be < upper");
}

Eigen::VectorXd BoxBounds::clamp(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
}

Eigen::VectorXd PenaltySpec::packed_penalty(int p) const {
    if (weights_k.size() != p || weights_sigma.size() != p + 1)
        throw std::invalid_argument("PenaltySpec: weight length mismatch");
    Eigen::VectorXd pen = Eigen::VectorXd::Zero(2 * p + 3);
    pen.segment(1, p) = lambda_k * weights_k;
    pen.segment(p + 2, p + 1) = lambda_sigma * weights_sigma;
    return pen;
}

namespace {

constexpr double kBoundEps = 1e-12;

bool is_free(const std::vector<std::uint8_t>& mask, Eigen::Index j) {
    return mask.empty() || mask[static_cast<std::size_t>(j)] != 0;
}

// Gradient of the minimization objective projected onto the feasible
// directions at x: zero for pinned coordinates and for bound-blocked pushes.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                                   const BoxBounds& bounds,
                                   const std::vector<std::uint8_t>& mask) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (!is_free(mask, j)) {
            pg(j) = 0.0;
            continue;
        }
        if (x(j) <= bounds.lower(j) + kBoundEps && g(j) > 0.0) pg(j) = 0.0;
        if (x(j) >= bounds.upper(j) - kBoundEps && g(j) < 0.0) pg(j) = 0.0;
    }
    return pg;
}

} // namespace

std::pair<Eigen::VectorXd, SolveReport> maximize_smooth(const SmoothObjective& objective,
                                                        const Eigen::VectorXd& start,
                                                        const BoxBounds& bounds,
                                                        const SmoothOptions& options) {
    bounds.validate();
    if (start.size() != bounds.lower.size())
        throw std::invalid_argument("maximize_smooth: start/bounds size mismatch");
    if (!options.free_mask.empty() &&
        options.free_mask.size() != static_cast<std::size_t>(start.size()))
        throw std::invalid_argument("maximize_smooth: mask size mismatch");

    Eigen::VectorXd x = bounds.clamp(start);
    ObjectiveEval cur = objective(x);
    if (!cur.feasible)
        throw std::invalid_argument("maximize_smooth: start point infeasible");

    // Work in minimization orientation: f = -value, g = -grad.
    double f = -cur.value;
    Eigen::VectorXd g = -cur.grad;

    struct Pair {
        Eigen::VectorXd s, y;
        double rho;
    };
    std::deque<Pair> memory;

    SolveReport report;
    const double c1 = 1e-4;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::VectorXd pg = projected_gradient(g, x, bounds, options.free_mask);
        const double tol = options.tolerance_scale * (1.0 + std::abs(f));
        report.max_kkt_violation = pg.lpNorm<Eigen::Infinity>();
        report.iterations = iter;
        if (report.max_kkt_violation <= tol) {
            report.converged = true;
            break;
        }

        // Two-loop recursion for d = -H g over the stored curvature pairs.
        Eigen::VectorXd d = -g;
        if (!memory.empty()) {
            std::vector<double> alpha(memory.size());
            for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
                alpha[i] = memory[i].rho * memory[i].s.dot(d);
                d -= alpha[i] * memory[i].y;
            }
            const Pair& last = memory.back();
            d *= last.s.dot(last.y) / last.y.squaredNorm();
            for (std::size_t i = 0; i < memory.size(); ++i) {
                const double beta = memory[i].rho * memory[i].y.dot(d);
                d += (alpha[i] - beta) * memory[i].s;
            }
        }
        for (Eigen::Index j = 0; j < d.size(); ++j)
            if (!is_free(options.free_mask, j)) d(j) = 0.0;

        bool used_steepest = d.dot(g) >= 0.0;
        if (used_steepest) d = -pg;

        // Projected Armijo backtracking; infeasible trials shrink the step.
        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_new;
        ObjectiveEval eval_new;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = bounds.clamp(x + step * d);
            for (Eigen::Index j = 0; j < x.size(); ++j)
                if (!is_free(options.free_mask, j)) x_new(j) = x(j);
            eval_new = objective(x_new);
            if (eval_new.feasible) {
                const double f_new = -eval_new.value;
                // The slack absorbs cancellation noise when |f| is large and
                // the per-step decrease approaches machine precision.
                if (f_new <= f + c1 * g.dot(x_new - x) + 1e-12 * (1.0 + std::abs(f))) {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted && !used_steepest) {
            d = -pg;
            step = 1.0;
            for (int ls = 0; ls < 60; ++ls) {
                x_new = bounds.clamp(x + step * d);
                for (Eigen::Index j = 0; j < x.size(); ++j)
                    if (!is_free(options.free_mask, j)) x_new(j) = x(j);
                eval_new = objective(x_new);
                if (eval_new.feasible) {
                    const double f_new = -eval_new.value;
                    if (f_new <= f + c1 * g.dot(x_new - x) + 1e-12 * (1.0 + std::abs(f))) {
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
        }
        if (!accepted) break;  // no admissible step; report current point

        Eigen::VectorXd g_new = -eval_new.grad;
        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            memory.push_back({std::move(s), std::move(yv), 1.0 / sy});
            if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
        }
        x = std::move(x_new);
        f = -eval_new.value;
        g = std::move(g_new);
    }

    report.objective = -f;
    return {x, report};
}

std::pair<Eigen::VectorXd, SolveReport> solve_penalized(const PenalizedProblem& problem,
                                                        const Eigen::VectorXd& start,
                                                        const BoxBounds& bounds,
                                                        const ProxOptions& options) {
    bounds.validate();
    const Eigen::VectorXd& pen = problem.penalty;
    if (start.size() != bounds.lower.size() || pen.size() != start.size())
        throw std::invalid_argument("solve_penalized: dimension mismatch");
    if (!options.free_mask.empty() &&
        options.free_mask.size() != static_cast<std::size_t>(start.size()))
        throw std::invalid_argument("solve_penalized: mask size mismatch");
    for (Eigen::Index j = 0; j < pen.size(); ++j)
        if (pen(j) > 0.0 && !(bounds.lower(j) < 0.0 && bounds.upper(j) > 0.0))
            throw std::invalid_argument("solve_penalized: penalized box must contain 0");

    const auto pin = [&](Eigen::VectorXd& v, const Eigen::VectorXd& ref) {
        for (Eigen::Index j = 0; j < v.size(); ++j)
            if (!is_free(options.free_mask, j)) v(j) = ref(j);
    };

    // Proximal map of the scaled penalty plus box: soft-threshold, then clamp.
    const auto prox_step = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& gz,
                               double L) {
        Eigen::VectorXd v = z - gz / L;
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            if (pen(j) > 0.0) {
                const double thr = pen(j) / L;
                if (v(j) > thr)
                    v(j) -= thr;
                else if (v(j) < -thr)
                    v(j) += thr;
                else
                    v(j) = 0.0;
            }
        }
        v = bounds.clamp(v);
        pin(v, z);
        return v;
    };

    const auto penalty_value = [&](const Eigen::VectorXd& v) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < v.size(); ++j) s += pen(j) * std::abs(v(j));
        return s;
    };

    Eigen::VectorXd x = bounds.clamp(start);
    {
        Eigen::VectorXd x0 = x;
        pin(x0, start);
        x = x0;
    }
    ObjectiveEval ex = problem.objective(x);
    if (!ex.feasible)
        throw std::invalid_argument("solve_penalized: start point infeasible");
    double fx = -ex.value;                       // smooth part, min orientation
    double Fx = fx + penalty_value(x);           // full objective at x

    Eigen::VectorXd z = x;
    double fz = fx;
    Eigen::VectorXd gx = -ex.grad;  // gradient at x, kept for restarts
    Eigen::VectorXd gz = gx;
    double t_acc = 1.0;
    double L = 1.0;

    SolveReport report;

    // KKT residual in score orientation (score = -gradient of the smooth min
    // objective); evaluated at x with a fresh gradient.
    const auto kkt_violation = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& score) {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < at.size(); ++j) {
            if (!is_free(options.free_mask, j)) continue;
            if (at(j) <= bounds.lower(j) + kBoundEps || at(j) >= bounds.upper(j) - kBoundEps)
                continue;
            double v;
            if (at(j) == 0.0)
                v = std::max(0.0, std::abs(score(j)) - pen(j));
            else
                v = std::abs(score(j) - pen(j) * (at(j) > 0.0 ? 1.0 : -1.0));
            worst = std::max(worst, v);
        }
        return worst;
    };

    {
        // The start may already satisfy KKT (warm starts along a path).
        const double tol = options.tolerance_scale * (1.0 + std::abs(fx));
        report.max_kkt_violation = kkt_violation(x, ex.grad);
        if (report.max_kkt_violation <= tol) {
            report.converged = true;
            report.objective = -fx;
            for (Eigen::Index j = 0; j < x.size(); ++j)
                if (pen(j) > 0.0 && x(j) != 0.0)
                    report.active_set.push_back(static_cast<int>(j));
            return {x, report};
        }
    }

    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        // Backtrack on the majorization constant L.
        Eigen::VectorXd x_new;
        double f_new = 0.0;
        ObjectiveEval e_new;
        bool stepped = false;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = prox_step(z, gz, L);
            e_new = problem.objective(x_new);
            if (e_new.feasible) {
                f_new = -e_new.value;
                const Eigen::VectorXd dx = x_new - z;
                // Noise-scaled slack: comparisons of nearly equal objective
                // values at magnitude |fz| carry that much rounding error.
                // Past the cap the step is within roundoff of z anyway.
                if (f_new <= fz + gz.dot(dx) + 0.5 * L * dx.squaredNorm() +
                                 1e-10 * (1.0 + std::abs(fz)) ||
                    L >= 1e15) {
                    stepped = true;
                    break;
                }
            }
            L *= 2.0;
        }
        if (!stepped) break;

        const double F_new = f_new + penalty_value(x_new);

        // KKT check with the gradient at the accepted point.
        const double tol = options.tolerance_scale * (1.0 + std::abs(f_new));
        const double viol = kkt_violation(x_new, e_new.grad);
        report.max_kkt_violation = viol;
        if (viol <= tol) {
            x = std::move(x_new);
            fx = f_new;
            report.converged = true;
            ++iter;
            break;
        }

        if (F_new > Fx + 1e-10 * (1.0 + std::abs(Fx))) {
            // Momentum restart: fall back to a plain proximal step from x.
            z = x;
            fz = fx;
            gz = gx;
            t_acc = 1.0;
            continue;
        }

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
        Eigen::VectorXd z_next = x_new + ((t_acc - 1.0) / t_next) * (x_new - x);
        z_next = bounds.clamp(z_next);
        pin(z_next, x_new);

        x = std::move(x_new);
        fx = f_new;
        Fx = F_new;
        gx = -e_new.grad;
        t_acc = t_next;

        ObjectiveEval ez = problem.objective(z_next);
        if (!ez.feasible) {
            // Extrapolation left the feasible region; restart from x.
            z = x;
            fz = fx;
            gz = gx;
            t_acc = 1.0;
        } else {
            z = std::move(z_next);
            fz = -ez.value;
            gz = -ez.grad;
        }
        L = std::max(L * 0.9, 1e-8);
    }

    report.iterations = iter;
    report.objective = -fx;
    for (Eigen::Index j = 0; j < x.size(); ++j)
        if (pen(j) > 0.0 && x(j) != 0.0) report.active_set.push_back(static_cast<int>(j));
    return {x, report};
}

double lambda_max(const SmoothObjective& objective, const Eigen::VectorXd& x_ref,
                  const std::vector<int>& penalized, const Eigen::VectorXd& weights) {
    if (weights.size() != static_cast<Eigen::Index>(penalized.size()))
        throw std::invalid_argument("lambda_max: weights/index size mismatch");
    ObjectiveEval e = objective(x_ref);
    if (!e.feasible)
        throw std::invalid_argument("lambda_max: reference point infeasible");
    double worst = 0.0;
    for (std::size_t i = 0; i < penalized.size(); ++i) {
        if (!(weights(static_cast<Eigen::Index>(i)) > 0.0))
            throw std::invalid_argument("lambda_max: weights must be > 0");
        worst = std::max(worst, std::abs(e.grad(penalized[i])) /
                                    weights(static_cast<Eigen::Index>(i)));
    }
    return 1.05 * worst;
}

} // namespace tailreg
