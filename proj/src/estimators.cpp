#include "tailreg/estimators.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace tailreg {

namespace {

constexpr double kWeightFloor = 1e-8;

Eigen::VectorXd intercept_only_start(const ExceedanceSeries& series, int p) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index t = 0; t < series.y.size(); ++t) {
        if (series.y(t) > 0.0) {
            sum += series.y(t);
            ++count;
        }
    }
    if (count == 0)
        throw std::invalid_argument("estimators: series has no exceedances");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * p + 3);
    // Shape intercept 0 puts k at 0.25; the scale start matches the GPD mean
    // sigma = mean_excess * (1 - k) at that shape.
    x(p + 1) = std::clamp(std::log(0.75 * sum / count), -45.0, 45.0);
    return x;
}

std::vector<std::uint8_t> mask_all(int n, bool free_coord) {
    return std::vector<std::uint8_t>(n, free_coord ? 1 : 0);
}

std::vector<int> shape_slope_indices(int p) {
    std::vector<int> idx;
    idx.reserve(p);
    for (int j = 1; j <= p; ++j) idx.push_back(j);
    return idx;
}

std::vector<int> scale_penalized_indices(int p) {
    std::vector<int> idx;
    idx.reserve(p + 1);
    for (int j = p + 2; j <= 2 * p + 2; ++j) idx.push_back(j);
    return idx;
}

int count_nonzero(const Eigen::VectorXd& x, const std::vector<int>& idx) {
    int c = 0;
    for (int j : idx)
        if (x(j) != 0.0) ++c;
    return c;
}

Eigen::VectorXd fit_intercept_only(const SmoothObjective& obj, const ExceedanceSeries& series,
                                   int p, const BoxBounds& bounds) {
    SmoothOptions opt;
    opt.free_mask = mask_all(2 * p + 3, false);
    opt.free_mask[0] = 1;
    opt.free_mask[static_cast<std::size_t>(p) + 1] = 1;
    auto [x, rep] = maximize_smooth(obj, intercept_only_start(series, p), bounds, opt);
    (void)rep;
    return x;
}

Eigen::VectorXd fit_partial_packed(const SmoothObjective& obj, const Eigen::VectorXd& x0, int p,
                                   const BoxBounds& bounds, SolveReport* report_out) {
    SmoothOptions opt;
    opt.free_mask = mask_all(2 * p + 3, true);
    for (int j = p + 2; j <= 2 * p + 2; ++j) opt.free_mask[static_cast<std::size_t>(j)] = 0;
    auto [x, rep] = maximize_smooth(obj, x0, bounds, opt);
    if (report_out) *report_out = rep;
    return x;
}

FitResult build_result(const Eigen::VectorXd& x, int p, const ExceedanceSeries& series) {
    FitResult r;
    r.beta_hat = CoefVector::from_packed(x, p);
    for (int j = 0; j < p; ++j)
        if (x(1 + j) != 0.0) r.active_k.push_back(j);
    for (int j = 0; j <= p; ++j)
        if (x(p + 2 + j) != 0.0) r.active_sigma.push_back(j);
    r.warning_low_exceedances = series.exceed_count() < 10 * (2 * p + 3);
    return r;
}

struct Step1Node {
    double lambda = 0.0;
    Eigen::VectorXd x;
    double loglik = 0.0;
    int n_active = 0;
    bool converged = false;
};

struct Step2Node {
    double lambda_sigma = 0.0;
    Eigen::VectorXd x;
    double loglik = 0.0;
    int n_active = 0;
    bool converged = false;
};

struct Step2Path {
    double lambda_k = 0.0;
    std::vector<Step2Node> nodes;
};

Step2Path build_step2_path(const SmoothObjective& obj, const BoxBounds& bounds,
                           const Step1Node& step1, const AdaptiveWeights& w, int p,
                           int scale_grid) {
    const int n = 2 * p + 3;
    ProxOptions opt;
    opt.free_mask = mask_all(n, true);
    for (int j = 1; j <= p; ++j)
        if (step1.x(j) == 0.0) opt.free_mask[static_cast<std::size_t>(j)] = 0;

    const auto idx_k = shape_slope_indices(p);
    const auto idx_s = scale_penalized_indices(p);
    const double lmax =
        std::max(lambda_max(obj, step1.x, idx_s, w.w_sigma), 10.0 * kGridFloor);
    const TuningGrid grid = TuningGrid::make(lmax, scale_grid);

    PenaltySpec pen;
    pen.lambda_k = step1.lambda;
    pen.weights_k = w.w_k;
    pen.weights_sigma = w.w_sigma;

    Step2Path out;
    out.lambda_k = step1.lambda;
    out.nodes.reserve(static_cast<std::size_t>(grid.values.size()));
    Eigen::VectorXd warm = step1.x;
    for (Eigen::Index j = 0; j < grid.values.size(); ++j) {
        pen.lambda_sigma = grid.values(j);
        PenalizedProblem prob{obj, pen.packed_penalty(p)};
        auto [x, rep] = solve_penalized(prob, warm, bounds, opt);
        warm = x;
        Step2Node node;
        node.lambda_sigma = grid.values(j);
        node.x = std::move(x);
        node.loglik = rep.objective;
        node.n_active = count_nonzero(node.x, idx_k) + count_nonzero(node.x, idx_s);
        node.converged = rep.converged;
        out.nodes.push_back(std::move(node));
    }
    return out;
}

} // namespace

std::string criterion_name(Criterion c) {
    switch (c) {
        case Criterion::AIC: return "aic";
        case Criterion::HQ: return "hq";
        case Criterion::BIC: return "bic";
    }
    throw std::logic_error("criterion_name: unknown criterion");
}

std::optional<Criterion> criterion_from_name(const std::string& name) {
    if (name == "aic") return Criterion::AIC;
    if (name == "hq") return Criterion::HQ;
    if (name == "bic") return Criterion::BIC;
    return std::nullopt;
}

TuningGrid TuningGrid::make(double lam_max, int n) {
    if (!(lam_max > kGridFloor))
        throw std::invalid_argument("TuningGrid: lam_max must exceed the grid floor");
    if (n < 2)
        throw std::invalid_argument("TuningGrid: need at least two grid points");
    TuningGrid g;
    g.values.resize(n);
    const double top = std::log(lam_max);
    const double step = (top - std::log(kGridFloor)) / (n - 1);
    for (int j = 0; j < n; ++j) g.values(j) = std::exp(top - j * step);
    g.values(0) = lam_max;
    g.values(n - 1) = kGridFloor;
    return g;
}

double ic_value(double loglik, int n_active, int T, Criterion criterion) {
    if (T < 3)
        throw std::invalid_argument("ic_value: sample size too small");
    if (n_active < 0)
        throw std::invalid_argument("ic_value: negative active count");
    double pen = 0.0;
    switch (criterion) {
        case Criterion::AIC: pen = 2.0; break;
        case Criterion::HQ: pen = 2.0 * std::log(std::log(static_cast<double>(T))); break;
        case Criterion::BIC: pen = std::log(static_cast<double>(T)); break;
    }
    return -2.0 * loglik + pen * static_cast<double>(n_active);
}

FitResult fit_mle(const ExceedanceSeries& series, const PredictorPanel& panel) {
    series.validate();
    panel.validate();
    const int p = panel.p();
    const auto obj = make_loglik_objective(series, panel);
    const BoxBounds bounds = BoxBounds::standard(p);
    const Eigen::VectorXd x0 = fit_intercept_only(obj, series, p, bounds);
    auto [x, rep] = maximize_smooth(obj, x0, bounds);
    FitResult r = build_result(x, p, series);
    r.criterion = "mle";
    r.loglik = rep.objective;
    r.converged = rep.converged;
    return r;
}

CoefVector fit_partial_k_mle(const ExceedanceSeries& series, const PredictorPanel& panel) {
    series.validate();
    panel.validate();
    const int p = panel.p();
    const auto obj = make_loglik_objective(series, panel);
    const BoxBounds bounds = BoxBounds::standard(p);
    const Eigen::VectorXd x0 = fit_intercept_only(obj, series, p, bounds);
    return CoefVector::from_packed(fit_partial_packed(obj, x0, p, bounds, nullptr), p);
}

AdaptiveWeights adaptive_weights(const CoefVector& full_mle, const CoefVector& partial_mle) {
    if (!full_mle.dims_consistent() || !partial_mle.dims_consistent())
        throw std::invalid_argument("adaptive_weights: inconsistent coefficient dimensions");
    const int p = full_mle.n_predictors();
    if (partial_mle.n_predictors() != p)
        throw std::invalid_argument("adaptive_weights: predictor count mismatch");
    AdaptiveWeights w;
    w.w_k.resize(p);
    for (int j = 0; j < p; ++j) {
        const double denom = std::abs(partial_mle.shape(1 + j) * full_mle.shape(1 + j));
        w.w_k(j) = 1.0 / std::max(denom, kWeightFloor);
    }
    w.w_sigma.resize(p + 1);
    for (int j = 0; j <= p; ++j)
        w.w_sigma(j) = 1.0 / std::max(std::abs(full_mle.scale(1 + j)), kWeightFloor);
    return w;
}

FitResult fit_almle(const ExceedanceSeries& series, const PredictorPanel& panel,
                    const AdaptiveWeights& weights, const TuningGrid& grid_k,
                    const TuningGrid& grid_sigma, Criterion criterion) {
    series.validate();
    panel.validate();
    const int p = panel.p();
    if (weights.w_k.size() != p || weights.w_sigma.size() != p + 1)
        throw std::invalid_argument("fit_almle: weight dimensions do not match the panel");
    if (grid_k.values.size() == 0 || grid_sigma.values.size() == 0)
        throw std::invalid_argument("fit_almle: empty tuning grid");

    const auto obj = make_loglik_objective(series, panel);
    const BoxBounds bounds = BoxBounds::standard(p);
    const Eigen::VectorXd x0 = fit_intercept_only(obj, series, p, bounds);
    const auto idx_k = shape_slope_indices(p);
    const auto idx_s = scale_penalized_indices(p);
    std::vector<int> idx_all = idx_k;
    idx_all.insert(idx_all.end(), idx_s.begin(), idx_s.end());
    const int T = series.T();

    PenaltySpec pen;
    pen.weights_k = weights.w_k;
    pen.weights_sigma = weights.w_sigma;

    std::vector<PathEntry> path;
    path.reserve(static_cast<std::size_t>(grid_k.values.size() * grid_sigma.values.size()));
    double best_ic = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_x;
    PathEntry best_entry;
    bool have_best = false;

    Eigen::VectorXd row_head = x0;
    for (Eigen::Index i = 0; i < grid_k.values.size(); ++i) {
        Eigen::VectorXd warm = row_head;
        for (Eigen::Index j = 0; j < grid_sigma.values.size(); ++j) {
            pen.lambda_k = grid_k.values(i);
            pen.lambda_sigma = grid_sigma.values(j);
            PenalizedProblem prob{obj, pen.packed_penalty(p)};
            auto [x, rep] = solve_penalized(prob, warm, bounds);
            warm = x;
            if (j == 0) row_head = x;

            PathEntry e;
            e.lambda_k = pen.lambda_k;
            e.lambda_sigma = pen.lambda_sigma;
            e.loglik = rep.objective;
            e.n_active = count_nonzero(x, idx_all);
            e.converged = rep.converged;
            e.ic = e.converged ? ic_value(e.loglik, e.n_active, T, criterion)
                               : std::numeric_limits<double>::quiet_NaN();
            path.push_back(e);
            if (e.converged && e.ic < best_ic) {
                best_ic = e.ic;
                best_x = x;
                best_entry = e;
                have_best = true;
            }
        }
    }
    if (!have_best)
        throw std::runtime_error("fit_almle: no converged node on the tuning surface");

    FitResult r = build_result(best_x, p, series);
    r.lambda_k = best_entry.lambda_k;
    r.lambda_sigma = best_entry.lambda_sigma;
    r.criterion = criterion_name(criterion);
    r.ic = best_entry.ic;
    r.loglik = best_entry.loglik;
    r.converged = true;
    r.path = std::move(path);
    return r;
}

FitResult fit_almle_auto(const ExceedanceSeries& series, const PredictorPanel& panel,
                         Criterion criterion, int shape_grid, int scale_grid) {
    series.validate();
    panel.validate();
    const int p = panel.p();
    const auto obj = make_loglik_objective(series, panel);
    const BoxBounds bounds = BoxBounds::standard(p);
    const Eigen::VectorXd x0 = fit_intercept_only(obj, series, p, bounds);

    auto [x_full, rep_full] = maximize_smooth(obj, x0, bounds);
    (void)rep_full;
    const Eigen::VectorXd x_part = fit_partial_packed(obj, x0, p, bounds, nullptr);
    const AdaptiveWeights w = adaptive_weights(CoefVector::from_packed(x_full, p),
                                               CoefVector::from_packed(x_part, p));

    const auto idx_k = shape_slope_indices(p);
    const auto idx_s = scale_penalized_indices(p);
    const double lmax_k = std::max(lambda_max(obj, x0, idx_k, w.w_k), 10.0 * kGridFloor);
    const double lmax_s = std::max(lambda_max(obj, x0, idx_s, w.w_sigma), 10.0 * kGridFloor);
    return fit_almle(series, panel, w, TuningGrid::make(lmax_k, shape_grid),
                     TuningGrid::make(lmax_s, scale_grid), criterion);
}

std::vector<FitResult> fit_two_step_almle_multi(const ExceedanceSeries& series,
                                                const PredictorPanel& panel,
                                                const std::vector<Criterion>& criteria,
                                                int shape_grid, int scale_grid) {
    series.validate();
    panel.validate();
    if (criteria.empty())
        throw std::invalid_argument("fit_two_step_almle: no criteria given");
    const int p = panel.p();
    const int n = 2 * p + 3;
    const int T = series.T();
    const auto obj = make_loglik_objective(series, panel);
    const BoxBounds bounds = BoxBounds::standard(p);
    const Eigen::VectorXd x0 = fit_intercept_only(obj, series, p, bounds);

    // Preliminary estimates feeding the adaptive weights.
    auto [x_full, rep_full] = maximize_smooth(obj, x0, bounds);
    (void)rep_full;
    const Eigen::VectorXd x_part = fit_partial_packed(obj, x0, p, bounds, nullptr);
    const AdaptiveWeights w = adaptive_weights(CoefVector::from_packed(x_full, p),
                                               CoefVector::from_packed(x_part, p));

    // Step 1: scale slopes and AR pinned at zero, shape penalty swept.
    ProxOptions step1_opt;
    step1_opt.free_mask = mask_all(n, true);
    for (int j = p + 2; j <= 2 * p + 2; ++j)
        step1_opt.free_mask[static_cast<std::size_t>(j)] = 0;
    const auto idx_k = shape_slope_indices(p);
    const double lmax_k = std::max(lambda_max(obj, x0, idx_k, w.w_k), 10.0 * kGridFloor);
    const TuningGrid grid_k = TuningGrid::make(lmax_k, shape_grid);

    PenaltySpec pen1;
    pen1.weights_k = w.w_k;
    pen1.weights_sigma = w.w_sigma;
    pen1.lambda_sigma = 0.0;

    std::vector<Step1Node> step1;
    step1.reserve(static_cast<std::size_t>(grid_k.values.size()));
    Eigen::VectorXd warm = x0;
    for (Eigen::Index i = 0; i < grid_k.values.size(); ++i) {
        pen1.lambda_k = grid_k.values(i);
        PenalizedProblem prob{obj, pen1.packed_penalty(p)};
        auto [x, rep] = solve_penalized(prob, warm, bounds, step1_opt);
        warm = x;
        Step1Node node;
        node.lambda = grid_k.values(i);
        node.x = std::move(x);
        node.loglik = rep.objective;
        node.n_active = count_nonzero(node.x, idx_k);
        node.converged = rep.converged;
        step1.push_back(std::move(node));
    }

    std::map<int, Step2Path> step2_cache;
    std::vector<FitResult> results;
    results.reserve(criteria.size());
    for (Criterion c : criteria) {
        // Grids run top-down, so the first strict improvement keeps the
        // largest lambda on ties.
        int sel1 = -1;
        double best1 = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < step1.size(); ++i) {
            if (!step1[i].converged) continue;
            const double ic = ic_value(step1[i].loglik, step1[i].n_active, T, c);
            if (ic < best1) {
                best1 = ic;
                sel1 = static_cast<int>(i);
            }
        }
        if (sel1 < 0)
            throw std::runtime_error("two-step fit: no converged Step-1 node");

        auto it = step2_cache.find(sel1);
        if (it == step2_cache.end())
            it = step2_cache.emplace(sel1, build_step2_path(obj, bounds, step1[static_cast<std::size_t>(sel1)], w, p, scale_grid)).first;
        const Step2Path& s2 = it->second;

        int sel2 = -1;
        double best2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s2.nodes.size(); ++j) {
            if (!s2.nodes[j].converged) continue;
            const double ic = ic_value(s2.nodes[j].loglik, s2.nodes[j].n_active, T, c);
            if (ic < best2) {
                best2 = ic;
                sel2 = static_cast<int>(j);
            }
        }
        if (sel2 < 0)
            throw std::runtime_error("two-step fit: no converged Step-2 node");
        const Step2Node& chosen = s2.nodes[static_cast<std::size_t>(sel2)];

        FitResult r = build_result(chosen.x, p, series);
        r.lambda_k = s2.lambda_k;
        r.lambda_sigma = chosen.lambda_sigma;
        r.criterion = criterion_name(c);
        r.ic = best2;
        r.loglik = chosen.loglik;
        r.converged = true;
        for (const Step1Node& node : step1) {
            PathEntry e;
            e.lambda_k = node.lambda;
            e.lambda_sigma = 0.0;
            e.loglik = node.loglik;
            e.n_active = node.n_active;
            e.converged = node.converged;
            e.ic = node.converged ? ic_value(node.loglik, node.n_active, T, c)
                                  : std::numeric_limits<double>::quiet_NaN();
            r.path.push_back(e);
        }
        for (const Step2Node& node : s2.nodes) {
            PathEntry e;
            e.lambda_k = s2.lambda_k;
            e.lambda_sigma = node.lambda_sigma;
            e.loglik = node.loglik;
            e.n_active = node.n_active;
            e.converged = node.converged;
            e.ic = node.converged ? ic_value(node.loglik, node.n_active, T, c)
                                  : std::numeric_limits<double>::quiet_NaN();
            r.path.push_back(e);
        }
        results.push_back(std::move(r));
    }
    return results;
}

FitResult fit_two_step_almle(const ExceedanceSeries& series, const PredictorPanel& panel,
                             Criterion criterion, int shape_grid, int scale_grid) {
    return fit_two_step_almle_multi(series, panel, {criterion}, shape_grid, scale_grid).front();
}

double det_condition_diagnostic(const CoefVector& beta, const ExceedanceSeries& series,
                                const PredictorPanel& panel) {
    if (!beta.dims_consistent() || beta.n_predictors() != panel.p())
        throw std::invalid_argument("det_condition_diagnostic: dimension mismatch");
    const int p = panel.p();
    const HessianMatrix H = hessian(beta, series, panel);

    std::vector<int> idx;
    idx.push_back(0);
    for (int j = 1; j <= p; ++j)
        if (beta.shape(j) != 0.0) idx.push_back(j);
    idx.push_back(p + 1);
    for (int j = 1; j <= p + 1; ++j)
        if (beta.scale(j) != 0.0) idx.push_back(p + 1 + j);

    const int d = static_cast<int>(idx.size());
    Eigen::MatrixXd block(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) block(a, b) = H(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);

    Eigen::VectorXd scale(d);
    for (int a = 0; a < d; ++a) {
        const double h = std::abs(block(a, a));
        scale(a) = h > 0.0 ? 1.0 / std::sqrt(h) : 1.0;
    }
    const Eigen::MatrixXd normalized =
        scale.asDiagonal() * block * scale.asDiagonal();
    return normalized.determinant();
}

PredictorPanel standardize_panel(const PredictorPanel& raw) {
    raw.validate();
    if (raw.values.rows() < 2)
        throw std::invalid_argument("standardize_panel: need at least two rows");
    PredictorPanel out = raw;
    const double T = static_cast<double>(raw.values.rows());
    for (Eigen::Index j = 0; j < raw.values.cols(); ++j) {
        const double mean = raw.values.col(j).mean();
        const double var = (raw.values.col(j).array() - mean).square().sum() / T;
        if (!(var > 0.0))
            throw std::invalid_argument("standardize_panel: column " +
                                        raw.names[static_cast<std::size_t>(j)] +
                                        " has zero variance");
        const double sd = std::sqrt(var);
        out.values.col(j) /= sd;
        out.scale_factors[static_cast<std::size_t>(j)] *= sd;
    }
    return out;
}

} // namespace tailreg
