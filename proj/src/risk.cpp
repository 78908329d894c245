#include "tailreg/risk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tailreg {

std::vector<double> default_var_alphas() {
    return {0.90, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99, 0.999, 0.9999};
}

namespace {

// Maps a risk level to the conditional quantile level of the excess law.
double conditional_level(double threshold_prob, double alpha) {
    if (!(threshold_prob >= 0.0) || !(threshold_prob < 1.0))
        throw std::domain_error("var_level: threshold probability must be in [0, 1)");
    if (!(alpha >= threshold_prob) || !(alpha < 1.0))
        throw std::domain_error("var_level: alpha must be in [threshold_prob, 1)");
    return (alpha - threshold_prob) / (1.0 - threshold_prob);
}

} // namespace

double var_level(const GpdParams& theta, double u, double threshold_prob, double alpha) {
    const double q = conditional_level(threshold_prob, alpha);
    if (!std::isfinite(u)) throw std::domain_error("var_level: threshold must be finite");
    return u + gpd_quantile(q, theta);
}

VarForecast var_forecast(const CoefVector& beta, const PredictorPanel& panel, double u_t,
                         double threshold_prob, double alpha, int t) {
    const ParamPath path = param_path(beta, panel);
    if (t < 0) t = panel.T() - 1;
    if (t < 0 || t >= panel.T())
        throw std::invalid_argument("var_forecast: index beyond the panel");
    VarForecast f;
    f.t = t;
    f.alpha = alpha;
    f.u = u_t;
    f.theta = {path.k(t), path.sigma(t)};
    f.var = var_level(f.theta, u_t, threshold_prob, alpha);
    return f;
}

Eigen::VectorXd var_path(const ParamPath& path, const Eigen::VectorXd& u,
                         double threshold_prob, double alpha) {
    if (u.size() != path.k.size())
        throw std::invalid_argument("var_path: threshold/path length mismatch");
    Eigen::VectorXd var(u.size());
    for (Eigen::Index t = 0; t < u.size(); ++t)
        var(t) = var_level({path.k(t), path.sigma(t)}, u(t), threshold_prob, alpha);
    return var;
}

Eigen::VectorXd var_path(const ParamPath& path, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& threshold_prob, double alpha) {
    if (u.size() != path.k.size() || threshold_prob.size() != path.k.size())
        throw std::invalid_argument("var_path: threshold/path length mismatch");
    Eigen::VectorXd var(u.size());
    for (Eigen::Index t = 0; t < u.size(); ++t)
        var(t) = var_level({path.k(t), path.sigma(t)}, u(t), threshold_prob(t), alpha);
    return var;
}

double coverage_rate(const Eigen::VectorXd& losses, const Eigen::VectorXd& var) {
    if (losses.size() != var.size())
        throw std::invalid_argument("coverage_rate: loss/forecast length mismatch");
    if (losses.size() == 0)
        throw std::invalid_argument("coverage_rate: empty series");
    int n_covered = 0;
    for (Eigen::Index t = 0; t < losses.size(); ++t)
        if (losses(t) <= var(t)) ++n_covered;
    return static_cast<double>(n_covered) / static_cast<double>(losses.size());
}

namespace {

// Survival function of the Kolmogorov distribution,
//   Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2),
// truncated once a term falls below 1e-16 (well past 1e-10 accuracy). When the
// terms have not decayed within 100 of them, lambda is small enough that the
// survival probability is 1 to double precision.
double kolmogorov_p_value(double lambda) {
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * static_cast<double>(j) * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16) return std::clamp(2.0 * sum, 0.0, 1.0);
        sign = -sign;
    }
    return 1.0;
}

} // namespace

KsTest ks_uniform_test(const Eigen::VectorXd& pit) {
    const int n = static_cast<int>(pit.size());
    if (n < 10)
        throw std::invalid_argument("ks_uniform_test: need at least 10 values");
    std::vector<double> x(pit.data(), pit.data() + n);
    for (double v : x)
        if (!(v > 0.0) || !(v < 1.0))
            throw std::domain_error("ks_uniform_test: values must lie strictly in (0, 1)");
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        const double hi = (i + 1.0) / n - x[static_cast<std::size_t>(i)];
        const double lo = x[static_cast<std::size_t>(i)] - static_cast<double>(i) / n;
        d = std::max({d, hi, lo});
    }
    KsTest test;
    test.statistic = d;
    test.p_value = kolmogorov_p_value(std::sqrt(static_cast<double>(n)) * d);
    test.n = n;
    return test;
}

BacktestReport backtest(const CoefVector& beta, const PredictorPanel& panel,
                        const Eigen::VectorXd& losses, const Eigen::VectorXd& u, double split,
                        std::vector<double> alphas, double threshold_prob) {
    const int T = panel.T();
    if (losses.size() != T || u.size() != T)
        throw std::invalid_argument("backtest: loss/threshold/panel length mismatch");
    if (!(split > 0.0) || !(split < 1.0))
        throw std::invalid_argument("backtest: split fraction must be in (0, 1)");
    const int split_index = static_cast<int>(std::floor(split * T));
    if (split_index < 1 || split_index >= T)
        throw std::invalid_argument("backtest: empty in-sample or out-of-sample period");

    const ParamPath path = param_path(beta, panel);
    const int n_out = T - split_index;

    BacktestReport report;
    report.n_total = T;
    report.split_index = split_index;
    report.n_out = n_out;
    report.threshold_prob = threshold_prob;
    report.alphas = std::move(alphas);

    const Eigen::VectorXd losses_out = losses.segment(split_index, n_out);
    for (double alpha : report.alphas) {
        Eigen::VectorXd var(n_out);
        for (int i = 0; i < n_out; ++i) {
            const int t = split_index + i;
            var(i) = var_level({path.k(t), path.sigma(t)}, u(t), threshold_prob, alpha);
        }
        report.coverage.push_back(coverage_rate(losses_out, var));
    }

    std::vector<double> pit;
    for (int t = split_index; t < T; ++t) {
        const double excess = losses(t) - u(t);
        if (excess > 0.0) pit.push_back(gpd_cdf(excess, {path.k(t), path.sigma(t)}));
    }
    report.exceed_rate = static_cast<double>(pit.size()) / static_cast<double>(n_out);
    report.pit = Eigen::Map<const Eigen::VectorXd>(pit.data(), static_cast<Eigen::Index>(pit.size()));
    report.ks = ks_uniform_test(report.pit);
    return report;
}

namespace {

ordered_json vector_json(const std::vector<double>& v) {
    ordered_json arr = ordered_json::array();
    for (double x : v) arr.push_back(x);
    return arr;
}

} // namespace

ordered_json backtest_to_json(const BacktestReport& report) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["n_total"] = report.n_total;
    j["split_index"] = report.split_index;
    j["n_out"] = report.n_out;
    j["threshold_prob"] = report.threshold_prob;
    j["exceed_rate"] = report.exceed_rate;
    j["alphas"] = vector_json(report.alphas);
    j["coverage"] = vector_json(report.coverage);
    j["ks_statistic"] = report.ks.statistic;
    j["ks_p_value"] = report.ks.p_value;
    ordered_json pit = ordered_json::array();
    for (Eigen::Index i = 0; i < report.pit.size(); ++i) pit.push_back(report.pit(i));
    j["pit"] = pit;
    return j;
}

BacktestReport backtest_from_json(const ordered_json& j) {
    if (j.at("schema_version").get<std::string>() != kSchemaVersion)
        throw std::invalid_argument("backtest_from_json: unknown schema version");
    BacktestReport report;
    report.n_total = j.at("n_total").get<int>();
    report.split_index = j.at("split_index").get<int>();
    report.n_out = j.at("n_out").get<int>();
    report.threshold_prob = j.at("threshold_prob").get<double>();
    report.exceed_rate = j.at("exceed_rate").get<double>();
    report.alphas = j.at("alphas").get<std::vector<double>>();
    report.coverage = j.at("coverage").get<std::vector<double>>();
    report.ks.statistic = j.at("ks_statistic").get<double>();
    report.ks.p_value = j.at("ks_p_value").get<double>();
    const auto& pit = j.at("pit");
    report.pit.resize(static_cast<Eigen::Index>(pit.size()));
    for (Eigen::Index i = 0; i < report.pit.size(); ++i)
        report.pit(i) = pit[static_cast<std::size_t>(i)].get<double>();
    report.ks.n = static_cast<int>(report.pit.size());
    return report;
}

void write_backtest_csv(const std::string& path, const BacktestReport& report) {
    std::vector<std::string> header;
    std::vector<std::string> row;
    for (std::size_t i = 0; i < report.alphas.size(); ++i) {
        header.push_back("cov_" + format_double(report.alphas[i]));
        row.push_back(format_double(report.coverage[i]));
    }
    header.insert(header.end(),
                  {"ks_statistic", "ks_p_value", "exceed_rate", "n_out", "n_exceed"});
    row.push_back(format_double(report.ks.statistic));
    row.push_back(format_double(report.ks.p_value));
    row.push_back(format_double(report.exceed_rate));
    row.push_back(std::to_string(report.n_out));
    row.push_back(std::to_string(report.ks.n));
    write_csv(path, header, {row});
}

} // namespace tailreg
