#include <doctest.h>

#include "tailreg/risk.hpp"
#include "tailreg/rng.hpp"
#include "tailreg/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

using namespace tailreg;

namespace {

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("tailreg_risk_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

// Two-sided normal band around a Binomial(n, p) proportion at the 1% level.
bool in_binomial_band(double rate, double p, int n) {
    const double half = 2.5758293035489004 * std::sqrt(p * (1.0 - p) / n);
    return rate >= p - half && rate <= p + half;
}

} // namespace

TEST_SUITE("risk") {

TEST_CASE("value-at-risk level matches its closed form") {
    const std::vector<double> alphas = default_var_alphas();
    REQUIRE(alphas.size() == 12);
    CHECK(alphas.front() == 0.90);
    CHECK(alphas[5] == 0.95);
    CHECK(alphas[10] == 0.999);
    CHECK(alphas.back() == 0.9999);

    // At the threshold probability the forecast is the threshold itself.
    CHECK(var_level({0.2, 1.5}, 1.3, 0.9, 0.9) == 1.3);

    // (sigma/k)(((1-alpha)/(1-F))^(-k) - 1) at alpha=0.95, F=0.9, k=0.25,
    // sigma=1 is 4 (2^{1/4} - 1); reference value to 40 digits.
    CHECK(var_level({0.25, 1.0}, 0.0, 0.9, 0.95) ==
          doctest::Approx(0.7568284600108843).epsilon(1e-15));
    // The same point through the conditional quantile identity; the computed
    // (alpha - F)/(1 - F) sits one rounding step from 1/2.
    CHECK(var_level({0.25, 1.0}, 0.0, 0.9, 0.95) ==
          doctest::Approx(gpd_quantile(0.5, {0.25, 1.0})).epsilon(1e-15));
    // alpha=0.99, F=0.9, k=0.3, sigma=1.7, u=2.5; reference value to 40 digits.
    CHECK(var_level({0.3, 1.7}, 2.5, 0.9, 0.99) ==
          doctest::Approx(8.139819784823651).epsilon(1e-15));

    // Strictly increasing in alpha, and shifting u shifts the level.
    const GpdParams theta{0.35, 0.8};
    double prev = var_level(theta, 0.0, 0.9, 0.9);
    for (double alpha : {0.93, 0.97, 0.99, 0.999, 0.9999}) {
        const double v = var_level(theta, 0.0, 0.9, alpha);
        CHECK(v > prev);
        prev = v;
        CHECK(var_level(theta, 2.0, 0.9, alpha) == doctest::Approx(2.0 + v).epsilon(1e-15));
    }

    CHECK_THROWS_AS(var_level(theta, 0.0, 0.9, 0.85), std::domain_error);
    CHECK_THROWS_AS(var_level(theta, 0.0, 0.9, 1.0), std::domain_error);
    CHECK_THROWS_AS(var_level(theta, 0.0, 1.0, 0.95), std::domain_error);
    CHECK_THROWS_AS(var_level({0.6, 1.0}, 0.0, 0.9, 0.95), std::domain_error);
    CHECK_THROWS_AS(var_level(theta, std::numeric_limits<double>::infinity(), 0.9, 0.95),
                    std::domain_error);
}

TEST_CASE("model forecasts reuse the causal parameter path") {
    CoefVector beta(1);
    beta.shape << -1.0, 0.4;
    beta.scale << 0.2, 0.3, 0.4;  // AR last
    Rng rng(11);
    Eigen::MatrixXd z(6, 1);
    for (int t = 0; t < 6; ++t) z(t, 0) = rng.normal();
    const PredictorPanel panel = PredictorPanel::plain(z);
    const ParamPath path = param_path(beta, panel);

    const VarForecast f = var_forecast(beta, panel, 2.0, 0.9, 0.95, 3);
    CHECK(f.t == 3);
    CHECK(f.alpha == 0.95);
    CHECK(f.u == 2.0);
    CHECK(f.theta.shape == path.k(3));
    CHECK(f.theta.scale == path.sigma(3));
    CHECK(f.var == var_level({path.k(3), path.sigma(3)}, 2.0, 0.9, 0.95));
    CHECK(f.var >= f.u);

    // Default index: the last row.
    const VarForecast last = var_forecast(beta, panel, 1.0, 0.9, 0.99);
    CHECK(last.t == 5);
    CHECK(last.theta.shape == path.k(5));
    CHECK_THROWS_AS(var_forecast(beta, panel, 1.0, 0.9, 0.95, 6), std::invalid_argument);

    // Path-level forecasts agree with the pointwise form, for fixed and
    // per-period threshold probabilities.
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(6, 1.5);
    const Eigen::VectorXd fixed = var_path(path, u, 0.9, 0.95);
    REQUIRE(fixed.size() == 6);
    for (int t = 0; t < 6; ++t)
        CHECK(fixed(t) == var_level({path.k(t), path.sigma(t)}, 1.5, 0.9, 0.95));
    Eigen::VectorXd probs(6);
    probs << 0.90, 0.91, 0.92, 0.91, 0.90, 0.93;
    const Eigen::VectorXd moving = var_path(path, u, probs, 0.95);
    for (int t = 0; t < 6; ++t)
        CHECK(moving(t) == var_level({path.k(t), path.sigma(t)}, 1.5, probs(t), 0.95));
    CHECK_THROWS_AS(var_path(path, Eigen::VectorXd::Zero(5), 0.9, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(var_path(path, u, Eigen::VectorXd::Zero(5), 0.95), std::invalid_argument);
}

TEST_CASE("coverage rate counts forecast hits") {
    Eigen::VectorXd losses(100);
    for (int i = 0; i < 100; ++i) losses(i) = i;
    CHECK(coverage_rate(losses, Eigen::VectorXd::Constant(100, 1000.0)) == 1.0);
    CHECK(coverage_rate(losses, Eigen::VectorXd::Constant(100, 94.5)) == 0.95);
    // A loss exactly at the forecast counts as covered.
    CHECK(coverage_rate(Eigen::VectorXd::Constant(4, 2.0), Eigen::VectorXd::Constant(4, 2.0)) ==
          1.0);

    // Invariant under a strictly increasing transform of both sides.
    const Eigen::VectorXd var = Eigen::VectorXd::Constant(100, 41.5);
    const double before = coverage_rate(losses, var);
    const auto squash = [](const Eigen::VectorXd& v) {
        return Eigen::VectorXd((v.array() / 50.0).tanh());
    };
    CHECK(coverage_rate(squash(losses), squash(var)) == before);

    CHECK_THROWS_AS(coverage_rate(losses, Eigen::VectorXd::Zero(99)), std::invalid_argument);
    CHECK_THROWS_AS(coverage_rate(Eigen::VectorXd(), Eigen::VectorXd()), std::invalid_argument);
}

TEST_CASE("kolmogorov-smirnov test against the uniform law") {
    // A point mass at 0.5: the empirical cdf is 0.5 away from the diagonal,
    // and lambda = sqrt(100) * 0.5 = 5. Survival value to 40 digits.
    const KsTest point = ks_uniform_test(Eigen::VectorXd::Constant(100, 0.5));
    CHECK(point.statistic == 0.5);
    CHECK(point.n == 100);
    CHECK(point.p_value ==
          doctest::Approx(3.8574996959278356e-22).epsilon(1e-12).scale(0.0));

    // The centered grid sits as close to uniform as n points can: D = 1/(2n),
    // lambda ~ 0.016, where the survival probability is 1 to double precision.
    Eigen::VectorXd grid(1000);
    for (int i = 0; i < 1000; ++i) grid(i) = (i + 0.5) / 1000.0;
    const KsTest flat = ks_uniform_test(grid);
    CHECK(flat.statistic == doctest::Approx(0.0005).epsilon(1e-12));
    CHECK(flat.p_value == 1.0);

    // Ten-point case worked by hand: D+ peaks at the eighth order statistic
    // (8/10 - 0.62 = 0.18), D- peaks at 0.07. Survival value to 40 digits at
    // lambda = sqrt(10) * 0.18. The input arrives unsorted.
    Eigen::VectorXd ten(10);
    ten << 0.61, 0.05, 0.85, 0.22, 0.4, 0.31, 0.97, 0.5, 0.62, 0.1;
    const KsTest hand = ks_uniform_test(ten);
    CHECK(hand.statistic == doctest::Approx(0.18).epsilon(1e-14));
    CHECK(hand.p_value == doctest::Approx(0.9022432796928167).epsilon(1e-12));

    CHECK_THROWS_AS(ks_uniform_test(Eigen::VectorXd::Constant(9, 0.5)), std::invalid_argument);
    Eigen::VectorXd bad = grid;
    bad(0) = 0.0;
    CHECK_THROWS_AS(ks_uniform_test(bad), std::domain_error);
    bad(0) = 1.0;
    CHECK_THROWS_AS(ks_uniform_test(bad), std::domain_error);
    bad(0) = -0.2;
    CHECK_THROWS_AS(ks_uniform_test(bad), std::domain_error);

    // Size under the null: at the 5% level, about 5% of uniform samples
    // reject. 50 seeded replications of n = 500 stay within five rejections.
    Rng rng(2026);
    int rejections = 0;
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::VectorXd sample(500);
        for (int i = 0; i < 500; ++i) sample(i) = rng.uniform_open();
        if (ks_uniform_test(sample).p_value < 0.05) ++rejections;
    }
    CHECK(rejections <= 5);
}

TEST_CASE("transforms of generated exceedances are uniform") {
    const int T = 60000;
    const DgpSpec spec = dgp_preset(1, T);
    const SimulatedSeries sim = simulate_series(spec, T);

    std::vector<double> pit;
    for (int t = 0; t < T; ++t) {
        const double excess = sim.losses(t) - spec.u;
        if (excess > 0.0)
            pit.push_back(gpd_cdf(excess, {sim.k_path(t), sim.sigma_path(t)}));
    }
    REQUIRE(pit.size() > 10000);
    const Eigen::VectorXd pit_vec =
        Eigen::Map<const Eigen::VectorXd>(pit.data(), static_cast<Eigen::Index>(pit.size()));
    const KsTest ks = ks_uniform_test(pit_vec);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("forecasts under the generating process cover exactly") {
    // Out of sample under the truth, 1{loss <= VaR(alpha)} is Bernoulli(alpha)
    // exactly, provided the per-period threshold probability of the generating
    // process is used rather than a fixed 0.9.
    const int T = 30000;
    const DgpSpec spec = dgp_preset(1, T);
    const SimulatedSeries sim = simulate_series(spec, T);
    const int split = 27000;
    const int n_out = T - split;

    ParamPath tail;
    tail.k = sim.k_path.segment(split, n_out);
    tail.sigma = sim.sigma_path.segment(split, n_out);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(n_out, spec.u);
    Eigen::VectorXd probs(n_out);
    for (int i = 0; i < n_out; ++i) probs(i) = student_t_cdf(spec.u, 1.0 / tail.k(i));
    const Eigen::VectorXd losses_out = sim.losses.segment(split, n_out);

    for (double alpha : {0.95, 0.99}) {
        const double cov = coverage_rate(losses_out, var_path(tail, u, probs, alpha));
        CHECK(in_binomial_band(cov, alpha, n_out));
    }
}

TEST_CASE("backtest scores the out-of-sample tail") {
    // Losses with P(loss <= u) = 0.9 by construction, so the backtester's
    // fixed threshold probability is exact here and coverage at level alpha
    // is Binomial(n_out, alpha).
    const int T = 5000;
    const double u_level = 1.0;
    CoefVector beta(2);
    beta.shape << -1.2, 0.3, 0.0;
    beta.scale << 0.2, 0.0, 0.35, 0.25;  // AR last
    Rng rng(77);
    Eigen::MatrixXd z(T, 2);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < 2; ++j) z(t, j) = rng.normal();
    const PredictorPanel panel = PredictorPanel::plain(z);
    const ParamPath path = param_path(beta, panel);
    Eigen::VectorXd losses(T);
    for (int t = 0; t < T; ++t) {
        const double r = rng.uniform();
        if (r < 0.9)
            losses(t) = u_level * (r / 0.9);
        else
            losses(t) = u_level + gpd_quantile((r - 0.9) / 0.1, {path.k(t), path.sigma(t)});
    }
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(T, u_level);

    const BacktestReport report = backtest(beta, panel, losses, u);
    CHECK(report.n_total == T);
    CHECK(report.split_index == 4500);
    CHECK(report.n_out == 500);
    CHECK(report.threshold_prob == 0.9);
    REQUIRE(report.alphas == default_var_alphas());
    REQUIRE(report.coverage.size() == 12);
    CHECK(std::is_sorted(report.coverage.begin(), report.coverage.end()));
    CHECK(in_binomial_band(report.coverage[5], 0.95, report.n_out));
    CHECK(in_binomial_band(report.coverage[9], 0.99, report.n_out));
    CHECK(in_binomial_band(report.exceed_rate, 0.1, report.n_out));
    CHECK(static_cast<int>(report.pit.size()) == report.ks.n);
    CHECK(report.ks.n >= 10);
    CHECK(report.ks.p_value > 0.01);

    // The per-level coverage is exactly what the path-level pieces produce.
    ParamPath tail;
    tail.k = path.k.segment(report.split_index, report.n_out);
    tail.sigma = path.sigma.segment(report.split_index, report.n_out);
    const double recomputed = coverage_rate(
        losses.segment(report.split_index, report.n_out),
        var_path(tail, u.segment(report.split_index, report.n_out), 0.9, 0.95));
    CHECK(report.coverage[5] == recomputed);

    // Serialization round trips, and the table is byte-stable.
    const ordered_json j = backtest_to_json(report);
    const BacktestReport back = backtest_from_json(j);
    CHECK(back.n_total == report.n_total);
    CHECK(back.split_index == report.split_index);
    CHECK(back.alphas == report.alphas);
    CHECK(back.coverage == report.coverage);
    CHECK(back.ks.statistic == report.ks.statistic);
    CHECK(back.ks.p_value == report.ks.p_value);
    REQUIRE(back.pit.size() == report.pit.size());
    CHECK((back.pit.array() == report.pit.array()).all());
    CHECK(backtest_to_json(back).dump(2) == j.dump(2));

    TempDir dir("csv");
    write_backtest_csv(dir.file("bt1.csv"), report);
    write_backtest_csv(dir.file("bt2.csv"), report);
    CHECK(read_text_file(dir.file("bt1.csv")) == read_text_file(dir.file("bt2.csv")));
    const CsvTable table = read_csv(dir.file("bt1.csv"));
    REQUIRE(table.rows.size() == 1);
    const int cov95 = table.column("cov_0.95");
    REQUIRE(cov95 >= 0);
    CHECK(table.rows[0][static_cast<std::size_t>(cov95)] == format_double(report.coverage[5]));
    CHECK(table.column("cov_0.9999") >= 0);
    CHECK(table.column("ks_p_value") >= 0);

    CHECK_THROWS_AS(backtest(beta, panel, losses, u, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(backtest(beta, panel, losses, u, 0.00001), std::invalid_argument);
    CHECK_THROWS_AS(backtest(beta, panel, losses.head(100), u, 0.9), std::invalid_argument);
}

} // TEST_SUITE
