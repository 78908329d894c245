#include <doctest.h>

#include "tailreg/gpd.hpp"

#include <cmath>
#include <stdexcept>

using namespace tailreg;

TEST_SUITE("gpd") {

TEST_CASE("cdf anchors") {
    CHECK(gpd_cdf(2.0, {0.25, 1.0}) == doctest::Approx(0.8024691358024691358).epsilon(1e-14));
    CHECK(gpd_cdf(3.0, {0.4, 2.5}) == doctest::Approx(0.62472838909478339826).epsilon(1e-14));
    CHECK(gpd_cdf(0.0, {0.3, 1.0}) == 0.0);
}

TEST_CASE("logpdf anchor") {
    CHECK(gpd_logpdf(1.0, {0.25, 1.0}) == doctest::Approx(-1.1157177565710487788).epsilon(1e-14));
}

TEST_CASE("quantile anchor") {
    CHECK(gpd_quantile(0.5, {0.25, 1.0}) == doctest::Approx(0.75682846001088426687).epsilon(1e-14));
    CHECK(gpd_quantile(0.0, {0.25, 1.0}) == 0.0);
}

TEST_CASE("quantile and cdf are inverses") {
    for (double k : {0.05, 0.25, 0.45}) {
        for (double sigma : {0.5, 3.0}) {
            GpdParams params{k, sigma};
            for (double q : {0.1, 0.5, 0.9, 0.99}) {
                CHECK(gpd_cdf(gpd_quantile(q, params), params) == doctest::Approx(q).epsilon(1e-12));
            }
            for (double y : {0.1, 1.0, 10.0, 100.0}) {
                const double q = gpd_cdf(y, params);
                // Deep in the tail 1 - q underflows and the inverse loses
                // meaning; only round-trip where the survival mass is
                // representable.
                if (q > 1.0 - 1e-12) continue;
                CHECK(gpd_quantile(q, params) == doctest::Approx(y).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("density integrates to the cdf increment") {
    // Composite Simpson over [0, q999]; validates logpdf against cdf through
    // an independent numeric route.
    GpdParams params{0.3, 1.7};
    const double upper = gpd_quantile(0.999, params);
    const int n = 20000;
    const double h = upper / n;
    double acc = std::exp(gpd_logpdf(1e-300, params));
    for (int i = 1; i < n; ++i)
        acc += (i % 2 == 1 ? 4.0 : 2.0) * std::exp(gpd_logpdf(i * h, params));
    acc += std::exp(gpd_logpdf(upper, params));
    const double integral = acc * h / 3.0;
    CHECK(integral == doctest::Approx(0.999).epsilon(1e-8));
}

TEST_CASE("density is the cdf derivative") {
    GpdParams params{0.12, 0.8};
    for (double y : {0.2, 1.0, 4.0}) {
        const double h = 1e-6 * std::max(1.0, y);
        const double fd = (gpd_cdf(y + h, params) - gpd_cdf(y - h, params)) / (2.0 * h);
        CHECK(fd == doctest::Approx(std::exp(gpd_logpdf(y, params))).epsilon(1e-7));
    }
}

TEST_CASE("invalid parameters and arguments are rejected") {
    CHECK_THROWS_AS(gpd_cdf(1.0, {0.6, 1.0}), std::domain_error);
    CHECK_THROWS_AS(gpd_cdf(1.0, {0.2, -1.0}), std::domain_error);
    CHECK_THROWS_AS(gpd_cdf(-0.5, {0.2, 1.0}), std::domain_error);
    CHECK_THROWS_AS(gpd_logpdf(0.0, {0.2, 1.0}), std::domain_error);
    CHECK_THROWS_AS(gpd_quantile(1.0, {0.2, 1.0}), std::domain_error);
    CHECK_THROWS_AS(gpd_quantile(-0.1, {0.2, 1.0}), std::domain_error);
}

TEST_CASE("shape link anchors and range") {
    CHECK(link_shape(0.0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(link_shape(1.3) == doctest::Approx(0.3929174915212793063).epsilon(1e-14));
    for (double eta : {-30.0, -3.0, 0.0, 3.0, 30.0}) {
        const double k = link_shape(eta);
        CHECK(k > 0.0);
        CHECK(k < 0.5);
    }
}

TEST_CASE("shape link clamps extreme arguments") {
    CHECK(link_shape(100.0) == link_shape(35.0));
    CHECK(link_shape(-100.0) == link_shape(-35.0));
    CHECK(link_shape(-100.0) == doctest::Approx(3.1525583800734927051e-16).epsilon(1e-12));
}

TEST_CASE("shape link inverse round trip") {
    for (double k : {0.01, 0.25, 0.49}) {
        CHECK(link_shape(link_shape_inverse(k)) == doctest::Approx(k).epsilon(1e-13));
    }
    CHECK(link_shape_inverse(0.25) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(link_shape_inverse(0.0), std::domain_error);
    CHECK_THROWS_AS(link_shape_inverse(0.5), std::domain_error);
}

TEST_CASE("parameter path matches a hand-unrolled recursion") {
    CoefVector beta(2);
    beta.shape << 0.2, -0.3, 0.1;
    beta.scale << 0.4, 0.25, -0.15, 0.6;
    Eigen::MatrixXd z(3, 2);
    z << 0.5, -1.2,
        -0.3, 0.8,
         1.5, 0.2;
    PredictorPanel panel = PredictorPanel::plain(z);

    const ParamPath path = param_path(beta, panel);
    CHECK(path.log_sigma0 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(path.log_sigma(0) == doctest::Approx(1.305).epsilon(1e-14));
    CHECK(path.log_sigma(1) == doctest::Approx(0.988).epsilon(1e-14));
    CHECK(path.log_sigma(2) == doctest::Approx(1.3378).epsilon(1e-14));
    CHECK(path.k(0) == doctest::Approx(0.2412535711668051391779).epsilon(1e-14));
    CHECK(path.k(1) == doctest::Approx(0.2957294892163900357309).epsilon(1e-14));
    CHECK(path.k(2) == doctest::Approx(0.2213760727007222114417).epsilon(1e-14));
    for (int t = 0; t < 3; ++t)
        CHECK(path.sigma(t) == doctest::Approx(std::exp(path.log_sigma(t))).epsilon(1e-15));
}

TEST_CASE("parameter path flags a divergent recursion") {
    CoefVector beta(0);
    beta.shape << 0.0;
    beta.scale << 20.0, 0.97;
    PredictorPanel panel = PredictorPanel::plain(Eigen::MatrixXd(5, 0));
    CHECK_THROWS_AS(param_path(beta, panel), ScaleOverflowError);
}

TEST_CASE("parameter path rejects nonstationary ar") {
    CoefVector beta(0);
    beta.shape << 0.0;
    beta.scale << 0.1, 1.0;
    PredictorPanel panel = PredictorPanel::plain(Eigen::MatrixXd(5, 0));
    CHECK_THROWS_AS(param_path(beta, panel), std::invalid_argument);
}

} // TEST_SUITE
