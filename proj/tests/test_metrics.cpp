#include "doctest.h"

#include "fibresense/metrics.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

using namespace fibresense;

TEST_CASE("error metrics against hand-computed values") {
    const std::vector<double> ref{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> pred{1.5, 1.5, 3.5, 3.5};
    const auto m = metrics::evaluate(pred, ref, 4.0);

    CHECK(m.rmse == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.nrmse == doctest::Approx(0.125).epsilon(1e-12));
    // ss_res = 1, ss_tot = 5 -> r2 = 0.8
    CHECK(m.r2 == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(m.r2_defined);

    const auto perfect = metrics::evaluate(ref, ref, 4.0);
    CHECK(perfect.rmse == doctest::Approx(0.0));
    CHECK(perfect.r2 == doctest::Approx(1.0));
}

TEST_CASE("metrics flag degenerate inputs instead of fabricating scores") {
    const std::vector<double> flat{2.0, 2.0, 2.0};
    const std::vector<double> pred{2.0, 2.1, 1.9};
    const auto m = metrics::evaluate(pred, flat, 0.0);
    CHECK_FALSE(m.r2_defined);
    CHECK(std::isnan(m.r2));
    CHECK(std::isnan(m.nrmse)); // no range given

    CHECK_THROWS_AS(metrics::evaluate(pred, std::vector<double>{1.0}, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(metrics::evaluate(std::vector<double>{}, std::vector<double>{}, 1.0),
                    std::invalid_argument);
}

TEST_CASE("rank correlation is exact for monotone maps and ties average") {
    std::vector<double> x{1, 2, 3, 4, 5, 6};
    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(v)); // monotone, nonlinear
    CHECK(metrics::spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> rev(x.rbegin(), x.rend());
    CHECK(metrics::spearman(x, rev) == doctest::Approx(-1.0).epsilon(1e-12));

    // Tied group: ranks of {1, 2, 2, 3} are {1, 2.5, 2.5, 4}.
    const std::vector<double> a{1, 2, 2, 3};
    const std::vector<double> b{10, 20, 30, 40};
    // Pearson on ranks {1, 2.5, 2.5, 4} vs {1, 2, 3, 4}.
    const double expected = 4.5 / std::sqrt(4.5 * 5.0);
    CHECK(metrics::spearman(a, b) == doctest::Approx(expected).epsilon(1e-12));

    const std::vector<double> constant{5, 5, 5, 5};
    CHECK(std::isnan(metrics::spearman(constant, b)));
}

TEST_CASE("rank correlation ignores monotone distortion of either axis") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    std::vector<double> x(200), y(200);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = u(rng);
        y[i] = std::log(x[i]); // strictly increasing transform
    }
    CHECK(metrics::spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));
}
