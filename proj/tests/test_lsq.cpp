#include "doctest.h"

#include "fibresense/ladder.hpp"
#include "fibresense/lsq.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace fibresense;
using namespace fibresense::lsq;

namespace {

LadderModel bench_model() {
    std::vector<SegmentSpec> segs(4);
    const char* labels[] = {"I", "II", "III", "IV"};
    for (int i = 0; i < 4; ++i) segs[static_cast<std::size_t>(i)].label = labels[i];
    return LadderModel(std::move(segs));
}

std::vector<Impedance> measure(const LadderModel& model, const StrainVector& strains,
                               std::span<const double> freqs) {
    std::vector<Impedance> z;
    for (double f : freqs) z.push_back(ladder_impedance(model, strains, 2 * std::numbers::pi * f));
    return z;
}

std::vector<double> true_params_r(const LadderModel& model, const StrainVector& strains) {
    std::vector<double> r;
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto p = params_at_strain(model.segment(i), strains[i]);
        r.push_back(p.r + model.segment(i).joint_r);
    }
    return r;
}

std::vector<double> true_params_c(const LadderModel& model, const StrainVector& strains) {
    std::vector<double> c;
    for (std::size_t i = 0; i < model.size(); ++i)
        c.push_back(params_at_strain(model.segment(i), strains[i]).c);
    return c;
}

} // namespace

TEST_CASE("parameter recovery from noiseless multi-frequency measurements") {
    const LadderModel model = bench_model();
    const std::vector<double> freqs{12.5e3, 25e3, 50e3, 100e3};

    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 0.4);
    for (int trial = 0; trial < 8; ++trial) {
        StrainVector strains(4);
        for (auto& e : strains) e = u(rng);
        const auto z = measure(model, strains, freqs);
        const auto est = lsq_invert(z, model, freqs);

        REQUIRE(est.converged);
        const auto r_true = true_params_r(model, strains);
        const auto c_true = true_params_c(model, strains);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(std::abs(est.r[i] - r_true[i]) <= 1e-3 * r_true[i]);
            CHECK(std::abs(est.c[i] - c_true[i]) <= 1e-3 * c_true[i]);
        }
    }
}

TEST_CASE("rest measurements from the rest start converge immediately") {
    const LadderModel model = bench_model();
    const std::vector<double> freqs{12.5e3, 25e3, 50e3, 100e3};
    const StrainVector rest(4, 0.0);
    const auto z = measure(model, rest, freqs);
    const auto est = lsq_invert(z, model, freqs);
    CHECK(est.converged);
    CHECK(est.iterations <= 2);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(est.r[i] == doctest::Approx(7.5e3).epsilon(1e-6));
        CHECK(est.c[i] == doctest::Approx(47e-12).epsilon(1e-6));
    }
}

TEST_CASE("warm starts track a slowly moving target") {
    const LadderModel model = bench_model();
    const std::vector<double> freqs{12.5e3, 25e3, 50e3, 100e3};

    std::optional<lsq::LsqStart> warm;
    for (int step = 0; step <= 10; ++step) {
        StrainVector strains(4, 0.0);
        strains[2] = 0.4 * step / 10.0;
        const auto z = measure(model, strains, freqs);
        const auto est = lsq_invert(z, model, freqs, {}, warm);
        REQUIRE(est.converged);
        const auto c_true = true_params_c(model, strains);
        CHECK(std::abs(est.c[2] - c_true[2]) <= 1e-3 * c_true[2]);
        warm = lsq::LsqStart{est.r, est.c};
    }
}

TEST_CASE("underdetermined tone sets are rejected") {
    const LadderModel model = bench_model();
    const std::vector<double> freqs{25e3, 50e3};
    const auto z = measure(model, StrainVector(4, 0.1), freqs);
    CHECK_THROWS_AS(lsq_invert(z, model, freqs), std::invalid_argument);

    const std::vector<double> four{12.5e3, 25e3, 50e3, 100e3};
    const auto z4 = measure(model, StrainVector(4, 0.1), four);
    CHECK_THROWS_AS(lsq_invert(std::vector<Impedance>(z4.begin(), z4.begin() + 3), model, four),
                    std::invalid_argument);
}

TEST_CASE("estimates stay inside the configured parameter box") {
    const LadderModel model = bench_model();
    const std::vector<double> freqs{12.5e3, 25e3, 50e3, 100e3};
    // Corrupt one measurement badly; the estimate must stay in the box.
    auto z = measure(model, StrainVector(4, 0.2), freqs);
    z[1] *= Impedance(3.0, 0.4);
    lsq::LsqOptions opt;
    opt.bound_factor = 5.0;
    const auto est = lsq_invert(z, model, freqs, opt);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(est.r[i] >= 7.5e3 / 5.0 * (1 - 1e-9));
        CHECK(est.r[i] <= 7.5e3 * 5.0 * (1 + 1e-9));
        CHECK(est.c[i] >= 47e-12 / 5.0 * (1 - 1e-9));
        CHECK(est.c[i] <= 47e-12 * 5.0 * (1 + 1e-9));
    }
}

TEST_CASE("capacitance maps back to clamped strain") {
    const LadderModel model = bench_model();
    // c = c0 (1 + eps * gf_c) with gf_c = 0.5.
    const std::vector<double> c_hat{47e-12 * 1.10, 47e-12 * 0.90, 47e-12 * 1.30, 47e-12};
    const auto est = lsq::strain_from_capacitance(c_hat, model);
    REQUIRE(est.eps.size() == 4);
    CHECK(est.eps[0] == doctest::Approx(0.20).epsilon(1e-9));
    CHECK(est.eps[1] == doctest::Approx(0.0));   // negative implied strain clamps to 0
    CHECK(est.eps[2] == doctest::Approx(0.4));   // 0.6 implied clamps to max_strain
    CHECK(est.eps[3] == doctest::Approx(0.0));
    CHECK(est.clamped == 2);

    CHECK_THROWS_AS(lsq::strain_from_capacitance(std::vector<double>{1e-12}, model),
                    std::invalid_argument);
}
