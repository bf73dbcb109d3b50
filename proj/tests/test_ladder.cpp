#include "doctest.h"
#include "oracles.hpp"

#include "fibresense/ladder.hpp"

#include <numbers>
#include <random>

using namespace fibresense;

namespace {

LadderModel bench_model() {
    std::vector<SegmentSpec> segs(4);
    const char* labels[] = {"I", "II", "III", "IV"};
    for (int i = 0; i < 4; ++i) segs[static_cast<std::size_t>(i)].label = labels[i];
    return LadderModel(std::move(segs));
}

} // namespace

TEST_CASE("ladder recursion matches nodal analysis on random cascades") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> res(50.0, 50e3);
    std::uniform_real_distribution<double> cap(1e-12, 1e-9);
    std::uniform_real_distribution<double> freq(1e2, 1e7);
    std::uniform_int_distribution<int> stages(1, 6);

    for (int trial = 0; trial < 500; ++trial) {
        const auto n = static_cast<std::size_t>(stages(rng));
        std::vector<double> r(n), c(n);
        for (auto& v : r) v = res(rng);
        for (auto& v : c) v = cap(rng);
        const double omega = 2 * std::numbers::pi * freq(rng);

        const Impedance fast = ladder_impedance_rc(r, c, omega);
        const Impedance ref = oracle::nodal_ladder_impedance(r, c, omega);
        CHECK(std::abs(fast - ref) <= 1e-9 * std::abs(ref));
    }
}

TEST_CASE("strain law scales resistance and capacitance linearly") {
    SegmentSpec seg;
    seg.label = "I";
    const auto rest = params_at_strain(seg, 0.0);
    CHECK(rest.r == doctest::Approx(7.5e3));
    CHECK(rest.c == doctest::Approx(47e-12));

    const auto stretched = params_at_strain(seg, 0.4);
    CHECK(stretched.c == doctest::Approx(47e-12 * (1 + 0.4 * 0.5)));
    CHECK(stretched.r == doctest::Approx(7.5e3 * (1 + 0.4 * 0.1)));

    CHECK_THROWS_AS(params_at_strain(seg, -0.01), std::domain_error);
    CHECK_THROWS_AS(params_at_strain(seg, 0.41), std::domain_error);
}

TEST_CASE("interconnect resistance adds to the stage series arm") {
    std::vector<SegmentSpec> segs(2);
    segs[0].label = "A";
    segs[1].label = "B";
    const LadderModel plain(segs);
    segs[0].joint_r = 120.0;
    segs[1].joint_r = 80.0;
    const LadderModel jointed(segs);

    const std::vector<double> rest{0.0, 0.0};
    const double omega = 2 * std::numbers::pi * 50e3;
    const Impedance z0 = ladder_impedance(plain, rest, omega);
    const Impedance z1 = ladder_impedance(jointed, rest, omega);

    std::vector<double> r{7.5e3 + 120.0, 7.5e3 + 80.0};
    std::vector<double> c{47e-12, 47e-12};
    CHECK(std::abs(z1 - ladder_impedance_rc(r, c, omega)) <= 1e-12 * std::abs(z1));
    CHECK(std::abs(z1 - z0) > 1.0);
}

TEST_CASE("parallel capacitance recovers the plate value for a lone RC stage") {
    // For one stage, Z = R + 1/(jwC); the parallel model sees C/(1 + (wRC)^2).
    const double r = 7.5e3, c = 47e-12;
    const double omega = 2 * std::numbers::pi * 25e3;
    std::vector<double> rs{r}, cs{c};
    const Impedance z = ladder_impedance_rc(rs, cs, omega);
    const double expected = c / (1 + omega * omega * r * r * c * c);
    CHECK(parallel_capacitance(z, omega) == doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(parallel_capacitance(Impedance(0, 0), omega), std::domain_error);
}

TEST_CASE("model construction and lookup") {
    const LadderModel m = bench_model();
    CHECK(m.size() == 4);
    CHECK(m.index_of("III") == 2);
    CHECK_THROWS_AS(m.index_of("missing"), std::invalid_argument);

    SegmentSpec bad;
    bad.r0 = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = SegmentSpec{};
    bad.max_strain = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("model loads from repeated segment sections in order") {
    const char* text = R"(
[segment]
label = I
length0 = 0.1
r0 = 7.5k
c0 = 47p
gf_c = 0.5
gf_r = 0.1
max_strain = 0.4

[segment]
label = II
r0 = 22.5k
c0 = 141p
joint_r = 50
)";
    const auto cfg = config::ConfigFile::parse(text, "t");
    const LadderModel m = LadderModel::from_config(cfg);
    REQUIRE(m.size() == 2);
    CHECK(m.segment(0).label == "I");
    CHECK(m.segment(1).r0 == doctest::Approx(22.5e3));
    CHECK(m.segment(1).c0 == doctest::Approx(141e-12));
    CHECK(m.segment(1).joint_r == doctest::Approx(50));
    CHECK(m.segment(1).gf_c == doctest::Approx(0.5));
}

TEST_CASE("frequency sweep returns matching impedance and capacitance") {
    const LadderModel m = bench_model();
    const std::vector<double> strains{0.0, 0.2, 0.0, 0.0};
    const std::vector<double> freqs{1e3, 12.5e3, 100e3, 1e6};
    const auto sweep = frequency_sweep(m, strains, freqs);
    REQUIRE(sweep.size() == freqs.size());
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        const double omega = 2 * std::numbers::pi * freqs[i];
        const Impedance z = ladder_impedance(m, strains, omega);
        CHECK(sweep[i].freq_hz == doctest::Approx(freqs[i]));
        CHECK(std::abs(sweep[i].z - z) <= 1e-12 * std::abs(z));
        CHECK(sweep[i].cp == doctest::Approx(parallel_capacitance(z, omega)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(frequency_sweep(m, strains, std::vector<double>{1e3, 1e3 - 1}),
                    std::invalid_argument);
}

TEST_CASE("input validation on impedance evaluation") {
    const LadderModel m = bench_model();
    const std::vector<double> wrong_len{0.0, 0.0};
    CHECK_THROWS_AS(ladder_impedance(m, wrong_len, 1e4), std::invalid_argument);
    const std::vector<double> rest(4, 0.0);
    CHECK_THROWS_AS(ladder_impedance(m, rest, 0.0), std::invalid_argument);
    const std::vector<double> over{0.0, 0.0, 0.45, 0.0};
    CHECK_THROWS_AS(ladder_impedance(m, over, 1e4), std::domain_error);
}

TEST_CASE("frequency choice controls source discrimination") {
    const LadderModel m = bench_model();
    const std::vector<double> in_band{12.5e3, 25e3, 50e3, 100e3};
    const std::vector<double> collapsed{1e3, 1.2e3, 1.4e3, 1.6e3};
    const double good = discrimination_score(m, in_band);
    const double bad = discrimination_score(m, collapsed);
    CHECK(good > bad);
    CHECK(discrimination_score(m, std::vector<double>{25e3}) == doctest::Approx(0.0));
}
