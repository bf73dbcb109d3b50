#include "doctest.h"

#include "fibresense/identifiability.hpp"

#include <cmath>
#include <complex>
#include <numbers>

using namespace fibresense;

namespace {

LadderModel bench_model() {
    std::vector<SegmentSpec> segs(4);
    const char* labels[] = {"I", "II", "III", "IV"};
    for (int i = 0; i < 4; ++i) segs[static_cast<std::size_t>(i)].label = labels[i];
    return LadderModel(std::move(segs));
}

} // namespace

TEST_CASE("log-parameter sensitivities match the analytic single-stage case") {
    // One stage: Z = r + 1/(jw c), so dZ/d(ln r) = r and dZ/d(ln c) = -1/(jw c) = j/(w c).
    const std::vector<double> r{7.5e3};
    const std::vector<double> c{47e-12};
    const std::vector<double> freqs{25e3};
    const double omega = 2 * std::numbers::pi * freqs[0];

    const auto j = impedance_log_jacobian(r, c, freqs);
    REQUIRE(j.rows() == 2);
    REQUIRE(j.cols() == 2);
    CHECK(j(0, 0) == doctest::Approx(r[0]).epsilon(1e-6));        // d(Re Z)/d(ln r)
    CHECK(j(1, 0) == doctest::Approx(0.0).scale(r[0]));           // d(Im Z)/d(ln r)
    CHECK(j(0, 1) == doctest::Approx(0.0).scale(1 / (omega * c[0])));
    CHECK(j(1, 1) == doctest::Approx(1 / (omega * c[0])).epsilon(1e-6));

    CHECK_THROWS_AS(impedance_log_jacobian(r, c, freqs, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(impedance_log_jacobian(r, c, freqs, 1.5), std::invalid_argument);
}

TEST_CASE("four distinct tones make all eight parameters locally recoverable") {
    const LadderModel model = bench_model();
    const std::vector<double> rest(4, 0.0);
    const std::vector<double> tones{12.5e3, 25e3, 50e3, 100e3};

    const auto sens = sensitivity_jacobian(model, rest, tones);
    REQUIRE(sens.j.rows() == 8);
    REQUIRE(sens.j.cols() == 8);
    CHECK(sens.segments == 4);

    const auto rep = local_identifiability(sens.j);
    CHECK(rep.rank == 8);
    CHECK(rep.identifiable);
    REQUIRE(rep.singular_values.size() == 8);
    for (Eigen::Index i = 1; i < 8; ++i)
        CHECK(rep.singular_values(i) <= rep.singular_values(i - 1)); // descending
    CHECK(rep.singular_values(7) > rep.tolerance);
}

TEST_CASE("too few tones collapse the rank") {
    const LadderModel model = bench_model();
    const std::vector<double> rest(4, 0.0);

    const auto one = sensitivity_jacobian(model, rest, std::vector<double>{50e3});
    const auto rep1 = local_identifiability(one.j);
    CHECK(rep1.rank <= 2);
    CHECK_FALSE(rep1.identifiable);

    const auto two = sensitivity_jacobian(model, rest, std::vector<double>{25e3, 50e3});
    const auto rep2 = local_identifiability(two.j);
    CHECK(rep2.rank <= 4);
    CHECK_FALSE(rep2.identifiable);
}

TEST_CASE("repeated tones add no information") {
    const LadderModel model = bench_model();
    const std::vector<double> rest(4, 0.0);
    const std::vector<double> duped{25e3, 25e3, 25e3, 25e3};
    const auto sens = sensitivity_jacobian(model, rest, duped);
    const auto rep = local_identifiability(sens.j);
    CHECK(rep.rank <= 2);
    CHECK_FALSE(rep.identifiable);
}

TEST_CASE("rank tolerance argument is validated") {
    Eigen::MatrixXd j = Eigen::MatrixXd::Identity(4, 4);
    CHECK(local_identifiability(j).identifiable);
    CHECK_THROWS_AS(local_identifiability(j, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(local_identifiability(j, 1.0), std::invalid_argument);

    j(3, 3) = 0; // exactly singular
    const auto rep = local_identifiability(j);
    CHECK(rep.rank == 3);
    CHECK_FALSE(rep.identifiable);
}

TEST_CASE("widely spread tones outside the transition band lose sensitivity contrast") {
    const LadderModel model = bench_model();
    const std::vector<double> rest(4, 0.0);
    const std::vector<double> in_band{12.5e3, 25e3, 50e3, 100e3};
    const std::vector<double> far_low{10.0, 20.0, 40.0, 80.0};

    const auto good = local_identifiability(sensitivity_jacobian(model, rest, in_band).j);
    const auto poor = local_identifiability(sensitivity_jacobian(model, rest, far_low).j);
    // Conditioning of the in-band set is orders of magnitude better.
    const double cond_good = good.singular_values(0) / good.singular_values(7);
    const double cond_poor = poor.singular_values(0) / poor.singular_values(7);
    CHECK(cond_good * 100 < cond_poor);
}
