#include "fibresense/identifiability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace fibresense {

Eigen::MatrixXd impedance_log_jacobian(std::span<const double> r, std::span<const double> c,
                                       std::span<const double> freqs_hz, double rel_step) {
    const std::size_t n = r.size();
    if (n == 0 || c.size() != n)
        throw std::invalid_argument("jacobian: need equal, non-empty r and c vectors");
    if (freqs_hz.empty()) throw std::invalid_argument("jacobian: no frequencies");
    if (rel_step <= 1e-12 || rel_step >= 1.0)
        throw std::invalid_argument("jacobian: relative step must lie in (1e-12, 1)");
    for (std::size_t i = 0; i < n; ++i)
        if (r[i] <= 0 || c[i] <= 0)
            throw std::invalid_argument("jacobian: parameters must be positive");

    std::vector<double> rp(r.begin(), r.end());
    std::vector<double> cp(c.begin(), c.end());

    Eigen::MatrixXd j(2 * freqs_hz.size(), 2 * n);
    // d f / d ln p  ~=  (f(p * (1+h)) - f(p * (1-h))) / (2h)
    auto fill_column = [&](std::size_t col, double* param) {
        const double base = *param;
        for (std::size_t fi = 0; fi < freqs_hz.size(); ++fi) {
            const double omega = 2.0 * std::numbers::pi * freqs_hz[fi];
            *param = base * (1.0 + rel_step);
            const Impedance hi = ladder_impedance_rc(rp, cp, omega);
            *param = base * (1.0 - rel_step);
            const Impedance lo = ladder_impedance_rc(rp, cp, omega);
            *param = base;
            const Impedance d = (hi - lo) / (2.0 * rel_step);
            j(static_cast<Eigen::Index>(2 * fi), static_cast<Eigen::Index>(col)) = d.real();
            j(static_cast<Eigen::Index>(2 * fi + 1), static_cast<Eigen::Index>(col)) = d.imag();
        }
    };
    for (std::size_t i = 0; i < n; ++i) fill_column(i, &rp[i]);
    for (std::size_t i = 0; i < n; ++i) fill_column(n + i, &cp[i]);
    return j;
}

SensitivityMatrix sensitivity_jacobian(const LadderModel& model, std::span<const double> strains,
                                       std::span<const double> freqs_hz, double rel_step) {
    if (strains.size() != model.size())
        throw std::invalid_argument("sensitivity: strain count does not match segment count");
    std::vector<double> r(model.size()), c(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const RCParams p = params_at_strain(model.segment(i), strains[i]);
        r[i] = p.r + model.segment(i).joint_r;
        c[i] = p.c;
    }
    SensitivityMatrix out;
    out.j = impedance_log_jacobian(r, c, freqs_hz, rel_step);
    out.freqs_hz.assign(freqs_hz.begin(), freqs_hz.end());
    out.segments = model.size();
    return out;
}

IdentifiabilityReport local_identifiability(const Eigen::MatrixXd& j,
                                            std::optional<double> rel_tol) {
    if (j.size() == 0) throw std::invalid_argument("identifiability: empty matrix");
    if (rel_tol && (*rel_tol <= 0 || *rel_tol >= 1))
        throw std::invalid_argument("identifiability: rel_tol must lie in (0, 1)");
    const double rel_cut =
        rel_tol ? *rel_tol
                : static_cast<double>(std::max(j.rows(), j.cols())) *
                      std::numeric_limits<double>::epsilon();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    IdentifiabilityReport rep;
    rep.singular_values = svd.singularValues();
    const double sigma_max = rep.singular_values.size() ? rep.singular_values(0) : 0.0;
    rep.tolerance = rel_cut * sigma_max;
    if (sigma_max > 0)
        for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i)
            if (rep.singular_values(i) > rep.tolerance) ++rep.rank;
    rep.identifiable = rep.rank == j.cols();
    return rep;
}

} // namespace fibresense
