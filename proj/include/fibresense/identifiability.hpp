#pragma once

#include "fibresense/ladder.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace fibresense {

/// Jacobian of the port impedance with respect to the log of every stage
/// parameter, by central finite differences. Rows stack (Re, Im) per frequency
/// giving 2 * n_freq rows; columns are d/d(ln r_1..r_n) then d/d(ln c_1..c_n).
/// The log scaling makes columns comparable across the ohm/farad magnitude gap.
Eigen::MatrixXd impedance_log_jacobian(std::span<const double> r, std::span<const double> c,
                                       std::span<const double> freqs_hz, double rel_step = 1e-6);

struct SensitivityMatrix {
    Eigen::MatrixXd j;             // 2*n_freq x 2*n_segments
    std::vector<double> freqs_hz;
    std::size_t segments = 0;
};

/// Sensitivity of the measured impedance at the given operating strain to the
/// underlying stage parameters.
SensitivityMatrix sensitivity_jacobian(const LadderModel& model, std::span<const double> strains,
                                       std::span<const double> freqs_hz, double rel_step = 1e-6);

struct IdentifiabilityReport {
    Eigen::Index rank = 0;
    bool identifiable = false;     // rank equals the parameter count
    Eigen::VectorXd singular_values;
    double tolerance = 0;          // absolute threshold used for the rank cut
};

/// Numerical rank of the sensitivity matrix: singular values above
/// rel_tol * sigma_max count. All parameters are locally recoverable from the
/// chosen tone set iff the matrix has full column rank. Without an explicit
/// rel_tol the cut is max(rows, cols) * machine epsilon, the standard
/// numerical-rank convention: only directions indistinguishable from rounding
/// count as lost. Deep-stage sensitivities of an RC ladder decay geometrically
/// in (omega R C), so a looser practical threshold would misreport genuinely
/// nonzero, merely ill-conditioned directions as structural rank loss.
IdentifiabilityReport local_identifiability(const Eigen::MatrixXd& j,
                                            std::optional<double> rel_tol = std::nullopt);

} // namespace fibresense
