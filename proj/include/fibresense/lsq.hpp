#pragma once

#include "fibresense/ladder.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fibresense::lsq {

struct LsqOptions {
    int max_iterations = 200;
    double ftol = 1e-14;        // relative cost-decrease stop
    double bound_factor = 10.0; // parameters stay within rest/factor .. rest*factor
    int restarts = 3;           // jittered restarts when a start fails to converge
    double jitter = 0.3;        // log-space jitter amplitude for restarts
};

/// Explicit starting point (stage series resistance including any joint term).
struct LsqStart {
    std::vector<double> r;
    std::vector<double> c;
};

struct LsqEstimate {
    std::vector<double> r;      // ohm, per stage (includes joint resistance)
    std::vector<double> c;      // F, per stage
    double residual_norm = 0;   // Euclidean norm over stacked Re/Im residuals
    bool converged = false;
    int iterations = 0;
};

/// Recover per-stage parameters from complex impedance measured at several
/// frequencies, by damped Gauss-Newton in log-parameter space with box bounds
/// around the rest parameters. Requires at least as many frequencies as
/// stages (2*n_freq real equations vs 2*n unknowns). Starts from the rest
/// parameters of `model0` unless `start` is given; on non-convergence retries
/// from deterministic jittered starts and returns the best iterate, flagged.
LsqEstimate lsq_invert(std::span<const Impedance> z_meas, const LadderModel& model0,
                       std::span<const double> freqs_hz, const LsqOptions& opt = {},
                       const std::optional<LsqStart>& start = std::nullopt);

/// Strains implied by estimated capacitances under the linear strain law,
/// clamped to each segment's admissible range. clamped counts how many
/// segments hit a bound.
struct StrainEstimate {
    std::vector<double> eps;
    std::size_t clamped = 0;
};

StrainEstimate strain_from_capacitance(std::span<const double> c_hat, const LadderModel& model);

} // namespace fibresense::lsq
