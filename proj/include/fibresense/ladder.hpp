#pragma once

#include "fibresense/config.hpp"

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace fibresense {

using Impedance = std::complex<double>;

/// Per-segment strain as a fraction of rest length (epsilon = l/l0 - 1, 0 at rest),
/// ordered readout end first.
using StrainVector = std::vector<double>;

/// Rest parameters and strain sensitivities of one discretized fibre segment.
/// Resistance and capacitance vary linearly with strain:
///   C(eps) = c0 * (1 + eps * gf_c),  R(eps) = r0 * (1 + eps * gf_r).
struct SegmentSpec {
    double length0 = 0.1;     // rest length, m
    double r0 = 7.5e3;        // rest series resistance, ohm
    double c0 = 47e-12;       // rest shunt capacitance, F
    double gf_c = 0.5;        // capacitive gauge factor
    double gf_r = 0.1;        // piezoresistive slope
    double max_strain = 0.4;  // admissible strain fraction
    double joint_r = 0.0;     // series interconnect resistance toward the readout, ohm
    std::string label;

    void validate() const;  // throws std::invalid_argument
};

struct RCParams {
    double r;  // ohm
    double c;  // F
};

/// Ordered cascade of segments, index 0 nearest the readout port.
class LadderModel {
public:
    explicit LadderModel(std::vector<SegmentSpec> segments);

    [[nodiscard]] std::size_t size() const { return segments_.size(); }
    [[nodiscard]] const std::vector<SegmentSpec>& segments() const { return segments_; }
    [[nodiscard]] const SegmentSpec& segment(std::size_t i) const { return segments_.at(i); }

    /// Index of the segment with the given label; throws if absent or ambiguous.
    [[nodiscard]] std::size_t index_of(std::string_view label) const;

    /// Loads repeated [segment] sections, readout end first.
    static LadderModel from_config(const config::ConfigFile& cfg);

private:
    std::vector<SegmentSpec> segments_;
};

/// Linear strain law for one segment. Throws std::domain_error (naming the
/// segment) when eps lies outside [0, max_strain].
RCParams params_at_strain(const SegmentSpec& seg, double eps);

/// Input impedance of a cascade given explicit per-stage series resistance and
/// shunt capacitance, evaluated by the backward recursion
///   Z_n = R_n + 1/(jw C_n),   Z_i = R_i + 1 / (jw C_i + 1/Z_{i+1}).
Impedance ladder_impedance_rc(std::span<const double> r, std::span<const double> c, double omega);

/// Input impedance of the model with all stage parameters taken at the given
/// strains. omega in rad/s. Throws std::invalid_argument on bad arguments and
/// std::domain_error on out-of-range strain.
Impedance ladder_impedance(const LadderModel& model, std::span<const double> strains,
                           double omega);

/// Equivalent parallel-model capacitance Im(1/Z)/omega. Throws std::domain_error
/// on zero impedance.
double parallel_capacitance(Impedance z, double omega);

struct SweepPoint {
    double freq_hz;
    Impedance z;
    double cp;  // parallel capacitance, F
};

/// Impedance and parallel capacitance over an ascending positive frequency grid.
std::vector<SweepPoint> frequency_sweep(const LadderModel& model,
                                        std::span<const double> strains,
                                        std::span<const double> freq_hz);

/// Minimum pairwise Euclidean separation, over segments, of unit-normalized
/// delta-Cp response vectors at the candidate frequencies (each segment probed
/// alone at probe_strain). Higher scores mean the frequency set distinguishes
/// strain locations better. Duplicate frequencies are ignored.
double discrimination_score(const LadderModel& model, std::span<const double> candidate_freqs_hz,
                            double probe_strain = 0.4);

} // namespace fibresense
