#pragma once

#include <span>
#include <vector>

namespace fibresense::dsp {

/// Uniformly sampled scalar series.
struct TimeSeries {
    double rate = 0;  // Hz
    std::vector<double> values;
};

/// Centered moving median. The window is window_s * rate samples rounded up to
/// odd; at the edges the window truncates to the available samples (median of
/// an even count averages the two middle values). Output length equals input.
TimeSeries moving_median(const TimeSeries& x, double window_s);

/// Raw kernel-free median used by moving_median; exposed for reuse on bare vectors.
std::vector<double> moving_median(std::span<const double> x, std::size_t window);

/// Digital Butterworth low-pass (bilinear transform with prewarping, cascaded
/// biquads). zero_phase applies it forward-backward with odd-reflection padding
/// and steady-state section initialization, doubling the attenuation and
/// cancelling phase; single-pass keeps the causal response (|H(cutoff)| = 1/sqrt(2)).
/// Throws std::invalid_argument when cutoff_hz >= rate/2.
TimeSeries butterworth_lowpass(const TimeSeries& x, double cutoff_hz, int order = 4,
                               bool zero_phase = true);

/// Savitzky-Golay smoothing: local least-squares polynomial fit applied by
/// convolution, reflection padding at the edges. Window is window_s * rate
/// rounded up to odd and must exceed poly_order.
TimeSeries savitzky_golay(const TimeSeries& x, double window_s, int poly_order = 4);

/// Central smoothing kernel for an explicit odd window length; exposed so the
/// classical published coefficients can be checked directly.
std::vector<double> savitzky_golay_kernel(std::size_t window, int poly_order);

/// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// Butterworth low-pass prototype as biquad cascade (odd orders end with a
/// first-order section folded into a biquad with b2 = a2 = 0).
std::vector<Biquad> butterworth_sections(double cutoff_hz, double rate, int order);

} // namespace fibresense::dsp
