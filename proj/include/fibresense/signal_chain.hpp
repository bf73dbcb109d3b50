#pragma once

#include "fibresense/config.hpp"
#include "fibresense/ladder.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fibresense {

/// Multi-tone current excitation locked to an integer number of cycles per
/// decimation block, so every tone falls on an exact analysis bin and the
/// block mean of each mixer product is free of spectral leakage.
struct ExcitationConfig {
    double fs = 1e6;               // sample rate, Hz
    std::size_t block_len = 32768; // samples per demodulated frame
    std::vector<double> tones;     // tone frequencies, Hz, ascending
    double gain = 100e-6;          // excitation amplitude per tone, A

    void validate() const;                       // throws std::invalid_argument
    std::vector<std::uint64_t> tone_bins() const; // k_i = f_i * block_len / fs
    double frame_rate() const { return fs / static_cast<double>(block_len); }

    /// Nearest coherent frequencies (non-zero bins) for a requested tone set.
    static std::vector<double> snap_tones(double fs, std::size_t block_len,
                                          std::span<const double> requested);
    static ExcitationConfig from_config(const config::ConfigFile& cfg);
};

/// Per-tone sine/cosine references for a run of consecutive samples. Phases are
/// computed from integer bin arithmetic modulo the block length, so references
/// are exactly periodic in block_len and immune to accumulated rounding.
struct ReferenceBank {
    std::vector<std::vector<double>> sin_ref; // [tone][sample]
    std::vector<std::vector<double>> cos_ref;
    std::size_t samples() const { return sin_ref.empty() ? 0 : sin_ref.front().size(); }
};

ReferenceBank generate_references(const ExcitationConfig& cfg, std::uint64_t first_sample,
                                  std::size_t count);

/// Summed excitation current i[k] = gain * sum_i sin_i[k].
std::vector<double> excitation(const ExcitationConfig& cfg, const ReferenceBank& refs);

/// Voltage developed across the ladder under per-tone impedances: each tone
/// contributes gain * (Re Z_i * sin_i + Im Z_i * cos_i).
std::vector<double> sensor_response(const LadderModel& model, std::span<const double> strains,
                                    const ExcitationConfig& cfg, const ReferenceBank& refs);

/// Measurement corruption. snr_db adds white Gaussian noise scaled to the
/// in-place signal RMS; adc_bits quantizes to a mid-tread converter with the
/// given full-scale range (clipping counted). Either stage is optional.
struct NoiseConfig {
    double snr_db = 0;      // ignored unless enabled
    bool add_noise = false;
    int adc_bits = 0;       // 0 disables quantization
    double full_scale = 10; // volts, symmetric
    std::uint64_t seed = 0;

    static NoiseConfig from_config(const config::ConfigFile& cfg);
};

struct CorruptStats {
    std::size_t clipped = 0;
    double noise_sigma = 0;
};

CorruptStats corrupt(std::span<double> v, const NoiseConfig& noise, std::mt19937_64& rng);

/// Mixer products of the measured voltage against every reference pair.
struct MixerStreams {
    std::vector<std::vector<double>> in_phase;   // [tone][sample]
    std::vector<std::vector<double>> quadrature;
};

MixerStreams psd_demodulate(std::span<const double> v, const ReferenceBank& refs);

/// One demodulated frame: block means of the mixer products per tone.
struct IQFrame {
    double t = 0;                 // block start time, s
    std::vector<double> i_hat;    // [tone]
    std::vector<double> q_hat;
};

/// Single-stage boxcar decimation: the mean of each full block of mixer
/// samples, emitted at fs / block_len. A trailing partial block is dropped and
/// reported in `dropped`.
struct DecimatedFrames {
    std::vector<IQFrame> frames;
    std::size_t dropped = 0;
};

DecimatedFrames lowpass_decimate(const MixerStreams& mixer, const ExcitationConfig& cfg,
                                 std::uint64_t first_sample);

/// Impedance readout from one frame: |Z| = (2/gain) * sqrt(I^2 + Q^2),
/// phase = atan2(Q, I). A tone with zero magnitude is flagged invalid
/// (open or shorted measurement path).
struct ToneReading {
    double magnitude = 0; // ohm
    double phase = 0;     // rad
    bool valid = false;
};

std::vector<ToneReading> impedance_from_iq(const IQFrame& frame, double gain);

/// Frame readings as complex impedances (invalid tones become 0).
std::vector<Impedance> complex_impedances(const IQFrame& frame, double gain);

} // namespace fibresense
