#include "fibresense/signal_chain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fibresense {

void ExcitationConfig::validate() const {
    if (fs <= 0) throw std::invalid_argument("excitation: fs must be positive");
    if (block_len < 2) throw std::invalid_argument("excitation: block_len must be >= 2");
    if (gain <= 0) throw std::invalid_argument("excitation: gain must be positive");
    if (tones.empty()) throw std::invalid_argument("excitation: at least one tone required");
    double prev = 0;
    for (double f : tones) {
        if (f <= prev) throw std::invalid_argument("excitation: tones must be ascending and positive");
        if (f >= fs / 2) throw std::invalid_argument("excitation: tone above Nyquist");
        prev = f;
    }
    tone_bins();
}

std::vector<std::uint64_t> ExcitationConfig::tone_bins() const {
    std::vector<std::uint64_t> bins;
    bins.reserve(tones.size());
    const double b = static_cast<double>(block_len);
    for (double f : tones) {
        const double k = f * b / fs;
        const double k_round = std::round(k);
        if (k_round < 1 || std::abs(f - k_round * fs / b) > 1e-6)
            throw std::invalid_argument("excitation: tone is not an integer bin of the block");
        bins.push_back(static_cast<std::uint64_t>(k_round));
    }
    return bins;
}

std::vector<double> ExcitationConfig::snap_tones(double fs, std::size_t block_len,
                                                 std::span<const double> requested) {
    if (fs <= 0 || block_len < 2) throw std::invalid_argument("snap_tones: bad fs or block_len");
    std::vector<double> snapped;
    snapped.reserve(requested.size());
    const double df = fs / static_cast<double>(block_len);
    for (double f : requested) {
        double k = std::round(f / df);
        if (k < 1) k = 1;
        snapped.push_back(k * df);
    }
    return snapped;
}

ExcitationConfig ExcitationConfig::from_config(const config::ConfigFile& cfg) {
    const auto& s = cfg.require("excitation");
    ExcitationConfig out;
    out.fs = s.get_value("fs", out.fs);
    out.block_len = static_cast<std::size_t>(s.get_int("block_len", static_cast<long long>(out.block_len)));
    out.gain = s.get_value("gain", out.gain);
    out.tones = s.get_list("tones");
    if (s.get_bool("snap", false))
        out.tones = snap_tones(out.fs, out.block_len, out.tones);
    out.validate();
    return out;
}

ReferenceBank generate_references(const ExcitationConfig& cfg, std::uint64_t first_sample,
                                  std::size_t count) {
    cfg.validate();
    const auto bins = cfg.tone_bins();
    const std::uint64_t b = cfg.block_len;
    ReferenceBank refs;
    refs.sin_ref.assign(bins.size(), std::vector<double>(count));
    refs.cos_ref.assign(bins.size(), std::vector<double>(count));
    const double step = 2.0 * std::numbers::pi / static_cast<double>(b);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        for (std::size_t j = 0; j < count; ++j) {
            // phase index k_i * k mod B stays exact in integer arithmetic
            const std::uint64_t m = ((first_sample + j) % b) * bins[i] % b;
            const double phase = step * static_cast<double>(m);
            refs.sin_ref[i][j] = std::sin(phase);
            refs.cos_ref[i][j] = std::cos(phase);
        }
    }
    return refs;
}

std::vector<double> excitation(const ExcitationConfig& cfg, const ReferenceBank& refs) {
    std::vector<double> i_exc(refs.samples(), 0.0);
    for (const auto& s : refs.sin_ref)
        for (std::size_t j = 0; j < i_exc.size(); ++j) i_exc[j] += s[j];
    for (double& v : i_exc) v *= cfg.gain;
    return i_exc;
}

std::vector<double> sensor_response(const LadderModel& model, std::span<const double> strains,
                                    const ExcitationConfig& cfg, const ReferenceBank& refs) {
    if (refs.sin_ref.size() != cfg.tones.size())
        throw std::invalid_argument("sensor_response: reference bank does not match tone count");
    std::vector<double> v(refs.samples(), 0.0);
    for (std::size_t i = 0; i < cfg.tones.size(); ++i) {
        const Impedance z = ladder_impedance(model, strains, 2.0 * std::numbers::pi * cfg.tones[i]);
        const double a = cfg.gain * z.real();
        const double b = cfg.gain * z.imag();
        const auto& s = refs.sin_ref[i];
        const auto& c = refs.cos_ref[i];
        for (std::size_t j = 0; j < v.size(); ++j) v[j] += a * s[j] + b * c[j];
    }
    return v;
}

NoiseConfig NoiseConfig::from_config(const config::ConfigFile& cfg) {
    NoiseConfig out;
    const auto* s = cfg.find("noise");
    if (!s) return out;
    if (s->has("snr_db")) {
        out.snr_db = s->get_value("snr_db");
        out.add_noise = true;
    }
    out.adc_bits = static_cast<int>(s->get_int("adc_bits", 0));
    if (out.adc_bits < 0 || out.adc_bits > 32)
        throw config::ConfigError("noise: adc_bits must be in [0, 32]");
    out.full_scale = s->get_value("full_scale", out.full_scale);
    if (out.full_scale <= 0) throw config::ConfigError("noise: full_scale must be positive");
    out.seed = s->get_seed("seed", 0);
    return out;
}

CorruptStats corrupt(std::span<double> v, const NoiseConfig& noise, std::mt19937_64& rng) {
    CorruptStats stats;
    if (v.empty()) return stats;
    if (noise.add_noise) {
        double sumsq = 0;
        for (double x : v) sumsq += x * x;
        const double rms = std::sqrt(sumsq / static_cast<double>(v.size()));
        stats.noise_sigma = rms * std::pow(10.0, -noise.snr_db / 20.0);
        if (stats.noise_sigma > 0) {
            std::normal_distribution<double> gauss(0.0, stats.noise_sigma);
            for (double& x : v) x += gauss(rng);
        }
    }
    if (noise.adc_bits > 0) {
        const double step = 2.0 * noise.full_scale / std::ldexp(1.0, noise.adc_bits);
        const double lo = -noise.full_scale;
        const double hi = noise.full_scale - step;
        for (double& x : v) {
            double q = std::round(x / step) * step;
            if (q < lo || q > hi) {
                ++stats.clipped;
                q = std::clamp(q, lo, hi);
            }
            x = q;
        }
    }
    return stats;
}

MixerStreams psd_demodulate(std::span<const double> v, const ReferenceBank& refs) {
    if (v.size() != refs.samples())
        throw std::invalid_argument("psd_demodulate: signal and reference lengths differ");
    MixerStreams out;
    out.in_phase.assign(refs.sin_ref.size(), std::vector<double>(v.size()));
    out.quadrature.assign(refs.sin_ref.size(), std::vector<double>(v.size()));
    for (std::size_t i = 0; i < refs.sin_ref.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            out.in_phase[i][j] = refs.sin_ref[i][j] * v[j];
            out.quadrature[i][j] = refs.cos_ref[i][j] * v[j];
        }
    }
    return out;
}

DecimatedFrames lowpass_decimate(const MixerStreams& mixer, const ExcitationConfig& cfg,
                                 std::uint64_t first_sample) {
    if (mixer.in_phase.empty()) throw std::invalid_argument("lowpass_decimate: empty mixer streams");
    const std::size_t n = mixer.in_phase.front().size();
    const std::size_t b = cfg.block_len;
    DecimatedFrames out;
    out.dropped = n % b;
    const std::size_t n_frames = n / b;
    out.frames.reserve(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
        IQFrame frame;
        frame.t = static_cast<double>(first_sample + f * b) / cfg.fs;
        frame.i_hat.resize(mixer.in_phase.size());
        frame.q_hat.resize(mixer.in_phase.size());
        for (std::size_t i = 0; i < mixer.in_phase.size(); ++i) {
            double si = 0, sq = 0;
            const double* pi = mixer.in_phase[i].data() + f * b;
            const double* pq = mixer.quadrature[i].data() + f * b;
            for (std::size_t j = 0; j < b; ++j) {
                si += pi[j];
                sq += pq[j];
            }
            frame.i_hat[i] = si / static_cast<double>(b);
            frame.q_hat[i] = sq / static_cast<double>(b);
        }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

std::vector<ToneReading> impedance_from_iq(const IQFrame& frame, double gain) {
    if (gain <= 0) throw std::invalid_argument("impedance_from_iq: gain must be positive");
    if (frame.i_hat.size() != frame.q_hat.size())
        throw std::invalid_argument("impedance_from_iq: malformed frame");
    std::vector<ToneReading> out(frame.i_hat.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = std::hypot(frame.i_hat[i], frame.q_hat[i]);
        out[i].magnitude = 2.0 * r / gain;
        out[i].phase = std::atan2(frame.q_hat[i], frame.i_hat[i]);
        out[i].valid = r > 0;
    }
    return out;
}

std::vector<Impedance> complex_impedances(const IQFrame& frame, double gain) {
    const auto readings = impedance_from_iq(frame, gain);
    std::vector<Impedance> z(readings.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        if (readings[i].valid)
            z[i] = std::polar(readings[i].magnitude, readings[i].phase);
    return z;
}

} // namespace fibresense
