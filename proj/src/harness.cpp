#include "fibresense/harness.hpp"

#include "fibresense/csv.hpp"
#include "fibresense/dsp.hpp"
#include "fibresense/lsq.hpp"
#include "fibresense/units.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fibresense::harness {

namespace {

constexpr std::uint64_t kTrialSeedStride = 0x9e3779b97f4a7c15ull;

std::vector<std::size_t> parse_segment_list(std::string_view text, const LadderModel& model) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(',', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view item = text.substr(start, end - start);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (!item.empty()) out.push_back(model.index_of(item));
        if (end == text.size()) break;
        start = end + 1;
    }
    return out;
}

std::vector<std::string> split_pipe(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('|', start);
        if (end == std::string::npos) end = text.size();
        parts.push_back(text.substr(start, end - start));
        if (end == text.size()) break;
        start = end + 1;
    }
    return parts;
}

} // namespace

void StaircaseSpec::validate(std::size_t n_segments) const {
    // step == 0 is a valid degenerate spec: a rest-only profile.
    if (step < 0 || max_strain < step)
        throw std::invalid_argument("staircase: need 0 <= step <= max_strain");
    if (ramp_rate <= 0) throw std::invalid_argument("staircase: ramp_rate must be positive");
    if (hold_s < 0 || rest_pad_s < 0)
        throw std::invalid_argument("staircase: negative durations");
    if (repetitions < 1) throw std::invalid_argument("staircase: repetitions must be >= 1");
    if (combos.empty()) throw std::invalid_argument("staircase: no segment combos");
    for (const auto& combo : combos) {
        if (combo.empty()) throw std::invalid_argument("staircase: empty combo");
        for (std::size_t idx : combo)
            if (idx >= n_segments) throw std::invalid_argument("staircase: combo segment out of range");
    }
}

std::vector<std::vector<std::size_t>> StaircaseSpec::default_combos(std::size_t n_segments) {
    std::vector<std::vector<std::size_t>> combos;
    for (std::size_t i = 0; i < n_segments; ++i) combos.push_back({i});
    for (std::size_t i = 0; i + 1 < n_segments; ++i) combos.push_back({i, i + 1});
    return combos;
}

StaircaseSpec StaircaseSpec::from_config(const config::ConfigFile& cfg, const LadderModel& model) {
    StaircaseSpec spec;
    if (const auto* s = cfg.find("staircase")) {
        spec.step = s->get_value("step", spec.step);
        spec.max_strain = s->get_value("max_strain", spec.max_strain);
        spec.ramp_rate = s->get_value("ramp_rate", spec.ramp_rate);
        spec.hold_s = s->get_value("hold", spec.hold_s);
        spec.rest_pad_s = s->get_value("rest_pad", spec.rest_pad_s);
        spec.repetitions = static_cast<int>(s->get_int("repetitions", spec.repetitions));
        if (s->has("combos")) {
            for (const auto& part : split_pipe(s->get_string("combos"))) {
                auto combo = parse_segment_list(part, model);
                if (!combo.empty()) spec.combos.push_back(std::move(combo));
            }
        }
    }
    if (spec.combos.empty()) spec.combos = default_combos(model.size());
    spec.validate(model.size());
    return spec;
}

namespace {

/// Breakpoints of one staircase combo block as (time, strain) pairs.
std::vector<std::pair<double, double>> staircase_breakpoints(const StaircaseSpec& spec) {
    std::vector<double> levels;
    if (spec.step > 0) {
        for (double lvl = spec.step; lvl <= spec.max_strain + 1e-12; lvl += spec.step)
            levels.push_back(std::min(lvl, spec.max_strain));
        for (std::size_t i = levels.size() - 1; i-- > 0;) levels.push_back(levels[i]);
    }

    std::vector<std::pair<double, double>> bp;
    double t = 0, lvl = 0;
    bp.emplace_back(t, lvl);
    t += spec.rest_pad_s;
    bp.emplace_back(t, lvl);
    for (double next : levels) {
        t += std::abs(next - lvl) / spec.ramp_rate;
        lvl = next;
        bp.emplace_back(t, lvl);
        t += spec.hold_s;
        bp.emplace_back(t, lvl);
    }
    t += lvl / spec.ramp_rate;
    bp.emplace_back(t, 0.0);
    t += spec.rest_pad_s;
    bp.emplace_back(t, 0.0);
    return bp;
}

double interp_breakpoints(const std::vector<std::pair<double, double>>& bp, double t) {
    if (t <= bp.front().first) return bp.front().second;
    if (t >= bp.back().first) return bp.back().second;
    auto it = std::upper_bound(bp.begin(), bp.end(), t,
                               [](double v, const auto& p) { return v < p.first; });
    const auto& [t1, y1] = *it;
    const auto& [t0, y0] = *(it - 1);
    if (t1 == t0) return y1;
    return y0 + (y1 - y0) * (t - t0) / (t1 - t0);
}

} // namespace

StrainProfile staircase_profile(const StaircaseSpec& spec, std::size_t n_segments, double rate) {
    spec.validate(n_segments);
    if (rate <= 0) throw std::invalid_argument("staircase_profile: rate must be positive");

    const auto bp = staircase_breakpoints(spec);
    const double block_dur = bp.back().first;
    const double total = block_dur * static_cast<double>(spec.combos.size());
    const auto n_frames = static_cast<std::size_t>(std::floor(total * rate));

    StrainProfile prof;
    prof.rate = rate;
    prof.eps.assign(n_segments, std::vector<double>(n_frames, 0.0));
    for (std::size_t f = 0; f < n_frames; ++f) {
        const double t = static_cast<double>(f) / rate;
        auto block = static_cast<std::size_t>(t / block_dur);
        if (block >= spec.combos.size()) block = spec.combos.size() - 1;
        const double local = t - static_cast<double>(block) * block_dur;
        const double lvl = interp_breakpoints(bp, local);
        for (std::size_t idx : spec.combos[block]) prof.eps[idx][f] = lvl;
    }
    return prof;
}

void JointScenarioSpec::validate(std::size_t n_segments) const {
    if (joints.empty()) throw std::invalid_argument("joints: no joints configured");
    for (const auto& j : joints) {
        if (j.range_deg <= 0) throw std::invalid_argument("joints: range must be positive");
        if (j.strain_span <= 0) throw std::invalid_argument("joints: strain_span must be positive");
        if (j.segment >= n_segments) throw std::invalid_argument("joints: segment out of range");
    }
    if (reps_per_joint < 1 || sets < 1)
        throw std::invalid_argument("joints: reps and sets must be >= 1");
    if (rep_duration_min_s <= 0 || rep_duration_max_s < rep_duration_min_s)
        throw std::invalid_argument("joints: bad rep duration range");
    if (rep_peak_min <= 0 || rep_peak_max < rep_peak_min || rep_peak_max > 1.0)
        throw std::invalid_argument("joints: rep peaks must satisfy 0 < min <= max <= 1");
    if (pre_strain < 0 || crosstalk < 0 || sway_amplitude_deg < 0 || rep_gap_s < 0 || rest_pad_s < 0)
        throw std::invalid_argument("joints: negative scenario parameter");
    if (rest_angle_frac < 0 || rest_angle_frac >= 0.5)
        throw std::invalid_argument("joints: rest_angle_frac must lie in [0, 0.5)");
}

JointScenarioSpec JointScenarioSpec::from_config(const config::ConfigFile& cfg,
                                                 const LadderModel& model) {
    JointScenarioSpec spec;
    if (const auto* s = cfg.find("joints")) {
        spec.reps_per_joint = static_cast<int>(s->get_int("reps_per_joint", spec.reps_per_joint));
        spec.sets = static_cast<int>(s->get_int("sets", spec.sets));
        spec.rep_duration_min_s = s->get_value("rep_duration_min", spec.rep_duration_min_s);
        spec.rep_duration_max_s = s->get_value("rep_duration_max", spec.rep_duration_max_s);
        spec.rep_gap_s = s->get_value("rep_gap", spec.rep_gap_s);
        spec.rep_peak_min = s->get_value("rep_peak_min", spec.rep_peak_min);
        spec.rep_peak_max = s->get_value("rep_peak_max", spec.rep_peak_max);
        spec.pre_strain = s->get_value("pre_strain", spec.pre_strain);
        spec.crosstalk = s->get_value("crosstalk", spec.crosstalk);
        spec.sway_amplitude_deg = s->get_value("sway_amplitude", spec.sway_amplitude_deg);
        spec.rest_angle_frac = s->get_value("rest_angle_frac", spec.rest_angle_frac);
        spec.rest_pad_s = s->get_value("rest_pad", spec.rest_pad_s);
    }
    for (const auto* s : cfg.all("joint")) {
        JointSpec j;
        j.name = s->get_string("name");
        j.range_deg = s->get_value("range");
        j.strain_span = s->get_value("strain_span");
        j.segment = model.index_of(s->get_string("segment"));
        spec.joints.push_back(std::move(j));
    }
    spec.validate(model.size());
    return spec;
}

JointProfile joint_scenario_trial(const JointScenarioSpec& spec, std::size_t n_segments,
                                  double rate, std::uint64_t trial_seed) {
    spec.validate(n_segments);
    if (rate <= 0) throw std::invalid_argument("joint_scenario_trial: rate must be positive");

    std::mt19937_64 rng(trial_seed);
    std::uniform_real_distribution<double> dur(spec.rep_duration_min_s, spec.rep_duration_max_s);
    std::uniform_real_distribution<double> peak(spec.rep_peak_min, spec.rep_peak_max);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

    struct Rep {
        std::size_t joint;
        double start, duration, peak_deg;
    };
    std::vector<Rep> reps;
    double t = spec.rest_pad_s;
    for (std::size_t j = 0; j < spec.joints.size(); ++j) {
        // Pulses ride on the relaxed-posture baseline; keep the crest plus
        // worst-case sway inside the range so the clamp below never flattens it.
        const double range = spec.joints[j].range_deg;
        const double headroom =
            std::max(range * (1.0 - spec.rest_angle_frac) - 2.0 * spec.sway_amplitude_deg, 0.0);
        for (int r = 0; r < spec.reps_per_joint; ++r) {
            const double d = dur(rng);
            reps.push_back({j, t, d, peak(rng) * headroom});
            t += d + spec.rep_gap_s;
        }
        t += spec.rest_pad_s;
    }
    const double total = t;

    // low-frequency postural sway, a small multi-sine per joint
    constexpr double sway_freqs[] = {0.05, 0.11, 0.19, 0.30};
    std::vector<std::array<double, 4>> sway_phases(spec.joints.size());
    for (auto& ph : sway_phases)
        for (double& p : ph) p = phase(rng);

    const auto n_frames = static_cast<std::size_t>(std::floor(total * rate));
    JointProfile prof;
    prof.rate = rate;
    prof.angles_deg.assign(spec.joints.size(), std::vector<double>(n_frames, 0.0));
    prof.strains.rate = rate;
    prof.strains.eps.assign(n_segments, std::vector<double>(n_frames, spec.pre_strain));

    for (const Rep& rep : reps) {
        const auto f0 = static_cast<std::size_t>(std::ceil(rep.start * rate));
        const auto f1 = std::min(
            n_frames, static_cast<std::size_t>(std::ceil((rep.start + rep.duration) * rate)));
        for (std::size_t f = f0; f < f1; ++f) {
            const double local = static_cast<double>(f) / rate - rep.start;
            prof.angles_deg[rep.joint][f] +=
                rep.peak_deg * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * local / rep.duration));
        }
    }

    const double sway_amp = spec.sway_amplitude_deg / 2.0;
    for (std::size_t j = 0; j < spec.joints.size(); ++j) {
        const double range = spec.joints[j].range_deg;
        const double baseline = spec.rest_angle_frac * range;
        for (std::size_t f = 0; f < n_frames; ++f) {
            const double time = static_cast<double>(f) / rate;
            double sway = 0;
            for (int m = 0; m < 4; ++m)
                sway += sway_amp *
                        std::sin(2.0 * std::numbers::pi * sway_freqs[m] * time + sway_phases[j][m]);
            prof.angles_deg[j][f] = std::clamp(baseline + prof.angles_deg[j][f] + sway, 0.0, range);
        }
    }

    for (std::size_t j = 0; j < spec.joints.size(); ++j) {
        const JointSpec& joint = spec.joints[j];
        for (std::size_t f = 0; f < n_frames; ++f) {
            const double drive = prof.angles_deg[j][f] / joint.range_deg;
            prof.strains.eps[joint.segment][f] += drive * joint.strain_span;
            if (joint.segment > 0)
                prof.strains.eps[joint.segment - 1][f] += drive * spec.crosstalk;
            if (joint.segment + 1 < n_segments)
                prof.strains.eps[joint.segment + 1][f] += drive * spec.crosstalk;
        }
    }
    return prof;
}

Eigen::MatrixXd Dataset::inputs() const {
    Eigen::MatrixXd x(2 * tones, frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f)
        for (std::size_t i = 0; i < tones; ++i) {
            x(static_cast<Eigen::Index>(2 * i), static_cast<Eigen::Index>(f)) = frames[f].i_hat[i];
            x(static_cast<Eigen::Index>(2 * i + 1), static_cast<Eigen::Index>(f)) =
                frames[f].q_hat[i];
        }
    return x;
}

Eigen::MatrixXd Dataset::target_matrix() const {
    Eigen::MatrixXd y(targets.size(), frames.size());
    for (std::size_t r = 0; r < targets.size(); ++r)
        for (std::size_t f = 0; f < frames.size(); ++f)
            y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) = targets[r][f];
    return y;
}

std::vector<int> Dataset::distinct_trials() const {
    std::vector<int> out(trial);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace {

ChainMode resolve_mode(ChainMode mode, const NoiseConfig& noise) {
    if (mode == ChainMode::Auto)
        return noise.adc_bits > 0 ? ChainMode::Full : ChainMode::Analytic;
    if (mode == ChainMode::Analytic && noise.adc_bits > 0)
        throw std::invalid_argument("synthesize: quantization requires the full sample chain");
    return mode;
}

void append_trial(Dataset& ds, const LadderModel& model, const ExcitationConfig& exc,
                  const NoiseConfig& noise, const StrainProfile& prof, int tag, ChainMode mode,
                  const ReferenceBank* block_refs) {
    const std::size_t n_frames = prof.frames();
    const double rate = exc.frame_rate();
    const std::size_t start = ds.frames.size();
    std::mt19937_64 rng(noise.seed ^ (kTrialSeedStride * static_cast<std::uint64_t>(tag)));

    std::vector<double> strains(model.size());
    const double inv_root = 1.0 / std::sqrt(2.0 * static_cast<double>(exc.block_len));
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t f = 0; f < n_frames; ++f) {
        for (std::size_t s = 0; s < model.size(); ++s) strains[s] = prof.eps[s][f];
        IQFrame frame;
        frame.t = static_cast<double>(start + f) / rate;
        if (mode == ChainMode::Analytic) {
            // The block mean of v[k]*sin_i[k] over an integer number of cycles
            // keeps only that tone's in-phase half; likewise for cosine. Noise
            // averages down by sqrt(2 * block_len) and stays Gaussian.
            frame.i_hat.resize(exc.tones.size());
            frame.q_hat.resize(exc.tones.size());
            double power = 0;
            for (std::size_t i = 0; i < exc.tones.size(); ++i) {
                const Impedance z =
                    ladder_impedance(model, strains, 2.0 * std::numbers::pi * exc.tones[i]);
                frame.i_hat[i] = 0.5 * exc.gain * z.real();
                frame.q_hat[i] = 0.5 * exc.gain * z.imag();
                power += std::norm(z);
            }
            if (noise.add_noise) {
                const double rms = exc.gain * std::sqrt(0.5 * power);
                const double sigma = rms * std::pow(10.0, -noise.snr_db / 20.0) * inv_root;
                for (std::size_t i = 0; i < exc.tones.size(); ++i) {
                    frame.i_hat[i] += sigma * gauss(rng);
                    frame.q_hat[i] += sigma * gauss(rng);
                }
            }
        } else {
            std::vector<double> v = sensor_response(model, strains, exc, *block_refs);
            corrupt(v, noise, rng);
            const MixerStreams mixer = psd_demodulate(v, *block_refs);
            DecimatedFrames dec = lowpass_decimate(mixer, exc, 0);
            frame.i_hat = std::move(dec.frames.front().i_hat);
            frame.q_hat = std::move(dec.frames.front().q_hat);
        }
        ds.frames.push_back(std::move(frame));
        ds.trial.push_back(tag);
    }
}

} // namespace

Dataset synthesize_staircase(const LadderModel& model, const ExcitationConfig& exc,
                             const NoiseConfig& noise, const StaircaseSpec& spec, ChainMode mode) {
    exc.validate();
    spec.validate(model.size());
    const ChainMode resolved = resolve_mode(mode, noise);

    Dataset ds;
    ds.kind = Dataset::Kind::Strain;
    ds.frame_rate = exc.frame_rate();
    ds.tones = exc.tones.size();
    for (std::size_t s = 0; s < model.size(); ++s) {
        const std::string& label = model.segment(s).label;
        ds.target_names.push_back("eps_" + (label.empty() ? std::to_string(s + 1) : label));
    }

    const StrainProfile prof = staircase_profile(spec, model.size(), ds.frame_rate);
    ReferenceBank refs;
    if (resolved == ChainMode::Full) refs = generate_references(exc, 0, exc.block_len);

    ds.targets.assign(model.size(), {});
    for (int rep = 1; rep <= spec.repetitions; ++rep) {
        append_trial(ds, model, exc, noise, prof, rep, resolved,
                     resolved == ChainMode::Full ? &refs : nullptr);
        for (std::size_t s = 0; s < model.size(); ++s)
            ds.targets[s].insert(ds.targets[s].end(), prof.eps[s].begin(), prof.eps[s].end());
    }
    return ds;
}

Dataset synthesize_joint(const LadderModel& model, const ExcitationConfig& exc,
                         const NoiseConfig& noise, const JointScenarioSpec& spec, ChainMode mode) {
    exc.validate();
    spec.validate(model.size());
    const ChainMode resolved = resolve_mode(mode, noise);

    Dataset ds;
    ds.kind = Dataset::Kind::Joint;
    ds.frame_rate = exc.frame_rate();
    ds.tones = exc.tones.size();
    for (const auto& j : spec.joints) ds.target_names.push_back(j.name + "_deg");
    ds.targets.assign(spec.joints.size(), {});

    ReferenceBank refs;
    if (resolved == ChainMode::Full) refs = generate_references(exc, 0, exc.block_len);

    for (int set = 1; set <= spec.sets; ++set) {
        const JointProfile prof = joint_scenario_trial(
            spec, model.size(), ds.frame_rate,
            spec.seed ^ (kTrialSeedStride * static_cast<std::uint64_t>(set)));
        append_trial(ds, model, exc, noise, prof.strains, set, resolved,
                     resolved == ChainMode::Full ? &refs : nullptr);
        for (std::size_t j = 0; j < spec.joints.size(); ++j)
            ds.targets[j].insert(ds.targets[j].end(), prof.angles_deg[j].begin(),
                                 prof.angles_deg[j].end());
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::vector<std::string> frame_header{"t_s"};
    for (std::size_t i = 1; i <= ds.tones; ++i) {
        frame_header.push_back("i" + std::to_string(i));
        frame_header.push_back("q" + std::to_string(i));
    }
    io::CsvWriter frames_csv(dir / "frames.csv", frame_header);
    std::vector<double> row(frame_header.size());
    for (const IQFrame& f : ds.frames) {
        row[0] = f.t;
        for (std::size_t i = 0; i < ds.tones; ++i) {
            row[1 + 2 * i] = f.i_hat[i];
            row[2 + 2 * i] = f.q_hat[i];
        }
        frames_csv.row(row);
    }
    frames_csv.commit();

    std::vector<std::string> target_header{"t_s", "trial"};
    target_header.insert(target_header.end(), ds.target_names.begin(), ds.target_names.end());
    io::CsvWriter targets_csv(dir / "targets.csv", target_header);
    std::vector<double> trow(target_header.size());
    for (std::size_t f = 0; f < ds.frames.size(); ++f) {
        trow[0] = ds.frames[f].t;
        trow[1] = static_cast<double>(ds.trial[f]);
        for (std::size_t r = 0; r < ds.targets.size(); ++r) trow[2 + r] = ds.targets[r][f];
        targets_csv.row(trow);
    }
    targets_csv.commit();
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const io::CsvTable frames = io::CsvTable::load(dir / "frames.csv");
    const io::CsvTable targets = io::CsvTable::load(dir / "targets.csv");
    if (frames.header.empty() || frames.header.front() != "t_s")
        throw std::invalid_argument("load_dataset: malformed frames.csv header");
    if (targets.header.size() < 3 || targets.header[0] != "t_s" || targets.header[1] != "trial")
        throw std::invalid_argument("load_dataset: malformed targets.csv header");
    if (frames.rows.size() != targets.rows.size() || frames.rows.empty())
        throw std::invalid_argument("load_dataset: frame and target row counts differ");
    if ((frames.header.size() - 1) % 2 != 0)
        throw std::invalid_argument("load_dataset: frames.csv must hold i/q pairs");

    Dataset ds;
    ds.tones = (frames.header.size() - 1) / 2;
    ds.target_names.assign(targets.header.begin() + 2, targets.header.end());
    ds.kind = Dataset::Kind::Strain;
    if (!ds.target_names.empty() &&
        std::all_of(ds.target_names.begin(), ds.target_names.end(), [](const std::string& n) {
            return n.size() > 4 && n.substr(n.size() - 4) == "_deg";
        }))
        ds.kind = Dataset::Kind::Joint;

    ds.targets.assign(ds.target_names.size(), std::vector<double>(frames.rows.size()));
    ds.frames.reserve(frames.rows.size());
    for (std::size_t f = 0; f < frames.rows.size(); ++f) {
        IQFrame frame;
        frame.t = frames.rows[f][0];
        frame.i_hat.resize(ds.tones);
        frame.q_hat.resize(ds.tones);
        for (std::size_t i = 0; i < ds.tones; ++i) {
            frame.i_hat[i] = frames.rows[f][1 + 2 * i];
            frame.q_hat[i] = frames.rows[f][2 + 2 * i];
        }
        if (std::abs(targets.rows[f][0] - frame.t) > 1e-9)
            throw std::invalid_argument("load_dataset: frame and target timestamps diverge");
        ds.frames.push_back(std::move(frame));
        ds.trial.push_back(static_cast<int>(std::lround(targets.rows[f][1])));
        for (std::size_t r = 0; r < ds.targets.size(); ++r)
            ds.targets[r][f] = targets.rows[f][2 + r];
    }
    if (ds.frames.size() >= 2) {
        ds.frame_rate = static_cast<double>(ds.frames.size() - 1) /
                        (ds.frames.back().t - ds.frames.front().t);
    }
    return ds;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
        out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
    return out;
}

std::vector<double> row_vector(const Eigen::MatrixXd& m, Eigen::Index r) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(r, j);
    return v;
}

Eigen::MatrixXd median_filter_rows(const Eigen::MatrixXd& m, double rate, double window_s) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const dsp::TimeSeries filtered = dsp::moving_median({rate, row_vector(m, r)}, window_s);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out(r, j) = filtered.values[static_cast<std::size_t>(j)];
    }
    return out;
}

std::vector<mlp::LayerSpec> with_output_layer(std::vector<mlp::LayerSpec> hidden,
                                              int n_outputs) {
    hidden.push_back({n_outputs, mlp::Activation::Linear, 0, 0});
    return hidden;
}

} // namespace

StrainRunReport evaluate_strain_model(const Dataset& ds, const mlp::MLPModel& trained,
                                      const LadderModel& model, const ExcitationConfig& exc,
                                      const StrainRunConfig& cfg) {
    if (ds.kind != Dataset::Kind::Strain)
        throw std::invalid_argument("strain evaluation: dataset does not hold strain targets");
    const auto trials = ds.distinct_trials();
    if (trials.empty()) throw std::invalid_argument("strain evaluation: empty dataset");

    const int test_tag = trials.back();
    std::vector<std::size_t> test_idx;
    for (std::size_t f = 0; f < ds.frames.size(); ++f)
        if (ds.trial[f] == test_tag) test_idx.push_back(f);

    const Eigen::MatrixXd xte = gather(ds.inputs(), test_idx);
    const Eigen::MatrixXd yte = gather(ds.target_matrix(), test_idx);
    const auto n_out = static_cast<int>(ds.targets.size());
    if (trained.output_dim() != n_out)
        throw std::invalid_argument("strain evaluation: model outputs do not match targets");

    StrainRunReport rep;
    rep.model = trained;
    rep.references = yte;
    rep.predictions = median_filter_rows(trained.forward(xte), ds.frame_rate, cfg.median_window_s);
    for (std::size_t f : test_idx) {
        rep.test_time.push_back(ds.frames[f].t);
        rep.test_trial.push_back(ds.trial[f]);
    }

    for (Eigen::Index r = 0; r < rep.predictions.rows(); ++r) {
        const auto pred = row_vector(rep.predictions, r);
        const auto ref = row_vector(yte, r);
        TargetReport tr;
        tr.name = ds.target_names[static_cast<std::size_t>(r)];
        tr.m = metrics::evaluate(pred, ref, cfg.target_range);
        tr.spearman = metrics::spearman(pred, ref);
        rep.per_segment.push_back(std::move(tr));
    }
    {
        std::vector<double> pool_pred, pool_ref;
        for (Eigen::Index r = 0; r < rep.predictions.rows(); ++r)
            for (Eigen::Index j = 0; j < rep.predictions.cols(); ++j) {
                pool_pred.push_back(rep.predictions(r, j));
                pool_ref.push_back(yte(r, j));
            }
        rep.aggregate = metrics::evaluate(pool_pred, pool_ref, cfg.target_range);
    }

    if (cfg.run_lsq) {
        Eigen::MatrixXd eps_hat(n_out, static_cast<Eigen::Index>(test_idx.size()));
        lsq::LsqOptions opt;
        std::optional<lsq::LsqStart> warm;
        for (std::size_t j = 0; j < test_idx.size(); ++j) {
            const auto z = complex_impedances(ds.frames[test_idx[j]], exc.gain);
            const lsq::LsqEstimate est = lsq::lsq_invert(z, model, exc.tones, opt, warm);
            if (!est.converged) ++rep.lsq_unconverged;
            const auto strain = lsq::strain_from_capacitance(est.c, model);
            for (int s = 0; s < n_out; ++s)
                eps_hat(s, static_cast<Eigen::Index>(j)) = strain.eps[static_cast<std::size_t>(s)];
            warm = lsq::LsqStart{est.r, est.c};
        }
        rep.lsq_predictions = median_filter_rows(eps_hat, ds.frame_rate, cfg.median_window_s);
        std::vector<double> pool_pred, pool_ref;
        for (Eigen::Index r = 0; r < rep.lsq_predictions.rows(); ++r) {
            const auto pred = row_vector(rep.lsq_predictions, r);
            const auto ref = row_vector(yte, r);
            TargetReport tr;
            tr.name = ds.target_names[static_cast<std::size_t>(r)];
            tr.m = metrics::evaluate(pred, ref, cfg.target_range);
            tr.spearman = metrics::spearman(pred, ref);
            rep.lsq_per_segment.push_back(std::move(tr));
            for (std::size_t j = 0; j < pred.size(); ++j) {
                pool_pred.push_back(pred[j]);
                pool_ref.push_back(ref[j]);
            }
        }
        rep.lsq_aggregate = metrics::evaluate(pool_pred, pool_ref, cfg.target_range);
    }
    return rep;
}

StrainRunReport run_strain_validation(const Dataset& ds, const LadderModel& model,
                                      const ExcitationConfig& exc, const StrainRunConfig& cfg) {
    if (ds.kind != Dataset::Kind::Strain)
        throw std::invalid_argument("run_strain_validation: dataset does not hold strain targets");
    const auto trials = ds.distinct_trials();
    if (trials.size() < 3)
        throw std::invalid_argument("run_strain_validation: need at least 3 trials "
                                    "(train/validation/test split by trial)");

    const int val_tag = trials[trials.size() - 2];
    const int test_tag = trials[trials.size() - 1];
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t f = 0; f < ds.frames.size(); ++f) {
        if (ds.trial[f] == test_tag) continue;
        if (ds.trial[f] == val_tag) val_idx.push_back(f);
        else train_idx.push_back(f);
    }

    const Eigen::MatrixXd x = ds.inputs();
    const Eigen::MatrixXd y = ds.target_matrix();
    const Eigen::MatrixXd xtr = gather(x, train_idx);

    const auto n_out = static_cast<int>(ds.targets.size());
    mlp::MLPModel m = mlp::make_mlp(static_cast<int>(2 * ds.tones),
                                    with_output_layer(cfg.hidden, n_out), cfg.train.seed);
    m.fit_normalization(xtr);
    mlp::TrainHistory hist =
        mlp::mlp_train(m, xtr, gather(y, train_idx), gather(x, val_idx), gather(y, val_idx),
                       cfg.train);

    StrainRunReport rep = evaluate_strain_model(ds, m, model, exc, cfg);
    rep.history = std::move(hist);
    return rep;
}

JointRunReport run_joint_scenario(const Dataset& ds, const JointRunConfig& cfg) {
    if (ds.kind != Dataset::Kind::Joint)
        throw std::invalid_argument("run_joint_scenario: dataset does not hold joint targets");
    const auto trials = ds.distinct_trials();
    if (trials.size() < 2)
        throw std::invalid_argument("run_joint_scenario: need at least 2 trials for "
                                    "leave-one-out cross-validation");
    if (cfg.train_fraction <= 0 || cfg.train_fraction >= 1)
        throw std::invalid_argument("run_joint_scenario: train_fraction must lie in (0, 1)");

    const Eigen::MatrixXd x_raw = ds.inputs();
    const Eigen::MatrixXd y_raw = ds.target_matrix();
    Eigen::MatrixXd x = x_raw, y = y_raw;

    // filter each trial independently; recordings are not continuous across trials
    std::vector<std::vector<std::size_t>> trial_idx(trials.size());
    for (std::size_t f = 0; f < ds.frames.size(); ++f) {
        const auto pos = std::lower_bound(trials.begin(), trials.end(), ds.trial[f]) - trials.begin();
        trial_idx[static_cast<std::size_t>(pos)].push_back(f);
    }
    for (const auto& idx : trial_idx) {
        if (idx.empty()) continue;
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            std::vector<double> seg(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j)
                seg[j] = x_raw(r, static_cast<Eigen::Index>(idx[j]));
            const auto filt =
                dsp::butterworth_lowpass({ds.frame_rate, seg}, cfg.butter_cutoff_hz,
                                         cfg.butter_order, true);
            for (std::size_t j = 0; j < idx.size(); ++j)
                x(r, static_cast<Eigen::Index>(idx[j])) = filt.values[j];
        }
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            std::vector<double> seg(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j)
                seg[j] = y_raw(r, static_cast<Eigen::Index>(idx[j]));
            const auto filt =
                dsp::savitzky_golay({ds.frame_rate, seg}, cfg.savgol_window_s, cfg.savgol_order);
            for (std::size_t j = 0; j < idx.size(); ++j)
                y(r, static_cast<Eigen::Index>(idx[j])) = filt.values[j];
        }
    }

    JointRunReport rep;
    const auto n_out = static_cast<int>(ds.targets.size());
    std::vector<std::vector<double>> pool_pred(ds.targets.size()), pool_ref(ds.targets.size());
    std::vector<Eigen::MatrixXd> fold_preds, fold_refs;

    for (std::size_t fold = 0; fold < trials.size(); ++fold) {
        const auto& test_idx = trial_idx[fold];
        std::vector<std::size_t> rest;
        for (std::size_t k = 0; k < trials.size(); ++k)
            if (k != fold) rest.insert(rest.end(), trial_idx[k].begin(), trial_idx[k].end());

        const std::uint64_t fold_seed =
            cfg.train.seed + 1000003ull * static_cast<std::uint64_t>(fold + 1);
        std::mt19937_64 rng(fold_seed);
        std::shuffle(rest.begin(), rest.end(), rng);
        auto n_train = static_cast<std::size_t>(
            std::floor(cfg.train_fraction * static_cast<double>(rest.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, rest.size() - 1);
        const std::vector<std::size_t> train_idx(rest.begin(),
                                                 rest.begin() + static_cast<std::ptrdiff_t>(n_train));
        const std::vector<std::size_t> val_idx(rest.begin() + static_cast<std::ptrdiff_t>(n_train),
                                               rest.end());

        mlp::TrainConfig tc = cfg.train;
        tc.seed = fold_seed;
        mlp::MLPModel m = mlp::make_mlp(static_cast<int>(2 * ds.tones),
                                        with_output_layer(cfg.hidden, n_out), fold_seed);
        const Eigen::MatrixXd xtr = gather(x, train_idx);
        m.fit_normalization(xtr);

        FoldReport fr;
        fr.test_trial = trials[fold];
        fr.history = mlp::mlp_train(m, xtr, gather(y, train_idx), gather(x, val_idx),
                                    gather(y, val_idx), tc);

        const Eigen::MatrixXd pred = m.forward(gather(x, test_idx));
        const Eigen::MatrixXd ref = gather(y, test_idx);
        for (Eigen::Index r = 0; r < pred.rows(); ++r) {
            const auto pv = row_vector(pred, r);
            const auto rv = row_vector(ref, r);
            TargetReport tr;
            tr.name = ds.target_names[static_cast<std::size_t>(r)];
            const double range = static_cast<std::size_t>(r) < cfg.ranges_deg.size()
                                     ? cfg.ranges_deg[static_cast<std::size_t>(r)]
                                     : 0.0;
            tr.m = metrics::evaluate(pv, rv, range);
            tr.spearman = metrics::spearman(pv, rv);
            fr.per_joint.push_back(std::move(tr));
            auto& pp = pool_pred[static_cast<std::size_t>(r)];
            auto& pr = pool_ref[static_cast<std::size_t>(r)];
            pp.insert(pp.end(), pv.begin(), pv.end());
            pr.insert(pr.end(), rv.begin(), rv.end());
        }
        for (std::size_t f : test_idx) {
            rep.test_time.push_back(ds.frames[f].t);
            rep.test_trial.push_back(ds.trial[f]);
        }
        fold_preds.push_back(pred);
        fold_refs.push_back(ref);
        rep.folds.push_back(std::move(fr));
        rep.model = std::move(m);
    }

    Eigen::Index total_cols = 0;
    for (const auto& p : fold_preds) total_cols += p.cols();
    rep.predictions.resize(n_out, total_cols);
    rep.references.resize(n_out, total_cols);
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < fold_preds.size(); ++k) {
        rep.predictions.middleCols(at, fold_preds[k].cols()) = fold_preds[k];
        rep.references.middleCols(at, fold_refs[k].cols()) = fold_refs[k];
        at += fold_preds[k].cols();
    }

    std::vector<double> all_pred, all_ref;
    for (std::size_t r = 0; r < pool_pred.size(); ++r) {
        TargetReport tr;
        tr.name = ds.target_names[r];
        const double range = r < cfg.ranges_deg.size() ? cfg.ranges_deg[r] : 0.0;
        tr.m = metrics::evaluate(pool_pred[r], pool_ref[r], range);
        tr.spearman = metrics::spearman(pool_pred[r], pool_ref[r]);
        rep.per_joint.push_back(std::move(tr));
        all_pred.insert(all_pred.end(), pool_pred[r].begin(), pool_pred[r].end());
        all_ref.insert(all_ref.end(), pool_ref[r].begin(), pool_ref[r].end());
    }
    rep.aggregate = metrics::evaluate(all_pred, all_ref);
    return rep;
}

JointEvalReport evaluate_joint_model(const Dataset& ds, const mlp::MLPModel& trained,
                                     const JointRunConfig& cfg, int tag) {
    if (ds.kind != Dataset::Kind::Joint)
        throw std::invalid_argument("joint evaluation: dataset does not hold joint targets");
    const auto trials = ds.distinct_trials();
    if (trials.empty()) throw std::invalid_argument("joint evaluation: empty dataset");
    if (tag < 0) tag = trials.back();
    if (!std::binary_search(trials.begin(), trials.end(), tag))
        throw std::invalid_argument("joint evaluation: trial tag not present");

    std::vector<std::size_t> idx;
    for (std::size_t f = 0; f < ds.frames.size(); ++f)
        if (ds.trial[f] == tag) idx.push_back(f);

    const Eigen::MatrixXd x_raw = gather(ds.inputs(), idx);
    const Eigen::MatrixXd y_raw = gather(ds.target_matrix(), idx);
    Eigen::MatrixXd x(x_raw.rows(), x_raw.cols());
    Eigen::MatrixXd y(y_raw.rows(), y_raw.cols());
    for (Eigen::Index r = 0; r < x_raw.rows(); ++r) {
        const auto filt = dsp::butterworth_lowpass({ds.frame_rate, row_vector(x_raw, r)},
                                                   cfg.butter_cutoff_hz, cfg.butter_order, true);
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            x(r, j) = filt.values[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index r = 0; r < y_raw.rows(); ++r) {
        const auto filt = dsp::savitzky_golay({ds.frame_rate, row_vector(y_raw, r)},
                                              cfg.savgol_window_s, cfg.savgol_order);
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            y(r, j) = filt.values[static_cast<std::size_t>(j)];
    }

    JointEvalReport rep;
    rep.test_trial_tag = tag;
    rep.predictions = trained.forward(x);
    rep.references = y;
    for (std::size_t f : idx) {
        rep.test_time.push_back(ds.frames[f].t);
        rep.test_trial.push_back(ds.trial[f]);
    }

    std::vector<double> all_pred, all_ref;
    for (Eigen::Index r = 0; r < rep.predictions.rows(); ++r) {
        const auto pred = row_vector(rep.predictions, r);
        const auto ref = row_vector(y, r);
        TargetReport tr;
        tr.name = ds.target_names[static_cast<std::size_t>(r)];
        const double range = static_cast<std::size_t>(r) < cfg.ranges_deg.size()
                                 ? cfg.ranges_deg[static_cast<std::size_t>(r)]
                                 : 0.0;
        tr.m = metrics::evaluate(pred, ref, range);
        tr.spearman = metrics::spearman(pred, ref);
        rep.per_joint.push_back(std::move(tr));
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_ref.insert(all_ref.end(), ref.begin(), ref.end());
    }
    rep.aggregate = metrics::evaluate(all_pred, all_ref);
    return rep;
}

} // namespace fibresense::harness
