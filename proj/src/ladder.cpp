#include "fibresense/ladder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace fibresense {

void SegmentSpec::validate() const {
    auto fail = [this](const std::string& what) {
        throw std::invalid_argument("segment '" + label + "': " + what);
    };
    if (!(length0 > 0)) fail("length0 must be > 0");
    if (!(r0 > 0)) fail("r0 must be > 0");
    if (!(c0 > 0)) fail("c0 must be > 0");
    if (!(max_strain > 0) || max_strain > 1) fail("max_strain must lie in (0, 1]");
    if (gf_c < 0) fail("gf_c must be >= 0");
    if (gf_r < 0) fail("gf_r must be >= 0");
    if (joint_r < 0) fail("joint_r must be >= 0");
}

LadderModel::LadderModel(std::vector<SegmentSpec> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw std::invalid_argument("ladder model needs at least 1 segment");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (segments_[i].label.empty()) segments_[i].label = "seg" + std::to_string(i + 1);
        segments_[i].validate();
    }
}

std::size_t LadderModel::index_of(std::string_view label) const {
    std::size_t found = segments_.size();
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (segments_[i].label == label) {
            if (found != segments_.size())
                throw std::invalid_argument("ambiguous segment label: " + std::string(label));
            found = i;
        }
    }
    if (found == segments_.size())
        throw std::invalid_argument("unknown segment label: " + std::string(label));
    return found;
}

LadderModel LadderModel::from_config(const config::ConfigFile& cfg) {
    auto sections = cfg.all("segment");
    if (sections.empty())
        throw config::ConfigError(cfg.source.string() + ": no [segment] sections");
    std::vector<SegmentSpec> segs;
    segs.reserve(sections.size());
    for (const auto* sec : sections) {
        SegmentSpec s; // omitted keys keep the bench-segment defaults
        s.label = sec->get_string("label", s.label);
        s.length0 = sec->get_value("length0", s.length0);
        s.r0 = sec->get_value("r0", s.r0);
        s.c0 = sec->get_value("c0", s.c0);
        s.gf_c = sec->get_value("gf_c", s.gf_c);
        s.gf_r = sec->get_value("gf_r", s.gf_r);
        s.max_strain = sec->get_value("max_strain", s.max_strain);
        s.joint_r = sec->get_value("joint_r", s.joint_r);
        segs.push_back(std::move(s));
    }
    try {
        return LadderModel(std::move(segs));
    } catch (const std::invalid_argument& e) {
        throw config::ConfigError(cfg.source.string() + ": " + e.what());
    }
}

RCParams params_at_strain(const SegmentSpec& seg, double eps) {
    if (!(eps >= 0.0) || eps > seg.max_strain)
        throw std::domain_error("strain " + std::to_string(eps) + " out of [0, " +
                                std::to_string(seg.max_strain) + "] for segment '" + seg.label +
                                "'");
    return RCParams{seg.r0 * (1.0 + eps * seg.gf_r), seg.c0 * (1.0 + eps * seg.gf_c)};
}

Impedance ladder_impedance_rc(std::span<const double> r, std::span<const double> c,
                              double omega) {
    if (r.empty() || r.size() != c.size())
        throw std::invalid_argument("ladder stage vectors must be non-empty and equal length");
    if (!(omega > 0)) throw std::invalid_argument("omega must be > 0");

    const std::size_t n = r.size();
    Impedance z = r[n - 1] + 1.0 / (Impedance(0.0, omega * c[n - 1]));
    for (std::size_t i = n - 1; i-- > 0;)
        z = r[i] + 1.0 / (Impedance(0.0, omega * c[i]) + 1.0 / z);
    return z;
}

Impedance ladder_impedance(const LadderModel& model, std::span<const double> strains,
                           double omega) {
    if (strains.size() != model.size())
        throw std::invalid_argument("strain vector length does not match segment count");
    const std::size_t n = model.size();
    std::vector<double> r(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
        RCParams p = params_at_strain(model.segment(i), strains[i]);
        r[i] = p.r + model.segment(i).joint_r;
        c[i] = p.c;
    }
    return ladder_impedance_rc(r, c, omega);
}

double parallel_capacitance(Impedance z, double omega) {
    if (!(omega > 0)) throw std::invalid_argument("omega must be > 0");
    if (std::abs(z) == 0.0) throw std::domain_error("zero impedance has no parallel model");
    return (1.0 / z).imag() / omega;
}

std::vector<SweepPoint> frequency_sweep(const LadderModel& model,
                                        std::span<const double> strains,
                                        std::span<const double> freq_hz) {
    if (freq_hz.empty()) throw std::invalid_argument("frequency grid is empty");
    double prev = 0.0;
    for (double f : freq_hz) {
        if (!(f > 0)) throw std::invalid_argument("frequencies must be > 0");
        if (f <= prev) throw std::invalid_argument("frequency grid must be strictly ascending");
        prev = f;
    }
    std::vector<SweepPoint> out;
    out.reserve(freq_hz.size());
    for (double f : freq_hz) {
        double omega = 2.0 * M_PI * f;
        Impedance z = ladder_impedance(model, strains, omega);
        out.push_back({f, z, parallel_capacitance(z, omega)});
    }
    return out;
}

double discrimination_score(const LadderModel& model, std::span<const double> candidate_freqs_hz,
                            double probe_strain) {
    if (candidate_freqs_hz.empty()) throw std::invalid_argument("candidate frequency list empty");
    std::set<double> unique(candidate_freqs_hz.begin(), candidate_freqs_hz.end());
    std::vector<double> freqs(unique.begin(), unique.end());

    const std::size_t n = model.size();
    if (n < 2) return 0.0;

    StrainVector rest(n, 0.0);
    std::vector<double> cp_rest(freqs.size());
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        double omega = 2.0 * M_PI * freqs[k];
        cp_rest[k] = parallel_capacitance(ladder_impedance(model, rest, omega), omega);
    }

    // One unit-normalized delta-Cp shape vector per segment.
    std::vector<std::vector<double>> shapes(n, std::vector<double>(freqs.size()));
    for (std::size_t s = 0; s < n; ++s) {
        StrainVector eps(n, 0.0);
        eps[s] = std::min(probe_strain, model.segment(s).max_strain);
        double norm2 = 0.0;
        for (std::size_t k = 0; k < freqs.size(); ++k) {
            double omega = 2.0 * M_PI * freqs[k];
            double d = parallel_capacitance(ladder_impedance(model, eps, omega), omega) -
                       cp_rest[k];
            shapes[s][k] = d;
            norm2 += d * d;
        }
        double norm = std::sqrt(norm2);
        if (norm > 0)
            for (double& v : shapes[s]) v /= norm;
    }

    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < freqs.size(); ++k) {
                double d = shapes[a][k] - shapes[b][k];
                d2 += d * d;
            }
            min_sep = std::min(min_sep, std::sqrt(d2));
        }
    }
    return min_sep;
}

} // namespace fibresense
