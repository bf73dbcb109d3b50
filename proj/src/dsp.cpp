#include "fibresense/dsp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace fibresense::dsp {

namespace {

void check_series(const TimeSeries& x, const char* what) {
    if (x.rate <= 0)
        throw std::invalid_argument(std::string(what) + ": sample rate must be positive");
    if (x.values.empty())
        throw std::invalid_argument(std::string(what) + ": empty series");
}

std::size_t odd_window(double window_s, double rate, const char* what) {
    if (window_s <= 0)
        throw std::invalid_argument(std::string(what) + ": window must be positive");
    auto w = static_cast<std::size_t>(std::ceil(window_s * rate));
    if (w == 0) w = 1;
    if (w % 2 == 0) ++w;
    return w;
}

double median_of_sorted(const std::vector<double>& s) {
    const std::size_t m = s.size();
    if (m % 2 == 1) return s[m / 2];
    return 0.5 * (s[m / 2 - 1] + s[m / 2]);
}

// One pass of a biquad cascade, direct form II transposed. zi holds two state
// values per section and is scaled by the first input sample so a constant
// input produces a constant output from sample zero.
std::vector<double> sosfilt(const std::vector<Biquad>& sections, std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    for (const Biquad& s : sections) {
        const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        double z1 = (gain - s.b0) * y.front();
        double z2 = (s.b2 - s.a2 * gain) * y.front();
        for (double& v : y) {
            const double in = v;
            v = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * v + z2;
            z2 = s.b2 * in - s.a2 * v;
        }
    }
    return y;
}

} // namespace

std::vector<double> moving_median(std::span<const double> x, std::size_t window) {
    if (x.empty()) throw std::invalid_argument("moving_median: empty series");
    if (window == 0 || window % 2 == 0)
        throw std::invalid_argument("moving_median: window must be odd and positive");
    const std::size_t n = x.size();
    const std::size_t hw = window / 2;

    std::vector<double> sorted;
    sorted.reserve(window);
    const std::size_t first_hi = std::min(hw, n - 1);
    for (std::size_t j = 0; j <= first_hi; ++j)
        sorted.insert(std::lower_bound(sorted.begin(), sorted.end(), x[j]), x[j]);

    std::vector<double> out(n);
    std::size_t lo = 0, hi = first_hi;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            const std::size_t new_lo = i > hw ? i - hw : 0;
            const std::size_t new_hi = std::min(i + hw, n - 1);
            if (new_hi > hi)
                sorted.insert(std::lower_bound(sorted.begin(), sorted.end(), x[new_hi]), x[new_hi]);
            if (new_lo > lo)
                sorted.erase(std::lower_bound(sorted.begin(), sorted.end(), x[lo]));
            lo = new_lo;
            hi = new_hi;
        }
        out[i] = median_of_sorted(sorted);
    }
    return out;
}

TimeSeries moving_median(const TimeSeries& x, double window_s) {
    check_series(x, "moving_median");
    const std::size_t w = odd_window(window_s, x.rate, "moving_median");
    return {x.rate, moving_median(std::span<const double>(x.values), w)};
}

std::vector<Biquad> butterworth_sections(double cutoff_hz, double rate, int order) {
    if (rate <= 0) throw std::invalid_argument("butterworth: sample rate must be positive");
    if (order < 1) throw std::invalid_argument("butterworth: order must be >= 1");
    if (cutoff_hz <= 0 || cutoff_hz >= rate / 2)
        throw std::invalid_argument("butterworth: cutoff must lie in (0, rate/2)");

    // Analog prototype poles on the unit circle, prewarped so the bilinear
    // transform s = (1 - z^-1)/(1 + z^-1) lands the -3 dB point on cutoff_hz.
    const double wa = std::tan(std::numbers::pi * cutoff_hz / rate);
    std::vector<Biquad> sections;
    for (int k = 1; 2 * k <= order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + order - 1.0) / (2.0 * order);
        const double re = wa * std::cos(theta);
        const double mag2 = wa * wa;
        const double a0 = 1.0 - 2.0 * re + mag2;
        sections.push_back({mag2 / a0, 2.0 * mag2 / a0, mag2 / a0,
                            2.0 * (mag2 - 1.0) / a0, (1.0 + 2.0 * re + mag2) / a0});
    }
    if (order % 2 == 1) {
        const double a0 = 1.0 + wa;
        sections.push_back({wa / a0, wa / a0, 0.0, (wa - 1.0) / a0, 0.0});
    }
    return sections;
}

TimeSeries butterworth_lowpass(const TimeSeries& x, double cutoff_hz, int order, bool zero_phase) {
    check_series(x, "butterworth_lowpass");
    const auto sections = butterworth_sections(cutoff_hz, x.rate, order);
    if (!zero_phase) return {x.rate, sosfilt(sections, x.values)};

    // Odd-reflection padding keeps local trends continuous across the ends.
    const std::size_t n = x.values.size();
    const std::size_t want = std::max<std::size_t>(15, static_cast<std::size_t>(std::ceil(3.0 * x.rate / cutoff_hz)));
    const std::size_t pad = std::min(n - 1, want);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t j = pad; j >= 1; --j) ext.push_back(2.0 * x.values.front() - x.values[j]);
    ext.insert(ext.end(), x.values.begin(), x.values.end());
    for (std::size_t j = 1; j <= pad; ++j) ext.push_back(2.0 * x.values.back() - x.values[n - 1 - j]);

    std::vector<double> y = sosfilt(sections, ext);
    std::reverse(y.begin(), y.end());
    y = sosfilt(sections, y);
    std::reverse(y.begin(), y.end());

    return {x.rate, std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(pad),
                                        y.begin() + static_cast<std::ptrdiff_t>(pad + n))};
}

std::vector<double> savitzky_golay_kernel(std::size_t window, int poly_order) {
    if (window == 0 || window % 2 == 0)
        throw std::invalid_argument("savitzky_golay: window must be odd and positive");
    if (poly_order < 0 || static_cast<std::size_t>(poly_order) >= window)
        throw std::invalid_argument("savitzky_golay: window must exceed polynomial order");

    // Least-squares fit of a degree-p polynomial over the window, evaluated at
    // the center: h = A (A^T A)^{-1} e0 with Vandermonde A on normalized offsets.
    const auto hw = static_cast<std::ptrdiff_t>(window / 2);
    const double scale = hw > 0 ? static_cast<double>(hw) : 1.0;
    Eigen::MatrixXd a(window, poly_order + 1);
    for (std::ptrdiff_t j = -hw; j <= hw; ++j) {
        double t = 1.0;
        for (int p = 0; p <= poly_order; ++p) {
            a(j + hw, p) = t;
            t *= static_cast<double>(j) / scale;
        }
    }
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(poly_order + 1);
    e0(0) = 1.0;
    Eigen::VectorXd h = a * (a.transpose() * a).ldlt().solve(e0);
    return {h.data(), h.data() + h.size()};
}

TimeSeries savitzky_golay(const TimeSeries& x, double window_s, int poly_order) {
    check_series(x, "savitzky_golay");
    const std::size_t w = odd_window(window_s, x.rate, "savitzky_golay");
    const auto kernel = savitzky_golay_kernel(w, poly_order);

    const auto n = static_cast<std::ptrdiff_t>(x.values.size());
    const auto hw = static_cast<std::ptrdiff_t>(w / 2);
    TimeSeries out{x.rate, std::vector<double>(x.values.size())};
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0;
        for (std::ptrdiff_t j = -hw; j <= hw; ++j) {
            std::ptrdiff_t idx = i + j;
            if (idx < 0) idx = -idx;                        // mirror reflection,
            if (idx >= n) idx = 2 * (n - 1) - idx;          // edge sample not repeated
            idx = std::clamp<std::ptrdiff_t>(idx, 0, n - 1);
            acc += kernel[static_cast<std::size_t>(j + hw)] * x.values[static_cast<std::size_t>(idx)];
        }
        out.values[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

} // namespace fibresense::dsp
