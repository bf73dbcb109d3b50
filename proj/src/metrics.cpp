#include "fibresense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fibresense::metrics {

Metrics evaluate(std::span<const double> pred, std::span<const double> ref, double range) {
    if (pred.size() != ref.size())
        throw std::invalid_argument("metrics: prediction and reference lengths differ");
    if (pred.empty()) throw std::invalid_argument("metrics: empty series");

    const auto n = static_cast<double>(ref.size());
    double ref_mean = 0;
    for (double r : ref) ref_mean += r;
    ref_mean /= n;

    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double e = pred[i] - ref[i];
        ss_res += e * e;
        const double d = ref[i] - ref_mean;
        ss_tot += d * d;
    }

    Metrics m;
    m.rmse = std::sqrt(ss_res / n);
    m.nrmse = range > 0 ? m.rmse / range : std::numeric_limits<double>::quiet_NaN();
    if (ss_tot > 0) {
        m.r2 = 1.0 - ss_res / ss_tot;
    } else {
        m.r2 = std::numeric_limits<double>::quiet_NaN();
        m.r2_defined = false;
    }
    return m;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0; // mean of 1-based ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: lengths differ");
    if (a.size() < 2) throw std::invalid_argument("spearman: need at least two samples");

    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const auto n = static_cast<double>(ra.size());
    const double mean = (n + 1.0) / 2.0;

    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0 || vb <= 0) return std::numeric_limits<double>::quiet_NaN();
    return cov / std::sqrt(va * vb);
}

} // namespace fibresense::metrics
