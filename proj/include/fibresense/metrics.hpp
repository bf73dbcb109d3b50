#pragma once

#include <span>

namespace fibresense::metrics {

/// Error summary between a prediction and a reference series of equal length.
/// r2_defined is false (and r2 NaN) when the reference has zero variance;
/// nrmse is NaN unless a positive range is supplied.
struct Metrics {
    double rmse = 0;
    double nrmse = 0;
    double r2 = 0;
    bool r2_defined = true;
};

Metrics evaluate(std::span<const double> pred, std::span<const double> ref, double range = 0);

/// Spearman rank correlation: Pearson correlation of average ranks (ties share
/// their mean rank). NaN when either side has zero rank variance. Requires at
/// least two samples.
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace fibresense::metrics
