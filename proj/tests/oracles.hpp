#pragma once

#include "fibresense/mlp.hpp"

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <utility>
#include <vector>

// Independent reference implementations the tests compare the library against.
// Each one deliberately uses a different algorithm than the production code.
namespace oracle {

/// Input impedance of a series-R / shunt-C ladder by full nodal analysis:
/// assemble the complex admittance matrix over all nodes, drive the input node
/// with a unit current source, and solve for the input node voltage.
std::complex<double> nodal_ladder_impedance(std::span<const double> r, std::span<const double> c,
                                            double omega);

/// Coherent single-bin correlation of a sampled record against sin/cos at f:
/// returns {(2/N) sum v sin, (2/N) sum v cos} with phases built from running
/// time, not modular block indices.
std::pair<double, double> single_bin_correlation(std::span<const double> v, double fs, double f);

/// Layer-by-layer scalar forward pass with explicit loops, no matrix products.
std::vector<double> scalar_mlp_forward(const fibresense::mlp::MLPModel& m,
                                       std::span<const double> x);

/// Central finite-difference gradient of mlp_loss with respect to every weight
/// and bias element.
fibresense::mlp::Gradients fd_loss_gradients(const fibresense::mlp::MLPModel& m,
                                             const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                             double h);

/// Centered moving median by copying and sorting each truncated window.
std::vector<double> reference_moving_median(std::span<const double> x, int window);

} // namespace oracle
