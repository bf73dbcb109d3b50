#pragma once

#include "fibresense/config.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fibresense::mlp {

enum class Activation { Tanh, Relu, Linear };

Activation activation_from_string(std::string_view name);
std::string to_string(Activation act);

/// One dense layer: unit count, nonlinearity, and weight penalties applied to
/// this layer's weight matrix (biases are never penalized).
struct LayerSpec {
    int units = 0;
    Activation act = Activation::Relu;
    double l1 = 0;
    double l2 = 0;
};

/// Fully connected network. Weight matrices are (units_out x units_in) and data
/// matrices hold one sample per column. Inputs are standardized with the stored
/// per-feature mean/std before the first layer.
struct MLPModel {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    std::vector<Activation> act; // per layer
    std::vector<double> l1, l2;  // per layer, applied to w
    Eigen::VectorXd norm_mean, norm_std;

    [[nodiscard]] Eigen::Index input_dim() const { return w.empty() ? 0 : w.front().cols(); }
    [[nodiscard]] Eigen::Index output_dim() const { return w.empty() ? 0 : w.back().rows(); }
    [[nodiscard]] std::size_t layers() const { return w.size(); }

    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

    /// Fit the input standardization to a training matrix (zero-variance
    /// features keep std 1 so they pass through centered).
    void fit_normalization(const Eigen::MatrixXd& x);

    /// Sum of the configured weight penalties, lambda1*sum|w| + lambda2*sum w^2.
    [[nodiscard]] double penalty() const;

    void save(const std::filesystem::path& path) const;
    static MLPModel load(const std::filesystem::path& path);
};

/// Uniform He-style initialization U(+-sqrt(1/fan_in)), deterministic in seed.
MLPModel make_mlp(int input_dim, std::span<const LayerSpec> layer_specs, std::uint64_t seed);

/// Mean squared error over every output element plus weight penalties.
double mlp_loss(const MLPModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct Gradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
};

/// Analytic gradients of mlp_loss with respect to every weight and bias.
Gradients mlp_gradients(const MLPModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

enum class Optimizer { Adagrad, Adam };

struct TrainConfig {
    int batch_size = 256;
    Optimizer optimizer = Optimizer::Adagrad;
    double learning_rate = 0.1;
    int patience = 50;     // epochs without validation improvement before stopping
    int max_epochs = 400;
    std::vector<double> val_weights; // per-output early-stop weights; empty = uniform
    std::uint64_t seed = 0;          // shuffle stream

    static TrainConfig from_config(const config::Section& s);
};

struct TrainHistory {
    std::vector<double> train_loss; // full training loss after each epoch
    std::vector<double> val_metric; // weighted validation MSE (data term only)
    int best_epoch = -1;            // 0-based epoch of the restored parameters
    bool early_stopped = false;
};

/// Mini-batch training with reshuffled epochs and early stopping on the
/// weighted validation MSE; parameters are restored to the best epoch.
/// Throws std::runtime_error if the loss turns non-finite.
TrainHistory mlp_train(MLPModel& m, const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                       const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                       const TrainConfig& cfg);

} // namespace fibresense::mlp
