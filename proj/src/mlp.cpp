#include "fibresense/mlp.hpp"

#include "fibresense/csv.hpp"
#include "fibresense/units.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fibresense::mlp {

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "linear") return Activation::Linear;
    throw std::invalid_argument("mlp: unknown activation '" + std::string(name) + "'");
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Linear: return "linear";
    }
    throw std::invalid_argument("mlp: bad activation value");
}

namespace {

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
    switch (act) {
        case Activation::Tanh: return z.array().tanh();
        case Activation::Relu: return z.array().max(0.0);
        case Activation::Linear: return z;
    }
    throw std::invalid_argument("mlp: bad activation value");
}

// Derivative expressed through the activation output a = f(z).
Eigen::ArrayXXd activation_slope(Activation act, const Eigen::MatrixXd& a) {
    switch (act) {
        case Activation::Tanh: return 1.0 - a.array().square();
        case Activation::Relu: return (a.array() > 0.0).cast<double>();
        case Activation::Linear: return Eigen::ArrayXXd::Ones(a.rows(), a.cols());
    }
    throw std::invalid_argument("mlp: bad activation value");
}

void check_input(const MLPModel& m, const Eigen::MatrixXd& x) {
    if (m.w.empty()) throw std::invalid_argument("mlp: empty model");
    if (x.rows() != m.input_dim())
        throw std::invalid_argument("mlp: input has " + std::to_string(x.rows()) +
                                    " features, model expects " + std::to_string(m.input_dim()));
}

Eigen::MatrixXd normalize(const MLPModel& m, const Eigen::MatrixXd& x) {
    return ((x.colwise() - m.norm_mean).array().colwise() / m.norm_std.array()).matrix();
}

} // namespace

Eigen::MatrixXd MLPModel::forward(const Eigen::MatrixXd& x) const {
    check_input(*this, x);
    Eigen::MatrixXd a = normalize(*this, x);
    for (std::size_t l = 0; l < w.size(); ++l)
        a = apply_activation(act[l], (w[l] * a).colwise() + b[l]);
    return a;
}

Eigen::VectorXd MLPModel::forward(const Eigen::VectorXd& x) const {
    return forward(Eigen::MatrixXd(x)).col(0);
}

void MLPModel::fit_normalization(const Eigen::MatrixXd& x) {
    check_input(*this, x);
    if (x.cols() < 1) throw std::invalid_argument("mlp: normalization needs at least one sample");
    norm_mean = x.rowwise().mean();
    Eigen::MatrixXd centered = x.colwise() - norm_mean;
    norm_std = (centered.array().square().rowwise().mean()).sqrt();
    for (Eigen::Index i = 0; i < norm_std.size(); ++i)
        if (norm_std(i) <= 0) norm_std(i) = 1.0;
}

double MLPModel::penalty() const {
    double p = 0;
    for (std::size_t l = 0; l < w.size(); ++l) {
        if (l1[l] > 0) p += l1[l] * w[l].array().abs().sum();
        if (l2[l] > 0) p += l2[l] * w[l].array().square().sum();
    }
    return p;
}

MLPModel make_mlp(int input_dim, std::span<const LayerSpec> layer_specs, std::uint64_t seed) {
    if (input_dim < 1) throw std::invalid_argument("mlp: input_dim must be >= 1");
    if (layer_specs.empty()) throw std::invalid_argument("mlp: at least one layer required");

    MLPModel m;
    std::mt19937_64 rng(seed);
    int fan_in = input_dim;
    for (const LayerSpec& spec : layer_specs) {
        if (spec.units < 1) throw std::invalid_argument("mlp: layer units must be >= 1");
        if (spec.l1 < 0 || spec.l2 < 0) throw std::invalid_argument("mlp: penalties must be >= 0");
        const double lim = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> uni(-lim, lim);
        Eigen::MatrixXd wl(spec.units, fan_in);
        for (Eigen::Index j = 0; j < wl.cols(); ++j)
            for (Eigen::Index i = 0; i < wl.rows(); ++i) wl(i, j) = uni(rng);
        m.w.push_back(std::move(wl));
        m.b.push_back(Eigen::VectorXd::Zero(spec.units));
        m.act.push_back(spec.act);
        m.l1.push_back(spec.l1);
        m.l2.push_back(spec.l2);
        fan_in = spec.units;
    }
    m.norm_mean = Eigen::VectorXd::Zero(input_dim);
    m.norm_std = Eigen::VectorXd::Ones(input_dim);
    return m;
}

double mlp_loss(const MLPModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (y.rows() != m.output_dim() || y.cols() != x.cols())
        throw std::invalid_argument("mlp: target shape does not match model output");
    const Eigen::MatrixXd pred = m.forward(x);
    const double denom = static_cast<double>(y.size());
    return (pred - y).squaredNorm() / denom + m.penalty();
}

Gradients mlp_gradients(const MLPModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    check_input(m, x);
    if (y.rows() != m.output_dim() || y.cols() != x.cols())
        throw std::invalid_argument("mlp: target shape does not match model output");

    const std::size_t depth = m.w.size();
    std::vector<Eigen::MatrixXd> acts(depth + 1);
    acts[0] = normalize(m, x);
    for (std::size_t l = 0; l < depth; ++l)
        acts[l + 1] = apply_activation(m.act[l], (m.w[l] * acts[l]).colwise() + m.b[l]);

    Gradients g;
    g.dw.resize(depth);
    g.db.resize(depth);
    const double denom = static_cast<double>(y.size());
    Eigen::MatrixXd delta =
        ((acts[depth] - y).array() * activation_slope(m.act[depth - 1], acts[depth])).matrix() *
        (2.0 / denom);
    for (std::size_t l = depth; l-- > 0;) {
        g.dw[l] = delta * acts[l].transpose();
        if (m.l1[l] > 0) g.dw[l].array() += m.l1[l] * m.w[l].array().sign();
        if (m.l2[l] > 0) g.dw[l] += 2.0 * m.l2[l] * m.w[l];
        g.db[l] = delta.rowwise().sum();
        if (l > 0)
            delta = ((m.w[l].transpose() * delta).array() * activation_slope(m.act[l - 1], acts[l]))
                        .matrix();
    }
    return g;
}

TrainConfig TrainConfig::from_config(const config::Section& s) {
    TrainConfig cfg;
    cfg.batch_size = static_cast<int>(s.get_int("batch_size", cfg.batch_size));
    const std::string opt = s.get_string("optimizer", "adagrad");
    if (opt == "adagrad") cfg.optimizer = Optimizer::Adagrad;
    else if (opt == "adam") cfg.optimizer = Optimizer::Adam;
    else throw config::ConfigError("train: unknown optimizer '" + opt + "'");
    cfg.learning_rate = s.get_value("learning_rate", cfg.learning_rate);
    cfg.patience = static_cast<int>(s.get_int("patience", cfg.patience));
    cfg.max_epochs = static_cast<int>(s.get_int("max_epochs", cfg.max_epochs));
    if (s.has("val_weights")) cfg.val_weights = s.get_list("val_weights");
    cfg.seed = s.get_seed("seed", cfg.seed);
    return cfg;
}

namespace {

struct OptimizerState {
    std::vector<Eigen::ArrayXXd> acc_w;  // adagrad accumulator / adam second moment
    std::vector<Eigen::ArrayXd> acc_b;
    std::vector<Eigen::ArrayXXd> m_w;    // adam first moment
    std::vector<Eigen::ArrayXd> m_b;
    long long t = 0;
};

void apply_update(MLPModel& m, const Gradients& g, const TrainConfig& cfg, OptimizerState& st) {
    constexpr double eps = 1e-8;
    ++st.t;
    for (std::size_t l = 0; l < m.w.size(); ++l) {
        if (cfg.optimizer == Optimizer::Adagrad) {
            st.acc_w[l] += g.dw[l].array().square();
            st.acc_b[l] += g.db[l].array().square();
            m.w[l].array() -= cfg.learning_rate * g.dw[l].array() / (st.acc_w[l].sqrt() + eps);
            m.b[l].array() -= cfg.learning_rate * g.db[l].array() / (st.acc_b[l].sqrt() + eps);
        } else {
            constexpr double b1 = 0.9, b2 = 0.999;
            st.m_w[l] = b1 * st.m_w[l] + (1 - b1) * g.dw[l].array();
            st.m_b[l] = b1 * st.m_b[l] + (1 - b1) * g.db[l].array();
            st.acc_w[l] = b2 * st.acc_w[l] + (1 - b2) * g.dw[l].array().square();
            st.acc_b[l] = b2 * st.acc_b[l] + (1 - b2) * g.db[l].array().square();
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
            m.w[l].array() -=
                cfg.learning_rate * (st.m_w[l] / c1) / ((st.acc_w[l] / c2).sqrt() + eps);
            m.b[l].array() -=
                cfg.learning_rate * (st.m_b[l] / c1) / ((st.acc_b[l] / c2).sqrt() + eps);
        }
    }
}

double weighted_val_mse(const MLPModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        const Eigen::VectorXd& weights) {
    const Eigen::MatrixXd err = m.forward(x) - y;
    const Eigen::VectorXd per_output = err.array().square().rowwise().mean();
    return weights.dot(per_output);
}

} // namespace

TrainHistory mlp_train(MLPModel& m, const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                       const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                       const TrainConfig& cfg) {
    check_input(m, x_train);
    if (x_train.cols() < 1) throw std::invalid_argument("mlp_train: empty training set");
    if (x_val.cols() < 1) throw std::invalid_argument("mlp_train: empty validation set");
    if (y_train.rows() != m.output_dim() || y_train.cols() != x_train.cols() ||
        x_val.rows() != m.input_dim() || y_val.rows() != m.output_dim() ||
        y_val.cols() != x_val.cols())
        throw std::invalid_argument("mlp_train: shape mismatch");
    if (cfg.batch_size < 1 || cfg.patience < 1 || cfg.max_epochs < 1 || cfg.learning_rate <= 0)
        throw std::invalid_argument("mlp_train: bad training configuration");

    Eigen::VectorXd weights;
    if (cfg.val_weights.empty()) {
        weights = Eigen::VectorXd::Constant(m.output_dim(), 1.0 / static_cast<double>(m.output_dim()));
    } else {
        if (static_cast<Eigen::Index>(cfg.val_weights.size()) != m.output_dim())
            throw std::invalid_argument("mlp_train: val_weights size does not match outputs");
        weights = Eigen::Map<const Eigen::VectorXd>(cfg.val_weights.data(),
                                                    static_cast<Eigen::Index>(cfg.val_weights.size()));
        if (weights.minCoeff() < 0 || weights.sum() <= 0)
            throw std::invalid_argument("mlp_train: val_weights must be non-negative with positive sum");
        weights /= weights.sum();
    }

    OptimizerState st;
    for (std::size_t l = 0; l < m.w.size(); ++l) {
        st.acc_w.push_back(Eigen::ArrayXXd::Zero(m.w[l].rows(), m.w[l].cols()));
        st.acc_b.push_back(Eigen::ArrayXd::Zero(m.b[l].rows()));
        st.m_w.push_back(Eigen::ArrayXXd::Zero(m.w[l].rows(), m.w[l].cols()));
        st.m_b.push_back(Eigen::ArrayXd::Zero(m.b[l].rows()));
    }

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(x_train.cols()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainHistory hist;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Eigen::MatrixXd> best_w = m.w;
    std::vector<Eigen::VectorXd> best_b = m.b;
    int since_best = 0;

    Eigen::MatrixXd xb, yb;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(cfg.batch_size, order.size() - start);
            xb.resize(x_train.rows(), static_cast<Eigen::Index>(count));
            yb.resize(y_train.rows(), static_cast<Eigen::Index>(count));
            for (std::size_t j = 0; j < count; ++j) {
                xb.col(static_cast<Eigen::Index>(j)) = x_train.col(order[start + j]);
                yb.col(static_cast<Eigen::Index>(j)) = y_train.col(order[start + j]);
            }
            apply_update(m, mlp_gradients(m, xb, yb), cfg, st);
        }

        const double train_loss = mlp_loss(m, x_train, y_train);
        const double val = weighted_val_mse(m, x_val, y_val, weights);
        if (!std::isfinite(train_loss) || !std::isfinite(val))
            throw std::runtime_error("mlp_train: loss became non-finite (training diverged)");
        hist.train_loss.push_back(train_loss);
        hist.val_metric.push_back(val);

        if (val < best_val) {
            best_val = val;
            best_w = m.w;
            best_b = m.b;
            hist.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            hist.early_stopped = true;
            break;
        }
    }

    m.w = std::move(best_w);
    m.b = std::move(best_b);
    return hist;
}

void MLPModel::save(const std::filesystem::path& path) const {
    std::ostringstream out;
    out << "[network]\n";
    out << "inputs = " << input_dim() << "\n";
    out << "layers = " << layers() << "\n\n";

    auto write_list = [&out](std::string_view key, const double* data, Eigen::Index n) {
        out << key << " = ";
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i) out << ", ";
            out << units::format_double(data[i]);
        }
        out << "\n";
    };

    out << "[normalization]\n";
    write_list("mean", norm_mean.data(), norm_mean.size());
    write_list("std", norm_std.data(), norm_std.size());
    out << "\n";

    for (std::size_t l = 0; l < w.size(); ++l) {
        out << "[layer]\n";
        out << "units = " << w[l].rows() << "\n";
        out << "activation = " << to_string(act[l]) << "\n";
        out << "l1 = " << units::format_double(l1[l]) << "\n";
        out << "l2 = " << units::format_double(l2[l]) << "\n";
        // row-major flatten keeps each output unit's weights contiguous
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr = w[l];
        write_list("weights", wr.data(), wr.size());
        write_list("bias", b[l].data(), b[l].size());
        out << "\n";
    }
    io::write_file_atomic(path, out.str());
}

MLPModel MLPModel::load(const std::filesystem::path& path) {
    const auto cfg = config::ConfigFile::load(path);
    const auto& net = cfg.require("network");
    const auto input_dim = static_cast<Eigen::Index>(net.get_int("inputs"));
    const auto n_layers = static_cast<std::size_t>(net.get_int("layers"));
    if (input_dim < 1) throw config::ConfigError("mlp load: bad input dimension");

    MLPModel m;
    const auto& norm = cfg.require("normalization");
    const auto mean = norm.get_list("mean");
    const auto stdev = norm.get_list("std");
    if (static_cast<Eigen::Index>(mean.size()) != input_dim || stdev.size() != mean.size())
        throw config::ConfigError("mlp load: normalization size does not match inputs");
    m.norm_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), input_dim);
    m.norm_std = Eigen::Map<const Eigen::VectorXd>(stdev.data(), input_dim);

    const auto layer_sections = cfg.all("layer");
    if (layer_sections.size() != n_layers)
        throw config::ConfigError("mlp load: layer count does not match header");

    Eigen::Index fan_in = input_dim;
    for (const auto* s : layer_sections) {
        const auto units = static_cast<Eigen::Index>(s->get_int("units"));
        if (units < 1) throw config::ConfigError("mlp load: bad layer size");
        const auto weights = s->get_list("weights");
        const auto bias = s->get_list("bias");
        if (static_cast<Eigen::Index>(weights.size()) != units * fan_in)
            throw config::ConfigError("mlp load: weight count does not chain with previous layer");
        if (static_cast<Eigen::Index>(bias.size()) != units)
            throw config::ConfigError("mlp load: bias count does not match layer size");
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr(units, fan_in);
        std::copy(weights.begin(), weights.end(), wr.data());
        m.w.emplace_back(wr);
        m.b.emplace_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), units));
        m.act.push_back(activation_from_string(s->get_string("activation")));
        m.l1.push_back(s->get_value("l1", 0));
        m.l2.push_back(s->get_value("l2", 0));
        fan_in = units;
    }
    if (m.w.empty()) throw config::ConfigError("mlp load: no layers");
    return m;
}

} // namespace fibresense::mlp
