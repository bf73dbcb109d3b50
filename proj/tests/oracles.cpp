#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

std::complex<double> nodal_ladder_impedance(std::span<const double> r, std::span<const double> c,
                                            double omega) {
    const auto n = static_cast<Eigen::Index>(r.size());
    if (n == 0 || c.size() != r.size()) throw std::invalid_argument("oracle: bad ladder arrays");

    // Nodes 0..n; resistor r[i] joins node i to i+1, capacitor c[i] shunts
    // node i+1 to ground. A 1 A source drives node 0, so Z_in = V_0.
    const std::complex<double> j(0.0, 1.0);
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n + 1, n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::complex<double> g = 1.0 / r[static_cast<std::size_t>(i)];
        y(i, i) += g;
        y(i + 1, i + 1) += g;
        y(i, i + 1) -= g;
        y(i + 1, i) -= g;
        y(i + 1, i + 1) += j * omega * c[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n + 1);
    rhs(0) = 1.0;
    const Eigen::VectorXcd v = y.fullPivLu().solve(rhs);
    return v(0);
}

std::pair<double, double> single_bin_correlation(std::span<const double> v, double fs, double f) {
    long double s = 0, c = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const long double ph = 2.0L * std::numbers::pi_v<long double> * static_cast<long double>(f)
                             * static_cast<long double>(k) / static_cast<long double>(fs);
        s += static_cast<long double>(v[k]) * std::sin(ph);
        c += static_cast<long double>(v[k]) * std::cos(ph);
    }
    const auto scale = 2.0L / static_cast<long double>(v.size());
    return {static_cast<double>(s * scale), static_cast<double>(c * scale)};
}

std::vector<double> scalar_mlp_forward(const fibresense::mlp::MLPModel& m,
                                       std::span<const double> x) {
    using fibresense::mlp::Activation;
    std::vector<double> a(x.begin(), x.end());
    if (m.norm_mean.size() == static_cast<Eigen::Index>(a.size()))
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = (a[i] - m.norm_mean(static_cast<Eigen::Index>(i)))
                 / m.norm_std(static_cast<Eigen::Index>(i));

    for (std::size_t layer = 0; layer < m.layers(); ++layer) {
        const auto& w = m.w[layer];
        std::vector<double> z(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index row = 0; row < w.rows(); ++row) {
            double acc = m.b[layer](row);
            for (Eigen::Index col = 0; col < w.cols(); ++col)
                acc += w(row, col) * a[static_cast<std::size_t>(col)];
            switch (m.act[layer]) {
            case Activation::Tanh: acc = std::tanh(acc); break;
            case Activation::Relu: acc = acc > 0 ? acc : 0; break;
            case Activation::Linear: break;
            }
            z[static_cast<std::size_t>(row)] = acc;
        }
        a = std::move(z);
    }
    return a;
}

fibresense::mlp::Gradients fd_loss_gradients(const fibresense::mlp::MLPModel& m,
                                             const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                             double h) {
    fibresense::mlp::Gradients g;
    fibresense::mlp::MLPModel probe = m;
    for (std::size_t layer = 0; layer < m.layers(); ++layer) {
        Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(m.w[layer].rows(), m.w[layer].cols());
        for (Eigen::Index r = 0; r < dw.rows(); ++r)
            for (Eigen::Index c = 0; c < dw.cols(); ++c) {
                const double keep = probe.w[layer](r, c);
                probe.w[layer](r, c) = keep + h;
                const double up = mlp_loss(probe, x, y);
                probe.w[layer](r, c) = keep - h;
                const double dn = mlp_loss(probe, x, y);
                probe.w[layer](r, c) = keep;
                dw(r, c) = (up - dn) / (2 * h);
            }
        Eigen::VectorXd db = Eigen::VectorXd::Zero(m.b[layer].size());
        for (Eigen::Index r = 0; r < db.size(); ++r) {
            const double keep = probe.b[layer](r);
            probe.b[layer](r) = keep + h;
            const double up = mlp_loss(probe, x, y);
            probe.b[layer](r) = keep - h;
            const double dn = mlp_loss(probe, x, y);
            probe.b[layer](r) = keep;
            db(r) = (up - dn) / (2 * h);
        }
        g.dw.push_back(std::move(dw));
        g.db.push_back(std::move(db));
    }
    return g;
}

std::vector<double> reference_moving_median(std::span<const double> x, int window) {
    const auto n = static_cast<int>(x.size());
    const int half = window / 2;
    std::vector<double> out(x.size());
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        std::vector<double> win(x.begin() + lo, x.begin() + hi + 1);
        std::sort(win.begin(), win.end());
        const std::size_t len = win.size();
        out[static_cast<std::size_t>(i)] =
            len % 2 == 1 ? win[len / 2] : 0.5 * (win[len / 2 - 1] + win[len / 2]);
    }
    return out;
}

} // namespace oracle
