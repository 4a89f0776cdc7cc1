#pragma once

// Independent reference implementations used to cross-check the library.
// Deliberately simple and dense — correctness over speed.

#include <Eigen/Dense>
#include <complex>
#include <string>

#include "ossa/netmodel.hpp"
#include "ossa/util.hpp"

namespace oracles {

// plain dense loop over branches and shunts
inline Eigen::MatrixXcd dense_ybus(const ossa::Network& net) {
    using cplx = std::complex<double>;
    const int n = int(net.buses.size());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    const double d2r = 3.14159265358979323846 / 180.0;
    for (const auto& br : net.branches) {
        if (!br.in_service) continue;
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const cplx ys = cplx(1.0) / cplx(br.r, br.x);
        const cplx half_b(0, br.b_charging / 2.0);
        const cplx tap = std::polar(br.tap, br.shift * d2r);
        Y(f, f) += (ys + half_b) / (tap * std::conj(tap));
        Y(t, t) += ys + half_b;
        Y(f, t) += -ys / std::conj(tap);
        Y(t, f) += -ys / tap;
    }
    for (int i = 0; i < n; ++i)
        Y(i, i) += cplx(net.buses[i].g_shunt, net.buses[i].b_shunt) / net.base_mva;
    return Y;
}

// FISTA for (1/2S)||y - Xc||^2 + lambda * sum_k w_k |c_k|
inline Eigen::VectorXd fista_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   double lambda, const Eigen::VectorXd& w, int iters = 20000) {
    const double S = double(X.rows());
    const Eigen::MatrixXd G = X.transpose() * X;
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G)
                         .eigenvalues()
                         .maxCoeff() / S;
    const double step = 1.0 / std::max(L, 1e-12);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(X.cols());
    Eigen::VectorXd z = c;
    double tk = 1.0;
    for (int it = 0; it < iters; ++it) {
        const Eigen::VectorXd grad = -(X.transpose() * (y - X * z)) / S;
        Eigen::VectorXd cn = z - step * grad;
        for (long k = 0; k < cn.size(); ++k) {
            const double g = step * lambda * w[k];
            cn[k] = std::copysign(std::max(std::abs(cn[k]) - g, 0.0), cn[k]);
        }
        const double tn = (1.0 + std::sqrt(1.0 + 4.0 * tk * tk)) / 2.0;
        z = cn + ((tk - 1.0) / tn) * (cn - c);
        c = cn;
        tk = tn;
    }
    return c;
}

inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

// minimal well-formed two-bus case: slack + PQ bus joined by one branch
inline std::string two_bus_case(double r, double x, double b_charging, double p_load,
                                double q_load, double bus2_bshunt = 0.0, double rate_a = 0.0) {
    auto d = [](double v) { return ossa::format_double(v); };
    std::string s;
    s += "function mpc = case2\n";
    s += "mpc.version = '2';\n";
    s += "mpc.baseMVA = 100;\n";
    s += "mpc.bus = [\n";
    s += "\t1\t3\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9;\n";
    s += "\t2\t1\t" + d(p_load) + "\t" + d(q_load) + "\t0\t" + d(bus2_bshunt) +
         "\t1\t1\t0\t135\t1\t1.1\t0.9;\n";
    s += "];\n";
    s += "mpc.gen = [\n";
    s += "\t1\t0\t0\t300\t-300\t1\t100\t1\t250\t0;\n";
    s += "];\n";
    s += "mpc.branch = [\n";
    s += "\t1\t2\t" + d(r) + "\t" + d(x) + "\t" + d(b_charging) + "\t" + d(rate_a) +
         "\t0\t0\t0\t0\t1\t-360\t360;\n";
    s += "];\n";
    return s;
}

}  // namespace oracles
