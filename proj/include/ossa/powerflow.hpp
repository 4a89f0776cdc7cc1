#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <complex>
#include <vector>

#include "ossa/netmodel.hpp"

namespace ossa {

struct AdmittanceMatrix {
    int n = 0;
    Eigen::SparseMatrix<std::complex<double>> Y;
};

struct SolverOptions {
    double tolerance = 1e-8;  // max p.u. mismatch
    int max_iterations = 20;
    bool flat_start = true;
    bool enforce_q_limits = false;
};

struct BranchFlow {
    double p_from = 0, q_from = 0;  // MW / MVAr at the from end
    double p_to = 0, q_to = 0;
    bool in_service = true;
};

struct FlowSolution {
    Eigen::VectorXd v_mag;            // p.u.
    Eigen::VectorXd v_ang;            // radians
    Eigen::VectorXd p_inj, q_inj;     // MW / MVAr net injection per bus
    std::vector<BranchFlow> flows;    // per branch, file order
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0;          // p.u.

    Eigen::VectorXcd complex_v() const;
};

struct IslandedNetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

AdmittanceMatrix build_ybus(const Network& net);
FlowSolution solve_nr(const Network& net, const SolverOptions& opts = {});
std::vector<BranchFlow> branch_flows(const Network& net, const Eigen::VectorXcd& v);

// instrumentation for the zero-solve prediction-path claim
long solve_count();
void reset_solve_count();

}  // namespace ossa
