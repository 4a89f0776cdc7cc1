#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ossa {

struct StandardizationParams {
    Eigen::VectorXd mu_x;   // per-column mean
    Eigen::VectorXd std_x;  // L2 norm of the centered column (1 for constants)
    double mu_y = 0;
    std::vector<int> constant_columns;
};

// center each column and scale so sum x = 0, sum x^2 = 1; center y
std::tuple<Eigen::MatrixXd, Eigen::VectorXd, StandardizationParams>
standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

double soft_threshold(double z, double gamma);

struct CcdResult {
    Eigen::VectorXd coef;
    double intercept = 0;  // recovered from column/response means
    double objective = 0;
    int sweeps = 0;
    bool converged = false;
};

CcdResult ccd_fit(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, double lambda,
                  const Eigen::VectorXd& weights, double tol = 1e-9, int max_sweeps = 100000,
                  const Eigen::VectorXd* warm = nullptr);

// (1/2S)||ys - Xs c||^2 + lambda * sum_k w_k |c_k|
double lasso_objective(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys,
                       const Eigen::VectorXd& coef, double lambda,
                       const Eigen::VectorXd& weights);

// max KKT violation: |g_k| <= lambda w_k at zero coefficients,
// g_k = lambda w_k sign(c_k) at active ones, g = (1/S) X^T r
double kkt_residual(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys,
                    const Eigen::VectorXd& coef, double lambda, const Eigen::VectorXd& weights);

struct LambdaPath {
    std::vector<double> values;  // strictly decreasing, values[0] = lambda_max
};

LambdaPath lambda_path(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, int count = 100,
                       double eps = 1e-3, double penalty_scale = 1.0,
                       const Eigen::VectorXd* weights = nullptr);

struct MsaConfig {
    int steps = 3;
    int path_count = 100;
    double path_eps = 1e-3;
    double penalty_scale = 1.0;  // scales every lambda on the path
    double validation_fraction = 0.2;
    double weight_delta = 1e-6;
    double tol = 1e-9;
    int max_sweeps = 100000;
    uint64_t seed = 1;
};

struct FitDiagnostics {
    double final_objective = 0;
    int sweeps = 0;
    bool converged = true;
    std::vector<double> step_lambdas;
};

struct LassoModel {
    double intercept = 0;  // sigma_0, response units (on top of mu_y)
    Eigen::VectorXd coefficients;
    double lambda = 0;
    Eigen::VectorXd adaptive_weights;
    StandardizationParams standardization;
    FitDiagnostics fit_diagnostics;
    std::string layout_fingerprint;
};

LassoModel msa_lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const MsaConfig& cfg = {});

double predict(const LassoModel& m, const Eigen::VectorXd& x_raw);

nlohmann::ordered_json model_to_json(const LassoModel& m);
LassoModel model_from_json(const nlohmann::ordered_json& j);

}  // namespace ossa
