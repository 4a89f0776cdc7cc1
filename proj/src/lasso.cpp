#include "ossa/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "ossa/util.hpp"

namespace ossa {

std::tuple<Eigen::MatrixXd, Eigen::VectorXd, StandardizationParams>
standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Eigen::Index S = X.rows(), D = X.cols();
    if (S < 2) throw std::invalid_argument("standardize: need at least 2 rows");
    if (y.size() != S) throw std::invalid_argument("standardize: X/y row mismatch");

    StandardizationParams p;
    p.mu_x = X.colwise().mean();
    p.std_x.resize(D);
    Eigen::MatrixXd Xs = X.rowwise() - p.mu_x.transpose();
    for (Eigen::Index k = 0; k < D; ++k) {
        const double nrm = Xs.col(k).norm();
        if (nrm < 1e-12) {
            p.constant_columns.push_back(int(k));
            p.std_x[k] = 1.0;
            Xs.col(k).setZero();
        } else {
            p.std_x[k] = nrm;
            Xs.col(k) /= nrm;
        }
    }
    p.mu_y = y.mean();
    Eigen::VectorXd ys = y.array() - p.mu_y;
    return {std::move(Xs), std::move(ys), std::move(p)};
}

double soft_threshold(double z, double gamma) {
    if (gamma < 0) throw std::invalid_argument("soft_threshold: negative gamma");
    const double mag = std::abs(z) - gamma;
    return mag > 0 ? (z > 0 ? mag : -mag) : 0.0;
}

double lasso_objective(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys,
                       const Eigen::VectorXd& coef, double lambda,
                       const Eigen::VectorXd& weights) {
    const double S = double(Xs.rows());
    const double rss = (ys - Xs * coef).squaredNorm();
    return rss / (2.0 * S) + lambda * weights.cwiseProduct(coef.cwiseAbs()).sum();
}

double kkt_residual(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys,
                    const Eigen::VectorXd& coef, double lambda,
                    const Eigen::VectorXd& weights) {
    const double S = double(Xs.rows());
    const Eigen::VectorXd g = Xs.transpose() * (ys - Xs * coef) / S;
    double worst = 0;
    for (Eigen::Index k = 0; k < coef.size(); ++k) {
        if (coef[k] == 0)
            worst = std::max(worst, std::max(0.0, std::abs(g[k]) - lambda * weights[k]));
        else
            worst = std::max(worst,
                             std::abs(g[k] - lambda * weights[k] * (coef[k] > 0 ? 1.0 : -1.0)));
    }
    return worst;
}

CcdResult ccd_fit(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, double lambda,
                  const Eigen::VectorXd& weights, double tol, int max_sweeps,
                  const Eigen::VectorXd* warm) {
    const Eigen::Index S = Xs.rows(), D = Xs.cols();
    if (lambda < 0) throw std::invalid_argument("ccd_fit: negative lambda");
    if (weights.size() != D) throw std::invalid_argument("ccd_fit: weights size mismatch");
    if (!Xs.allFinite() || !ys.allFinite())
        throw std::invalid_argument("ccd_fit: non-finite input");

    CcdResult res;
    res.coef = warm && warm->size() == D ? *warm : Eigen::VectorXd::Zero(D);
    Eigen::VectorXd r = ys - Xs * res.coef;
    const Eigen::VectorXd xsq = Xs.colwise().squaredNorm() / double(S);

    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        double max_delta = 0;
        for (Eigen::Index k = 0; k < D; ++k) {
            if (xsq[k] == 0) continue;  // constant column stays at 0
            const double old = res.coef[k];
            const double z = Xs.col(k).dot(r) / double(S) + xsq[k] * old;
            const double neu = soft_threshold(z, lambda * weights[k]) / xsq[k];
            if (neu != old) {
                r += Xs.col(k) * (old - neu);
                res.coef[k] = neu;
                max_delta = std::max(max_delta, std::abs(neu - old));
            }
        }
        res.sweeps = sweep;
        if (max_delta < tol) {
            res.converged = true;
            break;
        }
    }
    res.objective = lasso_objective(Xs, ys, res.coef, lambda, weights);
    // intercept from means; zero when inputs are pre-centered
    res.intercept = ys.mean() - res.coef.dot(Xs.colwise().mean());
    return res;
}

LambdaPath lambda_path(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, int count,
                       double eps, double penalty_scale, const Eigen::VectorXd* weights) {
    if (count < 1) throw std::invalid_argument("lambda_path: count must be >= 1");
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("lambda_path: eps must be in (0,1)");
    const Eigen::Index S = Xs.rows(), D = Xs.cols();
    const Eigen::VectorXd yc = ys.array() - ys.mean();

    double lmax = 0;
    for (Eigen::Index k = 0; k < D; ++k) {
        const double w = weights ? (*weights)[k] : 1.0;
        if (w <= 0 || Xs.col(k).squaredNorm() == 0) continue;
        lmax = std::max(lmax, std::abs(Xs.col(k).dot(yc)) / double(S) / w);
    }
    lmax /= penalty_scale;

    LambdaPath path;
    if (lmax == 0) {
        path.values = {0.0};
        return path;
    }
    if (count == 1) {
        path.values = {lmax};
        return path;
    }
    path.values.resize(count);
    for (int i = 0; i < count; ++i)
        path.values[i] = lmax * std::pow(eps, double(i) / double(count - 1));
    return path;
}

LassoModel msa_lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const MsaConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("msa_lasso_fit: steps must be >= 1");
    auto [Xs, ys, sp] = standardize(X, y);
    const Eigen::Index S = Xs.rows(), D = Xs.cols();

    const Eigen::Index n_val =
        std::max<Eigen::Index>(1, Eigen::Index(std::llround(cfg.validation_fraction * double(S))));
    if (n_val >= S) throw std::invalid_argument("msa_lasso_fit: degenerate validation fold");

    std::vector<int> perm(S);
    for (Eigen::Index i = 0; i < S; ++i) perm[i] = int(i);
    RngStream shuf = derive_stream(cfg.seed, 0, 0x56414cULL);  // "VAL"
    for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[shuf.next_index(i)]);

    Eigen::MatrixXd Xt(S - n_val, D), Xv(n_val, D);
    Eigen::VectorXd yt(S - n_val), yv(n_val);
    for (Eigen::Index i = 0; i < n_val; ++i) {
        Xv.row(i) = Xs.row(perm[i]);
        yv[i] = ys[perm[i]];
    }
    for (Eigen::Index i = n_val; i < S; ++i) {
        Xt.row(i - n_val) = Xs.row(perm[i]);
        yt[i - n_val] = ys[perm[i]];
    }

    Eigen::VectorXd w = Eigen::VectorXd::Ones(D);
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(D);
    LassoModel m;
    m.standardization = sp;
    int total_sweeps = 0;
    bool all_converged = true;

    for (int step = 0; step < cfg.steps; ++step) {
        if (step > 0)
            for (Eigen::Index k = 0; k < D; ++k)
                w[k] = 1.0 / (std::abs(sigma[k]) + cfg.weight_delta);

        const LambdaPath path =
            lambda_path(Xt, yt, cfg.path_count, cfg.path_eps, cfg.penalty_scale, &w);

        double best_lambda = path.values.front();
        double best_mse = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_coef = Eigen::VectorXd::Zero(D);
        Eigen::VectorXd warm_coef = Eigen::VectorXd::Zero(D);
        for (double lam : path.values) {
            CcdResult fit = ccd_fit(Xt, yt, lam, w, cfg.tol, cfg.max_sweeps, &warm_coef);
            warm_coef = fit.coef;
            total_sweeps += fit.sweeps;
            all_converged &= fit.converged;
            const Eigen::VectorXd pred =
                (Xv * fit.coef).array() + fit.intercept;
            const double mse = (yv - pred).squaredNorm() / double(n_val);
            if (mse < best_mse - 1e-15) {
                best_mse = mse;
                best_lambda = lam;
                best_coef = fit.coef;
            }
        }

        CcdResult full = ccd_fit(Xs, ys, best_lambda, w, cfg.tol, cfg.max_sweeps, &best_coef);
        total_sweeps += full.sweeps;
        all_converged &= full.converged;
        sigma = full.coef;
        m.intercept = full.intercept;
        m.lambda = best_lambda;
        m.fit_diagnostics.final_objective = full.objective;
        m.fit_diagnostics.step_lambdas.push_back(best_lambda);
    }

    m.coefficients = sigma;
    m.adaptive_weights = w;
    m.fit_diagnostics.sweeps = total_sweeps;
    m.fit_diagnostics.converged = all_converged;
    return m;
}

double predict(const LassoModel& m, const Eigen::VectorXd& x_raw) {
    const Eigen::Index D = m.coefficients.size();
    if (x_raw.size() != D) throw std::invalid_argument("predict: dimension mismatch");
    if (!x_raw.allFinite()) throw std::invalid_argument("predict: non-finite feature");
    double acc = m.standardization.mu_y + m.intercept;
    for (Eigen::Index k = 0; k < D; ++k)
        acc += m.coefficients[k] * (x_raw[k] - m.standardization.mu_x[k]) /
               m.standardization.std_x[k];
    return acc;
}

nlohmann::ordered_json model_to_json(const LassoModel& m) {
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["intercept"] = m.intercept;
    j["coefficients"] = vec(m.coefficients);
    j["lambda"] = m.lambda;
    j["weights"] = vec(m.adaptive_weights);
    j["mu_x"] = vec(m.standardization.mu_x);
    j["std_x"] = vec(m.standardization.std_x);
    j["mu_y"] = m.standardization.mu_y;
    j["constant_columns"] = m.standardization.constant_columns;
    j["layout_fingerprint"] = m.layout_fingerprint;
    j["diagnostics"] = {{"final_objective", m.fit_diagnostics.final_objective},
                        {"sweeps", m.fit_diagnostics.sweeps},
                        {"converged", m.fit_diagnostics.converged},
                        {"step_lambdas", m.fit_diagnostics.step_lambdas}};
    return j;
}

LassoModel model_from_json(const nlohmann::ordered_json& j) {
    auto vec = [](const nlohmann::ordered_json& a) {
        const auto v = a.get<std::vector<double>>();
        return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size())).eval();
    };
    LassoModel m;
    m.intercept = j.at("intercept");
    m.coefficients = vec(j.at("coefficients"));
    m.lambda = j.at("lambda");
    m.adaptive_weights = vec(j.at("weights"));
    m.standardization.mu_x = vec(j.at("mu_x"));
    m.standardization.std_x = vec(j.at("std_x"));
    m.standardization.mu_y = j.at("mu_y");
    m.standardization.constant_columns = j.at("constant_columns").get<std::vector<int>>();
    m.layout_fingerprint = j.at("layout_fingerprint").get<std::string>();
    const auto& d = j.at("diagnostics");
    m.fit_diagnostics.final_objective = d.at("final_objective");
    m.fit_diagnostics.sweeps = d.at("sweeps");
    m.fit_diagnostics.converged = d.at("converged");
    m.fit_diagnostics.step_lambdas = d.at("step_lambdas").get<std::vector<double>>();
    return m;
}

}  // namespace ossa
