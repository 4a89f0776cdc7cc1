#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "ossa/lasso.hpp"
#include "ossa/util.hpp"

using namespace ossa;

namespace {
// deterministic pseudo-gaussian design (Box-Muller over splitmix64)
Eigen::MatrixXd random_matrix(Eigen::Index S, Eigen::Index D, uint64_t seed) {
    RngStream rng(seed);
    Eigen::MatrixXd X(S, D);
    for (Eigen::Index i = 0; i < S; ++i)
        for (Eigen::Index k = 0; k < D; ++k) {
            const double u1 = std::max(rng.next_double(), 1e-300);
            const double u2 = rng.next_double();
            X(i, k) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        }
    return X;
}

Eigen::VectorXd random_vector(Eigen::Index S, uint64_t seed) {
    return random_matrix(S, 1, seed).col(0);
}

std::set<int> support(const Eigen::VectorXd& c, double tol = 1e-8) {
    std::set<int> s;
    for (Eigen::Index k = 0; k < c.size(); ++k)
        if (std::abs(c[k]) > tol) s.insert(int(k));
    return s;
}
}  // namespace

TEST_CASE("standardize centers and unit-norms columns") {
    Eigen::MatrixXd X(3, 2);
    X << 1, 4, 2, 4, 3, 4;  // second column constant
    Eigen::VectorXd y(3);
    y << 1, 2, 9;

    auto [Xs, ys, p] = standardize(X, y);
    const double r2 = 1.0 / std::sqrt(2.0);
    CHECK(Xs(0, 0) == doctest::Approx(-r2).epsilon(1e-14));
    CHECK(Xs(1, 0) == doctest::Approx(0.0).scale(1).epsilon(1e-14));
    CHECK(Xs(2, 0) == doctest::Approx(r2).epsilon(1e-14));
    CHECK(Xs.col(0).sum() == doctest::Approx(0.0).scale(1).epsilon(1e-14));
    CHECK(Xs.col(0).squaredNorm() == doctest::Approx(1.0).epsilon(1e-14));

    CHECK(p.mu_x[0] == doctest::Approx(2.0));
    CHECK(p.mu_x[1] == doctest::Approx(4.0));
    CHECK(p.std_x[1] == 1.0);  // sentinel for constants
    CHECK(Xs.col(1).isZero(0));
    REQUIRE(p.constant_columns.size() == 1);
    CHECK(p.constant_columns[0] == 1);

    CHECK(p.mu_y == doctest::Approx(4.0));
    CHECK(ys.sum() == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    CHECK(ys[2] == doctest::Approx(5.0));

    // larger random design: every column exactly centered and unit-norm
    const Eigen::MatrixXd R = random_matrix(40, 6, 3);
    auto [Rs, rys, rp] = standardize(R, random_vector(40, 4));
    for (Eigen::Index k = 0; k < Rs.cols(); ++k) {
        CHECK(std::abs(Rs.col(k).sum()) < 1e-12);
        CHECK(Rs.col(k).squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
    }

    Eigen::MatrixXd one_row(1, 2);
    one_row << 1, 2;
    Eigen::VectorXd y1(1);
    y1 << 3;
    CHECK_THROWS_AS(standardize(one_row, y1), std::invalid_argument);
    Eigen::VectorXd wrong(4);
    wrong.setZero();
    CHECK_THROWS_AS(standardize(X, wrong), std::invalid_argument);
}

TEST_CASE("soft threshold examples") {
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
    CHECK(soft_threshold(-0.5, 1.0) == 0.0);
    CHECK(soft_threshold(2.0, 1.0) == 1.0);
    CHECK(soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(soft_threshold(1.0, 1.0) == 0.0);
    CHECK(soft_threshold(0.7, 0.0) == 0.7);
    CHECK_THROWS_AS(soft_threshold(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("ccd zeroes out at lambda_max") {
    const Eigen::MatrixXd X = random_matrix(50, 8, 10);
    Eigen::VectorXd y = X.col(2) * 3.0 + random_vector(50, 11) * 0.1;
    auto [Xs, ys, p] = standardize(X, y);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(8);

    const auto path = lambda_path(Xs, ys);
    // at lambda_max the KKT bound holds with equality at one coordinate, so
    // a last-ulp summation difference may leave an O(eps) coefficient
    const auto at_max = ccd_fit(Xs, ys, path.values[0], w);
    CHECK(at_max.coef.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(at_max.converged);
    // strictly above it the zero vector is the unique optimum
    const auto above = ccd_fit(Xs, ys, path.values[0] * (1.0 + 1e-9), w);
    CHECK(above.coef.isZero(0));
    // intercept recovers the response mean of whatever was passed in
    CHECK(at_max.intercept == doctest::Approx(ys.mean()).scale(1).epsilon(1e-12));

    // just below lambda_max the strongest coordinate activates
    const auto below = ccd_fit(Xs, ys, path.values[1], w);
    CHECK(below.coef.cwiseAbs().maxCoeff() > 0.0);

    // uncentered response: intercept picks up its mean
    Eigen::VectorXd shifted = ys.array() + 5.0;
    const auto sh = ccd_fit(Xs, shifted, 1e9, w);
    CHECK(sh.coef.isZero(0));
    CHECK(sh.intercept == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("ccd matches the closed form on an orthonormal design") {
    // with X^T X = I the coordinates decouple: c_k = soft(x_k . y, S lambda w_k)
    const Eigen::Index S = 30, D = 5;
    const Eigen::MatrixXd Q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(S, D, 21))
            .householderQ() *
        Eigen::MatrixXd::Identity(S, D);
    const Eigen::VectorXd y = random_vector(S, 22);
    Eigen::VectorXd w(D);
    w << 1.0, 0.5, 2.0, 1.0, 0.25;

    for (double lambda : {0.0, 0.002, 0.01, 0.05}) {
        const auto fit = ccd_fit(Q, y, lambda, w);
        REQUIRE(fit.converged);
        for (Eigen::Index k = 0; k < D; ++k) {
            const double closed =
                soft_threshold(Q.col(k).dot(y), double(S) * lambda * w[k]);
            CHECK(fit.coef[k] == doctest::Approx(closed).scale(1).epsilon(1e-10));
        }
    }
}

TEST_CASE("ccd at lambda zero solves the normal equations") {
    const Eigen::MatrixXd X = random_matrix(60, 8, 31);
    const Eigen::VectorXd y = random_vector(60, 32);
    auto [Xs, ys, p] = standardize(X, y);

    const auto fit = ccd_fit(Xs, ys, 0.0, Eigen::VectorXd::Ones(8), 1e-13);
    const Eigen::VectorXd ols = oracles::least_squares(Xs, ys);
    for (Eigen::Index k = 0; k < 8; ++k)
        CHECK(fit.coef[k] == doctest::Approx(ols[k]).scale(1).epsilon(1e-8));
}

TEST_CASE("kkt certificate holds at the optimum") {
    const Eigen::MatrixXd X = random_matrix(50, 10, 41);
    Eigen::VectorXd y = X.col(0) - 2.0 * X.col(5) + random_vector(50, 42) * 0.3;
    auto [Xs, ys, p] = standardize(X, y);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(10);
    w[3] = 2.5;

    const double lambda = lambda_path(Xs, ys, 100, 1e-3, 1.0, &w).values[40];
    const auto fit = ccd_fit(Xs, ys, lambda, w);
    REQUIRE(fit.converged);
    CHECK(kkt_residual(Xs, ys, fit.coef, lambda, w) < 1e-6);

    // a perturbed point violates the certificate
    Eigen::VectorXd off = fit.coef;
    off[0] += 0.5;
    CHECK(kkt_residual(Xs, ys, off, lambda, w) > 1e-3);
}

TEST_CASE("objective is monotone in the sweep budget") {
    const Eigen::MatrixXd X = random_matrix(40, 12, 51);
    const Eigen::VectorXd y = random_vector(40, 52);
    auto [Xs, ys, p] = standardize(X, y);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
    const double lambda = lambda_path(Xs, ys).values[60];

    double prev = std::numeric_limits<double>::infinity();
    for (int cap = 1; cap <= 8; ++cap) {
        const auto fit = ccd_fit(Xs, ys, lambda, w, 0.0, cap);
        CHECK(fit.objective <= prev + 1e-12);
        CHECK(fit.objective ==
              doctest::Approx(lasso_objective(Xs, ys, fit.coef, lambda, w)).epsilon(1e-12));
        prev = fit.objective;
    }
}

TEST_CASE("warm starts land on the same optimum") {
    const Eigen::MatrixXd X = random_matrix(50, 9, 61);
    Eigen::VectorXd y = 2.0 * X.col(1) + random_vector(50, 62) * 0.2;
    auto [Xs, ys, p] = standardize(X, y);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(9);
    const auto path = lambda_path(Xs, ys);

    const auto hot_src = ccd_fit(Xs, ys, path.values[30], w);
    const auto cold = ccd_fit(Xs, ys, path.values[35], w);
    const auto warm = ccd_fit(Xs, ys, path.values[35], w, 1e-9, 100000, &hot_src.coef);
    CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-10));
    for (Eigen::Index k = 0; k < 9; ++k)
        CHECK(warm.coef[k] == doctest::Approx(cold.coef[k]).scale(1).epsilon(1e-7));
}

TEST_CASE("lambda path geometry") {
    const Eigen::MatrixXd X = random_matrix(50, 6, 71);
    Eigen::VectorXd y = X.col(0) + random_vector(50, 72) * 0.5;
    auto [Xs, ys, p] = standardize(X, y);

    // lambda_max from first principles
    double lmax = 0;
    for (Eigen::Index k = 0; k < 6; ++k)
        lmax = std::max(lmax, std::abs(Xs.col(k).dot(ys)) / 50.0);

    const auto single = lambda_path(Xs, ys, 1);
    REQUIRE(single.values.size() == 1);
    CHECK(single.values[0] == doctest::Approx(lmax).epsilon(1e-12));

    const auto path = lambda_path(Xs, ys, 100, 1e-3);
    REQUIRE(path.values.size() == 100);
    CHECK(path.values.front() == doctest::Approx(lmax).epsilon(1e-12));
    CHECK(path.values.back() == doctest::Approx(1e-3 * lmax).epsilon(1e-12));
    const double ratio = path.values[1] / path.values[0];
    for (size_t i = 1; i < path.values.size(); ++i) {
        CHECK(path.values[i] < path.values[i - 1]);
        CHECK(path.values[i] / path.values[i - 1] == doctest::Approx(ratio).epsilon(1e-12));
    }

    // halving the penalty scale doubles nothing; it divides lambda_max
    const auto scaled = lambda_path(Xs, ys, 1, 1e-3, 2.0);
    CHECK(scaled.values[0] == doctest::Approx(lmax / 2.0).epsilon(1e-12));

    // per-coordinate weights enter the max; uniform weights just rescale
    Eigen::VectorXd w = Eigen::VectorXd::Constant(6, 4.0);
    const auto wpath = lambda_path(Xs, ys, 100, 1e-3, 1.0, &w);
    for (size_t i = 0; i < wpath.values.size(); ++i)
        CHECK(wpath.values[i] == doctest::Approx(path.values[i] / 4.0).epsilon(1e-12));

    // degenerate response collapses the path
    const Eigen::VectorXd flat = Eigen::VectorXd::Zero(50);
    const auto zero_path = lambda_path(Xs, flat);
    REQUIRE(zero_path.values.size() == 1);
    CHECK(zero_path.values[0] == 0.0);

    CHECK_THROWS_AS(lambda_path(Xs, ys, 0), std::invalid_argument);
    CHECK_THROWS_AS(lambda_path(Xs, ys, 10, 1.5), std::invalid_argument);
}

TEST_CASE("l1 norm grows as lambda shrinks") {
    const Eigen::MatrixXd X = random_matrix(60, 10, 81);
    Eigen::VectorXd y = X.col(2) - X.col(7) + random_vector(60, 82) * 0.4;
    auto [Xs, ys, p] = standardize(X, y);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(10);
    const auto path = lambda_path(Xs, ys, 40);

    double prev_norm = -1.0;
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(10);
    for (double lam : path.values) {
        const auto fit = ccd_fit(Xs, ys, lam, w, 1e-11, 100000, &warm);
        warm = fit.coef;
        const double nrm = fit.coef.lpNorm<1>();
        CHECK(nrm >= prev_norm - 1e-8);
        prev_norm = nrm;
    }
}

TEST_CASE("ccd agrees with a proximal-gradient oracle") {
    const Eigen::MatrixXd X = random_matrix(40, 12, 91);
    Eigen::VectorXd y = X.col(3) * 1.5 + X.col(9) * -0.8 + random_vector(40, 92) * 0.25;
    auto [Xs, ys, p] = standardize(X, y);
    Eigen::VectorXd w(12);
    for (int k = 0; k < 12; ++k) w[k] = 1.0 + 0.1 * k;

    for (int idx : {15, 45, 75}) {
        const double lambda = lambda_path(Xs, ys, 100, 1e-3, 1.0, &w).values[idx];
        const auto fit = ccd_fit(Xs, ys, lambda, w);
        const Eigen::VectorXd ref = oracles::fista_lasso(Xs, ys, lambda, w);
        const double f_ccd = lasso_objective(Xs, ys, fit.coef, lambda, w);
        const double f_ref = lasso_objective(Xs, ys, ref, lambda, w);
        CHECK(f_ccd <= f_ref + 1e-8);
        for (Eigen::Index k = 0; k < 12; ++k)
            CHECK(fit.coef[k] == doctest::Approx(ref[k]).scale(1).epsilon(5e-5));
    }
}

TEST_CASE("weighted penalty is a rescaled plain penalty") {
    const Eigen::MatrixXd X = random_matrix(45, 7, 101);
    const Eigen::VectorXd y = random_vector(45, 102);
    auto [Xs, ys, p] = standardize(X, y);
    const double lambda = lambda_path(Xs, ys).values[50];
    const double c = 3.0;

    const auto a = ccd_fit(Xs, ys, lambda, Eigen::VectorXd::Constant(7, c));
    const auto b = ccd_fit(Xs, ys, c * lambda, Eigen::VectorXd::Ones(7));
    for (Eigen::Index k = 0; k < 7; ++k)
        CHECK(a.coef[k] == doctest::Approx(b.coef[k]).scale(1).epsilon(1e-14));
}

TEST_CASE("msa recovers a sparse signal exactly") {
    const Eigen::Index S = 200, D = 20;
    const Eigen::MatrixXd X = random_matrix(S, D, 111);
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(D);
    truth[2] = 5.0;
    truth[7] = -3.0;
    truth[14] = 2.0;
    const Eigen::VectorXd y = X * truth;

    MsaConfig cfg;
    cfg.seed = 1;
    const LassoModel m = msa_lasso_fit(X, y, cfg);
    CHECK(m.fit_diagnostics.converged);
    CHECK(m.fit_diagnostics.step_lambdas.size() == 3);
    CHECK(support(m.coefficients, 1e-6) == std::set<int>{2, 7, 14});

    double worst = 0;
    for (Eigen::Index i = 0; i < S; ++i)
        worst = std::max(worst, std::abs(predict(m, X.row(i).transpose()) - y[i]));
    CHECK(worst < 1e-2 * y.cwiseAbs().maxCoeff());

    // reweighting sharpens: zero coordinates carry huge adaptive weights
    for (Eigen::Index k = 0; k < D; ++k) {
        if (k == 2 || k == 7 || k == 14)
            CHECK(m.adaptive_weights[k] < 10.0);
        else
            CHECK(m.adaptive_weights[k] > 1e3);
    }
}

TEST_CASE("single-step msa is a plain path-selected lasso") {
    const Eigen::MatrixXd X = random_matrix(80, 10, 121);
    Eigen::VectorXd y = X.col(1) * 2.0 - X.col(6) + random_vector(80, 122) * 0.3;

    MsaConfig cfg;
    cfg.steps = 1;
    cfg.seed = 5;
    const LassoModel m = msa_lasso_fit(X, y, cfg);
    CHECK((m.adaptive_weights.array() == 1.0).all());
    CHECK(m.fit_diagnostics.step_lambdas.size() == 1);
    CHECK(m.fit_diagnostics.step_lambdas[0] == m.lambda);

    // the returned coefficients satisfy plain-lasso stationarity at the
    // recorded lambda on the full standardized data
    auto [Xs, ys, p] = standardize(X, y);
    CHECK(kkt_residual(Xs, ys, m.coefficients, m.lambda, Eigen::VectorXd::Ones(10)) < 1e-6);
}

TEST_CASE("uniform reweighting reduces to the single step") {
    // a column-swap-symmetric design makes both step-1 coefficients equal, so
    // the step-2 weights are uniform and selection matches up to rescaling
    const Eigen::Index H = 30;
    Eigen::MatrixXd X(2 * H, 2);
    Eigen::VectorXd y(2 * H);
    RngStream rng(131);
    for (Eigen::Index i = 0; i < H; ++i) {
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
        const double noise = 0.05 * (rng.next_double() - 0.5);
        X(2 * i, 0) = a;
        X(2 * i, 1) = b;
        X(2 * i + 1, 0) = b;
        X(2 * i + 1, 1) = a;
        y[2 * i] = a + b + noise;
        y[2 * i + 1] = a + b + noise;
    }

    MsaConfig one;
    one.steps = 1;
    one.seed = 9;
    MsaConfig two = one;
    two.steps = 2;
    const LassoModel m1 = msa_lasso_fit(X, y, one);
    const LassoModel m2 = msa_lasso_fit(X, y, two);

    CHECK(std::abs(m1.coefficients[0] - m1.coefficients[1]) < 1e-6);
    CHECK(std::abs(m2.coefficients[0] - m2.coefficients[1]) < 1e-6);
    CHECK(support(m1.coefficients) == support(m2.coefficients));
    for (int k = 0; k < 2; ++k)
        CHECK(m2.coefficients[k] == doctest::Approx(m1.coefficients[k]).epsilon(1e-5));
    // selected lambda rescales by the (uniform) weight
    const double wbar = 1.0 / (std::abs(m1.coefficients[0]) + two.weight_delta);
    CHECK(m2.lambda * wbar == doctest::Approx(m1.lambda).epsilon(1e-4));
}

TEST_CASE("predict composes standardization, intercept, and coefficients") {
    // all-zero model predicts mu_y + sigma_0 everywhere
    LassoModel flat;
    flat.coefficients = Eigen::VectorXd::Zero(3);
    flat.adaptive_weights = Eigen::VectorXd::Ones(3);
    flat.standardization.mu_x = Eigen::VectorXd::Zero(3);
    flat.standardization.std_x = Eigen::VectorXd::Ones(3);
    flat.standardization.mu_y = 2.0;
    flat.intercept = 0.3;
    Eigen::VectorXd probe(3);
    probe << 7, -4, 0.5;
    CHECK(predict(flat, probe) == doctest::Approx(2.3).epsilon(1e-14));

    Eigen::VectorXd wrong(2);
    wrong << 1, 2;
    CHECK_THROWS_AS(predict(flat, wrong), std::invalid_argument);
    probe[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(predict(flat, probe), std::invalid_argument);

    // lambda = 0 on an exactly-linear response interpolates the training rows
    const Eigen::MatrixXd X = random_matrix(50, 10, 141);
    Eigen::VectorXd beta(10);
    for (int k = 0; k < 10; ++k) beta[k] = 0.5 * k - 2.0;
    const Eigen::VectorXd y = X * beta;
    auto [Xs, ys, p] = standardize(X, y);
    const auto fit = ccd_fit(Xs, ys, 0.0, Eigen::VectorXd::Ones(10), 1e-13);

    LassoModel exact;
    exact.coefficients = fit.coef;
    exact.intercept = fit.intercept;
    exact.standardization = p;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        CHECK(predict(exact, X.row(i).transpose()) == doctest::Approx(y[i]).scale(1).epsilon(1e-6));
}

TEST_CASE("training is invariant to raw column scaling") {
    const Eigen::MatrixXd X = random_matrix(70, 6, 151);
    Eigen::VectorXd y = X.col(0) - 0.5 * X.col(4) + random_vector(70, 152) * 0.2;

    MsaConfig cfg;
    cfg.seed = 3;
    const LassoModel m1 = msa_lasso_fit(X, y, cfg);

    Eigen::MatrixXd X2 = X;
    X2.col(3) *= 5.0;
    const LassoModel m2 = msa_lasso_fit(X2, y, cfg);

    for (int i : {0, 10, 33, 69}) {
        Eigen::VectorXd raw = X.row(i).transpose();
        Eigen::VectorXd raw2 = raw;
        raw2[3] *= 5.0;
        CHECK(predict(m2, raw2) == doctest::Approx(predict(m1, raw)).scale(1).epsilon(1e-12));
    }
}

TEST_CASE("constant features drop out of the model") {
    Eigen::MatrixXd X = random_matrix(40, 5, 161);
    X.col(2).setConstant(3.25);
    const Eigen::VectorXd y = X.col(0) + random_vector(40, 162) * 0.1;

    MsaConfig cfg;
    cfg.seed = 2;
    const LassoModel m = msa_lasso_fit(X, y, cfg);
    CHECK(m.coefficients[2] == 0.0);
    REQUIRE(m.standardization.constant_columns.size() == 1);
    CHECK(m.standardization.constant_columns[0] == 2);
}

TEST_CASE("msa rejects degenerate configurations") {
    const Eigen::MatrixXd X = random_matrix(10, 3, 171);
    const Eigen::VectorXd y = random_vector(10, 172);

    MsaConfig bad;
    bad.steps = 0;
    CHECK_THROWS_AS(msa_lasso_fit(X, y, bad), std::invalid_argument);

    MsaConfig fold;
    fold.validation_fraction = 0.95;
    Eigen::MatrixXd tiny = X.topRows(2);
    Eigen::VectorXd tiny_y = y.head(2);
    CHECK_THROWS_AS(msa_lasso_fit(tiny, tiny_y, fold), std::invalid_argument);
}

TEST_CASE("model json round trip preserves predictions") {
    const Eigen::MatrixXd X = random_matrix(60, 8, 181);
    Eigen::VectorXd y = X.col(2) * 1.2 + random_vector(60, 182) * 0.15;
    MsaConfig cfg;
    cfg.seed = 8;
    LassoModel m = msa_lasso_fit(X, y, cfg);
    m.layout_fingerprint = "deadbeefdeadbeef";

    const std::string text = model_to_json(m).dump(2);
    const LassoModel back = model_from_json(nlohmann::ordered_json::parse(text));
    CHECK(back.lambda == m.lambda);
    CHECK(back.intercept == m.intercept);
    CHECK(back.layout_fingerprint == "deadbeefdeadbeef");
    CHECK(back.standardization.mu_y == m.standardization.mu_y);
    CHECK(back.fit_diagnostics.sweeps == m.fit_diagnostics.sweeps);
    CHECK(back.fit_diagnostics.step_lambdas == m.fit_diagnostics.step_lambdas);
    for (int i : {0, 17, 42, 59})
        CHECK(predict(back, X.row(i).transpose()) == doctest::Approx(predict(m, X.row(i).transpose())).epsilon(1e-15));
}
