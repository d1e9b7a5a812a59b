#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ttr/linear_ttt.hpp"
#include "ttr/rng.hpp"

using namespace ttr;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
    Matrix m(r, c);
    for (auto& v : m.data) v = rng.normal(0.0, scale);
    return m;
}

// Independent least-squares route: pseudo-inverse via the eigendecomposition
// of A^T A computed with the Jacobi solver.
std::vector<double> pinv_solve(const Matrix& A, const std::vector<double>& y) {
    SymMatrix AtA(A.cols);
    for (std::size_t i = 0; i < A.cols; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < A.rows; ++k) s += A.at(k, i) * A.at(k, j);
            AtA.a[i * A.cols + j] = s;
        }
    auto eig = jacobi_eigen(AtA, /*want_vectors=*/true);
    auto aty = matvec_t(A, y);
    // w = V diag(1/lambda) V^T A^T y
    std::vector<double> tmp(A.cols, 0.0);
    for (std::size_t k = 0; k < A.cols; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < A.cols; ++i)
            proj += eig.eigenvectors[i * A.cols + k] * aty[i];
        tmp[k] = proj / eig.eigenvalues[k];
    }
    std::vector<double> w(A.cols, 0.0);
    for (std::size_t i = 0; i < A.cols; ++i)
        for (std::size_t k = 0; k < A.cols; ++k)
            w[i] += eig.eigenvectors[i * A.cols + k] * tmp[k];
    return w;
}

}  // namespace

TEST_CASE("least squares recovers exact solutions in the column space") {
    Rng rng(1);
    Matrix X = random_matrix(rng, 30, 6, 1.0);
    Matrix R = random_matrix(rng, 6, 3, 0.6);
    Matrix A = matmul(X, R);

    std::vector<double> w_true = {0.7, -1.2, 0.4};
    auto yP = matvec(A, w_true);
    auto [p, m] = fit_heads_least_squares(R, X, yP, yP);

    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(p[i] == Catch::Approx(w_true[i]).margin(1e-9));
        CHECK(m[i] == p[i]);  // identical systems give identical heads
    }
    // residual is zero
    auto pred = matvec(A, p);
    for (std::size_t i = 0; i < pred.size(); ++i)
        CHECK(pred[i] == Catch::Approx(yP[i]).margin(1e-9));
}

TEST_CASE("normal equations match an independent pseudo-inverse solve") {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        Matrix X = random_matrix(rng, 40, 8, 1.0);
        Matrix R = random_matrix(rng, 8, 4, 0.5);
        std::vector<double> yP(40), yM(40);
        for (auto& v : yP) v = rng.normal(0.0, 2.0);
        for (auto& v : yM) v = rng.normal(0.0, 2.0);

        auto [p, m] = fit_heads_least_squares(R, X, yP, yM);
        Matrix A = matmul(X, R);
        auto p2 = pinv_solve(A, yP);
        auto m2 = pinv_solve(A, yM);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p[i] == Catch::Approx(p2[i]).margin(1e-8));
            CHECK(m[i] == Catch::Approx(m2[i]).margin(1e-8));
        }
    }
}

TEST_CASE("rank deficiency raises a numeric error") {
    Rng rng(3);
    Matrix X = random_matrix(rng, 20, 5, 1.0);
    Matrix R(5, 3);  // all-zero representation: activations have rank 0
    std::vector<double> y(20, 1.0);
    CHECK_THROWS_AS(fit_heads_least_squares(R, X, y, y), NumericError);
}

TEST_CASE("ttt_step fixed points") {
    Rng rng(4);
    LinearTTTModel model;
    model.R = random_matrix(rng, 6, 3, 0.5);
    model.p = {0.3, -0.2, 0.9};
    model.m = {0.1, 0.4, -0.5};
    model.eta = 1e-3;
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal();

    // exact prediction: no update
    double E_P = model.predict_prior(x);
    auto R1 = ttt_step(model, x, E_P);
    CHECK(R1.data == model.R.data);

    // eta = 0: no update
    model.eta = 0.0;
    auto R2 = ttt_step(model, x, E_P + 1.0);
    CHECK(R2.data == model.R.data);
}

TEST_CASE("ttt_step equals the negative gradient of the half-squared prior loss") {
    Rng rng(5);
    for (int t = 0; t < 5; ++t) {
        LinearTTTModel model;
        model.R = random_matrix(rng, 5, 3, 0.7);
        model.p = {rng.normal(), rng.normal(), rng.normal()};
        model.m = model.p;
        model.eta = 1e-3;
        std::vector<double> x(5);
        for (auto& v : x) v = rng.normal();
        double E_P = rng.normal(0.0, 2.0);

        auto stepped = ttt_step(model, x, E_P);
        double h = 1e-6;
        for (std::size_t i = 0; i < model.R.rows; ++i) {
            for (std::size_t j = 0; j < model.R.cols; ++j) {
                LinearTTTModel pert = model;
                pert.R.at(i, j) += h;
                double lp = half_sq_loss(pert.predict_prior(x), E_P);
                pert.R.at(i, j) = model.R.at(i, j) - h;
                double lm = half_sq_loss(pert.predict_prior(x), E_P);
                double grad_fd = (lp - lm) / (2 * h);
                double update = stepped.at(i, j) - model.R.at(i, j);
                CHECK(update == Catch::Approx(-model.eta * grad_fd)
                                    .epsilon(1e-6)
                                    .margin(1e-10));
            }
        }
    }
}

TEST_CASE("scalar instance: underprediction with aligned heads improves main loss") {
    LinearTTTModel model;
    model.R = Matrix(1, 1);
    model.R.at(0, 0) = 1.0;
    model.p = {0.5};
    model.m = {0.5};
    model.eta = 1e-2;
    std::vector<double> x = {1.0};
    double E_P = 2.0, E_M = 2.0;  // both underpredicted (prediction = 0.5)

    double before = half_sq_loss(model.predict_main(x), E_M);
    LinearTTTModel stepped = model;
    stepped.R = ttt_step(model, x, E_P);
    double after = half_sq_loss(stepped.predict_main(x), E_M);
    CHECK(after < before);

    // analytic threshold: eta* = 2 e_M / (e_P |x|^2 p.m)
    double e = 2.0 - 0.5;
    double analytic = 2.0 * e / (e * 1.0 * 0.25);
    double bisect = eta_decrease_threshold(model, x, E_P, E_M, 16.0);
    CHECK(bisect == Catch::Approx(analytic).epsilon(1e-6));
}

TEST_CASE("theorem verification over generated trials") {
    TheoremGenConfig cfg;
    cfg.seed = 7;
    auto report = verify_theorem(cfg, 300);

    REQUIRE(report.trials.size() == 300);
    CHECK(report.satisfying > 100);  // the generator finds qualifying inputs routinely
    CHECK(report.decreased <= report.satisfying);
    CHECK(report.success_fraction() >= 0.95);

    // accounting: every trial is inconclusive, gated out, or counted
    std::size_t gated = 0;
    for (const auto& t : report.trials)
        if (!t.inconclusive && t.cond_sign && !t.cond_inner) ++gated;
    CHECK(report.satisfying + gated + report.inconclusive <= report.trials.size());

    // bisection threshold is positive whenever both conditions hold
    Rng rng(8);
    std::size_t checked = 0;
    for (const auto& t : report.trials) {
        if (t.inconclusive || !t.cond_sign || !t.cond_inner) continue;
        if (++checked > 20) break;
        CHECK(t.loss_after < t.loss_before);
    }
}

TEST_CASE("determinism of the theorem verifier") {
    TheoremGenConfig cfg;
    cfg.seed = 11;
    auto r1 = verify_theorem(cfg, 50);
    auto r2 = verify_theorem(cfg, 50);
    CHECK(r1.satisfying == r2.satisfying);
    CHECK(r1.decreased == r2.decreased);
    for (std::size_t i = 0; i < r1.trials.size(); ++i) {
        CHECK(r1.trials[i].loss_before == r2.trials[i].loss_before);
        CHECK(r1.trials[i].loss_after == r2.trials[i].loss_after);
    }
}
