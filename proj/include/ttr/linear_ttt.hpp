#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/jacobi.hpp"
#include "ttr/potentials.hpp"
#include "ttr/rng.hpp"

namespace ttr {

// Minimal dense row-major matrix for the linear-model analysis.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw InputError("matmul: shape mismatch");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            double v = a.at(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += v * b.at(k, j);
        }
    return c;
}

inline std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols != x.size()) throw InputError("matvec: shape mismatch");
    std::vector<double> y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) y[i] += a.at(i, j) * x[j];
    return y;
}

inline std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x) {
    if (a.rows != x.size()) throw InputError("matvec_t: shape mismatch");
    std::vector<double> y(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += a.at(i, j) * x[i];
    return y;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Linear model of the appendix analysis: predictions are x^T R p (prior) and
// x^T R m (main). Squared-loss convention: L = 1/2 (prediction - label)^2.
struct LinearTTTModel {
    Matrix R;               // f x d representation
    std::vector<double> m;  // main head, d
    std::vector<double> p;  // prior head, d
    double eta = 1e-4;

    double predict_prior(const std::vector<double>& x) const {
        return dot(matvec_t(R, x), p);
    }
    double predict_main(const std::vector<double>& x) const {
        return dot(matvec_t(R, x), m);
    }
};

inline double half_sq_loss(double prediction, double label) {
    double r = prediction - label;
    return 0.5 * r * r;
}

namespace detail {

// Solves the SPD system M w = b by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_dense(Matrix M, std::vector<double> b) {
    const std::size_t n = M.rows;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(M.at(r, col)) > std::abs(M.at(piv, col))) piv = r;
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(M.at(col, c), M.at(piv, c));
            std::swap(b[col], b[piv]);
        }
        double d = M.at(col, col);
        if (std::abs(d) < 1e-300) throw NumericError("solve_dense: singular matrix");
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = M.at(r, col) / d;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) M.at(r, c) -= f * M.at(col, c);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> w(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= M.at(i, j) * w[j];
        w[i] = s / M.at(i, i);
    }
    return w;
}

inline std::string fmt_sv(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

inline double min_singular_value(const Matrix& A) {
    Matrix AtA(A.cols, A.cols);
    for (std::size_t i = 0; i < A.cols; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < A.rows; ++k) s += A.at(k, i) * A.at(k, j);
            AtA.at(i, j) = s;
        }
    SymMatrix sym(A.cols);
    sym.a = AtA.data;
    auto eig = jacobi_eigen(sym);
    double mn = eig.eigenvalues.empty() ? 0.0 : eig.eigenvalues[0];
    for (double ev : eig.eigenvalues) mn = std::min(mn, ev);
    return std::sqrt(std::max(0.0, mn));
}

}  // namespace detail

// Ordinary least squares for both heads on the frozen representation:
// p = (A^T A)^{-1} A^T yP and likewise for m, with A = X R.
inline std::pair<std::vector<double>, std::vector<double>> fit_heads_least_squares(
    const Matrix& R, const Matrix& X, const std::vector<double>& yP,
    const std::vector<double>& yM) {
    if (X.cols != R.rows) throw InputError("fit_heads_least_squares: X/R shape mismatch");
    if (yP.size() != X.rows || yM.size() != X.rows)
        throw InputError("fit_heads_least_squares: label size mismatch");
    Matrix A = matmul(X, R);
    double smin = detail::min_singular_value(A);
    if (smin <= 1e-8)
        throw NumericError("fit_heads_least_squares: rank-deficient activations, min singular value " +
                           detail::fmt_sv(smin));

    Matrix AtA(A.cols, A.cols);
    for (std::size_t i = 0; i < A.cols; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < A.rows; ++k) s += A.at(k, i) * A.at(k, j);
            AtA.at(i, j) = s;
        }
    auto p = detail::solve_dense(AtA, matvec_t(A, yP));
    auto m = detail::solve_dense(AtA, matvec_t(A, yM));
    return {p, m};
}

// One gradient-descent step on the prior loss L_P = 1/2 (x^T R p - E_P)^2:
// R' = R - eta (x^T R p - E_P) x p^T, equivalently R + eta (E_P - pred) x p^T.
inline Matrix ttt_step(const LinearTTTModel& model, const std::vector<double>& x, double E_P) {
    if (x.size() != model.R.rows) throw InputError("ttt_step: feature size mismatch");
    double resid = E_P - model.predict_prior(x);
    Matrix Rp = model.R;
    for (std::size_t i = 0; i < Rp.rows; ++i)
        for (std::size_t j = 0; j < Rp.cols; ++j)
            Rp.at(i, j) += model.eta * resid * x[i] * model.p[j];
    return Rp;
}

// Largest learning rate (by bisection) for which one ttt_step still strictly
// decreases the main loss on (x, E_M).
inline double eta_decrease_threshold(LinearTTTModel model, const std::vector<double>& x,
                                     double E_P, double E_M, double eta_hi = 1.0,
                                     int iters = 60) {
    double before = half_sq_loss(model.predict_main(x), E_M);
    auto decreases = [&](double eta) {
        model.eta = eta;
        LinearTTTModel stepped = model;
        stepped.R = ttt_step(model, x, E_P);
        return half_sq_loss(stepped.predict_main(x), E_M) < before;
    };
    double lo = 0.0, hi = eta_hi;
    if (!decreases(hi)) {
        for (int i = 0; i < iters && hi > 1e-300; ++i) {
            hi *= 0.5;
            if (decreases(hi)) break;
        }
        if (!decreases(hi)) return 0.0;
    }
    lo = hi;
    // grow back up to bracket the sign change, then bisect
    while (hi < eta_hi && decreases(hi * 2.0)) hi *= 2.0;
    double top = std::min(hi * 2.0, eta_hi);
    for (int i = 0; i < iters; ++i) {
        double mid = 0.5 * (lo + top);
        if (decreases(mid))
            lo = mid;
        else
            top = mid;
    }
    return lo;
}

struct TheoremTrial {
    bool inconclusive = false;
    bool cond_sign = false;   // sign(E_P - pred_P) == sign(E_M - pred_M) at the test input
    bool cond_inner = false;  // p^T m > 0
    double test_distance = 0.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    bool decreased = false;
};

struct TheoremReport {
    std::vector<TheoremTrial> trials;
    std::size_t satisfying = 0;  // trials meeting both conditions
    std::size_t decreased = 0;   // of those, trials with strict main-loss decrease
    std::size_t inconclusive = 0;

    double success_fraction() const {
        return satisfying ? static_cast<double>(decreased) / static_cast<double>(satisfying)
                          : 0.0;
    }
};

struct TheoremGenConfig {
    std::size_t n_features = 8;
    std::size_t n_latent = 4;
    std::size_t n_train = 40;
    double eta = 1e-4;
    std::uint64_t seed = 0;
    int max_search = 40;  // bounded search for a condition-satisfying test input
};

// Dimer-feature instances: features are a Gaussian radial expansion of the
// pair distance; prior labels from the Lennard-Jones dimer energy, main labels
// from the reference oracle. Both diverge as the distance vanishes, which is
// the regime the theorem exploits.
inline TheoremReport verify_theorem(const TheoremGenConfig& cfg, std::size_t trials) {
    PairParams pair = default_pair_params();
    ReferenceOracleParams oracle;
    const double sigma = pair.sigma_pair("C", "C");

    auto features = [&](double r, std::size_t f) {
        std::vector<double> x(f);
        double lo = 0.3 * sigma, hi = 2.0 * sigma;
        double spacing = (hi - lo) / static_cast<double>(f - 1);
        double width = 1.3 * spacing;
        for (std::size_t k = 0; k < f; ++k) {
            double mu = lo + spacing * static_cast<double>(k);
            x[k] = std::exp(-(r - mu) * (r - mu) / (2.0 * width * width));
        }
        return x;
    };
    auto dimer = [&](double r) {
        Structure s;
        s.species = {"C", "C"};
        s.positions = {{0, 0, 0}, {r, 0, 0}};
        s.structure_id = "dimer";
        return s;
    };

    TheoremReport report;
    Rng root(cfg.seed ^ 0x1F83D9ABFB41BD6Bull);
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = root.child(t + 1);
        TheoremTrial trial;

        Matrix X(cfg.n_train, cfg.n_features);
        std::vector<double> yP(cfg.n_train), yM(cfg.n_train);
        for (std::size_t i = 0; i < cfg.n_train; ++i) {
            double r = rng.uniform(0.95 * sigma, 1.8 * sigma);
            auto x = features(r, cfg.n_features);
            for (std::size_t k = 0; k < cfg.n_features; ++k) X.at(i, k) = x[k];
            yP[i] = lj_energy_forces(dimer(r), pair).first;
            yM[i] = reference_energy_forces(dimer(r), oracle).first;
        }

        LinearTTTModel model;
        model.eta = cfg.eta;
        model.R = Matrix(cfg.n_features, cfg.n_latent);
        for (auto& v : model.R.data)
            v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.n_features)));

        try {
            auto [p, m] = fit_heads_least_squares(model.R, X, yP, yM);
            model.p = p;
            model.m = m;
        } catch (const NumericError&) {
            trial.inconclusive = true;
            report.trials.push_back(trial);
            ++report.inconclusive;
            continue;
        }

        trial.cond_inner = dot(model.p, model.m) > 0.0;

        // search decreasing dimer distances for correlated underprediction
        bool found = false;
        double r_test = 0.9 * sigma;
        for (int it = 0; it < cfg.max_search; ++it, r_test *= 0.93) {
            auto x = features(r_test, cfg.n_features);
            double E_P = lj_energy_forces(dimer(r_test), pair).first;
            double E_M = reference_energy_forces(dimer(r_test), oracle).first;
            double rp = E_P - model.predict_prior(x);
            double rm = E_M - model.predict_main(x);
            if ((rp > 0.0) == (rm > 0.0) && rp != 0.0 && rm != 0.0) {
                trial.cond_sign = true;
                trial.test_distance = r_test;
                trial.loss_before = half_sq_loss(model.predict_main(x), E_M);
                LinearTTTModel stepped = model;
                stepped.R = ttt_step(model, x, E_P);
                trial.loss_after = half_sq_loss(stepped.predict_main(x), E_M);
                trial.decreased = trial.loss_after < trial.loss_before;
                found = true;
                break;
            }
        }
        if (!found) {
            trial.inconclusive = true;
            ++report.inconclusive;
        } else if (trial.cond_sign && trial.cond_inner) {
            ++report.satisfying;
            if (trial.decreased) ++report.decreased;
        }
        report.trials.push_back(trial);
    }
    return report;
}

}  // namespace ttr
