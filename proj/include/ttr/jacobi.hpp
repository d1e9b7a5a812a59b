#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ttr/core.hpp"

namespace ttr {

// Dense symmetric matrix stored row-major.
struct SymMatrix {
    std::size_t n = 0;
    std::vector<double> a;

    SymMatrix() = default;
    explicit SymMatrix(std::size_t n_) : n(n_), a(n_ * n_, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

struct JacobiResult {
    std::vector<double> eigenvalues;          // unsorted, as left on the diagonal
    std::vector<double> eigenvectors;         // column k = eigenvector of eigenvalues[k]
};

// Cyclic Jacobi rotations. Stops when the off-diagonal Frobenius norm drops
// below `tol`, errors after `max_sweeps` full sweeps.
inline JacobiResult jacobi_eigen(SymMatrix m, bool want_vectors = false,
                                 double tol = 1e-12, int max_sweeps = 100) {
    const std::size_t n = m.n;
    JacobiResult res;
    if (want_vectors) {
        res.eigenvectors.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) res.eigenvectors[i * n + i] = 1.0;
    }
    if (n == 0) return res;
    if (n == 1) {
        res.eigenvalues = {m.at(0, 0)};
        return res;
    }

    auto offdiag_frob = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * m.at(i, j) * m.at(i, j);
        return std::sqrt(s);
    };

    int sweep = 0;
    while (offdiag_frob() > tol) {
        if (++sweep > max_sweeps)
            throw NumericError("jacobi_eigen: no convergence after max sweeps");
        for (std::size_t p = 0; p < n - 1; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = m.at(p, q);
                if (apq == 0.0) continue;
                double app = m.at(p, p), aqq = m.at(q, q);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0)
                               ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                               : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    double akp = m.at(k, p), akq = m.at(k, q);
                    m.at(k, p) = c * akp - s * akq;
                    m.at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double apk = m.at(p, k), aqk = m.at(q, k);
                    m.at(p, k) = c * apk - s * aqk;
                    m.at(q, k) = s * apk + c * aqk;
                }
                if (want_vectors) {
                    for (std::size_t k = 0; k < n; ++k) {
                        double vkp = res.eigenvectors[k * n + p];
                        double vkq = res.eigenvectors[k * n + q];
                        res.eigenvectors[k * n + p] = c * vkp - s * vkq;
                        res.eigenvectors[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    res.eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.eigenvalues[i] = m.at(i, i);
    return res;
}

}  // namespace ttr
