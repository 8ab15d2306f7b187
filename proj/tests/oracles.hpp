#pragma once

// Independent reference computations used only by the test suites.

#include <cmath>
#include <functional>

#include "msplit/msplit.hpp"

namespace oracle {

using msplit::Index;
using msplit::Matrix;
using msplit::Vector;

/// Minimizer of a unimodal f on [a, b].
inline double golden_section(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol * std::max(1.0, std::abs(a) + std::abs(b))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

inline double dense_norm(const Matrix& m) {
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()[0];
}

inline double dense_sym_min_eig(const Matrix& m) {
    Matrix s = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    return es.eigenvalues()[0];
}

/// Solves 0 ∈ ρx + N_[lo,hi](x) + Mx − b for strongly monotone ρI + M:
/// projected fixed-point iteration to stagnation, then exact active-set polishing.
inline Vector solve_box_affine(const Matrix& m, const Vector& b, double rho, double lo, double hi) {
    const Index n = b.size();
    const Matrix f = rho * Matrix::Identity(n, n) + m;
    if (!std::isfinite(lo) && !std::isfinite(hi)) return f.lu().solve(b);
    const double mu = dense_sym_min_eig(f);
    const double big = dense_norm(f);
    if (!(mu > 0.0)) throw std::runtime_error("oracle: operator is not strongly monotone");
    const double tau = mu / (big * big);
    Vector x = Vector::Zero(n);
    for (int it = 0; it < 2000000; ++it) {
        Vector nx = (x - tau * (f * x - b)).cwiseMax(lo).cwiseMin(hi);
        const double change = (nx - x).norm();
        x = nx;
        if (change <= 1e-15 * std::max(1.0, x.norm())) break;
    }
    for (int pass = 0; pass < 5; ++pass) {
        std::vector<Index> free;
        for (Index i = 0; i < n; ++i)
            if (x[i] > lo + 1e-9 && x[i] < hi - 1e-9) free.push_back(i);
        if (free.empty()) break;
        const Index k = static_cast<Index>(free.size());
        Matrix ff(k, k);
        Vector rhs(k);
        for (Index a = 0; a < k; ++a) {
            double r = b[free[a]];
            for (Index j = 0; j < n; ++j) {
                const bool is_free = std::find(free.begin(), free.end(), j) != free.end();
                if (!is_free) r -= f(free[a], j) * x[j];
            }
            rhs[a] = r;
            for (Index c = 0; c < k; ++c) ff(a, c) = f(free[a], free[c]);
        }
        Vector xf = ff.lu().solve(rhs);
        Vector cand = x;
        for (Index a = 0; a < k; ++a) cand[free[a]] = xf[a];
        if ((cand.array() < lo).any() || (cand.array() > hi).any()) break;
        x = cand;
    }
    return x;
}

/// Exact solution of the quadratic instance with K replaced by `k`.
inline Vector quadratic_solution(const msplit::QuadraticData& d, const Matrix& k) {
    const Matrix m = d.Q + d.alpha * k * d.L + k * d.P * d.L;
    const Vector b = d.q + d.alpha * k * d.c;
    return solve_box_affine(m, b, d.rho, d.lo, d.hi);
}

inline Vector quadratic_solution(const msplit::QuadraticData& d) { return quadratic_solution(d, d.K); }
inline Vector matched_solution(const msplit::QuadraticData& d) { return quadratic_solution(d, d.L.transpose()); }

/// Minimizer of u ↦ ½‖u − x‖² + s(u) for smooth s with L-Lipschitz gradient, by gradient descent.
inline Vector prox_by_gradient_descent(const std::function<Vector(const Vector&)>& grad_s, double lip, const Vector& x,
                                       int iters = 200000, double tol = 1e-13) {
    Vector u = x;
    const double step = 1.0 / (1.0 + lip);
    for (int it = 0; it < iters; ++it) {
        const Vector g = (u - x) + grad_s(u);
        u -= step * g;
        if (g.norm() < tol) break;
    }
    return u;
}

} // namespace oracle
