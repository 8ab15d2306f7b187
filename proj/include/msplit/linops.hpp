#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "msplit/error.hpp"

namespace msplit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Deterministic engine for the (seed, stream) pair.
inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

inline Vector gaussian_vector(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

/// Uniform sample on the unit sphere of R^n.
inline Vector unit_sphere_vector(Index n, std::mt19937_64& rng) {
    Vector v = gaussian_vector(n, rng);
    double nv = v.norm();
    while (nv == 0.0) {
        v = gaussian_vector(n, rng);
        nv = v.norm();
    }
    return v / nv;
}

/// Matrix-free linear operator R^in_dim -> R^out_dim with an optional adjoint.
///
/// Instances are immutable; copies share the underlying closures.
class LinearMap {
public:
    using ApplyFn = std::function<Vector(const Vector&)>;

    LinearMap(Index in_dim, Index out_dim, ApplyFn apply, ApplyFn adjoint_apply = {})
        : in_dim_(in_dim), out_dim_(out_dim), apply_(std::move(apply)), adjoint_(std::move(adjoint_apply)) {
        if (in_dim <= 0 || out_dim <= 0) throw DomainError("LinearMap: dimensions must be positive");
        if (!apply_) throw DomainError("LinearMap: apply must be set");
    }

    Index in_dim() const noexcept { return in_dim_; }
    Index out_dim() const noexcept { return out_dim_; }
    bool has_adjoint() const noexcept { return static_cast<bool>(adjoint_); }

    Vector apply(const Vector& x) const {
        require_dims(in_dim_, x.size(), "LinearMap::apply input");
        Vector y = apply_(x);
        require_dims(out_dim_, y.size(), "LinearMap::apply output");
        return y;
    }

    Vector adjoint_apply(const Vector& y) const {
        if (!adjoint_) throw DomainError("LinearMap::adjoint_apply: map has no adjoint");
        require_dims(out_dim_, y.size(), "LinearMap::adjoint_apply input");
        Vector x = adjoint_(y);
        require_dims(in_dim_, x.size(), "LinearMap::adjoint_apply output");
        return x;
    }

    Vector operator()(const Vector& x) const { return apply(x); }

    /// The adjoint as a map in its own right.
    LinearMap adjoint() const {
        if (!adjoint_) throw DomainError("LinearMap::adjoint: map has no adjoint");
        return LinearMap(out_dim_, in_dim_, adjoint_, apply_);
    }

    /// Dense matrix of the map, column by column.
    Matrix materialize() const {
        Matrix m(out_dim_, in_dim_);
        Vector e = Vector::Zero(in_dim_);
        for (Index j = 0; j < in_dim_; ++j) {
            e[j] = 1.0;
            m.col(j) = apply(e);
            e[j] = 0.0;
        }
        return m;
    }

    static LinearMap identity(Index n) {
        auto id = [](const Vector& x) { return x; };
        return LinearMap(n, n, id, id);
    }

    static LinearMap zero(Index in_dim, Index out_dim) {
        return LinearMap(
            in_dim, out_dim, [out_dim](const Vector&) { return Vector(Vector::Zero(out_dim)); },
            [in_dim](const Vector&) { return Vector(Vector::Zero(in_dim)); });
    }

    static LinearMap dense(Matrix m) {
        auto shared = std::make_shared<const Matrix>(std::move(m));
        return LinearMap(
            shared->cols(), shared->rows(), [shared](const Vector& x) { return Vector(*shared * x); },
            [shared](const Vector& y) { return Vector(shared->transpose() * y); });
    }

    static LinearMap sparse(SparseMatrix m) {
        auto shared = std::make_shared<const SparseMatrix>(std::move(m));
        return LinearMap(
            shared->cols(), shared->rows(), [shared](const Vector& x) { return Vector(*shared * x); },
            [shared](const Vector& y) { return Vector(shared->transpose() * y); });
    }

private:
    Index in_dim_;
    Index out_dim_;
    ApplyFn apply_;
    ApplyFn adjoint_;
};

/// outer ∘ inner.
inline LinearMap compose(const LinearMap& outer, const LinearMap& inner) {
    require_dims(outer.in_dim(), inner.out_dim(), "compose");
    LinearMap::ApplyFn adj;
    if (outer.has_adjoint() && inner.has_adjoint()) {
        adj = [outer, inner](const Vector& y) { return inner.adjoint_apply(outer.adjoint_apply(y)); };
    }
    return LinearMap(
        inner.in_dim(), outer.out_dim(), [outer, inner](const Vector& x) { return outer.apply(inner.apply(x)); },
        adj);
}

/// a·M + b·N.
inline LinearMap linear_combination(double a, const LinearMap& m, double b, const LinearMap& n) {
    require_dims(m.in_dim(), n.in_dim(), "linear_combination input");
    require_dims(m.out_dim(), n.out_dim(), "linear_combination output");
    LinearMap::ApplyFn adj;
    if (m.has_adjoint() && n.has_adjoint()) {
        adj = [a, m, b, n](const Vector& y) { return Vector(a * m.adjoint_apply(y) + b * n.adjoint_apply(y)); };
    }
    return LinearMap(
        m.in_dim(), m.out_dim(), [a, m, b, n](const Vector& x) { return Vector(a * m.apply(x) + b * n.apply(x)); },
        adj);
}

inline LinearMap difference(const LinearMap& m, const LinearMap& n) { return linear_combination(1.0, m, -1.0, n); }

struct NormEstimate {
    double value = 0.0;
    int iterations = 0;
};

inline constexpr double kDefaultTol = 1e-8;
inline constexpr int kDefaultMaxIter = 10000;

/// Spectral norm by power iteration on M*M.
///
/// Stops once the eigen-residual ‖M*Mv − θv‖ falls below tol·max(θ, 1); the
/// Rayleigh quotient error is then quadratic in that residual.
inline NormEstimate operator_norm(const LinearMap& map, double tol = kDefaultTol, int max_iter = kDefaultMaxIter,
                                  std::uint64_t seed = 0) {
    if (!(tol > 0.0)) throw DomainError("operator_norm: tol must be positive");
    if (!map.has_adjoint()) throw DomainError("operator_norm: map needs adjoint_apply");
    auto rng = seeded_engine(seed, 0x6e6f726dULL);
    Vector v = unit_sphere_vector(map.in_dim(), rng);
    double theta = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Vector mv = map.apply(v);
        Vector w = map.adjoint_apply(mv);
        theta = mv.squaredNorm();
        const double residual = (w - theta * v).norm();
        if (residual <= tol * std::max(theta, 1.0)) return {std::sqrt(theta), it};
        const double nw = w.norm();
        if (nw == 0.0) return {0.0, it};
        v = w / nw;
    }
    const double best = std::sqrt(theta);
    throw ConvergenceError("operator_norm: no convergence within max_iter", best, best, best, max_iter);
}

/// Dense route is exact to LAPACK precision; larger problems use shifted power iteration.
inline constexpr Index kDenseEigenLimit = 4096;

namespace detail {

// Largest eigenvalue of a symmetric map by power iteration with Rayleigh quotient.
// Returns (eigenvalue, iterations) and throws ConvergenceError carrying the bracket
// [θ − ‖r‖, θ + ‖r‖] on failure.
template <class Apply>
std::pair<double, int> symmetric_power(const Apply& apply, Index n, double tol, int max_iter, std::mt19937_64& rng,
                                       double scale) {
    Vector v = unit_sphere_vector(n, rng);
    double theta = 0.0;
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= max_iter; ++it) {
        Vector w = apply(v);
        theta = v.dot(w);
        residual = (w - theta * v).norm();
        if (residual <= tol * std::max(scale, 1.0)) return {theta, it};
        const double nw = w.norm();
        if (nw == 0.0) return {0.0, it};
        v = w / nw;
    }
    throw ConvergenceError("symmetric power iteration: no convergence", theta, theta - residual, theta + residual,
                           max_iter);
}

} // namespace detail

/// Smallest eigenvalue of the symmetric part of K∘L.
inline double lambda_min_estimate(const LinearMap& k, const LinearMap& l, double tol = kDefaultTol,
                                  int max_iter = kDefaultMaxIter, Index dense_limit = kDenseEigenLimit,
                                  std::uint64_t seed = 0) {
    if (!(tol > 0.0)) throw DomainError("lambda_min_estimate: tol must be positive");
    require_dims(l.out_dim(), k.in_dim(), "lambda_min_estimate: K∘L composition");
    if (l.in_dim() != k.out_dim()) throw DimensionError("lambda_min_estimate: K∘L is not square");
    const Index n = l.in_dim();

    if (n <= dense_limit) {
        Matrix kl = compose(k, l).materialize();
        Matrix sym = 0.5 * (kl + kl.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) throw ConvergenceError("lambda_min_estimate: eigensolver failed", 0, 0, 0, 0);
        return solver.eigenvalues()[0];
    }

    if (!k.has_adjoint() || !l.has_adjoint()) {
        throw DomainError("lambda_min_estimate: matrix-free route needs adjoints of K and L");
    }
    auto sym = [&](const Vector& x) {
        return Vector(0.5 * (k.apply(l.apply(x)) + l.adjoint_apply(k.adjoint_apply(x))));
    };
    auto rng = seeded_engine(seed, 0x6c6d696eULL);
    // Lanczos with full reorthogonalization. Power iteration stalls when λ_min is poorly
    // separated or ±λ have equal magnitude; the Krylov edge Ritz value does not.
    const Index cap = std::min<Index>(n, std::max(max_iter, 1));
    Matrix basis(n, cap);
    std::vector<double> alpha, beta;
    basis.col(0) = unit_sphere_vector(n, rng);
    double ritz = 0.0, ritz_residual = std::numeric_limits<double>::infinity(), scale = 0.0;
    for (Index j = 0; j < cap; ++j) {
        Vector w = sym(basis.col(j));
        alpha.push_back(basis.col(j).dot(w));
        // Two Gram-Schmidt passes against the whole basis.
        for (int pass = 0; pass < 2; ++pass) w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
        const double b = w.norm();
        const Index m = j + 1;
        Matrix t = Matrix::Zero(m, m);
        for (Index i = 0; i < m; ++i) {
            t(i, i) = alpha[static_cast<std::size_t>(i)];
            if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
        ritz = eig.eigenvalues()[0];
        scale = std::max(std::abs(eig.eigenvalues()[0]), std::abs(eig.eigenvalues()[m - 1]));
        ritz_residual = b * std::abs(eig.eigenvectors()(m - 1, 0));
        if (ritz_residual <= tol * std::max(scale, 1.0) || b <= 1e-14 * std::max(scale, 1.0) || m == n) return ritz;
        beta.push_back(b);
        if (j + 1 < cap) basis.col(j + 1) = w / b;
    }
    throw ConvergenceError("lambda_min_estimate: Lanczos did not converge", ritz, ritz - ritz_residual,
                           ritz + ritz_residual, static_cast<int>(cap));
}

enum class ScheduleKind { constant, geometric, summable_custom };

inline const char* to_string(ScheduleKind k) {
    switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::geometric: return "geometric";
    case ScheduleKind::summable_custom: return "summable_custom";
    }
    return "?";
}

inline ScheduleKind parse_schedule(const std::string& s) {
    if (s == "constant") return ScheduleKind::constant;
    if (s == "geometric") return ScheduleKind::geometric;
    if (s == "summable_custom") return ScheduleKind::summable_custom;
    throw DomainError("unknown mismatch schedule '" + s + "'");
}

/// Surrogate adjoint K with iteration-indexed perturbations K_n = K + ω(n)·E_n,
/// E_n a seeded rank-one map of unit operator norm, so ‖K_n − K‖ = ω(n) exactly.
class MismatchFamily {
public:
    using OmegaFn = std::function<double(long)>;

    MismatchFamily(LinearMap base, ScheduleKind kind, double omega0, double eta_bar, std::uint64_t seed,
                   OmegaFn custom = {})
        : base_(std::move(base)), kind_(kind), omega0_(omega0), eta_bar_(eta_bar), seed_(seed),
          custom_(std::move(custom)) {
        if (!(omega0 >= 0.0) || !std::isfinite(omega0)) throw DomainError("mismatch family: omega0 must be >= 0");
        if (kind != ScheduleKind::constant && !(eta_bar >= 0.0 && eta_bar < 1.0)) {
            throw DomainError("mismatch family: eta_bar must lie in [0, 1)");
        }
    }

    const LinearMap& base() const noexcept { return base_; }
    ScheduleKind kind() const noexcept { return kind_; }
    double omega0() const noexcept { return omega0_; }
    double eta_bar() const noexcept { return eta_bar_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Certified bound on ‖K_n − K‖.
    double omega(long n) const {
        switch (kind_) {
        case ScheduleKind::constant: return 0.0;
        case ScheduleKind::geometric: return omega0_ * std::pow(eta_bar_, static_cast<double>(n));
        case ScheduleKind::summable_custom:
            if (custom_) return custom_(n);
            // ω0 / (n+1)^2 unless a custom schedule is supplied.
            return omega0_ / ((n + 1.0) * (n + 1.0));
        }
        return 0.0;
    }

    LinearMap perturbation(long n) const {
        const double w = omega(n);
        if (w == 0.0) return base_;
        auto rng = seeded_engine(seed_, static_cast<std::uint64_t>(n) + 1);
        auto u = std::make_shared<const Vector>(unit_sphere_vector(base_.out_dim(), rng));
        auto v = std::make_shared<const Vector>(unit_sphere_vector(base_.in_dim(), rng));
        const LinearMap k = base_;
        LinearMap::ApplyFn adj;
        if (k.has_adjoint()) {
            adj = [k, u, v, w](const Vector& y) { return Vector(k.adjoint_apply(y) + (w * u->dot(y)) * *v); };
        }
        return LinearMap(
            k.in_dim(), k.out_dim(), [k, u, v, w](const Vector& x) { return Vector(k.apply(x) + (w * v->dot(x)) * *u); },
            adj);
    }

private:
    LinearMap base_;
    ScheduleKind kind_;
    double omega0_;
    double eta_bar_;
    std::uint64_t seed_;
    OmegaFn custom_;
};

inline MismatchFamily make_mismatch_family(const LinearMap& k, ScheduleKind kind, double omega0, double eta_bar,
                                           std::uint64_t seed) {
    return MismatchFamily(k, kind, omega0, eta_bar, seed);
}

/// Norms and eigenvalue bounds that feed the step-size rules.
struct SpectralEstimates {
    double norm_L = 0.0;
    double norm_K = 0.0;
    double norm_KL = 0.0;
    double norm_mismatch = 0.0;  // ‖L* − K‖
    double lambda_min = 0.0;     // of (KL + (KL)*)/2
    double lambda_min_matched = 0.0;  // of L*L, i.e. σ_min(L)²
    double tol = kDefaultTol;
    int iters_used = 0;
};

inline constexpr double kRoundoffMismatch = 1e-13;

/// Fills every SpectralEstimates field for the pair (L, K).
inline SpectralEstimates estimate_spectra(const LinearMap& l, const LinearMap& k, double tol = kDefaultTol,
                                          int max_iter = kDefaultMaxIter, std::uint64_t seed = 0) {
    SpectralEstimates s;
    s.tol = tol;
    auto nl = operator_norm(l, tol, max_iter, seed);
    auto nk = operator_norm(k, tol, max_iter, seed + 1);
    auto nkl = operator_norm(compose(k, l), tol, max_iter, seed + 2);
    auto nm = operator_norm(difference(l.adjoint(), k), tol, max_iter, seed + 3);
    s.norm_L = nl.value;
    s.norm_K = nk.value;
    s.norm_KL = nkl.value;
    // A difference at round-off level means K is L* up to summation order.
    s.norm_mismatch = nm.value > kRoundoffMismatch * std::max(nl.value, nk.value) ? nm.value : 0.0;
    s.iters_used = nl.iterations + nk.iterations + nkl.iterations + nm.iterations;
    s.lambda_min = lambda_min_estimate(k, l, tol, max_iter, kDenseEigenLimit, seed + 4);
    s.lambda_min_matched = lambda_min_estimate(l.adjoint(), l, tol, max_iter, kDenseEigenLimit, seed + 5);
    return s;
}

} // namespace msplit
