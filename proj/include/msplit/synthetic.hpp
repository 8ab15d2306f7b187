#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>

#include "msplit/linops.hpp"
#include "msplit/operators.hpp"
#include "msplit/stepsize.hpp"

namespace msplit {

/// Dense instance with linear blocks:
///   A = ρId + N_[lo, hi],  Cx = Qx − q,  B = P,  and explicit L, K.
struct QuadraticData {
    Matrix L;
    Matrix K;
    Matrix Q;  // symmetric positive semidefinite
    Vector q;
    Matrix P;  // symmetric part positive semidefinite
    Vector c;
    double alpha = 1.0;
    double rho = 0.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    Index dim() const { return L.cols(); }
    Index data_dim() const { return L.rows(); }
};

inline double spectral_norm_dense(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()[0];
}

/// C = Q(·) − q is (1/‖Q‖)-cocoercive; a vanishing Q is given an effectively unbounded β.
inline double cocoercivity_of(const Matrix& q) {
    const double nq = spectral_norm_dense(q);
    return nq > 0.0 ? 1.0 / nq : 1e12;
}

inline ProblemSpec make_quadratic_problem(const QuadraticData& d, const MismatchFamily& family) {
    auto data = std::make_shared<const QuadraticData>(d);
    const double rho = d.rho, lo = d.lo, hi = d.hi;
    ResolventBlock a{rho, [rho, lo, hi](double gamma, const Vector& y) {
                         return Vector((y / (1.0 + gamma * rho)).cwiseMax(lo).cwiseMin(hi));
                     }};
    CocoerciveBlock c{cocoercivity_of(d.Q), [data](const Vector& x) { return Vector(data->Q * x - data->q); },
                      [data](double gamma, const Vector& y) {
                          Matrix m = Matrix::Identity(data->dim(), data->dim()) + gamma * data->Q;
                          return Vector(m.ldlt().solve(y + gamma * data->q));
                      }};
    LipschitzBlock b{spectral_norm_dense(d.P), [data](const Vector& y) { return Vector(data->P * y); }};
    ProblemSpec spec{a, c, b, LinearMap::dense(d.L), family, d.c, d.alpha};
    spec.validate();
    return spec;
}

inline ProblemSpec make_quadratic_problem(const QuadraticData& d) {
    return make_quadratic_problem(d, MismatchFamily(LinearMap::dense(d.K), ScheduleKind::constant, 0.0, 0.0, 0));
}

struct QuadraticOptions {
    Index dim = 16;
    Index data_dim = 20;
    double alpha = 1.0;
    double mismatch = 0.0;  // ‖K − Lᵀ‖ / ‖L‖
    bool with_B = true;
    bool with_C = true;
    double box = std::numeric_limits<double>::infinity();  // A gets N_[−box, box]
    std::optional<double> rho;  // unset: ρ = −αλ_min + ζ̃_{L*−K} + rho_margin
    double rho_margin = 0.5;
};

/// Random instance; K = Lᵀ + mismatch·‖L‖·E with E a seeded dense map of unit norm.
inline QuadraticData random_quadratic(const QuadraticOptions& o, std::uint64_t seed) {
    auto rng = seeded_engine(seed, 0x71756164ULL);
    auto gauss = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index j = 0; j < c; ++j) m.col(j) = gaussian_vector(r, rng);
        return m;
    };
    QuadraticData d;
    d.alpha = o.alpha;
    d.L = gauss(o.data_dim, o.dim) / std::sqrt(static_cast<double>(o.data_dim));
    const Matrix e = gauss(o.dim, o.data_dim);
    d.K = d.L.transpose();
    if (o.mismatch > 0.0) d.K += o.mismatch * spectral_norm_dense(d.L) * e / spectral_norm_dense(e);
    if (o.with_C) {
        const Matrix g = gauss(o.dim, o.dim);
        d.Q = 0.5 * g * g.transpose() / static_cast<double>(o.dim);
        d.q = gaussian_vector(o.dim, rng);
    } else {
        d.Q = Matrix::Zero(o.dim, o.dim);
        d.q = Vector::Zero(o.dim);
    }
    if (o.with_B) {
        const Matrix g = gauss(o.data_dim, o.data_dim);
        const Matrix skew = gauss(o.data_dim, o.data_dim);
        d.P = 0.3 * (g * g.transpose() / static_cast<double>(o.data_dim) + 0.5 * (skew - skew.transpose()) /
                                                                               std::sqrt(static_cast<double>(o.data_dim)));
    } else {
        d.P = Matrix::Zero(o.data_dim, o.data_dim);
    }
    d.c = gaussian_vector(o.data_dim, rng);
    d.lo = -o.box;
    d.hi = o.box;
    if (o.rho) {
        d.rho = *o.rho;
    } else {
        const LinearMap l = LinearMap::dense(d.L);
        const LinearMap k = LinearMap::dense(d.K);
        const double lam = lambda_min_estimate(k, l);
        const double zeta_tilde =
            spectral_norm_dense(d.P) * spectral_norm_dense(d.L.transpose() - d.K) * spectral_norm_dense(d.L);
        d.rho = -o.alpha * lam + zeta_tilde + o.rho_margin;
    }
    return d;
}

} // namespace msplit
