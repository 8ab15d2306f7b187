#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include "msplit/linops.hpp"

namespace msplit {

// ---------------------------------------------------------------------------
// f(x) = ι_[0, x_max]^N(x) + (ρ/2)‖x‖²

struct BoxRidge {
    double x_max = 1.0;
    double rho = 1.0;
};

inline Vector prox_box_ridge(const BoxRidge& p, double gamma, const Vector& x) {
    if (!(gamma >= 0.0)) throw DomainError("prox_box_ridge: gamma must be nonnegative");
    const double shrink = 1.0 / (gamma * p.rho + 1.0);
    return (shrink * x).cwiseMax(0.0).cwiseMin(p.x_max);
}

inline double box_ridge_value(const BoxRidge& p, const Vector& x) {
    if ((x.array() < 0.0).any() || (x.array() > p.x_max).any()) return std::numeric_limits<double>::infinity();
    return 0.5 * p.rho * x.squaredNorm();
}

// ---------------------------------------------------------------------------
// Huber function φ_δ and g = weight · Φ_δ ∘ W

inline double huber(double delta, double eta) {
    const double a = std::abs(eta);
    return a > delta ? a - 0.5 * delta : eta * eta / (2.0 * delta);
}

inline double huber_derivative(double delta, double eta) {
    if (std::abs(eta) > delta) return eta > 0.0 ? 1.0 : -1.0;
    return eta / delta;
}

inline double prox_huber_scalar(double delta, double gamma, double eta) {
    if (std::abs(eta) > delta + gamma) return eta > 0.0 ? eta - gamma : eta + gamma;
    return delta * eta / (gamma + delta);
}

struct HuberTransform {
    double delta;
    LinearMap W;
    double weight;

    HuberTransform(double delta_, LinearMap w_, double weight_ = 1.0)
        : delta(delta_), W(std::move(w_)), weight(weight_) {
        if (!(delta > 0.0)) throw DomainError("HuberTransform: delta must be positive");
        if (!(weight > 0.0)) throw DomainError("HuberTransform: weight must be positive");
        if (W.in_dim() != W.out_dim() || !W.has_adjoint()) {
            throw DomainError("HuberTransform: W must be square with an adjoint");
        }
        auto rng = seeded_engine(0x77ULL);
        const Vector x = gaussian_vector(W.in_dim(), rng);
        if ((W.adjoint_apply(W.apply(x)) - x).norm() > 1e-12 * std::max(1.0, x.norm()) * 10.0) {
            throw DomainError("HuberTransform: W is not orthonormal");
        }
    }
};

inline double g_value(const HuberTransform& p, const Vector& x) {
    const Vector wx = p.W.apply(x);
    double s = 0.0;
    for (Index i = 0; i < wx.size(); ++i) s += huber(p.delta, wx[i]);
    return p.weight * s;
}

inline Vector prox_g(const HuberTransform& p, double gamma, const Vector& x) {
    if (!(gamma >= 0.0)) throw DomainError("prox_g: gamma must be nonnegative");
    Vector wx = p.W.apply(x);
    const double step = gamma * p.weight;
    for (Index i = 0; i < wx.size(); ++i) wx[i] = prox_huber_scalar(p.delta, step, wx[i]);
    return p.W.adjoint_apply(wx);
}

/// ∇g; Lipschitz with constant weight/δ.
inline Vector grad_g(const HuberTransform& p, const Vector& x) {
    Vector wx = p.W.apply(x);
    for (Index i = 0; i < wx.size(); ++i) wx[i] = huber_derivative(p.delta, wx[i]);
    return p.weight * p.W.adjoint_apply(wx);
}

// ---------------------------------------------------------------------------
// Generalized Anscombe data fidelity h(y) = Σ φ(y_m; c_m)

class AnscombeFidelity {
public:
    AnscombeFidelity(Vector c, double sigma) : c_(std::move(c)), sigma_(sigma) {
        if (!(sigma >= 0.0)) throw DomainError("AnscombeFidelity: sigma must be nonnegative");
        const double floor = -0.375 - sigma * sigma;
        for (Index m = 0; m < c_.size(); ++m) {
            if (!(c_[m] >= floor)) {
                throw DomainError("AnscombeFidelity: data entry " + std::to_string(m) + " below -3/8 - sigma^2");
            }
        }
    }

    const Vector& c() const noexcept { return c_; }
    double sigma() const noexcept { return sigma_; }

    /// (3/8 + σ²)^{-3/2} √(3/8 + b + σ²): curvature bound of φ(·; b).
    double nu(double b) const {
        const double s = 0.375 + sigma_ * sigma_;
        return std::pow(s, -1.5) * std::sqrt(s + b);
    }

    double phi(double a, double b) const {
        const double s = 0.375 + sigma_ * sigma_;
        if (a >= 0.0) {
            const double d = std::sqrt(b + s) - std::sqrt(a + s);
            return 2.0 * d * d;
        }
        return phi(0.0, b) + phi_dot(0.0, b) * a + 0.5 * nu(b) * a * a;
    }

    double phi_dot(double a, double b) const {
        const double s8 = 8.0 * sigma_ * sigma_ + 3.0;
        if (a >= 0.0) return 2.0 - 2.0 * std::sqrt(8.0 * b + s8) / std::sqrt(8.0 * a + s8);
        return phi_dot(0.0, b) + nu(b) * a;
    }

    double value(const Vector& y) const {
        require_dims(c_.size(), y.size(), "AnscombeFidelity::value");
        double s = 0.0;
        for (Index m = 0; m < y.size(); ++m) s += phi(y[m], c_[m]);
        return s;
    }

private:
    Vector c_;
    double sigma_;
};

inline Vector anscombe_grad(const AnscombeFidelity& p, const Vector& y) {
    require_dims(p.c().size(), y.size(), "anscombe_grad");
    Vector g(y.size());
    for (Index m = 0; m < y.size(); ++m) g[m] = p.phi_dot(y[m], p.c()[m]);
    return g;
}

/// ζ = max_m ν(c_m).
inline double anscombe_lipschitz(const AnscombeFidelity& p) {
    if (p.c().size() == 0) throw DomainError("anscombe_lipschitz: empty data");
    double z = 0.0;
    for (Index m = 0; m < p.c().size(); ++m) z = std::max(z, p.nu(p.c()[m]));
    return z;
}

// ---------------------------------------------------------------------------
// Orthonormal Haar transform. Coefficient layout: [coarsest approx | coarsest detail | ... | finest detail].

namespace detail {

inline bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

// One analysis level on the strided sequence data[0], data[stride], ... of length len.
inline void haar_step_forward(double* data, Index len, Index stride, Vector& scratch) {
    const double r = 1.0 / std::sqrt(2.0);
    const Index half = len / 2;
    scratch.resize(len);
    for (Index i = 0; i < half; ++i) {
        const double a = data[(2 * i) * stride];
        const double b = data[(2 * i + 1) * stride];
        scratch[i] = r * (a + b);
        scratch[half + i] = r * (a - b);
    }
    for (Index i = 0; i < len; ++i) data[i * stride] = scratch[i];
}

inline void haar_step_inverse(double* data, Index len, Index stride, Vector& scratch) {
    const double r = 1.0 / std::sqrt(2.0);
    const Index half = len / 2;
    scratch.resize(len);
    for (Index i = 0; i < half; ++i) {
        const double s = data[i * stride];
        const double d = data[(half + i) * stride];
        scratch[2 * i] = r * (s + d);
        scratch[2 * i + 1] = r * (s - d);
    }
    for (Index i = 0; i < len; ++i) data[i * stride] = scratch[i];
}

inline void check_haar(Index n, int levels, const char* who) {
    if (!is_power_of_two(n)) throw DomainError(std::string(who) + ": length must be a power of two");
    if (levels < 0 || (Index{1} << levels) > n) {
        throw DomainError(std::string(who) + ": too many levels for this length");
    }
}

} // namespace detail

inline constexpr int kDefaultHaarLevels = 2;

inline Vector haar_forward(const Vector& x, int levels = kDefaultHaarLevels) {
    detail::check_haar(x.size(), levels, "haar_forward");
    Vector y = x;
    Vector scratch;
    Index len = y.size();
    for (int l = 0; l < levels; ++l, len /= 2) detail::haar_step_forward(y.data(), len, 1, scratch);
    return y;
}

inline Vector haar_inverse(const Vector& y, int levels = kDefaultHaarLevels) {
    detail::check_haar(y.size(), levels, "haar_inverse");
    Vector x = y;
    Vector scratch;
    for (int l = levels - 1; l >= 0; --l) detail::haar_step_inverse(x.data(), x.size() >> l, 1, scratch);
    return x;
}

/// Separable 2-D Haar on a row-major side×side image; each level splits the current low-pass block.
inline Vector haar2d_forward(const Vector& x, Index side, int levels = kDefaultHaarLevels) {
    require_dims(side * side, x.size(), "haar2d_forward");
    detail::check_haar(side, levels, "haar2d_forward");
    Vector y = x;
    Vector scratch;
    Index len = side;
    for (int l = 0; l < levels; ++l, len /= 2) {
        for (Index r = 0; r < len; ++r) detail::haar_step_forward(y.data() + r * side, len, 1, scratch);
        for (Index c = 0; c < len; ++c) detail::haar_step_forward(y.data() + c, len, side, scratch);
    }
    return y;
}

inline Vector haar2d_inverse(const Vector& y, Index side, int levels = kDefaultHaarLevels) {
    require_dims(side * side, y.size(), "haar2d_inverse");
    detail::check_haar(side, levels, "haar2d_inverse");
    Vector x = y;
    Vector scratch;
    for (int l = levels - 1; l >= 0; --l) {
        const Index len = side >> l;
        for (Index c = 0; c < len; ++c) detail::haar_step_inverse(x.data() + c, len, side, scratch);
        for (Index r = 0; r < len; ++r) detail::haar_step_inverse(x.data() + r * side, len, 1, scratch);
    }
    return x;
}

inline LinearMap haar_map(Index n, int levels = kDefaultHaarLevels) {
    detail::check_haar(n, levels, "haar_map");
    return LinearMap(
        n, n, [levels](const Vector& x) { return haar_forward(x, levels); },
        [levels](const Vector& y) { return haar_inverse(y, levels); });
}

inline LinearMap haar2d_map(Index side, int levels = kDefaultHaarLevels) {
    detail::check_haar(side, levels, "haar2d_map");
    return LinearMap(
        side * side, side * side, [side, levels](const Vector& x) { return haar2d_forward(x, side, levels); },
        [side, levels](const Vector& y) { return haar2d_inverse(y, side, levels); });
}

} // namespace msplit
