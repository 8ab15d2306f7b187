#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "msplit/operators.hpp"

namespace msplit {

/// Every derived scalar a run depends on.
struct ConstantsLedger {
    double alpha = 0.0;
    double beta = 0.0;
    double zeta = 0.0;
    double rho = 0.0;
    double lambda_min = 0.0;
    double kappa_K = 0.0;
    double zeta_tilde_mismatch = 0.0;
    double rho_hat = 0.0;
    double chi = 0.0;
    double gamma_fbhf = 0.0;
    double gamma_hat = 0.0;
    double gamma_fdrf = 0.0;
    double eps1 = 0.0;
    double eps2 = 0.0;
    double theta1 = 0.0;
    // Reported alongside the step-size constants.
    double epsilon_fbhf = 0.0;
    double theta_fbhf = 1.0;
    double theta_fdrf = 1.0;
    double norm_L = 0.0;
    double norm_K = 0.0;
    double norm_KL = 0.0;
    double norm_mismatch = 0.0;
    double lambda_min_matched = 0.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConstantsLedger, alpha, beta, zeta, rho, lambda_min, kappa_K, zeta_tilde_mismatch,
                                   rho_hat, chi, gamma_fbhf, gamma_hat, gamma_fdrf, eps1, eps2, theta1, epsilon_fbhf,
                                   theta_fbhf, theta_fdrf, norm_L, norm_K, norm_KL, norm_mismatch, lambda_min_matched)

/// MMFBHF step cap 4β/(1+√(1+16β²κ²)), further capped by −1/ρ when ρ < 0.
inline double chi(double beta, double kappa, double rho) {
    if (!(beta > 0.0)) throw DomainError("chi: beta must be positive");
    if (!(kappa >= 0.0)) throw DomainError("chi: kappa must be nonnegative");
    const double base = 4.0 * beta / (1.0 + std::sqrt(1.0 + 16.0 * beta * beta * kappa * kappa));
    return rho < 0.0 ? std::min(base, -1.0 / rho) : base;
}

struct FbhfStep {
    double gamma = 0.0;
    double epsilon = 0.0;
};

/// γ = safety·χ and the widest ε with γ ∈ [ε, χ − ε], halved so that ε < χ/2 strictly.
inline FbhfStep gamma_fbhf(double chi_value, double safety) {
    if (!(safety > 0.0 && safety < 1.0)) throw DomainError("gamma_fbhf: safety must lie in (0, 1)");
    if (!(chi_value > 0.0)) throw DomainError("gamma_fbhf: chi must be positive");
    const double g = safety * chi_value;
    return {g, 0.5 * std::min(g, chi_value - g)};
}

/// κ²γ²(1 + γ/(2β)) < 1 and ργ > −1.
inline bool in_gamma_set(double gamma, double beta, double kappa, double rho) {
    return gamma > 0.0 && kappa * kappa * gamma * gamma * (1.0 + gamma / (2.0 * beta)) < 1.0 && rho * gamma > -1.0;
}

struct FdrfStep {
    double gamma = 0.0;
    double gamma_hat = 0.0;
};

inline constexpr double kDefaultSafetyFbhf = 0.9975;
inline constexpr double kDefaultSafetyFdrf = 0.999;

/// γ̂ solves κ²γ̂²(1 + γ̂/(2β)) = 1 (bisection); returns safety·γ̂, clamped so ργ > −1.
inline FdrfStep gamma_fdrf(double beta, double kappa, double rho, double safety = kDefaultSafetyFdrf) {
    if (!(beta > 0.0)) throw DomainError("gamma_fdrf: beta must be positive");
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("gamma_fdrf: kappa must be positive and finite");
    if (!(safety > 0.0 && safety < 1.0)) throw DomainError("gamma_fdrf: safety must lie in (0, 1)");
    auto cubic = [&](double g) { return kappa * kappa * g * g * (1.0 + g / (2.0 * beta)) - 1.0; };
    double lo = 0.0;
    double hi = std::min(2.0 * beta, 1.0 / kappa) * 10.0;
    while (cubic(hi) < 0.0) hi *= 2.0;
    while (hi - lo > 1e-12 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (cubic(mid) < 0.0 ? lo : hi) = mid;
    }
    const double root = lo;
    double g = safety * root;
    if (rho < 0.0) g = std::min(g, safety * (-1.0 / rho));
    if (!(g > 0.0) || !in_gamma_set(g, beta, kappa, rho)) throw DomainError("gamma_fdrf: no admissible step size");
    return {g, root};
}

struct FdrfEpsilons {
    double eps1 = 0.0;
    double eps2 = 0.0;
};

/// ε₂ at half its admissible supremum; ε₁ = 1 − κ²γ²(1 + γ/(2β(1 − ε₂))).
inline FdrfEpsilons epsilons_fdrf(double gamma, double beta, double kappa) {
    if (!in_gamma_set(gamma, beta, kappa, 0.0)) throw DomainError("epsilons_fdrf: gamma outside the admissible set");
    const double kg2 = kappa * kappa * gamma * gamma;
    const double sup = (1.0 - kg2 * (1.0 + gamma / (2.0 * beta))) / (1.0 - kg2);
    const double e2 = 0.5 * sup;
    const double e1 = 1.0 - kg2 * (1.0 + gamma / (2.0 * beta * (1.0 - e2)));
    if (!(e1 > 0.0 && e2 > 0.0)) throw DomainError("epsilons_fdrf: degenerate epsilons");
    return {e1, e2};
}

/// (α + ζ)‖L‖.
inline double theta1(double alpha, double zeta, double norm_L) {
    if (alpha < 0.0 || zeta < 0.0 || norm_L < 0.0) throw DomainError("theta1: inputs must be nonnegative");
    return (alpha + zeta) * norm_L;
}

struct ContractionFactors {
    double theta_fbhf = 1.0;
    double theta_fdrf = 1.0;
};

inline double contraction_fbhf(double kappa, double epsilon, double rho_hat) {
    if (!(rho_hat > 0.0)) throw DomainError("contraction factors need rho_hat > 0");
    return std::sqrt(std::max(0.0, 1.0 - epsilon * std::min(kappa * kappa * epsilon / 2.0, rho_hat)));
}

inline double contraction_fdrf(double beta, double gamma, double eps1, double eps2, double rho_hat) {
    if (!(rho_hat > 0.0)) throw DomainError("contraction factors need rho_hat > 0");
    const double m = std::min({2.0 * beta * eps2 / gamma, eps1, 2.0 * gamma * rho_hat});
    return std::sqrt(std::max(0.0, 1.0 - m / 3.0));
}

inline ContractionFactors contraction_factors(const ConstantsLedger& l) {
    return {contraction_fbhf(l.kappa_K, l.epsilon_fbhf, l.rho_hat),
            contraction_fdrf(l.beta, l.gamma_fdrf, l.eps1, l.eps2, l.rho_hat)};
}

struct StepSafety {
    double fbhf = kDefaultSafetyFbhf;
    double fdrf = kDefaultSafetyFdrf;
};

/// Assembles the ledger from a problem and its spectral estimates. Contraction
/// factors stay at 1 when ρ̂ ≤ 0.
inline ConstantsLedger build_ledger(const ProblemSpec& spec, const SpectralEstimates& est, StepSafety safety = {}) {
    ConstantsLedger l;
    l.alpha = spec.alpha;
    l.beta = spec.C.beta;
    l.zeta = spec.B.zeta;
    l.rho = spec.A.rho;
    l.lambda_min = est.lambda_min;
    l.lambda_min_matched = est.lambda_min_matched;
    l.norm_L = est.norm_L;
    l.norm_K = est.norm_K;
    l.norm_KL = est.norm_KL;
    l.norm_mismatch = est.norm_mismatch;
    const auto bounds = lipschitz_bounds(spec.alpha, spec.B.zeta, est.norm_KL, est.norm_K, est.norm_L);
    l.kappa_K = bounds.kappa;
    l.zeta_tilde_mismatch = spec.B.zeta * est.norm_mismatch * est.norm_L;
    l.rho_hat = rho_hat(spec, est, l.zeta_tilde_mismatch);
    l.chi = chi(l.beta, l.kappa_K, l.rho);
    const auto fb = gamma_fbhf(l.chi, safety.fbhf);
    l.gamma_fbhf = fb.gamma;
    l.epsilon_fbhf = fb.epsilon;
    if (l.kappa_K > 0.0) {
        const auto fd = gamma_fdrf(l.beta, l.kappa_K, l.rho, safety.fdrf);
        l.gamma_fdrf = fd.gamma;
        l.gamma_hat = fd.gamma_hat;
        const auto eps = epsilons_fdrf(l.gamma_fdrf, l.beta, l.kappa_K);
        l.eps1 = eps.eps1;
        l.eps2 = eps.eps2;
    } else {
        // D_K vanishes: Γ is only limited by ργ > −1.
        l.gamma_hat = std::numeric_limits<double>::infinity();
        l.gamma_fdrf = l.rho < 0.0 ? safety.fdrf * (-1.0 / l.rho) : 1.0;
        l.eps1 = 1.0;
        l.eps2 = 0.5;
    }
    l.theta1 = theta1(l.alpha, l.zeta, l.norm_L);
    if (l.rho_hat > 0.0) {
        const auto f = contraction_factors(l);
        l.theta_fbhf = f.theta_fbhf;
        l.theta_fdrf = f.theta_fdrf;
    }
    return l;
}

} // namespace msplit
