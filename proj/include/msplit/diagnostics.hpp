#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "msplit/operators.hpp"

namespace msplit {

// ---------------------------------------------------------------------------
// Quasi-Fejér monitor

struct FejerReport {
    double total_increase = 0.0;    // Σ max(0, d_{n+1} − d_n)
    double max_increase = 0.0;
    double fitted_constant = 0.0;   // smallest C with increase_n ≤ C·ω_n wherever ω_n > 0
    double sum_constant = 0.0;      // Σ increases / Σ ω_n (0 when Σ ω_n = 0)
    double omega_sum = 0.0;
    double scale = 0.0;             // max_n d_n
    bool violation = false;         // increase where ω_n = 0, beyond 1e−10·scale
};

inline constexpr double kFejerRelTol = 1e-10;

inline FejerReport fejer_monitor(std::span<const double> distances, std::span<const double> omegas) {
    if (distances.size() != omegas.size()) throw DimensionError("fejer_monitor: sequences differ in length");
    if (distances.size() < 2) throw DomainError("fejer_monitor: need at least two entries");
    FejerReport r;
    for (double d : distances) r.scale = std::max(r.scale, d);
    const double floor = kFejerRelTol * r.scale;
    for (std::size_t n = 0; n + 1 < distances.size(); ++n) {
        const double inc = std::max(0.0, distances[n + 1] - distances[n]);
        r.omega_sum += omegas[n];
        if (inc <= 0.0) continue;
        r.total_increase += inc;
        r.max_increase = std::max(r.max_increase, inc);
        if (omegas[n] > 0.0) {
            r.fitted_constant = std::max(r.fitted_constant, inc / omegas[n]);
        } else if (inc > floor) {
            r.violation = true;
            r.fitted_constant = std::numeric_limits<double>::infinity();
        }
    }
    if (r.omega_sum > 0.0) r.sum_constant = r.total_increase / r.omega_sum;
    return r;
}

// ---------------------------------------------------------------------------
// Linear-rate estimate

struct RateReport {
    double fitted_ratio = 0.0;
    double theoretical_theta = 1.0;
    double eta_bar = 0.0;
    bool satisfied = false;
    std::size_t samples_used = 0;
};

inline constexpr double kRateSlack = 0.02;

/// Least-squares slope of log d_n over the last quartile of the positive prefix.
inline RateReport rate_estimate(std::span<const double> distances, double theta, double eta_bar,
                                double slack = kRateSlack) {
    std::size_t count = 0;
    while (count < distances.size() && distances[count] > 0.0 && std::isfinite(distances[count])) ++count;
    if (count < 8) throw DomainError("rate_estimate: fewer than 8 positive entries");
    const std::size_t first = count - count / 4;
    const std::size_t m = count - first;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = first; i < count; ++i) {
        const double xi = static_cast<double>(i);
        const double yi = std::log(distances[i]);
        sx += xi;
        sy += yi;
        sxx += xi * xi;
        sxy += xi * yi;
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    RateReport r;
    r.fitted_ratio = std::exp(slope);
    r.theoretical_theta = theta;
    r.eta_bar = eta_bar;
    r.samples_used = m;
    r.satisfied = r.fitted_ratio <= std::max(theta, eta_bar) + slack;
    return r;
}

// ---------------------------------------------------------------------------
// Solution-gap bound and the K_n perturbation bound

struct GapBoundReport {
    double actual_gap = 0.0;
    double bound = 0.0;
    double slack = 0.0;  // bound − actual_gap
    bool holds = false;
};

inline GapBoundReport gap_bound_report(const Vector& z_mismatched, const Vector& z_matched, const ProblemSpec& spec,
                                       const SpectralEstimates& est) {
    require_dims(z_mismatched.size(), z_matched.size(), "gap_bound_report");
    GapBoundReport r;
    r.bound = solution_gap_bound(z_mismatched, spec, est);
    r.actual_gap = (z_mismatched - z_matched).norm();
    r.slack = r.bound - r.actual_gap;
    r.holds = r.slack >= -1e-8;
    return r;
}

struct PerturbationBoundReport {
    double worst_slack = std::numeric_limits<double>::infinity();  // min (rhs − lhs)
    double scale = 0.0;  // max rhs seen
    std::size_t samples = 0;
};

/// Samples ‖D_{K_n}z − D_K z‖ ≤ ω_n(θ₁‖z − z*‖ + ‖α(Lz* − c) + BLz*‖) over random (z, z*, n).
///
/// The right-hand side keeps the offset c: D_{K_n} − D_K applies K_n − K to the affine
/// argument α(Lz − c) + BLz, which is (α + ζ)‖L‖-Lipschitz in z.
inline PerturbationBoundReport prop43i_check(const ProblemSpec& spec, const MismatchFamily& family, double theta1_value,
                                             std::size_t samples, std::uint64_t seed, double spread = 1.0,
                                             long max_index = 64) {
    if (samples < 1) throw DomainError("prop43i_check: need at least one sample");
    auto rng = seeded_engine(seed, 0x70343369ULL);
    std::uniform_int_distribution<long> pick(0, max_index);
    PerturbationBoundReport r;
    r.samples = samples;
    const LinearMap& k = family.base();
    for (std::size_t s = 0; s < samples; ++s) {
        const long n = pick(rng);
        const Vector z = spread * gaussian_vector(spec.dim(), rng);
        const Vector zs = spread * gaussian_vector(spec.dim(), rng);
        const LinearMap kn = family.perturbation(n);
        const double lhs = (d_map(kn, spec, z) - d_map(k, spec, z)).norm();
        const Vector lzs = spec.L.apply(zs);
        const double anchor = (spec.alpha * (lzs - spec.c) + spec.B.eval(lzs)).norm();
        const double rhs = family.omega(n) * (theta1_value * (z - zs).norm() + anchor);
        r.worst_slack = std::min(r.worst_slack, rhs - lhs);
        r.scale = std::max(r.scale, rhs);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Image quality

inline constexpr double kSnrCapDb = 300.0;

struct QualityMetrics {
    double snr_db = 0.0;
    double nmse = 0.0;
    double mae = 0.0;
    std::optional<double> roi_snr_db;
    std::optional<double> roi_nmse;
    std::optional<double> roi_mae;
};

namespace detail {

inline double snr_from_nmse(double nmse) {
    if (nmse <= 0.0) return kSnrCapDb;
    return std::min(kSnrCapDb, -10.0 * std::log10(nmse) + 0.0);  // no negative zero
}

} // namespace detail

/// NMSE = ‖x̄ − x̂‖²/‖x̄‖², MAE = ‖x̄ − x̂‖_∞, SNR = −10 log₁₀ NMSE (capped at 300 dB).
inline QualityMetrics quality(const Vector& x_hat, const Vector& x_bar, const std::vector<bool>* roi_mask = nullptr) {
    require_dims(x_bar.size(), x_hat.size(), "quality");
    const double ref = x_bar.squaredNorm();
    if (!(ref > 0.0)) throw DomainError("quality: reference has zero norm");
    QualityMetrics q;
    const Vector diff = x_bar - x_hat;
    q.nmse = diff.squaredNorm() / ref;
    q.mae = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0;
    q.snr_db = detail::snr_from_nmse(q.nmse);
    if (roi_mask) {
        if (static_cast<Index>(roi_mask->size()) != x_bar.size()) throw DimensionError("quality: ROI mask size");
        double num = 0.0, den = 0.0, mae = 0.0;
        for (Index i = 0; i < x_bar.size(); ++i) {
            if (!(*roi_mask)[static_cast<std::size_t>(i)]) continue;
            num += diff[i] * diff[i];
            den += x_bar[i] * x_bar[i];
            mae = std::max(mae, std::abs(diff[i]));
        }
        if (!(den > 0.0)) throw DomainError("quality: reference has zero norm inside the ROI");
        q.roi_nmse = num / den;
        q.roi_snr_db = detail::snr_from_nmse(*q.roi_nmse);
        q.roi_mae = mae;
    }
    return q;
}

/// 20 log₁₀(‖Lx̄‖ / ‖Lx̄ − c‖).
inline double snr_input_db(const Vector& clean, const Vector& noisy) {
    require_dims(clean.size(), noisy.size(), "snr_input_db");
    const double err = (clean - noisy).norm();
    if (err == 0.0) return kSnrCapDb;
    return std::min(kSnrCapDb, 20.0 * std::log10(clean.norm() / err));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const FejerReport& r) {
    return {{"total_increase", r.total_increase}, {"max_increase", r.max_increase},
            {"fitted_constant", std::isfinite(r.fitted_constant) ? nlohmann::json(r.fitted_constant) : nlohmann::json()},
            {"sum_constant", r.sum_constant},     {"omega_sum", r.omega_sum},
            {"scale", r.scale},                   {"violation", r.violation}};
}

inline nlohmann::json to_json(const RateReport& r) {
    return {{"fitted_ratio", r.fitted_ratio}, {"theoretical_theta", r.theoretical_theta}, {"eta_bar", r.eta_bar},
            {"satisfied", r.satisfied},       {"samples_used", r.samples_used}};
}

inline nlohmann::json to_json(const GapBoundReport& r) {
    return {{"actual_gap", r.actual_gap}, {"bound", r.bound}, {"slack", r.slack}, {"holds", r.holds}};
}

inline nlohmann::json to_json(const QualityMetrics& q) {
    nlohmann::json j = {{"snr_db", q.snr_db}, {"nmse", q.nmse}, {"mae", q.mae}};
    if (q.roi_snr_db) {
        j["roi_snr_db"] = *q.roi_snr_db;
        j["roi_nmse"] = *q.roi_nmse;
        j["roi_mae"] = *q.roi_mae;
    }
    return j;
}

} // namespace msplit
