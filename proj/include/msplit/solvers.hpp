#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msplit/operators.hpp"
#include "msplit/stepsize.hpp"

namespace msplit {

enum class Algorithm { mmfbhf, mmfdrf };

inline const char* to_string(Algorithm a) { return a == Algorithm::mmfbhf ? "mmfbhf" : "mmfdrf"; }

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "mmfbhf") return Algorithm::mmfbhf;
    if (s == "mmfdrf") return Algorithm::mmfdrf;
    throw DomainError("unknown algorithm '" + s + "'");
}

struct SolverConfig {
    Algorithm algorithm = Algorithm::mmfbhf;
    double gamma = 0.0;
    double epsilon = 0.0;  // FBHF band half-width: γ must lie in [ε, χ − ε]
    long max_iter = 1000;
    double rel_residual_tol = 1e-10;
    long record_every = 1;
    std::optional<Vector> reference;  // known solution x*
};

struct TraceRecord {
    long n = 0;  // iterations completed
    double residual = 0.0;  // ‖z_n − z_{n−1}‖ / max(‖z_{n−1}‖, 1)
    std::int64_t wall_ns = 0;  // since the start of the run
    std::optional<double> dist_to_ref;  // ‖x − x*‖
    std::optional<double> z_dist_to_ref;  // ‖z_n − z*‖ with z* the governing fixed point
    std::optional<Vector> z;  // kept when n is a multiple of record_every and at the end
    std::optional<Vector> x;
};

struct IterateTrace {
    Algorithm algorithm = Algorithm::mmfbhf;
    std::vector<TraceRecord> records;
    Vector z_final;
    Vector x_final;  // x_n of the last step (J_{γC} z_n for FDRF)
    long iterations = 0;
    bool converged = false;

    /// Records that carry iterates.
    std::vector<const TraceRecord*> snapshots() const {
        std::vector<const TraceRecord*> out;
        for (const auto& r : records)
            if (r.x) out.push_back(&r);
        return out;
    }
};

/// A non-finite iterate appeared. The trace up to the last finite step is attached.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, IterateTrace trace)
        : Error(what), trace_(std::make_shared<IterateTrace>(std::move(trace))) {}
    const IterateTrace& trace() const noexcept { return *trace_; }

private:
    std::shared_ptr<IterateTrace> trace_;
};

namespace detail {

inline void check_step(double gamma, const ProblemSpec& spec, const Vector& z) {
    if (!(gamma > 0.0)) throw DomainError("step size must be positive");
    if (!(gamma * spec.A.rho > -1.0)) throw DomainError("step size violates gamma*rho > -1");
    require_dims(spec.dim(), z.size(), "solver iterate");
}

} // namespace detail

struct FbhfStepResult {
    Vector z_next;
    Vector x;
};

/// One MMFBHF iteration:
///   u = D_{K_n} z;  y = z − γ(Cz + u);  x = J_{γA} y;  z⁺ = x + γ(u − D_{K_n} x).
inline FbhfStepResult mmfbhf_step(const Vector& z, double gamma, const LinearMap& k_n, const ProblemSpec& spec) {
    detail::check_step(gamma, spec, z);
    const Vector u = d_map(k_n, spec, z);
    const Vector y = z - gamma * (spec.C.eval(z) + u);
    Vector x = spec.A.resolvent(gamma, y);
    Vector z_next = x + gamma * (u - d_map(k_n, spec, x));
    return {std::move(z_next), std::move(x)};
}

struct FdrfStepResult {
    Vector z_next;
    Vector x;
    Vector y;
};

/// One MMFDRF iteration:
///   x = J_{γC} z;  w = D_{K_n} x;  y = J_{γA}(2x − z − γw);  z⁺ = z + y − x − γ(D_{K_n} y − w).
inline FdrfStepResult mmfdrf_step(const Vector& z, double gamma, const LinearMap& k_n, const ProblemSpec& spec) {
    detail::check_step(gamma, spec, z);
    if (!spec.C.resolvent) throw DomainError("mmfdrf_step: C has no resolvent");
    Vector x = spec.C.resolvent(gamma, z);
    const Vector w = d_map(k_n, spec, x);
    Vector y = spec.A.resolvent(gamma, 2.0 * x - z - gamma * w);
    Vector z_next = z + y - x - gamma * (d_map(k_n, spec, y) - w);
    return {std::move(z_next), std::move(x), std::move(y)};
}

/// Fixed point of the iteration map associated with a primal solution x*.
inline Vector governing_fixed_point(Algorithm algo, const ProblemSpec& spec, double gamma, const Vector& x_star) {
    if (algo == Algorithm::mmfbhf) return x_star;
    return x_star + gamma * spec.C.eval(x_star);
}

/// Checks γ against the admissible set of the chosen algorithm.
inline void validate_config(const SolverConfig& cfg, const ConstantsLedger& ledger) {
    if (cfg.max_iter < 1) throw DomainError("solver: max_iter must be >= 1");
    if (!(cfg.rel_residual_tol >= 0.0)) throw DomainError("solver: rel_residual_tol must be >= 0");
    if (cfg.record_every < 1) throw DomainError("solver: record_every must be >= 1");
    if (!(cfg.gamma > 0.0)) throw DomainError("solver: gamma must be positive");
    if (cfg.algorithm == Algorithm::mmfbhf) {
        if (!(cfg.epsilon > 0.0 && cfg.epsilon < ledger.chi / 2.0)) {
            throw DomainError("solver: FBHF epsilon must lie in (0, chi/2)");
        }
        if (cfg.gamma < cfg.epsilon || cfg.gamma > ledger.chi - cfg.epsilon) {
            throw DomainError("solver: FBHF gamma outside [epsilon, chi - epsilon]");
        }
    } else if (!in_gamma_set(cfg.gamma, ledger.beta, ledger.kappa_K, ledger.rho)) {
        throw DomainError("solver: FDRF gamma outside the admissible set");
    }
}

/// Solver config with the ledger's step sizes for `algo`.
inline SolverConfig default_config(Algorithm algo, const ConstantsLedger& ledger) {
    SolverConfig cfg;
    cfg.algorithm = algo;
    cfg.gamma = algo == Algorithm::mmfbhf ? ledger.gamma_fbhf : ledger.gamma_fdrf;
    cfg.epsilon = ledger.epsilon_fbhf;
    return cfg;
}

/// Runs the chosen iteration from z0 with K_n drawn from spec.mismatch at every index n.
inline IterateTrace run(const ProblemSpec& spec, const SolverConfig& cfg, const ConstantsLedger& ledger,
                        const Vector& z0) {
    validate_config(cfg, ledger);
    require_dims(spec.dim(), z0.size(), "run: z0");
    if (cfg.algorithm == Algorithm::mmfdrf && !spec.C.resolvent) throw DomainError("run: MMFDRF needs J_{gamma C}");

    std::optional<Vector> z_ref;
    if (cfg.reference) {
        require_dims(spec.dim(), cfg.reference->size(), "run: reference");
        z_ref = governing_fixed_point(cfg.algorithm, spec, cfg.gamma, *cfg.reference);
    }

    IterateTrace trace;
    trace.algorithm = cfg.algorithm;
    trace.records.reserve(static_cast<std::size_t>(std::min<long>(cfg.max_iter, 1L << 20)));
    const auto start = std::chrono::steady_clock::now();
    Vector z = z0;
    Vector x = z0;

    for (long n = 0; n < cfg.max_iter; ++n) {
        const LinearMap k_n = spec.mismatch.perturbation(n);
        Vector z_next;
        if (cfg.algorithm == Algorithm::mmfbhf) {
            auto s = mmfbhf_step(z, cfg.gamma, k_n, spec);
            z_next = std::move(s.z_next);
            x = std::move(s.x);
        } else {
            auto s = mmfdrf_step(z, cfg.gamma, k_n, spec);
            z_next = std::move(s.z_next);
            x = std::move(s.x);
        }
        if (!z_next.allFinite() || !x.allFinite()) {
            trace.z_final = z;
            trace.iterations = n;
            throw NumericalError("non-finite iterate at iteration " + std::to_string(n + 1), std::move(trace));
        }

        TraceRecord rec;
        rec.n = n + 1;
        rec.residual = (z_next - z).norm() / std::max(z.norm(), 1.0);
        rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start)
                          .count();
        if (cfg.reference) rec.dist_to_ref = (x - *cfg.reference).norm();
        if (z_ref) rec.z_dist_to_ref = (z_next - *z_ref).norm();

        z = std::move(z_next);
        const bool done = rec.residual <= cfg.rel_residual_tol || n + 1 == cfg.max_iter;
        if ((n + 1) % cfg.record_every == 0 || done) {
            rec.z = z;
            rec.x = x;
        }
        trace.records.push_back(std::move(rec));
        if (done) {
            trace.converged = trace.records.back().residual <= cfg.rel_residual_tol;
            trace.iterations = n + 1;
            break;
        }
    }
    trace.z_final = z;
    trace.x_final = x;
    return trace;
}

} // namespace msplit
