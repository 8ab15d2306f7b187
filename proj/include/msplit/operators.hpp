#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "msplit/linops.hpp"

namespace msplit {

/// Maximally ρ-monotone operator A, available only through its resolvent
/// J_{γA} = (Id + γA)^{-1}. The closure must be re-entrant and is only
/// called with γρ > −1.
struct ResolventBlock {
    double rho = 0.0;
    std::function<Vector(double, const Vector&)> resolvent;
};

/// β-cocoercive C. FDRF additionally needs J_{γC}.
struct CocoerciveBlock {
    double beta = 1.0;
    std::function<Vector(const Vector&)> eval;
    std::function<Vector(double, const Vector&)> resolvent;
};

/// Monotone ζ-Lipschitz B acting on the data space.
struct LipschitzBlock {
    double zeta = 0.0;
    std::function<Vector(const Vector&)> eval;
};

/// Instance of  0 ∈ Ax + Cx + αK(Lx − c) + KBLx  with K (and K_n) taken from `mismatch`.
struct ProblemSpec {
    ResolventBlock A;
    CocoerciveBlock C;
    LipschitzBlock B;
    LinearMap L;
    MismatchFamily mismatch;
    Vector c;
    double alpha = 0.0;

    Index dim() const { return L.in_dim(); }
    Index data_dim() const { return L.out_dim(); }
    const LinearMap& K() const { return mismatch.base(); }

    void validate() const {
        require_dims(L.out_dim(), c.size(), "ProblemSpec: offset c");
        require_dims(L.out_dim(), K().in_dim(), "ProblemSpec: K input");
        require_dims(L.in_dim(), K().out_dim(), "ProblemSpec: K output");
        if (!(alpha >= 0.0)) throw DomainError("ProblemSpec: alpha must be nonnegative");
        if (!(C.beta > 0.0)) throw DomainError("ProblemSpec: beta must be positive");
        if (!(B.zeta >= 0.0)) throw DomainError("ProblemSpec: zeta must be nonnegative");
        if (!A.resolvent || !C.eval || !B.eval) throw DomainError("ProblemSpec: missing operator closure");
    }
};

/// D_M x = αM(Lx − c) + MBLx, using a single application of M.
inline Vector d_map(const LinearMap& m, const ProblemSpec& spec, const Vector& x) {
    require_dims(spec.L.in_dim(), x.size(), "d_map: x");
    require_dims(spec.L.out_dim(), m.in_dim(), "d_map: M input");
    require_dims(spec.L.in_dim(), m.out_dim(), "d_map: M output");
    const Vector lx = spec.L.apply(x);
    Vector t = spec.B.eval(lx);
    require_dims(lx.size(), t.size(), "d_map: B output");
    t += spec.alpha * (lx - spec.c);
    return m.apply(t);
}

struct LipschitzBounds {
    double kappa = 0.0;       // ≥ Lip(M(αId + B)L)
    double zeta_tilde = 0.0;  // ≥ Lip(MBL)
};

inline LipschitzBounds lipschitz_bounds(double alpha, double zeta, double norm_ML, double norm_M, double norm_L) {
    return {alpha * norm_ML + zeta * norm_M * norm_L, zeta * norm_M * norm_L};
}

/// Norm-product bounds for D_M; ‖M∘L‖ and ‖M‖ are estimated here, ‖L‖ is taken from `norms`.
inline LipschitzBounds lipschitz_bounds(const LinearMap& m, const ProblemSpec& spec, const SpectralEstimates& norms) {
    require_dims(spec.L.out_dim(), m.in_dim(), "lipschitz_bounds: M input");
    const double norm_ml = operator_norm(compose(m, spec.L), norms.tol).value;
    const double norm_m = operator_norm(m, norms.tol).value;
    return lipschitz_bounds(spec.alpha, spec.B.zeta, norm_ml, norm_m, norms.norm_L);
}

/// ρ + αλ_min − ζ̃_{L*−K}. Sign is not enforced.
inline double rho_hat(const ProblemSpec& spec, const SpectralEstimates& estimates, double zeta_tilde_mismatch) {
    return spec.A.rho + spec.alpha * estimates.lambda_min - zeta_tilde_mismatch;
}

/// Two points of an operator graph: u ∈ Tx, v ∈ Ty.
struct GraphPair {
    Vector x, u, y, v;
};

struct MonotonicityReport {
    double min_slack = std::numeric_limits<double>::infinity();
    // slack / ‖x − y‖², i.e. the empirical monotonicity modulus minus ρ
    double min_relative_slack = std::numeric_limits<double>::infinity();
    std::size_t worst_index = 0;
    std::size_t samples = 0;
};

/// Minimum of ⟨x−y, u−v⟩ − ρ‖x−y‖² over the supplied pairs.
inline MonotonicityReport check_rho_monotone(const std::vector<GraphPair>& pairs, double rho) {
    if (pairs.empty()) throw DomainError("check_rho_monotone: empty pair list");
    MonotonicityReport r;
    r.samples = pairs.size();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const Vector dx = p.x - p.y;
        const double sq = dx.squaredNorm();
        const double slack = dx.dot(p.u - p.v) - rho * sq;
        if (slack < r.min_slack) {
            r.min_slack = slack;
            r.worst_index = i;
        }
        if (sq > 0.0) r.min_relative_slack = std::min(r.min_relative_slack, slack / sq);
    }
    return r;
}

/// Random graph pairs of A + D_M: x = J_{γA}(w) gives (w − x)/γ ∈ Ax.
inline std::vector<GraphPair> sample_graph_pairs(const ProblemSpec& spec, const LinearMap& m, std::size_t count,
                                                 std::uint64_t seed, double gamma = 1.0, double spread = 1.0) {
    if (!(gamma > 0.0) || gamma * spec.A.rho <= -1.0) throw DomainError("sample_graph_pairs: need γρ > −1");
    auto rng = seeded_engine(seed, 0x67726170ULL);
    auto point = [&](Vector& x, Vector& u) {
        const Vector w = spread * gaussian_vector(spec.dim(), rng);
        x = spec.A.resolvent(gamma, w);
        u = (w - x) / gamma + d_map(m, spec, x);
    };
    std::vector<GraphPair> pairs(count);
    for (auto& p : pairs) {
        point(p.x, p.u);
        point(p.y, p.v);
    }
    return pairs;
}

/// Upper bound on the distance between a solution z with surrogate K and the matched solution.
///
/// The denominator is the strong-monotonicity modulus of A + C + D_{L*}, i.e. ρ + α·λ_min(L*L),
/// which is `estimates.lambda_min_matched`.
inline double solution_gap_bound(const Vector& z, const ProblemSpec& spec, const SpectralEstimates& estimates) {
    const double modulus = spec.A.rho + spec.alpha * estimates.lambda_min_matched;
    if (!(modulus > 0.0)) throw DomainError("solution_gap_bound: requires rho + alpha*lambda_min > 0");
    require_dims(spec.dim(), z.size(), "solution_gap_bound: z");
    const Vector lz = spec.L.apply(z);
    const Vector r = spec.alpha * (lz - spec.c) + spec.B.eval(lz);
    return estimates.norm_mismatch * r.norm() / modulus;
}

} // namespace msplit
