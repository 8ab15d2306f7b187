#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "msplit/linops.hpp"
#include "msplit/operators.hpp"
#include "msplit/proxlib.hpp"
#include "msplit/stepsize.hpp"

namespace msplit::tomo {

/// Parallel-beam geometry over 180°. The image is side×side pixels centred at the origin;
/// detector bins have width pixel_size / bin_upsampling and are centred on the rotation axis.
struct Geometry {
    Index n_pixels_side = 32;
    Index n_angles = 24;
    Index n_bins = 48;
    double bin_upsampling = 1.0;
    double pixel_size = 4.0;

    Index n_pixels() const { return n_pixels_side * n_pixels_side; }
    Index n_rays() const { return n_angles * n_bins; }
    double bin_width() const { return pixel_size / bin_upsampling; }
    double angle(Index k) const { return std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_angles); }
    double bin_center(Index b) const { return (static_cast<double>(b) - 0.5 * static_cast<double>(n_bins - 1)) * bin_width(); }

    std::array<double, 2> pixel_center(Index row, Index col) const {
        const double half = 0.5 * static_cast<double>(n_pixels_side);
        return {(static_cast<double>(col) - half + 0.5) * pixel_size, (half - static_cast<double>(row) - 0.5) * pixel_size};
    }

    void validate() const {
        if (n_pixels_side <= 0 || n_angles <= 0 || n_bins <= 0 || !(bin_upsampling > 0.0) || !(pixel_size > 0.0)) {
            throw DomainError("Geometry: all fields must be positive");
        }
    }
};

/// Pixels whose centre lies inside the circle inscribed in the image square.
inline std::vector<bool> fov_mask(const Geometry& g, double diameter_fraction = 1.0) {
    std::vector<bool> mask(static_cast<std::size_t>(g.n_pixels()));
    const double r = 0.5 * diameter_fraction * static_cast<double>(g.n_pixels_side) * g.pixel_size;
    for (Index i = 0; i < g.n_pixels_side; ++i)
        for (Index j = 0; j < g.n_pixels_side; ++j) {
            const auto [x, y] = g.pixel_center(i, j);
            mask[static_cast<std::size_t>(i * g.n_pixels_side + j)] = x * x + y * y <= r * r;
        }
    return mask;
}

/// Circular region of interest, 80/128 of the image side in diameter.
inline std::vector<bool> roi_mask(const Geometry& g) { return fov_mask(g, 80.0 / 128.0); }

struct Sinogram {
    Vector values;
    Geometry geometry;
};

enum class PhantomKind { disks, checker };

inline PhantomKind parse_phantom(const std::string& s) {
    if (s == "disks") return PhantomKind::disks;
    if (s == "checker") return PhantomKind::checker;
    throw DomainError("unknown phantom kind '" + s + "'");
}

inline const char* to_string(PhantomKind k) { return k == PhantomKind::disks ? "disks" : "checker"; }

inline constexpr double kDefaultXMax = 900.0;

/// Test object with values in [0, x_max], zero outside the field-of-view circle.
inline Vector make_phantom(const Geometry& g, PhantomKind kind, std::uint64_t seed, double x_max = kDefaultXMax) {
    g.validate();
    const auto mask = fov_mask(g);
    const double radius = 0.5 * static_cast<double>(g.n_pixels_side) * g.pixel_size;
    Vector img = Vector::Zero(g.n_pixels());
    if (kind == PhantomKind::checker) {
        const Index block = std::max<Index>(1, g.n_pixels_side / 8);
        for (Index i = 0; i < g.n_pixels_side; ++i)
            for (Index j = 0; j < g.n_pixels_side; ++j)
                img[i * g.n_pixels_side + j] = ((i / block + j / block) % 2 == 0 ? 0.75 : 0.25) * x_max;
    } else {
        auto rng = seeded_engine(seed, 0x7068616eULL);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        struct Disk {
            double cx, cy, r, value;
        };
        std::vector<Disk> disks{{0.0, 0.0, 0.85 * radius, 0.35 * x_max}};
        const int count = 7;
        for (int d = 0; d < count; ++d) {
            const double rr = (0.08 + 0.14 * unit(rng)) * radius;
            const double dist = (0.85 * radius - rr) * std::sqrt(unit(rng));
            const double ang = 2.0 * std::numbers::pi * unit(rng);
            disks.push_back({dist * std::cos(ang), dist * std::sin(ang), rr, (0.05 + 0.95 * unit(rng)) * x_max});
        }
        for (Index i = 0; i < g.n_pixels_side; ++i)
            for (Index j = 0; j < g.n_pixels_side; ++j) {
                const auto [x, y] = g.pixel_center(i, j);
                for (const auto& d : disks) {
                    if ((x - d.cx) * (x - d.cx) + (y - d.cy) * (y - d.cy) <= d.r * d.r) img[i * g.n_pixels_side + j] = d.value;
                }
            }
    }
    for (Index p = 0; p < img.size(); ++p)
        if (!mask[static_cast<std::size_t>(p)]) img[p] = 0.0;
    return img.cwiseMax(0.0).cwiseMin(x_max);
}

namespace detail {

struct Ray {
    double nx, ny;  // unit normal; the ray is {p : p·n = s}
    double s;
};

inline Ray ray(const Geometry& g, Index k, Index b) {
    const double th = g.angle(k);
    double c = std::cos(th), s = std::sin(th);
    if (std::abs(c) < 1e-14) c = 0.0;
    if (std::abs(s) < 1e-14) s = 0.0;
    return {c, s, g.bin_center(b)};
}

// Length of {p : p·n = s} inside [x0, x1) × [y0, y1).
inline double chord_length(const Ray& r, double x0, double x1, double y0, double y1) {
    const double dx = -r.ny, dy = r.nx;  // direction
    const double px = r.s * r.nx, py = r.s * r.ny;
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    bool missed = false;
    auto slab = [&](double p, double d, double lo, double hi) {
        if (d == 0.0) {
            missed = missed || p < lo || p >= hi;
            return;
        }
        double a = (lo - p) / d, b = (hi - p) / d;
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
    };
    slab(px, dx, x0, x1);
    slab(py, dy, y0, y1);
    return !missed && t1 > t0 ? t1 - t0 : 0.0;
}

// Area of the axis-aligned square [x0,x1]×[y0,y1] on the side p·n ≤ s.
inline double area_below(double nx, double ny, double s, double x0, double x1, double y0, double y1) {
    const std::array<std::array<double, 2>, 4> sq{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
    std::array<std::array<double, 2>, 8> poly{};
    std::size_t m = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& a = sq[i];
        const auto& b = sq[(i + 1) % 4];
        const double fa = a[0] * nx + a[1] * ny - s;
        const double fb = b[0] * nx + b[1] * ny - s;
        if (fa <= 0.0) poly[m++] = a;
        if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
            const double t = fa / (fa - fb);
            poly[m++] = {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
        }
    }
    double area = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % m];
        area += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * std::abs(area);
}

template <class Weight>
SparseMatrix assemble(const Geometry& g, Weight weight) {
    g.validate();
    std::vector<Eigen::Triplet<double>> triplets;
    const double ps = g.pixel_size;
    const double half = 0.5 * static_cast<double>(g.n_pixels_side) * ps;
    for (Index k = 0; k < g.n_angles; ++k) {
        for (Index b = 0; b < g.n_bins; ++b) {
            const Ray r = ray(g, k, b);
            const double reach = 0.5 * ps * (std::abs(r.nx) + std::abs(r.ny)) + 0.5 * g.bin_width();
            const Index row = k * g.n_bins + b;
            for (Index i = 0; i < g.n_pixels_side; ++i) {
                const double y1 = half - static_cast<double>(i) * ps;
                const double y0 = y1 - ps;
                for (Index j = 0; j < g.n_pixels_side; ++j) {
                    const double x0 = -half + static_cast<double>(j) * ps;
                    const double x1 = x0 + ps;
                    const double proj = 0.5 * (x0 + x1) * r.nx + 0.5 * (y0 + y1) * r.ny;
                    if (std::abs(proj - r.s) > reach) continue;
                    const double w = weight(r, x0, x1, y0, y1);
                    if (w > 0.0) triplets.emplace_back(row, i * g.n_pixels_side + j, w);
                }
            }
        }
    }
    SparseMatrix m(g.n_rays(), g.n_pixels());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

} // namespace detail

/// Line-length weights: entry (ray, pixel) is the length of the ray inside the pixel.
inline SparseMatrix ray_driven_matrix(const Geometry& g) {
    return detail::assemble(g, [](const detail::Ray& r, double x0, double x1, double y0, double y1) {
        return detail::chord_length(r, x0, x1, y0, y1);
    });
}

/// Strip weights: area of pixel ∩ bin strip, divided by the bin width.
inline SparseMatrix strip_matrix(const Geometry& g) {
    const double w = g.bin_width();
    return detail::assemble(g, [w](const detail::Ray& r, double x0, double x1, double y0, double y1) {
        const double hi = detail::area_below(r.nx, r.ny, r.s + 0.5 * w, x0, x1, y0, y1);
        const double lo = detail::area_below(r.nx, r.ny, r.s - 0.5 * w, x0, x1, y0, y1);
        const double a = (hi - lo) / w;
        return a > 1e-14 ? a : 0.0;
    });
}

inline LinearMap ray_driven_projector(const Geometry& g) { return LinearMap::sparse(ray_driven_matrix(g)); }

/// Backprojector K = (strip projector)ᵀ, a surrogate for the adjoint of the line-length projector.
inline LinearMap mismatched_backprojector(const Geometry& g) { return LinearMap::sparse(strip_matrix(g)).adjoint(); }

inline constexpr double kDefaultSigma = 200.0;

/// c = Poisson(Lx̄) + N(0, σ²), cropped to c ≥ −3/8 − σ².
inline Sinogram synthesize_data(const LinearMap& l, const Vector& x_bar, double sigma, std::uint64_t seed,
                                const Geometry& g) {
    if (!(sigma >= 0.0)) throw DomainError("synthesize_data: sigma must be nonnegative");
    const Vector mean = l.apply(x_bar);
    auto rng = seeded_engine(seed, 0x6e6f6973ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double floor = -0.375 - sigma * sigma;
    Vector c(mean.size());
    for (Index m = 0; m < mean.size(); ++m) {
        if (!(mean[m] >= 0.0)) throw DomainError("synthesize_data: negative Poisson mean");
        double count = 0.0;
        if (mean[m] > 0.0) {
            std::poisson_distribution<long long> poisson(mean[m]);
            count = static_cast<double>(poisson(rng));
        }
        const double e = sigma > 0.0 ? sigma * gauss(rng) : 0.0;
        c[m] = std::max(count + e, floor);
    }
    return {c, g};
}

struct Penalties {
    double weight = 150.0;  // λ in g = λ·Φ_δ∘W
    double delta = 5.0;
    double alpha = 0.1;
    double x_max = kDefaultXMax;
    double sigma = kDefaultSigma;
    std::optional<double> rho;  // explicit ρ; unset means ρ = −αλ_min + ζ̃_{L*−K} + rho_margin
    double rho_margin = 1e-3;
    int haar_levels = kDefaultHaarLevels;
};

struct MismatchOptions {
    ScheduleKind kind = ScheduleKind::constant;
    double omega0 = 0.0;
    double eta_bar = 0.0;
    std::uint64_t seed = 0;
};

struct CtProblem {
    ProblemSpec spec;
    ConstantsLedger ledger;
    SpectralEstimates estimates;
    double mismatch_severity = 0.0;  // ‖L* − K‖ / ‖L‖
};

/// Assembles 0 ∈ ∂f(x) + ∇g(x) + αK(Lx − c) + K∇h(Lx):
/// A = ∂f (box + ridge), C = ∇g (β = δ/λ), B = ∇h (Anscombe).
inline CtProblem build_ct_problem(const Geometry& g, const Penalties& pen, const Sinogram& data,
                                  const MismatchOptions& mm = {}, StepSafety safety = {}) {
    g.validate();
    require_dims(g.n_rays(), data.values.size(), "build_ct_problem: sinogram");
    if (!(pen.alpha >= 0.0) || !(pen.weight > 0.0) || !(pen.delta > 0.0) || !(pen.x_max > 0.0)) {
        throw DomainError("build_ct_problem: invalid penalty parameters");
    }
    const LinearMap l = ray_driven_projector(g);
    const LinearMap k = mismatched_backprojector(g);

    auto h = std::make_shared<const AnscombeFidelity>(data.values, pen.sigma);
    const double zeta = anscombe_lipschitz(*h);
    auto gfun = std::make_shared<const HuberTransform>(pen.delta, haar2d_map(g.n_pixels_side, pen.haar_levels),
                                                       pen.weight);

    const SpectralEstimates est = estimate_spectra(l, k);
    const double zeta_tilde = zeta * est.norm_mismatch * est.norm_L;
    const double rho = pen.rho ? *pen.rho : -pen.alpha * est.lambda_min + zeta_tilde + pen.rho_margin;
    const BoxRidge f{pen.x_max, rho};

    ProblemSpec spec{
        ResolventBlock{rho, [f](double gamma, const Vector& y) { return prox_box_ridge(f, gamma, y); }},
        CocoerciveBlock{pen.delta / pen.weight, [gfun](const Vector& x) { return grad_g(*gfun, x); },
                        [gfun](double gamma, const Vector& y) { return prox_g(*gfun, gamma, y); }},
        LipschitzBlock{zeta, [h](const Vector& y) { return anscombe_grad(*h, y); }},
        l,
        MismatchFamily(k, mm.kind, mm.omega0, mm.eta_bar, mm.seed),
        data.values,
        pen.alpha};
    spec.validate();

    CtProblem out{spec, build_ledger(spec, est, safety), est, est.norm_mismatch / est.norm_L};
    if (!(out.ledger.rho_hat > 0.0)) {
        throw DomainError("build_ct_problem: assembled problem has rho_hat <= 0 (" +
                          std::to_string(out.ledger.rho_hat) + ")");
    }
    return out;
}

} // namespace msplit::tomo
