#pragma once

// Run configuration: an INI-style file with sections, checked against a fixed schema.
//
//   [problem]  kind = ct_desk | quadratic_synthetic | custom_file, seed, file
//   [geometry] n_pixels_side, n_angles, n_bins, bin_upsampling, pixel_size, phantom
//   [penalties] weight, delta, alpha, x_max, sigma, rho, rho_margin, haar_levels
//   [quadratic] dim, data_dim, alpha, mismatch, with_B, with_C, box, rho, rho_margin
//   [mismatch] schedule, omega0, eta_bar
//   [solver]   algorithm, max_iter, rel_residual_tol, record_every, gamma, epsilon,
//              safety_fbhf, safety_fdrf, reference, reference_iter, gap_bound
//   [output]   dir, timing, save_iterates

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "msplit/diagnostics.hpp"
#include "msplit/solvers.hpp"
#include "msplit/synthetic.hpp"
#include "msplit/tomo.hpp"

namespace msplit::cli {

/// Malformed or inadmissible configuration. Maps to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class ProblemKind { ct_desk, quadratic_synthetic, custom_file };

inline const char* to_string(ProblemKind k) {
    switch (k) {
    case ProblemKind::ct_desk: return "ct_desk";
    case ProblemKind::quadratic_synthetic: return "quadratic_synthetic";
    case ProblemKind::custom_file: return "custom_file";
    }
    return "?";
}

enum class ReferenceMode { none, automatic };

struct RunConfig {
    std::string source = "<defaults>";

    ProblemKind problem = ProblemKind::ct_desk;
    std::uint64_t seed = 1;
    std::filesystem::path custom_file;

    tomo::Geometry geometry;
    tomo::PhantomKind phantom = tomo::PhantomKind::disks;
    tomo::Penalties penalties;

    QuadraticOptions quadratic;

    ScheduleKind schedule = ScheduleKind::constant;
    double omega0 = 0.0;
    double eta_bar = 0.0;

    std::vector<Algorithm> algorithms{Algorithm::mmfbhf};
    long max_iter = 2000;
    double rel_residual_tol = 1e-10;
    long record_every = 1;
    std::optional<double> gamma;
    std::optional<double> epsilon;
    StepSafety safety;
    std::optional<ReferenceMode> reference;  // unset: automatic for synthetic problems, none for CT
    long reference_iter = 100000;
    std::optional<bool> gap_bound;  // unset: on for synthetic problems

    std::filesystem::path output_dir = "out";
    bool timing = true;
    bool save_iterates = false;

    ReferenceMode reference_mode() const {
        if (reference) return *reference;
        return problem == ProblemKind::ct_desk ? ReferenceMode::none : ReferenceMode::automatic;
    }
    bool gap_bound_enabled() const { return gap_bound.value_or(problem != ProblemKind::ct_desk); }
};

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"problem", {"kind", "seed", "file"}},
        {"geometry", {"n_pixels_side", "n_angles", "n_bins", "bin_upsampling", "pixel_size", "phantom"}},
        {"penalties", {"weight", "delta", "alpha", "x_max", "sigma", "rho", "rho_margin", "haar_levels"}},
        {"quadratic", {"dim", "data_dim", "alpha", "mismatch", "with_B", "with_C", "box", "rho", "rho_margin"}},
        {"mismatch", {"schedule", "omega0", "eta_bar"}},
        {"solver",
         {"algorithm", "max_iter", "rel_residual_tol", "record_every", "gamma", "epsilon", "safety_fbhf",
          "safety_fdrf", "reference", "reference_iter", "gap_bound"}},
        {"output", {"dir", "timing", "save_iterates"}},
    };
    return s;
}

class Reader {
public:
    Reader(const ptree& root, std::string source) : root_(root), source_(std::move(source)) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        auto sec = root_.get_child_optional(section);
        if (!sec) return std::nullopt;
        auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return *v;
    }

    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& msg) const {
        throw ConfigError(source_ + ": [" + section + "] " + key + ": " + msg);
    }

    template <class T>
    void get(const std::string& section, const std::string& key, T& out) const {
        auto v = raw(section, key);
        if (!v) return;
        out = parse<T>(section, key, *v);
    }

    template <class T>
    void get(const std::string& section, const std::string& key, std::optional<T>& out) const {
        auto v = raw(section, key);
        if (!v) return;
        out = parse<T>(section, key, *v);
    }

    template <class T>
    T parse(const std::string& section, const std::string& key, const std::string& text) const {
        if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1" || text == "yes") return true;
            if (text == "false" || text == "0" || text == "no") return false;
            fail(section, key, "expected a boolean, got '" + text + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
            return text;
        } else {
            std::istringstream is(text);
            T value{};
            is >> value;
            if (is.fail() || !(is >> std::ws).eof()) fail(section, key, "cannot parse '" + text + "'");
            if constexpr (std::is_unsigned_v<T>) {
                if (text.find('-') != std::string::npos) fail(section, key, "must be nonnegative");
            }
            return value;
        }
    }

private:
    const ptree& root_;
    std::string source_;
};

inline double parse_real(const std::string& text, bool& ok) {
    if (text == "inf") {
        ok = true;
        return std::numeric_limits<double>::infinity();
    }
    std::istringstream is(text);
    double v = 0;
    is >> v;
    ok = !is.fail() && (is >> std::ws).eof();
    return v;
}

} // namespace detail

/// Range and admissibility checks that do not need an assembled problem.
inline void validate(const RunConfig& c) {
    auto bad = [&](const std::string& where, const std::string& msg) {
        throw ConfigError(c.source + ": " + where + ": " + msg);
    };
    if (c.max_iter < 1) bad("[solver] max_iter", "must be >= 1");
    if (c.record_every < 1) bad("[solver] record_every", "must be >= 1");
    if (!(c.rel_residual_tol >= 0.0)) bad("[solver] rel_residual_tol", "must be >= 0");
    if (c.gamma && !(*c.gamma > 0.0)) bad("[solver] gamma", "must be positive");
    if (c.epsilon && !(*c.epsilon > 0.0)) bad("[solver] epsilon", "must be positive");
    if (!(c.safety.fbhf > 0.0 && c.safety.fbhf < 1.0)) bad("[solver] safety_fbhf", "must lie in (0, 1)");
    if (!(c.safety.fdrf > 0.0 && c.safety.fdrf < 1.0)) bad("[solver] safety_fdrf", "must lie in (0, 1)");
    if (c.reference_iter < 1) bad("[solver] reference_iter", "must be >= 1");
    if (c.algorithms.empty()) bad("[solver] algorithm", "no algorithm selected");
    if (!(c.omega0 >= 0.0) || !std::isfinite(c.omega0)) bad("[mismatch] omega0", "must be finite and >= 0");
    if (!(c.eta_bar >= 0.0 && c.eta_bar < 1.0)) bad("[mismatch] eta_bar", "must lie in [0, 1)");
    if (c.problem == ProblemKind::ct_desk) {
        const auto& g = c.geometry;
        if (g.n_pixels_side < 2 || g.n_angles < 1 || g.n_bins < 1) bad("[geometry]", "sizes must be positive");
        if ((g.n_pixels_side & (g.n_pixels_side - 1)) != 0) bad("[geometry] n_pixels_side", "must be a power of two");
        if (!(g.bin_upsampling > 0.0) || !(g.pixel_size > 0.0)) bad("[geometry]", "scales must be positive");
        const auto& p = c.penalties;
        if (!(p.weight > 0.0)) bad("[penalties] weight", "must be positive");
        if (!(p.delta > 0.0)) bad("[penalties] delta", "must be positive");
        if (!(p.alpha >= 0.0)) bad("[penalties] alpha", "must be >= 0");
        if (!(p.x_max > 0.0)) bad("[penalties] x_max", "must be positive");
        if (!(p.sigma >= 0.0)) bad("[penalties] sigma", "must be >= 0");
        if (p.haar_levels < 0 || (Index{1} << p.haar_levels) > g.n_pixels_side) {
            bad("[penalties] haar_levels", "too many levels for the image size");
        }
    } else if (c.problem == ProblemKind::quadratic_synthetic) {
        const auto& q = c.quadratic;
        if (q.dim < 1 || q.data_dim < 1) bad("[quadratic]", "sizes must be positive");
        if (!(q.alpha >= 0.0)) bad("[quadratic] alpha", "must be >= 0");
        if (!(q.mismatch >= 0.0)) bad("[quadratic] mismatch", "must be >= 0");
        if (!(q.box > 0.0)) bad("[quadratic] box", "must be positive");
    } else if (c.custom_file.empty()) {
        bad("[problem] file", "required for custom_file problems");
    }
}

namespace detail {

/// The INI reader only knows whole-line comments; drop trailing "  ; ..." / "  # ..." too.
inline std::string strip_inline_comments(const std::string& text) {
    std::string out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        for (std::size_t i = 1; i < line.size(); ++i) {
            if ((line[i] == ';' || line[i] == '#') && std::isspace(static_cast<unsigned char>(line[i - 1]))) {
                line.erase(i);
                break;
            }
        }
        out += line;
        out += '\n';
    }
    return out;
}

} // namespace detail

/// Parses and validates a config file. `--seed`/`--out`/... overrides are applied by the caller.
inline RunConfig parse_config_text(const std::string& text, const std::string& source) {
    detail::ptree root;
    try {
        std::istringstream is(detail::strip_inline_comments(text));
        boost::property_tree::ini_parser::read_ini(is, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, body] : root) {
        const auto it = detail::schema().find(section);
        if (body.empty() && !body.data().empty()) {
            throw ConfigError(source + ": key '" + section + "' must sit inside a [section]");
        }
        if (it == detail::schema().end()) throw ConfigError(source + ": unknown section [" + section + "]");
        for (const auto& kv : body) {
            if (!it->second.count(kv.first)) {
                throw ConfigError(source + ": [" + section + "] unknown key '" + kv.first + "'");
            }
        }
    }

    RunConfig c;
    c.source = source;
    const detail::Reader r(root, source);
    auto text_of = [&](const std::string& s, const std::string& k) { return r.raw(s, k); };
    auto enum_of = [&](const std::string& s, const std::string& k, auto parse_fn, auto& out) {
        if (auto v = text_of(s, k)) {
            try {
                out = parse_fn(*v);
            } catch (const DomainError& e) {
                r.fail(s, k, e.what());
            }
        }
    };
    auto real = [&](const std::string& s, const std::string& k, double& out) {
        if (auto v = text_of(s, k)) {
            bool ok = false;
            out = detail::parse_real(*v, ok);
            if (!ok) r.fail(s, k, "cannot parse '" + *v + "'");
        }
    };
    auto opt_real = [&](const std::string& s, const std::string& k, std::optional<double>& out) {
        if (auto v = text_of(s, k)) {
            double tmp = 0;
            real(s, k, tmp);
            out = tmp;
        }
    };

    enum_of("problem", "kind", [](const std::string& v) {
        if (v == "ct_desk") return ProblemKind::ct_desk;
        if (v == "quadratic_synthetic") return ProblemKind::quadratic_synthetic;
        if (v == "custom_file") return ProblemKind::custom_file;
        throw DomainError("unknown problem kind '" + v + "'");
    }, c.problem);
    r.get("problem", "seed", c.seed);
    if (auto v = text_of("problem", "file")) {
        c.custom_file = *v;
        if (c.custom_file.is_relative()) c.custom_file = std::filesystem::path(source).parent_path() / c.custom_file;
    }

    r.get("geometry", "n_pixels_side", c.geometry.n_pixels_side);
    r.get("geometry", "n_angles", c.geometry.n_angles);
    r.get("geometry", "n_bins", c.geometry.n_bins);
    real("geometry", "bin_upsampling", c.geometry.bin_upsampling);
    real("geometry", "pixel_size", c.geometry.pixel_size);
    enum_of("geometry", "phantom", tomo::parse_phantom, c.phantom);

    real("penalties", "weight", c.penalties.weight);
    real("penalties", "delta", c.penalties.delta);
    real("penalties", "alpha", c.penalties.alpha);
    real("penalties", "x_max", c.penalties.x_max);
    real("penalties", "sigma", c.penalties.sigma);
    opt_real("penalties", "rho", c.penalties.rho);
    real("penalties", "rho_margin", c.penalties.rho_margin);
    r.get("penalties", "haar_levels", c.penalties.haar_levels);

    r.get("quadratic", "dim", c.quadratic.dim);
    r.get("quadratic", "data_dim", c.quadratic.data_dim);
    real("quadratic", "alpha", c.quadratic.alpha);
    real("quadratic", "mismatch", c.quadratic.mismatch);
    r.get("quadratic", "with_B", c.quadratic.with_B);
    r.get("quadratic", "with_C", c.quadratic.with_C);
    real("quadratic", "box", c.quadratic.box);
    opt_real("quadratic", "rho", c.quadratic.rho);
    real("quadratic", "rho_margin", c.quadratic.rho_margin);

    enum_of("mismatch", "schedule", parse_schedule, c.schedule);
    real("mismatch", "omega0", c.omega0);
    real("mismatch", "eta_bar", c.eta_bar);

    if (auto v = text_of("solver", "algorithm")) {
        if (*v == "both") {
            c.algorithms = {Algorithm::mmfbhf, Algorithm::mmfdrf};
        } else {
            enum_of("solver", "algorithm", [](const std::string& s) { return std::vector{parse_algorithm(s)}; },
                    c.algorithms);
        }
    }
    r.get("solver", "max_iter", c.max_iter);
    real("solver", "rel_residual_tol", c.rel_residual_tol);
    r.get("solver", "record_every", c.record_every);
    opt_real("solver", "gamma", c.gamma);
    opt_real("solver", "epsilon", c.epsilon);
    real("solver", "safety_fbhf", c.safety.fbhf);
    real("solver", "safety_fdrf", c.safety.fdrf);
    enum_of("solver", "reference", [](const std::string& v) {
        if (v == "none") return ReferenceMode::none;
        if (v == "auto") return ReferenceMode::automatic;
        throw DomainError("expected 'none' or 'auto', got '" + v + "'");
    }, c.reference);
    r.get("solver", "reference_iter", c.reference_iter);
    r.get("solver", "gap_bound", c.gap_bound);

    if (auto v = text_of("output", "dir")) c.output_dir = *v;
    r.get("output", "timing", c.timing);
    r.get("output", "save_iterates", c.save_iterates);

    validate(c);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Custom problems: dense JSON description of a QuadraticData instance.

inline Matrix json_matrix(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError("custom problem: '" + name + "' must be a matrix");
    const Index rows = static_cast<Index>(j.size()), cols = static_cast<Index>(j[0].size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        if (static_cast<Index>(j[i].size()) != cols) throw ConfigError("custom problem: ragged matrix '" + name + "'");
        for (Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

inline Vector json_vector(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array()) throw ConfigError("custom problem: '" + name + "' must be a vector");
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

/// Keys: L, K (default Lᵀ), Q, q, P, c, alpha, rho, box (default unbounded).
inline QuadraticData load_custom_problem(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open custom problem '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        QuadraticData d;
        d.L = json_matrix(j.at("L"), "L");
        d.K = j.contains("K") ? json_matrix(j["K"], "K") : Matrix(d.L.transpose());
        const Index n = d.L.cols(), m = d.L.rows();
        d.Q = j.contains("Q") ? json_matrix(j["Q"], "Q") : Matrix::Zero(n, n);
        d.q = j.contains("q") ? json_vector(j["q"], "q") : Vector::Zero(n);
        d.P = j.contains("P") ? json_matrix(j["P"], "P") : Matrix::Zero(m, m);
        d.c = json_vector(j.at("c"), "c");
        d.alpha = j.value("alpha", 1.0);
        d.rho = j.value("rho", 0.0);
        if (j.contains("box")) {
            d.lo = -j["box"].get<double>();
            d.hi = j["box"].get<double>();
        }
        if (d.K.rows() != n || d.K.cols() != m || d.Q.rows() != n || d.Q.cols() != n || d.q.size() != n ||
            d.P.rows() != m || d.P.cols() != m || d.c.size() != m) {
            throw ConfigError("custom problem: inconsistent dimensions");
        }
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("custom problem '" + path.string() + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Assembly

/// A problem ready to run, with the ground truth when one exists.
struct AssembledProblem {
    ProblemSpec spec;
    ConstantsLedger ledger;
    SpectralEstimates estimates;
    std::optional<Vector> ground_truth;  // phantom for CT
    std::optional<tomo::Sinogram> sinogram;
    std::optional<QuadraticData> quadratic;
    std::uint64_t problem_hash = 0;
};

/// Stream tags keep every random draw a function of the single config seed.
inline constexpr std::uint64_t kPhantomStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kMismatchStream = 3;

inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
    auto rng = seeded_engine(seed, stream);
    return rng();
}

/// FNV-1a over a canonical description of everything that defines the inclusion except
/// the mismatch schedule and the algorithm.
inline std::uint64_t problem_hash(const RunConfig& c) {
    std::ostringstream s;
    s.precision(17);
    s << to_string(c.problem) << '|' << c.seed << '|';
    if (c.problem == ProblemKind::ct_desk) {
        const auto& g = c.geometry;
        const auto& p = c.penalties;
        s << g.n_pixels_side << ',' << g.n_angles << ',' << g.n_bins << ',' << g.bin_upsampling << ',' << g.pixel_size
          << ',' << tomo::to_string(c.phantom) << '|' << p.weight << ',' << p.delta << ',' << p.alpha << ',' << p.x_max
          << ',' << p.sigma << ',' << (p.rho ? std::to_string(*p.rho) : "recipe") << ',' << p.rho_margin << ','
          << p.haar_levels;
    } else if (c.problem == ProblemKind::quadratic_synthetic) {
        const auto& q = c.quadratic;
        s << q.dim << ',' << q.data_dim << ',' << q.alpha << ',' << q.mismatch << ',' << q.with_B << ',' << q.with_C
          << ',' << q.box << ',' << (q.rho ? std::to_string(*q.rho) : "recipe") << ',' << q.rho_margin;
    } else {
        s << std::filesystem::weakly_canonical(c.custom_file).string();
    }
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s.str()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline AssembledProblem assemble(const RunConfig& c) {
    const std::uint64_t hash = problem_hash(c);
    const std::uint64_t mm_seed = derived_seed(c.seed, kMismatchStream);
    if (c.problem == ProblemKind::ct_desk) {
        const auto& g = c.geometry;
        const Vector phantom = tomo::make_phantom(g, c.phantom, derived_seed(c.seed, kPhantomStream), c.penalties.x_max);
        const LinearMap l = tomo::ray_driven_projector(g);
        auto sino = tomo::synthesize_data(l, phantom, c.penalties.sigma, derived_seed(c.seed, kNoiseStream), g);
        auto ct = tomo::build_ct_problem(g, c.penalties, sino, {c.schedule, c.omega0, c.eta_bar, mm_seed}, c.safety);
        return {std::move(ct.spec), ct.ledger, ct.estimates, phantom, std::move(sino), std::nullopt, hash};
    }
    QuadraticData d = c.problem == ProblemKind::custom_file ? load_custom_problem(c.custom_file)
                                                            : random_quadratic(c.quadratic, c.seed);
    MismatchFamily fam(LinearMap::dense(d.K), c.schedule, c.omega0, c.eta_bar, mm_seed);
    ProblemSpec spec = make_quadratic_problem(d, fam);
    const auto est = estimate_spectra(spec.L, spec.K());
    const auto ledger = build_ledger(spec, est, c.safety);
    return {std::move(spec), ledger, est, std::nullopt, std::nullopt, std::move(d), hash};
}

/// Solver settings for one algorithm, checked against the ledger. Inadmissible overrides raise ConfigError.
inline SolverConfig solver_config(const RunConfig& c, Algorithm algo, const ConstantsLedger& ledger) {
    SolverConfig s = default_config(algo, ledger);
    if (c.gamma) s.gamma = *c.gamma;
    if (c.epsilon) {
        s.epsilon = *c.epsilon;
    } else if (c.gamma && algo == Algorithm::mmfbhf) {
        s.epsilon = 0.5 * std::min(*c.gamma, ledger.chi - *c.gamma);
    }
    s.max_iter = c.max_iter;
    s.rel_residual_tol = c.rel_residual_tol;
    s.record_every = c.record_every;
    try {
        validate_config(s, ledger);
    } catch (const DomainError& e) {
        throw ConfigError(c.source + ": [solver]: " + e.what());
    }
    return s;
}

/// Long constant-K run from zero; its limit solves the inclusion with the base K.
inline Vector reference_solution(const AssembledProblem& p, const RunConfig& c) {
    ProblemSpec base = p.spec;
    base.mismatch = MismatchFamily(p.spec.K(), ScheduleKind::constant, 0.0, 0.0, 0);
    SolverConfig s = default_config(Algorithm::mmfbhf, p.ledger);
    s.max_iter = c.reference_iter;
    s.rel_residual_tol = 1e-15;
    s.record_every = c.reference_iter;
    return run(base, s, p.ledger, Vector::Zero(base.dim())).x_final;
}

/// Same problem with K replaced by L* (constant).
inline ProblemSpec matched_variant(const ProblemSpec& spec) {
    ProblemSpec m = spec;
    m.mismatch = MismatchFamily(spec.L.adjoint(), ScheduleKind::constant, 0.0, 0.0, 0);
    return m;
}

} // namespace msplit::cli
