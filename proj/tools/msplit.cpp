// msplit command-line driver: estimate, run, compare, phantom.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <span>
#include <thread>

#include <CLI11.hpp>

#include "msplit/config.hpp"
#include "msplit/io.hpp"

namespace fs = std::filesystem;
using namespace msplit;
using cli::ConfigError;
using cli::RunConfig;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr double kRateFloor = 1e-11;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> algorithm;
    std::optional<long> max_iter;
    bool no_timing = false;
};

RunConfig load(const std::string& path, const Overrides& o) {
    RunConfig c = path.empty() ? RunConfig{} : cli::load_config(path);
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output_dir = *o.out;
    if (o.max_iter) c.max_iter = *o.max_iter;
    if (o.no_timing) c.timing = false;
    if (o.algorithm) {
        c.algorithms = *o.algorithm == "both" ? std::vector{Algorithm::mmfbhf, Algorithm::mmfdrf}
                                              : std::vector{parse_algorithm(*o.algorithm)};
    }
    cli::validate(c);
    return c;
}

/// Assembly failures caused by the configured values count as configuration errors.
cli::AssembledProblem assemble_or_config_error(const RunConfig& c) {
    try {
        return cli::assemble(c);
    } catch (const DomainError& e) {
        throw ConfigError(c.source + ": " + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(c.source + ": " + e.what());
    }
}

json ledger_json(const cli::AssembledProblem& p) {
    json j = p.ledger;
    j["lambda_min_tol"] = p.estimates.tol;
    j["mismatch_severity"] = p.estimates.norm_L > 0 ? p.estimates.norm_mismatch / p.estimates.norm_L : 0.0;
    return j;
}

json config_echo(const RunConfig& c, const cli::AssembledProblem& p) {
    json j{{"source", c.source},
           {"problem", cli::to_string(c.problem)},
           {"seed", c.seed},
           {"problem_hash", p.problem_hash},
           {"dim", p.spec.dim()},
           {"data_dim", p.spec.data_dim()},
           {"mismatch", {{"schedule", to_string(c.schedule)}, {"omega0", c.omega0}, {"eta_bar", c.eta_bar}}}};
    if (c.problem == cli::ProblemKind::ct_desk) {
        j["geometry"] = io::to_json(c.geometry);
        j["phantom"] = tomo::to_string(c.phantom);
    }
    return j;
}

struct RunResult {
    std::string run_id;
    Algorithm algorithm = Algorithm::mmfbhf;
    std::vector<io::TraceRow> rows;
    json summary;
    bool numerical_failure = false;
    std::string error;
};

/// Quality against the ground truth when known, otherwise against the reference.
std::optional<QualityMetrics> metrics_for(const Vector& x, const cli::AssembledProblem& p, const std::optional<Vector>& ref) {
    const std::optional<Vector>& truth = p.ground_truth ? p.ground_truth : ref;
    if (!truth || !(truth->squaredNorm() > 0.0)) return std::nullopt;
    return quality(x, *truth);
}

std::vector<io::TraceRow> rows_from(const IterateTrace& t, const Vector& x0, const cli::AssembledProblem& p,
                                    const std::optional<Vector>& ref, bool timing) {
    std::vector<io::TraceRow> rows;
    io::TraceRow first;
    first.quality = metrics_for(x0, p, ref);
    if (ref) first.dist_to_ref = (x0 - *ref).norm();
    rows.push_back(first);
    for (const TraceRecord* r : t.snapshots()) {
        io::TraceRow row;
        row.n = r->n;
        row.wall_ns = timing ? r->wall_ns : 0;
        row.residual = r->residual;
        row.quality = metrics_for(*r->x, p, ref);
        row.dist_to_ref = r->dist_to_ref;
        rows.push_back(row);
    }
    return rows;
}

std::optional<json> gap_bound_json(const RunConfig& c, const cli::AssembledProblem& p, Algorithm algo,
                                   const Vector& x_mismatched) {
    if (!c.gap_bound_enabled()) return std::nullopt;
    if (!(p.spec.A.rho + p.spec.alpha * p.estimates.lambda_min_matched > 0.0)) {
        return json{{"skipped", "rho + alpha*lambda_min(L*L) <= 0"}};
    }
    const ProblemSpec matched = cli::matched_variant(p.spec);
    const auto est = estimate_spectra(matched.L, matched.K());
    const auto ledger = build_ledger(matched, est, c.safety);
    SolverConfig s = default_config(algo, ledger);
    s.max_iter = c.reference_iter;
    s.rel_residual_tol = 1e-15;
    s.record_every = c.reference_iter;
    const Vector xm = run(matched, s, ledger, Vector::Zero(matched.dim())).x_final;
    return to_json(gap_bound_report(x_mismatched, xm, p.spec, p.estimates));
}

RunResult execute(const RunConfig& c, const cli::AssembledProblem& p, Algorithm algo, const std::optional<Vector>& ref,
                  const std::string& run_id) {
    RunResult res;
    res.run_id = run_id;
    res.algorithm = algo;
    SolverConfig s = cli::solver_config(c, algo, p.ledger);
    s.reference = ref;
    const Vector z0 = Vector::Zero(p.spec.dim());
    const Vector x0 = algo == Algorithm::mmfdrf ? Vector(p.spec.C.resolvent(s.gamma, z0)) : z0;

    json summary{{"run_id", run_id}, {"algorithm", to_string(algo)}, {"gamma", s.gamma},
                 {"epsilon", algo == Algorithm::mmfbhf ? json(s.epsilon) : json()},
                 {"config", config_echo(c, p)}, {"ledger", ledger_json(p)}};
    IterateTrace trace;
    try {
        trace = run(p.spec, s, p.ledger, z0);
    } catch (const NumericalError& e) {
        res.numerical_failure = true;
        res.error = e.what();
        res.rows = rows_from(e.trace(), x0, p, ref, c.timing);
        summary["error"] = e.what();
        summary["iterations"] = e.trace().iterations;
        res.summary = std::move(summary);
        return res;
    }
    res.rows = rows_from(trace, x0, p, ref, c.timing);
    summary["iterations"] = trace.iterations;
    summary["converged"] = trace.converged;
    summary["final_residual"] = trace.records.back().residual;
    if (p.ground_truth) {
        const auto roi = tomo::roi_mask(c.geometry);
        summary["final_metrics"] = to_json(quality(trace.x_final, *p.ground_truth, &roi));
    } else if (auto q = metrics_for(trace.x_final, p, ref)) {
        summary["final_metrics"] = to_json(*q);
    }
    if (ref) {
        const Vector z_star = governing_fixed_point(algo, p.spec, s.gamma, *ref);
        std::vector<double> dist{(z0 - z_star).norm()}, omegas;
        for (const auto& r : trace.records) dist.push_back(*r.z_dist_to_ref);
        for (std::size_t n = 0; n < dist.size(); ++n) omegas.push_back(p.spec.mismatch.omega(static_cast<long>(n)));
        summary["final_dist_to_ref"] = *trace.records.back().dist_to_ref;
        summary["fejer_report"] = to_json(fejer_monitor(dist, omegas));
        const double theta = algo == Algorithm::mmfbhf ? p.ledger.theta_fbhf : p.ledger.theta_fdrf;
        const double eta = c.schedule == ScheduleKind::geometric ? c.eta_bar : 0.0;
        // Below ~1e-11·d₀ the distances are round-off and would flatten the fit.
        std::size_t usable = 0;
        while (usable < dist.size() && dist[usable] > kRateFloor * dist.front()) ++usable;
        try {
            summary["rate_report"] = to_json(rate_estimate(std::span(dist).first(usable), theta, eta));
        } catch (const DomainError& e) {
            summary["rate_report"] = json{{"skipped", e.what()}};
        }
    }
    if (auto g = gap_bound_json(c, p, algo, trace.x_final)) summary["gap_bound_report"] = *g;
    res.summary = std::move(summary);
    if (c.save_iterates) res.summary["x_final"] = std::vector<double>(trace.x_final.begin(), trace.x_final.end());
    return res;
}

void write_trace_csv(const fs::path& path, const std::vector<io::TraceRow>& rows) {
    std::string s = std::string(io::kTraceHeader) + "\n";
    for (const auto& r : rows) s += r.csv() + "\n";
    io::write_text(path, s);
}

void save_iterate(const RunConfig& c, const cli::AssembledProblem& p, const fs::path& stem, const RunResult& r) {
    if (!c.save_iterates || !r.summary.contains("x_final")) return;
    const auto xs = r.summary["x_final"].get<std::vector<double>>();
    const Vector x = Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size()));
    std::vector<Index> dims{p.spec.dim()};
    json extra{{"algorithm", to_string(r.algorithm)}};
    if (c.problem == cli::ProblemKind::ct_desk) {
        dims = {c.geometry.n_pixels_side, c.geometry.n_pixels_side};
        extra["geometry"] = io::to_json(c.geometry);
    }
    io::write_array(stem, x, dims, extra);
}

std::optional<Vector> reference_for(const RunConfig& c, const cli::AssembledProblem& p) {
    if (c.reference_mode() == cli::ReferenceMode::none) return std::nullopt;
    return cli::reference_solution(p, c);
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MSPLIT_THREADS")) {
        try {
            n = std::max<long>(1, std::stol(env));
        } catch (const std::exception&) {
            throw ConfigError(std::string("MSPLIT_THREADS: cannot parse '") + env + "'");
        }
    }
    return std::min(n, std::max<std::size_t>(jobs, 1));
}

// ---------------------------------------------------------------------------

int cmd_estimate(const std::string& config, const Overrides& o) {
    const RunConfig c = load(config, o);
    const auto p = assemble_or_config_error(c);
    for (Algorithm a : c.algorithms) cli::solver_config(c, a, p.ledger);
    const json j = ledger_json(p);
    fs::create_directories(c.output_dir);
    io::write_json(c.output_dir / "ledger.json", j);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_run(const std::string& config, const Overrides& o) {
    const RunConfig c = load(config, o);
    const auto p = assemble_or_config_error(c);
    for (Algorithm a : c.algorithms) cli::solver_config(c, a, p.ledger);
    const auto ref = reference_for(c, p);
    fs::create_directories(c.output_dir);
    io::write_json(c.output_dir / "ledger.json", ledger_json(p));
    int code = kExitOk;
    for (Algorithm a : c.algorithms) {
        const RunResult r = execute(c, p, a, ref, to_string(a));
        write_trace_csv(c.output_dir / (r.run_id + ".csv"), r.rows);
        json summary = r.summary;
        summary.erase("x_final");
        io::write_json(c.output_dir / (r.run_id + "_summary.json"), summary);
        save_iterate(c, p, c.output_dir / (r.run_id + "_x"), r);
        if (r.numerical_failure) {
            std::cerr << "msplit: " << r.run_id << ": " << r.error << "\n";
            code = kExitNumerical;
            break;
        }
        const auto& last = r.rows.back();
        std::cout << r.run_id << ": " << summary["iterations"] << " iterations, residual " << io::fmt(last.residual);
        if (last.quality) std::cout << ", snr " << io::fmt(last.quality->snr_db) << " dB";
        std::cout << "\n";
    }
    return code;
}

int cmd_compare(const std::vector<std::string>& configs, const Overrides& o) {
    struct Job {
        std::size_t config_index;
        Algorithm algorithm;
        std::string run_id;
    };
    std::vector<RunConfig> cfgs;
    for (const auto& path : configs) cfgs.push_back(load(path, o));
    if (cfgs.empty()) cfgs.push_back(load("", o));
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        for (Algorithm a : cfgs[i].algorithms) {
            jobs.push_back({i, a, "r" + std::to_string(jobs.size()) + "_" + to_string(a)});
        }
    }
    if (jobs.size() < 2) throw ConfigError("compare: need at least two runs");
    const std::uint64_t h = cli::problem_hash(cfgs.front());
    for (const auto& c : cfgs) {
        if (cli::problem_hash(c) != h) {
            throw ConfigError("compare: '" + c.source + "' describes a different problem than '" +
                              cfgs.front().source + "'");
        }
    }
    std::vector<cli::AssembledProblem> problems;
    for (const auto& c : cfgs) {
        problems.push_back(assemble_or_config_error(c));
        for (Algorithm a : c.algorithms) cli::solver_config(c, a, problems.back().ledger);
    }
    const fs::path out = o.out ? fs::path(*o.out) : cfgs.front().output_dir;
    fs::create_directories(out);

    std::vector<std::optional<Vector>> refs(cfgs.size());
    for (std::size_t i = 0; i < cfgs.size(); ++i) refs[i] = reference_for(cfgs[i], problems[i]);

    std::vector<RunResult> results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j; (j = next++) < jobs.size();) {
            try {
                const auto& job = jobs[j];
                results[j] = execute(cfgs[job.config_index], problems[job.config_index], job.algorithm,
                                     refs[job.config_index], job.run_id);
                write_trace_csv(out / (job.run_id + ".csv"), results[j].rows);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = worker_count(jobs.size());
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::string csv = std::string("run_id,") + io::kTraceHeader + "\n";
    json summary{{"problem_hash", h}, {"runs", json::array()}};
    int code = kExitOk;
    for (auto& r : results) {
        for (const auto& row : r.rows) csv += r.run_id + ',' + row.csv() + "\n";
        r.summary.erase("x_final");
        summary["runs"].push_back(r.summary);
        if (r.numerical_failure) code = kExitNumerical;
    }
    io::write_text(out / "compare.csv", csv);
    io::write_json(out / "compare_summary.json", summary);
    for (const auto& r : results) {
        std::cout << r.run_id << ": " << r.summary.value("iterations", 0L) << " iterations";
        if (r.summary.contains("final_metrics")) std::cout << ", snr " << r.summary["final_metrics"]["snr_db"] << " dB";
        std::cout << "\n";
    }
    return code;
}

int cmd_phantom(const std::string& config, const Overrides& o) {
    const RunConfig c = load(config, o);
    if (c.problem != cli::ProblemKind::ct_desk) throw ConfigError("phantom: needs a ct_desk problem");
    const auto& g = c.geometry;
    const Vector phantom =
        tomo::make_phantom(g, c.phantom, cli::derived_seed(c.seed, cli::kPhantomStream), c.penalties.x_max);
    const auto sino = tomo::synthesize_data(tomo::ray_driven_projector(g), phantom, c.penalties.sigma,
                                            cli::derived_seed(c.seed, cli::kNoiseStream), g);
    fs::create_directories(c.output_dir);
    const json geo = io::to_json(g);
    io::write_array(c.output_dir / "phantom", phantom, {g.n_pixels_side, g.n_pixels_side},
                    {{"geometry", geo}, {"kind", tomo::to_string(c.phantom)}, {"seed", c.seed}});
    io::write_grid_csv(c.output_dir / "phantom.csv", phantom, g.n_pixels_side, g.n_pixels_side);
    io::write_array(c.output_dir / "sinogram", sino.values, {g.n_angles, g.n_bins},
                    {{"geometry", geo}, {"sigma", c.penalties.sigma}, {"seed", c.seed}});
    io::write_grid_csv(c.output_dir / "sinogram.csv", sino.values, g.n_angles, g.n_bins);
    std::cout << "wrote " << (c.output_dir / "phantom.bin").string() << " and " << (c.output_dir / "sinogram.bin").string()
              << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mismatched-adjoint splitting solvers"};
    app.require_subcommand(1);

    std::vector<std::string> configs;
    Overrides o;
    std::optional<std::uint64_t> seed;
    std::optional<long> max_iter;
    std::optional<std::string> out, algorithm;

    auto add_common = [&](CLI::App* sub, bool many_configs) {
        if (many_configs) {
            sub->add_option("--config", configs, "Run config (repeatable)")->check(CLI::ExistingFile);
        } else {
            sub->add_option("--config", configs, "Run config")->check(CLI::ExistingFile)->expected(0, 1);
        }
        sub->add_option("--seed", seed, "Override the config seed");
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--algorithm", algorithm, "mmfbhf, mmfdrf or both")
            ->check(CLI::IsMember({"mmfbhf", "mmfdrf", "both"}));
        sub->add_option("--max-iter", max_iter, "Override the iteration cap")->check(CLI::PositiveNumber);
        sub->add_flag("--no-timing", o.no_timing, "Write wall_ns = 0 (byte-stable traces)");
    };
    auto* estimate = app.add_subcommand("estimate", "Assemble the problem and write the constants ledger");
    auto* run_cmd = app.add_subcommand("run", "Run one or both solvers and write traces");
    auto* compare = app.add_subcommand("compare", "Run several configs on the same problem and merge traces");
    auto* phantom = app.add_subcommand("phantom", "Write the phantom and its sinogram");
    add_common(estimate, false);
    add_common(run_cmd, false);
    add_common(compare, true);
    add_common(phantom, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    o.seed = seed;
    o.out = out;
    o.algorithm = algorithm;
    o.max_iter = max_iter;
    const std::string first = configs.empty() ? std::string() : configs.front();

    try {
        if (*estimate) return cmd_estimate(first, o);
        if (*run_cmd) return cmd_run(first, o);
        if (*compare) return cmd_compare(configs, o);
        if (*phantom) return cmd_phantom(first, o);
    } catch (const ConfigError& e) {
        std::cerr << "msplit: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "msplit: numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "msplit: " << e.what() << "\n";
        return kExitOther;
    }
    return kExitOther;
}
