#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "msplit/config.hpp"

namespace fs = std::filesystem;
using namespace msplit;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("msplit_cli_" + std::to_string(::getpid()) + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) const {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    int msplit(const std::string& args) const {
        const std::string cmd = std::string(MSPLIT_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                                " 2> " + (dir_ / "stderr.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string stderr_text() const { return slurp(dir_ / "stderr.txt"); }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static std::vector<std::string> lines(const fs::path& p) {
        std::vector<std::string> out;
        std::ifstream in(p);
        for (std::string l; std::getline(in, l);) out.push_back(l);
        return out;
    }

    static json read_json(const fs::path& p) { return json::parse(slurp(p)); }

    fs::path dir_;
};

std::string quadratic(const std::string& quadratic_extra = "") {
    return R"([problem]
kind = quadratic_synthetic
seed = 4
[quadratic]
box = 1
)" + quadratic_extra + R"([solver]
max_iter = 600
record_every = 20
rel_residual_tol = 0
)";
}

const std::string kQuadratic = quadratic();

std::string ct(long max_iter, long record_every) {
    return "[problem]\nkind = ct_desk\nseed = 1\n[solver]\nrel_residual_tol = 0\nmax_iter = " +
           std::to_string(max_iter) + "\nrecord_every = " + std::to_string(record_every) + "\n";
}

} // namespace

TEST(Config, DefaultsAndOverrides) {
    const auto c = cli::parse_config_text(kQuadratic, "q.ini");
    EXPECT_EQ(c.problem, cli::ProblemKind::quadratic_synthetic);
    EXPECT_EQ(c.seed, 4u);
    EXPECT_EQ(c.quadratic.box, 1.0);
    EXPECT_EQ(c.algorithms.size(), 1u);
    EXPECT_EQ(c.record_every, 20);
    EXPECT_EQ(c.reference_mode(), cli::ReferenceMode::automatic);
    const auto d = cli::parse_config_text("", "empty.ini");
    EXPECT_EQ(d.problem, cli::ProblemKind::ct_desk);
    EXPECT_EQ(d.penalties.weight, 150.0);
    EXPECT_EQ(d.reference_mode(), cli::ReferenceMode::none);
}

TEST(Config, ErrorsNameTheLocation) {
    auto message = [](const std::string& text) {
        try {
            cli::parse_config_text(text, "bad.ini");
        } catch (const cli::ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message("[mismatch]\neta_bar = 1.5\n").find("[mismatch] eta_bar"), std::string::npos);
    EXPECT_NE(message("[solver]\nmax_iter = ten\n").find("[solver] max_iter"), std::string::npos);
    EXPECT_NE(message("[solver]\nmax_itr = 10\n").find("unknown key 'max_itr'"), std::string::npos);
    EXPECT_NE(message("[solvers]\nmax_iter = 3\n").find("unknown section"), std::string::npos);
    EXPECT_NE(message("[solver]\nmax_iter 10\n").find("bad.ini:2"), std::string::npos);
    EXPECT_NE(message("[geometry]\nn_pixels_side = 30\n").find("power of two"), std::string::npos);
    EXPECT_NE(message("[solver]\nalgorithm = fista\n").find("[solver] algorithm"), std::string::npos);
}

TEST(Config, InlineComments) {
    const auto c = cli::parse_config_text(
        "; whole line\n[problem]\nkind = quadratic_synthetic   ; or ct_desk\n[quadratic]\nbox = inf # unbounded\n",
        "c.ini");
    EXPECT_EQ(c.problem, cli::ProblemKind::quadratic_synthetic);
    EXPECT_TRUE(std::isinf(c.quadratic.box));
    EXPECT_THROW(cli::parse_config_text("[solver]\nmax_iter = 12;3\n", "c.ini"), cli::ConfigError);
}

TEST(Config, ProblemHashIgnoresMismatchAndSolver) {
    auto a = cli::parse_config_text(kQuadratic, "a");
    auto b = a;
    b.omega0 = 0.1;
    b.schedule = ScheduleKind::geometric;
    b.eta_bar = 0.9;
    b.max_iter = 7;
    EXPECT_EQ(cli::problem_hash(a), cli::problem_hash(b));
    b.quadratic.alpha = 2.0;
    EXPECT_NE(cli::problem_hash(a), cli::problem_hash(b));
}

TEST_F(Cli, EstimateCtDesk) {
    ASSERT_EQ(msplit("estimate --out " + (dir_ / "est").string()), 0) << stderr_text();
    const json j = read_json(dir_ / "est" / "ledger.json");
    for (const char* k : {"alpha", "beta", "zeta", "rho", "lambda_min", "kappa_K", "zeta_tilde_mismatch", "rho_hat",
                          "chi", "gamma_fbhf", "gamma_hat", "gamma_fdrf", "eps1", "eps2", "theta1", "norm_L",
                          "norm_K", "norm_mismatch", "theta_fbhf", "theta_fdrf"}) {
        EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_NEAR(j["rho_hat"].get<double>(), 1e-3, 1e-9);
    EXPECT_NEAR(j["beta"].get<double>(), 1.0 / 30.0, 1e-15);
    EXPECT_GT(j["norm_mismatch"].get<double>(), 0.0);
}

TEST_F(Cli, EstimateMatchedQuadratic) {
    const auto cfg = write("q.ini", kQuadratic);
    ASSERT_EQ(msplit("estimate --config " + cfg.string() + " --out " + (dir_ / "est").string()), 0) << stderr_text();
    EXPECT_EQ(read_json(dir_ / "est" / "ledger.json")["norm_mismatch"].get<double>(), 0.0);
}

TEST_F(Cli, InvalidConfigLeavesNoOutput) {
    const auto cfg = write("bad.ini", "[mismatch]\nschedule = geometric\neta_bar = 1.5\n");
    EXPECT_EQ(msplit("estimate --config " + cfg.string() + " --out " + (dir_ / "est").string()), 2);
    EXPECT_FALSE(fs::exists(dir_ / "est"));
    EXPECT_NE(stderr_text().find("eta_bar"), std::string::npos);
    const auto gamma = write("gamma.ini", std::string(kQuadratic) + "gamma = 100\n");
    EXPECT_EQ(msplit("run --config " + gamma.string() + " --out " + (dir_ / "run").string()), 2);
    EXPECT_FALSE(fs::exists(dir_ / "run"));
    EXPECT_EQ(msplit("run --algorithm fista"), 2);
}

TEST_F(Cli, RunCtDeskTraces) {
    const auto cfg = write("ct.ini", ct(2000, 10));
    ASSERT_EQ(msplit("run --config " + cfg.string() + " --algorithm both --out " + (dir_ / "ct").string()), 0)
        << stderr_text();
    const auto rows = lines(dir_ / "ct" / "mmfbhf.csv");
    ASSERT_EQ(rows.size(), 2000u / 10u + 1u + 1u);
    EXPECT_EQ(rows[0], "n,wall_ns,residual,snr_db,nmse,mae,dist_to_ref");
    EXPECT_EQ(rows.back().substr(0, 5), "2000,");
    const json fb = read_json(dir_ / "ct" / "mmfbhf_summary.json");
    const json fd = read_json(dir_ / "ct" / "mmfdrf_summary.json");
    EXPECT_EQ(fb["iterations"].get<long>(), 2000);
    EXPECT_NEAR(fb["final_metrics"]["snr_db"].get<double>(), fd["final_metrics"]["snr_db"].get<double>(), 0.2);
    EXPECT_TRUE(fb["final_metrics"].contains("roi_snr_db"));
    EXPECT_TRUE(fb.contains("ledger"));

    // SNR increases after the first 10% of the run.
    double prev = -1e300;
    for (std::size_t i = 1 + rows.size() / 10; i < rows.size(); ++i) {
        std::stringstream ss(rows[i]);
        std::string field;
        for (int k = 0; k < 4; ++k) std::getline(ss, field, ',');
        const double snr = std::stod(field);
        EXPECT_GE(snr, prev - 1e-12) << rows[i];
        prev = snr;
    }
}

TEST_F(Cli, FixedSeedIsByteIdentical) {
    const auto cfg = write("q.ini", kQuadratic);
    const std::string base = "run --algorithm both --config " + cfg.string() + " --seed 11 --no-timing --out ";
    ASSERT_EQ(msplit(base + (dir_ / "a").string()), 0) << stderr_text();
    ASSERT_EQ(msplit(base + (dir_ / "b").string()), 0) << stderr_text();
    for (const char* f : {"mmfbhf.csv", "mmfdrf.csv"}) {
        const auto a = slurp(dir_ / "a" / f);
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
    }
    ASSERT_EQ(msplit("run --config " + cfg.string() + " --seed 12 --no-timing --out " + (dir_ / "c").string()), 0);
    EXPECT_NE(slurp(dir_ / "a" / "mmfbhf.csv"), slurp(dir_ / "c" / "mmfbhf.csv"));
}

TEST_F(Cli, NonFiniteIterateExitsThree) {
    const auto problem = write("p.json", R"({"L": [[10, 0], [0, 10]], "c": [1e308, -1e308], "alpha": 1, "rho": 1})");
    const auto cfg = write("nan.ini", "[problem]\nkind = custom_file\nfile = " + problem.string() +
                                          "\n[solver]\nreference = none\nmax_iter = 50\n");
    EXPECT_EQ(msplit("run --config " + cfg.string() + " --out " + (dir_ / "nan").string()), 3);
    const auto rows = lines(dir_ / "nan" / "mmfbhf.csv");
    ASSERT_GE(rows.size(), 2u);
    EXPECT_EQ(rows[1].substr(0, 2), "0,");
    EXPECT_TRUE(read_json(dir_ / "nan" / "mmfbhf_summary.json").contains("error"));
}

TEST_F(Cli, CompareIdenticalConfigs) {
    const auto a = write("a.ini", kQuadratic);
    const auto b = write("b.ini", kQuadratic);
    ASSERT_EQ(msplit("compare --no-timing --config " + a.string() + " --config " + b.string() + " --out " +
                     (dir_ / "cmp").string()),
              0)
        << stderr_text();
    const auto rows = lines(dir_ / "cmp" / "compare.csv");
    EXPECT_EQ(rows[0], "run_id,n,wall_ns,residual,snr_db,nmse,mae,dist_to_ref");
    std::vector<std::string> r0, r1;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto comma = rows[i].find(',');
        (rows[i].substr(0, comma) == "r0_mmfbhf" ? r0 : r1).push_back(rows[i].substr(comma));
    }
    ASSERT_EQ(r0.size(), 600u / 20u + 1u);
    EXPECT_EQ(r0, r1);
    EXPECT_EQ(read_json(dir_ / "cmp" / "compare_summary.json")["runs"].size(), 2u);
}

TEST_F(Cli, CompareRejectsDifferentProblems) {
    const auto a = write("a.ini", kQuadratic);
    const auto b = write("b.ini", quadratic("alpha = 2\n"));
    EXPECT_EQ(msplit("compare --config " + a.string() + " --config " + b.string() + " --out " +
                     (dir_ / "cmp").string()),
              2);
    EXPECT_NE(stderr_text().find("different problem"), std::string::npos);
}

TEST_F(Cli, CompareMismatchSweepReportsGapBounds) {
    std::string args = "compare --algorithm mmfbhf --out " + (dir_ / "sweep").string();
    for (const char* w : {"0", "0.01", "0.1"}) {
        const auto p = write(std::string("w") + w + ".ini",
                             std::string(kQuadratic) + "[mismatch]\nschedule = geometric\neta_bar = 0.9\nomega0 = " + w +
                                 "\n");
        args += " --config " + p.string();
    }
    ASSERT_EQ(msplit(args), 0) << stderr_text();
    const json s = read_json(dir_ / "sweep" / "compare_summary.json");
    ASSERT_EQ(s["runs"].size(), 3u);
    for (const auto& r : s["runs"]) {
        ASSERT_TRUE(r.contains("gap_bound_report")) << r.dump();
        EXPECT_TRUE(r["gap_bound_report"]["holds"].get<bool>());
        EXPECT_TRUE(r["rate_report"]["satisfied"].get<bool>());
    }
}

TEST_F(Cli, CompareFbhfAgainstFdrfOnCt) {
    const auto cfg = write("ct.ini", ct(300, 30));
    ASSERT_EQ(msplit("compare --algorithm both --config " + cfg.string() + " --out " + (dir_ / "cmp").string()), 0)
        << stderr_text();
    std::map<std::string, std::vector<long>> grid;
    const auto rows = lines(dir_ / "cmp" / "compare.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::stringstream ss(rows[i]);
        std::string id, n;
        std::getline(ss, id, ',');
        std::getline(ss, n, ',');
        grid[id].push_back(std::stol(n));
    }
    ASSERT_EQ(grid.size(), 2u);
    EXPECT_EQ(grid["r0_mmfbhf"], grid["r1_mmfdrf"]);
    EXPECT_EQ(grid["r0_mmfbhf"].size(), 11u);
}

TEST_F(Cli, PhantomExport) {
    ASSERT_EQ(msplit("phantom --seed 3 --out " + (dir_ / "ph").string()), 0) << stderr_text();
    const json h = read_json(dir_ / "ph" / "phantom.json");
    EXPECT_EQ(h["dims"], json::array({32, 32}));
    EXPECT_EQ(h["dtype"], "float64");
    EXPECT_EQ(fs::file_size(dir_ / "ph" / "phantom.bin"), 32u * 32u * 8u);
    EXPECT_EQ(fs::file_size(dir_ / "ph" / "sinogram.bin"), 24u * 48u * 8u);
    EXPECT_EQ(lines(dir_ / "ph" / "phantom.csv").size(), 32u);
    EXPECT_EQ(read_json(dir_ / "ph" / "sinogram.json")["dims"], json::array({24, 48}));
}
