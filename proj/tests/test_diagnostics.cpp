#include <gtest/gtest.h>

#include "msplit/diagnostics.hpp"
#include "msplit/solvers.hpp"
#include "msplit/synthetic.hpp"
#include "oracles.hpp"

using namespace msplit;

TEST(Fejer, MonotoneSequence) {
    const std::vector<double> d{5, 4, 3, 3, 1}, w(5, 0.0);
    const auto r = fejer_monitor(d, w);
    EXPECT_EQ(r.total_increase, 0.0);
    EXPECT_FALSE(r.violation);
    EXPECT_EQ(r.scale, 5.0);
}

TEST(Fejer, IncreasesAgainstOmega) {
    const std::vector<double> d{1.0, 1.2, 1.1, 1.15}, w{0.4, 0.2, 0.1, 0.05};
    const auto r = fejer_monitor(d, w);
    EXPECT_NEAR(r.total_increase, 0.25, 1e-15);
    EXPECT_NEAR(r.fitted_constant, 0.5, 1e-12);
    EXPECT_NEAR(r.sum_constant, 0.25 / 0.7, 1e-12);
    EXPECT_FALSE(r.violation);
    const std::vector<double> z(4, 0.0);
    EXPECT_TRUE(fejer_monitor(d, z).violation);
    const std::vector<double> tiny{1.0, 1.0 + 1e-12};
    EXPECT_FALSE(fejer_monitor(tiny, std::vector<double>(2, 0.0)).violation);
}

TEST(Fejer, Errors) {
    EXPECT_THROW(fejer_monitor(std::vector<double>{1.0}, std::vector<double>{0.0}), DomainError);
    EXPECT_THROW(fejer_monitor(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0}), DimensionError);
}

TEST(Rate, ExactGeometric) {
    std::vector<double> d;
    for (int n = 0; n < 60; ++n) d.push_back(std::pow(0.5, n));
    const auto r = rate_estimate(d, 0.6, 0.0);
    EXPECT_NEAR(r.fitted_ratio, 0.5, 1e-6);
    EXPECT_TRUE(r.satisfied);
    EXPECT_EQ(r.samples_used, 15u);
    EXPECT_FALSE(rate_estimate(d, 0.3, 0.2).satisfied);
}

TEST(Rate, DominantTermWins) {
    std::vector<double> d;
    for (int n = 0; n < 400; ++n) d.push_back(std::pow(0.9, n) + std::pow(0.5, n));
    EXPECT_NEAR(rate_estimate(d, 0.9, 0.5).fitted_ratio, 0.9, 1e-6);
}

TEST(Rate, StopsAtFirstZero) {
    std::vector<double> d;
    for (int n = 0; n < 20; ++n) d.push_back(std::pow(0.7, n));
    d.push_back(0.0);
    d.push_back(5.0);
    EXPECT_NEAR(rate_estimate(d, 0.7, 0.0).fitted_ratio, 0.7, 1e-9);
    EXPECT_THROW(rate_estimate(std::vector<double>(7, 1.0), 0.5, 0.0), DomainError);
}

TEST(Quality, Values) {
    const Vector xb = Vector::LinSpaced(5, 1.0, 5.0);
    const auto same = quality(xb, xb);
    EXPECT_EQ(same.nmse, 0.0);
    EXPECT_EQ(same.mae, 0.0);
    EXPECT_EQ(same.snr_db, kSnrCapDb);
    const auto zero = quality(Vector::Zero(5), xb);
    EXPECT_NEAR(zero.nmse, 1.0, 1e-15);
    EXPECT_NEAR(zero.snr_db, 0.0, 1e-12);
    EXPECT_EQ(zero.mae, 5.0);
    Vector xh = xb;
    xh[2] += 0.3;
    const auto q = quality(xh, xb);
    EXPECT_NEAR(q.nmse, std::pow(10.0, -q.snr_db / 10.0), 1e-15);
    const std::vector<bool> all(5, true);
    const auto m = quality(xh, xb, &all);
    EXPECT_EQ(*m.roi_nmse, q.nmse);
    EXPECT_EQ(*m.roi_mae, q.mae);
    EXPECT_THROW(quality(xb, Vector::Zero(5)), DomainError);
    EXPECT_THROW(quality(xb, Vector::Zero(4)), DimensionError);
    EXPECT_NEAR(snr_input_db(Vector::Constant(4, 10.0), Vector::Constant(4, 11.0)), 20.0, 1e-12);
}

namespace {

QuadraticData six_dim(std::uint64_t seed) {
    QuadraticOptions o;
    o.dim = 6;
    o.data_dim = 8;
    o.box = 2.0;
    o.rho = 0.3;
    return random_quadratic(o, seed);
}

} // namespace

TEST(GapBound, MatchedIsZero) {
    const auto d = six_dim(1);
    const auto spec = make_quadratic_problem(d);
    const Vector xs = oracle::matched_solution(d);
    const auto r = gap_bound_report(xs, xs, spec, estimate_spectra(spec.L, spec.K()));
    EXPECT_EQ(r.actual_gap, 0.0);
    EXPECT_NEAR(r.bound, 0.0, 1e-12);
    EXPECT_TRUE(r.holds);
}

TEST(GapBound, RankOneMismatchAndScaling) {
    auto d = six_dim(2);
    auto rng = seeded_engine(3);
    const Vector u = gaussian_vector(6, rng), v = gaussian_vector(8, rng);
    const Matrix dir = u * v.transpose();
    double bounds[2];
    for (int s = 0; s < 2; ++s) {
        d.K = d.L.transpose() + (0.02 * (s + 1)) * dir / oracle::dense_norm(dir);
        const auto spec = make_quadratic_problem(d);
        const Vector xm = oracle::quadratic_solution(d);
        const auto r = gap_bound_report(xm, oracle::matched_solution(d), spec, estimate_spectra(spec.L, spec.K()));
        EXPECT_GT(r.actual_gap, 0.0);
        EXPECT_TRUE(r.holds) << r.slack;
        // The bound is linear in ‖L* − K‖ at a fixed point z.
        const auto r_same_z =
            solution_gap_bound(oracle::quadratic_solution(six_dim(2)), spec, estimate_spectra(spec.L, spec.K()));
        bounds[s] = r_same_z;
    }
    EXPECT_NEAR(bounds[1], 2.0 * bounds[0], 1e-6 * bounds[1]);
}

TEST(PerturbationBound, ConstantFamilyHasZeroLhs) {
    const auto d = six_dim(5);
    const auto spec = make_quadratic_problem(d);
    const auto r = prop43i_check(spec, spec.mismatch, 1.0, 100, 1);
    EXPECT_EQ(r.worst_slack, 0.0);
}

TEST(PerturbationBound, GeometricFamily) {
    const auto d = six_dim(6);
    const MismatchFamily fam(LinearMap::dense(d.K), ScheduleKind::geometric, 0.5, 0.8, 7);
    const auto spec = make_quadratic_problem(d, fam);
    const double t1 = theta1(spec.alpha, spec.B.zeta, oracle::dense_norm(d.L));
    const auto r = prop43i_check(spec, fam, t1, 10000, 2, 3.0, 30);
    EXPECT_GE(r.worst_slack, -1e-10 * r.scale);
    EXPECT_GT(r.scale, 0.0);
}

TEST(EndToEnd, MatchedRunIsStrictlyFejerAndLinear) {
    QuadraticOptions o;
    o.box = 1.0;
    const auto d = random_quadratic(o, 21);
    const auto spec = make_quadratic_problem(d);
    const auto ledger = build_ledger(spec, estimate_spectra(spec.L, spec.K()));
    for (auto algo : {Algorithm::mmfbhf, Algorithm::mmfdrf}) {
        auto cfg = default_config(algo, ledger);
        cfg.max_iter = 150;
        cfg.rel_residual_tol = 0.0;
        cfg.reference = oracle::matched_solution(d);
        const auto t = run(spec, cfg, ledger, Vector::Zero(spec.dim()));
        std::vector<double> dist, w;
        for (const auto& r : t.records) {
            dist.push_back(*r.z_dist_to_ref);
            w.push_back(0.0);
        }
        EXPECT_FALSE(fejer_monitor(dist, w).violation) << to_string(algo);
        const double theta = algo == Algorithm::mmfbhf ? ledger.theta_fbhf : ledger.theta_fdrf;
        EXPECT_TRUE(rate_estimate(dist, theta, 0.0).satisfied) << to_string(algo);
    }
}

TEST(Json, Reports) {
    const auto j = to_json(FejerReport{.fitted_constant = 0, .violation = true});
    EXPECT_TRUE(j.at("violation").get<bool>());
    const auto q = to_json(QualityMetrics{.snr_db = 3, .nmse = 0.5, .mae = 1});
    EXPECT_FALSE(q.contains("roi_snr_db"));
}
