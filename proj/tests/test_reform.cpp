#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ccd/proxy.hpp"
#include "ccd/reform.hpp"
#include "ccd/rng.hpp"
#include "ccd/vpp.hpp"

using namespace ccd;

namespace {

struct Fixture {
    vpp::VppInstance inst;
    vpp::CompactProblem cp;
    vpp::InputVector x;

    explicit Fixture(std::size_t n = 4, uint64_t seed = 17) {
        vpp::GenConfig cfg;
        cfg.n_prosumers = n;
        inst = vpp::generate_instance(cfg, seed);
        cp = vpp::assemble_compact(inst, true);
        x = vpp::sample_input(inst, vpp::ProfileConfig{}, seed + 1);
    }

    vpp::ScenarioSet scen(std::size_t k, uint64_t seed = 5) const {
        return vpp::sample_scenarios(inst, x, k, seed);
    }
};

vpp::ScenarioSet zero_scenarios(std::size_t n) {
    vpp::ScenarioSet s;
    s.eps = Matrix(1, n);
    return s;
}

double eq_residual(const vpp::CompactProblem& cp, const vpp::InputVector& x, const Vec& u) {
    return std::fabs(cp.eq_residual(u, x));
}

}  // namespace

TEST_CASE("moments match hand statistics") {
    vpp::ScenarioSet s;
    s.eps = Matrix(3, 2);
    s.eps(0, 0) = 1.0;
    s.eps(1, 0) = 2.0;
    s.eps(2, 0) = 3.0;
    s.eps(0, 1) = -1.0;
    s.eps(1, 1) = 1.0;
    s.eps(2, 1) = 0.0;
    const auto mom = reform::moments(s);
    CHECK(mom.eps_avg[0] == doctest::Approx(2.0));
    CHECK(mom.eps_avg[1] == doctest::Approx(0.0));
    CHECK(mom.eps_std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(mom.eps_std[1] == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("scenario QP: dimensions and zero-uncertainty collapse") {
    Fixture f(2);
    const auto scen3 = f.scen(3);
    const qp::Problem pr = reform::build_scenario_qp(f.cp, f.x, scen3);
    CHECK(pr.g.rows == 36);  // 6N * n_scen
    CHECK(pr.n == 4);

    // single zero scenario: identical feasible set to the deterministic problem
    const qp::Problem det = reform::build_scenario_qp(f.cp, f.x, zero_scenarios(2));
    const auto sol_det = qp::solve(det);
    REQUIRE(sol_det.status == qp::Status::optimal);
    reform::MethodParams params;
    const auto res = reform::solve_method(reform::Method::sa, f.cp, f.x,
                                          zero_scenarios(2), params);
    REQUIRE(res.status == qp::Status::optimal);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(res.u[j] == doctest::Approx(sol_det.u[j]).epsilon(1e-8));
}

TEST_CASE("scenario solutions violate no in-sample scenario") {
    Fixture f(4);
    const auto scen = f.scen(40);
    reform::MethodParams params;
    const auto res = reform::solve_method(reform::Method::sa, f.cp, f.x, scen, params);
    REQUIRE(res.status == qp::Status::optimal);
    for (std::size_t k = 0; k < scen.n_scen(); ++k) {
        const Vec eps(scen.eps.row(k), scen.eps.row(k) + f.cp.n);
        CHECK_FALSE(vpp::check_joint_violation(f.cp, res.u, f.x, eps, 1e-6));
    }
    CHECK(eq_residual(f.cp, f.x, res.u) <= 1e-6);
}

TEST_CASE("cvar QP: dimensions, beta0 sign, relaxation of SA") {
    Fixture f(2);
    const auto scen = f.scen(3);
    const qp::Problem pr = reform::build_cvar_qp(f.cp, f.x, scen, 0.05);
    CHECK(pr.n == 4 + 3 + 1);  // u + one beta per scenario + beta0
    CHECK(pr.g.rows == 36 + 1 + 3);

    Fixture g(4, 23);
    const auto scen2 = g.scen(60);
    reform::MethodParams params;
    params.epsilon = 0.05;
    const auto sa = reform::solve_method(reform::Method::sa, g.cp, g.x, scen2, params);
    const auto cv = reform::solve_method(reform::Method::cvar, g.cp, g.x, scen2, params);
    REQUIRE(sa.status == qp::Status::optimal);
    REQUIRE(cv.status == qp::Status::optimal);
    CHECK(cv.objective <= sa.objective + 1e-8);
    CHECK(eq_residual(g.cp, g.x, cv.u) <= 1e-6);

    // beta0 <= 0 at the optimum, and the average constraint holds tightly
    const qp::Problem full = reform::build_cvar_qp(g.cp, g.x, scen2, 0.05);
    const auto sol = qp::solve(full);
    REQUIRE(sol.status == qp::Status::optimal);
    const std::size_t nv = g.cp.n_vars();
    const std::size_t ns = scen2.n_scen();
    const double beta0 = sol.u[nv + ns];
    CHECK(beta0 <= 1e-9);
    double avg = 0.0;
    for (std::size_t k = 0; k < ns; ++k) avg += sol.u[nv + k];
    avg = avg / static_cast<double>(ns) - (1.0 - 0.05) * beta0;
    CHECK(avg <= 1e-8);
}

TEST_CASE("robust QP: margin hand value and the two norm readings") {
    // one row with C = (1,1), eps_std = (0.1, 0.1), s(1-eps) = 1
    Fixture f(2);
    reform::MomentSummary mom;
    mom.eps_avg = {0.0, 0.0};
    mom.eps_std = {0.1, 0.1};
    const double s = 1.0 / (1.0 - 0.05);  // so s*(1-eps) = 1
    const qp::Problem pr =
        reform::build_robust_qp(f.cp, f.x, mom, s, 0.05, reform::RobustNorm::elementwise);
    const qp::Problem pr0 = reform::build_robust_qp(f.cp, f.x, {Vec{0.0, 0.0}, Vec{0.0, 0.0}},
                                                    s, 0.05);
    // row 0 is the first G-upper row: C row = -alpha_g[0] * (1,1)
    const double a0 = f.inst.prosumers[0].alpha_g;
    const double margin_want = std::sqrt(2.0 * 0.01) * a0;
    CHECK(pr0.h[0] - pr.h[0] == doctest::Approx(margin_want).epsilon(1e-12));

    // scalar reading collapses to |C_r . eps_std|
    const qp::Problem prs =
        reform::build_robust_qp(f.cp, f.x, mom, s, 0.05, reform::RobustNorm::scalar);
    CHECK(pr0.h[0] - prs.h[0] == doctest::Approx(0.2 * a0).epsilon(1e-12));
}

TEST_CASE("robust at eps_std=0 equals polyhedron at p=0 built from the mean scenario") {
    Fixture f(3);
    const auto scen = f.scen(25);
    const auto mom = reform::moments(scen);
    reform::MomentSummary degenerate{mom.eps_avg, Vec(3, 0.0)};
    const qp::Problem ro = reform::build_robust_qp(f.cp, f.x, degenerate, 2.0, 0.05);

    vpp::ScenarioSet mean_only;
    mean_only.eps = Matrix(1, 3);
    for (std::size_t i = 0; i < 3; ++i) mean_only.eps(0, i) = mom.eps_avg[i];
    const auto feats = proxy::set_aggregate(f.cp.c_ineq, mean_only);
    const qp::Problem pr =
        reform::build_polyhedron_qp(f.cp, f.x, feats.phi_avg, feats.phi_max, 0.0);
    REQUIRE(ro.h.size() == pr.h.size());
    for (std::size_t r = 0; r < ro.h.size(); ++r)
        CHECK(ro.h[r] == doctest::Approx(pr.h[r]).epsilon(1e-12));
}

TEST_CASE("robust objective nondecreasing in s") {
    Fixture f(4, 29);
    const auto scen = f.scen(50);
    reform::MethodParams params;
    double prev = -1e300;
    for (double s : {0.25, 0.5, 1.0, 2.0}) {
        params.s = s;
        const auto res = reform::solve_method(reform::Method::ro, f.cp, f.x, scen, params);
        REQUIRE(res.status == qp::Status::optimal);
        CHECK(res.objective >= prev - 1e-6);
        CHECK(eq_residual(f.cp, f.x, res.u) <= 1e-6);
        prev = res.objective;
    }
}

TEST_CASE("polyhedron QP: p=0 single scenario equals scenario QP") {
    Fixture f(3);
    const auto one = f.scen(1);
    const auto feats = proxy::set_aggregate(f.cp.c_ineq, one);
    const qp::Problem pr = reform::build_polyhedron_qp(f.cp, f.x, feats.phi_avg,
                                                       feats.phi_max, 0.0);
    const qp::Problem sa = reform::build_scenario_qp(f.cp, f.x, one);
    REQUIRE(pr.h.size() == sa.h.size());
    for (std::size_t r = 0; r < pr.h.size(); ++r)
        CHECK(pr.h[r] == doctest::Approx(sa.h[r]).epsilon(1e-12));
}

TEST_CASE("polyhedron at p=1: feasible for every aggregated scenario") {
    Fixture f(4, 31);
    const auto scen = f.scen(80);
    reform::MethodParams params;
    params.p = 1.0;
    const auto res = reform::solve_method(reform::Method::pr, f.cp, f.x, scen, params);
    REQUIRE(res.status == qp::Status::optimal);
    for (std::size_t k = 0; k < scen.n_scen(); ++k) {
        const Vec eps(scen.eps.row(k), scen.eps.row(k) + f.cp.n);
        CHECK_FALSE(vpp::check_joint_violation(f.cp, res.u, f.x, eps, 1e-6));
    }
}

TEST_CASE("polyhedron sweep: objective monotone, rows tighten with p") {
    Fixture f(4, 37);
    const auto scen = f.scen(60);
    const auto feats = proxy::set_aggregate(f.cp.c_ineq, scen);
    // row-wise coefficient ordering: offsets nondecreasing in p wherever
    // phi_max >= phi_avg (guaranteed per row)
    for (std::size_t r = 0; r < f.cp.n_rows(); ++r)
        CHECK(feats.phi_max[r] >= feats.phi_avg[r] - 1e-12);

    reform::MethodParams params;
    double prev = -1e300;
    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        params.p = p;
        const auto res = reform::solve_method(reform::Method::pr, f.cp, f.x, scen, params);
        REQUIRE(res.status == qp::Status::optimal);
        CHECK(res.objective >= prev - 1e-6);
        prev = res.objective;
    }
}

TEST_CASE("solve_method determinism and timing fields") {
    Fixture f(3, 41);
    const auto scen = f.scen(20);
    reform::MethodParams params;
    params.p = 0.5;
    const auto a = reform::solve_method(reform::Method::pr, f.cp, f.x, scen, params);
    const auto b = reform::solve_method(reform::Method::pr, f.cp, f.x, scen, params);
    REQUIRE(a.status == qp::Status::optimal);
    for (std::size_t j = 0; j < a.u.size(); ++j)
        CHECK(a.u[j] == doctest::Approx(b.u[j]).epsilon(1e-9));
    CHECK(a.build_time_s >= 0.0);
    CHECK(a.solve_time_s > 0.0);
    CHECK(a.parameter == 0.5);
}
