#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

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
    proxy::EqualityPartition part;

    explicit Fixture(std::size_t n = 4, uint64_t seed = 51) {
        vpp::GenConfig cfg;
        cfg.n_prosumers = n;
        inst = vpp::generate_instance(cfg, seed);
        cp = vpp::assemble_compact(inst, true);
        x = vpp::sample_input(inst, vpp::ProfileConfig{}, seed + 2);
        part = proxy::equality_partition(cp);
    }

    vpp::ScenarioSet scen(std::size_t k, uint64_t seed = 7) const {
        return vpp::sample_scenarios(inst, x, k, seed);
    }
};

vpp::ScenarioSet permuted(const vpp::ScenarioSet& scen, Rng& rng) {
    std::vector<std::size_t> order(scen.n_scen());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    vpp::ScenarioSet out;
    out.seed = scen.seed;
    out.eps = Matrix(scen.eps.rows(), scen.eps.cols());
    for (std::size_t k = 0; k < order.size(); ++k)
        for (std::size_t i = 0; i < scen.eps.cols(); ++i)
            out.eps(k, i) = scen.eps(order[k], i);
    return out;
}

// 1D polytope |u| <= 1 with interior 0
proxy::ReducedPolyhedron interval_set() {
    proxy::ReducedPolyhedron rp;
    rp.a = Matrix(2, 1);
    rp.a(0, 0) = 1.0;
    rp.a(1, 0) = -1.0;
    rp.b = {1.0, 1.0};
    rp.interior = {0.0};
    rp.margins = {1.0, 1.0};
    return rp;
}

proxy::ReducedPolyhedron random_polytope(Rng& rng, std::size_t n, std::size_t m) {
    Matrix g(m, n);
    Vec h(m);
    Vec x0(n);
    for (double& v : x0) v = rng.normal();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g(i, j) = rng.normal();
        double gx = 0.0;
        for (std::size_t j = 0; j < n; ++j) gx += g(i, j) * x0[j];
        h[i] = gx + rng.uniform(0.3, 2.0);
    }
    proxy::ReducedPolyhedron rp;
    rp.a = g;
    rp.b = h;
    rp.interior = x0;
    rp.margins.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        double gx = 0.0;
        for (std::size_t j = 0; j < n; ++j) gx += g(i, j) * x0[j];
        rp.margins[i] = h[i] - gx;
    }
    return rp;
}

}  // namespace

TEST_CASE("set_aggregate: singleton, hand case, permutation invariance") {
    // one scenario: avg == max == C * eps
    Fixture f(3);
    const auto one = f.scen(1);
    const auto feats1 = proxy::set_aggregate(f.cp.c_ineq, one);
    const Vec ce = f.cp.c_ineq.multiply(Vec(one.eps.row(0), one.eps.row(0) + 3));
    for (std::size_t r = 0; r < ce.size(); ++r) {
        CHECK(feats1.phi_avg[r] == doctest::Approx(ce[r]));
        CHECK(feats1.phi_max[r] == doctest::Approx(ce[r]));
    }

    // C = I2, eps1 = (1,0), eps2 = (0,1)
    Matrix c = Matrix::identity(2);
    vpp::ScenarioSet s;
    s.eps = Matrix(2, 2);
    s.eps(0, 0) = 1.0;
    s.eps(1, 1) = 1.0;
    const auto feats = proxy::set_aggregate(c, s);
    CHECK(feats.phi_avg == Vec{0.5, 0.5});
    CHECK(feats.phi_max == Vec{1.0, 1.0});

    // permutation invariance within 1e-12 and per-row dominance
    const auto big = f.scen(64);
    const auto base = proxy::set_aggregate(f.cp.c_ineq, big);
    Rng rng(99);
    for (int rep = 0; rep < 5; ++rep) {
        const auto shuffled = permuted(big, rng);
        const auto feats2 = proxy::set_aggregate(f.cp.c_ineq, shuffled);
        for (std::size_t r = 0; r < base.phi_avg.size(); ++r) {
            CHECK(std::fabs(feats2.phi_avg[r] - base.phi_avg[r]) <= 1e-12);
            CHECK(feats2.phi_max[r] == base.phi_max[r]);
        }
    }
    for (std::size_t r = 0; r < base.phi_avg.size(); ++r)
        CHECK(base.phi_max[r] >= base.phi_avg[r] - 1e-12);

    vpp::ScenarioSet empty;
    empty.eps = Matrix(0, 2);
    CHECK_THROWS_AS(proxy::set_aggregate(c, empty), std::invalid_argument);
}

TEST_CASE("equality_partition: hand case, reconstruction, pivot rule") {
    // u1 + u2 = 10 encoded as A_eq u + B_eq x = 0 with B_eq x = -10
    vpp::CompactProblem cp;
    cp.n = 1;
    cp.a_eq = Matrix(1, 2);
    cp.a_eq(0, 0) = 1.0;
    cp.a_eq(0, 1) = 1.0;
    cp.b_eq = Matrix(1, 3);
    cp.b_eq(0, 0) = -1.0;  // x = [10, *, *]
    const auto part = proxy::equality_partition(cp);
    REQUIRE(part.dep_idx == std::vector<std::size_t>{0});
    const Vec u = part.complete({3.0}, {10.0, 0.0, 0.0});
    CHECK(u[0] == doctest::Approx(7.0));
    CHECK(u[1] == doctest::Approx(3.0));

    // VPP row: all-ones pivot -> first column chosen
    Fixture f(5);
    CHECK(f.part.dep_idx == std::vector<std::size_t>{0});
    CHECK(f.part.n_ind() == 9);

    // reconstruction satisfies the equality exactly for 100 random draws
    Rng rng(4);
    const Vec xs = f.x.stacked();
    for (int rep = 0; rep < 100; ++rep) {
        Vec u_ind(f.part.n_ind());
        for (double& v : u_ind) v = rng.uniform(-40.0, 90.0);
        const Vec full = f.part.complete(u_ind, xs);
        CHECK(std::fabs(f.cp.eq_residual(full, f.x)) < 1e-10);
        const Vec back = f.part.extract_ind(full);
        for (std::size_t j = 0; j < u_ind.size(); ++j) CHECK(back[j] == u_ind[j]);
    }

    // rank-deficient A_eq rejected
    vpp::CompactProblem bad = cp;
    bad.a_eq = Matrix(1, 2);
    CHECK_THROWS_AS(proxy::equality_partition(bad), std::invalid_argument);
}

TEST_CASE("reduce_polyhedron: membership equivalence against direct substitution") {
    Fixture f(4, 61);
    const auto scen = f.scen(32);
    const auto feats = proxy::set_aggregate(f.cp.c_ineq, scen);
    for (double p : {0.0, 0.5, 1.0}) {
        const auto rp = proxy::reduce_polyhedron(f.cp, f.x, feats, p, f.part);
        for (double m : rp.margins) CHECK(m > 0.0);

        Rng rng(71);
        const Vec xs = f.x.stacked();
        for (int rep = 0; rep < 1000; ++rep) {
            Vec u_ind(f.part.n_ind());
            for (std::size_t j = 0; j < u_ind.size(); ++j)
                u_ind[j] = rp.interior[j] + rng.normal(0.0, 12.0);
            // reduced membership
            bool in_reduced = true;
            for (std::size_t r = 0; r < rp.a.rows(); ++r) {
                double av = 0.0;
                for (std::size_t j = 0; j < u_ind.size(); ++j) av += rp.a(r, j) * u_ind[j];
                if (av > rp.b[r] + 1e-9) {
                    in_reduced = false;
                    break;
                }
            }
            // direct: complete u and evaluate the aggregated rows
            const Vec full = f.part.complete(u_ind, xs);
            const Vec rows = f.cp.ineq_residuals(full, f.x, Vec{});
            bool in_direct = std::fabs(f.cp.eq_residual(full, f.x)) < 1e-8;
            for (std::size_t r = 0; r < rows.size() && in_direct; ++r) {
                const double v = rows[r] + p * feats.phi_max[r] + (1.0 - p) * feats.phi_avg[r];
                if (v > 1e-9) in_direct = false;
            }
            CHECK(in_reduced == in_direct);
        }
    }
}

TEST_CASE("reduce_polyhedron: zero scenario at p=0 matches deterministic set") {
    Fixture f(3, 63);
    vpp::ScenarioSet zero;
    zero.eps = Matrix(1, 3);
    const auto feats = proxy::set_aggregate(f.cp.c_ineq, zero);
    const auto rp = proxy::reduce_polyhedron(f.cp, f.x, feats, 0.0, f.part);
    // offsets must equal the plain deterministic rows: phi contributions vanish
    for (std::size_t r = 0; r < feats.phi_avg.size(); ++r) {
        CHECK(feats.phi_avg[r] == 0.0);
        CHECK(feats.phi_max[r] == 0.0);
    }
    for (double m : rp.margins) CHECK(m > 0.0);
}

TEST_CASE("minkowski gauge: zero vector, 1D hand value, homogeneity") {
    const auto rp = interval_set();
    CHECK(proxy::minkowski_gauge({0.0}, rp).psi == 0.0);
    CHECK(proxy::minkowski_gauge({0.0}, rp).active_row == -1);
    const auto g = proxy::minkowski_gauge({4.0}, rp);
    CHECK(g.psi == doctest::Approx(4.0));
    CHECK(g.active_row == 0);

    Rng rng(13);
    const auto poly = random_polytope(rng, 4, 12);
    for (int rep = 0; rep < 50; ++rep) {
        Vec u(4);
        for (double& v : u) v = rng.normal(0.0, 3.0);
        const double psi = proxy::minkowski_gauge(u, poly).psi;
        if (psi <= 0.0) continue;
        Vec u2 = u;
        for (double& v : u2) v *= 2.0;
        CHECK(proxy::minkowski_gauge(u2, poly).psi == doctest::Approx(2.0 * psi).epsilon(1e-12));
    }
}

TEST_CASE("gauge map: interior identity, boundary scaling, containment") {
    const auto rp = interval_set();
    CHECK(proxy::gauge_map({0.5}, rp)[0] == 0.5);  // psi <= 1: exact identity
    CHECK(proxy::gauge_map({4.0}, rp)[0] == doctest::Approx(1.0));
    CHECK(proxy::gauge_map({0.0}, rp)[0] == 0.0);  // maps to the interior point

    Rng rng(29);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 2 + rng.next() % 5;
        const auto poly = random_polytope(rng, n, n + 5 + rng.next() % 10);
        Vec u(n);
        for (double& v : u) v = rng.normal(0.0, rng.uniform(0.1, 30.0));
        const Vec mapped = proxy::gauge_map(u, poly);
        for (std::size_t r = 0; r < poly.a.rows(); ++r) {
            double av = 0.0;
            for (std::size_t j = 0; j < n; ++j) av += poly.a(r, j) * mapped[j];
            CHECK(av <= poly.b[r] + 1e-9);
        }
    }
}

TEST_CASE("gauge map jacobian: interior identity, pinned 1D, finite differences") {
    const auto rp = interval_set();
    CHECK(proxy::gauge_map_jacobian_vec({0.5}, rp, {2.5})[0] == 2.5);
    CHECK(proxy::gauge_map_jacobian_vec({4.0}, rp, {1.0})[0] ==
          doctest::Approx(0.0).scale(1.0));

    Rng rng(43);
    const double step = 1e-6;
    std::size_t checked = 0, matched = 0;
    while (checked < 20) {
        const auto poly = random_polytope(rng, 5, 14);
        Vec u(5);
        for (double& v : u) v = rng.normal(0.0, 4.0);
        const auto g = proxy::minkowski_gauge(u, poly);
        if (std::fabs(g.psi - 1.0) <= 1e-3) continue;  // kink neighborhood excluded
        ++checked;

        Vec dir(5);
        for (double& v : dir) v = rng.normal();
        Vec up(5);
        for (double& v : up) v = rng.normal();

        Vec fwd = u, back = u;
        for (std::size_t j = 0; j < 5; ++j) {
            fwd[j] += step * dir[j];
            back[j] -= step * dir[j];
        }
        const Vec mf = proxy::gauge_map(fwd, poly);
        const Vec mb = proxy::gauge_map(back, poly);
        double fd = 0.0;
        for (std::size_t j = 0; j < 5; ++j) fd += up[j] * (mf[j] - mb[j]) / (2.0 * step);
        const Vec vjp = proxy::gauge_map_jacobian_vec(u, poly, up);
        double analytic = 0.0;
        for (std::size_t j = 0; j < 5; ++j) analytic += vjp[j] * dir[j];
        if (std::fabs(analytic - fd) <= 1e-4 * std::max({1.0, std::fabs(analytic)}))
            ++matched;
    }
    CHECK(matched >= 19);  // ties can cost at most the odd sample
}

TEST_CASE("proxy_forward: zero weights, hard feasibility, permutation, sizes") {
    Fixture f(4, 67);
    const auto scen = f.scen(48);
    const std::size_t d = (2 * 4 + 1) + 12 * 4;
    const std::size_t o = f.part.n_ind();

    // all-zero weights: u_hat = 0, output is the completion of the interior point
    proxy::MlpWeights zero = proxy::init_weights(d, 16, o, 1);
    for (double& v : zero.w1.storage()) v = 0.0;
    for (double& v : zero.b1) v = 0.0;
    for (double& v : zero.w2.storage()) v = 0.0;
    for (double& v : zero.b2) v = 0.0;
    const auto [u0, tr0] = proxy::proxy_forward(zero, f.cp, f.x, scen, 0.5, f.part);
    const Vec completion = f.part.complete(tr0.rp.interior, f.x.stacked());
    for (std::size_t j = 0; j < u0.size(); ++j)
        CHECK(u0[j] == doctest::Approx(completion[j]).epsilon(1e-12));

    // feasibility for arbitrary weights: equality and aggregated rows at p
    Rng rng(5);
    const auto feats = proxy::set_aggregate(f.cp.c_ineq, scen);
    for (int rep = 0; rep < 50; ++rep) {
        proxy::MlpWeights w =
            proxy::init_weights(d, 8 + rng.next() % 32, o, 1000 + rep);
        // amplify to push many predictions outside the set
        for (double& v : w.b2) v = rng.normal(0.0, 50.0);
        const double p = rng.uniform01();
        const auto [u, tr] = proxy::proxy_forward(w, f.cp, f.x, scen, p, f.part);
        CHECK(std::fabs(f.cp.eq_residual(u, f.x)) <= 1e-8);
        const Vec rows = f.cp.ineq_residuals(u, f.x, Vec{});
        for (std::size_t r = 0; r < rows.size(); ++r)
            CHECK(rows[r] + p * feats.phi_max[r] + (1.0 - p) * feats.phi_avg[r] <= 1e-8);
    }

    // permutation invariance of the full output
    proxy::MlpWeights w = proxy::init_weights(d, 32, o, 9);
    const auto [u_base, tr_base] = proxy::proxy_forward(w, f.cp, f.x, scen, 0.4, f.part);
    Rng shuffle_rng(77);
    for (int rep = 0; rep < 3; ++rep) {
        const auto sh = permuted(scen, shuffle_rng);
        const auto [u_sh, tr_sh] = proxy::proxy_forward(w, f.cp, f.x, sh, 0.4, f.part);
        for (std::size_t j = 0; j < u_base.size(); ++j)
            CHECK(std::fabs(u_sh[j] - u_base[j]) <= 1e-9);
    }

    // n_scen in {1, 17, 200} without reshaping anything
    for (std::size_t k : {1ul, 17ul, 200ul}) {
        const auto s = f.scen(k, 31);
        const auto [u, tr] = proxy::proxy_forward(w, f.cp, f.x, s, 0.4, f.part);
        CHECK(u.size() == 8);
        CHECK(std::fabs(f.cp.eq_residual(u, f.x)) <= 1e-8);
    }
}

TEST_CASE("proxy_backward: interior regression gradient, zero at optimum, finite diff") {
    Fixture f(3, 71);
    const auto scen = f.scen(24);
    const std::size_t d = (2 * 3 + 1) + 12 * 3;
    const std::size_t o = f.part.n_ind();

    // interior path: gradient equals the plain MLP regression gradient
    {
        proxy::MlpWeights w = proxy::init_weights(d, 12, o, 3);
        // shrink the output layer so psi < 1
        for (double& v : w.w2.storage()) v *= 1e-4;
        for (double& v : w.b2) v *= 1e-4;
        const auto [u, tr] = proxy::proxy_forward(w, f.cp, f.x, scen, 0.3, f.part);
        REQUIRE(tr.gauge.psi < 1.0);
        Vec target = u;
        target[1] += 1.0;  // independent coordinate: u[1] is P_G^2 (index 1 ind)
        const proxy::Gradients g = proxy::proxy_backward(w, f.part, tr, target);

        // by hand: dL/du_hat = J_completion' * 2(u - t); interior gauge = identity
        Vec g_full(u.size());
        for (std::size_t j = 0; j < u.size(); ++j) g_full[j] = 2.0 * (u[j] - target[j]);
        Vec g_ind(o, 0.0);
        for (std::size_t k = 0; k < f.part.dep_idx.size(); ++k)
            for (std::size_t c = 0; c < o; ++c)
                g_ind[c] += f.part.map_u(k, c) * g_full[f.part.dep_idx[k]];
        for (std::size_t c = 0; c < o; ++c) g_ind[c] += g_full[f.part.ind_idx[c]];
        for (std::size_t i = 0; i < o; ++i)
            CHECK(g.b2[i] == doctest::Approx(g_ind[i]).epsilon(1e-12));
    }

    // zero upstream: target equals output
    {
        proxy::MlpWeights w = proxy::init_weights(d, 12, o, 5);
        const auto [u, tr] = proxy::proxy_forward(w, f.cp, f.x, scen, 0.3, f.part);
        const proxy::Gradients g = proxy::proxy_backward(w, f.part, tr, u);
        for (double v : g.b2) CHECK(v == 0.0);
        for (double v : g.w1.storage()) CHECK(v == 0.0);
    }

    // full-pipeline directional finite differences
    Rng rng(111);
    const double step = 1e-6;
    std::size_t matched = 0, total = 0;
    for (int rep = 0; rep < 10; ++rep) {
        Fixture fx(3, 200 + rep);
        const auto sc = fx.scen(16, 300 + rep);
        const std::size_t oo = fx.part.n_ind();
        proxy::MlpWeights w = proxy::init_weights(d, 10, oo, 40 + rep);
        for (double& v : w.b2) v += rng.normal(0.0, 8.0);  // mix of branches

        Vec target(2 * 3);
        {
            const auto [u, tr] = proxy::proxy_forward(w, fx.cp, fx.x, sc, 0.5, fx.part);
            if (std::fabs(tr.gauge.psi - 1.0) <= 1e-3) continue;
            for (std::size_t j = 0; j < target.size(); ++j)
                target[j] = u[j] + rng.normal(0.0, 5.0);
        }

        const auto [u, tr] = proxy::proxy_forward(w, fx.cp, fx.x, sc, 0.5, fx.part);
        const proxy::Gradients g = proxy::proxy_backward(w, fx.part, tr, target);

        // random direction over all weights
        proxy::MlpWeights dw = proxy::init_weights(d, 10, oo, 999 + rep);
        const auto loss_at = [&](double t) {
            proxy::MlpWeights wt = w;
            const auto add = [&](Vec& dst, const Vec& dir) {
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += t * dir[i];
            };
            add(wt.w1.storage(), dw.w1.storage());
            add(wt.b1, dw.b1);
            add(wt.w2.storage(), dw.w2.storage());
            add(wt.b2, dw.b2);
            const auto [ut, trt] = proxy::proxy_forward(wt, fx.cp, fx.x, sc, 0.5, fx.part);
            double l = 0.0;
            for (std::size_t j = 0; j < ut.size(); ++j) {
                const double dlt = ut[j] - target[j];
                l += dlt * dlt;
            }
            return l;
        };
        const double fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
        double analytic = 0.0;
        const auto dotv = [](const Vec& a, const Vec& b) {
            double s = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
            return s;
        };
        analytic += dotv(g.w1.storage(), dw.w1.storage());
        analytic += dotv(g.b1, dw.b1);
        analytic += dotv(g.w2.storage(), dw.w2.storage());
        analytic += dotv(g.b2, dw.b2);
        ++total;
        if (std::fabs(analytic - fd) <= 1e-4 * std::max(1.0, std::fabs(analytic))) ++matched;
    }
    REQUIRE(total >= 5);
    CHECK(matched == total);
}

TEST_CASE("gauge idempotence on the set") {
    Rng rng(303);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + rng.next() % 4;
        const auto poly = random_polytope(rng, n, n + 6);
        Vec u(n);
        for (double& v : u) v = rng.normal(0.0, 0.3);
        const auto g = proxy::minkowski_gauge(u, poly);
        if (g.psi > 1.0) continue;
        const Vec mapped = proxy::gauge_map(u, poly);
        for (std::size_t j = 0; j < n; ++j) CHECK(mapped[j] == u[j] + poly.interior[j]);
    }
}

TEST_CASE("train: loss halves, deterministic, exact on representable point") {
    Fixture f(3, 81);
    // small dataset of 24 points with polyhedron targets at p = 0.5
    std::vector<proxy::TrainPoint> pts;
    reform::MethodParams params;
    params.p = 0.5;
    for (int i = 0; i < 24; ++i) {
        vpp::InputVector x = vpp::sample_input(f.inst, vpp::ProfileConfig{}, 500 + i);
        vpp::ScenarioSet scen = vpp::sample_scenarios(f.inst, x, 20, 600 + i);
        const auto res = reform::solve_method(reform::Method::pr, f.cp, x, scen, params);
        REQUIRE(res.status == qp::Status::optimal);
        pts.push_back({std::move(x), std::move(scen), res.u});
    }
    proxy::TrainConfig cfg;
    cfg.p = 0.5;
    cfg.epochs = 60;
    cfg.batch_size = 8;
    cfg.hidden = 32;
    cfg.seed = 7;
    const proxy::TrainResult run = proxy::train(f.cp, f.part, pts, cfg);
    REQUIRE(!run.log.empty());
    CHECK(run.log.back().train_loss <= 0.5 * run.log.front().train_loss);

    const proxy::TrainResult rerun = proxy::train(f.cp, f.part, pts, cfg);
    CHECK(rerun.weights.w1.storage() == run.weights.w1.storage());
    CHECK(rerun.weights.b2 == run.weights.b2);

    // one-point dataset whose target is representable exactly: loss ~ 0
    {
        const auto feats = proxy::set_aggregate(f.cp.c_ineq, pts[0].scen);
        const auto rp = proxy::reduce_polyhedron(f.cp, pts[0].x, feats, 0.5, f.part);
        const Vec target = f.part.complete(rp.interior, pts[0].x.stacked());
        proxy::MlpWeights w = proxy::init_weights((2 * 3 + 1) + 12 * 3, 8, f.part.n_ind(), 3);
        for (double& v : w.w2.storage()) v = 0.0;
        for (double& v : w.b2) v = 0.0;  // u_hat = 0 -> completion of interior
        const auto [u, tr] = proxy::proxy_forward(w, f.cp, pts[0].x, pts[0].scen, 0.5, f.part);
        double loss = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j) {
            const double dlt = u[j] - target[j];
            loss += dlt * dlt;
        }
        CHECK(loss <= 1e-18);
    }
}

TEST_CASE("pick_safety_index: paper-style rule") {
    // violations {7%, 4.8%, 0.5%} at eps = 5% -> 0.68
    const std::vector<double> grid{0.5, 0.68, 1.0};
    const std::vector<double> viol{0.07, 0.048, 0.005};
    const std::vector<double> obj{100.0, 105.0, 110.0};
    CHECK(proxy::pick_safety_index(grid, viol, obj, 0.05) == 1);
    // eps = 1: vacuous, smallest grid element wins
    CHECK(proxy::pick_safety_index(grid, viol, obj, 1.0) == 0);
    // nothing qualifies
    CHECK(proxy::pick_safety_index(grid, {0.9, 0.9, 0.9}, obj, 0.05) == 3);
    // duplicate grid entries: objective breaks the tie
    CHECK(proxy::pick_safety_index({0.5, 0.5}, {0.01, 0.01}, {5.0, 4.0}, 0.05) == 1);
}
