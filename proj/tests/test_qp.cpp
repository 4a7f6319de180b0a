#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ccd/qp.hpp"
#include "ccd/rng.hpp"
#include "support/oracles.hpp"

using namespace ccd;

namespace {

qp::Problem from_dense(std::size_t n, const Matrix& p, const Vec& q, const Matrix& g,
                       const Vec& h, const Matrix& e = {}, const Vec& d = {}) {
    qp::Problem pr;
    pr.n = n;
    pr.p = p;
    pr.q = q;
    pr.g = CsrMatrix::from_dense(g);
    pr.h = h;
    if (e.rows() > 0) {
        pr.e = CsrMatrix::from_dense(e);
        pr.d = d;
    } else {
        pr.e.rows = 0;
        pr.e.cols = n;
        pr.e.rowptr = {0};
    }
    return pr;
}

qp::Problem from_oracle(const oracle::QpData& o) {
    Matrix p(o.n, o.n), g(o.g.rows, o.n), e(o.e.rows, o.n);
    for (std::size_t i = 0; i < o.n; ++i)
        for (std::size_t j = 0; j < o.n; ++j) p(i, j) = o.p.at(i, j);
    for (std::size_t i = 0; i < o.g.rows; ++i)
        for (std::size_t j = 0; j < o.n; ++j) g(i, j) = o.g.at(i, j);
    for (std::size_t i = 0; i < o.e.rows; ++i)
        for (std::size_t j = 0; j < o.n; ++j) e(i, j) = o.e.at(i, j);
    return from_dense(o.n, p, o.q, g, o.h, e, o.d);
}

}  // namespace

TEST_CASE("small hand-checkable QPs") {
    // min u^2 s.t. u >= 1
    {
        Matrix p(1, 1);
        p(0, 0) = 2.0;
        Matrix g(1, 1);
        g(0, 0) = -1.0;
        const auto sol = qp::solve(from_dense(1, p, {0.0}, g, {-1.0}));
        REQUIRE(sol.status == qp::Status::optimal);
        CHECK(sol.u[0] == doctest::Approx(1.0).epsilon(1e-7));
    }
    // min u1^2+u2^2 s.t. u1+u2 = 2
    {
        Matrix p(2, 2);
        p(0, 0) = p(1, 1) = 2.0;
        Matrix e(1, 2);
        e(0, 0) = e(0, 1) = 1.0;
        const auto sol = qp::solve(from_dense(2, p, {0.0, 0.0}, Matrix(0, 2), {}, e, {2.0}));
        REQUIRE(sol.status == qp::Status::optimal);
        CHECK(sol.u[0] == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(sol.u[1] == doctest::Approx(1.0).epsilon(1e-7));
    }
    // min (u1-2)^2 + (u2+1)^2 s.t. 0 <= u <= 1 -> box projection (1, 0)
    {
        Matrix p(2, 2);
        p(0, 0) = p(1, 1) = 2.0;
        Matrix g(4, 2);
        g(0, 0) = 1.0;
        g(1, 1) = 1.0;
        g(2, 0) = -1.0;
        g(3, 1) = -1.0;
        const auto sol = qp::solve(from_dense(2, p, {-4.0, 2.0}, g, {1.0, 1.0, 0.0, 0.0}));
        REQUIRE(sol.status == qp::Status::optimal);
        CHECK(sol.u[0] == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(sol.u[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-7));
    }
}

TEST_CASE("infeasible and unbounded problems report certificates") {
    // x <= 0 and x >= 1
    Matrix p(1, 1);
    p(0, 0) = 2.0;
    Matrix g(2, 1);
    g(0, 0) = 1.0;
    g(1, 0) = -1.0;
    const auto sol = qp::solve(from_dense(1, p, {0.0}, g, {0.0, -1.0}));
    CHECK(sol.status == qp::Status::primal_infeasible);

    // min -x s.t. x >= 0: unbounded above
    Matrix p0(1, 1);
    Matrix g2(1, 1);
    g2(0, 0) = -1.0;
    const auto unb = qp::solve(from_dense(1, p0, {-1.0}, g2, {0.0}));
    CHECK(unb.status == qp::Status::dual_infeasible);
}

TEST_CASE("max_iter returns best iterate with that status") {
    Matrix p(2, 2);
    p(0, 0) = p(1, 1) = 2.0;
    Matrix g(1, 2);
    g(0, 0) = -1.0;
    qp::Settings st;
    st.max_iter = 3;
    st.polish = false;
    const auto sol = qp::solve(from_dense(2, p, {1.0, 1.0}, g, {-1.0}), st);
    CHECK(sol.status == qp::Status::max_iter);
    CHECK(sol.iterations == 3);
    CHECK(sol.u.size() == 2);
}

TEST_CASE("200 random strictly convex QPs match the active-set oracle") {
    Rng rng(2024);
    std::size_t solved = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const oracle::QpData data = oracle::random_qp(rng);
        const Vec want = oracle::active_set_solve(data);
        const auto sol = qp::solve(from_oracle(data));
        REQUIRE(sol.status == qp::Status::optimal);
        for (std::size_t j = 0; j < data.n; ++j)
            CHECK(std::fabs(sol.u[j] - want[j]) < 1e-5);
        // objective within 1e-7 relative
        double f_want = 0.0;
        for (std::size_t i = 0; i < data.n; ++i) {
            f_want += data.q[i] * want[i];
            for (std::size_t j = 0; j < data.n; ++j)
                f_want += 0.5 * want[i] * data.p.at(i, j) * want[j];
        }
        CHECK(sol.objective ==
              doctest::Approx(f_want).epsilon(1e-7).scale(std::max(1.0, std::fabs(f_want))));
        ++solved;
    }
    CHECK(solved == 200);
}

TEST_CASE("argmin invariant to positive cost rescaling") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const oracle::QpData data = oracle::random_qp(rng, 10, 25);
        qp::Problem pr = from_oracle(data);
        const auto base = qp::solve(pr);
        REQUIRE(base.status == qp::Status::optimal);
        const double c = rng.uniform(0.02, 50.0);
        for (double& v : pr.p.storage()) v *= c;
        for (double& v : pr.q) v *= c;
        const auto scaled_sol = qp::solve(pr);
        REQUIRE(scaled_sol.status == qp::Status::optimal);
        for (std::size_t j = 0; j < pr.n; ++j)
            CHECK(std::fabs(scaled_sol.u[j] - base.u[j]) < 1e-6);
    }
}

TEST_CASE("chebyshev center: box, triangle, infeasible") {
    // unit box [-1,1]^2
    Matrix g(4, 2);
    g(0, 0) = 1.0;
    g(1, 0) = -1.0;
    g(2, 1) = 1.0;
    g(3, 1) = -1.0;
    const auto box = qp::chebyshev_center(g, {1.0, 1.0, 1.0, 1.0});
    CHECK(box.radius == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::fabs(box.center[0]) < 1e-6);
    CHECK(std::fabs(box.center[1]) < 1e-6);

    // triangle x >= 0, y >= 0, x + y <= 1: incircle radius 1/(2+sqrt(2))
    Matrix t(3, 2);
    t(0, 0) = -1.0;
    t(1, 1) = -1.0;
    t(2, 0) = 1.0;
    t(2, 1) = 1.0;
    const auto tri = qp::chebyshev_center(t, {0.0, 0.0, 1.0});
    const double r_want = 1.0 / (2.0 + std::sqrt(2.0));
    CHECK(tri.radius == doctest::Approx(r_want).epsilon(1e-5));
    CHECK(tri.center[0] == doctest::Approx(r_want).epsilon(1e-4));
    CHECK(tri.center[1] == doctest::Approx(r_want).epsilon(1e-4));

    // empty set x <= 0, x >= 1
    Matrix bad(2, 1);
    bad(0, 0) = 1.0;
    bad(1, 0) = -1.0;
    CHECK_THROWS_AS(qp::chebyshev_center(bad, {0.0, -1.0}), std::runtime_error);
}

TEST_CASE("chebyshev margins hold on random polytopes") {
    Rng rng(77);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t n = 2 + rng.next() % 5;
        const std::size_t m = n + 2 + rng.next() % 10;
        Matrix g(m, n);
        Vec h(m);
        Vec x0(n);
        for (double& v : x0) v = rng.normal();
        for (std::size_t i = 0; i < m; ++i) {
            double nrm = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                g(i, j) = rng.normal();
                nrm += g(i, j) * g(i, j);
            }
            double gx = 0.0;
            for (std::size_t j = 0; j < n; ++j) gx += g(i, j) * x0[j];
            h[i] = gx + rng.uniform(0.2, 2.0);
        }
        const auto res = qp::chebyshev_center(g, h);
        CHECK(res.radius > 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double gx = 0.0, nrm = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                gx += g(i, j) * res.center[j];
                nrm += g(i, j) * g(i, j);
            }
            CHECK(gx + res.radius * std::sqrt(nrm) <= h[i] + 1e-8);
        }
    }
}

TEST_CASE("dump/load json round-trip") {
    Rng rng(8);
    const oracle::QpData data = oracle::random_qp(rng, 6, 10);
    const qp::Problem pr = from_oracle(data);
    const qp::Problem back = qp::load_json(qp::dump_json(pr));
    CHECK(back.n == pr.n);
    const auto a = qp::solve(pr);
    const auto b = qp::solve(back);
    REQUIRE(a.status == qp::Status::optimal);
    REQUIRE(b.status == qp::Status::optimal);
    for (std::size_t j = 0; j < pr.n; ++j) CHECK(a.u[j] == doctest::Approx(b.u[j]));
}
