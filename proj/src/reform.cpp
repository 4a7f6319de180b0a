#include "ccd/reform.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ccd::reform {

namespace {

const kernels::Ops& K() { return kernels::active_ops(); }

// h-vector pieces shared by every builder: B x + b per inequality row.
Vec base_offsets(const vpp::CompactProblem& cp, const vpp::InputVector& x) {
    Vec off = cp.b_ineq_vec;
    const Vec xs = x.stacked();
    K().gemv(cp.b_ineq_mat.data(), cp.b_ineq_mat.rows(), cp.b_ineq_mat.cols(), xs.data(),
             1.0, off.data());
    return off;
}

void attach_equality(qp::Problem& pr, const vpp::CompactProblem& cp,
                     const vpp::InputVector& x, std::size_t n_vars) {
    std::vector<std::int32_t> rows, cols;
    std::vector<double> vals;
    for (std::size_t j = 0; j < cp.n_vars(); ++j) {
        if (cp.a_eq(0, j) != 0.0) {
            rows.push_back(0);
            cols.push_back(static_cast<std::int32_t>(j));
            vals.push_back(cp.a_eq(0, j));
        }
    }
    pr.e = CsrMatrix::from_triplets(1, n_vars, std::move(rows), std::move(cols),
                                    std::move(vals));
    const Vec xs = x.stacked();
    pr.d = {-K().dot(cp.b_eq.row(0), xs.data(), xs.size())};
}

void attach_objective(qp::Problem& pr, const vpp::CompactProblem& cp, std::size_t n_vars) {
    pr.n = n_vars;
    pr.p = Matrix(n_vars, n_vars);
    for (std::size_t j = 0; j < cp.n_vars(); ++j) pr.p(j, j) = cp.p_obj_diag[j];
    pr.q.assign(n_vars, 0.0);
    for (std::size_t j = 0; j < cp.n_vars(); ++j) pr.q[j] = cp.q_obj[j];
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

const char* method_name(Method m) {
    switch (m) {
        case Method::sa: return "sa";
        case Method::cvar: return "cvar";
        case Method::ro: return "ro";
        case Method::pr: return "pr";
    }
    return "unknown";
}

Method method_from_name(const std::string& name) {
    if (name == "sa") return Method::sa;
    if (name == "cvar") return Method::cvar;
    if (name == "ro") return Method::ro;
    if (name == "pr") return Method::pr;
    throw std::invalid_argument("unknown method: " + name);
}

MomentSummary moments(const vpp::ScenarioSet& scen) {
    const std::size_t k = scen.eps.rows();
    const std::size_t n = scen.eps.cols();
    if (k == 0) throw std::invalid_argument("moments: empty scenario set");
    MomentSummary mom;
    mom.eps_avg.assign(n, 0.0);
    mom.eps_std.assign(n, 0.0);
    Vec comp(n, 0.0);
    for (std::size_t r = 0; r < k; ++r)
        K().comp_add(mom.eps_avg.data(), comp.data(), scen.eps.row(r), n);
    for (std::size_t j = 0; j < n; ++j)
        mom.eps_avg[j] = (mom.eps_avg[j] + comp[j]) / static_cast<double>(k);
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < n; ++j) {
            const double dlt = scen.eps(r, j) - mom.eps_avg[j];
            mom.eps_std[j] += dlt * dlt;
        }
    for (std::size_t j = 0; j < n; ++j)
        mom.eps_std[j] = std::sqrt(mom.eps_std[j] / static_cast<double>(k));
    return mom;
}

qp::Problem build_scenario_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                              const vpp::ScenarioSet& scen) {
    if (scen.n_scen() == 0) throw std::invalid_argument("build_scenario_qp: no scenarios");
    const std::size_t nv = cp.n_vars();
    const std::size_t nr = cp.n_rows();
    const std::size_t n_scen = scen.n_scen();

    qp::Problem pr;
    attach_objective(pr, cp, nv);

    const Vec off = base_offsets(cp, x);
    std::vector<std::int32_t> rows, cols;
    std::vector<double> vals;
    rows.reserve(n_scen * nr * 3);
    pr.h.assign(n_scen * nr, 0.0);
    for (std::size_t k = 0; k < n_scen; ++k) {
        Vec ce(nr, 0.0);
        K().gemv(cp.c_ineq.data(), nr, cp.n, scen.eps.row(k), 0.0, ce.data());
        for (std::size_t r = 0; r < nr; ++r) {
            const std::int32_t out_row = static_cast<std::int32_t>(k * nr + r);
            for (std::size_t j = 0; j < nv; ++j) {
                if (cp.a_ineq(r, j) != 0.0) {
                    rows.push_back(out_row);
                    cols.push_back(static_cast<std::int32_t>(j));
                    vals.push_back(cp.a_ineq(r, j));
                }
            }
            pr.h[k * nr + r] = -(off[r] + ce[r]);
        }
    }
    pr.g = CsrMatrix::from_triplets(n_scen * nr, nv, std::move(rows), std::move(cols),
                                    std::move(vals));
    attach_equality(pr, cp, x, nv);
    return pr;
}

qp::Problem build_cvar_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                          const vpp::ScenarioSet& scen, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("build_cvar_qp: epsilon must lie in (0,1)");
    const std::size_t nv = cp.n_vars();
    const std::size_t nr = cp.n_rows();
    const std::size_t n_scen = scen.n_scen();
    const std::size_t n_total = nv + n_scen + 1;  // [u, beta^k..., beta0]
    const std::size_t beta0_col = nv + n_scen;

    qp::Problem pr;
    attach_objective(pr, cp, n_total);

    const Vec off = base_offsets(cp, x);
    std::vector<std::int32_t> rows, cols;
    std::vector<double> vals;
    pr.h.assign(n_scen * nr + 1 + n_scen, 0.0);

    // per-scenario blocks: A u - beta^k 1 <= -(B x + C eps^k + b)
    for (std::size_t k = 0; k < n_scen; ++k) {
        Vec ce(nr, 0.0);
        K().gemv(cp.c_ineq.data(), nr, cp.n, scen.eps.row(k), 0.0, ce.data());
        for (std::size_t r = 0; r < nr; ++r) {
            const std::int32_t out_row = static_cast<std::int32_t>(k * nr + r);
            for (std::size_t j = 0; j < nv; ++j) {
                if (cp.a_ineq(r, j) != 0.0) {
                    rows.push_back(out_row);
                    cols.push_back(static_cast<std::int32_t>(j));
                    vals.push_back(cp.a_ineq(r, j));
                }
            }
            rows.push_back(out_row);
            cols.push_back(static_cast<std::int32_t>(nv + k));
            vals.push_back(-1.0);
            pr.h[k * nr + r] = -(off[r] + ce[r]);
        }
    }
    // average constraint: (1/K) sum beta^k - (1-eps) beta0 <= 0
    const std::int32_t avg_row = static_cast<std::int32_t>(n_scen * nr);
    for (std::size_t k = 0; k < n_scen; ++k) {
        rows.push_back(avg_row);
        cols.push_back(static_cast<std::int32_t>(nv + k));
        vals.push_back(1.0 / static_cast<double>(n_scen));
    }
    rows.push_back(avg_row);
    cols.push_back(static_cast<std::int32_t>(beta0_col));
    vals.push_back(-(1.0 - epsilon));
    // beta^k >= beta0  ->  beta0 - beta^k <= 0
    for (std::size_t k = 0; k < n_scen; ++k) {
        const std::int32_t row = static_cast<std::int32_t>(n_scen * nr + 1 + k);
        rows.push_back(row);
        cols.push_back(static_cast<std::int32_t>(beta0_col));
        vals.push_back(1.0);
        rows.push_back(row);
        cols.push_back(static_cast<std::int32_t>(nv + k));
        vals.push_back(-1.0);
    }
    pr.g = CsrMatrix::from_triplets(n_scen * nr + 1 + n_scen, n_total, std::move(rows),
                                    std::move(cols), std::move(vals));
    attach_equality(pr, cp, x, n_total);
    return pr;
}

qp::Problem build_robust_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                            const MomentSummary& mom, double s, double epsilon,
                            RobustNorm norm) {
    if (!(s > 0.0)) throw std::invalid_argument("build_robust_qp: s must be > 0");
    const std::size_t nv = cp.n_vars();
    const std::size_t nr = cp.n_rows();

    qp::Problem pr;
    attach_objective(pr, cp, nv);
    pr.g = CsrMatrix::from_dense(cp.a_ineq);
    Vec off = base_offsets(cp, x);
    Vec ce(nr, 0.0);
    K().gemv(cp.c_ineq.data(), nr, cp.n, mom.eps_avg.data(), 0.0, ce.data());
    pr.h.assign(nr, 0.0);
    const double tighten = s * (1.0 - epsilon);
    for (std::size_t r = 0; r < nr; ++r) {
        double margin = 0.0;
        if (norm == RobustNorm::elementwise) {
            for (std::size_t j = 0; j < cp.n; ++j) {
                const double v = cp.c_ineq(r, j) * mom.eps_std[j];
                margin += v * v;
            }
            margin = std::sqrt(margin);
        } else {
            margin = std::fabs(
                K().dot(cp.c_ineq.row(r), mom.eps_std.data(), cp.n));
        }
        pr.h[r] = -(off[r] + ce[r] + tighten * margin);
    }
    attach_equality(pr, cp, x, nv);
    return pr;
}

qp::Problem build_polyhedron_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                                const Vec& phi_avg, const Vec& phi_max, double p) {
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("build_polyhedron_qp: p must lie in [0,1]");
    const std::size_t nv = cp.n_vars();
    const std::size_t nr = cp.n_rows();
    if (phi_avg.size() != nr || phi_max.size() != nr)
        throw std::invalid_argument("build_polyhedron_qp: phi length mismatch");

    qp::Problem pr;
    attach_objective(pr, cp, nv);
    pr.g = CsrMatrix::from_dense(cp.a_ineq);
    const Vec off = base_offsets(cp, x);
    pr.h.assign(nr, 0.0);
    for (std::size_t r = 0; r < nr; ++r)
        pr.h[r] = -(off[r] + p * phi_max[r] + (1.0 - p) * phi_avg[r]);
    attach_equality(pr, cp, x, nv);
    return pr;
}

MethodResult solve_method(Method method, const vpp::CompactProblem& cp,
                          const vpp::InputVector& x, const vpp::ScenarioSet& scen,
                          const MethodParams& params) {
    MethodResult out;
    out.method = method;

    const double t0 = now_s();
    qp::Problem pr;
    switch (method) {
        case Method::sa:
            pr = build_scenario_qp(cp, x, scen);
            break;
        case Method::cvar:
            pr = build_cvar_qp(cp, x, scen, params.epsilon);
            break;
        case Method::ro: {
            const MomentSummary mom = moments(scen);
            pr = build_robust_qp(cp, x, mom, params.s, params.epsilon, params.robust_norm);
            out.parameter = params.s;
            break;
        }
        case Method::pr: {
            const auto [phi_avg, phi_max] = vpp::aggregate_scenarios(cp.c_ineq, scen);
            pr = build_polyhedron_qp(cp, x, phi_avg, phi_max, params.p);
            out.parameter = params.p;
            break;
        }
    }
    const double t1 = now_s();
    const qp::Solution sol = qp::solve(pr, params.solver);
    const double t2 = now_s();

    out.build_time_s = t1 - t0;
    out.solve_time_s = t2 - t1;
    out.status = sol.status;
    out.u.assign(sol.u.begin(), sol.u.begin() + static_cast<std::ptrdiff_t>(cp.n_vars()));
    out.objective = cp.objective(out.u);
    return out;
}

}  // namespace ccd::reform
