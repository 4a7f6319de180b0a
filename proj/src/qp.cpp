#include "ccd/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <cstdio>
#include <cstdlib>

#include <json.hpp>

namespace ccd::qp {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const kernels::Ops& K() { return kernels::active_ops(); }

// Stacked scaled problem: rows 0..m-1 are G (upper bounded), the rest are E
// (two-sided). Scaling follows modified Ruiz equilibration with cost scaling.
struct Work {
    std::size_t n = 0, m_ineq = 0, m = 0;
    Matrix pbar;
    Vec qbar;
    CsrMatrix a, at;
    Vec lo, hi;
    Vec d_scale, e_scale;
    double c_scale = 1.0;
    Vec rho, rho_inv;
    double rho_bar = 0.1;
};

void column_inf_norms(const CsrMatrix& a, Vec& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < a.val.size(); ++k)
        out[a.col[k]] = std::max(out[a.col[k]], std::fabs(a.val[k]));
}

void row_inf_norms(const CsrMatrix& a, Vec& out) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        double v = 0.0;
        for (std::int32_t k = a.rowptr[i]; k < a.rowptr[i + 1]; ++k)
            v = std::max(v, std::fabs(a.val[k]));
        out[i] = v;
    }
}

double safe_inv_sqrt(double v) {
    if (v <= 0.0) return 1.0;
    return 1.0 / std::sqrt(std::min(std::max(v, 1e-8), 1e8));
}

Work build_work(const Problem& pr, const Settings& st) {
    Work w;
    w.n = pr.n;
    w.m_ineq = pr.m();
    w.m = pr.m() + pr.me();
    w.pbar = pr.p;
    w.qbar = pr.q;
    w.rho_bar = st.rho0;

    // stack [G; E]
    {
        std::vector<std::int32_t> rows, cols;
        std::vector<double> vals;
        rows.reserve(pr.g.nnz() + pr.e.nnz());
        for (std::size_t i = 0; i < pr.g.rows; ++i)
            for (std::int32_t k = pr.g.rowptr[i]; k < pr.g.rowptr[i + 1]; ++k) {
                rows.push_back(static_cast<std::int32_t>(i));
                cols.push_back(pr.g.col[k]);
                vals.push_back(pr.g.val[k]);
            }
        for (std::size_t i = 0; i < pr.e.rows; ++i)
            for (std::int32_t k = pr.e.rowptr[i]; k < pr.e.rowptr[i + 1]; ++k) {
                rows.push_back(static_cast<std::int32_t>(pr.g.rows + i));
                cols.push_back(pr.e.col[k]);
                vals.push_back(pr.e.val[k]);
            }
        w.a = CsrMatrix::from_triplets(w.m, w.n, std::move(rows), std::move(cols),
                                       std::move(vals));
    }
    w.lo.assign(w.m, -kInf);
    w.hi.assign(w.m, 0.0);
    for (std::size_t i = 0; i < w.m_ineq; ++i) w.hi[i] = pr.h[i];
    for (std::size_t i = 0; i < pr.me(); ++i) {
        w.lo[w.m_ineq + i] = pr.d[i];
        w.hi[w.m_ineq + i] = pr.d[i];
    }

    w.d_scale.assign(w.n, 1.0);
    w.e_scale.assign(w.m, 1.0);
    w.c_scale = 1.0;

    if (st.scaling) {
        Vec col_a(w.n), row_a(w.m), col_p(w.n);
        for (std::size_t it = 0; it < st.ruiz_iters; ++it) {
            column_inf_norms(w.a, col_a);
            row_inf_norms(w.a, row_a);
            for (std::size_t j = 0; j < w.n; ++j) {
                double pj = 0.0;
                for (std::size_t i = 0; i < w.n; ++i)
                    pj = std::max(pj, std::fabs(w.pbar(i, j)));
                col_p[j] = pj;
            }
            Vec dx(w.n), de(w.m);
            for (std::size_t j = 0; j < w.n; ++j)
                dx[j] = safe_inv_sqrt(std::max(col_a[j], col_p[j]));
            for (std::size_t i = 0; i < w.m; ++i) de[i] = safe_inv_sqrt(row_a[i]);

            for (std::size_t i = 0; i < w.n; ++i)
                for (std::size_t j = 0; j < w.n; ++j) w.pbar(i, j) *= dx[i] * dx[j];
            for (std::size_t j = 0; j < w.n; ++j) w.qbar[j] *= dx[j];
            w.a.scale_cols(dx);
            w.a.scale_rows(de);
            for (std::size_t i = 0; i < w.m; ++i) {
                if (std::isfinite(w.lo[i])) w.lo[i] *= de[i];
                w.hi[i] *= de[i];
                w.e_scale[i] *= de[i];
            }
            for (std::size_t j = 0; j < w.n; ++j) w.d_scale[j] *= dx[j];

            // cost scaling
            double mean_col_p = 0.0;
            for (std::size_t j = 0; j < w.n; ++j) {
                double pj = 0.0;
                for (std::size_t i = 0; i < w.n; ++i)
                    pj = std::max(pj, std::fabs(w.pbar(i, j)));
                mean_col_p += pj;
            }
            mean_col_p /= static_cast<double>(w.n);
            const double qn = K().max_abs(w.qbar.data(), w.qbar.size());
            double gamma = std::max(mean_col_p, qn);
            gamma = gamma > 0.0 ? 1.0 / std::min(std::max(gamma, 1e-8), 1e8) : 1.0;
            for (double& v : w.pbar.storage()) v *= gamma;
            for (double& v : w.qbar) v *= gamma;
            w.c_scale *= gamma;
        }
    }
    w.at = w.a.transposed();

    w.rho.assign(w.m, 0.0);
    w.rho_inv.assign(w.m, 0.0);
    return w;
}

void set_rho(Work& w, double rho_bar, double eq_scale) {
    w.rho_bar = rho_bar;
    for (std::size_t i = 0; i < w.m; ++i) {
        const bool is_eq = w.lo[i] == w.hi[i];
        w.rho[i] = is_eq ? rho_bar * eq_scale : rho_bar;
        w.rho_inv[i] = 1.0 / w.rho[i];
    }
}

bool factor_kkt(const Work& w, double sigma, Cholesky& chol) {
    Matrix kkt = w.pbar;
    for (std::size_t j = 0; j < w.n; ++j) kkt(j, j) += sigma;
    for (std::size_t i = 0; i < w.m; ++i) {
        const double r = w.rho[i];
        for (std::int32_t k1 = w.a.rowptr[i]; k1 < w.a.rowptr[i + 1]; ++k1) {
            const double rv = r * w.a.val[k1];
            const std::int32_t j1 = w.a.col[k1];
            double* row = kkt.row(j1);
            for (std::int32_t k2 = w.a.rowptr[i]; k2 < w.a.rowptr[i + 1]; ++k2)
                row[w.a.col[k2]] += rv * w.a.val[k2];
        }
    }
    return chol.factor(std::move(kkt));
}

struct Residuals {
    double prim = kInf, dual = kInf;
    double prim_rel = kInf, dual_rel = kInf;  // residual / tolerance denominator
    double eps_prim = 0.0, eps_dual = 0.0;    // thresholds actually applied
    bool prim_ok = false, dual_ok = false;
};

Residuals compute_residuals(const Work& w, const Settings& st, const Vec& z,
                            const Vec& ax, const Vec& px, const Vec& aty) {
    Residuals r;
    double prim = 0.0, ax_n = 0.0, z_n = 0.0;
    for (std::size_t i = 0; i < w.m; ++i) {
        const double inv_e = 1.0 / w.e_scale[i];
        prim = std::max(prim, std::fabs(ax[i] - z[i]) * inv_e);
        ax_n = std::max(ax_n, std::fabs(ax[i]) * inv_e);
        z_n = std::max(z_n, std::fabs(z[i]) * inv_e);
    }
    double dual = 0.0, px_n = 0.0, aty_n = 0.0, q_n = 0.0;
    const double inv_c = 1.0 / w.c_scale;
    for (std::size_t j = 0; j < w.n; ++j) {
        const double inv_d = 1.0 / w.d_scale[j];
        dual = std::max(dual, std::fabs(px[j] + w.qbar[j] + aty[j]) * inv_d);
        px_n = std::max(px_n, std::fabs(px[j]) * inv_d);
        aty_n = std::max(aty_n, std::fabs(aty[j]) * inv_d);
        q_n = std::max(q_n, std::fabs(w.qbar[j]) * inv_d);
    }
    dual *= inv_c;
    r.prim = prim;
    r.dual = dual;
    const double prim_scale = std::max(ax_n, z_n);
    const double dual_scale = inv_c * std::max({px_n, aty_n, q_n});
    r.eps_prim = st.eps_abs + st.eps_rel * prim_scale;
    r.eps_dual = st.eps_abs + st.eps_rel * dual_scale;
    r.prim_ok = prim <= r.eps_prim;
    r.dual_ok = dual <= r.eps_dual;
    r.prim_rel = prim / std::max(prim_scale, 1e-12);
    r.dual_rel = dual / std::max(dual_scale, 1e-12);
    return r;
}

bool primal_infeasibility_cert(const Work& w, const Settings& st, const Vec& dy_bar) {
    // certificate uses unscaled dy = E dy_bar / c
    Vec dy(w.m);
    for (std::size_t i = 0; i < w.m; ++i) dy[i] = w.e_scale[i] * dy_bar[i] / w.c_scale;
    const double norm = K().max_abs(dy.data(), dy.size());
    if (norm <= 0.0) return false;
    for (double& v : dy) v /= norm;

    Vec dy_bar_n(w.m);
    for (std::size_t i = 0; i < w.m; ++i) dy_bar_n[i] = dy_bar[i] / (norm * w.c_scale);
    const Vec at_dy = w.at.multiply(dy_bar_n);
    double cond1 = 0.0;
    for (std::size_t j = 0; j < w.n; ++j)
        cond1 = std::max(cond1, std::fabs(at_dy[j]) / w.d_scale[j]);
    if (cond1 > st.eps_infeas) return false;

    double support = 0.0;
    for (std::size_t i = 0; i < w.m; ++i) {
        const double hi_u = w.hi[i] / w.e_scale[i];
        const double lo_u = std::isfinite(w.lo[i]) ? w.lo[i] / w.e_scale[i] : -kInf;
        if (dy[i] > 0.0) {
            support += hi_u * dy[i];
        } else if (dy[i] < 0.0) {
            if (!std::isfinite(lo_u)) return false;
            support += lo_u * dy[i];
        }
    }
    return support <= -st.eps_infeas;
}

bool dual_infeasibility_cert(const Work& w, const Settings& st, const Vec& dx_bar) {
    Vec dx(w.n);
    for (std::size_t j = 0; j < w.n; ++j) dx[j] = w.d_scale[j] * dx_bar[j];
    const double norm = K().max_abs(dx.data(), dx.size());
    if (norm <= 0.0) return false;
    Vec dx_bar_n(w.n);
    for (std::size_t j = 0; j < w.n; ++j) dx_bar_n[j] = dx_bar[j] / norm;

    Vec p_dx(w.n, 0.0);
    K().gemv(w.pbar.data(), w.n, w.n, dx_bar_n.data(), 0.0, p_dx.data());
    double cond1 = 0.0;
    for (std::size_t j = 0; j < w.n; ++j)
        cond1 = std::max(cond1, std::fabs(p_dx[j]) / (w.d_scale[j] * w.c_scale));
    if (cond1 > st.eps_infeas) return false;

    const double q_dx = K().dot(w.qbar.data(), dx_bar_n.data(), w.n) / w.c_scale;
    if (q_dx > -st.eps_infeas) return false;

    const Vec a_dx = w.a.multiply(dx_bar_n);
    for (std::size_t i = 0; i < w.m; ++i) {
        const double v = a_dx[i] / w.e_scale[i];
        const bool lo_fin = std::isfinite(w.lo[i]);
        if (v > st.eps_infeas) return false;          // all rows are upper bounded
        if (lo_fin && v < -st.eps_infeas) return false;  // two-sided rows pin to zero
    }
    return true;
}

struct PolishOutcome {
    bool accepted = false;
    bool meets_tolerances = false;
    Vec x, y;
    double prim = kInf, dual = kInf;
};

// Active-set cleanup from the ADMM iterate: solve the equality-pinned KKT
// for the guessed set, then repair the set (add violated rows, drop rows
// with negative multipliers) for a few passes. A candidate is only accepted
// when it is primal feasible, stationary, and dual feasible.
PolishOutcome polish(const Work& w, const Settings& st, const Vec& z_bar,
                     const Vec& y_bar, double best_residual) {
    PolishOutcome out;
    const double y_tol = 1e-10 * std::max(1.0, K().max_abs(y_bar.data(), y_bar.size()));
    std::vector<char> in_set(w.m, 0);
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < w.m; ++i) {
        const bool is_eq = w.lo[i] == w.hi[i];
        if (is_eq || (z_bar[i] >= w.hi[i] && y_bar[i] >= 0.0) || y_bar[i] > y_tol) {
            active.push_back(i);
            in_set[i] = 1;
        }
    }
    if (active.empty()) return out;

    double best = best_residual;
    Vec x_last;

    const auto evaluate = [&](const std::vector<std::size_t>& rows, const Vec& cand) {
        Vec x_pol(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(w.n));
        Vec y_pol(w.m, 0.0);
        double y_min = 0.0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            y_pol[rows[r]] = cand[w.n + r];
            if (w.lo[rows[r]] != w.hi[rows[r]]) y_min = std::min(y_min, cand[w.n + r]);
        }
        const Vec ax = w.a.multiply(x_pol);
        Vec z(w.m);
        K().clamp(ax.data(), w.lo.data(), w.hi.data(), z.data(), w.m);
        Vec px(w.n, 0.0);
        K().gemv(w.pbar.data(), w.n, w.n, x_pol.data(), 0.0, px.data());
        const Vec aty = w.at.multiply(y_pol);
        const Residuals res = compute_residuals(w, st, z, ax, px, aty);
        x_last = x_pol;
        const double y_scale = std::max(1.0, K().max_abs(y_pol.data(), y_pol.size()));
        const bool dual_feasible = y_min >= -1e-9 * y_scale;
        if (dual_feasible && std::max(res.prim, res.dual) < best) {
            best = std::max(res.prim, res.dual);
            out.accepted = true;
            out.meets_tolerances = res.prim_ok && res.dual_ok;
            out.x = std::move(x_pol);
            out.y = std::move(y_pol);
            out.prim = res.prim;
            out.dual = res.dual;
        }
    };

    for (int pass = 0; pass < 5; ++pass) {
        const std::size_t na = active.size();
        const std::size_t dim = w.n + na;
        if (dim > 4000) break;

        Matrix kkt(dim, dim);
        for (std::size_t i = 0; i < w.n; ++i)
            for (std::size_t j = 0; j < w.n; ++j) kkt(i, j) = w.pbar(i, j);
        for (std::size_t i = 0; i < w.n; ++i) kkt(i, i) += st.polish_delta;
        for (std::size_t r = 0; r < na; ++r) {
            const std::size_t row = active[r];
            for (std::int32_t k = w.a.rowptr[row]; k < w.a.rowptr[row + 1]; ++k) {
                kkt(w.n + r, w.a.col[k]) = w.a.val[k];
                kkt(w.a.col[k], w.n + r) = w.a.val[k];
            }
            kkt(w.n + r, w.n + r) = -st.polish_delta;
        }
        Lu lu;
        if (!lu.factor(std::move(kkt))) break;

        Vec rhs(dim, 0.0);
        for (std::size_t j = 0; j < w.n; ++j) rhs[j] = -w.qbar[j];
        for (std::size_t r = 0; r < na; ++r) rhs[w.n + r] = w.hi[active[r]];

        // iterative refinement against the unregularized KKT, keeping the
        // best candidate seen (the unregularized system may be singular)
        Vec t(dim, 0.0);
        Vec y_of_t(na, 0.0);
        for (std::size_t it = 0; it <= st.polish_refine_iters; ++it) {
            Vec resid = rhs;
            Vec px(w.n, 0.0);
            K().gemv(w.pbar.data(), w.n, w.n, t.data(), 0.0, px.data());
            for (std::size_t j = 0; j < w.n; ++j) resid[j] -= px[j];
            for (std::size_t r = 0; r < na; ++r) {
                const std::size_t row = active[r];
                double av = 0.0;
                for (std::int32_t k = w.a.rowptr[row]; k < w.a.rowptr[row + 1]; ++k) {
                    av += w.a.val[k] * t[w.a.col[k]];
                    resid[w.a.col[k]] -= w.a.val[k] * t[w.n + r];
                }
                resid[w.n + r] -= av;
            }
            const Vec step = lu.solve(resid);
            for (std::size_t j = 0; j < dim; ++j) t[j] += step[j];
            evaluate(active, t);
        }

        // repair the working set using the last candidate
        bool changed = false;
        const Vec ax = w.a.multiply(x_last);
        for (std::size_t i = 0; i < w.m; ++i) {
            if (in_set[i]) continue;
            const double feas_tol =
                1e-12 * std::max(1.0, std::fabs(w.hi[i]));
            if (ax[i] - w.hi[i] > feas_tol) {
                active.push_back(i);
                in_set[i] = 1;
                changed = true;
            }
        }
        double y_scale = 1.0;
        for (std::size_t r = 0; r < na; ++r)
            y_scale = std::max(y_scale, std::fabs(t[w.n + r]));
        std::vector<std::size_t> kept;
        for (std::size_t r = 0; r < na; ++r) {
            const std::size_t row = active[r];
            const bool is_eq = w.lo[row] == w.hi[row];
            if (!is_eq && t[w.n + r] < -1e-9 * y_scale) {
                in_set[row] = 0;
                changed = true;
            } else {
                kept.push_back(row);
            }
        }
        for (std::size_t r = na; r < active.size(); ++r) kept.push_back(active[r]);
        active = std::move(kept);
        if (!changed || active.empty()) break;
    }
    if (std::getenv("CCD_QP_TRACE"))
        std::fprintf(stderr, "polish: accepted=%d pres=%.2e dres=%.2e best_in=%.2e\n",
                     (int)out.accepted, out.prim, out.dual, best_residual);
    return out;
}

double original_objective(const Problem& pr, const Vec& u) {
    Vec pu(pr.n, 0.0);
    if (pr.n > 0) K().gemv(pr.p.data(), pr.n, pr.n, u.data(), 0.0, pu.data());
    return 0.5 * K().dot(u.data(), pu.data(), pr.n) + K().dot(pr.q.data(), u.data(), pr.n);
}

}  // namespace

void Problem::validate() const {
    if (p.rows() != n || p.cols() != n) throw std::invalid_argument("qp: P must be n x n");
    if (q.size() != n) throw std::invalid_argument("qp: q size mismatch");
    if (g.cols != n && g.rows > 0) throw std::invalid_argument("qp: G column mismatch");
    if (h.size() != g.rows) throw std::invalid_argument("qp: h size mismatch");
    if (e.cols != n && e.rows > 0) throw std::invalid_argument("qp: E column mismatch");
    if (d.size() != e.rows) throw std::invalid_argument("qp: d size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (p(i, i) < 0.0) throw std::invalid_argument("qp: negative diagonal in P");
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::fabs(p(i, j) - p(j, i)) > 1e-12)
                throw std::invalid_argument("qp: P not symmetric");
    }
}

const char* status_name(Status s) {
    switch (s) {
        case Status::optimal: return "optimal";
        case Status::max_iter: return "max_iter";
        case Status::primal_infeasible: return "primal_infeasible";
        case Status::dual_infeasible: return "dual_infeasible";
    }
    return "unknown";
}

Solution solve(const Problem& problem, const Settings& settings) {
    problem.validate();
    Work w = build_work(problem, settings);
    set_rho(w, settings.rho0, settings.rho_eq_scale);

    Cholesky kkt;
    if (!factor_kkt(w, settings.sigma, kkt))
        throw std::runtime_error("qp: KKT factorization failed");

    Vec x(w.n, 0.0), z(w.m, 0.0), y(w.m, 0.0);
    Vec x_prev, y_prev;
    Vec rhs(w.n), xt(w.n), zt(w.m), ztmp(w.m), yz(w.m);

    Solution sol;
    Residuals res;
    bool done = false;
    std::size_t rho_interval = settings.adaptive_rho_interval;
    std::size_t next_rho_check = rho_interval;
    std::size_t next_polish_attempt = 500;
    PolishOutcome early_pol;

    std::size_t iter = 0;
    for (iter = 1; iter <= settings.max_iter; ++iter) {
        const bool checking =
            (iter % settings.check_interval == 0) || iter == settings.max_iter;
        if (checking) {
            x_prev = x;
            y_prev = y;
        }

        // rhs = sigma*x - q + A'(rho.*z - y)
        for (std::size_t i = 0; i < w.m; ++i) yz[i] = w.rho[i] * z[i] - y[i];
        Vec aty = w.at.multiply(yz);
        for (std::size_t j = 0; j < w.n; ++j)
            rhs[j] = settings.sigma * x[j] - w.qbar[j] + aty[j];
        xt = kkt.solve(rhs);
        zt = w.a.multiply(xt);

        for (std::size_t j = 0; j < w.n; ++j)
            x[j] = settings.alpha * xt[j] + (1.0 - settings.alpha) * x[j];
        for (std::size_t i = 0; i < w.m; ++i) {
            const double wrel = settings.alpha * zt[i] + (1.0 - settings.alpha) * z[i];
            ztmp[i] = wrel + y[i] * w.rho_inv[i];
            yz[i] = wrel;  // reuse as relaxed z
        }
        K().clamp(ztmp.data(), w.lo.data(), w.hi.data(), z.data(), w.m);
        for (std::size_t i = 0; i < w.m; ++i) y[i] += w.rho[i] * (yz[i] - z[i]);

        if (!checking) continue;

        const Vec ax = w.a.multiply(x);
        Vec px(w.n, 0.0);
        K().gemv(w.pbar.data(), w.n, w.n, x.data(), 0.0, px.data());
        const Vec aty2 = w.at.multiply(y);
        res = compute_residuals(w, settings, z, ax, px, aty2);
        if (res.prim_ok && res.dual_ok) {
            sol.status = Status::optimal;
            done = true;
            break;
        }

        // a successful polish from a rough iterate often reaches the
        // tolerances long before the splitting iteration would; attempts are
        // gated on rough closeness so the factorizations are not wasted
        if (settings.polish && iter >= next_polish_attempt &&
            res.prim <= 1e4 * res.eps_prim && res.dual <= 1e4 * res.eps_dual) {
            next_polish_attempt = iter + 500;
            const PolishOutcome pol =
                polish(w, settings, z, y, std::max(res.prim, res.dual));
            if (pol.accepted && pol.meets_tolerances) {
                early_pol = pol;
                sol.status = Status::optimal;
                done = true;
                break;
            }
        }

        Vec dy(w.m), dx(w.n);
        for (std::size_t i = 0; i < w.m; ++i) dy[i] = y[i] - y_prev[i];
        for (std::size_t j = 0; j < w.n; ++j) dx[j] = x[j] - x_prev[j];
        if (primal_infeasibility_cert(w, settings, dy)) {
            sol.status = Status::primal_infeasible;
            done = true;
            break;
        }
        if (dual_infeasibility_cert(w, settings, dx)) {
            sol.status = Status::dual_infeasible;
            done = true;
            break;
        }

        if (settings.adaptive_rho && iter >= next_rho_check && res.prim_rel > 0.0 &&
            res.dual_rel > 0.0 && std::isfinite(res.prim_rel) &&
            std::isfinite(res.dual_rel)) {
            // each adaptation doubles the wait before the next one, so the
            // penalty eventually freezes and the iteration can converge
            rho_interval = rho_interval + rho_interval / 2;
            next_rho_check = iter + rho_interval;
            // one clamped multiplicative step per (growing) interval: early
            // ratio estimates are noisy, so never jump straight to them
            const double ratio =
                std::clamp(std::sqrt(res.prim_rel / res.dual_rel), 0.2, 5.0);
            if (std::getenv("CCD_QP_TRACE"))
                std::fprintf(stderr, "iter %zu rho=%g ratio=%g pres=%.2e dres=%.2e\n",
                             iter, w.rho_bar, ratio, res.prim, res.dual);
            if (ratio > 1.2 || ratio < 0.8) {
                const double rho_new = std::clamp(w.rho_bar * ratio, 1e-6, 1e6);
                set_rho(w, rho_new, settings.rho_eq_scale);
                if (!factor_kkt(w, settings.sigma, kkt))
                    throw std::runtime_error("qp: KKT refactorization failed");
            }
        }
    }

    if (!done) {
        sol.status = Status::max_iter;
        iter = settings.max_iter;
    }

    double prim = res.prim, dual = res.dual;
    bool polished = false;
    if (early_pol.accepted) {
        x = early_pol.x;
        y = early_pol.y;
        prim = early_pol.prim;
        dual = early_pol.dual;
        polished = true;
    } else if (sol.status == Status::optimal && settings.polish) {
        const PolishOutcome pol = polish(w, settings, z, y, std::max(res.prim, res.dual));
        if (pol.accepted) {
            x = pol.x;
            y = pol.y;
            prim = pol.prim;
            dual = pol.dual;
            polished = true;
        }
    }

    if (sol.status == Status::primal_infeasible || sol.status == Status::dual_infeasible) {
        sol.u.assign(w.n, 0.0);
        sol.objective = 0.0;
        sol.iterations = iter;
        sol.primal_res = kInf;
        sol.dual_res = kInf;
        sol.y_ineq.assign(w.m_ineq, 0.0);
        sol.y_eq.assign(w.m - w.m_ineq, 0.0);
        return sol;
    }

    sol.u.resize(w.n);
    for (std::size_t j = 0; j < w.n; ++j) sol.u[j] = w.d_scale[j] * x[j];
    sol.y_ineq.resize(w.m_ineq);
    sol.y_eq.resize(w.m - w.m_ineq);
    for (std::size_t i = 0; i < w.m; ++i) {
        const double yu = w.e_scale[i] * y[i] / w.c_scale;
        if (i < w.m_ineq)
            sol.y_ineq[i] = yu;
        else
            sol.y_eq[i - w.m_ineq] = yu;
    }
    sol.objective = original_objective(problem, sol.u);
    sol.iterations = iter;
    sol.primal_res = prim;
    sol.dual_res = dual;
    sol.polished = polished;
    return sol;
}

ChebyshevResult chebyshev_center(const Matrix& g_mat, const Vec& h_vec,
                                 const Settings& settings) {
    if (g_mat.rows() == 0) throw std::invalid_argument("chebyshev_center: no rows");
    if (g_mat.rows() != h_vec.size())
        throw std::invalid_argument("chebyshev_center: dimension mismatch");
    const std::size_t n = g_mat.cols();
    Problem pr;
    pr.n = n + 1;
    pr.p = Matrix(n + 1, n + 1);
    for (std::size_t j = 0; j < n; ++j) pr.p(j, j) = 2e-8;
    pr.q.assign(n + 1, 0.0);
    pr.q[n] = -1.0;

    Matrix gr(g_mat.rows(), n + 1);
    for (std::size_t i = 0; i < g_mat.rows(); ++i) {
        double nrm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            gr(i, j) = g_mat(i, j);
            nrm += g_mat(i, j) * g_mat(i, j);
        }
        gr(i, n) = std::sqrt(nrm);
    }
    pr.g = CsrMatrix::from_dense(gr);
    pr.h = h_vec;
    pr.e = CsrMatrix{};
    pr.e.cols = n + 1;
    pr.e.rowptr = {0};

    const Solution sol = solve(pr, settings);
    if (sol.status == Status::dual_infeasible)
        throw std::runtime_error("chebyshev_center: unbounded polytope");
    if (sol.status != Status::optimal || sol.u.empty())
        throw std::runtime_error("chebyshev_center: empty or degenerate polytope");
    ChebyshevResult out;
    out.center.assign(sol.u.begin(), sol.u.begin() + static_cast<std::ptrdiff_t>(n));
    // report the exact ball radius at the returned center, not the solver's
    // (tolerance-accurate) auxiliary variable
    out.radius = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g_mat.rows(); ++i) {
        const double margin = h_vec[i] - K().dot(g_mat.row(i), out.center.data(), n);
        const double nrm = gr(i, n);
        if (nrm > 0.0) out.radius = std::min(out.radius, margin / nrm);
    }
    if (!std::isfinite(out.radius)) out.radius = 0.0;
    if (out.radius <= 1e-9)
        throw std::runtime_error("chebyshev_center: empty or degenerate polytope");
    return out;
}

std::string dump_json(const Problem& problem) {
    json j;
    j["n"] = problem.n;
    j["m"] = problem.m();
    j["me"] = problem.me();
    j["p_mat"] = problem.p.storage();
    j["q_vec"] = problem.q;
    j["g_mat"] = problem.g.to_dense().storage();
    j["h_vec"] = problem.h;
    j["e_mat"] = problem.e.to_dense().storage();
    j["d_vec"] = problem.d;
    return j.dump();
}

Problem load_json(const std::string& text) {
    const json j = json::parse(text);
    Problem pr;
    pr.n = j.at("n").get<std::size_t>();
    const std::size_t m = j.at("m").get<std::size_t>();
    const std::size_t me = j.at("me").get<std::size_t>();
    const Vec pd = j.at("p_mat").get<Vec>();
    pr.p = Matrix(pr.n, pr.n);
    pr.p.storage() = pd;
    pr.q = j.at("q_vec").get<Vec>();
    Matrix g(m, pr.n);
    g.storage() = j.at("g_mat").get<Vec>();
    pr.g = CsrMatrix::from_dense(g);
    pr.h = j.at("h_vec").get<Vec>();
    Matrix e(me, pr.n);
    e.storage() = j.at("e_mat").get<Vec>();
    pr.e = CsrMatrix::from_dense(e);
    pr.d = j.at("d_vec").get<Vec>();
    pr.validate();
    return pr;
}

}  // namespace ccd::qp
