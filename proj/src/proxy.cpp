#include "ccd/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ccd/reform.hpp"
#include "ccd/rng.hpp"

namespace ccd::proxy {

using nlohmann::json;

namespace {

const kernels::Ops& K() { return kernels::active_ops(); }

constexpr double kViolationTol = 1e-6;

}  // namespace

AggregatedFeatures set_aggregate(const Matrix& c_ineq, const vpp::ScenarioSet& scen) {
    if (scen.n_scen() == 0) throw std::invalid_argument("set_aggregate: empty scenario set");
    auto [avg, mx] = vpp::aggregate_scenarios(c_ineq, scen);
    return {std::move(avg), std::move(mx)};
}

Vec EqualityPartition::complete(const Vec& u_ind, const Vec& x_stacked) const {
    Vec u_dep = map_x.multiply(x_stacked);
    K().gemv(map_u.data(), map_u.rows(), map_u.cols(), u_ind.data(), 1.0, u_dep.data());
    Vec u(dep_idx.size() + ind_idx.size(), 0.0);
    for (std::size_t k = 0; k < dep_idx.size(); ++k) u[dep_idx[k]] = u_dep[k];
    for (std::size_t k = 0; k < ind_idx.size(); ++k) u[ind_idx[k]] = u_ind[k];
    return u;
}

Vec EqualityPartition::extract_ind(const Vec& u_full) const {
    Vec v(ind_idx.size());
    for (std::size_t k = 0; k < ind_idx.size(); ++k) v[k] = u_full[ind_idx[k]];
    return v;
}

EqualityPartition equality_partition(const vpp::CompactProblem& cp) {
    const std::size_t me = cp.a_eq.rows();
    const std::size_t nv = cp.n_vars();
    if (me == 0 || me > nv) throw std::invalid_argument("equality_partition: bad A_eq shape");

    // Greedy largest-absolute-pivot elimination picks the dependent columns.
    Matrix work = cp.a_eq;
    std::vector<bool> used(nv, false);
    std::vector<std::size_t> dep;
    for (std::size_t r = 0; r < me; ++r) {
        std::size_t best_col = nv;
        double best = 0.0;
        for (std::size_t j = 0; j < nv; ++j) {
            if (used[j]) continue;
            const double v = std::fabs(work(r, j));
            if (v > best + 1e-15 * best) {
                best = v;
                best_col = j;
            }
        }
        if (best_col == nv || best < 1e-10)
            throw std::invalid_argument("equality_partition: rank-deficient A_eq");
        used[best_col] = true;
        dep.push_back(best_col);
        for (std::size_t r2 = r + 1; r2 < me; ++r2) {
            const double f = work(r2, best_col) / work(r, best_col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < nv; ++j) work(r2, j) -= f * work(r, j);
        }
    }

    EqualityPartition part;
    part.dep_idx = dep;
    for (std::size_t j = 0; j < nv; ++j)
        if (!used[j]) part.ind_idx.push_back(j);

    // map_u = -A_dep^{-1} A_ind, map_x = -A_dep^{-1} B_eq
    Matrix a_dep(me, me);
    for (std::size_t r = 0; r < me; ++r)
        for (std::size_t k = 0; k < me; ++k) a_dep(r, k) = cp.a_eq(r, dep[k]);
    Lu lu;
    if (!lu.factor(a_dep))
        throw std::invalid_argument("equality_partition: rank-deficient A_eq");

    const std::size_t ni = part.ind_idx.size();
    part.map_u = Matrix(me, ni);
    for (std::size_t c = 0; c < ni; ++c) {
        Vec rhs(me);
        for (std::size_t r = 0; r < me; ++r) rhs[r] = -cp.a_eq(r, part.ind_idx[c]);
        const Vec col = lu.solve(rhs);
        for (std::size_t r = 0; r < me; ++r) part.map_u(r, c) = col[r];
    }
    const std::size_t nx = cp.b_eq.cols();
    part.map_x = Matrix(me, nx);
    for (std::size_t c = 0; c < nx; ++c) {
        Vec rhs(me);
        for (std::size_t r = 0; r < me; ++r) rhs[r] = -cp.b_eq(r, c);
        const Vec col = lu.solve(rhs);
        for (std::size_t r = 0; r < me; ++r) part.map_x(r, c) = col[r];
    }
    return part;
}

namespace {

// Midpoint of the per-coordinate boxes implied by single-coefficient rows,
// nudged into the remaining rows by projections onto slightly shrunk
// halfspaces. Cheap; the Chebyshev center is the fallback.
bool analytic_interior(const Matrix& a, const Vec& b, Vec& point, Vec& margins) {
    const std::size_t nr = a.rows();
    const std::size_t nc = a.cols();
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo(nc, -inf), hi(nc, inf);
    for (std::size_t r = 0; r < nr; ++r) {
        std::size_t nnz = 0, col = 0;
        for (std::size_t j = 0; j < nc; ++j) {
            if (a(r, j) != 0.0) {
                ++nnz;
                col = j;
                if (nnz > 1) break;
            }
        }
        if (nnz != 1) continue;
        const double coef = a(r, col);
        const double bound = b[r] / coef;
        if (coef > 0.0)
            hi[col] = std::min(hi[col], bound);
        else
            lo[col] = std::max(lo[col], bound);
    }
    Vec v(nc, 0.0);
    double min_width = inf;
    for (std::size_t j = 0; j < nc; ++j) {
        if (!std::isfinite(lo[j]) || !std::isfinite(hi[j])) {
            if (std::isfinite(lo[j]))
                v[j] = lo[j] + 1.0;
            else if (std::isfinite(hi[j]))
                v[j] = hi[j] - 1.0;
            else
                v[j] = 0.0;
            continue;
        }
        if (hi[j] < lo[j]) return false;  // empty box
        v[j] = 0.5 * (lo[j] + hi[j]);
        min_width = std::min(min_width, hi[j] - lo[j]);
    }
    if (!std::isfinite(min_width)) min_width = 1.0;
    const double target = 0.05 * min_width;

    for (int sweep = 0; sweep < 25; ++sweep) {
        bool moved = false;
        for (std::size_t r = 0; r < nr; ++r) {
            const double av = K().dot(a.row(r), v.data(), nc);
            const double excess = av - (b[r] - target);
            if (excess <= 0.0) continue;
            const double nrm2 = K().dot(a.row(r), a.row(r), nc);
            if (nrm2 <= 0.0) {
                if (b[r] < 0.0) return false;  // 0 <= b violated outright
                continue;
            }
            K().axpy(-excess / nrm2, a.row(r), v.data(), nc);
            moved = true;
        }
        if (!moved) break;
    }

    margins.assign(nr, 0.0);
    double min_margin = inf;
    for (std::size_t r = 0; r < nr; ++r) {
        margins[r] = b[r] - K().dot(a.row(r), v.data(), nc);
        min_margin = std::min(min_margin, margins[r]);
    }
    if (min_margin <= 1e-9 * std::max(1.0, norm_inf(b))) return false;
    point = std::move(v);
    return true;
}

}  // namespace

ReducedPolyhedron reduce_polyhedron(const vpp::CompactProblem& cp,
                                    const vpp::InputVector& x,
                                    const AggregatedFeatures& feats, double p,
                                    const EqualityPartition& part) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("reduce_polyhedron: p outside [0,1]");
    const std::size_t nr = cp.n_rows();
    const std::size_t ni = part.n_ind();
    const std::size_t me = part.dep_idx.size();

    ReducedPolyhedron rp;
    rp.a = Matrix(nr, ni);
    rp.b.assign(nr, 0.0);

    const Vec xs = x.stacked();
    const Vec t_dep = part.map_x.multiply(xs);  // dependent block at u_ind = 0
    const Vec offsets = [&] {
        Vec off = cp.b_ineq_vec;
        K().gemv(cp.b_ineq_mat.data(), nr, cp.b_ineq_mat.cols(), xs.data(), 1.0, off.data());
        return off;
    }();

    for (std::size_t r = 0; r < nr; ++r) {
        // reduced row = A_ind + A_dep * map_u ; constant = A_dep * t_dep
        double cst = offsets[r] + p * feats.phi_max[r] + (1.0 - p) * feats.phi_avg[r];
        for (std::size_t c = 0; c < ni; ++c) rp.a(r, c) = cp.a_ineq(r, part.ind_idx[c]);
        for (std::size_t k = 0; k < me; ++k) {
            const double coef = cp.a_ineq(r, part.dep_idx[k]);
            if (coef == 0.0) continue;
            K().axpy(coef, part.map_u.row(k), rp.a.row(r), ni);
            cst += coef * t_dep[k];
        }
        rp.b[r] = -cst;
    }

    if (!analytic_interior(rp.a, rp.b, rp.interior, rp.margins)) {
        qp::ChebyshevResult cheb;
        try {
            cheb = qp::chebyshev_center(rp.a, rp.b);
        } catch (const std::runtime_error&) {
            throw ReducedSetEmpty(p);
        }
        rp.interior = cheb.center;
        rp.margins.assign(nr, 0.0);
        double min_margin = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < nr; ++r) {
            rp.margins[r] = rp.b[r] - K().dot(rp.a.row(r), rp.interior.data(), ni);
            min_margin = std::min(min_margin, rp.margins[r]);
        }
        if (min_margin <= 0.0) throw ReducedSetEmpty(p);
    }
    return rp;
}

GaugeValue minkowski_gauge(const Vec& u_hat, const ReducedPolyhedron& rp) {
    GaugeValue g;
    const std::size_t nr = rp.a.rows();
    for (std::size_t r = 0; r < nr; ++r) {
        const double num = K().dot(rp.a.row(r), u_hat.data(), u_hat.size());
        if (num <= 0.0) continue;
        const double ratio = num / rp.margins[r];
        if (ratio > g.psi) {
            g.psi = ratio;
            g.active_row = static_cast<std::ptrdiff_t>(r);
        }
    }
    return g;
}

Vec gauge_map(const Vec& u_hat, const ReducedPolyhedron& rp) {
    const GaugeValue g = minkowski_gauge(u_hat, rp);
    const double scale = 1.0 / std::max(1.0, g.psi);
    Vec u = rp.interior;
    K().axpy(scale, u_hat.data(), u.data(), u.size());
    return u;
}

Vec gauge_map_jacobian_vec(const Vec& u_hat, const ReducedPolyhedron& rp,
                           const Vec& upstream) {
    const GaugeValue g = minkowski_gauge(u_hat, rp);
    if (g.psi <= 1.0) return upstream;
    const double* a = rp.a.row(static_cast<std::size_t>(g.active_row));
    const double d = rp.margins[static_cast<std::size_t>(g.active_row)];
    const double s = K().dot(a, u_hat.data(), u_hat.size());
    const double u_dot_g = K().dot(u_hat.data(), upstream.data(), u_hat.size());
    Vec out = scaled(upstream, d / s);
    K().axpy(-(d / (s * s)) * u_dot_g, a, out.data(), out.size());
    return out;
}

MlpWeights init_weights(std::size_t d, std::size_t h, std::size_t o, std::uint64_t seed) {
    MlpWeights w;
    w.d = d;
    w.h = h;
    w.o = o;
    w.seed = seed;
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    w.w1 = Matrix(h, d);
    for (double& v : w.w1.storage()) v = rng.uniform(-s1, s1);
    w.b1.resize(h);
    for (double& v : w.b1) v = rng.uniform(-s1, s1);
    w.w2 = Matrix(o, h);
    for (double& v : w.w2.storage()) v = rng.uniform(-s2, s2);
    w.b2.resize(o);
    for (double& v : w.b2) v = rng.uniform(-s2, s2);
    w.feat_mean.assign(d, 0.0);
    w.feat_std.assign(d, 1.0);
    return w;
}

std::string weights_to_json(const MlpWeights& w) {
    json j;
    j["dims"] = {{"d", w.d}, {"h", w.h}, {"o", w.o}};
    j["w1"] = w.w1.storage();
    j["b1"] = w.b1;
    j["w2"] = w.w2.storage();
    j["b2"] = w.b2;
    j["feature_norm"] = {{"mean", w.feat_mean}, {"std", w.feat_std}};
    j["p"] = w.p;
    j["seed"] = w.seed;
    j["metadata"] = {{"activation", "relu"}, {"layout", "row-major"}};
    return j.dump();
}

MlpWeights weights_from_json(const std::string& text) {
    const json j = json::parse(text);
    MlpWeights w;
    w.d = j.at("dims").at("d").get<std::size_t>();
    w.h = j.at("dims").at("h").get<std::size_t>();
    w.o = j.at("dims").at("o").get<std::size_t>();
    w.w1 = Matrix(w.h, w.d);
    w.w1.storage() = j.at("w1").get<Vec>();
    w.b1 = j.at("b1").get<Vec>();
    w.w2 = Matrix(w.o, w.h);
    w.w2.storage() = j.at("w2").get<Vec>();
    w.b2 = j.at("b2").get<Vec>();
    w.feat_mean = j.at("feature_norm").at("mean").get<Vec>();
    w.feat_std = j.at("feature_norm").at("std").get<Vec>();
    w.p = j.at("p").get<double>();
    w.seed = j.at("seed").get<std::uint64_t>();
    return w;
}

namespace {

Vec raw_features(const vpp::InputVector& x, const AggregatedFeatures& feats) {
    Vec f = x.stacked();
    f.insert(f.end(), feats.phi_avg.begin(), feats.phi_avg.end());
    f.insert(f.end(), feats.phi_max.begin(), feats.phi_max.end());
    return f;
}

std::pair<Vec, ForwardTrace> forward_impl(const MlpWeights& w, const Vec& raw,
                                          const ReducedPolyhedron& rp,
                                          const EqualityPartition& part,
                                          const Vec& x_stacked) {
    if (raw.size() != w.d) throw std::invalid_argument("proxy_forward: feature size mismatch");
    ForwardTrace tr;
    tr.features.resize(w.d);
    for (std::size_t j = 0; j < w.d; ++j)
        tr.features[j] = (raw[j] - w.feat_mean[j]) / w.feat_std[j];

    tr.z1 = w.b1;
    K().gemv(w.w1.data(), w.h, w.d, tr.features.data(), 1.0, tr.z1.data());
    tr.hidden.resize(w.h);
    K().relu(tr.z1.data(), tr.hidden.data(), w.h);
    tr.u_hat = w.b2;
    K().gemv(w.w2.data(), w.o, w.h, tr.hidden.data(), 1.0, tr.u_hat.data());

    tr.gauge = minkowski_gauge(tr.u_hat, rp);
    const double scale = 1.0 / std::max(1.0, tr.gauge.psi);
    tr.u_ind = rp.interior;
    K().axpy(scale, tr.u_hat.data(), tr.u_ind.data(), tr.u_ind.size());
    tr.u_full = part.complete(tr.u_ind, x_stacked);
    tr.rp = rp;
    Vec u = tr.u_full;
    return {std::move(u), std::move(tr)};
}

}  // namespace

std::pair<Vec, ForwardTrace> proxy_forward(const MlpWeights& weights,
                                           const vpp::CompactProblem& cp,
                                           const vpp::InputVector& x,
                                           const vpp::ScenarioSet& scen, double p,
                                           const EqualityPartition& part) {
    const AggregatedFeatures feats = set_aggregate(cp.c_ineq, scen);
    const ReducedPolyhedron rp = reduce_polyhedron(cp, x, feats, p, part);
    return forward_impl(weights, raw_features(x, feats), rp, part, x.stacked());
}

std::pair<Vec, ForwardTrace> proxy_forward_cached(const MlpWeights& weights,
                                                  const Vec& raw, const ReducedPolyhedron& rp,
                                                  const EqualityPartition& part,
                                                  const Vec& x_stacked) {
    return forward_impl(weights, raw, rp, part, x_stacked);
}

void Gradients::accumulate(const Gradients& other) {
    K().axpy(1.0, other.w1.data(), w1.data(), w1.storage().size());
    K().axpy(1.0, other.b1.data(), b1.data(), b1.size());
    K().axpy(1.0, other.w2.data(), w2.data(), w2.storage().size());
    K().axpy(1.0, other.b2.data(), b2.data(), b2.size());
}

void Gradients::scale(double a) {
    K().scale(a, w1.data(), w1.storage().size());
    K().scale(a, b1.data(), b1.size());
    K().scale(a, w2.data(), w2.storage().size());
    K().scale(a, b2.data(), b2.size());
}

Gradients proxy_backward(const MlpWeights& weights, const EqualityPartition& part,
                         const ForwardTrace& trace, const Vec& target) {
    const std::size_t nv = trace.u_full.size();
    Vec g_full(nv);
    for (std::size_t j = 0; j < nv; ++j) g_full[j] = 2.0 * (trace.u_full[j] - target[j]);

    // through the completion: g_ind = map_u' g_dep + g at independent slots
    Vec g_dep(part.dep_idx.size());
    for (std::size_t k = 0; k < part.dep_idx.size(); ++k) g_dep[k] = g_full[part.dep_idx[k]];
    Vec g_ind(part.n_ind(), 0.0);
    K().gemv_t(part.map_u.data(), part.map_u.rows(), part.map_u.cols(), g_dep.data(), 0.0,
               g_ind.data());
    for (std::size_t k = 0; k < part.ind_idx.size(); ++k) g_ind[k] += g_full[part.ind_idx[k]];

    // through the gauge map
    Vec g_hat;
    if (trace.gauge.psi <= 1.0) {
        g_hat = g_ind;
    } else {
        const auto row = static_cast<std::size_t>(trace.gauge.active_row);
        const double* a = trace.rp.a.row(row);
        const double d = trace.rp.margins[row];
        const double s = K().dot(a, trace.u_hat.data(), trace.u_hat.size());
        const double u_dot_g = K().dot(trace.u_hat.data(), g_ind.data(), g_ind.size());
        g_hat = scaled(g_ind, d / s);
        K().axpy(-(d / (s * s)) * u_dot_g, a, g_hat.data(), g_hat.size());
    }

    // through the MLP
    Gradients g;
    g.b2 = g_hat;
    g.w2 = Matrix(weights.o, weights.h);
    for (std::size_t i = 0; i < weights.o; ++i)
        K().axpy(g_hat[i], trace.hidden.data(), g.w2.row(i), weights.h);
    Vec g_hidden(weights.h, 0.0);
    K().gemv_t(weights.w2.data(), weights.o, weights.h, g_hat.data(), 0.0, g_hidden.data());
    Vec g_z1(weights.h);
    K().relu_mask_mul(trace.z1.data(), g_hidden.data(), g_z1.data(), weights.h);
    g.b1 = g_z1;
    g.w1 = Matrix(weights.h, weights.d);
    for (std::size_t i = 0; i < weights.h; ++i) {
        if (g_z1[i] != 0.0) K().axpy(g_z1[i], trace.features.data(), g.w1.row(i), weights.d);
    }
    return g;
}

namespace {

double point_loss(const Vec& u_full, const Vec& target) {
    double l = 0.0;
    for (std::size_t j = 0; j < u_full.size(); ++j) {
        const double dlt = u_full[j] - target[j];
        l += dlt * dlt;
    }
    return l;
}

struct AdamState {
    Gradients m, v;
    std::size_t t = 0;
};

void adam_step_buffer(double* w, const double* g, double* m, double* v, std::size_t n,
                      const TrainConfig& cfg, double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        w[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
}

void adam_step(MlpWeights& w, const Gradients& g, AdamState& st, const TrainConfig& cfg) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    adam_step_buffer(w.w1.data(), g.w1.data(), st.m.w1.data(), st.v.w1.data(),
                     w.w1.storage().size(), cfg, bc1, bc2);
    adam_step_buffer(w.b1.data(), g.b1.data(), st.m.b1.data(), st.v.b1.data(), w.b1.size(),
                     cfg, bc1, bc2);
    adam_step_buffer(w.w2.data(), g.w2.data(), st.m.w2.data(), st.v.w2.data(),
                     w.w2.storage().size(), cfg, bc1, bc2);
    adam_step_buffer(w.b2.data(), g.b2.data(), st.m.b2.data(), st.v.b2.data(), w.b2.size(),
                     cfg, bc1, bc2);
}

Gradients zero_gradients(std::size_t d, std::size_t h, std::size_t o) {
    Gradients g;
    g.w1 = Matrix(h, d);
    g.b1.assign(h, 0.0);
    g.w2 = Matrix(o, h);
    g.b2.assign(o, 0.0);
    return g;
}

}  // namespace

TrainResult train(const vpp::CompactProblem& cp, const EqualityPartition& part,
                  const std::vector<TrainPoint>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    // Cache the per-point geometry: it depends on (x, scen, p) only.
    struct Cached {
        Vec raw;
        Vec x_stacked;
        ReducedPolyhedron rp;
        const Vec* target;
    };
    std::vector<Cached> cache;
    cache.reserve(dataset.size());
    for (const TrainPoint& pt : dataset) {
        const AggregatedFeatures feats = set_aggregate(cp.c_ineq, pt.scen);
        Cached c;
        c.raw = raw_features(pt.x, feats);
        c.x_stacked = pt.x.stacked();
        c.rp = reduce_polyhedron(cp, pt.x, feats, cfg.p, part);
        c.target = &pt.target;
        cache.push_back(std::move(c));
    }

    const std::size_t d = cache.front().raw.size();
    const std::size_t o = part.n_ind();
    MlpWeights w = init_weights(d, cfg.hidden, o, cfg.seed);
    w.p = cfg.p;

    // validation split: every 10th point (by dataset order) when there is room
    std::vector<std::size_t> train_idx, val_idx;
    const std::size_t val_stride =
        cfg.val_fraction > 0.0
            ? std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(1.0 / cfg.val_fraction)))
            : 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (val_stride > 0 && dataset.size() >= val_stride && i % val_stride == val_stride - 1)
            val_idx.push_back(i);
        else
            train_idx.push_back(i);
    }

    // feature normalization from the training split
    w.feat_mean.assign(d, 0.0);
    for (std::size_t i : train_idx) axpy(1.0, cache[i].raw, w.feat_mean);
    for (double& v : w.feat_mean) v /= static_cast<double>(train_idx.size());
    w.feat_std.assign(d, 0.0);
    for (std::size_t i : train_idx)
        for (std::size_t j = 0; j < d; ++j) {
            const double dlt = cache[i].raw[j] - w.feat_mean[j];
            w.feat_std[j] += dlt * dlt;
        }
    for (double& v : w.feat_std)
        v = std::max(std::sqrt(v / static_cast<double>(train_idx.size())), 1e-8);

    AdamState adam;
    adam.m = zero_gradients(d, cfg.hidden, o);
    adam.v = zero_gradients(d, cfg.hidden, o);

    Rng rng(cfg.seed, 0xBA7C4);
    TrainResult result;
    MlpWeights best = w;
    double best_val = std::numeric_limits<double>::infinity();

    const auto eval_loss = [&](const std::vector<std::size_t>& idx) {
        if (idx.empty()) return 0.0;
        double total = 0.0;
        for (std::size_t i : idx) {
            const auto [u, tr] =
                proxy_forward_cached(w, cache[i].raw, cache[i].rp, part, cache[i].x_stacked);
            total += point_loss(u, *cache[i].target);
        }
        return total / static_cast<double>(idx.size());
    };

    std::vector<std::size_t> order = train_idx;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Gradients batch = zero_gradients(d, cfg.hidden, o);
            for (std::size_t k = start; k < stop; ++k) {
                const Cached& c = cache[order[k]];
                const auto [u, tr] = proxy_forward_cached(w, c.raw, c.rp, part, c.x_stacked);
                epoch_loss += point_loss(u, *c.target);
                const Gradients g = proxy_backward(w, part, tr, *c.target);
                batch.accumulate(g);
            }
            batch.scale(1.0 / static_cast<double>(stop - start));
            adam_step(w, batch, adam, cfg);
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train: non-finite loss at epoch " +
                                     std::to_string(epoch));
        const double val_loss = val_idx.empty() ? epoch_loss : eval_loss(val_idx);
        result.log.push_back({epoch, epoch_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best = w;
        }
    }
    result.weights = std::move(best);
    return result;
}

std::size_t pick_safety_index(const std::vector<double>& grid,
                              const std::vector<double>& out_violation,
                              const std::vector<double>& mean_objective, double epsilon) {
    std::size_t best = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (out_violation[i] > epsilon) continue;
        if (best == grid.size() || grid[i] < grid[best] ||
            (grid[i] == grid[best] && mean_objective[i] < mean_objective[best]))
            best = i;
    }
    return best;
}

SelectionReport select_safety_parameter(const vpp::CompactProblem& cp,
                                        const EqualityPartition& part,
                                        const std::vector<SelectPoint>& points,
                                        const std::vector<double>& p_grid, double epsilon,
                                        const TrainConfig& cfg, const qp::Settings& solver) {
    if (p_grid.empty()) throw std::invalid_argument("select_safety_parameter: empty grid");
    if (points.empty()) throw std::invalid_argument("select_safety_parameter: no data");

    SelectionReport report;
    std::vector<MlpWeights> weights_per_p;
    std::vector<double> viols, objs;

    const auto evaluate_p = [&](double p) -> std::pair<SweepRow, MlpWeights> {
        // targets via the polyhedron reformulation at this p
        std::vector<TrainPoint> train_pts;
        train_pts.reserve(points.size());
        for (const SelectPoint& pt : points) {
            reform::MethodParams params;
            params.p = p;
            params.solver = solver;
            const reform::MethodResult res =
                reform::solve_method(reform::Method::pr, cp, pt.x, pt.in_scen, params);
            if (res.status != qp::Status::optimal) continue;
            train_pts.push_back({pt.x, pt.in_scen, res.u});
        }
        if (train_pts.size() < std::max<std::size_t>(1, points.size() / 2))
            return {{p, 0.0, 1.0, 1.0, 0.0}, MlpWeights{}};  // p unusable on this data

        TrainConfig cfgp = cfg;
        cfgp.p = p;
        TrainResult tr = train(cp, part, train_pts, cfgp);

        double in_viol = 0.0, out_viol = 0.0, obj = 0.0;
        for (const SelectPoint& pt : points) {
            const auto [u, trace] = proxy_forward(tr.weights, cp, pt.x, pt.in_scen, p, part);
            obj += cp.objective(u);
            std::size_t bad_in = 0;
            for (std::size_t k = 0; k < pt.in_scen.n_scen(); ++k) {
                Vec eps(pt.in_scen.eps.row(k), pt.in_scen.eps.row(k) + cp.n);
                if (vpp::check_joint_violation(cp, u, pt.x, eps, kViolationTol)) ++bad_in;
            }
            in_viol += static_cast<double>(bad_in) / static_cast<double>(pt.in_scen.n_scen());
            std::size_t bad_out = 0;
            for (std::size_t k = 0; k < pt.out_scen.n_scen(); ++k) {
                Vec eps(pt.out_scen.eps.row(k), pt.out_scen.eps.row(k) + cp.n);
                if (vpp::check_joint_violation(cp, u, pt.x, eps, kViolationTol)) ++bad_out;
            }
            out_viol +=
                static_cast<double>(bad_out) / static_cast<double>(pt.out_scen.n_scen());
        }
        const double np = static_cast<double>(points.size());
        SweepRow row{p, obj / np, in_viol / np, out_viol / np,
                     tr.log.empty() ? 0.0 : tr.log.back().train_loss};
        return {row, std::move(tr.weights)};
    };

    for (double p : p_grid) {
        auto [row, wts] = evaluate_p(p);
        report.rows.push_back(row);
        weights_per_p.push_back(std::move(wts));
        viols.push_back(row.out_violation);
        objs.push_back(row.mean_objective);
    }

    const std::size_t pick = pick_safety_index(p_grid, viols, objs, epsilon);
    if (pick < p_grid.size()) {
        report.p_star = p_grid[pick];
        report.qualified = true;
        report.best_weights = weights_per_p[pick];
    } else {
        report.p_star = 1.0;
        report.qualified = false;
        const auto it = std::find(p_grid.begin(), p_grid.end(), 1.0);
        if (it != p_grid.end()) {
            report.best_weights = weights_per_p[static_cast<std::size_t>(it - p_grid.begin())];
        } else {
            auto [row, wts] = evaluate_p(1.0);
            report.rows.push_back(row);
            report.best_weights = std::move(wts);
        }
    }
    return report;
}

}  // namespace ccd::proxy
