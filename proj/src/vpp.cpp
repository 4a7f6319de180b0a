#include "ccd/vpp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ccd/assets.hpp"
#include "ccd/qp.hpp"
#include "ccd/rng.hpp"

namespace ccd::vpp {

using nlohmann::json;

namespace {

constexpr double kAlphaTol = 1e-12;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void VppInstance::validate() const {
    require(!prosumers.empty(), "instance: empty fleet");
    double alpha_sum = 0.0;
    for (std::size_t i = 0; i < prosumers.size(); ++i) {
        const Prosumer& p = prosumers[i];
        const std::string tag = "prosumer " + std::to_string(i) + ": ";
        require(p.pg_min <= p.pg_max, tag + "pg_min > pg_max");
        require(p.pl_min <= p.pl_max, tag + "pl_min > pl_max");
        require(p.po_min <= p.po_max, tag + "po_min > po_max");
        require(p.beta_g1 > 0.0 && p.beta_l1 > 0.0, tag + "quadratic cost must be > 0");
        require(p.alpha_g >= 0.0 && p.alpha_l >= 0.0, tag + "negative participation factor");
        alpha_sum += p.alpha_g + p.alpha_l;
    }
    require(std::fabs(alpha_sum - 1.0) <= kAlphaTol,
            "participation factors do not sum to 1");
}

Vec InputVector::stacked() const {
    Vec x;
    x.reserve(1 + p_ng.size() + p_il.size());
    x.push_back(p_sch);
    x.insert(x.end(), p_ng.begin(), p_ng.end());
    x.insert(x.end(), p_il.begin(), p_il.end());
    return x;
}

Vec CompactProblem::ineq_residuals(const Vec& u, const InputVector& x, const Vec& eps) const {
    Vec r = b_ineq_vec;
    const auto& ops = kernels::active_ops();
    ops.gemv(a_ineq.data(), a_ineq.rows(), a_ineq.cols(), u.data(), 1.0, r.data());
    const Vec xs = x.stacked();
    ops.gemv(b_ineq_mat.data(), b_ineq_mat.rows(), b_ineq_mat.cols(), xs.data(), 1.0,
             r.data());
    if (!eps.empty())
        ops.gemv(c_ineq.data(), c_ineq.rows(), c_ineq.cols(), eps.data(), 1.0, r.data());
    return r;
}

double CompactProblem::eq_residual(const Vec& u, const InputVector& x) const {
    const Vec xs = x.stacked();
    double r = 0.0;
    r += kernels::active_ops().dot(a_eq.row(0), u.data(), u.size());
    r += kernels::active_ops().dot(b_eq.row(0), xs.data(), xs.size());
    return r;
}

double CompactProblem::objective(const Vec& u) const {
    double f = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j)
        f += 0.5 * p_obj_diag[j] * u[j] * u[j] + q_obj[j] * u[j];
    return f;
}

std::pair<Vec, Vec> participation_factors(const VppInstance& instance) {
    double total = 0.0;
    for (const Prosumer& p : instance.prosumers) total += p.pg_max + p.pl_max;
    if (!(total > 0.0)) throw std::invalid_argument("participation_factors: zero total capacity");
    Vec alpha_g(instance.size()), alpha_l(instance.size());
    for (std::size_t i = 0; i < instance.size(); ++i) {
        alpha_g[i] = instance.prosumers[i].pg_max / total;
        alpha_l[i] = instance.prosumers[i].pl_max / total;
    }
    return {alpha_g, alpha_l};
}

namespace {

double sample_in(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

// Sample a [lo, hi] pair inside `r`, keeping at least half the span between
// them so the boxes stay usable.
std::pair<double, double> sample_bounds(Rng& rng, const Range& r) {
    const double span = r.hi - r.lo;
    const double lo = r.lo + rng.uniform(0.0, 0.25) * span;
    const double hi = r.hi - rng.uniform(0.0, 0.25) * span;
    return {lo, hi};
}

// Flexible-load bounds derived from one of the appendix asset models, then
// clamped into the configured range. Kind cycles with the prosumer index.
std::pair<double, double> flexible_bounds(Rng& rng, std::size_t i, const Range& pl) {
    double lo = 0.0, hi = 0.0;
    switch (i % 3) {
        case 0: {  // HVAC comfort band
            const double t_prev = rng.uniform(20.0, 26.0);
            const double t_out = rng.uniform(28.0, 35.0);
            const double inertia = rng.uniform(0.3, 0.7);
            const double cop = rng.uniform(2.5, 3.5);
            const double conductivity = rng.uniform(4.0, 8.0);
            const auto band = assets::hvac_power_range(t_prev, t_out, 21.0, 24.0, inertia,
                                                       cop, conductivity, 60.0);
            lo = band.lo;
            hi = band.hi;
            break;
        }
        case 1: {  // storage charging headroom
            const double capacity = rng.uniform(50.0, 200.0);
            const double soc = rng.uniform(0.2, 0.6);
            const double eta_c = rng.uniform(0.90, 0.98);
            const double p_max = rng.uniform(10.0, 30.0);
            const auto band = assets::ess_charge_range(soc, 0.9, eta_c, 1.0, capacity, p_max);
            lo = band.lo;
            hi = band.hi;
            // the step formula must confirm the upper end respects the SoC cap
            if (assets::ess_soc_step(soc, band.hi, 0.0, eta_c, 0.95, 1.0, capacity) >
                0.9 + 1e-9)
                hi = band.lo;
            break;
        }
        default: {  // PEV charging window with a single-step energy need
            const double p_min = rng.uniform(5.0, 12.0);
            const double p_max = rng.uniform(15.0, 30.0);
            const double e_req = rng.uniform(8.0, 14.0);
            lo = std::max(p_min, e_req);
            hi = p_max;
            if (!assets::pev_energy_feasible({lo}, p_min, p_max, e_req)) hi = lo;
            break;
        }
    }
    lo = std::clamp(lo, pl.lo, pl.hi);
    hi = std::clamp(hi, pl.lo, pl.hi);
    if (lo > hi - 1e-9) return sample_bounds(rng, pl);  // degenerate band: fall back
    return {lo, hi};
}

}  // namespace

VppInstance generate_instance(const GenConfig& config, std::uint64_t seed) {
    require(config.n_prosumers > 0, "generate_instance: empty fleet");
    const Range* ranges[] = {&config.pg,      &config.pl,      &config.po,
                             &config.beta_g1, &config.beta_g2, &config.beta_l1,
                             &config.beta_l2, &config.wind_kw, &config.pv_area_m2,
                             &config.pv_efficiency, &config.swept_area_m2,
                             &config.power_coeff};
    for (const Range* r : ranges)
        require(r->lo <= r->hi, "generate_instance: invalid (reversed) config range");

    Rng rng(seed);
    VppInstance instance;
    instance.seed = seed;
    instance.pv_cap_kw = config.pv_cap_kw;
    instance.wind_lo_kw = config.wind_kw.lo;
    instance.wind_hi_kw = config.wind_kw.hi;
    instance.prosumers.resize(config.n_prosumers);

    for (std::size_t i = 0; i < config.n_prosumers; ++i) {
        Prosumer& p = instance.prosumers[i];
        std::tie(p.pg_min, p.pg_max) = sample_bounds(rng, config.pg);
        std::tie(p.pl_min, p.pl_max) = flexible_bounds(rng, i, config.pl);
        std::tie(p.po_min, p.po_max) = sample_bounds(rng, config.po);
        p.beta_g1 = sample_in(rng, config.beta_g1);
        p.beta_g2 = sample_in(rng, config.beta_g2);
        p.beta_l1 = sample_in(rng, config.beta_l1);
        p.beta_l2 = sample_in(rng, config.beta_l2);
        p.source_kind = (i % 2 == 0) ? SourceKind::pv : SourceKind::wind;
        if (p.source_kind == SourceKind::pv) {
            p.asset.pv_area_m2 = sample_in(rng, config.pv_area_m2);
            p.asset.pv_efficiency = sample_in(rng, config.pv_efficiency);
        } else {
            p.asset.air_density = config.air_density;
            p.asset.swept_area_m2 = sample_in(rng, config.swept_area_m2);
            p.asset.power_coeff = sample_in(rng, config.power_coeff);
        }
    }

    const auto [alpha_g, alpha_l] = participation_factors(instance);
    for (std::size_t i = 0; i < instance.size(); ++i) {
        instance.prosumers[i].alpha_g = alpha_g[i];
        instance.prosumers[i].alpha_l = alpha_l[i];
    }
    instance.validate();
    return instance;
}

namespace {

// Per-prosumer output reachable under the box bounds, given the input draws.
struct OutputInterval {
    double lo, hi;
};

OutputInterval reachable_output(const Prosumer& p, double png, double pil) {
    return {p.pg_min - p.pl_max + png - pil, p.pg_max - p.pl_min + png - pil};
}

}  // namespace

InputVector sample_input(const VppInstance& instance, const ProfileConfig& profile,
                         std::uint64_t seed) {
    instance.validate();
    const std::size_t n = instance.size();
    Rng rng(seed);

    for (int attempt = 0; attempt < profile.max_retries; ++attempt) {
        InputVector x;
        x.p_ng.resize(n);
        x.p_il.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Prosumer& p = instance.prosumers[i];
            if (p.source_kind == SourceKind::pv) {
                const double irr = sample_in(rng, profile.irradiance_kw_m2);
                x.p_ng[i] = assets::pv_power(irr, p.asset.pv_area_m2, p.asset.pv_efficiency,
                                             instance.pv_cap_kw);
            } else {
                const double v = sample_in(rng, profile.wind_speed_m_s);
                const double raw = assets::wind_power(p.asset.air_density,
                                                      p.asset.swept_area_m2,
                                                      p.asset.power_coeff, v);
                x.p_ng[i] = std::clamp(raw, instance.wind_lo_kw, instance.wind_hi_kw);
            }
            x.p_il[i] = profile.il_base_kw *
                        (1.0 + rng.uniform(-profile.il_fluctuation, profile.il_fluctuation));
        }

        // Draw an interior dispatch and read the schedule off its total output.
        bool ok = true;
        double p_sch = 0.0;
        for (std::size_t i = 0; i < n && ok; ++i) {
            const Prosumer& p = instance.prosumers[i];
            const double mg = profile.dispatch_margin * (p.pg_max - p.pg_min);
            const double ml = profile.dispatch_margin * (p.pl_max - p.pl_min);
            double pg = rng.uniform(p.pg_min + mg, p.pg_max - mg);
            double pl = rng.uniform(p.pl_min + ml, p.pl_max - ml);
            double po = pg - pl + x.p_ng[i] - x.p_il[i];

            const OutputInterval reach = reachable_output(p, x.p_ng[i], x.p_il[i]);
            const double mo = profile.dispatch_margin * (p.po_max - p.po_min);
            const double lo = std::max(reach.lo, p.po_min + mo);
            const double hi = std::min(reach.hi, p.po_max - mo);
            if (lo > hi) {
                ok = false;
                break;
            }
            po = std::clamp(po, lo, hi);
            p_sch += po;
        }
        if (!ok) continue;
        x.p_sch = p_sch;

        // One deterministic solve confirms the drawn schedule is dispatchable.
        const CompactProblem det = assemble_compact(instance, false);
        qp::Problem feas;
        feas.n = det.n_vars();
        feas.p = Matrix(feas.n, feas.n);
        for (std::size_t j = 0; j < feas.n; ++j) feas.p(j, j) = det.p_obj_diag[j];
        feas.q = det.q_obj;
        feas.g = CsrMatrix::from_dense(det.a_ineq);
        const Vec xs = x.stacked();
        feas.h.assign(det.n_rows(), 0.0);
        kernels::active_ops().gemv(det.b_ineq_mat.data(), det.b_ineq_mat.rows(),
                                   det.b_ineq_mat.cols(), xs.data(), 0.0, feas.h.data());
        for (std::size_t r = 0; r < det.n_rows(); ++r)
            feas.h[r] = -(feas.h[r] + det.b_ineq_vec[r]);
        feas.e = CsrMatrix::from_dense(det.a_eq);
        feas.d = {-kernels::active_ops().dot(det.b_eq.row(0), xs.data(), xs.size())};
        const qp::Solution sol = qp::solve(feas);
        if (sol.status == qp::Status::optimal) return x;
    }
    throw std::runtime_error("sample_input: infeasible schedule draw");
}

ScenarioSet sample_scenarios(const VppInstance& instance, const InputVector& x,
                             std::size_t n_scen, std::uint64_t seed) {
    require(n_scen >= 1, "sample_scenarios: n_scen must be >= 1");
    const std::size_t n = instance.size();
    require(x.p_ng.size() == n, "sample_scenarios: input size mismatch");
    ScenarioSet scen;
    scen.seed = seed;
    scen.eps = Matrix(n_scen, n);
    Rng rng(seed);
    for (std::size_t k = 0; k < n_scen; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const double png = x.p_ng[i];
            const double cap = instance.prosumers[i].source_kind == SourceKind::pv
                                   ? instance.pv_cap_kw
                                   : instance.wind_hi_kw;
            const double draw = rng.normal(0.0, 0.1 * png);
            scen.eps(k, i) = std::clamp(draw, -png, cap - png);
        }
    }
    return scen;
}

CompactProblem assemble_compact(const VppInstance& instance, bool with_recourse) {
    instance.validate();
    const std::size_t n = instance.size();
    CompactProblem cp;
    cp.n = n;
    cp.with_recourse = with_recourse;
    cp.a_eq = Matrix(1, 2 * n);
    cp.b_eq = Matrix(1, 2 * n + 1);
    cp.a_ineq = Matrix(6 * n, 2 * n);
    cp.b_ineq_mat = Matrix(6 * n, 2 * n + 1);
    cp.c_ineq = Matrix(6 * n, n);
    cp.b_ineq_vec.assign(6 * n, 0.0);
    cp.p_obj_diag.resize(2 * n);
    cp.q_obj.resize(2 * n);

    // Equality: sum(P_G) - sum(P_L) + sum(P_NG) - sum(P_IL) - P_Sch = 0
    for (std::size_t i = 0; i < n; ++i) {
        cp.a_eq(0, i) = 1.0;
        cp.a_eq(0, n + i) = -1.0;
        cp.b_eq(0, 1 + i) = 1.0;
        cp.b_eq(0, 1 + n + i) = -1.0;
    }
    cp.b_eq(0, 0) = -1.0;

    for (std::size_t i = 0; i < n; ++i) {
        const Prosumer& p = instance.prosumers[i];
        const std::size_t gu = i;           // G-upper block
        const std::size_t gl = n + i;       // G-lower
        const std::size_t lu = 2 * n + i;   // L-upper
        const std::size_t ll = 3 * n + i;   // L-lower
        const std::size_t ou = 4 * n + i;   // O-upper
        const std::size_t ol = 5 * n + i;   // O-lower

        cp.a_ineq(gu, i) = 1.0;
        cp.b_ineq_vec[gu] = -p.pg_max;
        cp.a_ineq(gl, i) = -1.0;
        cp.b_ineq_vec[gl] = p.pg_min;
        cp.a_ineq(lu, n + i) = 1.0;
        cp.b_ineq_vec[lu] = -p.pl_max;
        cp.a_ineq(ll, n + i) = -1.0;
        cp.b_ineq_vec[ll] = p.pl_min;

        // Output rows use P_o = (P_G - aG*T) - (P_L + aL*T) + (P_NG + eps) - P_IL
        // with T the total deviation (single forecast term; see instance metadata).
        cp.a_ineq(ou, i) = 1.0;
        cp.a_ineq(ou, n + i) = -1.0;
        cp.b_ineq_mat(ou, 1 + i) = 1.0;
        cp.b_ineq_mat(ou, 1 + n + i) = -1.0;
        cp.b_ineq_vec[ou] = -p.po_max;

        cp.a_ineq(ol, i) = -1.0;
        cp.a_ineq(ol, n + i) = 1.0;
        cp.b_ineq_mat(ol, 1 + i) = -1.0;
        cp.b_ineq_mat(ol, 1 + n + i) = 1.0;
        cp.b_ineq_vec[ol] = p.po_min;

        if (with_recourse) {
            for (std::size_t j = 0; j < n; ++j) {
                cp.c_ineq(gu, j) = -p.alpha_g;
                cp.c_ineq(gl, j) = p.alpha_g;
                cp.c_ineq(lu, j) = p.alpha_l;
                cp.c_ineq(ll, j) = -p.alpha_l;
                cp.c_ineq(ou, j) = -(p.alpha_g + p.alpha_l);
                cp.c_ineq(ol, j) = p.alpha_g + p.alpha_l;
            }
            cp.c_ineq(ou, i) += 1.0;
            cp.c_ineq(ol, i) -= 1.0;
        }

        cp.p_obj_diag[i] = 2.0 * p.beta_g1;
        cp.p_obj_diag[n + i] = 2.0 * p.beta_l1;
        cp.q_obj[i] = p.beta_g2;
        cp.q_obj[n + i] = p.beta_l2;
    }
    return cp;
}

bool check_joint_violation(const CompactProblem& problem, const Vec& u,
                           const InputVector& x, const Vec& eps_row, double tol) {
    const Vec r = problem.ineq_residuals(u, x, eps_row);
    for (double v : r)
        if (v > tol) return true;
    return false;
}

std::pair<Vec, Vec> aggregate_scenarios(const Matrix& c_ineq, const ScenarioSet& scen) {
    require(scen.n_scen() >= 1, "aggregate_scenarios: empty scenario set");
    require(scen.eps.cols() == c_ineq.cols(), "aggregate_scenarios: width mismatch");
    const std::size_t nr = c_ineq.rows();
    const auto& ops = kernels::active_ops();
    Vec phi_avg(nr, 0.0), comp(nr, 0.0), phi_max(nr, 0.0), ce(nr, 0.0);
    for (std::size_t k = 0; k < scen.n_scen(); ++k) {
        ops.gemv(c_ineq.data(), nr, c_ineq.cols(), scen.eps.row(k), 0.0, ce.data());
        ops.comp_add(phi_avg.data(), comp.data(), ce.data(), nr);
        if (k == 0) {
            phi_max = ce;
        } else {
            ops.elem_max_update(phi_max.data(), ce.data(), nr);
        }
    }
    for (std::size_t r = 0; r < nr; ++r)
        phi_avg[r] = (phi_avg[r] + comp[r]) / static_cast<double>(scen.n_scen());
    return {phi_avg, phi_max};
}

// --- serialization ----------------------------------------------------------

std::string instance_to_json(const VppInstance& instance) {
    json j;
    j["n_prosumers"] = instance.size();
    j["seed"] = instance.seed;
    j["pv_cap_kw"] = instance.pv_cap_kw;
    j["wind_lo_kw"] = instance.wind_lo_kw;
    j["wind_hi_kw"] = instance.wind_hi_kw;
    j["metadata"]["output_row_convention"] = instance.output_row_convention;
    j["metadata"]["scenario_distribution"] = instance.scenario_distribution;
    json arr = json::array();
    for (const Prosumer& p : instance.prosumers) {
        json e;
        e["pg_min"] = p.pg_min;
        e["pg_max"] = p.pg_max;
        e["pl_min"] = p.pl_min;
        e["pl_max"] = p.pl_max;
        e["po_min"] = p.po_min;
        e["po_max"] = p.po_max;
        e["beta_g1"] = p.beta_g1;
        e["beta_g2"] = p.beta_g2;
        e["beta_l1"] = p.beta_l1;
        e["beta_l2"] = p.beta_l2;
        e["alpha_g"] = p.alpha_g;
        e["alpha_l"] = p.alpha_l;
        e["source_kind"] = p.source_kind == SourceKind::pv ? "pv" : "wind";
        e["asset_params"] = {{"pv_area_m2", p.asset.pv_area_m2},
                             {"pv_efficiency", p.asset.pv_efficiency},
                             {"air_density", p.asset.air_density},
                             {"swept_area_m2", p.asset.swept_area_m2},
                             {"power_coeff", p.asset.power_coeff}};
        arr.push_back(e);
    }
    j["prosumers"] = arr;
    return j.dump(2);
}

VppInstance instance_from_json(const std::string& text) {
    const json j = json::parse(text);
    VppInstance instance;
    instance.seed = j.at("seed").get<std::uint64_t>();
    instance.pv_cap_kw = j.at("pv_cap_kw").get<double>();
    instance.wind_lo_kw = j.at("wind_lo_kw").get<double>();
    instance.wind_hi_kw = j.at("wind_hi_kw").get<double>();
    if (j.contains("metadata")) {
        instance.output_row_convention = j["metadata"].value("output_row_convention", "");
        instance.scenario_distribution = j["metadata"].value("scenario_distribution", "");
    }
    for (const json& e : j.at("prosumers")) {
        Prosumer p;
        p.pg_min = e.at("pg_min").get<double>();
        p.pg_max = e.at("pg_max").get<double>();
        p.pl_min = e.at("pl_min").get<double>();
        p.pl_max = e.at("pl_max").get<double>();
        p.po_min = e.at("po_min").get<double>();
        p.po_max = e.at("po_max").get<double>();
        p.beta_g1 = e.at("beta_g1").get<double>();
        p.beta_g2 = e.at("beta_g2").get<double>();
        p.beta_l1 = e.at("beta_l1").get<double>();
        p.beta_l2 = e.at("beta_l2").get<double>();
        p.alpha_g = e.at("alpha_g").get<double>();
        p.alpha_l = e.at("alpha_l").get<double>();
        p.source_kind = e.at("source_kind").get<std::string>() == "pv" ? SourceKind::pv
                                                                       : SourceKind::wind;
        const json& a = e.at("asset_params");
        p.asset.pv_area_m2 = a.at("pv_area_m2").get<double>();
        p.asset.pv_efficiency = a.at("pv_efficiency").get<double>();
        p.asset.air_density = a.at("air_density").get<double>();
        p.asset.swept_area_m2 = a.at("swept_area_m2").get<double>();
        p.asset.power_coeff = a.at("power_coeff").get<double>();
        instance.prosumers.push_back(p);
    }
    instance.validate();
    return instance;
}

std::string input_to_json(const InputVector& x) {
    json j;
    j["p_sch"] = x.p_sch;
    j["p_ng"] = x.p_ng;
    j["p_il"] = x.p_il;
    return j.dump(2);
}

InputVector input_from_json(const std::string& text) {
    const json j = json::parse(text);
    InputVector x;
    x.p_sch = j.at("p_sch").get<double>();
    x.p_ng = j.at("p_ng").get<Vec>();
    x.p_il = j.at("p_il").get<Vec>();
    return x;
}

std::string scenarios_to_csv(const ScenarioSet& scen) {
    std::string out;
    for (std::size_t k = 0; k < scen.eps.rows(); ++k) {
        for (std::size_t i = 0; i < scen.eps.cols(); ++i) {
            if (i > 0) out += ',';
            out += format_double(scen.eps(k, i));
        }
        out += '\n';
    }
    return out;
}

ScenarioSet scenarios_from_csv(const std::string& text, std::uint64_t seed) {
    std::vector<Vec> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Vec row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("scenarios_from_csv: no rows");
    ScenarioSet scen;
    scen.seed = seed;
    scen.eps = Matrix(rows.size(), rows[0].size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() != rows[0].size())
            throw std::runtime_error("scenarios_from_csv: ragged rows");
        for (std::size_t i = 0; i < rows[k].size(); ++i) scen.eps(k, i) = rows[k][i];
    }
    return scen;
}

}  // namespace ccd::vpp
