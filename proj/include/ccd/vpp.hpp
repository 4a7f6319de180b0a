#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ccd/linalg.hpp"

namespace ccd::vpp {

enum class SourceKind { pv, wind };

// Physical parameters of the prosumer's non-dispatchable source.
struct AssetParams {
    double pv_area_m2 = 0.0;
    double pv_efficiency = 0.0;
    double air_density = 0.0;
    double swept_area_m2 = 0.0;
    double power_coeff = 0.0;
};

struct Prosumer {
    double pg_min = 0.0, pg_max = 0.0;  // dispatchable generator bounds, kW
    double pl_min = 0.0, pl_max = 0.0;  // flexible load bounds, kW
    double po_min = 0.0, po_max = 0.0;  // output (utility) bounds, kW
    double beta_g1 = 0.0, beta_g2 = 0.0;  // generator cost: quad $/kW^2, lin $/kW
    double beta_l1 = 0.0, beta_l2 = 0.0;  // load cost
    double alpha_g = 0.0, alpha_l = 0.0;  // participation factors
    SourceKind source_kind = SourceKind::pv;
    AssetParams asset;
};

struct VppInstance {
    std::vector<Prosumer> prosumers;
    std::uint64_t seed = 0;
    double pv_cap_kw = 50.0;
    double wind_lo_kw = 5.0, wind_hi_kw = 50.0;
    // Provenance notes kept with the instance so the modelling choices that
    // are not forced by the formulation travel with the data.
    std::string output_row_convention =
        "output rows use a single forecast term plus its deviation";
    std::string scenario_distribution = "gaussian, sd = 10% of forecast, clamped to [0, cap]";

    std::size_t size() const { return prosumers.size(); }
    void validate() const;  // throws std::invalid_argument on any broken invariant
};

// x = [P_Sch, P_NG^1..N, P_IL^1..N]
struct InputVector {
    double p_sch = 0.0;
    Vec p_ng;
    Vec p_il;

    Vec stacked() const;  // length 2N+1
};

struct ScenarioSet {
    Matrix eps;  // n_scen x n_prosumers, kW deviations
    std::uint64_t seed = 0;

    std::size_t n_scen() const { return eps.rows(); }
};

// Compact matrix form. Variable order u = [P_G^1..P_G^N, P_L^1..P_L^N];
// inequality rows are the six blocks [G-upper; G-lower; L-upper; L-lower;
// O-upper; O-lower], each indexed by prosumer. The objective matrix is
// diagonal and stored as its diagonal (entries 2*beta_1 so that
// 0.5 u'Pu + q'u reproduces the quadratic utility sum).
struct CompactProblem {
    std::size_t n = 0;   // prosumers
    Matrix a_eq;         // 1 x 2N
    Matrix b_eq;         // 1 x (2N+1)
    Matrix a_ineq;       // 6N x 2N
    Matrix b_ineq_mat;   // 6N x (2N+1)
    Matrix c_ineq;       // 6N x N
    Vec b_ineq_vec;      // 6N
    Vec p_obj_diag;      // 2N, all > 0
    Vec q_obj;           // 2N
    bool with_recourse = true;

    std::size_t n_rows() const { return 6 * n; }
    std::size_t n_vars() const { return 2 * n; }

    // A_ineq u + B_ineq x + C_ineq eps + b_ineq (eps may be empty for the
    // deterministic evaluation)
    Vec ineq_residuals(const Vec& u, const InputVector& x, const Vec& eps) const;
    double eq_residual(const Vec& u, const InputVector& x) const;
    double objective(const Vec& u) const;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct GenConfig {
    std::size_t n_prosumers = 10;
    Range pg{0.0, 80.0};
    Range pl{10.0, 25.0};
    Range po{-100.0, 100.0};
    Range beta_g1{0.01, 0.1}, beta_g2{1.0, 5.0};
    Range beta_l1{0.01, 0.1}, beta_l2{1.0, 5.0};
    double pv_cap_kw = 50.0;
    Range wind_kw{5.0, 50.0};
    Range pv_area_m2{150.0, 350.0};
    Range pv_efficiency{0.15, 0.22};
    double air_density = 1.225;
    Range swept_area_m2{80.0, 150.0};
    Range power_coeff{0.35, 0.45};
};

struct ProfileConfig {
    Range irradiance_kw_m2{0.0, 1.0};
    Range wind_speed_m_s{3.0, 11.0};
    double il_base_kw = 25.0;
    double il_fluctuation = 0.10;
    double dispatch_margin = 0.10;  // interior margin fraction for the schedule draw
    int max_retries = 20;
};

// --- operations -------------------------------------------------------------

// alpha_g[i] = pg_max[i] / sum_j(pg_max[j] + pl_max[j]), likewise alpha_l.
std::pair<Vec, Vec> participation_factors(const VppInstance& instance);

VppInstance generate_instance(const GenConfig& config, std::uint64_t seed);

InputVector sample_input(const VppInstance& instance, const ProfileConfig& profile,
                         std::uint64_t seed);

ScenarioSet sample_scenarios(const VppInstance& instance, const InputVector& x,
                             std::size_t n_scen, std::uint64_t seed);

CompactProblem assemble_compact(const VppInstance& instance, bool with_recourse = true);

// Joint semantics: one violated row fails the whole scenario.
bool check_joint_violation(const CompactProblem& problem, const Vec& u,
                           const InputVector& x, const Vec& eps_row, double tol);

// Row-wise mean and max of C_ineq * eps^k over the sample set; the mean uses
// compensated summation so any scenario ordering yields the same result.
std::pair<Vec, Vec> aggregate_scenarios(const Matrix& c_ineq, const ScenarioSet& scen);

// --- serialization ----------------------------------------------------------

std::string instance_to_json(const VppInstance& instance);
VppInstance instance_from_json(const std::string& text);
std::string input_to_json(const InputVector& x);
InputVector input_from_json(const std::string& text);
std::string scenarios_to_csv(const ScenarioSet& scen);
ScenarioSet scenarios_from_csv(const std::string& text, std::uint64_t seed);

}  // namespace ccd::vpp
