#pragma once

#include <cstddef>
#include <string>

#include "ccd/qp.hpp"
#include "ccd/vpp.hpp"

namespace ccd::reform {

enum class Method { sa, cvar, ro, pr };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct MomentSummary {
    Vec eps_avg;
    Vec eps_std;
};

// Per-component mean and (population) standard deviation of the sample set.
MomentSummary moments(const vpp::ScenarioSet& scen);

// How the row-wise robust margin ||C_r * eps_std|| is read: elementwise
// (weight each component, then take the 2-norm) or the literal scalar
// product's absolute value.
enum class RobustNorm { elementwise, scalar };

// u only; one 6N inequality block per scenario.
qp::Problem build_scenario_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                              const vpp::ScenarioSet& scen);

// variables [u, beta^(1..K), beta0]
qp::Problem build_cvar_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                          const vpp::ScenarioSet& scen, double epsilon);

qp::Problem build_robust_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                            const MomentSummary& mom, double s, double epsilon,
                            RobustNorm norm = RobustNorm::elementwise);

// 6N rows A u + B x + p*phi_max + (1-p)*phi_avg + b <= 0.
qp::Problem build_polyhedron_qp(const vpp::CompactProblem& cp, const vpp::InputVector& x,
                                const Vec& phi_avg, const Vec& phi_max, double p);

struct MethodParams {
    double epsilon = 0.05;
    double s = 1.0;   // robust safety parameter
    double p = 0.68;  // polyhedron safety parameter
    RobustNorm robust_norm = RobustNorm::elementwise;
    qp::Settings solver;
};

struct MethodResult {
    Vec u;  // 2N block only (CVaR auxiliaries dropped)
    double objective = 0.0;
    double build_time_s = 0.0;
    double solve_time_s = 0.0;
    qp::Status status = qp::Status::max_iter;
    Method method = Method::sa;
    double parameter = 0.0;  // s or p where applicable, else 0
};

MethodResult solve_method(Method method, const vpp::CompactProblem& cp,
                          const vpp::InputVector& x, const vpp::ScenarioSet& scen,
                          const MethodParams& params);

}  // namespace ccd::reform
