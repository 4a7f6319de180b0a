#pragma once

#include <cstddef>
#include <string>

#include "ccd/linalg.hpp"

namespace ccd::qp {

// min 0.5 u'Pu + q'u  s.t.  G u <= h,  E u = d
struct Problem {
    std::size_t n = 0;
    Matrix p;      // n x n, symmetric PSD
    Vec q;         // n
    CsrMatrix g;   // m x n
    Vec h;         // m
    CsrMatrix e;   // me x n
    Vec d;         // me

    std::size_t m() const { return g.rows; }
    std::size_t me() const { return e.rows; }
    void validate() const;  // throws on asymmetry/dimension mismatch
};

struct Settings {
    double eps_abs = 1e-6;
    double eps_rel = 1e-6;
    double eps_infeas = 1e-8;
    std::size_t max_iter = 50000;
    double sigma = 1e-6;
    double alpha = 1.6;       // relaxation
    double rho0 = 0.1;
    double rho_eq_scale = 1e3;
    bool adaptive_rho = true;
    std::size_t adaptive_rho_interval = 2000;
    bool scaling = true;
    std::size_t ruiz_iters = 10;
    std::size_t check_interval = 25;
    bool polish = true;
    double polish_delta = 1e-9;
    std::size_t polish_refine_iters = 3;
};

enum class Status { optimal, max_iter, primal_infeasible, dual_infeasible };

const char* status_name(Status s);

struct Solution {
    Vec u;
    double objective = 0.0;
    Status status = Status::max_iter;
    std::size_t iterations = 0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    Vec y_ineq;  // multipliers for G u <= h (>= 0 at an optimum)
    Vec y_eq;    // multipliers for E u = d
    bool polished = false;
};

// Operator-splitting solve with residual-balancing penalty updates and an
// optional active-set polish pass. Equalities are handled internally as
// two-sided rows. Infeasibility is reported through the status, never thrown.
Solution solve(const Problem& problem, const Settings& settings = {});

struct ChebyshevResult {
    Vec center;
    double radius = 0.0;
};

// Largest inscribed ball of {u : G u <= h}, via max r s.t. G u + r*||G_r|| <= h
// with a tiny quadratic regularization for uniqueness. Throws
// std::runtime_error("empty or degenerate polytope") when the radius is not
// positive beyond tolerance.
ChebyshevResult chebyshev_center(const Matrix& g_mat, const Vec& h_vec,
                                 const Settings& settings = {});

// Debug dump/load; matrices dense row-major.
std::string dump_json(const Problem& problem);
Problem load_json(const std::string& text);

}  // namespace ccd::qp
