#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ccd/qp.hpp"
#include "ccd/vpp.hpp"

namespace ccd::proxy {

struct AggregatedFeatures {
    Vec phi_avg;  // 6N
    Vec phi_max;  // 6N
};

// Permutation-invariant pooling of C_ineq * eps^k over the sample set.
AggregatedFeatures set_aggregate(const Matrix& c_ineq, const vpp::ScenarioSet& scen);

// Split u into one dependent block (eliminated through the equality row) and
// the independent remainder. map_u/map_x reconstruct the dependent block:
// u_dep = map_u * u_ind + map_x * x.
struct EqualityPartition {
    std::vector<std::size_t> dep_idx;
    std::vector<std::size_t> ind_idx;
    Matrix map_u;  // |dep| x |ind|
    Matrix map_x;  // |dep| x (2N+1)

    std::size_t n_ind() const { return ind_idx.size(); }
    // full-length u in original variable order
    Vec complete(const Vec& u_ind, const Vec& x_stacked) const;
    Vec extract_ind(const Vec& u_full) const;
};

EqualityPartition equality_partition(const vpp::CompactProblem& cp);

// Inequality set over the independent variables: {v : A v <= b}, together
// with a strictly interior point and its row margins b - A*interior (> 0).
struct ReducedPolyhedron {
    Matrix a;      // 6N x (2N-1)
    Vec b;         // 6N
    Vec interior;  // 2N-1
    Vec margins;   // 6N
};

// Thrown when the safety parameter leaves no feasible region for this input.
class ReducedSetEmpty : public std::runtime_error {
public:
    explicit ReducedSetEmpty(double p)
        : std::runtime_error("reduced set empty at p=" + std::to_string(p)) {}
};

ReducedPolyhedron reduce_polyhedron(const vpp::CompactProblem& cp,
                                    const vpp::InputVector& x,
                                    const AggregatedFeatures& feats, double p,
                                    const EqualityPartition& part);

struct GaugeValue {
    double psi = 0.0;
    std::ptrdiff_t active_row = -1;  // -1 when every numerator is <= 0
};

// psi = max_r (A_r . u_hat) / margin_r, floored at 0; ties pick the lowest row.
GaugeValue minkowski_gauge(const Vec& u_hat, const ReducedPolyhedron& rp);

// u_ind = u_hat / max{1, psi(u_hat)} + interior
Vec gauge_map(const Vec& u_hat, const ReducedPolyhedron& rp);

// Vector-Jacobian product of gauge_map at u_hat applied to `upstream`.
// At psi == 1 the identity branch is used; argmax ties resolve to the lowest
// row (matching minkowski_gauge).
Vec gauge_map_jacobian_vec(const Vec& u_hat, const ReducedPolyhedron& rp,
                           const Vec& upstream);

struct MlpWeights {
    std::size_t d = 0, h = 0, o = 0;
    Matrix w1;  // h x d
    Vec b1;     // h
    Matrix w2;  // o x h
    Vec b2;     // o
    Vec feat_mean, feat_std;  // d, stored from the training split
    double p = 0.0;
    std::uint64_t seed = 0;
};

// uniform +/- 1/sqrt(fan_in) init; feature normalization starts as identity
MlpWeights init_weights(std::size_t d, std::size_t h, std::size_t o, std::uint64_t seed);

std::string weights_to_json(const MlpWeights& w);
MlpWeights weights_from_json(const std::string& text);

struct ForwardTrace {
    Vec features;  // normalized input
    Vec z1;        // pre-activation
    Vec hidden;    // relu(z1)
    Vec u_hat;
    Vec u_ind;
    Vec u_full;
    GaugeValue gauge;
    ReducedPolyhedron rp;
};

// features = normalize([x; phi_avg; phi_max]); u_hat = MLP(features);
// u_ind = gauge_map(u_hat); u_full completes the equality.
std::pair<Vec, ForwardTrace> proxy_forward(const MlpWeights& weights,
                                           const vpp::CompactProblem& cp,
                                           const vpp::InputVector& x,
                                           const vpp::ScenarioSet& scen, double p,
                                           const EqualityPartition& part);

// Same forward pass with the polyhedron and features already computed (the
// training loop caches both per data point).
std::pair<Vec, ForwardTrace> proxy_forward_cached(const MlpWeights& weights,
                                                  const Vec& raw_features,
                                                  const ReducedPolyhedron& rp,
                                                  const EqualityPartition& part,
                                                  const Vec& x_stacked);

struct Gradients {
    Matrix w1;
    Vec b1;
    Matrix w2;
    Vec b2;

    void accumulate(const Gradients& other);
    void scale(double a);
};

// d/dw of ||u_full - target||^2 through completion and gauge map.
Gradients proxy_backward(const MlpWeights& weights, const EqualityPartition& part,
                         const ForwardTrace& trace, const Vec& target);

struct TrainConfig {
    double p = 0.68;
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t epochs = 120;
    std::uint64_t seed = 1;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double val_fraction = 0.1;
    std::size_t hidden = 200;
};

struct TrainPoint {
    vpp::InputVector x;
    vpp::ScenarioSet scen;
    Vec target;  // u*_PR at the training p
};

struct TrainLogRow {
    std::size_t epoch;
    double train_loss;
    double val_loss;
};

struct TrainResult {
    MlpWeights weights;
    std::vector<TrainLogRow> log;
};

TrainResult train(const vpp::CompactProblem& cp, const EqualityPartition& part,
                  const std::vector<TrainPoint>& dataset, const TrainConfig& cfg);

// --- safety parameter selection ----------------------------------------------

struct SelectPoint {
    vpp::InputVector x;
    vpp::ScenarioSet in_scen;   // used for targets and training features
    vpp::ScenarioSet out_scen;  // held-out scenarios for violation estimates
};

struct SweepRow {
    double p = 0.0;
    double mean_objective = 0.0;
    double in_violation = 0.0;
    double out_violation = 0.0;
    double final_train_loss = 0.0;
};

struct SelectionReport {
    double p_star = 1.0;
    bool qualified = false;  // false: no grid point met epsilon, fell back to 1
    std::vector<SweepRow> rows;
    MlpWeights best_weights;  // trained at p_star
};

// Pure selection rule: smallest grid p with out-of-sample violation <= epsilon;
// duplicate winners break ties by mean objective. Returns grid.size() when
// nothing qualifies.
std::size_t pick_safety_index(const std::vector<double>& grid,
                              const std::vector<double>& out_violation,
                              const std::vector<double>& mean_objective, double epsilon);

// For each grid p: solve targets, train, measure out-of-sample violation of
// the trained proxy; then apply the selection rule.
SelectionReport select_safety_parameter(const vpp::CompactProblem& cp,
                                        const EqualityPartition& part,
                                        const std::vector<SelectPoint>& points,
                                        const std::vector<double>& p_grid, double epsilon,
                                        const TrainConfig& cfg,
                                        const qp::Settings& solver);

}  // namespace ccd::proxy
