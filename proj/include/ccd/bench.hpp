#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccd/dataset.hpp"

namespace ccd::bench {

// One Table-style row per method.
struct MetricsRecord {
    std::string method;       // sa | cvar | ro | pr | proxy
    double parameter = 0.0;   // s or p, 0 when not applicable
    double objective_cost_rate = 0.0;
    double in_violation = 0.0;
    double out_violation = 0.0;
    double mean_build_s = 0.0;
    double mean_solve_s = 0.0;  // for the proxy: full inference incl. interior point
    double mean_time_s = 0.0;   // build + solve
};

struct BenchReport {
    std::vector<MetricsRecord> records;
    double p_star = 0.0;
    double s_star = 0.0;
    std::size_t n_test_points = 0;
    std::size_t timing_repeats = 0;
    std::map<std::string, double> proxy_speedup;  // method -> solve_time / proxy_time
};

// Targets for the training split, keyed by data point id.
using TargetMap = std::map<std::size_t, Vec>;

TargetMap gen_targets(const Dataset& ds, const RunConfig& cfg, double p);
void write_targets(const TargetMap& targets, double p, const std::filesystem::path& dir);
TargetMap read_targets(double p, const std::filesystem::path& dir);

struct SelectionArtifacts {
    proxy::SelectionReport report;
    double s_star = 0.0;
    std::vector<proxy::SweepRow> robust_rows;  // s sweep on the training split
};

// Safety-parameter selection for both the proxy (p grid, retrains per p) and
// the robust method (s grid, solves only), on the training split.
SelectionArtifacts select_parameters(const Dataset& ds, const RunConfig& cfg);
void write_selection(const SelectionArtifacts& sel, const std::filesystem::path& dir);

// Per-point method results streamed to CSV:
// datapoint_id,method,parameter,objective,build_s,solve_s,status
struct SolveRow {
    std::size_t id;
    std::string method;
    double parameter;
    double objective;
    double build_s;
    double solve_s;
    std::string status;
};
void write_results_csv(const std::vector<SolveRow>& rows, const std::filesystem::path& file);

BenchReport run_benchmark(const RunConfig& cfg, const std::filesystem::path& out_dir,
                          bool auto_stages);

void write_report(const BenchReport& report, const RunConfig& cfg,
                  const std::filesystem::path& dir);

// Parameter sweep of a solver-based method (ro or pr) over the training split.
std::vector<proxy::SweepRow> sweep_method(const Dataset& ds, const RunConfig& cfg,
                                          reform::Method method,
                                          const std::vector<double>& grid);
void write_sweep_csv(const std::string& method, const std::vector<proxy::SweepRow>& rows,
                     const std::filesystem::path& file, bool append);

}  // namespace ccd::bench
