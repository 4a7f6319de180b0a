#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccd/proxy.hpp"
#include "ccd/qp.hpp"
#include "ccd/reform.hpp"
#include "ccd/vpp.hpp"

namespace ccd::bench {

// Whole-run configuration, loadable from a single JSON file.
struct RunConfig {
    std::uint64_t seed = 42;
    double epsilon = 0.05;
    vpp::GenConfig fleet;
    vpp::ProfileConfig profile;
    std::size_t n_points = 200;
    std::size_t n_in_scen = 200;
    std::size_t n_out_scen = 1000;
    qp::Settings solver;
    proxy::TrainConfig train;
    std::vector<double> p_grid{0.0, 0.25, 0.5, 0.68, 0.75, 1.0};
    std::vector<double> s_grid{0.5, 1.0, 1.5, 2.0, 3.0};
    std::size_t timing_repeats = 10;
    reform::RobustNorm robust_norm = reform::RobustNorm::elementwise;
};

RunConfig desk_config();
RunConfig paper_config();  // paper-scale numbers; not exercised by the test suite
RunConfig load_config(const std::filesystem::path& file);
std::string config_to_json(const RunConfig& cfg);

struct DataPoint {
    std::size_t id = 0;  // 1-based; odd ids train, even ids test
    vpp::InputVector x;
    vpp::ScenarioSet in_scen;
    vpp::ScenarioSet out_scen;
};

struct Dataset {
    vpp::VppInstance instance;
    vpp::CompactProblem cp;
    double epsilon = 0.05;
    std::uint64_t seed = 0;
    std::vector<DataPoint> points;

    std::vector<std::size_t> train_indices() const;
    std::vector<std::size_t> test_indices() const;
};

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b);

Dataset generate_dataset(const RunConfig& cfg);
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// fraction of scenarios on which u violates the joint constraint
double violation_rate(const vpp::CompactProblem& cp, const Vec& u,
                      const vpp::InputVector& x, const vpp::ScenarioSet& scen,
                      double tol = 1e-6);

// f_method / f_sa; the scenario approach maps to exactly 1
double objective_cost_rate(double f_method, double f_sa);

}  // namespace ccd::bench
