#include "ccd/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ccd::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json range_to_json(const vpp::Range& r) { return json::array({r.lo, r.hi}); }

vpp::Range range_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string read_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + file.string());
}

std::string point_tag(std::size_t id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu", id);
    return buf;
}

}  // namespace

RunConfig desk_config() { return RunConfig{}; }

RunConfig paper_config() {
    RunConfig cfg;
    cfg.fleet.n_prosumers = 50;
    cfg.n_points = 200;
    cfg.n_in_scen = 1000;
    cfg.n_out_scen = 10000;
    return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["epsilon"] = cfg.epsilon;
    j["fleet"] = {{"n_prosumers", cfg.fleet.n_prosumers},
                  {"pg", range_to_json(cfg.fleet.pg)},
                  {"pl", range_to_json(cfg.fleet.pl)},
                  {"po", range_to_json(cfg.fleet.po)},
                  {"beta_g1", range_to_json(cfg.fleet.beta_g1)},
                  {"beta_g2", range_to_json(cfg.fleet.beta_g2)},
                  {"beta_l1", range_to_json(cfg.fleet.beta_l1)},
                  {"beta_l2", range_to_json(cfg.fleet.beta_l2)},
                  {"pv_cap_kw", cfg.fleet.pv_cap_kw},
                  {"wind_kw", range_to_json(cfg.fleet.wind_kw)},
                  {"pv_area_m2", range_to_json(cfg.fleet.pv_area_m2)},
                  {"pv_efficiency", range_to_json(cfg.fleet.pv_efficiency)},
                  {"air_density", cfg.fleet.air_density},
                  {"swept_area_m2", range_to_json(cfg.fleet.swept_area_m2)},
                  {"power_coeff", range_to_json(cfg.fleet.power_coeff)}};
    j["profile"] = {{"irradiance_kw_m2", range_to_json(cfg.profile.irradiance_kw_m2)},
                    {"wind_speed_m_s", range_to_json(cfg.profile.wind_speed_m_s)},
                    {"il_base_kw", cfg.profile.il_base_kw},
                    {"il_fluctuation", cfg.profile.il_fluctuation},
                    {"dispatch_margin", cfg.profile.dispatch_margin},
                    {"max_retries", cfg.profile.max_retries}};
    j["dataset"] = {{"n_points", cfg.n_points},
                    {"n_in_scen", cfg.n_in_scen},
                    {"n_out_scen", cfg.n_out_scen}};
    j["solver"] = {{"eps_abs", cfg.solver.eps_abs},
                   {"eps_rel", cfg.solver.eps_rel},
                   {"max_iter", cfg.solver.max_iter},
                   {"polish", cfg.solver.polish}};
    j["train"] = {{"p", cfg.train.p},
                  {"learning_rate", cfg.train.learning_rate},
                  {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"seed", cfg.train.seed},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"val_fraction", cfg.train.val_fraction},
                  {"hidden", cfg.train.hidden}};
    j["selection"] = {{"p_grid", cfg.p_grid}, {"s_grid", cfg.s_grid}};
    j["bench"] = {{"timing_repeats", cfg.timing_repeats},
                  {"robust_norm", cfg.robust_norm == reform::RobustNorm::elementwise
                                      ? "elementwise"
                                      : "scalar"}};
    return j.dump(2);
}

RunConfig load_config(const fs::path& file) {
    const json j = json::parse(read_file(file));
    RunConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    if (j.contains("fleet")) {
        const json& f = j["fleet"];
        cfg.fleet.n_prosumers = f.value("n_prosumers", cfg.fleet.n_prosumers);
        if (f.contains("pg")) cfg.fleet.pg = range_from_json(f["pg"]);
        if (f.contains("pl")) cfg.fleet.pl = range_from_json(f["pl"]);
        if (f.contains("po")) cfg.fleet.po = range_from_json(f["po"]);
        if (f.contains("beta_g1")) cfg.fleet.beta_g1 = range_from_json(f["beta_g1"]);
        if (f.contains("beta_g2")) cfg.fleet.beta_g2 = range_from_json(f["beta_g2"]);
        if (f.contains("beta_l1")) cfg.fleet.beta_l1 = range_from_json(f["beta_l1"]);
        if (f.contains("beta_l2")) cfg.fleet.beta_l2 = range_from_json(f["beta_l2"]);
        cfg.fleet.pv_cap_kw = f.value("pv_cap_kw", cfg.fleet.pv_cap_kw);
        if (f.contains("wind_kw")) cfg.fleet.wind_kw = range_from_json(f["wind_kw"]);
        if (f.contains("pv_area_m2")) cfg.fleet.pv_area_m2 = range_from_json(f["pv_area_m2"]);
        if (f.contains("pv_efficiency"))
            cfg.fleet.pv_efficiency = range_from_json(f["pv_efficiency"]);
        cfg.fleet.air_density = f.value("air_density", cfg.fleet.air_density);
        if (f.contains("swept_area_m2"))
            cfg.fleet.swept_area_m2 = range_from_json(f["swept_area_m2"]);
        if (f.contains("power_coeff")) cfg.fleet.power_coeff = range_from_json(f["power_coeff"]);
    }
    if (j.contains("profile")) {
        const json& f = j["profile"];
        if (f.contains("irradiance_kw_m2"))
            cfg.profile.irradiance_kw_m2 = range_from_json(f["irradiance_kw_m2"]);
        if (f.contains("wind_speed_m_s"))
            cfg.profile.wind_speed_m_s = range_from_json(f["wind_speed_m_s"]);
        cfg.profile.il_base_kw = f.value("il_base_kw", cfg.profile.il_base_kw);
        cfg.profile.il_fluctuation = f.value("il_fluctuation", cfg.profile.il_fluctuation);
        cfg.profile.dispatch_margin = f.value("dispatch_margin", cfg.profile.dispatch_margin);
        cfg.profile.max_retries = f.value("max_retries", cfg.profile.max_retries);
    }
    if (j.contains("dataset")) {
        const json& f = j["dataset"];
        cfg.n_points = f.value("n_points", cfg.n_points);
        cfg.n_in_scen = f.value("n_in_scen", cfg.n_in_scen);
        cfg.n_out_scen = f.value("n_out_scen", cfg.n_out_scen);
    }
    if (j.contains("solver")) {
        const json& f = j["solver"];
        cfg.solver.eps_abs = f.value("eps_abs", cfg.solver.eps_abs);
        cfg.solver.eps_rel = f.value("eps_rel", cfg.solver.eps_rel);
        cfg.solver.max_iter = f.value("max_iter", cfg.solver.max_iter);
        cfg.solver.polish = f.value("polish", cfg.solver.polish);
    }
    if (j.contains("train")) {
        const json& f = j["train"];
        cfg.train.p = f.value("p", cfg.train.p);
        cfg.train.learning_rate = f.value("learning_rate", cfg.train.learning_rate);
        cfg.train.batch_size = f.value("batch_size", cfg.train.batch_size);
        cfg.train.epochs = f.value("epochs", cfg.train.epochs);
        cfg.train.seed = f.value("seed", cfg.train.seed);
        cfg.train.beta1 = f.value("beta1", cfg.train.beta1);
        cfg.train.beta2 = f.value("beta2", cfg.train.beta2);
        cfg.train.val_fraction = f.value("val_fraction", cfg.train.val_fraction);
        cfg.train.hidden = f.value("hidden", cfg.train.hidden);
    }
    if (j.contains("selection")) {
        const json& f = j["selection"];
        if (f.contains("p_grid")) cfg.p_grid = f["p_grid"].get<std::vector<double>>();
        if (f.contains("s_grid")) cfg.s_grid = f["s_grid"].get<std::vector<double>>();
    }
    if (j.contains("bench")) {
        const json& f = j["bench"];
        cfg.timing_repeats = f.value("timing_repeats", cfg.timing_repeats);
        const std::string rn = f.value("robust_norm", std::string("elementwise"));
        cfg.robust_norm =
            rn == "scalar" ? reform::RobustNorm::scalar : reform::RobustNorm::elementwise;
    }
    return cfg;
}

std::vector<std::size_t> Dataset::train_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].id % 2 == 1) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> Dataset::test_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].id % 2 == 0) idx.push_back(i);
    return idx;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Dataset generate_dataset(const RunConfig& cfg) {
    Dataset ds;
    ds.seed = cfg.seed;
    ds.epsilon = cfg.epsilon;
    ds.instance = vpp::generate_instance(cfg.fleet, derive_seed(cfg.seed, 0, 0));
    ds.cp = vpp::assemble_compact(ds.instance, true);
    ds.points.reserve(cfg.n_points);
    for (std::size_t id = 1; id <= cfg.n_points; ++id) {
        DataPoint pt;
        pt.id = id;
        pt.x = vpp::sample_input(ds.instance, cfg.profile, derive_seed(cfg.seed, id, 1));
        pt.in_scen =
            vpp::sample_scenarios(ds.instance, pt.x, cfg.n_in_scen, derive_seed(cfg.seed, id, 2));
        pt.out_scen =
            vpp::sample_scenarios(ds.instance, pt.x, cfg.n_out_scen, derive_seed(cfg.seed, id, 3));
        ds.points.push_back(std::move(pt));
    }
    return ds;
}

namespace {

void write_scenarios(const fs::path& dir, const std::string& stem,
                     const vpp::ScenarioSet& scen, const std::string& kind,
                     std::size_t point_id) {
    write_file(dir / (stem + ".csv"), vpp::scenarios_to_csv(scen));
    json meta;
    meta["seed"] = scen.seed;
    meta["n_scen"] = scen.eps.rows();
    meta["n_prosumers"] = scen.eps.cols();
    meta["kind"] = kind;
    meta["point_id"] = point_id;
    write_file(dir / (stem + ".meta.json"), meta.dump(2));
}

vpp::ScenarioSet read_scenarios(const fs::path& dir, const std::string& stem) {
    const json meta = json::parse(read_file(dir / (stem + ".meta.json")));
    vpp::ScenarioSet scen =
        vpp::scenarios_from_csv(read_file(dir / (stem + ".csv")), meta.at("seed"));
    if (scen.eps.rows() != meta.at("n_scen").get<std::size_t>() ||
        scen.eps.cols() != meta.at("n_prosumers").get<std::size_t>())
        throw std::runtime_error("scenario file shape mismatch for " + stem);
    return scen;
}

}  // namespace

void write_dataset(const Dataset& ds, const fs::path& dir) {
    fs::create_directories(dir / "points");
    write_file(dir / "instance.json", vpp::instance_to_json(ds.instance));
    json meta;
    meta["seed"] = ds.seed;
    meta["epsilon"] = ds.epsilon;
    meta["n_points"] = ds.points.size();
    meta["split"] = "odd ids train, even ids test";
    write_file(dir / "dataset.json", meta.dump(2));
    for (const DataPoint& pt : ds.points) {
        const std::string tag = point_tag(pt.id);
        write_file(dir / "points" / ("input_" + tag + ".json"), vpp::input_to_json(pt.x));
        write_scenarios(dir / "points", "in_scen_" + tag, pt.in_scen, "in", pt.id);
        write_scenarios(dir / "points", "out_scen_" + tag, pt.out_scen, "out", pt.id);
    }
}

Dataset read_dataset(const fs::path& dir) {
    if (!fs::exists(dir / "dataset.json"))
        throw std::runtime_error("missing dataset at " + dir.string() +
                                 "; run `ccdispatch gen-dataset` first");
    Dataset ds;
    ds.instance = vpp::instance_from_json(read_file(dir / "instance.json"));
    ds.cp = vpp::assemble_compact(ds.instance, true);
    const json meta = json::parse(read_file(dir / "dataset.json"));
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.epsilon = meta.at("epsilon").get<double>();
    const std::size_t n_points = meta.at("n_points").get<std::size_t>();
    for (std::size_t id = 1; id <= n_points; ++id) {
        const std::string tag = point_tag(id);
        DataPoint pt;
        pt.id = id;
        pt.x = vpp::input_from_json(read_file(dir / "points" / ("input_" + tag + ".json")));
        pt.in_scen = read_scenarios(dir / "points", "in_scen_" + tag);
        pt.out_scen = read_scenarios(dir / "points", "out_scen_" + tag);
        ds.points.push_back(std::move(pt));
    }
    return ds;
}

double violation_rate(const vpp::CompactProblem& cp, const Vec& u,
                      const vpp::InputVector& x, const vpp::ScenarioSet& scen, double tol) {
    if (scen.n_scen() == 0) throw std::invalid_argument("violation_rate: empty scenario set");
    // base residuals without the uncertainty term, then one C*eps per scenario
    const Vec base = cp.ineq_residuals(u, x, Vec{});
    const auto& ops = kernels::active_ops();
    Vec ce(cp.n_rows(), 0.0);
    std::size_t bad = 0;
    for (std::size_t k = 0; k < scen.n_scen(); ++k) {
        ops.gemv(cp.c_ineq.data(), cp.n_rows(), cp.n, scen.eps.row(k), 0.0, ce.data());
        for (std::size_t r = 0; r < cp.n_rows(); ++r) {
            if (base[r] + ce[r] > tol) {
                ++bad;
                break;
            }
        }
    }
    return static_cast<double>(bad) / static_cast<double>(scen.n_scen());
}

double objective_cost_rate(double f_method, double f_sa) {
    if (!(f_sa > 0.0))
        throw std::invalid_argument("objective_cost_rate: reference objective must be > 0");
    return f_method / f_sa;
}

}  // namespace ccd::bench
