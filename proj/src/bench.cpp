#include "ccd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ccd::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

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
}

std::string p_tag(double p) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", p);
    return buf;
}

}  // namespace

TargetMap gen_targets(const Dataset& ds, const RunConfig& cfg, double p) {
    TargetMap targets;
    reform::MethodParams params;
    params.epsilon = ds.epsilon;
    params.p = p;
    params.solver = cfg.solver;
    params.robust_norm = cfg.robust_norm;
    for (std::size_t i : ds.train_indices()) {
        const DataPoint& pt = ds.points[i];
        const reform::MethodResult res =
            reform::solve_method(reform::Method::pr, ds.cp, pt.x, pt.in_scen, params);
        if (res.status != qp::Status::optimal) continue;  // point unusable at this p
        targets[pt.id] = res.u;
    }
    if (targets.empty())
        throw std::runtime_error("gen_targets: no feasible training targets at p=" + p_tag(p));
    return targets;
}

void write_targets(const TargetMap& targets, double p, const fs::path& dir) {
    json j;
    j["p"] = p;
    json items = json::object();
    for (const auto& [id, u] : targets) items[std::to_string(id)] = u;
    j["targets"] = items;
    write_file(dir / ("targets_p" + p_tag(p) + ".json"), j.dump());
}

TargetMap read_targets(double p, const fs::path& dir) {
    const fs::path file = dir / ("targets_p" + p_tag(p) + ".json");
    if (!fs::exists(file))
        throw std::runtime_error("missing targets at " + file.string() +
                                 "; run `ccdispatch gen-targets --p " + p_tag(p) + "` first");
    const json j = json::parse(read_file(file));
    TargetMap targets;
    for (const auto& [key, val] : j.at("targets").items())
        targets[std::stoull(key)] = val.get<Vec>();
    return targets;
}

SelectionArtifacts select_parameters(const Dataset& ds, const RunConfig& cfg) {
    const proxy::EqualityPartition part = proxy::equality_partition(ds.cp);
    std::vector<proxy::SelectPoint> points;
    for (std::size_t i : ds.train_indices()) {
        const DataPoint& pt = ds.points[i];
        points.push_back({pt.x, pt.in_scen, pt.out_scen});
    }

    SelectionArtifacts sel;
    sel.report = proxy::select_safety_parameter(ds.cp, part, points, cfg.p_grid, ds.epsilon,
                                                cfg.train, cfg.solver);

    // Robust s follows the same rule on its own grid; solves only, no training.
    sel.robust_rows = sweep_method(ds, cfg, reform::Method::ro, cfg.s_grid);
    std::vector<double> viols, objs;
    for (const auto& row : sel.robust_rows) {
        viols.push_back(row.out_violation);
        objs.push_back(row.mean_objective);
    }
    const std::size_t pick = proxy::pick_safety_index(cfg.s_grid, viols, objs, ds.epsilon);
    if (pick < cfg.s_grid.size()) {
        sel.s_star = cfg.s_grid[pick];
    } else {
        // nothing qualified: take the most conservative grid value
        sel.s_star = *std::max_element(cfg.s_grid.begin(), cfg.s_grid.end());
    }
    return sel;
}

void write_selection(const SelectionArtifacts& sel, const fs::path& dir) {
    json j;
    j["p_star"] = sel.report.p_star;
    j["qualified"] = sel.report.qualified;
    j["s_star"] = sel.s_star;
    json rows = json::array();
    for (const auto& r : sel.report.rows)
        rows.push_back({{"p", r.p},
                        {"mean_objective", r.mean_objective},
                        {"in_violation", r.in_violation},
                        {"out_violation", r.out_violation},
                        {"final_train_loss", r.final_train_loss}});
    j["proxy_sweep"] = rows;
    json srows = json::array();
    for (const auto& r : sel.robust_rows)
        srows.push_back({{"s", r.p},
                         {"mean_objective", r.mean_objective},
                         {"in_violation", r.in_violation},
                         {"out_violation", r.out_violation}});
    j["robust_sweep"] = srows;
    write_file(dir / "selection.json", j.dump(2));
    write_file(dir / ("weights_p" + p_tag(sel.report.p_star) + ".json"),
               proxy::weights_to_json(sel.report.best_weights));

    write_sweep_csv("proxy", sel.report.rows, dir / "sweep.csv", false);
    write_sweep_csv("ro", sel.robust_rows, dir / "sweep.csv", true);
}

void write_results_csv(const std::vector<SolveRow>& rows, const fs::path& file) {
    std::string out = "datapoint_id,method,parameter,objective,build_s,solve_s,status\n";
    for (const SolveRow& r : rows) {
        out += std::to_string(r.id) + "," + r.method + "," + fmt(r.parameter) + "," +
               fmt(r.objective) + "," + fmt(r.build_s) + "," + fmt(r.solve_s) + "," +
               r.status + "\n";
    }
    write_file(file, out);
}

std::vector<proxy::SweepRow> sweep_method(const Dataset& ds, const RunConfig& cfg,
                                          reform::Method method,
                                          const std::vector<double>& grid) {
    const auto idx = ds.train_indices();
    std::vector<proxy::SweepRow> rows;
    for (double param : grid) {
        reform::MethodParams params;
        params.epsilon = ds.epsilon;
        params.solver = cfg.solver;
        params.robust_norm = cfg.robust_norm;
        if (method == reform::Method::ro)
            params.s = param;
        else
            params.p = param;
        proxy::SweepRow row;
        row.p = param;
        std::size_t solved = 0;
        for (std::size_t i : idx) {
            const DataPoint& pt = ds.points[i];
            const reform::MethodResult res =
                reform::solve_method(method, ds.cp, pt.x, pt.in_scen, params);
            if (res.status != qp::Status::optimal) continue;
            ++solved;
            row.mean_objective += res.objective;
            row.in_violation += violation_rate(ds.cp, res.u, pt.x, pt.in_scen);
            row.out_violation += violation_rate(ds.cp, res.u, pt.x, pt.out_scen);
        }
        if (solved == 0) {
            row.in_violation = row.out_violation = 1.0;
        } else {
            row.mean_objective /= static_cast<double>(solved);
            row.in_violation /= static_cast<double>(solved);
            row.out_violation /= static_cast<double>(solved);
        }
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::string& method, const std::vector<proxy::SweepRow>& rows,
                     const fs::path& file, bool append) {
    std::string out;
    if (!append || !fs::exists(file))
        out = "method,parameter,mean_objective,in_violation,out_violation\n";
    for (const auto& r : rows)
        out += method + "," + fmt(r.p) + "," + fmt(r.mean_objective) + "," +
               fmt(r.in_violation) + "," + fmt(r.out_violation) + "\n";
    std::ofstream f(file, append ? std::ios::app : std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << out;
}

BenchReport run_benchmark(const RunConfig& cfg, const fs::path& out_dir, bool auto_stages) {
    // stage 1: dataset
    Dataset ds;
    if (fs::exists(out_dir / "dataset.json")) {
        ds = read_dataset(out_dir);
    } else if (auto_stages) {
        ds = generate_dataset(cfg);
        write_dataset(ds, out_dir);
    } else {
        throw std::runtime_error("missing dataset in " + out_dir.string() +
                                 "; run `ccdispatch gen-dataset` first (or pass --auto)");
    }

    // stage 2: selection + trained weights
    double p_star = 0.0, s_star = 0.0;
    proxy::MlpWeights weights;
    if (fs::exists(out_dir / "selection.json")) {
        const json j = json::parse(read_file(out_dir / "selection.json"));
        p_star = j.at("p_star").get<double>();
        s_star = j.at("s_star").get<double>();
        const fs::path wfile = out_dir / ("weights_p" + p_tag(p_star) + ".json");
        if (!fs::exists(wfile))
            throw std::runtime_error("missing weights at " + wfile.string() +
                                     "; run `ccdispatch select-p` or `ccdispatch train` first");
        weights = proxy::weights_from_json(read_file(wfile));
    } else if (auto_stages) {
        const SelectionArtifacts sel = select_parameters(ds, cfg);
        write_selection(sel, out_dir);
        p_star = sel.report.p_star;
        s_star = sel.s_star;
        weights = sel.report.best_weights;
    } else {
        throw std::runtime_error("missing selection.json in " + out_dir.string() +
                                 "; run `ccdispatch select-p` first (or pass --auto)");
    }

    const proxy::EqualityPartition part = proxy::equality_partition(ds.cp);
    const auto test_idx = ds.test_indices();
    if (test_idx.empty()) throw std::runtime_error("bench: no test points");

    struct Accum {
        double obj_rate = 0.0, in_v = 0.0, out_v = 0.0, build = 0.0, solve = 0.0;
    };
    const std::vector<std::string> method_names = {"sa", "cvar", "ro", "pr", "proxy"};
    std::map<std::string, Accum> acc;
    std::map<std::string, std::vector<SolveRow>> rows;

    for (std::size_t i : test_idx) {
        const DataPoint& pt = ds.points[i];
        double f_sa = 0.0;
        for (const std::string& name : method_names) {
            double build = 0.0, solve_t = 0.0, objective = 0.0;
            Vec u;
            std::string status = "optimal";
            double parameter = 0.0;
            if (name == "proxy") {
                Vec out;
                const double t0 = now_s();
                for (std::size_t rep = 0; rep < cfg.timing_repeats; ++rep)
                    out = proxy_forward(weights, ds.cp, pt.x, pt.in_scen, p_star, part).first;
                solve_t = (now_s() - t0) / static_cast<double>(cfg.timing_repeats);
                u = out;
                objective = ds.cp.objective(u);
                parameter = p_star;
            } else {
                reform::MethodParams params;
                params.epsilon = ds.epsilon;
                params.solver = cfg.solver;
                params.robust_norm = cfg.robust_norm;
                params.s = s_star;
                params.p = p_star;
                const reform::Method method = reform::method_from_name(name);
                reform::MethodResult res;
                for (std::size_t rep = 0; rep < cfg.timing_repeats; ++rep) {
                    res = reform::solve_method(method, ds.cp, pt.x, pt.in_scen, params);
                    build += res.build_time_s;
                    solve_t += res.solve_time_s;
                }
                build /= static_cast<double>(cfg.timing_repeats);
                solve_t /= static_cast<double>(cfg.timing_repeats);
                u = res.u;
                objective = res.objective;
                status = qp::status_name(res.status);
                parameter = res.parameter;
                if (name == "sa") f_sa = objective;
            }
            Accum& a = acc[name];
            a.obj_rate += objective_cost_rate(objective, f_sa);
            a.in_v += violation_rate(ds.cp, u, pt.x, pt.in_scen);
            a.out_v += violation_rate(ds.cp, u, pt.x, pt.out_scen);
            a.build += build;
            a.solve += solve_t;
            rows[name].push_back(
                {pt.id, name, parameter, objective, build, solve_t, status});
        }
    }

    BenchReport report;
    report.p_star = p_star;
    report.s_star = s_star;
    report.n_test_points = test_idx.size();
    report.timing_repeats = cfg.timing_repeats;
    const double np = static_cast<double>(test_idx.size());
    for (const std::string& name : method_names) {
        const Accum& a = acc[name];
        MetricsRecord rec;
        rec.method = name;
        rec.parameter = name == "ro" ? s_star : (name == "pr" || name == "proxy" ? p_star : 0.0);
        rec.objective_cost_rate = a.obj_rate / np;
        rec.in_violation = a.in_v / np;
        rec.out_violation = a.out_v / np;
        rec.mean_build_s = a.build / np;
        rec.mean_solve_s = a.solve / np;
        rec.mean_time_s = (a.build + a.solve) / np;
        report.records.push_back(rec);
        write_results_csv(rows[name], out_dir / ("results_" + name + ".csv"));
    }
    const double proxy_time = report.records.back().mean_solve_s;
    for (const MetricsRecord& rec : report.records)
        if (rec.method != "proxy" && proxy_time > 0.0)
            report.proxy_speedup[rec.method] = rec.mean_solve_s / proxy_time;
    return report;
}

void write_report(const BenchReport& report, const RunConfig& cfg, const fs::path& dir) {
    std::string csv =
        "method,parameter,objective_cost_rate,in_violation,out_violation,mean_time_s\n";
    for (const MetricsRecord& r : report.records)
        csv += r.method + "," + fmt(r.parameter) + "," + fmt(r.objective_cost_rate) + "," +
               fmt(r.in_violation) + "," + fmt(r.out_violation) + "," + fmt(r.mean_time_s) +
               "\n";
    write_file(dir / "report.csv", csv);

    json j;
    j["p_star"] = report.p_star;
    j["s_star"] = report.s_star;
    j["n_test_points"] = report.n_test_points;
    j["timing_repeats"] = report.timing_repeats;
    j["timing_note"] =
        "build and solve are reported separately plus their sum; the proxy row's time is "
        "full inference including the interior-point computation";
    j["robust_norm"] = cfg.robust_norm == reform::RobustNorm::elementwise ? "elementwise"
                                                                          : "scalar";
    json recs = json::array();
    for (const MetricsRecord& r : report.records)
        recs.push_back({{"method", r.method},
                        {"parameter", r.parameter},
                        {"objective_cost_rate", r.objective_cost_rate},
                        {"in_violation", r.in_violation},
                        {"out_violation", r.out_violation},
                        {"mean_build_s", r.mean_build_s},
                        {"mean_solve_s", r.mean_solve_s},
                        {"mean_time_s", r.mean_time_s}});
    j["records"] = recs;
    j["proxy_speedup"] = report.proxy_speedup;
    write_file(dir / "report.json", j.dump(2));
}

}  // namespace ccd::bench
