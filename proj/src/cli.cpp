#include "ccd/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccd/bench.hpp"

namespace ccd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
};

bench::RunConfig resolve_config(const GlobalArgs& g) {
    bench::RunConfig cfg =
        g.config_path.empty() ? bench::desk_config() : bench::load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (const char* env = std::getenv("CCDISPATCH_SEED")) cfg.seed = std::stoull(env);
    return cfg;
}

bench::Dataset load_or_fail(const GlobalArgs& g) { return bench::read_dataset(g.out_dir); }

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

void write_training_log(const std::vector<proxy::TrainLogRow>& log, const fs::path& file) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (const auto& row : log) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", row.epoch, row.train_loss,
                      row.val_loss);
        out += buf;
    }
    write_file(file, out);
}

int cmd_gen_instance(const GlobalArgs& g) {
    const bench::RunConfig cfg = resolve_config(g);
    const vpp::VppInstance instance =
        vpp::generate_instance(cfg.fleet, bench::derive_seed(cfg.seed, 0, 0));
    fs::create_directories(g.out_dir);
    write_file(fs::path(g.out_dir) / "instance.json", vpp::instance_to_json(instance));
    std::cout << "wrote " << (fs::path(g.out_dir) / "instance.json").string() << "\n";
    return 0;
}

int cmd_gen_dataset(const GlobalArgs& g) {
    const bench::RunConfig cfg = resolve_config(g);
    const bench::Dataset ds = bench::generate_dataset(cfg);
    bench::write_dataset(ds, g.out_dir);
    std::cout << "wrote dataset with " << ds.points.size() << " points to " << g.out_dir
              << "\n";
    return 0;
}

int cmd_solve(const GlobalArgs& g, const std::string& method_name, std::optional<double> s,
              std::optional<double> p, const std::string& points_sel) {
    const bench::RunConfig cfg = resolve_config(g);
    const reform::Method method = reform::method_from_name(method_name);
    const bench::Dataset ds = load_or_fail(g);

    reform::MethodParams params;
    params.epsilon = ds.epsilon;
    params.solver = cfg.solver;
    params.robust_norm = cfg.robust_norm;
    if (method == reform::Method::ro) params.s = *s;
    if (method == reform::Method::pr) params.p = *p;

    std::vector<std::size_t> idx;
    if (points_sel == "train")
        idx = ds.train_indices();
    else if (points_sel == "test")
        idx = ds.test_indices();
    else if (points_sel == "all")
        for (std::size_t i = 0; i < ds.points.size(); ++i) idx.push_back(i);
    else {
        const std::size_t id = std::stoull(points_sel);
        for (std::size_t i = 0; i < ds.points.size(); ++i)
            if (ds.points[i].id == id) idx.push_back(i);
        if (idx.empty()) throw std::runtime_error("no data point with id " + points_sel);
    }

    std::vector<bench::SolveRow> rows;
    for (std::size_t i : idx) {
        const bench::DataPoint& pt = ds.points[i];
        const reform::MethodResult res =
            reform::solve_method(method, ds.cp, pt.x, pt.in_scen, params);
        rows.push_back({pt.id, method_name, res.parameter, res.objective, res.build_time_s,
                        res.solve_time_s, qp::status_name(res.status)});
    }
    const fs::path file = fs::path(g.out_dir) / ("results_" + method_name + ".csv");
    bench::write_results_csv(rows, file);
    std::cout << "wrote " << file.string() << " (" << rows.size() << " rows)\n";
    return 0;
}

int cmd_gen_targets(const GlobalArgs& g, double p) {
    const bench::RunConfig cfg = resolve_config(g);
    const bench::Dataset ds = load_or_fail(g);
    const bench::TargetMap targets = bench::gen_targets(ds, cfg, p);
    bench::write_targets(targets, p, g.out_dir);
    std::cout << "wrote targets for " << targets.size() << " training points at p=" << p
              << "\n";
    return 0;
}

int cmd_train(const GlobalArgs& g, double p) {
    const bench::RunConfig cfg = resolve_config(g);
    const bench::Dataset ds = load_or_fail(g);
    const bench::TargetMap targets = bench::read_targets(p, g.out_dir);

    const proxy::EqualityPartition part = proxy::equality_partition(ds.cp);
    std::vector<proxy::TrainPoint> pts;
    for (std::size_t i : ds.train_indices()) {
        const bench::DataPoint& pt = ds.points[i];
        const auto it = targets.find(pt.id);
        if (it == targets.end()) continue;
        pts.push_back({pt.x, pt.in_scen, it->second});
    }
    proxy::TrainConfig tc = cfg.train;
    tc.p = p;
    const proxy::TrainResult result = proxy::train(ds.cp, part, pts, tc);
    write_file(fs::path(g.out_dir) / ("weights_p" + p_tag(p) + ".json"),
               proxy::weights_to_json(result.weights));
    write_training_log(result.log, fs::path(g.out_dir) / "training_log.csv");
    std::cout << "trained on " << pts.size() << " points; final train loss "
              << (result.log.empty() ? 0.0 : result.log.back().train_loss) << "\n";
    return 0;
}

int cmd_select_p(const GlobalArgs& g, const std::vector<double>& grid) {
    bench::RunConfig cfg = resolve_config(g);
    if (!grid.empty()) cfg.p_grid = grid;
    const bench::Dataset ds = load_or_fail(g);
    const bench::SelectionArtifacts sel = bench::select_parameters(ds, cfg);
    bench::write_selection(sel, g.out_dir);
    std::cout << "selected p=" << sel.report.p_star << " (qualified="
              << (sel.report.qualified ? "yes" : "no") << "), s=" << sel.s_star << "\n";
    return 0;
}

int cmd_eval(const GlobalArgs& g, std::optional<double> p_opt) {
    const bench::RunConfig cfg = resolve_config(g);
    const bench::Dataset ds = load_or_fail(g);

    double p = 0.0;
    if (p_opt) {
        p = *p_opt;
    } else {
        const fs::path sel_file = fs::path(g.out_dir) / "selection.json";
        if (!fs::exists(sel_file))
            throw std::runtime_error("no --p given and no selection.json in " + g.out_dir +
                                     "; run `ccdispatch select-p` first");
        p = json::parse(read_file(sel_file)).at("p_star").get<double>();
    }
    const fs::path wfile = fs::path(g.out_dir) / ("weights_p" + p_tag(p) + ".json");
    if (!fs::exists(wfile))
        throw std::runtime_error("missing weights at " + wfile.string() +
                                 "; run `ccdispatch train --p " + p_tag(p) + "` first");
    const proxy::MlpWeights weights = proxy::weights_from_json(read_file(wfile));
    const proxy::EqualityPartition part = proxy::equality_partition(ds.cp);

    std::vector<bench::SolveRow> rows;
    double in_v = 0.0, out_v = 0.0, obj = 0.0;
    const auto idx = ds.test_indices();
    for (std::size_t i : idx) {
        const bench::DataPoint& pt = ds.points[i];
        const auto t0 = std::chrono::steady_clock::now();
        const auto [u, trace] = proxy::proxy_forward(weights, ds.cp, pt.x, pt.in_scen, p, part);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double f = ds.cp.objective(u);
        obj += f;
        in_v += bench::violation_rate(ds.cp, u, pt.x, pt.in_scen);
        out_v += bench::violation_rate(ds.cp, u, pt.x, pt.out_scen);
        rows.push_back({pt.id, "proxy", p, f, 0.0, dt, "optimal"});
    }
    bench::write_results_csv(rows, fs::path(g.out_dir) / "results_proxy.csv");
    const double np = static_cast<double>(idx.size());
    std::cout << "proxy @ p=" << p << ": mean objective " << obj / np << ", in-violation "
              << in_v / np << ", out-violation " << out_v / np << " over " << idx.size()
              << " test points\n";
    return 0;
}

int cmd_bench(const GlobalArgs& g, bool auto_stages) {
    const bench::RunConfig cfg = resolve_config(g);
    fs::create_directories(g.out_dir);
    const bench::BenchReport report = bench::run_benchmark(cfg, g.out_dir, auto_stages);
    bench::write_report(report, cfg, g.out_dir);
    std::printf("%-8s %10s %14s %14s %14s %12s\n", "method", "param", "obj_cost_rate",
                "in_violation", "out_violation", "mean_time_s");
    for (const auto& r : report.records)
        std::printf("%-8s %10.4g %14.4f %14.6f %14.6f %12.6f\n", r.method.c_str(),
                    r.parameter, r.objective_cost_rate, r.in_violation, r.out_violation,
                    r.mean_time_s);
    std::cout << "report written to " << g.out_dir << "/report.csv\n";
    return 0;
}

int cmd_sweep(const GlobalArgs& g, const std::string& method_name,
              const std::vector<double>& grid) {
    const bench::RunConfig cfg = resolve_config(g);
    const bench::Dataset ds = load_or_fail(g);
    const reform::Method method = reform::method_from_name(method_name);
    if (method != reform::Method::ro && method != reform::Method::pr)
        throw std::runtime_error("sweep supports --method ro or pr");
    const auto rows = bench::sweep_method(ds, cfg, method, grid);
    bench::write_sweep_csv(method_name, rows, fs::path(g.out_dir) / "sweep.csv", false);
    std::cout << "wrote " << rows.size() << "-row sweep to " << g.out_dir << "/sweep.csv\n";
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"joint chance-constrained VPP dispatch: reformulations and learned proxy"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "JSON config file (defaults to desk scale)");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override config seed");
    app.add_option("--out", g.out_dir, "artifact directory (default: out)");

    auto* gen_instance = app.add_subcommand("gen-instance", "generate a fleet instance");
    auto* gen_dataset = app.add_subcommand("gen-dataset", "generate the full dataset");

    auto* solve = app.add_subcommand("solve", "solve one reformulation on stored data");
    std::string method;
    solve->add_option("--method", method, "sa|cvar|ro|pr")->required();
    double s_val = 0.0, p_val = 0.0;
    auto* s_opt = solve->add_option("--s", s_val, "robust safety parameter");
    auto* p_opt = solve->add_option("--p", p_val, "polyhedron safety parameter");
    std::string points_sel = "test";
    solve->add_option("--points", points_sel, "train|test|all|<id> (default test)");

    auto* gen_targets = app.add_subcommand("gen-targets", "solve training targets at p");
    double targets_p = 0.0;
    gen_targets->add_option("--p", targets_p, "safety parameter")->required();

    auto* train = app.add_subcommand("train", "train the proxy at p");
    double train_p = 0.0;
    train->add_option("--p", train_p, "safety parameter")->required();

    auto* select_p = app.add_subcommand("select-p", "sweep p grid, train, select");
    std::vector<double> grid;
    select_p->add_option("--grid", grid, "comma-separated p grid")->delimiter(',');

    auto* eval = app.add_subcommand("eval", "evaluate trained proxy on the test split");
    double eval_p = 0.0;
    auto* eval_p_opt = eval->add_option("--p", eval_p, "which trained p to evaluate");

    auto* bench_cmd = app.add_subcommand("bench", "run the full benchmark");
    bool auto_stages = false;
    bench_cmd->add_flag("--auto", auto_stages, "produce missing stages in-flow");

    auto* sweep = app.add_subcommand("sweep", "parameter sweep for ro or pr");
    std::string sweep_method_name = "pr";
    sweep->add_option("--method", sweep_method_name, "ro|pr (default pr)");
    std::vector<double> sweep_grid;
    sweep->add_option("--grid", sweep_grid, "comma-separated parameter grid")
        ->delimiter(',')
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return 0;
        }
        std::cerr << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 1;
    }

    if (seed_opt->count() > 0) g.seed = seed_val;

    try {
        if (*gen_instance) return cmd_gen_instance(g);
        if (*gen_dataset) return cmd_gen_dataset(g);
        if (*solve) {
            if (method == "ro" && s_opt->count() == 0) {
                std::cerr << "solve --method ro requires --s\n";
                return 1;
            }
            if (method == "pr" && p_opt->count() == 0) {
                std::cerr << "solve --method pr requires --p\n";
                return 1;
            }
            std::optional<double> s_arg, p_arg;
            if (s_opt->count() > 0) s_arg = s_val;
            if (p_opt->count() > 0) p_arg = p_val;
            return cmd_solve(g, method, s_arg, p_arg, points_sel);
        }
        if (*gen_targets) return cmd_gen_targets(g, targets_p);
        if (*train) return cmd_train(g, train_p);
        if (*select_p) return cmd_select_p(g, grid);
        if (*eval) {
            std::optional<double> p_arg;
            if (eval_p_opt->count() > 0) p_arg = eval_p;
            return cmd_eval(g, p_arg);
        }
        if (*bench_cmd) return cmd_bench(g, auto_stages);
        if (*sweep) return cmd_sweep(g, sweep_method_name, sweep_grid);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace ccd::cli
