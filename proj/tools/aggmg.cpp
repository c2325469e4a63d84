// aggmg: assemble -> partition -> setup -> solve experiments from a config file.
//
//   aggmg solve     --config run.toml [--seed N] [--out DIR]
//   aggmg sweep     --config run.toml [--axis n_cut=4,6,8] [--out DIR]
//   aggmg export    --config run.toml [--out DIR]
//   aggmg partition --config run.toml [--out DIR]
//
// Exit codes: 0 ok / converged, 2 not converged, 1 error.

#include <iostream>

#include "CLI11.hpp"
#include "aggmg/experiment.hpp"

namespace fs = std::filesystem;
using namespace aggmg;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "configuration file")->required();
    cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
    cmd->add_option("--out", c.out, "output directory (overrides [output] dir)");
}

ExperimentConfig load(const Common& c)
{
    ExperimentConfig cfg = load_experiment(c.config);
    if (c.seed) cfg.seed = cfg.setup.seed = *c.seed;
    if (c.out) cfg.out_dir = *c.out;
    return cfg;
}

/// "name=v1,v2,..." -> sweep axis.
SweepAxis parse_axis(const std::string& spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--axis expects name=v1,v2,...");
    const std::string name = spec.substr(0, eq);
    std::string list = spec.substr(eq + 1);
    std::string toml = "[sweep]\n" + name + " = [";
    std::stringstream ss(list);
    std::string item;
    bool first = true;
    while (std::getline(ss, item, ',')) {
        if (!first) toml += ", ";
        first = false;
        toml += name == "method" ? "\"" + item + "\"" : item;
    }
    toml += "]\n";
    auto cfg = parse_experiment(toml);
    return cfg.sweep.at(0);
}

int cmd_solve(const Common& c)
{
    const ExperimentConfig cfg = load(c);
    const ExperimentResult res = run_experiment(cfg);
    const fs::path dir = cfg.out_dir;
    write_text(dir / "report.json", report_json(cfg, res).dump(2) + "\n");
    write_text(dir / "hierarchy.csv", hierarchy_csv(res.report));
    std::cout << to_string(cfg.method) << ": " << res.report.status << " after " << res.report.iterations
              << " iterations, relative residual " << res.true_residual << " (dof " << res.dof << ", levels "
              << res.report.levels.size() << ")\n";
    return res.report.converged ? 0 : 2;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& axes)
{
    ExperimentConfig cfg = load(c);
    if (!axes.empty()) {
        cfg.sweep.clear();
        for (const auto& a : axes) cfg.sweep.push_back(parse_axis(a));
        if (cfg.sweep.size() > 2) throw ConfigError("sweep: at most two axes");
    }
    const fs::path dir = cfg.out_dir;
    bool all = true;
    const auto rows = run_sweep(cfg, [&](const SweepRow& r) {
        std::cout << (r.axis_values.empty() ? std::string("cell") : [&] {
            std::string s;
            for (std::size_t a = 0; a < r.axis_values.size(); ++a)
                s += (a ? " " : "") + cfg.sweep[a].name + "=" + r.axis_values[a];
            return s;
        }()) << ": " << r.method << " " << r.iterations << (r.converged ? "" : " (" + r.status + ")") << '\n';
        all = all && r.converged;
    });
    write_text(dir / "sweep.csv", sweep_csv(cfg, rows));
    write_text(dir / "sweep_config.json", resolved_config(cfg).dump(2) + "\n");
    return all ? 0 : 2;
}

int cmd_export(const Common& c)
{
    const ExperimentConfig cfg = load(c);
    export_system(cfg.problem, cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "config.json", resolved_config(cfg).dump(2) + "\n");
    std::cout << "wrote A.mtx, rhs.txt, graph.txt, blocks.json to " << cfg.out_dir << '\n';
    return 0;
}

int cmd_partition(const Common& c)
{
    const ExperimentConfig cfg = load(c);
    const CartesianMesh mesh = build_cartesian(cfg.problem.mesh);
    const AggregateHierarchy h = build_hierarchy(mesh.graph, cfg.problem.mesh.dimension);
    write_text(fs::path(cfg.out_dir) / "partition.json", hierarchy_to_json(h).dump(1) + "\n");
    std::cout << "aggregate levels:";
    for (auto n : h.counts) std::cout << ' ' << n;
    std::cout << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Geometric adaptive smoothed-aggregation multigrid for DG"};
    app.require_subcommand(1);
    Common solve_opts, sweep_opts, export_opts, part_opts;
    std::vector<std::string> axes;
    auto* solve = app.add_subcommand("solve", "assemble, set up and solve; writes report.json and hierarchy.csv");
    add_common(solve, solve_opts);
    auto* sweep = app.add_subcommand("sweep", "run a one- or two-axis parameter sweep; writes sweep.csv");
    add_common(sweep, sweep_opts);
    sweep->add_option("--axis", axes, "sweep axis name=v1,v2,... (replaces [sweep]); repeatable");
    auto* exp = app.add_subcommand("export", "write A.mtx, rhs.txt, graph.txt and blocks.json");
    add_common(exp, export_opts);
    auto* part = app.add_subcommand("partition", "write the aggregate hierarchy as partition.json");
    add_common(part, part_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        if (*solve) return cmd_solve(solve_opts);
        if (*sweep) return cmd_sweep(sweep_opts, axes);
        if (*exp) return cmd_export(export_opts);
        if (*part) return cmd_partition(part_opts);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
