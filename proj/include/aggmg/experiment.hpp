#pragma once

/// @file experiment.hpp
/// Experiment configuration and the assemble -> partition -> setup -> solve
/// pipeline behind the command-line tool.
///
/// Schema (every key optional; defaults shown):
///
///   seed = 0
///   method = "mg"              # mg | pcg | pgmres | block_jacobi_gmres
///   [problem]
///   kind = "poisson_ip"        # poisson_ip | poisson_ldg | convection | convection_diffusion
///   dimension = 3
///   refinement = 3             # 2^refinement elements per axis
///   degree = 1
///   lower = [-1, -1, -1]
///   upper = [1, 1, 1]
///   diffusion = 1.0
///   velocity = [..]            # default (1,2,3)/|(1,2,3)| for convective kinds
///   peclet = 100               # convection_diffusion only; sets diffusion = |v| width / Pe
///   boundary = "dirichlet"     # or one entry per side: [x-, x+, y-, y+, z-, z+]
///   penalty = 8.0              # default (p+1)^2 / h
///   manufactured = true
///   [setup]
///   gamma = 0.03  delta = 1e-3  n_cut = 2^d-(d-1)  kappa = 2  hstar = false
///   smooth_hstar = false  smoother = "block_jacobi"  q = 3  sweep_cap = 100
///   candidates = <median first-level aggregate dofs>
///   [cycle]
///   t_pre = 3  t_post = 3  tol = 1e-7  max_iters = 500  gmres_restart = 1000
///   [output]
///   dir = "."
///   [sweep]                    # at most two axes; first is the outer loop
///   n_cut = [4, 5, 6]          # axes: refinement, degree, n_cut, peclet, method

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <variant>

#include "config.hpp"
#include "dg.hpp"
#include "matrix_market.hpp"
#include "solver.hpp"

namespace aggmg {

enum class Method { mg, pcg, pgmres, block_jacobi_gmres };

inline std::string to_string(Method m)
{
    switch (m) {
    case Method::mg: return "mg";
    case Method::pcg: return "pcg";
    case Method::pgmres: return "pgmres";
    case Method::block_jacobi_gmres: return "block_jacobi_gmres";
    }
    return "?";
}

inline Method parse_method(const std::string& s)
{
    if (s == "mg") return Method::mg;
    if (s == "pcg") return Method::pcg;
    if (s == "pgmres") return Method::pgmres;
    if (s == "block_jacobi_gmres") return Method::block_jacobi_gmres;
    throw ConfigError("unknown method '" + s + "'");
}

using AxisValue = std::variant<double, std::string>;

struct SweepAxis {
    std::string name;
    std::vector<AxisValue> values;
};

struct ExperimentConfig {
    ProblemSpec problem;
    /// Convection-diffusion only: Pe = |v| width / mu. 0 drops convection.
    std::optional<double> peclet;
    SetupConfig setup;
    CycleConfig cycle;
    Method method = Method::mg;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::vector<SweepAxis> sweep;

    void validate() const
    {
        problem.validate();
        setup.validate();
        cycle.validate();
        if (peclet && problem.kind != ProblemKind::convection_diffusion)
            throw ConfigError("peclet is only meaningful for convection_diffusion");
        if (peclet && !(*peclet >= 0.0)) throw ConfigError("peclet must be nonnegative");
        if (sweep.size() > 2) throw ConfigError("sweep: at most two axes");
        if (method == Method::pcg && problem.kind != ProblemKind::poisson_ip && problem.kind != ProblemKind::poisson_ldg)
            throw ConfigError("pcg needs a symmetric problem (poisson_ip or poisson_ldg)");
    }
};

namespace detail {

inline const std::vector<std::string>& axis_names()
{
    static const std::vector<std::string> names{"refinement", "degree", "n_cut", "peclet", "method"};
    return names;
}

template <class T>
T config_get(const nlohmann::ordered_json& v, const std::string& key)
{
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("");
            if (std::is_unsigned_v<T> && v.get<long long>() < 0) throw ConfigError("");
        } else {
            if (!v.is_number()) throw ConfigError("");
        }
        return v.get<T>();
    } catch (const std::exception&) {
        throw ConfigError("bad value for '" + key + "': " + v.dump());
    }
}

inline std::array<double, 3> config_triple(const nlohmann::ordered_json& v, const std::string& key, int dimension)
{
    if (!v.is_array() || v.size() != static_cast<std::size_t>(dimension))
        throw ConfigError("'" + key + "' needs " + std::to_string(dimension) + " numbers");
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < v.size(); ++a) out[a] = config_get<double>(v[a], key);
    return out;
}

inline BoundaryType parse_boundary(const std::string& s)
{
    if (s == "dirichlet") return BoundaryType::dirichlet;
    if (s == "neumann") return BoundaryType::neumann;
    throw ConfigError("unknown boundary type '" + s + "'");
}

inline std::string to_string(BoundaryType b) { return b == BoundaryType::dirichlet ? "dirichlet" : "neumann"; }

inline void reject_unknown(const nlohmann::ordered_json& section, const std::string& name,
                           const std::vector<std::string>& known)
{
    for (auto it = section.begin(); it != section.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown key '" + it.key() + "'" + (name.empty() ? "" : " in [" + name + "]"));
}

} // namespace detail

/// Sets velocity and diffusion from the Peclet number.
inline void apply_peclet(ProblemSpec& p, double pe, bool velocity_given)
{
    const int d = p.mesh.dimension;
    if (pe == 0.0) {
        p.velocity = {0.0, 0.0, 0.0};
        p.diffusion = 1.0;
        return;
    }
    if (!velocity_given) p.velocity = ProblemSpec::default_velocity(d);
    double vn = 0.0;
    for (int a = 0; a < d; ++a) vn += p.velocity[static_cast<std::size_t>(a)] * p.velocity[static_cast<std::size_t>(a)];
    const double width = p.mesh.upper[0] - p.mesh.lower[0];
    p.diffusion = std::isinf(pe) ? 0.0 : std::sqrt(vn) * width / pe;
}

/// Builds a validated config from parsed text. Unknown sections/keys throw.
inline ExperimentConfig experiment_from_json(const nlohmann::ordered_json& root)
{
    using detail::config_get;
    ExperimentConfig c;
    static const std::vector<std::string> sections{"", "problem", "setup", "cycle", "output", "sweep"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (std::find(sections.begin(), sections.end(), it.key()) == sections.end())
            throw ConfigError("unknown section [" + it.key() + "]");
    const auto sec = [&](const std::string& s) {
        return root.contains(s) ? root.at(s) : nlohmann::ordered_json::object();
    };

    const auto top = sec("");
    detail::reject_unknown(top, "", {"seed", "method"});
    if (top.contains("seed")) c.seed = config_get<std::uint64_t>(top["seed"], "seed");
    if (top.contains("method")) c.method = parse_method(config_get<std::string>(top["method"], "method"));

    const auto pr = sec("problem");
    detail::reject_unknown(pr, "problem", {"kind", "dimension", "refinement", "degree", "lower", "upper", "diffusion",
                                           "velocity", "peclet", "boundary", "penalty", "manufactured"});
    ProblemSpec& p = c.problem;
    if (pr.contains("kind")) {
        try {
            p.kind = parse_problem_kind(config_get<std::string>(pr["kind"], "kind"));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    if (pr.contains("dimension")) p.mesh.dimension = config_get<int>(pr["dimension"], "dimension");
    if (p.mesh.dimension < 1 || p.mesh.dimension > 3) throw ConfigError("dimension must be 1, 2 or 3");
    if (pr.contains("refinement")) p.mesh.refinement = config_get<int>(pr["refinement"], "refinement");
    if (pr.contains("degree")) p.mesh.degree = config_get<int>(pr["degree"], "degree");
    if (pr.contains("lower")) p.mesh.lower = detail::config_triple(pr["lower"], "lower", p.mesh.dimension);
    if (pr.contains("upper")) p.mesh.upper = detail::config_triple(pr["upper"], "upper", p.mesh.dimension);
    for (int a = p.mesh.dimension; a < 3; ++a) {
        p.mesh.lower[static_cast<std::size_t>(a)] = -1.0;
        p.mesh.upper[static_cast<std::size_t>(a)] = 1.0;
    }
    if (pr.contains("diffusion")) p.diffusion = config_get<double>(pr["diffusion"], "diffusion");
    const bool convective = p.kind == ProblemKind::convection || p.kind == ProblemKind::convection_diffusion;
    if (pr.contains("velocity")) p.velocity = detail::config_triple(pr["velocity"], "velocity", p.mesh.dimension);
    else if (convective) p.velocity = ProblemSpec::default_velocity(p.mesh.dimension);
    if (pr.contains("boundary")) {
        const auto& b = pr["boundary"];
        if (b.is_string()) {
            p.boundary.fill(detail::parse_boundary(b.get<std::string>()));
        } else if (b.is_array() && b.size() == static_cast<std::size_t>(2 * p.mesh.dimension)) {
            for (std::size_t s = 0; s < b.size(); ++s) p.boundary[s] = detail::parse_boundary(config_get<std::string>(b[s], "boundary"));
        } else {
            throw ConfigError("'boundary' needs a string or " + std::to_string(2 * p.mesh.dimension) + " strings");
        }
    }
    if (pr.contains("penalty")) p.penalty = config_get<double>(pr["penalty"], "penalty");
    if (pr.contains("manufactured")) p.manufactured = config_get<bool>(pr["manufactured"], "manufactured");
    if (pr.contains("peclet")) {
        c.peclet = config_get<double>(pr["peclet"], "peclet");
        if (p.kind != ProblemKind::convection_diffusion) throw ConfigError("peclet is only meaningful for convection_diffusion");
        if (!(*c.peclet >= 0.0)) throw ConfigError("peclet must be nonnegative");
        if (pr.contains("diffusion")) throw ConfigError("give either peclet or diffusion, not both");
        apply_peclet(p, *c.peclet, pr.contains("velocity"));
    }

    const auto su = sec("setup");
    detail::reject_unknown(su, "setup", {"gamma", "delta", "n_cut", "kappa", "hstar", "smooth_hstar", "smoother", "q",
                                         "sweep_cap", "candidates"});
    SetupConfig& s = c.setup;
    if (su.contains("gamma")) s.gamma = config_get<double>(su["gamma"], "gamma");
    if (su.contains("delta")) s.delta = config_get<double>(su["delta"], "delta");
    if (su.contains("n_cut")) s.n_cut = config_get<std::size_t>(su["n_cut"], "n_cut");
    if (su.contains("kappa")) s.kappa = config_get<std::size_t>(su["kappa"], "kappa");
    if (su.contains("hstar")) s.hstar_top = config_get<bool>(su["hstar"], "hstar");
    if (su.contains("smooth_hstar")) s.smooth_hstar = config_get<bool>(su["smooth_hstar"], "smooth_hstar");
    if (su.contains("smoother")) {
        try {
            s.smoother = parse_smoother_kind(config_get<std::string>(su["smoother"], "smoother"));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }
    if (su.contains("q")) s.q = config_get<int>(su["q"], "q");
    if (su.contains("sweep_cap")) s.sweep_cap = config_get<std::size_t>(su["sweep_cap"], "sweep_cap");
    if (su.contains("candidates")) s.candidates = config_get<std::size_t>(su["candidates"], "candidates");
    s.n_cut = s.resolved_n_cut(p.mesh.dimension);

    const auto cy = sec("cycle");
    detail::reject_unknown(cy, "cycle", {"t_pre", "t_post", "tol", "max_iters", "gmres_restart"});
    if (cy.contains("t_pre")) c.cycle.t_pre = config_get<std::size_t>(cy["t_pre"], "t_pre");
    if (cy.contains("t_post")) c.cycle.t_post = config_get<std::size_t>(cy["t_post"], "t_post");
    if (cy.contains("tol")) c.cycle.tol = config_get<double>(cy["tol"], "tol");
    if (cy.contains("max_iters")) c.cycle.max_iters = config_get<std::size_t>(cy["max_iters"], "max_iters");
    if (cy.contains("gmres_restart")) c.cycle.gmres_restart = config_get<std::size_t>(cy["gmres_restart"], "gmres_restart");

    const auto out = sec("output");
    detail::reject_unknown(out, "output", {"dir"});
    if (out.contains("dir")) c.out_dir = config_get<std::string>(out["dir"], "dir");

    const auto sw = sec("sweep");
    detail::reject_unknown(sw, "sweep", detail::axis_names());
    for (auto it = sw.begin(); it != sw.end(); ++it) {
        SweepAxis axis{it.key(), {}};
        const auto& v = it.value();
        if (!v.is_array() || v.empty()) throw ConfigError("sweep axis '" + it.key() + "' needs a nonempty array");
        for (const auto& e : v) {
            if (axis.name == "method") axis.values.emplace_back(config_get<std::string>(e, "method"));
            else axis.values.emplace_back(config_get<double>(e, axis.name));
        }
        c.sweep.push_back(std::move(axis));
    }

    c.setup.seed = c.seed;
    try {
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline ExperimentConfig parse_experiment(const std::string& text) { return experiment_from_json(parse_config_text(text)); }
inline ExperimentConfig load_experiment(const std::string& path) { return experiment_from_json(load_config(path)); }

/// Fully materialised configuration, for echoing in reports.
inline nlohmann::ordered_json resolved_config(const ExperimentConfig& c)
{
    const auto& p = c.problem;
    const auto d = static_cast<std::size_t>(p.mesh.dimension);
    auto vec = [&](const std::array<double, 3>& v) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < d; ++i) a.push_back(v[i]);
        return a;
    };
    nlohmann::ordered_json bnd = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < 2 * d; ++s) bnd.push_back(detail::to_string(p.boundary[s]));
    const double h = p.mesh.spacing(0);
    const double pen = p.penalty ? *p.penalty : (p.mesh.degree + 1.0) * (p.mesh.degree + 1.0) / h;

    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["method"] = to_string(c.method);
    nlohmann::ordered_json pj;
    pj["kind"] = to_string(p.kind);
    pj["dimension"] = p.mesh.dimension;
    pj["refinement"] = p.mesh.refinement;
    pj["degree"] = p.mesh.degree;
    pj["lower"] = vec(p.mesh.lower);
    pj["upper"] = vec(p.mesh.upper);
    pj["diffusion"] = p.diffusion;
    pj["velocity"] = vec(p.velocity);
    if (c.peclet) pj["peclet"] = std::isinf(*c.peclet) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(*c.peclet);
    else pj["peclet"] = nullptr;
    pj["boundary"] = bnd;
    pj["penalty"] = pen;
    pj["manufactured"] = p.manufactured;
    j["problem"] = pj;
    const auto& s = c.setup;
    j["setup"] = {{"gamma", s.gamma},
                  {"delta", s.delta},
                  {"n_cut", s.resolved_n_cut(p.mesh.dimension)},
                  {"kappa", s.kappa},
                  {"hstar", s.hstar_top},
                  {"smooth_hstar", s.smooth_hstar},
                  {"smoother", to_string(s.smoother)},
                  {"q", s.q},
                  {"sweep_cap", s.sweep_cap},
                  {"candidates", s.candidates ? nlohmann::ordered_json(*s.candidates) : nlohmann::ordered_json(nullptr)}};
    j["cycle"] = {{"t_pre", c.cycle.t_pre},
                  {"t_post", c.cycle.t_post},
                  {"tol", c.cycle.tol},
                  {"max_iters", c.cycle.max_iters},
                  {"gmres_restart", c.cycle.gmres_restart}};
    j["output"] = {{"dir", c.out_dir}};
    nlohmann::ordered_json sw = nlohmann::ordered_json::object();
    for (const auto& a : c.sweep) {
        nlohmann::ordered_json vals = nlohmann::ordered_json::array();
        for (const auto& v : a.values) {
            if (std::holds_alternative<std::string>(v)) vals.push_back(std::get<std::string>(v));
            else if (std::isinf(std::get<double>(v))) vals.push_back("inf");
            else vals.push_back(std::get<double>(v));
        }
        sw[a.name] = vals;
    }
    j["sweep"] = sw;
    return j;
}

// ---------------------------------------------------------------------------
// Pipeline

struct ExperimentResult {
    SolveReport report;
    std::optional<MgHierarchy> hierarchy;
    std::size_t dof = 0;
    std::size_t nnz = 0;
    double true_residual = 0.0;  ///< |f - A u| / |f| recomputed from scratch
    std::optional<double> l2_error;
    double assemble_time = 0.0;
    double setup_time = 0.0;
};

inline ExperimentResult run_experiment(const ExperimentConfig& c)
{
    c.validate();
    ExperimentResult res;
    auto t0 = std::chrono::steady_clock::now();
    const DgSystem sys = assemble(c.problem);
    res.assemble_time = detail::seconds_since(t0);
    res.dof = sys.a.rows();
    res.nnz = sys.a.nnz();

    Vector u;
    if (c.method == Method::block_jacobi_gmres) {
        const BlockDiagonalInverse d(sys.a, sys.blocks);
        std::tie(u, res.report) = pgmres(as_operator(sys.a), block_jacobi_operator(d), sys.f, c.cycle);
    } else {
        t0 = std::chrono::steady_clock::now();
        res.hierarchy = build(sys.a, sys.mesh.graph, c.problem.mesh.dimension, c.setup);
        res.setup_time = detail::seconds_since(t0);
        const MgHierarchy& h = *res.hierarchy;
        switch (c.method) {
        case Method::mg: std::tie(u, res.report) = solve_mg(h, sys.f, c.cycle); break;
        case Method::pcg: std::tie(u, res.report) = pcg(as_operator(sys.a), vcycle_operator(h, c.cycle), sys.f, c.cycle); break;
        default: std::tie(u, res.report) = pgmres(as_operator(sys.a), vcycle_operator(h, c.cycle), sys.f, c.cycle); break;
        }
        res.report.levels = level_sizes(h);
    }
    if (res.report.levels.empty()) res.report.levels = {{res.dof, res.nnz}};

    Vector r(sys.f.size());
    spmv(sys.a, u, r);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = sys.f[i] - r[i];
    const double fn = norm2(sys.f);
    res.true_residual = fn > 0.0 ? norm2(r) / fn : norm2(r);
    if (sys.exact) {
        const ManufacturedSolution ex = *sys.exact;
        res.l2_error = aggmg::l2_error(c.problem, u, [&](const Point& x) { return ex.value(x); });
    }
    return res;
}

/// Report JSON. Everything outside "timing" is deterministic for a fixed config.
inline nlohmann::ordered_json report_json(const ExperimentConfig& c, const ExperimentResult& r)
{
    ExperimentConfig echo = c;
    if (r.hierarchy && !echo.setup.candidates) echo.setup.candidates = r.hierarchy->n_candidates;
    nlohmann::ordered_json j;
    j["config"] = resolved_config(echo);
    j["dof"] = r.dof;
    j["nnz"] = r.nnz;
    j["iterations"] = r.report.iterations;
    j["converged"] = r.report.converged;
    j["status"] = r.report.status;
    j["final_residual"] = r.report.final_residual();
    j["true_residual"] = r.true_residual;
    j["l2_error"] = r.l2_error ? nlohmann::ordered_json(*r.l2_error) : nlohmann::ordered_json(nullptr);
    j["residual_history"] = r.report.residual_history;
    nlohmann::ordered_json lv = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < r.report.levels.size(); ++k)
        lv.push_back({{"k", k}, {"dof", r.report.levels[k].dof}, {"nnz", r.report.levels[k].nnz}});
    j["levels"] = lv;
    j["hierarchy"] = r.hierarchy ? nlohmann::ordered_json(hierarchy_summary(*r.hierarchy)) : nlohmann::ordered_json(nullptr);
    j["timing"] = {{"assemble", r.assemble_time}, {"setup", r.setup_time}, {"solve", r.report.wall_time}};
    return j;
}

inline std::string hierarchy_csv(const SolveReport& r)
{
    std::ostringstream out;
    out << "k,dof,nnz\n";
    for (std::size_t k = 0; k < r.levels.size(); ++k) out << k << ',' << r.levels[k].dof << ',' << r.levels[k].nnz << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Sweeps

/// Returns a copy of c with one axis value applied.
inline ExperimentConfig with_axis(ExperimentConfig c, const std::string& name, const AxisValue& v)
{
    if (name == "method") {
        c.method = parse_method(std::get<std::string>(v));
        return c;
    }
    const double x = std::get<double>(v);
    auto as_int = [&]() {
        if (x != std::floor(x) || x < 0.0) throw ConfigError("sweep axis '" + name + "' needs nonnegative integers");
        return static_cast<int>(x);
    };
    if (name == "refinement") c.problem.mesh.refinement = as_int();
    else if (name == "degree") c.problem.mesh.degree = as_int();
    else if (name == "n_cut") c.setup.n_cut = static_cast<std::size_t>(as_int());
    else if (name == "peclet") {
        if (c.problem.kind != ProblemKind::convection_diffusion) throw ConfigError("peclet axis needs convection_diffusion");
        c.peclet = x;
        const auto& v = c.problem.velocity;
        apply_peclet(c.problem, x, v[0] != 0.0 || v[1] != 0.0 || v[2] != 0.0);
    } else
        throw ConfigError("unknown sweep axis '" + name + "'");
    return c;
}

struct SweepRow {
    std::vector<std::string> axis_values;
    std::string method;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t dof = 0;
    double final_residual = 0.0;
    std::string status;
};

inline std::string format_axis(const AxisValue& v)
{
    if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
    const double x = std::get<double>(v);
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s << std::setprecision(12) << x;
    return s.str();
}

/// Runs every cell of the sweep (a single cell when no axes are given). Cell
/// failures are recorded in the row; non-converged cells report max_iters.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base,
                                       const std::function<void(const SweepRow&)>& on_row = {})
{
    std::vector<std::vector<AxisValue>> cells{{}};
    for (const auto& axis : base.sweep) {
        std::vector<std::vector<AxisValue>> next;
        for (const auto& prefix : cells)
            for (const auto& v : axis.values) {
                auto row = prefix;
                row.push_back(v);
                next.push_back(std::move(row));
            }
        cells = std::move(next);
    }
    std::vector<SweepRow> rows;
    for (const auto& cell : cells) {
        SweepRow row;
        ExperimentConfig c = base;
        try {
            for (std::size_t a = 0; a < cell.size(); ++a) {
                row.axis_values.push_back(format_axis(cell[a]));
                c = with_axis(std::move(c), base.sweep[a].name, cell[a]);
            }
            row.method = to_string(c.method);
            const auto res = run_experiment(c);
            row.converged = res.report.converged;
            row.iterations = row.converged ? res.report.iterations : c.cycle.max_iters;
            row.dof = res.dof;
            row.final_residual = res.true_residual;
            row.status = res.report.status;
        } catch (const std::exception& e) {
            row.axis_values.resize(cell.size());
            for (std::size_t a = 0; a < cell.size(); ++a) row.axis_values[a] = format_axis(cell[a]);
            if (row.method.empty()) row.method = to_string(c.method);
            row.converged = false;
            row.iterations = c.cycle.max_iters;
            row.status = std::string("error: ") + e.what();
        }
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string csv_field(std::string s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

inline std::string sweep_csv(const ExperimentConfig& base, const std::vector<SweepRow>& rows)
{
    std::ostringstream out;
    bool method_axis = false;
    for (const auto& a : base.sweep) {
        out << a.name << ',';
        method_axis = method_axis || a.name == "method";
    }
    out << (method_axis ? "" : "method,") << "iterations,converged,dof,final_residual,status\n";
    char buf[32];
    for (const auto& r : rows) {
        for (const auto& v : r.axis_values) out << csv_field(v) << ',';
        std::snprintf(buf, sizeof buf, "%.6e", r.final_residual);
        if (!method_axis) out << r.method << ',';
        out << r.iterations << ',' << (r.converged ? "true" : "false") << ',' << r.dof << ','
            << buf << ',' << csv_field(r.status) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Files

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

inline nlohmann::ordered_json blocks_json(const BlockPartition& b)
{
    return {{"n_blocks", b.n_blocks()},
            {"dimension", b.dimension()},
            {"offsets", std::vector<std::size_t>(b.offsets().begin(), b.offsets().end())}};
}

/// Writes A.mtx, rhs.txt, graph.txt and blocks.json into dir.
inline void export_system(const ProblemSpec& spec, const std::filesystem::path& dir)
{
    const DgSystem sys = assemble(spec);
    std::filesystem::create_directories(dir);
    write_matrix_market((dir / "A.mtx").string(), sys.a);
    std::ostringstream rhs;
    char buf[32];
    for (double v : sys.f) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        rhs << buf << '\n';
    }
    write_text(dir / "rhs.txt", rhs.str());
    write_graph((dir / "graph.txt").string(), sys.mesh.graph);
    write_text(dir / "blocks.json", blocks_json(sys.blocks).dump(1) + "\n");
}

} // namespace aggmg
