// dgvi: benchmark, solve and simulate affine variational inequalities.
//
//   dgvi bench      random strongly monotone AVIs, residual traces per algorithm
//   dgvi solve      one AVI from a JSON file
//   dgvi crossroad  receding-horizon simulation of the crossing game
//   dgvi validate   check an AVI or game file
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgvi/avi.hpp"
#include "dgvi/game.hpp"
#include "dgvi/json_io.hpp"
#include "dgvi/rhc.hpp"
#include "dgvi/scenario.hpp"
#include "dgvi/solvers.hpp"

namespace fs = std::filesystem;
using namespace dgvi;
using io::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Common {
    double tol = 1e-3;
    int max_iter = 10000;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

struct BenchArgs {
    int instances = 10;
    int n = 100;
    int m = 20;
    std::vector<std::string> algos;
    bool timing = false;
};

struct SolveArgs {
    std::string problem;
    std::string algo = "dr";
};

struct CrossroadArgs {
    std::string spec_file;
    int vehicles = 0;  // 0: all
    int steps = 300;
    int horizon = 0;   // 0: spec value
    std::string x0 = "default";
    bool no_shortcut = false;
};

struct ValidateArgs {
    std::string file;
    bool game = false;
};

SolverConfig solver_config(const Common& c) {
    SolverConfig cfg;
    cfg.tol = c.tol;
    cfg.max_iter = c.max_iter;
    return cfg;
}

std::string out_path(const Common& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

void write_error(const Common& c, const std::string& kind, const std::string& message, json extra = json::object()) {
    json j = std::move(extra);
    j["error"] = kind;
    j["message"] = message;
    std::cerr << "dgvi: " << kind << ": " << message << '\n';
    try {
        io::write_json_file(out_path(c, "error.json"), j);
    } catch (const std::exception&) {
    }
}

double median(std::vector<double> v) {
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::vector<Algorithm> parse_algos(const std::vector<std::string>& names) {
    std::vector<Algorithm> out;
    if (names.empty()) return {std::begin(kAllAlgorithms), std::end(kAllAlgorithms)};
    for (const auto& name : names) {
        const auto a = parse_algorithm(name);
        if (!a) throw CLI::ValidationError("--algos", "unknown algorithm " + name);
        out.push_back(*a);
    }
    return out;
}

int cmd_bench(const Common& c, const BenchArgs& b) {
    const auto algos = parse_algos(b.algos);
    const SolverConfig cfg = solver_config(c);
    std::ofstream csv(out_path(c, "bench_residuals.csv"));
    if (!csv) throw Error("cannot write " + out_path(c, "bench_residuals.csv"));
    write_trace_header(csv);
    json runs = json::array();
    std::vector<std::vector<double>> iters(algos.size());
    bool failed = false;
    for (int k = 0; k < b.instances; ++k) {
        const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
        const AviProblem p = random_avi(b.n, b.m, seed);
        for (std::size_t a = 0; a < algos.size(); ++a) {
            json row;
            row["instance_id"] = k;
            row["seed"] = seed;
            row["algorithm"] = to_string(algos[a]);
            try {
                const SolverReport r = solve_avi(algos[a], p, cfg);
                write_trace_rows(csv, r, k, b.timing);
                row["status"] = to_string(r.status);
                row["iterations"] = r.iterations;
                row["final_residual"] = r.final_residual();
                row["wall_time_s"] = b.timing ? r.wall_time : 0.0;
                if (r.converged()) iters[a].push_back(r.iterations);
            } catch (const Error& e) {
                failed = true;
                row["status"] = "error";
                row["message"] = e.what();
            }
            runs.push_back(std::move(row));
        }
    }
    json medians = json::object();
    for (std::size_t a = 0; a < algos.size(); ++a) {
        json m;
        m["converged_runs"] = iters[a].size();
        m["median_iterations"] = iters[a].empty() ? json(nullptr) : json(median(iters[a]));
        medians[to_string(algos[a])] = std::move(m);
    }
    json summary;
    summary["instances"] = b.instances;
    summary["n"] = b.n;
    summary["m"] = b.m;
    summary["seed"] = c.seed;
    summary["tol"] = c.tol;
    summary["max_iter"] = c.max_iter;
    summary["runs"] = std::move(runs);
    summary["medians"] = std::move(medians);
    io::write_json_file(out_path(c, "bench_summary.json"), summary);
    return failed ? kFailure : kOk;
}

int cmd_solve(const Common& c, const SolveArgs& s) {
    const auto algo = parse_algorithm(s.algo);
    if (!algo) throw CLI::ValidationError("--algo", "unknown algorithm " + s.algo);
    AviProblem p = io::read_avi(s.problem);
    SolverReport r;
    try {
        r = solve_avi(*algo, p, solver_config(c));
    } catch (const Infeasible& e) {
        write_error(c, "infeasible", e.what());
        return kFailure;
    }
    json j;
    j["algorithm"] = r.algorithm;
    j["status"] = to_string(r.status);
    j["iterations"] = r.iterations;
    j["residual"] = r.final_residual();
    j["solution"] = io::to_json(r.solution);
    if (!r.converged()) {
        write_error(c, "iter_limit", "no convergence within " + std::to_string(c.max_iter) + " iterations", j);
        return kFailure;
    }
    io::write_json_file(out_path(c, "solution.json"), j);
    return kOk;
}

std::string num(double x) {
    if (std::isnan(x)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// t, vehicle (1-based), distance to the predecessor (empty for leaders),
/// velocity, applied total acceleration (empty on the final state).
void write_vehicle_csv(std::ostream& out, const CrossroadSpec& s, const ClosedLoopTrace& tr) {
    out << "t,vehicle,distance,velocity,acceleration\n";
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        const Vec d = crossroad_distances(s, tr.states[t]);
        const Vec v = crossroad_speeds(s, tr.states[t]);
        for (int i = 0; i < s.vehicles(); ++i) {
            const double acc = t < tr.total_inputs.size() ? tr.total_inputs[t][i] : NAN;
            out << t << ',' << i + 1 << ',' << num(d[i]) << ',' << num(v[i]) << ',' << num(acc) << '\n';
        }
    }
}

int cmd_crossroad(const Common& c, const CrossroadArgs& a) {
    CrossroadSpec spec = a.spec_file.empty() ? default_15_vehicle_spec()
                                             : io::crossroad_spec_from_json(io::read_json_file(a.spec_file));
    if (a.vehicles > 0) spec = spec.prefix(a.vehicles);
    if (a.horizon > 0) spec.horizon = a.horizon;
    const CompiledGameVi vi = compile_vi(build_crossroad(spec));
    Vec x0;
    if (a.x0 == "zero") {
        x0 = Vec::Zero(vi.game.states());
    } else {
        x0 = crossroad_initial_state(spec);
    }
    RhcOptions opt;
    opt.terminal_shortcut = !a.no_shortcut;
    ClosedLoopTrace tr;
    try {
        tr = simulate(vi, x0, a.steps, solver_config(c), opt);
    } catch (const InfeasibleAtStep& e) {
        json extra;
        extra["step"] = e.step();
        write_error(c, "infeasible", e.what(), extra);
        return kFailure;
    }
    json j = io::trace_to_json(tr);
    json meta;
    meta["spec"] = io::crossroad_spec_to_json(spec);
    meta["horizon"] = spec.horizon;
    meta["horizon_note"] = "horizon is a tool default, not taken from measured data";
    meta["parameter_note"] = "speed, distance and acceleration limits are tool defaults";
    meta["tol"] = c.tol;
    meta["max_iter"] = c.max_iter;
    meta["terminal_shortcut"] = opt.terminal_shortcut;
    meta["all_converged"] = tr.all_converged();
    meta["min_margin"] = tr.min_margin();
    j["metadata"] = std::move(meta);
    io::write_json_file(out_path(c, "trace.json"), j);
    {
        std::ofstream out(out_path(c, "iterations.csv"));
        io::write_iterations_csv(out, tr);
    }
    {
        std::ofstream out(out_path(c, "vehicles.csv"));
        write_vehicle_csv(out, spec, tr);
    }
    return tr.all_converged() ? kOk : kFailure;
}

int cmd_validate(const Common&, const ValidateArgs& v) {
    json j;
    bool ok = true;
    if (v.game) {
        const LqGame g = io::read_game(v.file);
        j["agents"] = g.agents();
        j["states"] = g.states();
        j["horizon"] = g.T;
        try {
            const auto d = check_assumption3(g);
            j["stable_eigenvalues"] = d.stable_eigenvalues;
            j["required_stable_eigenvalues"] = d.required;
            j["complementary"] = d.complementary;
            ok = ok && d.holds();
        } catch (const SingularA& e) {
            j["assumption_error"] = e.what();
            ok = false;
        }
        try {
            const auto c = compile_vi(g);
            const auto mc = monotonicity_constants(c.M);
            j["mu"] = mc.mu;
            j["L"] = mc.L;
            j["closed_loop_spectral_radius"] = spectral_radius(c.riccati.Acl);
        } catch (const Error& e) {
            j["compile_error"] = e.what();
            ok = false;
        }
    } else {
        const auto d = validate(io::read_avi(v.file));
        j["dimensions_ok"] = d.dimensions_ok;
        j["strongly_monotone"] = d.strongly_monotone;
        j["feasible"] = d.feasible;
        j["strictly_feasible"] = d.strictly_feasible;
        j["mu"] = d.mu;
        j["L"] = d.L;
        j["max_slack"] = d.max_slack;
        j["messages"] = d.messages;
        ok = d.ok();
    }
    j["ok"] = ok;
    std::cout << j.dump(2) << '\n';
    return ok ? kOk : kFailure;
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--tol", c.tol, "natural-residual tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", c.max_iter, "iteration limit per solve")->check(CLI::PositiveNumber);
    sub->add_option("--seed", c.seed, "base seed");
    sub->add_option("--out-dir", c.out_dir, "output directory (created if missing)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affine variational inequality solvers and game-theoretic receding-horizon control"};
    app.require_subcommand(1);

    Common common;
    BenchArgs bench;
    SolveArgs solve;
    CrossroadArgs cross;
    ValidateArgs val;

    auto* b = app.add_subcommand("bench", "benchmark the solvers on random strongly monotone AVIs");
    add_common(b, common);
    b->add_option("--instances", bench.instances, "number of random instances")->check(CLI::PositiveNumber);
    b->add_option("--n", bench.n, "variables per instance")->check(CLI::PositiveNumber);
    b->add_option("--m", bench.m, "constraint rows per instance")->check(CLI::PositiveNumber);
    b->add_option("--algos,--algo", bench.algos, "algorithms (dr,pgd,exgd,nagd,prgd,agraal)")->delimiter(',');
    b->add_flag("--timing", bench.timing, "record wall-clock times in the CSV");

    auto* s = app.add_subcommand("solve", "solve one AVI file");
    add_common(s, common);
    s->add_option("problem", solve.problem, "AVI JSON file")->required()->check(CLI::ExistingFile);
    s->add_option("--algo", solve.algo, "algorithm");

    auto* c = app.add_subcommand("crossroad", "simulate the crossing scenario in closed loop");
    add_common(c, common);
    c->add_option("--spec", cross.spec_file, "scenario JSON (default: 15-vehicle scenario)")->check(CLI::ExistingFile);
    c->add_option("--vehicles", cross.vehicles, "use the first k vehicles")->check(CLI::PositiveNumber);
    c->add_option("--steps", cross.steps, "closed-loop steps")->check(CLI::NonNegativeNumber);
    c->add_option("--horizon", cross.horizon, "prediction horizon")->check(CLI::PositiveNumber);
    c->add_option("--x0", cross.x0, "initial state: default or zero")->check(CLI::IsMember({"default", "zero"}));
    c->add_flag("--no-terminal-shortcut", cross.no_shortcut, "always run the solver, even inside the terminal set");

    auto* v = app.add_subcommand("validate", "check an AVI file (or a game file with --game)");
    add_common(v, common);
    v->add_option("file", val.file, "JSON file")->required()->check(CLI::ExistingFile);
    v->add_flag("--game", val.game, "the file describes a linear-quadratic game");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (!common.out_dir.empty()) fs::create_directories(common.out_dir);
        if (*b) return cmd_bench(common, bench);
        if (*s) return cmd_solve(common, solve);
        if (*c) return cmd_crossroad(common, cross);
        if (*v) return cmd_validate(common, val);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "dgvi: " << e.what() << '\n';
        return kUsage;
    } catch (const SpecError& e) {
        write_error(common, "spec", e.what());
        return kFailure;
    } catch (const std::exception& e) {
        write_error(common, "runtime", e.what());
        return kFailure;
    }
    return kUsage;
}
