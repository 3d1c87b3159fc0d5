#pragma once

// Receding-horizon loop: at every step solve the game VI at the measured state,
// apply the first stage of every agent's sequence, and warm-start the next
// solve with the shifted sequence plus the feedback tail.

#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dgvi/game.hpp"
#include "dgvi/json_io.hpp"
#include "dgvi/solvers.hpp"

namespace dgvi {

/// Infeasibility raised inside the loop, with the step at which it happened.
class InfeasibleAtStep : public Infeasible {
public:
    InfeasibleAtStep(int step, const std::string& what)
        : Infeasible("step " + std::to_string(step) + ": " + what), step_(step) {}
    [[nodiscard]] int step() const { return step_; }

private:
    int step_;
};

struct RhcOptions {
    bool terminal_shortcut = true;
    int horizon_check = 50;
    double margin = 1e-9;
};

/// col(u_i[0]) of a stacked input.
inline Vec first_stage(const LqGame& g, const Vec& u) {
    Index m = 0;
    for (int i = 0; i < g.agents(); ++i) m += g.inputs(i);
    Vec out(m);
    Index k = 0;
    for (int i = 0; i < g.agents(); ++i) {
        out.segment(k, g.inputs(i)) = u.segment(g.offset(i), g.inputs(i));
        k += g.inputs(i);
    }
    return out;
}

/// x+ = A x + sum_i B_i u_i for a first-stage input col(u_i).
inline Vec step_dynamics(const LqGame& g, const Vec& x, const Vec& u0) {
    Vec next = g.A * x;
    Index k = 0;
    for (int i = 0; i < g.agents(); ++i) {
        next += g.B[static_cast<std::size_t>(i)] * u0.segment(k, g.inputs(i));
        k += g.inputs(i);
    }
    return next;
}

/// Stage constraint values at (x, u0), all rows of the form value <= 0:
/// state rows, then input rows, then mixed rows.
inline Vec stage_constraint_values(const LqGame& g, const Vec& x, const Vec& u0) {
    Vec in = g.du;
    Vec mx = g.Ex * x + g.e;
    Index k = 0;
    for (int i = 0; i < g.agents(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto seg = u0.segment(k, g.inputs(i));
        in += g.Du[ui] * seg;
        mx += g.Eu[ui] * seg;
        k += g.inputs(i);
    }
    Vec out(g.dx.size() + in.size() + mx.size());
    out << g.Dx * x + g.dx, in, mx;
    return out;
}

/// Drop every agent's first stage, shift, and append K_i x*_T where x*_T is the
/// terminal state predicted from prev_x under prev.
inline Vec shift_warm_start(const Vec& prev, const CompiledGameVi& c, const Vec& prev_x) {
    const auto& g = c.game;
    if (prev.size() != c.dim()) throw DimensionMismatch("shift_warm_start: sequence has the wrong size");
    const Vec xT = simulate_states(g, prev_x, prev).back();
    Vec out(prev.size());
    for (int i = 0; i < g.agents(); ++i) {
        const Index m = g.inputs(i);
        const Index o = g.offset(i);
        const Index len = m * (g.T - 1);
        if (len > 0) out.segment(o, len) = prev.segment(o + m, len);
        out.segment(o + len, m) = c.riccati.K[static_cast<std::size_t>(i)] * xT;
    }
    return out;
}

struct RhcStep {
    Vec applied;  // col(u_i[0])
    SolverReport report;
    bool shortcut = false;
};

/// Solve the game VI at x with DR from `warm`. Inside the terminal set a warm
/// start whose residual already meets the tolerance is returned after that one
/// residual evaluation.
inline RhcStep rhc_step(const CompiledGameVi& c, const Vec& x, const Vec& warm, const SolverConfig& cfg,
                        const RhcOptions& opt = {}) {
    const AviProblem p = c.problem(x);
    RhcStep out;
    if (opt.terminal_shortcut && in_terminal_set(c, x, opt.horizon_check, opt.margin)) {
        const double r = natural_residual(p, warm);
        if (r <= cfg.tol) {
            out.report.algorithm = "dr";
            out.report.solution = warm;
            out.report.residuals = {r};
            out.report.times = {0.0};
            out.report.iterations = 1;
            out.report.status = SolverStatus::Converged;
            out.applied = first_stage(c.game, warm);
            out.shortcut = true;
            return out;
        }
    }
    out.report = c.dr->solve(p, cfg, warm);
    out.applied = first_stage(c.game, out.report.solution);
    return out;
}

struct ClosedLoopTrace {
    int horizon = 0;
    std::vector<Vec> states;      // x[0..steps]
    std::vector<Vec> inputs;      // applied col(u_i[0]) per step
    std::vector<Vec> total_inputs;  // K_pre x + u per step when the game is pre-stabilized
    std::vector<int> iterations;
    std::vector<double> residuals;
    std::vector<Vec> margins;     // -stage_constraint_values per step
    std::vector<bool> converged;
    std::vector<bool> shortcut;

    [[nodiscard]] int steps() const { return static_cast<int>(inputs.size()); }
    [[nodiscard]] bool all_converged() const {
        for (bool b : converged)
            if (!b) return false;
        return true;
    }
    [[nodiscard]] double min_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& v : margins)
            if (v.size() > 0) m = std::min(m, v.minCoeff());
        return m;
    }
};

/// Step-0 warm start: the feedback sequence if it is feasible, else zero if
/// that is feasible, else one Gauss-Seidel sweep of best responses from zero.
/// A sweep that runs into an empty set falls back to zero; DR does not need a
/// feasible start.
inline Vec initial_warm_start(const CompiledGameVi& c, const Vec& x0) {
    const Polyhedron C = c.constraints_of(x0);
    const Vec uk = unconstrained_ne_sequence(c, x0);
    if (C.contains(uk, 1e-9)) return uk;
    Vec u = Vec::Zero(c.dim());
    if (C.contains(u, 1e-9)) return u;
    const auto& g = c.game;
    try {
        for (int i = 0; i < g.agents(); ++i) u.segment(g.offset(i), g.inputs(i) * g.T) = best_response(c, x0, i, u);
    } catch (const Infeasible&) {
        return Vec::Zero(c.dim());
    }
    return u;
}

/// Closed loop for `steps` steps. A step that hits the iteration limit applies
/// the best iterate and is flagged in `converged`.
inline ClosedLoopTrace simulate(const CompiledGameVi& c, const Vec& x0, int steps, const SolverConfig& cfg,
                                const RhcOptions& opt = {}) {
    const auto& g = c.game;
    if (x0.size() != g.states()) throw DimensionMismatch("initial state has the wrong size");
    ClosedLoopTrace tr;
    tr.horizon = g.T;
    tr.states.push_back(x0);
    Vec x = x0;
    Vec warm = initial_warm_start(c, x0);
    for (int t = 0; t < steps; ++t) {
        RhcStep st;
        try {
            st = rhc_step(c, x, warm, cfg, opt);
        } catch (const Infeasible& e) {
            throw InfeasibleAtStep(t, e.what());
        }
        tr.inputs.push_back(st.applied);
        if (!g.K_pre.empty()) {
            Vec total = st.applied;
            Index k = 0;
            for (int i = 0; i < g.agents(); ++i) {
                total.segment(k, g.inputs(i)) += g.K_pre[static_cast<std::size_t>(i)] * x;
                k += g.inputs(i);
            }
            tr.total_inputs.push_back(total);
        }
        tr.iterations.push_back(st.report.iterations);
        tr.residuals.push_back(st.report.final_residual());
        tr.margins.push_back(-stage_constraint_values(g, x, st.applied));
        tr.converged.push_back(st.report.converged());
        tr.shortcut.push_back(st.shortcut);
        warm = shift_warm_start(st.report.solution, c, x);
        x = step_dynamics(g, x, st.applied);
        tr.states.push_back(x);
    }
    return tr;
}

namespace io {

/// {horizon, records: [{t, x[], u[], iterations, residual, margins[], converged}]}.
/// The final state has a record with no input fields.
inline json trace_to_json(const ClosedLoopTrace& tr) {
    json j;
    j["horizon"] = tr.horizon;
    json recs = json::array();
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        json r;
        r["t"] = t;
        r["x"] = to_json(tr.states[t]);
        if (t < tr.inputs.size()) {
            r["u"] = to_json(tr.inputs[t]);
            if (t < tr.total_inputs.size()) r["u_total"] = to_json(tr.total_inputs[t]);
            r["iterations"] = tr.iterations[t];
            r["residual"] = tr.residuals[t];
            r["margins"] = to_json(tr.margins[t]);
            r["converged"] = static_cast<bool>(tr.converged[t]);
        }
        recs.push_back(std::move(r));
    }
    j["records"] = std::move(recs);
    return j;
}

inline ClosedLoopTrace trace_from_json(const json& j) {
    ClosedLoopTrace tr;
    tr.horizon = j.at("horizon").get<int>();
    for (const auto& r : j.at("records")) {
        tr.states.push_back(vec_from_json(r.at("x")));
        if (!r.contains("u")) continue;
        tr.inputs.push_back(vec_from_json(r.at("u")));
        if (r.contains("u_total")) tr.total_inputs.push_back(vec_from_json(r.at("u_total")));
        tr.iterations.push_back(r.at("iterations").get<int>());
        tr.residuals.push_back(r.at("residual").get<double>());
        tr.margins.push_back(vec_from_json(r.at("margins")));
        tr.converged.push_back(r.value("converged", true));
        tr.shortcut.push_back(false);
    }
    return tr;
}

inline void write_iterations_csv(std::ostream& out, const ClosedLoopTrace& tr) {
    out << "t,iterations\n";
    for (std::size_t t = 0; t < tr.iterations.size(); ++t) out << t << ',' << tr.iterations[t] << '\n';
}

inline std::vector<int> read_iterations_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "t,iterations") throw ConfigError("iterations CSV: unexpected header");
    std::vector<int> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos || std::stoi(line.substr(0, comma)) != static_cast<int>(out.size())) {
                throw ConfigError("iterations CSV: bad line: " + line);
            }
            out.push_back(std::stoi(line.substr(comma + 1)));
        } catch (const std::logic_error&) {
            throw ConfigError("iterations CSV: bad line: " + line);
        }
    }
    return out;
}

}  // namespace io

}  // namespace dgvi
