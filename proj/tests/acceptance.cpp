// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dgvi/game.hpp"
#include "dgvi/rhc.hpp"
#include "dgvi/scenario.hpp"
#include "dgvi/solvers.hpp"
#include "oracles.hpp"

using namespace dgvi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// Index of the first residual at or below tol (1-based iteration count), or
// 0 when the trace never gets there.
int first_hit(const std::vector<double>& r, double tol) {
    for (std::size_t k = 0; k < r.size(); ++k)
        if (r[k] <= tol) return static_cast<int>(k + 1);
    return 0;
}

// Least-squares line through (k, log r_k) over the second half of the trace.
std::pair<double, double> log_linear_fit(const std::vector<double>& r) {
    const std::size_t start = r.size() / 2;
    const auto N = static_cast<double>(r.size() - start);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = start; k < r.size(); ++k) {
        const double x = static_cast<double>(k);
        const double y = std::log(r[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double cov = sxy - sx * sy / N;
    const double vx = sxx - sx * sx / N;
    const double vy = syy - sy * sy / N;
    const double slope = cov / vx;
    const double r2 = vy > 0 ? cov * cov / (vx * vy) : 1.0;
    return {slope, r2};
}

struct Suite {
    std::vector<AviProblem> problems;
    std::vector<std::vector<SolverReport>> reports;  // [instance][algorithm]
    double seconds = 0;
};

const Suite& fig1_suite() {
    static const Suite s = [] {
        Suite out;
        const auto t0 = Clock::now();
        SolverConfig cfg;
        cfg.tol = 1e-6;
        cfg.max_iter = 10000;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            out.problems.push_back(random_avi(100, 20, seed));
            std::vector<SolverReport> reps;
            for (Algorithm a : kAllAlgorithms) reps.push_back(solve_avi(a, out.problems.back(), cfg));
            out.reports.push_back(std::move(reps));
        }
        out.seconds = seconds_since(t0);
        return out;
    }();
    return s;
}

std::size_t algo_index(Algorithm a) {
    for (std::size_t i = 0; i < std::size(kAllAlgorithms); ++i)
        if (kAllAlgorithms[i] == a) return i;
    return 0;
}

struct FourVehicles {
    CrossroadSpec spec = default_15_vehicle_spec().prefix(4);
    CompiledGameVi c = compile_vi(build_crossroad(spec));
    Vec x0 = crossroad_initial_state(spec);
};

const FourVehicles& four() {
    static const FourVehicles f;
    return f;
}

SolverConfig tight() {
    SolverConfig cfg;
    cfg.tol = 1e-10;
    cfg.max_iter = 100000;
    return cfg;
}

void criterion1() {
    const auto t0 = Clock::now();
    double worst = 0;
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Index n = 2 + static_cast<Index>(seed % 5);
        const Index m = 1 + static_cast<Index>(seed % 4);
        const AviProblem p = random_avi(n, m, 1000 + seed);
        const auto ref = oracle::kkt_enumeration(p);
        const auto rep = dr_solve(p, make_dr_splitting(p.M), tight());
        if (!ref || !rep.converged()) {
            ok = false;
            continue;
        }
        worst = std::max(worst, (rep.solution - *ref).cwiseAbs().maxCoeff());
    }
    const double secs = seconds_since(t0);
    report(1, ok && worst <= 1e-6 && secs < 10, fmt("max |u_dr - u_kkt|_inf = %.2e over 20 AVIs, %.2f s", worst, secs));
}

void criterion2() {
    const Suite& s = fig1_suite();
    double worst_pair = 0;
    double worst_res = 0;
    int converged = 0;
    for (std::size_t k = 0; k < s.reports.size(); ++k) {
        std::vector<const SolverReport*> ok;
        for (const auto& r : s.reports[k]) {
            if (!r.converged()) continue;
            ok.push_back(&r);
            worst_res = std::max(worst_res, natural_residual(s.problems[k], r.solution));
        }
        converged += static_cast<int>(ok.size());
        for (std::size_t i = 0; i < ok.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                worst_pair = std::max(worst_pair, (ok[i]->solution - ok[j]->solution).cwiseAbs().maxCoeff());
    }
    const bool pass = worst_pair <= 1e-4 && worst_res <= 1e-3 && s.seconds < 60;
    // Informational: stopping at residual 1e-3 only pins the solution to
    // roughly (1 + L) / mu times that, so the gap there is larger.
    SolverConfig loose;
    loose.tol = 1e-3;
    loose.max_iter = 10000;
    double loose_gap = 0;
    for (const auto& p : s.problems) {
        std::vector<Vec> sols;
        for (Algorithm a : kAllAlgorithms) {
            if (a == Algorithm::PGD) continue;
            const auto r = solve_avi(a, p, loose);
            if (r.converged()) sols.push_back(r.solution);
        }
        for (std::size_t i = 0; i < sols.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                loose_gap = std::max(loose_gap, (sols[i] - sols[j]).cwiseAbs().maxCoeff());
    }
    std::printf("   info: at tol 1e-3 the max pairwise gap is %.2e\n", loose_gap);
    report(2, pass,
           fmt("%g converged runs, max pairwise gap %.2e, max certified residual %.2e, suite %.1f s", converged,
               worst_pair, worst_res, s.seconds));
}

void criterion3() {
    const Suite& s = fig1_suite();
    int wins = 0;
    std::string detail;
    for (const auto& reps : s.reports) {
        const int dr = first_hit(reps[algo_index(Algorithm::DR)].residuals, 1e-3);
        const int pgd = first_hit(reps[algo_index(Algorithm::PGD)].residuals, 1e-3);
        const bool win = dr > 0 && (pgd == 0 || dr < pgd);
        if (win) ++wins;
        detail += " " + std::to_string(dr) + "/" + (pgd ? std::to_string(pgd) : std::string(">10000"));
    }
    report(3, wins >= 8, "DR fewer iterations than PGD to 1e-3 on " + std::to_string(wins) + "/10 (dr/pgd:" + detail + ")");
}

void criterion4() {
    const Suite& s = fig1_suite();
    int good = 0;
    double worst_r2 = 1;
    for (const auto& reps : s.reports) {
        const auto& r = reps[algo_index(Algorithm::DR)].residuals;
        const auto [slope, r2] = log_linear_fit(r);
        if (slope < 0 && r2 >= 0.9) ++good;
        worst_r2 = std::min(worst_r2, r2);
    }
    report(4, good >= 9, fmt("negative slope with R^2 >= 0.9 on %g/10 DR traces (min R^2 %.3f)", good, worst_r2));
}

void criterion5() {
    LqGame g;
    g.A = Mat::Ones(1, 1);
    g.B = {Mat::Ones(1, 1)};
    g.Q = {Mat::Ones(1, 1)};
    g.R = {Mat::Ones(1, 1)};
    const double p = solve_coupled_riccati(g).P[0](0, 0);
    const double perr = std::abs(p - (1 + std::sqrt(5.0)) / 2);

    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd;
    double worst_res = 0;
    double worst_rho = 0;
    int solved = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const Index n = 3;
        LqGame h;
        h.A = Mat(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) h.A(i, j) = nd(rng);
        h.A *= 1.2 / spectral_radius(h.A);
        for (int i = 0; i < 2; ++i) {
            Mat b(n, 1);
            for (Index k = 0; k < n; ++k) b(k, 0) = nd(rng);
            h.B.push_back(b);
            h.Q.push_back(Mat::Identity(n, n));
            h.R.push_back(Mat::Identity(1, 1));
        }
        try {
            const auto sol = solve_coupled_riccati(h);
            ++solved;
            for (double r : sol.residuals) worst_res = std::max(worst_res, r);
            worst_rho = std::max(worst_rho, spectral_radius(sol.Acl));
        } catch (const Error&) {
        }
    }
    report(5, perr <= 1e-9 && solved == 10 && worst_res <= 1e-8 && worst_rho < 1,
           fmt("|P - golden ratio| = %.1e; %g/10 random games, max residual %.1e, max rho %.4f", perr, solved,
               worst_res, worst_rho));
}

void criterion6() {
    const auto& f = four();
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> scale(0.05, 1.0);
    int sampled = 0;
    int attempts = 0;
    double worst = 0;
    bool single = true;
    while (sampled < 20 && attempts < 100000) {
        ++attempts;
        Vec x(f.x0.size());
        for (Index k = 0; k < x.size(); ++k) x[k] = nd(rng);
        x *= scale(rng) * 5.0 / x.norm();
        if (!in_terminal_set(f.c, x)) continue;
        ++sampled;
        const Vec uk = unconstrained_ne_sequence(f.c, x);
        const auto rep = f.c.dr->solve(f.c.problem(x), tight());
        if (!rep.converged()) single = false;
        worst = std::max(worst, (rep.solution - uk).cwiseAbs().maxCoeff());
        const auto st = rhc_step(f.c, x, uk, SolverConfig{});
        if (st.report.iterations != 1) single = false;
    }
    report(6, sampled == 20 && worst <= 1e-6 && single,
           fmt("%g terminal-set states, max |u* - u_K|_inf = %.2e, warm-started steps all single-iteration: ",
               sampled, worst) +
               (single ? "yes" : "no"));
}

void criterion7() {
    const auto& f = four();
    const CrossroadSpec& s = f.spec;
    const std::vector<std::vector<double>> speeds = {
        s.initial_speeds, {9, 10, 11, 12}, {12, 8, 9, 14}, {6, 6, 7, 8}, {10, 13, 10, 9}};
    const std::vector<std::vector<double>> gaps = {
        s.initial_gaps, {0, 8, 12, 9}, {0, 11, 7, 13}, {0, 14, 14, 6}, {0, 9, 10, 11}};
    double worst = 0;
    bool ok = true;
    for (std::size_t k = 0; k < speeds.size(); ++k) {
        const Vec x0 = crossroad_state(s, speeds[k], gaps[k]);
        const auto rep = f.c.dr->solve(f.c.problem(x0), tight());
        if (!rep.converged()) {
            ok = false;
            continue;
        }
        for (int i = 0; i < f.c.game.agents(); ++i) {
            const Vec br = best_response(f.c, x0, i, rep.solution);
            const Vec own = rep.solution.segment(f.c.game.offset(i), f.c.game.inputs(i) * f.c.game.T);
            worst = std::max(worst, (br - own).cwiseAbs().maxCoeff());
        }
    }
    report(7, ok && worst <= 1e-5, fmt("max best-response deviation %.2e over 5 states x 4 agents", worst));
}

void criterion8() {
    const auto& f = four();
    const auto tr = simulate(f.c, f.x0, 300, SolverConfig{});
    const double margin = tr.min_margin();
    int below = -1;
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
        if (tr.states[t].norm() < 1e-2) {
            below = static_cast<int>(t);
            break;
        }
    }
    const bool stays = below >= 0 && std::all_of(tr.states.begin() + below, tr.states.end(),
                                                 [](const Vec& x) { return x.norm() < 1e-2; });
    const bool tail_ones = std::all_of(tr.iterations.end() - 50, tr.iterations.end(), [](int k) { return k == 1; });
    report(8, tr.all_converged() && margin >= 0 && stays && tail_ones,
           fmt("min margin %.2e, |x| < 1e-2 from step %g, first iterations %g, last-50 all one: ", margin, below,
               tr.iterations.front()) +
               (tail_ones ? "yes" : "no"));
}

void criterion9() {
    const auto& f = four();
    const auto& g = f.c.game;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    const AviProblem p = f.c.problem(f.x0);
    Projector proj(p.C);
    double worst = 0;
    for (int k = 0; k < 50; ++k) {
        Vec u(f.c.dim());
        for (Index j = 0; j < u.size(); ++j) u[j] = 2.0 * nd(rng);
        u = proj(u);
        const Vec F = p.F(u);
        for (int i = 0; i < g.agents(); ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Index o = g.offset(i);
            const Index mi = g.inputs(i) * g.T;
            auto J = [&](const Vec& own) {
                Vec full = u;
                full.segment(o, mi) = own;
                const auto xs = simulate_states(g, f.x0, full);
                double v = 0;
                for (int t = 1; t < g.T; ++t) {
                    const Vec& x = xs[static_cast<std::size_t>(t)];
                    v += 0.5 * x.dot(g.Q[ui] * x);
                }
                v += 0.5 * xs.back().dot(f.c.riccati.P[ui] * xs.back());
                for (int t = 0; t < g.T; ++t) {
                    const Vec ut = own.segment(t * g.inputs(i), g.inputs(i));
                    v += 0.5 * ut.dot(g.R[ui] * ut);
                }
                return v;
            };
            const Vec fd = oracle::fd_gradient(J, u.segment(o, mi), 1e-4);
            const Vec Fi = F.segment(o, mi);
            worst = std::max(worst, (fd - Fi).norm() / std::max(Fi.norm(), 1e-12));
        }
    }
    report(9, worst <= 1e-5, fmt("max relative gradient error %.2e over 50 feasible points x 4 agents", worst));
}

void criterion10() {
    std::vector<Mat> mats;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) mats.push_back(random_avi(100, 20, seed).M);
    mats.push_back(four().c.M);
    double sum_err = 0;
    double sym_err = 0;
    double skew_err = 0;
    long exact = 0;
    long total = 0;
    for (const auto& M : mats) {
        const Splitting s = make_dr_splitting(M);
        const Mat sum = s.M1 + s.M2;
        sum_err = std::max(sum_err, (sum - M).cwiseAbs().maxCoeff());
        exact += (sum.array() == M.array()).count();
        total += M.size();
        sym_err = std::max(sym_err, (s.M1 - s.M1.transpose()).cwiseAbs().maxCoeff());
        const Mat D = s.M2 - s.M1;
        skew_err = std::max(skew_err, (D + D.transpose()).cwiseAbs().maxCoeff());
    }
    bool rejects = false;
    Mat skew(2, 2);
    skew << 0, 1, -1, 0;
    try {
        (void)make_dr_splitting(skew);
    } catch (const Error&) {
        rejects = true;
    }
    report(10, sum_err <= 1e-12 && sym_err <= 1e-12 && skew_err <= 1e-12 && rejects,
           fmt("|M1+M2-M| %.1e (%g of %g entries bit-exact), |M1-M1'| %.1e, ", sum_err, static_cast<double>(exact),
               static_cast<double>(total), sym_err) +
               fmt("|(M2-M1)+(M2-M1)'| %.1e, skew M rejected: ", skew_err) + (rejects ? "yes" : "no"));
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    criterion10();
    std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
