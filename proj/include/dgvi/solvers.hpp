#pragma once

// Iterative solvers for strongly monotone affine VIs. Every solver produces a
// SolverReport with the natural residual (step 1) of each new iterate, so the
// traces of different algorithms are directly comparable.

#include <chrono>
#include <cstdio>
#include <limits>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dgvi/avi.hpp"
#include "dgvi/blockmat.hpp"
#include "dgvi/errors.hpp"
#include "dgvi/qp.hpp"

namespace dgvi {

/// M = M1 + M2 with M1 = M1' >= 0, M2 > 0, and metric H = H' > 0.
struct Splitting {
    Mat M1;
    Mat M2;
    Mat H;
};

enum class SolverStatus { Converged, IterLimit };

inline const char* to_string(SolverStatus s) {
    return s == SolverStatus::Converged ? "converged" : "iter_limit";
}

struct SolverConfig {
    double tol = 1e-3;
    int max_iter = 10000;
    /// DR relaxation schedule; iteration k uses relaxation[min(k, size-1)].
    std::vector<double> relaxation{0.5};
    /// Fixed stepsize for PGD / EXGD / PRGD; algorithm default when unset.
    std::optional<double> step;
    /// Keep every iterate in the report (tests and debugging only).
    bool record_iterates = false;
    /// Tolerance of the inner QP solves.
    double qp_tol = 1e-8;
};

struct SolverReport {
    std::string algorithm;
    Vec solution;
    std::vector<double> residuals;  // one per iteration
    std::vector<double> times;      // seconds since start, per iteration
    int iterations = 0;
    SolverStatus status = SolverStatus::IterLimit;
    double wall_time = 0;
    std::vector<Vec> iterates;   // u^{k+1} per iteration, when recorded
    std::vector<Vec> auxiliary;  // y^k for DR / EXGD, when recorded

    [[nodiscard]] bool converged() const { return status == SolverStatus::Converged; }
    [[nodiscard]] double final_residual() const { return residuals.empty() ? NAN : residuals.back(); }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Bookkeeping shared by all solvers: residual trace, best iterate, stopping.
class Recorder {
public:
    Recorder(std::string name, const SolverConfig& cfg) : cfg_(cfg), start_(Clock::now()) {
        report_.algorithm = std::move(name);
    }

    /// Record a candidate and its residual; true when the tolerance is met.
    bool record(const Vec& candidate, double residual, const Vec* aux = nullptr) {
        report_.residuals.push_back(residual);
        report_.times.push_back(seconds_since(start_));
        ++report_.iterations;
        if (cfg_.record_iterates) {
            report_.iterates.push_back(candidate);
            if (aux) report_.auxiliary.push_back(*aux);
        }
        if (report_.solution.size() == 0 || residual < best_) {
            best_ = residual;
            report_.solution = candidate;
        }
        if (residual <= cfg_.tol) {
            report_.solution = candidate;
            report_.status = SolverStatus::Converged;
            return true;
        }
        return false;
    }

    SolverReport finish() {
        report_.wall_time = seconds_since(start_);
        return std::move(report_);
    }

private:
    const SolverConfig& cfg_;
    Clock::time_point start_;
    SolverReport report_;
    double best_ = std::numeric_limits<double>::infinity();
};

inline Vec warm_or_zero(const AviProblem& p, const std::optional<Vec>& warm) {
    if (!warm) return Vec::Zero(p.dim());
    if (warm->size() != p.dim()) throw DimensionMismatch("warm start has the wrong size");
    return *warm;
}

inline void check_config(const SolverConfig& cfg) {
    if (!(cfg.tol > 0)) throw ConfigError("tol must be positive");
    if (cfg.max_iter < 1) throw ConfigError("max_iter must be >= 1");
}

inline bool is_symmetric(const Mat& A, double tol) {
    return (A - A.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, A.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Throws InvalidSplitting unless M1 = M1' >= 0, M2 > 0, H = H' > 0 and M1 + M2 = M.
inline void check_splitting(const Mat& M, const Splitting& s) {
    const Index n = M.rows();
    if (s.M1.rows() != n || s.M1.cols() != n || s.M2.rows() != n || s.M2.cols() != n || s.H.rows() != n ||
        s.H.cols() != n) {
        throw InvalidSplitting("splitting matrices have the wrong size");
    }
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((s.M1 + s.M2 - M).cwiseAbs().maxCoeff() > 1e-12 * scale) throw InvalidSplitting("M1 + M2 != M");
    if (!detail::is_symmetric(s.M1, 1e-12)) throw InvalidSplitting("M1 is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> e1(0.5 * (s.M1 + s.M1.transpose()), Eigen::EigenvaluesOnly);
    if (e1.eigenvalues().minCoeff() < -1e-10) throw InvalidSplitting("M1 is not positive semidefinite");
    Eigen::SelfAdjointEigenSolver<Mat> e2(0.5 * (s.M2 + s.M2.transpose()), Eigen::EigenvaluesOnly);
    if (!(e2.eigenvalues().minCoeff() > 0)) throw InvalidSplitting("M2 is not positive definite");
    if (!detail::is_symmetric(s.H, 1e-12)) throw InvalidSplitting("H is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eh(0.5 * (s.H + s.H.transpose()), Eigen::EigenvaluesOnly);
    if (!(eh.eigenvalues().minCoeff() > 0)) throw InvalidSplitting("H is not positive definite");
}

/// M1 = (M + M')/4, M2 = M - M1 (symmetric part halved, skew part kept in M2).
/// M2 is nudged by a few ulps where that makes M1 + M2 reproduce M bit for bit.
inline Splitting make_dr_splitting(const Mat& M, std::optional<Mat> H = std::nullopt) {
    if (M.rows() != M.cols()) throw InvalidSplitting("M must be square");
    const Index n = M.rows();
    const auto mc = monotonicity_constants(M);
    if (!(mc.mu_raw > 0)) {
        throw InvalidSplitting("M + M' is not positive definite (mu = " + std::to_string(mc.mu_raw) + ")");
    }
    Splitting s;
    s.M1 = 0.25 * (M + M.transpose());
    s.M2 = M - s.M1;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            double& m2 = s.M2(i, j);
            const double target = M(i, j);
            const double m1 = s.M1(i, j);
            if (m1 + m2 == target) continue;
            double lo = m2;
            double hi = m2;
            for (int k = 0; k < 8; ++k) {
                lo = std::nextafter(lo, -INFINITY);
                hi = std::nextafter(hi, INFINITY);
                if (m1 + lo == target) { m2 = lo; break; }
                if (m1 + hi == target) { m2 = hi; break; }
            }
        }
    }
    s.H = H ? *H : Mat::Identity(n, n);
    check_splitting(M, s);
    return s;
}

/// Douglas-Rachford splitting-like iteration for AVI(C, M1 + M2, q):
///
///   y^k     = sol(C, H + M1, q + (M2 - H) u^k)       (a strictly convex QP)
///   u^{k+1} = (H + M2)^{-1} (H (2 l_k y^k + (1 - 2 l_k) u^k) + M2 u^k)
///
/// H + M1 is Cholesky-factored and H + M2 LU-factored once at construction,
/// so one instance serves any number of (q, C) pairs sharing M.
class DrSolver {
public:
    DrSolver(const Mat& M, Splitting s, QpSettings qp = {})
        : s_(checked(M, std::move(s))), M_(M), qp_(s_.H + s_.M1, qp), lu_(s_.H + s_.M2),
          M2mH_(s_.M2 - s_.H) {}

    [[nodiscard]] const Splitting& splitting() const { return s_; }
    [[nodiscard]] const Mat& M() const { return M_; }

    /// The iteration counts QP solves; the residual is evaluated at y^k,
    /// which is always feasible, and y^k is returned as the solution.
    [[nodiscard]] SolverReport solve(const AviProblem& p, const SolverConfig& cfg,
                                     const std::optional<Vec>& warm = std::nullopt) const {
        detail::check_config(cfg);
        for (double lam : cfg.relaxation) {
            if (!(lam > 0 && lam <= 1)) throw ConfigError("DR relaxation must lie in (0, 1]");
        }
        if (p.dim() != M_.rows()) throw DimensionMismatch("DrSolver: problem size mismatch");
        detail::Recorder rec("dr", cfg);
        Projector proj(p.C);
        Vec u = detail::warm_or_zero(p, warm);
        std::vector<int> hint;
        for (int k = 0; k < cfg.max_iter; ++k) {
            const Vec c = p.q + M2mH_ * u;
            const QpSolution qs = qp_.solve(c, p.C, hint);
            if (qs.status == QpStatus::Infeasible) throw Infeasible("DR step: empty feasible set");
            hint = qs.active;
            const Vec& y = qs.y;
            const double lam = cfg.relaxation.empty()
                                   ? 0.5
                                   : cfg.relaxation[std::min<std::size_t>(static_cast<std::size_t>(k),
                                                                          cfg.relaxation.size() - 1)];
            const Vec u_next = lu_.solve(s_.H * (2.0 * lam * y + (1.0 - 2.0 * lam) * u) + s_.M2 * u);
            const double r = natural_residual(p, y, proj);
            if (rec.record(y, r, cfg.record_iterates ? &u_next : nullptr)) break;
            u = u_next;
        }
        return rec.finish();
    }

private:
    static Splitting checked(const Mat& M, Splitting s) {
        check_splitting(M, s);
        return s;
    }

    Splitting s_;
    Mat M_;
    QpSolver qp_;
    Eigen::PartialPivLU<Mat> lu_;
    Mat M2mH_;
};

inline SolverReport dr_solve(const AviProblem& p, const Splitting& s, const SolverConfig& cfg = {},
                             const std::optional<Vec>& warm = std::nullopt) {
    DrSolver solver(p.M, s, QpSettings{cfg.qp_tol, 50000});
    return solver.solve(p, cfg, warm);
}

/// Projected gradient: u+ = P(u - l F(u)), l in (0, 2 mu / L^2), default mu / L^2.
inline SolverReport pgd_solve(const AviProblem& p, const SolverConfig& cfg = {},
                              const std::optional<Vec>& warm = std::nullopt) {
    detail::check_config(cfg);
    const auto mc = monotonicity_constants(p.M);
    if (!(mc.mu_raw > 0)) throw NotStronglyMonotone("PGD requires a strongly monotone operator");
    const double upper = 2.0 * mc.mu / (mc.L * mc.L);
    const double step = cfg.step.value_or(mc.mu / (mc.L * mc.L));
    if (!(step > 0 && step < upper)) throw ConfigError("PGD stepsize outside (0, 2 mu / L^2)");
    detail::Recorder rec("pgd", cfg);
    Projector proj(p.C);
    Projector res_proj(p.C);
    Vec u = detail::warm_or_zero(p, warm);
    for (int k = 0; k < cfg.max_iter; ++k) {
        u = proj(u - step * p.F(u));
        if (rec.record(u, natural_residual(p, u, res_proj))) break;
    }
    return rec.finish();
}

/// Extragradient: y = P(u - l F(u)), u+ = P(u - l F(y)), l in (0, 1/L), default 0.9/L.
inline SolverReport exgd_solve(const AviProblem& p, const SolverConfig& cfg = {},
                               const std::optional<Vec>& warm = std::nullopt) {
    detail::check_config(cfg);
    const auto mc = monotonicity_constants(p.M);
    const double step = cfg.step.value_or(0.9 / mc.L);
    if (!(step > 0 && step < 1.0 / mc.L)) throw ConfigError("EXGD stepsize outside (0, 1/L)");
    detail::Recorder rec("exgd", cfg);
    Projector proj_y(p.C);
    Projector proj_u(p.C);
    Projector res_proj(p.C);
    Vec u = detail::warm_or_zero(p, warm);
    for (int k = 0; k < cfg.max_iter; ++k) {
        const Vec y = proj_y(u - step * p.F(u));
        u = proj_u(u - step * p.F(y));
        if (rec.record(u, natural_residual(p, u, res_proj), &y)) break;
    }
    return rec.finish();
}

/// Nesterov's dual extrapolation for strongly monotone VIs (beta = L, l_0 = 1):
///
///   u^k     = argmax_{u in C} sum_{i<=k} l_i [<F(y^i), y^i - u> - mu/2 |u - y^i|^2]
///   y^{k+1} = argmax_{u in C} <F(u^k), u^k - u> - beta/2 |u - u^k|^2
///   l_{k+1} = (mu / L) sum_{i<=k} l_i
///
/// Both maximizations are projections. The weighted sums are kept as running
/// averages so the geometrically growing l_k never overflow.
inline SolverReport nagd_solve(const AviProblem& p, const SolverConfig& cfg = {},
                               const std::optional<Vec>& warm = std::nullopt) {
    detail::check_config(cfg);
    const auto mc = monotonicity_constants(p.M);
    if (!(mc.mu_raw > 0)) throw NotStronglyMonotone("NAGD requires a strongly monotone operator");
    const double mu = mc.mu;
    const double beta = mc.L;
    detail::Recorder rec("nagd", cfg);
    Projector proj_u(p.C);
    Projector proj_y(p.C);
    Projector res_proj(p.C);
    Vec y = detail::warm_or_zero(p, warm);
    Vec avg_y = y;
    Vec avg_F = p.F(y);
    // With l_0 = 1 and l_{k+1} = (mu/L) sum_{i<=k} l_i, the new weight's share
    // of the running total is (mu/L) / (1 + mu/L) for every k >= 1.
    const double share = (mu / mc.L) / (1.0 + mu / mc.L);
    for (int k = 0; k < cfg.max_iter; ++k) {
        if (k > 0) {
            avg_y += share * (y - avg_y);
            avg_F += share * (p.F(y) - avg_F);
        }
        const Vec u = proj_u(avg_y - avg_F / mu);
        if (rec.record(u, natural_residual(p, u, res_proj), &y)) break;
        y = proj_y(u - p.F(u) / beta);
    }
    return rec.finish();
}

/// Projected reflected gradient: u+ = P(u - l F(2u - u_prev)), u_prev initialised to u^0.
inline SolverReport prgd_solve(const AviProblem& p, const SolverConfig& cfg = {},
                               const std::optional<Vec>& warm = std::nullopt) {
    detail::check_config(cfg);
    const auto mc = monotonicity_constants(p.M);
    const double bound = (std::sqrt(2.0) - 1.0) / mc.L;
    const double step = cfg.step.value_or(0.9 * bound);
    if (!(step > 0 && step < bound)) throw ConfigError("PRGD stepsize outside (0, (sqrt2 - 1)/L)");
    detail::Recorder rec("prgd", cfg);
    Projector proj(p.C);
    Projector res_proj(p.C);
    Vec u = detail::warm_or_zero(p, warm);
    Vec u_prev = u;
    for (int k = 0; k < cfg.max_iter; ++k) {
        Vec next = proj(u - step * p.F(2.0 * u - u_prev));
        u_prev = std::move(u);
        u = std::move(next);
        if (rec.record(u, natural_residual(p, u, res_proj))) break;
    }
    return rec.finish();
}

/// Adaptive golden ratio algorithm with beta = (sqrt5 - 1)/2:
///
///   l_k     = min{(beta + beta^2) l_{k-1}, |u^k - u^{k-1}|^2 / (4 beta^2 l_{k-2} |F(u^k) - F(u^{k-1})|^2)}
///   y^k     = (1 - beta) u^k + beta y^{k-1}
///   u^{k+1} = P(y^k - l_k F(u^k))
///
/// Initial stepsizes l_0 = l_{-1} = 1/L and y^{-1} = u^0. When F(u^k) = F(u^{k-1})
/// the ratio is undefined and the first branch is taken.
inline SolverReport agraal_solve(const AviProblem& p, const SolverConfig& cfg = {},
                                 const std::optional<Vec>& warm = std::nullopt) {
    detail::check_config(cfg);
    const auto mc = monotonicity_constants(p.M);
    const double beta = (std::sqrt(5.0) - 1.0) / 2.0;
    detail::Recorder rec("agraal", cfg);
    Projector proj(p.C);
    Projector res_proj(p.C);
    Vec u = detail::warm_or_zero(p, warm);
    Vec F_u = p.F(u);
    Vec u_prev = u;
    Vec F_prev = F_u;
    Vec y = u;
    double lam_prev = 1.0 / mc.L;       // l_{k-1}
    double lam_prev2 = 1.0 / mc.L;      // l_{k-2}
    for (int k = 0; k < cfg.max_iter; ++k) {
        double lam = 1.0 / mc.L;
        if (k > 0) {
            lam = (beta + beta * beta) * lam_prev;
            const double dF = (F_u - F_prev).squaredNorm();
            if (dF > 0) {
                const double ratio = (u - u_prev).squaredNorm() / (4.0 * beta * beta * lam_prev2 * dF);
                lam = std::min(lam, ratio);
            }
        }
        y = (1.0 - beta) * u + beta * y;
        Vec next = proj(y - lam * F_u);
        u_prev = std::move(u);
        F_prev = std::move(F_u);
        u = std::move(next);
        F_u = p.F(u);
        lam_prev2 = lam_prev;
        lam_prev = lam;
        if (rec.record(u, natural_residual(p, u, res_proj), &y)) break;
    }
    return rec.finish();
}

enum class Algorithm { DR, PGD, EXGD, NAGD, PRGD, AGRAAL };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::DR,   Algorithm::PGD,  Algorithm::EXGD,
                                               Algorithm::NAGD, Algorithm::PRGD, Algorithm::AGRAAL};

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::DR: return "dr";
        case Algorithm::PGD: return "pgd";
        case Algorithm::EXGD: return "exgd";
        case Algorithm::NAGD: return "nagd";
        case Algorithm::PRGD: return "prgd";
        case Algorithm::AGRAAL: return "agraal";
    }
    return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view name) {
    for (Algorithm a : kAllAlgorithms) {
        if (name == to_string(a)) return a;
    }
    return std::nullopt;
}

/// Dispatch by algorithm; DR uses make_dr_splitting with H = I.
inline SolverReport solve_avi(Algorithm a, const AviProblem& p, const SolverConfig& cfg = {},
                              const std::optional<Vec>& warm = std::nullopt) {
    switch (a) {
        case Algorithm::DR: return dr_solve(p, make_dr_splitting(p.M), cfg, warm);
        case Algorithm::PGD: return pgd_solve(p, cfg, warm);
        case Algorithm::EXGD: return exgd_solve(p, cfg, warm);
        case Algorithm::NAGD: return nagd_solve(p, cfg, warm);
        case Algorithm::PRGD: return prgd_solve(p, cfg, warm);
        case Algorithm::AGRAAL: return agraal_solve(p, cfg, warm);
    }
    throw ConfigError("unknown algorithm");
}

/// Residual trace rows: algorithm, instance_id, iteration, residual, wall_time_s.
inline void write_trace_header(std::ostream& out) {
    out << "algorithm,instance_id,iteration,residual,wall_time_s\n";
}

inline void write_trace_rows(std::ostream& out, const SolverReport& r, int instance_id, bool with_time) {
    char buf[64];
    for (std::size_t k = 0; k < r.residuals.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", r.residuals[k]);
        out << r.algorithm << ',' << instance_id << ',' << (k + 1) << ',' << buf << ',';
        if (with_time) {
            std::snprintf(buf, sizeof buf, "%.6e", r.times[k]);
            out << buf;
        } else {
            out << 0;
        }
        out << '\n';
    }
}

struct TraceRow {
    std::string algorithm;
    int instance_id = 0;
    int iteration = 0;
    double residual = 0;
    double wall_time = 0;
};

/// Reader for the residual trace CSV. Throws ConfigError on a malformed line.
inline std::vector<TraceRow> read_trace_csv(std::istream& in) {
    std::vector<TraceRow> rows;
    std::string line;
    if (!std::getline(in, line) || line != "algorithm,instance_id,iteration,residual,wall_time_s") {
        throw ConfigError("trace CSV: unexpected header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        TraceRow r;
        std::string f[5];
        for (auto& field : f) {
            if (!std::getline(ls, field, ',')) throw ConfigError("trace CSV: short line: " + line);
        }
        try {
            r.algorithm = f[0];
            r.instance_id = std::stoi(f[1]);
            r.iteration = std::stoi(f[2]);
            r.residual = std::stod(f[3]);
            r.wall_time = std::stod(f[4]);
        } catch (const std::logic_error&) {
            throw ConfigError("trace CSV: bad number in line: " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace dgvi
