#pragma once

// Affine variational inequality AVI(C, M, q): find u* in C such that
// <M u* + q, u - u*> >= 0 for every u in C, with C = {u : D u + d <= 0}.

#include <cmath>
#include <string>
#include <vector>

#include "dgvi/blockmat.hpp"
#include "dgvi/errors.hpp"
#include "dgvi/polyhedron.hpp"
#include "dgvi/qp.hpp"

namespace dgvi {

struct AviProblem {
    Mat M;
    Vec q;
    Polyhedron C;

    AviProblem() = default;
    AviProblem(Mat M_, Vec q_, Polyhedron C_) : M(std::move(M_)), q(std::move(q_)), C(std::move(C_)) {
        if (M.rows() != M.cols()) throw DimensionMismatch("AviProblem: M must be square");
        if (q.size() != M.rows()) throw DimensionMismatch("AviProblem: q size mismatch");
        if (C.dim() != M.rows()) throw DimensionMismatch("AviProblem: polyhedron dimension mismatch");
    }

    [[nodiscard]] Index dim() const { return M.rows(); }
    [[nodiscard]] Vec F(const Vec& u) const { return M * u + q; }
};

/// Euclidean projection onto a polyhedron. Keeps the active set of the last
/// call as a hint for the next one; not safe to share between threads.
class Projector {
public:
    explicit Projector(Polyhedron C) : C_(std::move(C)), solver_(Mat::Identity(C_.dim(), C_.dim())) {}

    [[nodiscard]] Vec operator()(const Vec& v) {
        if (C_.rows() == 0) return v;
        const QpSolution s = solver_.solve(-v, C_, hint_);
        if (s.status == QpStatus::Infeasible) throw Infeasible("projection: empty polyhedron");
        hint_ = s.active;
        return s.y;
    }

    [[nodiscard]] const Polyhedron& set() const { return C_; }

private:
    Polyhedron C_;
    QpSolver solver_;
    std::vector<int> hint_;
};

/// argmin_{u in C} ||u - v||.
inline Vec project(const Polyhedron& C, const Vec& v) {
    Projector proj(C);
    return proj(v);
}

/// ||u - proj_C(u - step (M u + q))||; zero exactly at solutions.
inline double natural_residual(const AviProblem& p, const Vec& u, Projector& proj, double step = 1.0) {
    return (u - proj(u - step * p.F(u))).norm();
}

inline double natural_residual(const AviProblem& p, const Vec& u, double step = 1.0) {
    Projector proj(p.C);
    return natural_residual(p, u, proj, step);
}

struct MonotonicityConstants {
    double mu = 0;      // max(0, mu_raw)
    double mu_raw = 0;  // smallest eigenvalue of (M + M')/2, possibly negative
    double L = 0;       // spectral norm of M
};

inline MonotonicityConstants monotonicity_constants(const Mat& M) {
    if (M.rows() != M.cols()) throw DimensionMismatch("monotonicity_constants: M must be square");
    MonotonicityConstants out;
    if (M.size() == 0) return out;
    const Mat sym = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    out.mu_raw = es.eigenvalues().minCoeff();
    out.mu = std::max(0.0, out.mu_raw);
    Eigen::SelfAdjointEigenSolver<Mat> gram(M.transpose() * M, Eigen::EigenvaluesOnly);
    out.L = std::sqrt(std::max(0.0, gram.eigenvalues().maxCoeff()));
    return out;
}

struct AviDiagnosis {
    bool dimensions_ok = true;
    bool strongly_monotone = false;
    bool feasible = false;
    bool strictly_feasible = false;
    double mu = 0;
    double L = 0;
    double max_slack = 0;  // best s found with D u + d + s <= 0
    std::vector<std::string> messages;

    [[nodiscard]] bool ok() const { return dimensions_ok && strongly_monotone && feasible && strictly_feasible; }
};

/// Largest uniform slack s <= 1 with D u + d + s 1 <= 0, via a sequence of
/// regularized QPs min eps/2 (|u|^2 + s^2) - s. Returns the best slack found
/// and the point attaining it.
inline std::pair<double, Vec> max_uniform_slack(const Polyhedron& C) {
    const Index n = C.dim();
    const Index m = C.rows();
    if (m == 0) return {1.0, Vec::Zero(n)};
    Mat D(m + 1, n + 1);
    D << C.D, Vec::Ones(m), Mat::Zero(1, n), 1.0;
    Vec d(m + 1);
    d << C.d, -1.0;
    Polyhedron ext(D, d);
    double best = -std::numeric_limits<double>::infinity();
    Vec best_u = Vec::Zero(n);
    for (double eps = 1.0; eps >= 1e-10; eps *= 1e-2) {
        QpSolver solver(eps * Mat::Identity(n + 1, n + 1));
        Vec c = Vec::Zero(n + 1);
        c[n] = -1.0;
        const QpSolution s = solver.solve(c, ext);
        if (s.status != QpStatus::Optimal) continue;
        const Vec u = s.y.head(n);
        const double slack = -(C.D * u + C.d).maxCoeff();
        if (slack > best) {
            best = slack;
            best_u = u;
        }
        if (best > 0) break;
    }
    return {best, best_u};
}

inline AviDiagnosis validate(const AviProblem& p) {
    AviDiagnosis diag;
    if (p.M.rows() != p.M.cols() || p.q.size() != p.M.rows() || p.C.dim() != p.M.rows() ||
        p.C.D.rows() != p.C.d.size()) {
        diag.dimensions_ok = false;
        diag.messages.emplace_back("dimension mismatch");
        return diag;
    }
    if (!p.M.allFinite() || !p.q.allFinite() || !p.C.D.allFinite() || !p.C.d.allFinite()) {
        diag.dimensions_ok = false;
        diag.messages.emplace_back("non-finite entries");
        return diag;
    }
    const auto mc = monotonicity_constants(p.M);
    diag.mu = mc.mu_raw;
    diag.L = mc.L;
    diag.strongly_monotone = mc.mu_raw > 0;
    if (!diag.strongly_monotone) diag.messages.emplace_back("not strongly monotone");

    QpSolver proj(Mat::Identity(p.dim(), p.dim()));
    const QpSolution s = proj.solve(Vec::Zero(p.dim()), p.C);
    diag.feasible = s.status == QpStatus::Optimal;
    if (!diag.feasible) {
        diag.messages.emplace_back("infeasible set");
        diag.max_slack = -std::numeric_limits<double>::infinity();
        return diag;
    }
    diag.max_slack = max_uniform_slack(p.C).first;
    diag.strictly_feasible = diag.max_slack > 0;
    if (!diag.strictly_feasible) diag.messages.emplace_back("no strictly feasible point");
    return diag;
}

}  // namespace dgvi
