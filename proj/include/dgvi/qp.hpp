#pragma once

// Strictly convex QP over a polyhedron:
//
//     minimize  1/2 y'P y + c'y   subject to  D y + d <= 0,   P = P' > 0.
//
// Solved with the dual active-set method of Goldfarb and Idnani. The method
// starts from the unconstrained minimizer and adds violated constraints one
// at a time while keeping the multipliers dual feasible, so every iterate is
// optimal for the constraints added so far. The Cholesky factor of P is
// computed once per QpSolver and reused across right-hand sides, which is
// what makes repeated solves with a fixed Hessian (operator-splitting steps,
// projections, receding-horizon re-solves) cheap.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "dgvi/blockmat.hpp"
#include "dgvi/errors.hpp"
#include "dgvi/polyhedron.hpp"

namespace dgvi {

struct QpProblem {
    Mat P;
    Vec c;
    Polyhedron C;
};

enum class QpStatus { Optimal, Infeasible, IterLimit };

inline const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::IterLimit: return "iter_limit";
    }
    return "?";
}

struct QpSolution {
    Vec y;
    Vec lambda;               // one multiplier per row of D, all >= 0
    double kkt_residual = 0;  // max of stationarity, feasibility, complementarity
    QpStatus status = QpStatus::Optimal;
    int iterations = 0;
    std::vector<int> active;  // indices of active rows at termination
};

struct QpSettings {
    double tol = 1e-8;
    int max_iter = 50000;
};

/// Max of the three KKT violations of (y, lambda) for the QP.
inline double qp_kkt_residual(const Mat& P, const Vec& c, const Polyhedron& C, const Vec& y,
                              const Vec& lambda) {
    Vec grad = P * y + c;
    double res = 0.0;
    if (C.rows() > 0) {
        grad += C.D.transpose() * lambda;
        const Vec g = C.D * y + C.d;
        res = std::max(res, std::max(0.0, g.maxCoeff()));
        res = std::max(res, std::abs(lambda.dot(g)));
        res = std::max(res, std::max(0.0, -lambda.minCoeff()));
    }
    if (grad.size() > 0) res = std::max(res, grad.cwiseAbs().maxCoeff());
    return res;
}

class QpSolver {
public:
    /// Factor P once; throws ConfigError when P is not symmetric positive definite.
    explicit QpSolver(const Mat& P, QpSettings settings = {}) : settings_(settings), P_(P) {
        if (P.rows() != P.cols()) throw DimensionMismatch("QpSolver: P must be square");
        const Index n = P.rows();
        if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, P.cwiseAbs().maxCoeff())) {
            throw ConfigError("QpSolver: P is not symmetric");
        }
        if (P.isIdentity(0.0)) {
            J0_ = Mat::Identity(n, n);
            identity_ = true;
            return;
        }
        Eigen::LLT<Mat> llt(P);
        if (llt.info() != Eigen::Success) throw ConfigError("QpSolver: P is not positive definite");
        // J0 = L^{-T}, so that J0 J0' = P^{-1}.
        Mat L = llt.matrixL();
        J0_ = L.triangularView<Eigen::Lower>().solve(Mat::Identity(n, n)).transpose();
    }

    [[nodiscard]] Index dim() const { return P_.rows(); }
    [[nodiscard]] const Mat& hessian() const { return P_; }
    [[nodiscard]] const QpSettings& settings() const { return settings_; }

    /// Solve with linear term c over C. `hint` lists rows believed active
    /// (e.g. from a previous nearby solve). The hinted face is tried directly
    /// first; if it does not give a KKT point, the active-set iteration runs
    /// with violated hinted rows added first.
    [[nodiscard]] QpSolution solve(const Vec& c, const Polyhedron& C,
                                   std::span<const int> hint = {}) const {
        const Index n = dim();
        if (c.size() != n || C.dim() != n) throw DimensionMismatch("QpSolver::solve: size mismatch");
        const Index m = C.rows();
        constexpr double inf = std::numeric_limits<double>::infinity();
        constexpr double eps = std::numeric_limits<double>::epsilon();

        QpSolution sol;
        sol.lambda = Vec::Zero(m);

        Mat J = J0_;
        Mat R = Mat::Zero(n, n);
        std::vector<int> active;  // row indices, in R column order
        Vec u(n + 1);             // multipliers of active rows (+ one being added)
        Index q = 0;

        // Unconstrained minimizer y = -P^{-1} c = -J J' c.
        Vec y = -(J * (J.transpose() * c));

        // Normals n_r = -D_r', slack s_r(y) = n_r'y - d_r >= 0 when feasible.
        Vec row_norm(m);
        for (Index r = 0; r < m; ++r) row_norm[r] = C.D.row(r).norm();

        if (!hint.empty()) {
            if (auto fast = solve_on_face(c, C, hint, y, row_norm)) return std::move(*fast);
        }

        std::vector<char> in_hint(static_cast<std::size_t>(m), 0);
        for (int h : hint) {
            if (h >= 0 && h < m) in_hint[static_cast<std::size_t>(h)] = 1;
        }
        std::vector<char> is_active(static_cast<std::size_t>(m), 0);

        auto slack = [&](Index r) { return -C.D.row(r).dot(y) - C.d[r]; };
        auto violation_tol = [&](Index r) {
            return 1e-13 * (1.0 + std::abs(C.d[r]) + row_norm[r] * y.cwiseAbs().maxCoeff());
        };

        int iter = 0;
        const int max_iter = settings_.max_iter;

        while (true) {
            // Pick the constraint to add: most violated (normalized) hinted row,
            // otherwise most violated row overall.
            Index p = -1;
            double worst = 0.0;
            Index p_hint = -1;
            double worst_hint = 0.0;
            if (m > 0) {
                const Vec s = -(C.D * y) - C.d;
                for (Index r = 0; r < m; ++r) {
                    if (is_active[static_cast<std::size_t>(r)]) continue;
                    if (s[r] >= -violation_tol(r)) continue;
                    const double v = s[r] / std::max(row_norm[r], eps);
                    if (v < worst) {
                        worst = v;
                        p = r;
                    }
                    if (in_hint[static_cast<std::size_t>(r)] && v < worst_hint) {
                        worst_hint = v;
                        p_hint = r;
                    }
                }
            }
            if (p_hint >= 0) p = p_hint;
            if (p < 0) break;  // primal feasible: optimal

            const Vec np = -C.D.row(p).transpose();
            u[q] = 0.0;

            // Step towards satisfying constraint p; may drop active rows on the way.
            bool added = false;
            while (!added) {
                if (++iter > max_iter) {
                    sol.status = QpStatus::IterLimit;
                    return finish(std::move(sol), y, active, u, C, c);
                }
                const Vec dvec = J.transpose() * np;
                const Vec z = J.rightCols(n - q) * dvec.tail(n - q);
                Vec rdir(q);
                if (q > 0) {
                    rdir = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(dvec.head(q));
                }

                // Partial (dual) step: largest step keeping active multipliers >= 0.
                double t1 = inf;
                Index drop = -1;
                for (Index j = 0; j < q; ++j) {
                    if (rdir[j] > 1e-14 * (1.0 + std::abs(rdir.cwiseAbs().maxCoeff()))) {
                        const double ratio = u[j] / rdir[j];
                        if (ratio < t1) {
                            t1 = ratio;
                            drop = j;
                        }
                    }
                }
                // Full (primal) step: makes constraint p tight.
                double t2 = inf;
                const double zn = dvec.tail(n - q).squaredNorm();  // = z' np
                if (std::sqrt(zn) > 1e-12 * std::max(dvec.norm(), eps)) {
                    t2 = -slack(p) / zn;
                    t2 = std::max(t2, 0.0);
                }

                if (t1 == inf && t2 == inf) {
                    sol.status = QpStatus::Infeasible;
                    return finish(std::move(sol), y, active, u, C, c);
                }

                if (t2 == inf) {
                    // No primal progress possible: pure dual step, then drop.
                    for (Index j = 0; j < q; ++j) u[j] -= t1 * rdir[j];
                    u[q] += t1;
                    drop_constraint(J, R, active, is_active, u, q, drop);
                    continue;
                }

                const double t = std::min(t1, t2);
                y += t * z;
                for (Index j = 0; j < q; ++j) u[j] -= t * rdir[j];
                u[q] += t;

                if (t2 <= t1) {
                    add_constraint(J, R, dvec, q);
                    active.push_back(static_cast<int>(p));
                    is_active[static_cast<std::size_t>(p)] = 1;
                    added = true;
                } else {
                    drop_constraint(J, R, active, is_active, u, q, drop);
                }
            }
        }

        sol.status = QpStatus::Optimal;
        sol.iterations = iter;
        return finish(std::move(sol), y, active, u, C, c);
    }

private:
    /// Minimizer on the face where the hinted rows hold with equality, accepted
    /// only if it is feasible and all its multipliers are non-negative.
    std::optional<QpSolution> solve_on_face(const Vec& c, const Polyhedron& C, std::span<const int> hint,
                                            const Vec& y0, const Vec& row_norm) const {
        const Index n = dim();
        const Index m = C.rows();
        std::vector<int> rows;
        std::vector<char> seen(static_cast<std::size_t>(m), 0);
        for (int h : hint) {
            if (h < 0 || h >= m || seen[static_cast<std::size_t>(h)]) continue;
            seen[static_cast<std::size_t>(h)] = 1;
            rows.push_back(h);
        }
        const auto q = static_cast<Index>(rows.size());
        if (q == 0 || q > n) return std::nullopt;
        Mat DAt(n, q);
        Vec dA(q);
        for (Index j = 0; j < q; ++j) {
            DAt.col(j) = C.D.row(rows[static_cast<std::size_t>(j)]).transpose();
            dA[j] = C.d[rows[static_cast<std::size_t>(j)]];
        }
        const Mat Z = identity_ ? DAt : Mat(J0_.transpose() * DAt);
        const Mat G = Z.transpose() * Z;
        Eigen::LLT<Mat> llt(G);
        if (llt.info() != Eigen::Success) return std::nullopt;
        const Vec Ld = Mat(llt.matrixL()).diagonal();
        if (Ld.minCoeff() <= 1e-7 * std::sqrt(G.diagonal().maxCoeff())) return std::nullopt;
        const Vec lam = llt.solve(DAt.transpose() * y0 + dA);
        if (lam.minCoeff() < 0.0) return std::nullopt;
        const Vec y = identity_ ? Vec(y0 - Z * lam) : Vec(y0 - J0_ * (Z * lam));
        const Vec s = -(C.D * y) - C.d;
        const double ymax = y.cwiseAbs().maxCoeff();
        for (Index r = 0; r < m; ++r) {
            if (s[r] < -1e-13 * (1.0 + std::abs(C.d[r]) + row_norm[r] * ymax)) return std::nullopt;
        }
        QpSolution sol;
        sol.lambda = Vec::Zero(m);
        sol.status = QpStatus::Optimal;
        Vec u(q + 1);
        u.head(q) = lam;
        return finish(std::move(sol), y, rows, u, C, c);
    }

    QpSolution finish(QpSolution sol, const Vec& y, const std::vector<int>& active, const Vec& u,
                      const Polyhedron& C, const Vec& c) const {
        sol.y = y;
        sol.active = active;
        for (std::size_t j = 0; j < active.size(); ++j) {
            sol.lambda[active[j]] = std::max(0.0, u[static_cast<Index>(j)]);
        }
        sol.kkt_residual = qp_kkt_residual(P_, c, C, sol.y, sol.lambda);
        return sol;
    }

    // (J_a, J_b) <- (c J_a + s J_b, -s J_a + c J_b), in place.
    static void rotate_columns(Mat& J, Index a, Index b, double c, double s) {
        double* x = J.col(a).data();
        double* y = J.col(b).data();
        for (Index i = 0; i < J.rows(); ++i) {
            const double xi = x[i];
            const double yi = y[i];
            x[i] = c * xi + s * yi;
            y[i] = -s * xi + c * yi;
        }
    }

    // Reflect the trailing columns of J so that the tail of d (= J' n_p)
    // collapses into entry q; R gains column q.
    static void add_constraint(Mat& J, Mat& R, Vec d, Index& q) {
        const Index n = J.rows();
        const Index k = n - q;
        if (k > 1) {
            Vec essential(k - 1);
            double tau = 0;
            double beta = 0;
            d.tail(k).makeHouseholder(essential, tau, beta);
            Vec work(n);
            J.rightCols(k).applyHouseholderOnTheRight(essential, tau, work.data());
            d[q] = beta;
        }
        R.col(q).head(q + 1) = d.head(q + 1);
        ++q;
    }

    // Remove active entry `l`; restore triangularity of R with row rotations.
    static void drop_constraint(Mat& J, Mat& R, std::vector<int>& active, std::vector<char>& is_active,
                                Vec& u, Index& q, Index l) {
        is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(l)])] = 0;
        active.erase(active.begin() + l);
        // Shift R columns and multipliers (including the pending one at q).
        for (Index j = l; j < q - 1; ++j) R.col(j) = R.col(j + 1);
        R.col(q - 1).setZero();
        for (Index j = l; j < q; ++j) u[j] = u[j + 1];
        --q;
        for (Index j = l; j < q; ++j) {
            const double a = R(j, j);
            const double b = R(j + 1, j);
            if (b == 0.0) continue;
            const double h = std::hypot(a, b);
            const double cs = a / h;
            const double sn = b / h;
            for (Index k = j; k < q; ++k) {
                const double rj = R(j, k);
                const double rj1 = R(j + 1, k);
                R(j, k) = cs * rj + sn * rj1;
                R(j + 1, k) = -sn * rj + cs * rj1;
            }
            R(j + 1, j) = 0.0;
            rotate_columns(J, j, j + 1, cs, sn);
        }
    }

    QpSettings settings_;
    Mat P_;
    Mat J0_;
    bool identity_ = false;
};

/// One-shot convenience wrapper.
inline QpSolution solve_qp(const QpProblem& p, double tol = 1e-8, int max_iter = 50000,
                           std::span<const int> hint = {}) {
    QpSolver solver(p.P, QpSettings{tol, max_iter});
    return solver.solve(p.c, p.C, hint);
}

}  // namespace dgvi
