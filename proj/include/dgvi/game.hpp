#pragma once

// Linear-quadratic dynamic games x+ = A x + sum_i B_i u_i with stage cost
// 1/2 (|x|^2_{Q_i} + |u_i|^2_{R_i}) and polyhedral stage constraints, and their
// compilation into an affine VI over the stacked input sequence.
//
// Stacking order: u = col(u_1, ..., u_N), u_i = col(u_i[0], ..., u_i[T-1]).

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dgvi/avi.hpp"
#include "dgvi/blockmat.hpp"
#include "dgvi/errors.hpp"
#include "dgvi/json_io.hpp"
#include "dgvi/polyhedron.hpp"
#include "dgvi/qp.hpp"
#include "dgvi/solvers.hpp"

namespace dgvi {

/// Game data. Constraint families, all optional (zero rows):
///   input:  sum_j Du_j u_j[t] + du <= 0               for t = 0..T-1
///   state:  Dx x[t] + dx <= 0                         for t = 1..T
///   mixed:  Ex x[t] + sum_j Eu_j u_j[t] + e <= 0      for t = 0..T-1
struct LqGame {
    Mat A;
    std::vector<Mat> B;
    std::vector<Mat> Q;
    std::vector<Mat> R;
    std::vector<Mat> Du;
    Vec du;
    Mat Dx;
    Vec dx;
    Mat Ex;
    std::vector<Mat> Eu;
    Vec e;
    int T = 10;
    /// Local feedback already folded into A and the constraints (empty if none).
    /// The total input of agent i is K_pre[i] x + u_i.
    std::vector<Mat> K_pre;

    [[nodiscard]] int agents() const { return static_cast<int>(B.size()); }
    [[nodiscard]] Index states() const { return A.rows(); }
    [[nodiscard]] Index inputs(int i) const { return B[static_cast<std::size_t>(i)].cols(); }
    [[nodiscard]] Index stacked_size() const {
        Index s = 0;
        for (const auto& b : B) s += b.cols() * T;
        return s;
    }
    /// Offset of agent i's block in the stacked input.
    [[nodiscard]] Index offset(int i) const {
        Index s = 0;
        for (int j = 0; j < i; ++j) s += inputs(j) * T;
        return s;
    }

    /// Fill absent constraint blocks with correctly sized empty matrices and
    /// check every dimension. Throws DimensionMismatch.
    void normalize() {
        const Index n = A.rows();
        if (A.cols() != n) throw DimensionMismatch("A must be square");
        const std::size_t N = B.size();
        if (N == 0) throw DimensionMismatch("a game needs at least one agent");
        if (Q.size() != N || R.size() != N) throw DimensionMismatch("Q and R need one entry per agent");
        if (T < 1) throw DimensionMismatch("horizon T must be >= 1");
        for (std::size_t i = 0; i < N; ++i) {
            if (B[i].rows() != n) throw DimensionMismatch("B_i must have n rows");
            if (Q[i].rows() != n || Q[i].cols() != n) throw DimensionMismatch("Q_i must be n x n");
            const Index m = B[i].cols();
            if (R[i].rows() != m || R[i].cols() != m) throw DimensionMismatch("R_i must be m_i x m_i");
        }
        auto fix_rows = [&](std::vector<Mat>& blocks, Vec& offset, const char* what) {
            const Index rows = offset.size();
            if (blocks.empty()) {
                for (std::size_t i = 0; i < N; ++i) blocks.push_back(Mat::Zero(rows, B[i].cols()));
            }
            if (blocks.size() != N) throw DimensionMismatch(std::string(what) + ": one block per agent required");
            for (std::size_t i = 0; i < N; ++i) {
                if (blocks[i].rows() != rows || blocks[i].cols() != B[i].cols()) {
                    throw DimensionMismatch(std::string(what) + ": block shape mismatch");
                }
            }
        };
        if (du.size() == 0 && !Du.empty()) du = Vec::Zero(Du[0].rows());
        fix_rows(Du, du, "Du");
        if (Dx.size() == 0 && dx.size() == 0) Dx = Mat(0, n);
        if (Dx.cols() != n || Dx.rows() != dx.size()) throw DimensionMismatch("Dx/dx shape mismatch");
        if (Ex.size() == 0 && e.size() == 0) Ex = Mat(0, n);
        if (e.size() == 0 && Ex.rows() > 0) throw DimensionMismatch("mixed constraints need an offset e");
        if (Ex.cols() != n || Ex.rows() != e.size()) throw DimensionMismatch("Ex/e shape mismatch");
        fix_rows(Eu, e, "Eu");
        if (!K_pre.empty()) {
            if (K_pre.size() != N) throw DimensionMismatch("K_pre needs one entry per agent");
            for (std::size_t i = 0; i < N; ++i) {
                if (K_pre[i].rows() != B[i].cols() || K_pre[i].cols() != n) {
                    throw DimensionMismatch("K_pre_i must be m_i x n");
                }
            }
        }
    }

    /// Sum_j B_j K_j for per-agent gains.
    [[nodiscard]] Mat feedback_sum(const std::vector<Mat>& K) const {
        Mat S = Mat::Zero(states(), states());
        for (std::size_t j = 0; j < B.size(); ++j) S += B[j] * K[j];
        return S;
    }

    /// Substitute u_i = K_i x + v_i. Costs are kept on the new inputs v_i;
    /// input constraints become mixed constraints on (x, v).
    [[nodiscard]] static LqGame prestabilized(LqGame g, const std::vector<Mat>& K) {
        g.normalize();
        if (!g.K_pre.empty()) throw ConfigError("game is already pre-stabilized");
        if (K.size() != g.B.size()) throw DimensionMismatch("one pre-stabilizing gain per agent required");
        const Index n = g.states();
        for (std::size_t i = 0; i < K.size(); ++i) {
            if (K[i].rows() != g.B[i].cols() || K[i].cols() != n) throw DimensionMismatch("K_pre_i must be m_i x n");
        }
        LqGame out = g;
        out.A = g.A + g.feedback_sum(K);
        const Index pu = g.du.size();
        const Index pe = g.e.size();
        Mat Ex_in = Mat::Zero(pu, n);
        Mat Ex_mix = g.Ex;
        for (std::size_t j = 0; j < K.size(); ++j) {
            Ex_in += g.Du[j] * K[j];
            Ex_mix += g.Eu[j] * K[j];
        }
        out.Ex = Mat(pu + pe, n);
        out.Ex << Ex_in, Ex_mix;
        out.e = Vec(pu + pe);
        out.e << g.du, g.e;
        for (std::size_t j = 0; j < K.size(); ++j) {
            out.Eu[j] = Mat(pu + pe, g.B[j].cols());
            out.Eu[j] << g.Du[j], g.Eu[j];
            out.Du[j] = Mat(0, g.B[j].cols());
        }
        out.du = Vec(0);
        out.K_pre = K;
        return out;
    }
};

// ---------------------------------------------------------------------------
// Riccati equations

struct RiccatiSolution {
    std::vector<Mat> P;
    std::vector<Mat> K;
    std::vector<double> residuals;  // max-abs residual of both equations, per agent
    Mat Acl;                        // A + sum_j B_j K_j
    int iterations = 0;
};

struct RiccatiSettings {
    double tol = 1e-12;
    int max_iter = 200000;
};

namespace detail {

inline double rel_change(const Mat& a, const Mat& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Residuals of
///   P_i = Q_i + A' P_i Acl,   K_i = -R_i^{-1} B_i' P_i Acl,   Acl = A + sum_j B_j K_j.
inline std::vector<double> coupled_riccati_residuals(const LqGame& g, const std::vector<Mat>& P,
                                                     const std::vector<Mat>& K) {
    const Mat Acl = g.A + g.feedback_sum(K);
    std::vector<double> res;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const Mat rp = P[i] - g.Q[i] - g.A.transpose() * P[i] * Acl;
        const Mat rk = K[i] + g.R[i].llt().solve(g.B[i].transpose() * P[i] * Acl);
        res.push_back(std::max(rp.cwiseAbs().maxCoeff(), rk.cwiseAbs().maxCoeff()));
    }
    return res;
}

/// Synchronous sweep from P_i = Q_i: given the current P_i, the gain equations
/// are linear in Acl, (I + sum_j S_j P_j) Acl = A with S_j = B_j R_j^{-1} B_j';
/// then K_i = -R_i^{-1} B_i' P_i Acl and P_i <- Q_i + A' P_i Acl.
inline RiccatiSolution solve_coupled_riccati(const LqGame& g, RiccatiSettings st = {}) {
    const Index n = g.states();
    const std::size_t N = g.B.size();
    std::vector<Mat> RinvBt(N), S(N);
    for (std::size_t i = 0; i < N; ++i) {
        Eigen::LLT<Mat> llt(g.R[i]);
        if (llt.info() != Eigen::Success) throw ConfigError("R_i must be positive definite");
        RinvBt[i] = llt.solve(g.B[i].transpose());
        S[i] = g.B[i] * RinvBt[i];
    }
    RiccatiSolution sol;
    sol.P = g.Q;
    Mat Acl;
    bool done = false;
    for (int it = 0; it < st.max_iter && !done; ++it) {
        Mat lhs = Mat::Identity(n, n);
        for (std::size_t i = 0; i < N; ++i) lhs += S[i] * sol.P[i];
        Eigen::PartialPivLU<Mat> lu(lhs);
        Acl = lu.solve(g.A);
        if (!Acl.allFinite()) break;
        double change = 0;
        for (std::size_t i = 0; i < N; ++i) {
            Mat next = g.Q[i] + g.A.transpose() * sol.P[i] * Acl;
            const double ch = detail::rel_change(next, sol.P[i]);
            change = std::isfinite(ch) ? std::max(change, ch) : std::numeric_limits<double>::infinity();
            sol.P[i] = std::move(next);
        }
        sol.iterations = it + 1;
        done = change <= st.tol;
    }
    if (!done) throw NoConvergence("coupled Riccati sweep did not converge");
    Mat lhs = Mat::Identity(n, n);
    for (std::size_t i = 0; i < N; ++i) lhs += S[i] * sol.P[i];
    Acl = lhs.partialPivLu().solve(g.A);
    sol.K.resize(N);
    for (std::size_t i = 0; i < N; ++i) sol.K[i] = -RinvBt[i] * sol.P[i] * Acl;
    sol.Acl = g.A + g.feedback_sum(sol.K);
    sol.residuals = coupled_riccati_residuals(g, sol.P, sol.K);
    if (spectral_radius(sol.Acl) >= 1.0) throw NoConvergence("coupled Riccati limit is not stabilizing");
    return sol;
}

struct AugmentedSystem {
    Mat A_hat;
    Mat B_hat;
    Mat Q_hat;
};

/// A_hat_i = [[A, sum_{j!=i} B_j K_j], [0, A + sum_j B_j K_j]],
/// B_hat_i = col(B_i, 0), Q_hat_i = blkdg(Q_i, 0).
inline std::vector<AugmentedSystem> build_augmented(const LqGame& g, const RiccatiSolution& r) {
    const Index n = g.states();
    const Mat all = g.feedback_sum(r.K);
    std::vector<AugmentedSystem> out;
    for (std::size_t i = 0; i < g.B.size(); ++i) {
        AugmentedSystem s;
        s.A_hat = Mat::Zero(2 * n, 2 * n);
        s.A_hat.topLeftCorner(n, n) = g.A;
        s.A_hat.topRightCorner(n, n) = all - g.B[i] * r.K[i];
        s.A_hat.bottomRightCorner(n, n) = g.A + all;
        s.B_hat = Mat::Zero(2 * n, g.B[i].cols());
        s.B_hat.topRows(n) = g.B[i];
        s.Q_hat = Mat::Zero(2 * n, 2 * n);
        s.Q_hat.topLeftCorner(n, n) = g.Q[i];
        out.push_back(std::move(s));
    }
    return out;
}

struct AreSolution {
    Mat P;
    Mat K;
    double residual = 0;
    int iterations = 0;
};

/// Residual of P = Q + A' P (A + B K), K = -R^{-1} B' P (A + B K).
inline double are_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P, const Mat& K) {
    const Mat Acl = A + B * K;
    const Mat rp = P - Q - A.transpose() * P * Acl;
    const Mat rk = K + R.llt().solve(B.transpose() * P * Acl);
    return std::max(rp.cwiseAbs().maxCoeff(), rk.cwiseAbs().maxCoeff());
}

/// Backward Riccati recursion P <- Q + A' P (I + S P)^{-1} A, S = B R^{-1} B',
/// evaluated by doubling: after k doubling steps H_k equals the recursion
/// iterate 2^k, so convergence takes O(log) steps even when A has slow modes.
///   W = (I + G H)^{-1},  A+ = A W A,  G+ = G + A W G A',  H+ = H + A' H W A.
/// G and H are symmetrized after each step.
inline AreSolution solve_are(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, RiccatiSettings st = {}) {
    const Index n = A.rows();
    Eigen::LLT<Mat> llt(R);
    if (llt.info() != Eigen::Success) throw ConfigError("R must be positive definite");
    const Mat RinvBt = llt.solve(B.transpose());
    const Mat I = Mat::Identity(n, n);
    Mat Ak = A;
    Mat G = B * RinvBt;
    Mat H = 0.5 * (Q + Q.transpose());
    AreSolution sol;
    bool done = false;
    for (int it = 0; it < std::min(st.max_iter, 200) && !done; ++it) {
        Eigen::PartialPivLU<Mat> lu(I + G * H);
        const Mat WA = lu.solve(Ak);           // (I + G H)^{-1} A
        const Mat WG = lu.solve(G);            // (I + G H)^{-1} G
        Mat Hn = H + Ak.transpose() * H * WA;
        Mat Gn = G + Ak * WG * Ak.transpose();
        Hn = 0.5 * (Hn + Hn.transpose()).eval();
        Gn = 0.5 * (Gn + Gn.transpose()).eval();
        if (!Hn.allFinite() || !Gn.allFinite()) break;
        done = detail::rel_change(Hn, H) <= st.tol;
        Ak = (Ak * WA).eval();
        H = std::move(Hn);
        G = std::move(Gn);
        sol.iterations = it + 1;
    }
    if (!done) throw NoConvergence("Riccati recursion did not converge");
    sol.P = std::move(H);
    const Mat Acl = (I + B * RinvBt * sol.P).partialPivLu().solve(A);
    sol.K = -RinvBt * sol.P * Acl;
    sol.residual = are_residual(A, B, Q, R, sol.P, sol.K);
    return sol;
}

// ---------------------------------------------------------------------------
// Assumption on the symplectic-like matrix H

struct Assumption3Diagnosis {
    int stable_eigenvalues = 0;
    int required = 0;
    bool complementary = false;
    [[nodiscard]] bool holds() const { return stable_eigenvalues == required && complementary; }
};

/// H = [[A + sum_j S_j A^{-T} Q_j, row(-S_j A^{-T})], [col(-A^{-T} Q_j), I_N (x) A^{-T}]].
/// Counts eigenvalues inside the unit circle and checks that the stable
/// invariant subspace has a full-rank top n x n block.
inline Assumption3Diagnosis check_assumption3(const LqGame& g) {
    const Index n = g.states();
    const std::size_t N = g.B.size();
    Eigen::FullPivLU<Mat> luA(g.A);
    if (!luA.isInvertible()) throw SingularA("A is singular");
    const Mat AinvT = luA.inverse().transpose();
    const Index dim = n + static_cast<Index>(N) * n;
    Mat H = Mat::Zero(dim, dim);
    H.topLeftCorner(n, n) = g.A;
    for (std::size_t j = 0; j < N; ++j) {
        const Mat S = g.B[j] * g.R[j].llt().solve(g.B[j].transpose());
        const Index off = n + static_cast<Index>(j) * n;
        H.topLeftCorner(n, n) += S * AinvT * g.Q[j];
        H.block(0, off, n, n) = -S * AinvT;
        H.block(off, 0, n, n) = -AinvT * g.Q[j];
        H.block(off, off, n, n) = AinvT;
    }
    Eigen::ComplexEigenSolver<Mat> es(H);
    Assumption3Diagnosis d;
    d.required = static_cast<int>(n);
    std::vector<Index> stable;
    for (Index k = 0; k < dim; ++k) {
        if (std::abs(es.eigenvalues()[k]) < 1.0) stable.push_back(k);
    }
    d.stable_eigenvalues = static_cast<int>(stable.size());
    if (d.stable_eigenvalues == d.required) {
        Eigen::MatrixXcd top(n, n);
        for (Index c = 0; c < n; ++c) top.col(c) = es.eigenvectors().col(stable[static_cast<std::size_t>(c)]).head(n);
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(top);
        lu.setThreshold(1e-10);
        d.complementary = lu.rank() == n;
    }
    return d;
}

// ---------------------------------------------------------------------------
// VI compilation

struct CompileSettings {
    RiccatiSettings riccati{};
    QpSettings qp{};
    /// The VI is posed on D u + d + backoff <= 0, so that solutions whose
    /// active rows hold only up to rounding still satisfy D u + d <= 0.
    double backoff = 1e-10;
};

/// Immutable after construction; shareable between threads except for the
/// DrSolver, whose solve() is const and allocates its own workspace.
struct CompiledGameVi {
    LqGame game;
    RiccatiSolution riccati;
    std::vector<AugmentedSystem> augmented_systems;
    std::vector<AreSolution> augmented;
    Mat theta;                   // col(A^1..A^T)
    Mat theta0;                  // col(A^0..A^{T-1})
    std::vector<Mat> gammas;     // x[1..T] from u_i
    std::vector<Mat> gammas0;    // x[0..T-1] from u_i
    std::vector<Mat> Qbar;
    std::vector<Mat> Rbar;
    Mat M;
    Mat q_map;                   // q = q_map x0
    Mat D;
    Mat d_map;                   // d = d_map x0 + d_const
    Vec d_const;
    double backoff = 0;
    Splitting splitting;
    std::shared_ptr<const DrSolver> dr;
    // Terminal-set data: G x + h <= 0 must hold along the feedback rollout.
    Mat term_G;
    Vec term_h;
    Mat lyap;                    // P_L = Acl' P_L Acl + I
    Vec lyap_row_scale;          // sqrt(g_r' P_L^{-1} g_r)

    [[nodiscard]] Index dim() const { return M.rows(); }
    [[nodiscard]] Vec q_of(const Vec& x0) const { return q_map * x0; }
    [[nodiscard]] Vec d_of(const Vec& x0) const { return d_map * x0 + d_const; }
    /// The tightened set the VI is posed on.
    [[nodiscard]] Polyhedron constraints_of(const Vec& x0) const {
        return {D, (d_of(x0).array() + backoff).matrix()};
    }
    [[nodiscard]] AviProblem problem(const Vec& x0) const {
        if (x0.size() != game.states()) throw DimensionMismatch("initial state has the wrong size");
        return AviProblem(M, q_of(x0), constraints_of(x0));
    }
};

inline Vec q_of(const CompiledGameVi& c, const Vec& x0) { return c.q_of(x0); }

namespace detail {

/// Shift a stacked prediction down by one block: rows for x[0..T-1] from the
/// rows for x[1..T], with x[0] independent of the inputs.
inline Mat shift_prediction(const Mat& gamma, Index n) {
    Mat out = Mat::Zero(gamma.rows(), gamma.cols());
    out.bottomRows(gamma.rows() - n) = gamma.topRows(gamma.rows() - n);
    return out;
}

/// Solve P = Acl' P Acl + I by the doubling iteration P <- P + Ak' P Ak, Ak <- Ak^2.
inline Mat lyapunov_identity(const Mat& Acl) {
    const Index n = Acl.rows();
    Mat P = Mat::Identity(n, n);
    Mat Ak = Acl;
    for (int k = 0; k < 64; ++k) {
        const Mat inc = Ak.transpose() * P * Ak;
        P += inc;
        Ak = (Ak * Ak).eval();
        if (inc.cwiseAbs().maxCoeff() <= 1e-15 * P.cwiseAbs().maxCoeff()) break;
    }
    return 0.5 * (P + P.transpose());
}

}  // namespace detail

/// Assemble the AVI of the finite-horizon game:
///   M = blkdg(I_T (x) R_i) + blkmat(Gamma_i' Qbar_i Gamma_j),
///   q = col(Gamma_i' Qbar_i Theta x0),  Qbar_i = blkdg(I_{T-1} (x) Q_i, P_i),
/// with P_i from the coupled Riccati equations, plus the stacked constraints.
inline CompiledGameVi compile_vi(LqGame g, CompileSettings st = {}) {
    g.normalize();
    CompiledGameVi c;
    const Index n = g.states();
    const int T = g.T;
    const int N = g.agents();
    c.riccati = solve_coupled_riccati(g, st.riccati);
    c.augmented_systems = build_augmented(g, c.riccati);
    for (int i = 0; i < N; ++i) {
        const auto& s = c.augmented_systems[static_cast<std::size_t>(i)];
        c.augmented.push_back(solve_are(s.A_hat, s.B_hat, s.Q_hat, g.R[static_cast<std::size_t>(i)], st.riccati));
    }
    c.theta = build_theta(g.A, T);
    c.theta0 = Mat(n * T, n);
    c.theta0.topRows(n) = Mat::Identity(n, n);
    if (T > 1) c.theta0.bottomRows(n * (T - 1)) = c.theta.topRows(n * (T - 1));
    for (int i = 0; i < N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        c.gammas.push_back(build_gamma(g.A, g.B[ui], T));
        c.gammas0.push_back(detail::shift_prediction(c.gammas.back(), n));
        Mat Qb = Mat::Zero(n * T, n * T);
        for (int t = 0; t < T - 1; ++t) Qb.block(n * t, n * t, n, n) = g.Q[ui];
        Qb.block(n * (T - 1), n * (T - 1), n, n) = c.riccati.P[ui];
        c.Qbar.push_back(std::move(Qb));
        c.Rbar.push_back(kron(Mat::Identity(T, T), g.R[ui]));
    }
    const Index dim = g.stacked_size();
    c.M = Mat::Zero(dim, dim);
    c.q_map = Mat(dim, n);
    for (int i = 0; i < N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const Index oi = g.offset(i);
        const Index mi = g.inputs(i) * T;
        const Mat GtQ = c.gammas[ui].transpose() * c.Qbar[ui];
        c.M.block(oi, oi, mi, mi) += c.Rbar[ui];
        for (int j = 0; j < N; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            c.M.block(oi, g.offset(j), mi, g.inputs(j) * T) += GtQ * c.gammas[uj];
        }
        c.q_map.middleRows(oi, mi) = GtQ * c.theta;
    }

    // Constraint rows: input (t = 0..T-1), state (t = 1..T), mixed (t = 0..T-1).
    const Index pu = g.du.size();
    const Index px = g.dx.size();
    const Index pe = g.e.size();
    const Index rows = T * (pu + px + pe);
    c.D = Mat::Zero(rows, dim);
    c.d_map = Mat::Zero(rows, n);
    c.d_const = Vec::Zero(rows);
    const Mat IDx = kron(Mat::Identity(T, T), g.Dx);
    const Mat IEx = kron(Mat::Identity(T, T), g.Ex);
    const Index r_in = 0;
    const Index r_st = T * pu;
    const Index r_mx = T * (pu + px);
    for (int j = 0; j < N; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        const Index oj = g.offset(j);
        const Index mj = g.inputs(j);
        if (pu > 0) c.D.block(r_in, oj, T * pu, mj * T) = kron(Mat::Identity(T, T), g.Du[uj]);
        if (px > 0) c.D.block(r_st, oj, T * px, mj * T) = IDx * c.gammas[uj];
        if (pe > 0) {
            c.D.block(r_mx, oj, T * pe, mj * T) = IEx * c.gammas0[uj] + kron(Mat::Identity(T, T), g.Eu[uj]);
        }
    }
    for (int t = 0; t < T; ++t) {
        if (pu > 0) c.d_const.segment(r_in + t * pu, pu) = g.du;
        if (px > 0) c.d_const.segment(r_st + t * px, px) = g.dx;
        if (pe > 0) c.d_const.segment(r_mx + t * pe, pe) = g.e;
    }
    if (px > 0) c.d_map.middleRows(r_st, T * px) = IDx * c.theta;
    if (pe > 0) c.d_map.middleRows(r_mx, T * pe) = IEx * c.theta0;

    try {
        c.splitting = make_dr_splitting(c.M);
    } catch (const InvalidSplitting& ex) {
        throw InvalidSplitting(std::string("compiled game VI: ") + ex.what());
    }
    c.dr = std::make_shared<const DrSolver>(c.M, c.splitting, st.qp);
    if (!(st.backoff >= 0)) throw ConfigError("constraint backoff must be non-negative");
    c.backoff = st.backoff;

    // Rows that must hold at every state of the feedback rollout.
    Mat Gin = Mat::Zero(pu, n);
    Mat Gmx = g.Ex;
    for (int j = 0; j < N; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        Gin += g.Du[uj] * c.riccati.K[uj];
        Gmx += g.Eu[uj] * c.riccati.K[uj];
    }
    c.term_G = Mat(px + pu + pe, n);
    c.term_G << g.Dx, Gin, Gmx;
    c.term_h = Vec(px + pu + pe);
    c.term_h << g.dx, g.du, g.e;
    c.lyap = detail::lyapunov_identity(c.riccati.Acl);
    const Mat lyap_inv = c.lyap.llt().solve(Mat::Identity(n, n));
    c.lyap_row_scale = Vec(c.term_G.rows());
    for (Index r = 0; r < c.term_G.rows(); ++r) {
        const Vec gr = c.term_G.row(r).transpose();
        c.lyap_row_scale[r] = std::sqrt(std::max(0.0, gr.dot(lyap_inv * gr)));
    }
    c.game = std::move(g);
    return c;
}

/// M1 assembled blockwise as blkdg(Rbar_i / 2) + blkmat(Gamma_i' (Qbar_i + Qbar_j') Gamma_j / 4).
inline Mat structured_m1(const CompiledGameVi& c) {
    const auto& g = c.game;
    const Index dim = c.dim();
    Mat M1 = Mat::Zero(dim, dim);
    for (int i = 0; i < g.agents(); ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const Index oi = g.offset(i);
        const Index mi = g.inputs(i) * g.T;
        M1.block(oi, oi, mi, mi) += 0.5 * c.Rbar[ui];
        for (int j = 0; j < g.agents(); ++j) {
            const auto uj = static_cast<std::size_t>(j);
            M1.block(oi, g.offset(j), mi, g.inputs(j) * g.T) +=
                0.25 * c.gammas[ui].transpose() * (c.Qbar[ui] + c.Qbar[uj].transpose()) * c.gammas[uj];
        }
    }
    return M1;
}

/// u_i[t] = K_i Acl^t x0 for t < T, stacked agent-major.
inline Vec unconstrained_ne_sequence(const CompiledGameVi& c, const Vec& x0, int T) {
    const auto& g = c.game;
    Index dim = 0;
    for (int i = 0; i < g.agents(); ++i) dim += g.inputs(i) * T;
    Vec u(dim);
    Vec x = x0;
    std::vector<Vec> states;
    for (int t = 0; t < T; ++t) {
        states.push_back(x);
        x = c.riccati.Acl * x;
    }
    Index off = 0;
    for (int i = 0; i < g.agents(); ++i) {
        const Mat& K = c.riccati.K[static_cast<std::size_t>(i)];
        const Index m = K.rows();
        for (int t = 0; t < T; ++t) u.segment(off + t * m, m) = K * states[static_cast<std::size_t>(t)];
        off += m * T;
    }
    return u;
}

inline Vec unconstrained_ne_sequence(const CompiledGameVi& c, const Vec& x0) {
    return unconstrained_ne_sequence(c, x0, c.game.T);
}

/// Sound inner test for the terminal set of the feedback loop x+ = Acl x.
/// Simulates up to horizon_check steps, requiring G x_k + h <= -margin at each
/// visited state, and accepts as soon as the Lyapunov sublevel set through x_k
/// satisfies every row with the same margin (it is invariant, so all later
/// states do too).
inline bool in_terminal_set(const CompiledGameVi& c, const Vec& x, int horizon_check = 50, double margin = 1e-9) {
    if (x.size() != c.game.states()) throw DimensionMismatch("state has the wrong size");
    const Index rows = c.term_G.rows();
    Vec xk = x;
    for (int k = 0; k <= horizon_check; ++k) {
        const Vec val = c.term_G * xk + c.term_h;
        if (rows > 0 && val.maxCoeff() > -margin) return false;
        const double level = std::sqrt(std::max(0.0, xk.dot(c.lyap * xk)));
        bool inside = true;
        for (Index r = 0; r < rows && inside; ++r) {
            inside = level * c.lyap_row_scale[r] + c.term_h[r] <= -margin;
        }
        if (inside) return true;
        xk = c.riccati.Acl * xk;
    }
    return false;
}

/// x[1..T] for a stacked input, by direct simulation of the dynamics.
inline std::vector<Vec> simulate_states(const LqGame& g, const Vec& x0, const Vec& u) {
    std::vector<Vec> xs{x0};
    Vec x = x0;
    for (int t = 0; t < g.T; ++t) {
        Vec next = g.A * x;
        for (int i = 0; i < g.agents(); ++i) {
            const Index m = g.inputs(i);
            next += g.B[static_cast<std::size_t>(i)] * u.segment(g.offset(i) + t * m, m);
        }
        x = next;
        xs.push_back(x);
    }
    return xs;
}

/// Agent i's best response over u_i with the other blocks of `profile` frozen:
///   min sum_{t<T} 1/2(|x[t]|^2_{Q_i} + |u_i[t]|^2_{R_i}) + 1/2 |col(x[T], x*[T])|^2_{Phat_i}
/// where x*[T] is the terminal state under the full profile. Solved as one QP.
inline Vec best_response(const CompiledGameVi& c, const Vec& x0, int i, const Vec& profile) {
    const auto& g = c.game;
    if (i < 0 || i >= g.agents()) throw ConfigError("agent index out of range");
    if (profile.size() != c.dim()) throw DimensionMismatch("profile has the wrong size");
    const auto ui = static_cast<std::size_t>(i);
    const Index n = g.states();
    const int T = g.T;
    const Index oi = g.offset(i);
    const Index mi = g.inputs(i) * T;
    const Mat& Ph = c.augmented[ui].P;

    // Predicted x[1..T] = Gamma_i u_i + w.
    Vec w = c.theta * x0;
    for (int j = 0; j < g.agents(); ++j) {
        if (j == i) continue;
        w += c.gammas[static_cast<std::size_t>(j)] * profile.segment(g.offset(j), g.inputs(j) * T);
    }
    const Vec xT_star = (w + c.gammas[ui] * profile.segment(oi, mi)).tail(n);

    Mat Qt = Mat::Zero(n * T, n * T);
    for (int t = 0; t < T - 1; ++t) Qt.block(n * t, n * t, n, n) = g.Q[ui];
    Qt.block(n * (T - 1), n * (T - 1), n, n) = Ph.topLeftCorner(n, n);
    Vec lin_x = Qt * w;
    lin_x.tail(n) += Ph.topRightCorner(n, n) * xT_star;
    const Mat& Gi = c.gammas[ui];
    Mat P = c.Rbar[ui] + Gi.transpose() * Qt * Gi;
    P = 0.5 * (P + P.transpose()).eval();
    const Vec lin = Gi.transpose() * lin_x;

    // Joint constraints with the other agents frozen; rows not involving u_i
    // must already hold.
    Vec offs = c.constraints_of(x0).d;
    for (int j = 0; j < g.agents(); ++j) {
        if (j == i) continue;
        offs += c.D.middleCols(g.offset(j), g.inputs(j) * T) * profile.segment(g.offset(j), g.inputs(j) * T);
    }
    const Mat Di = c.D.middleCols(oi, mi);
    std::vector<Index> keep;
    for (Index r = 0; r < Di.rows(); ++r) {
        if (Di.row(r).cwiseAbs().maxCoeff() > 0) {
            keep.push_back(r);
        } else if (offs[r] > 1e-9) {
            throw Infeasible("best response: a constraint independent of agent " + std::to_string(i) +
                             " is violated");
        }
    }
    Mat Dk(static_cast<Index>(keep.size()), mi);
    Vec dk(static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        Dk.row(static_cast<Index>(k)) = Di.row(keep[k]);
        dk[static_cast<Index>(k)] = offs[keep[k]];
    }
    QpSolver solver(P, QpSettings{1e-10, 50000});
    const auto sol = solver.solve(lin, Polyhedron(Dk, dk));
    if (sol.status == QpStatus::Infeasible) throw Infeasible("best response: empty feasible set");
    return sol.y;
}

// ---------------------------------------------------------------------------
// JSON: {A, B[], Q[], R[], Du[], du, Dx, dx, T, K_pre[]} plus optional mixed
// constraints {Ex, Eu[], e}. Matrices are lists of rows. If K_pre is present
// the substitution u_i = K_pre_i x + v_i is applied on load; a game that was
// saved after the substitution carries K_pre_applied instead.

namespace io {

inline json game_to_json(const LqGame& g) {
    json j;
    j["A"] = to_json_rows(g.A);
    auto list = [](const std::vector<Mat>& ms) {
        json a = json::array();
        for (const auto& m : ms) a.push_back(to_json_rows(m));
        return a;
    };
    j["B"] = list(g.B);
    j["Q"] = list(g.Q);
    j["R"] = list(g.R);
    j["Du"] = list(g.Du);
    j["du"] = to_json(g.du);
    j["Dx"] = to_json_rows(g.Dx);
    j["dx"] = to_json(g.dx);
    j["Ex"] = to_json_rows(g.Ex);
    j["Eu"] = list(g.Eu);
    j["e"] = to_json(g.e);
    j["T"] = g.T;
    if (!g.K_pre.empty()) j["K_pre_applied"] = list(g.K_pre);
    return j;
}

inline LqGame game_from_json(const json& j) {
    LqGame g;
    g.A = mat_from_rows(j.at("A"));
    const Index n = g.A.rows();
    auto list = [&](const char* key, std::vector<Mat>& out, Index cols_if_empty) {
        if (!j.contains(key)) return;
        for (const auto& m : j.at(key)) out.push_back(mat_from_rows(m, cols_if_empty));
    };
    list("B", g.B, 0);
    list("Q", g.Q, n);
    list("R", g.R, 0);
    if (j.contains("Du")) {
        for (std::size_t i = 0; i < j.at("Du").size(); ++i) {
            g.Du.push_back(mat_from_rows(j.at("Du")[i], i < g.B.size() ? g.B[i].cols() : 0));
        }
    }
    if (j.contains("Eu")) {
        for (std::size_t i = 0; i < j.at("Eu").size(); ++i) {
            g.Eu.push_back(mat_from_rows(j.at("Eu")[i], i < g.B.size() ? g.B[i].cols() : 0));
        }
    }
    if (j.contains("du")) g.du = vec_from_json(j.at("du"));
    if (j.contains("Dx")) g.Dx = mat_from_rows(j.at("Dx"), n);
    if (j.contains("dx")) g.dx = vec_from_json(j.at("dx"));
    if (j.contains("Ex")) g.Ex = mat_from_rows(j.at("Ex"), n);
    if (j.contains("e")) g.e = vec_from_json(j.at("e"));
    g.T = j.value("T", 10);
    if (j.contains("K_pre_applied")) list("K_pre_applied", g.K_pre, n);
    g.normalize();
    if (j.contains("K_pre")) {
        if (!g.K_pre.empty()) throw ConfigError("game file has both K_pre and K_pre_applied");
        std::vector<Mat> K;
        for (const auto& m : j.at("K_pre")) K.push_back(mat_from_rows(m, n));
        return LqGame::prestabilized(std::move(g), K);
    }
    return g;
}

inline LqGame read_game(const std::string& path) { return game_from_json(read_json_file(path)); }

}  // namespace io

}  // namespace dgvi
