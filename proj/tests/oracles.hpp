#pragma once

// Independent reference computations used only by the test suites.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "dgvi/avi.hpp"

namespace dgvi::oracle {

/// Solve AVI(C, M, q) by enumerating every active set S and solving
///   M u + q + D_S' l = 0,  D_S u + d_S = 0,
/// accepting the first candidate with l >= 0 and D u + d <= 0. Exponential in
/// the number of rows; intended for m <= 8.
inline std::optional<Vec> kkt_enumeration(const AviProblem& p, double tol = 1e-9) {
    const Index n = p.dim();
    const Index m = p.C.rows();
    for (long mask = 0; mask < (1L << m); ++mask) {
        std::vector<Index> S;
        for (Index r = 0; r < m; ++r)
            if (mask & (1L << r)) S.push_back(r);
        const Index k = static_cast<Index>(S.size());
        Mat K = Mat::Zero(n + k, n + k);
        Vec rhs(n + k);
        K.topLeftCorner(n, n) = p.M;
        rhs.head(n) = -p.q;
        for (Index a = 0; a < k; ++a) {
            K.block(0, n + a, n, 1) = p.C.D.row(S[a]).transpose();
            K.block(n + a, 0, 1, n) = p.C.D.row(S[a]);
            rhs[n + a] = -p.C.d[S[a]];
        }
        Eigen::FullPivLU<Mat> lu(K);
        if (!lu.isInvertible()) continue;
        const Vec sol = lu.solve(rhs);
        const Vec u = sol.head(n);
        if (k > 0 && sol.tail(k).minCoeff() < -tol) continue;
        if (m > 0 && (p.C.D * u + p.C.d).maxCoeff() > tol) continue;
        return u;
    }
    return std::nullopt;
}

/// Small random strongly monotone AVI with a strictly feasible point.
inline AviProblem small_random_avi(std::mt19937_64& rng, Index n, Index m) {
    std::normal_distribution<double> g(0.0, 1.0);
    auto gauss = [&](Index r, Index c) {
        Mat out(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) out(i, j) = g(rng);
        return out;
    };
    const Mat S = gauss(n, n);
    const Mat W = gauss(n, n);
    const Mat M = 0.5 * Mat::Identity(n, n) + S * S.transpose() / static_cast<double>(n) + 0.5 * (W - W.transpose());
    const Vec q = gauss(n, 1);
    const Mat D = gauss(m, n);
    const Vec u0 = 0.1 * gauss(n, 1);
    std::uniform_real_distribution<double> slack(0.1, 1.0);
    Vec d(m);
    for (Index r = 0; r < m; ++r) d[r] = -D.row(r).dot(u0) - slack(rng);
    return AviProblem(M, q, Polyhedron(D, d));
}

/// Central finite-difference gradient of a scalar function.
template <class F>
Vec fd_gradient(F&& f, const Vec& x, double h = 1e-5) {
    Vec g(x.size());
    Vec xp = x;
    for (Index i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

}  // namespace dgvi::oracle
