#pragma once

#include "dgvi/blockmat.hpp"

namespace dgvi {

/// Feasible set {u : D u + d <= 0}. Zero rows means the whole space.
struct Polyhedron {
    Mat D;
    Vec d;

    Polyhedron() = default;
    Polyhedron(Mat D_, Vec d_) : D(std::move(D_)), d(std::move(d_)) {
        if (D.rows() != d.size()) throw DimensionMismatch("Polyhedron: D rows != d size");
    }

    /// Unconstrained set in dimension n.
    static Polyhedron whole_space(Index n) { return {Mat(0, n), Vec(0)}; }

    /// Axis-aligned box lo <= u <= hi.
    static Polyhedron box(const Vec& lo, const Vec& hi) {
        const Index n = lo.size();
        Mat D(2 * n, n);
        D << Mat::Identity(n, n), -Mat::Identity(n, n);
        Vec d(2 * n);
        d << -hi, lo;
        return {std::move(D), std::move(d)};
    }

    [[nodiscard]] Index dim() const { return D.cols(); }
    [[nodiscard]] Index rows() const { return D.rows(); }

    /// Largest constraint value max_r (D u + d)_r; <= 0 means feasible.
    [[nodiscard]] double max_violation(const Vec& u) const {
        if (D.rows() == 0) return -std::numeric_limits<double>::infinity();
        return (D * u + d).maxCoeff();
    }

    [[nodiscard]] bool contains(const Vec& u, double tol = 0.0) const {
        return D.rows() == 0 || max_violation(u) <= tol;
    }
};

}  // namespace dgvi
