#pragma once

// Dense block-matrix helpers used to stack game data over agents and time.

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "dgvi/errors.hpp"

namespace dgvi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Kronecker product a ⊗ b.
inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

/// Block-diagonal stack; blocks need not be square.
inline Mat blkdg(std::span<const Mat> blocks) {
    if (blocks.empty()) throw DimensionMismatch("blkdg: empty block list");
    Index rows = 0;
    Index cols = 0;
    for (const auto& b : blocks) {
        rows += b.rows();
        cols += b.cols();
    }
    Mat out = Mat::Zero(rows, cols);
    Index r = 0;
    Index c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

inline Mat blkdg(std::initializer_list<Mat> blocks) {
    return blkdg(std::span<const Mat>(blocks.begin(), blocks.size()));
}

/// Dense assembly of a grid of blocks (outer index = block row).
inline Mat blkmat(const std::vector<std::vector<Mat>>& grid) {
    if (grid.empty() || grid.front().empty()) throw DimensionMismatch("blkmat: empty grid");
    const std::size_t ncols = grid.front().size();
    std::vector<Index> heights(grid.size());
    std::vector<Index> widths(ncols);
    for (std::size_t j = 0; j < ncols; ++j) widths[j] = grid.front()[j].cols();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i].size() != ncols) throw DimensionMismatch("blkmat: ragged grid");
        heights[i] = grid[i].front().rows();
        for (std::size_t j = 0; j < ncols; ++j) {
            if (grid[i][j].rows() != heights[i] || grid[i][j].cols() != widths[j]) {
                throw DimensionMismatch("blkmat: block (" + std::to_string(i) + "," +
                                        std::to_string(j) + ") has inconsistent shape");
            }
        }
    }
    Index rows = 0;
    Index cols = 0;
    for (auto h : heights) rows += h;
    for (auto w : widths) cols += w;
    Mat out(rows, cols);
    Index r = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Index c = 0;
        for (std::size_t j = 0; j < ncols; ++j) {
            out.block(r, c, heights[i], widths[j]) = grid[i][j];
            c += widths[j];
        }
        r += heights[i];
    }
    return out;
}

/// Vertical stack of A^1, ..., A^T (predicts x[1..T] from x[0]).
inline Mat build_theta(const Mat& a, int horizon) {
    if (a.rows() != a.cols()) throw DimensionMismatch("build_theta: A must be square");
    if (horizon < 1) throw DimensionMismatch("build_theta: horizon must be >= 1");
    const Index n = a.rows();
    Mat out(n * horizon, n);
    Mat power = a;
    for (int k = 0; k < horizon; ++k) {
        out.block(k * n, 0, n, n) = power;
        power = a * power;
    }
    return out;
}

/// Lower block-Toeplitz input-to-state map: block (r, c) = A^{r-c} B for r >= c.
inline Mat build_gamma(const Mat& a, const Mat& b, int horizon) {
    if (a.rows() != a.cols()) throw DimensionMismatch("build_gamma: A must be square");
    if (b.rows() != a.rows()) throw DimensionMismatch("build_gamma: B rows must match A");
    if (horizon < 1) throw DimensionMismatch("build_gamma: horizon must be >= 1");
    const Index n = a.rows();
    const Index m = b.cols();
    Mat out = Mat::Zero(n * horizon, m * horizon);
    Mat column = b;  // A^k B
    for (int k = 0; k < horizon; ++k) {
        for (int c = 0; c + k < horizon; ++c) {
            out.block((c + k) * n, c * m, n, m) = column;
        }
        column = a * column;
    }
    return out;
}

/// Simulate x[t+1] = A x[t] + sum_i B_i u_i[t] and return col(x[1..T]).
/// `inputs[i]` holds agent i's sequence stacked in time.
inline Vec rollout(const Mat& a, std::span<const Mat> b, const Vec& x0,
                   std::span<const Vec> inputs, int horizon) {
    const Index n = a.rows();
    Vec out(n * horizon);
    Vec x = x0;
    for (int t = 0; t < horizon; ++t) {
        Vec next = a * x;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const Index m = b[i].cols();
            next += b[i] * inputs[i].segment(t * m, m);
        }
        x = next;
        out.segment(t * n, n) = x;
    }
    return out;
}

inline double spectral_radius(const Mat& a) {
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Mat> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace dgvi
