#pragma once

// JSON encoding helpers shared by the file formats. Doubles are written with
// nlohmann's shortest round-trip representation, so every value re-parses to
// the identical IEEE-754 bit pattern.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dgvi/avi.hpp"
#include "dgvi/blockmat.hpp"
#include "dgvi/errors.hpp"

namespace dgvi::io {

using json = nlohmann::json;

inline json to_json_flat(const Mat& m) {
    json out = json::array();
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

inline json to_json(const Vec& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

/// Nested list of rows.
inline json to_json_rows(const Mat& m) {
    json out = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

inline Vec vec_from_json(const json& j) {
    if (!j.is_array()) throw Error("expected a number list");
    Vec v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
    return v;
}

inline Mat mat_from_flat(const json& j, Index rows, Index cols) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(rows * cols)) {
        throw DimensionMismatch("flat matrix has " + std::to_string(j.is_array() ? j.size() : 0) +
                                " entries, expected " + std::to_string(rows * cols));
    }
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index k = 0; k < cols; ++k) m(i, k) = j[static_cast<std::size_t>(i * cols + k)].get<double>();
    return m;
}

/// Accepts a list of rows, or a bare number for a 1x1 matrix.
/// `cols_if_empty` sizes a matrix given as [].
inline Mat mat_from_rows(const json& j, Index cols_if_empty = 0) {
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array()) throw Error("expected a matrix as a list of rows");
    if (j.empty()) return Mat(0, cols_if_empty);
    const Index rows = static_cast<Index>(j.size());
    const Index cols = j[0].is_array() ? static_cast<Index>(j[0].size()) : 1;
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (row.is_number()) {
            if (cols != 1) throw DimensionMismatch("ragged matrix rows");
            m(i, 0) = row.get<double>();
            continue;
        }
        if (static_cast<Index>(row.size()) != cols) throw DimensionMismatch("ragged matrix rows");
        for (Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

// AVI problem file: {n, m, M, q, D, d}, matrices flattened row-major.

inline json avi_to_json(const AviProblem& p) {
    json j;
    j["n"] = p.dim();
    j["m"] = p.C.rows();
    j["M"] = to_json_flat(p.M);
    j["q"] = to_json(p.q);
    j["D"] = to_json_flat(p.C.D);
    j["d"] = to_json(p.C.d);
    return j;
}

inline AviProblem avi_from_json(const json& j) {
    const Index n = j.at("n").get<Index>();
    const Index m = j.at("m").get<Index>();
    if (n < 1 || m < 0) throw DimensionMismatch("AVI file: invalid n or m");
    Vec q = vec_from_json(j.at("q"));
    Vec d = vec_from_json(j.at("d"));
    if (q.size() != n || d.size() != m) throw DimensionMismatch("AVI file: q or d has the wrong length");
    return AviProblem(mat_from_flat(j.at("M"), n, n), std::move(q),
                      Polyhedron(mat_from_flat(j.at("D"), m, n), std::move(d)));
}

inline AviProblem read_avi(const std::string& path) { return avi_from_json(read_json_file(path)); }

inline void write_avi(const std::string& path, const AviProblem& p) { write_json_file(path, avi_to_json(p)); }

}  // namespace dgvi::io
