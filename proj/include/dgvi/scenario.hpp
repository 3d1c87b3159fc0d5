#pragma once

// Instance factories: the four-way crossing game and random strongly monotone AVIs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dgvi/avi.hpp"
#include "dgvi/errors.hpp"
#include "dgvi/game.hpp"
#include "dgvi/json_io.hpp"

namespace dgvi {

// ---------------------------------------------------------------------------
// Conflict table

/// Symmetric relation over path labels read from a whitespace-separated matrix:
/// a header row of labels, then one row per label starting with the label.
/// Lines starting with '#' are comments.
class ConflictTable {
public:
    static ConflictTable parse(const std::string& text) {
        ConflictTable t;
        std::istringstream in(text);
        std::string line;
        bool header = false;
        while (std::getline(in, line)) {
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            std::istringstream ls(line);
            if (!header) {
                std::string label;
                while (ls >> label) t.labels_.push_back(label);
                header = true;
                continue;
            }
            std::string row_label;
            ls >> row_label;
            for (const auto& col : t.labels_) {
                int v = 0;
                if (!(ls >> v) || (v != 0 && v != 1)) throw SpecError("conflict table: bad entry in row " + row_label);
                t.rel_[{row_label, col}] = v == 1;
            }
        }
        if (t.labels_.empty()) throw SpecError("conflict table: missing header");
        for (const auto& a : t.labels_) {
            for (const auto& b : t.labels_) {
                auto ab = t.rel_.find({a, b});
                auto ba = t.rel_.find({b, a});
                if (ab == t.rel_.end() || ba == t.rel_.end()) throw SpecError("conflict table: missing row " + a);
                if (ab->second != ba->second) throw SpecError("conflict table: not symmetric at " + a + "/" + b);
            }
        }
        return t;
    }

    [[nodiscard]] bool has(const std::string& label) const {
        return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
    }

    [[nodiscard]] bool conflict(const std::string& a, const std::string& b) const {
        auto it = rel_.find({a, b});
        if (it == rel_.end()) throw SpecError("unknown direction " + a + " or " + b);
        return it->second;
    }

    [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }

private:
    std::vector<std::string> labels_;
    std::map<std::pair<std::string, std::string>, bool> rel_;
};

/// Default table: the crossing is split into cells NW, NE, SW, SE and each path
/// occupies the cells it drives through (right-hand traffic); paths conflict
/// iff they share a cell. Label XY enters from side X and exits towards Y.
inline const char* default_conflict_table_text() {
    return R"(# Path conflicts at a four-way crossing (right-hand traffic).
# Entry (r, c) is 1 when the paths of directions r and c intersect.
# Direction XY enters from side X and leaves towards side Y.
     NS SN EW WE NW SE EN WS NE SW ES WN
  NS  1  0  1  1  1  0  0  1  1  1  1  1
  SN  0  1  1  1  0  1  1  0  1  1  1  1
  EW  1  1  1  0  1  0  1  0  1  1  1  1
  WE  1  1  0  1  0  1  0  1  1  1  1  1
  NW  1  0  1  0  1  0  0  0  1  1  0  0
  SE  0  1  0  1  0  1  0  0  1  1  0  0
  EN  0  1  1  0  0  0  1  0  0  0  1  1
  WS  1  0  0  1  0  0  0  1  0  0  1  1
  NE  1  1  1  1  1  1  0  0  1  1  0  0
  SW  1  1  1  1  1  1  0  0  1  1  0  0
  ES  1  1  1  1  0  0  1  1  0  0  1  1
  WN  1  1  1  1  0  0  1  1  0  0  1  1
)";
}

inline const ConflictTable& default_conflict_table() {
    static const ConflictTable t = ConflictTable::parse(default_conflict_table_text());
    return t;
}

// ---------------------------------------------------------------------------
// Crossing scenario

/// Vehicles are indexed in arrival order. chi[i] is the index of the latest
/// earlier vehicle whose path intersects that of i, or -1 for a leader.
struct CrossroadSpec {
    std::vector<std::string> directions;
    std::vector<int> chi;
    double tau = 0.1;       // s
    double v_ref = 10.0;    // m/s
    double d_des = 10.0;    // desired distance to the predecessor, m
    double d_min = 5.0;     // m
    double v_min = 0.0;     // m/s
    double v_max = 15.0;    // m/s
    double u_min = -3.0;    // m/s^2
    double u_max = 3.0;     // m/s^2
    double k_pre = 0.1;     // local gain on 1' x_i
    int horizon = 10;
    std::vector<double> initial_speeds;  // m/s, one per vehicle
    std::vector<double> initial_gaps;    // m, distance to the predecessor (ignored for leaders)

    [[nodiscard]] int vehicles() const { return static_cast<int>(directions.size()); }
    [[nodiscard]] bool is_leader(int i) const { return chi[static_cast<std::size_t>(i)] < 0; }

    /// Throws SpecError unless every predecessor precedes its follower and all
    /// per-vehicle lists have matching lengths.
    void validate() const {
        const std::size_t N = directions.size();
        if (N == 0) throw SpecError("crossroad: no vehicles");
        if (chi.size() != N) throw SpecError("crossroad: chi needs one entry per vehicle");
        for (std::size_t i = 0; i < N; ++i) {
            if (chi[i] >= static_cast<int>(i) || chi[i] < -1) {
                throw SpecError("crossroad: predecessor of vehicle " + std::to_string(i + 1) + " does not precede it");
            }
        }
        if (!(tau > 0)) throw SpecError("crossroad: tau must be positive");
        if (!(v_min < v_max) || !(u_min < u_max)) throw SpecError("crossroad: empty speed or input range");
        if (!(d_min < d_des)) throw SpecError("crossroad: d_min must be below the desired distance");
        if (!initial_speeds.empty() && initial_speeds.size() != N) throw SpecError("crossroad: initial_speeds length");
        if (!initial_gaps.empty() && initial_gaps.size() != N) throw SpecError("crossroad: initial_gaps length");
        if (horizon < 1) throw SpecError("crossroad: horizon must be >= 1");
    }

    /// First k vehicles; predecessors keep their indices since chi(i) < i.
    [[nodiscard]] CrossroadSpec prefix(int k) const {
        if (k < 1 || k > vehicles()) throw SpecError("crossroad: vehicle prefix out of range");
        CrossroadSpec s = *this;
        s.directions.resize(static_cast<std::size_t>(k));
        s.chi.resize(static_cast<std::size_t>(k));
        if (!s.initial_speeds.empty()) s.initial_speeds.resize(static_cast<std::size_t>(k));
        if (!s.initial_gaps.empty()) s.initial_gaps.resize(static_cast<std::size_t>(k));
        return s;
    }
};

/// chi(i) = max{j < i : paths of i and j conflict}, -1 if none.
inline std::vector<int> derive_chi(const std::vector<std::string>& directions,
                                   const ConflictTable& table = default_conflict_table()) {
    std::vector<int> chi(directions.size(), -1);
    for (std::size_t i = 0; i < directions.size(); ++i) {
        if (!table.has(directions[i])) throw SpecError("unknown direction " + directions[i]);
        for (std::size_t j = 0; j < i; ++j) {
            if (table.conflict(directions[i], directions[j])) chi[i] = static_cast<int>(j);
        }
    }
    return chi;
}

inline CrossroadSpec default_15_vehicle_spec() {
    CrossroadSpec s;
    s.directions = {"NS", "ES", "WE", "NW", "WN", "WN", "WS", "NE", "NE", "EW", "NS", "ES", "WS", "SW", "WE"};
    s.chi = derive_chi(s.directions);
    const std::size_t N = s.directions.size();
    const double speeds[] = {5, 8, 11, 13, 9};
    const double gaps[] = {7, 14, 8, 12};
    s.initial_speeds.resize(N);
    s.initial_gaps.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        s.initial_speeds[i] = speeds[i % 5];
        s.initial_gaps[i] = gaps[i % 4];
    }
    return s;
}

/// Position of each vehicle's states in x: leaders hold v_ref - v_i, followers
/// hold (p_chi - p_i - d, v_chi - v_i).
struct CrossroadLayout {
    std::vector<Index> offset;
    std::vector<int> chi;
    Index n = 0;

    explicit CrossroadLayout(const CrossroadSpec& s) : chi(s.chi) {
        for (int i = 0; i < s.vehicles(); ++i) {
            offset.push_back(n);
            n += s.is_leader(i) ? 1 : 2;
        }
    }

    [[nodiscard]] bool leader(int i) const { return chi[static_cast<std::size_t>(i)] < 0; }
    [[nodiscard]] Index size(int i) const { return leader(i) ? 1 : 2; }

    /// Row vector s_i with v_i = v_ref - s_i x: the leader's speed error plus
    /// the speed differences along the predecessor chain.
    [[nodiscard]] Vec speed_error_row(int i) const {
        Vec r = Vec::Zero(n);
        int k = i;
        while (!leader(k)) {
            r[offset[static_cast<std::size_t>(k)] + 1] += 1.0;
            k = chi[static_cast<std::size_t>(k)];
        }
        r[offset[static_cast<std::size_t>(k)]] += 1.0;
        return r;
    }
};

/// Double-integrator crossing game in error coordinates, pre-stabilized with
/// u_i = k_pre 1' x_i + v_i. Distance, speed and acceleration limits become
/// state and mixed constraints.
inline LqGame build_crossroad(const CrossroadSpec& s) {
    s.validate();
    const CrossroadLayout lay(s);
    const int N = s.vehicles();
    const Index n = lay.n;
    const double t = s.tau;
    LqGame g;
    g.T = s.horizon;
    g.A = Mat::Identity(n, n);
    for (int i = 0; i < N; ++i) {
        if (!lay.leader(i)) g.A(lay.offset[static_cast<std::size_t>(i)], lay.offset[static_cast<std::size_t>(i)] + 1) = t;
    }
    for (int i = 0; i < N; ++i) {
        Mat B = Mat::Zero(n, 1);
        for (int j = 0; j < N; ++j) {
            const Index o = lay.offset[static_cast<std::size_t>(j)];
            if (j == i) {
                if (lay.leader(i)) {
                    B(o, 0) = -t;
                } else {
                    B(o, 0) = -t * t / 2;
                    B(o + 1, 0) = -t;
                }
            } else if (lay.chi[static_cast<std::size_t>(j)] == i) {
                B(o, 0) = t * t / 2;
                B(o + 1, 0) = t;
            }
        }
        g.B.push_back(B);
        g.Q.push_back(Mat::Identity(n, n));
        g.R.push_back(Mat::Identity(1, 1));
    }
    // Acceleration box on the total input.
    g.du = Vec(2 * N);
    for (int i = 0; i < N; ++i) {
        Mat Du = Mat::Zero(2 * N, 1);
        Du(2 * i, 0) = 1.0;
        Du(2 * i + 1, 0) = -1.0;
        g.Du.push_back(Du);
        g.du[2 * i] = -s.u_max;
        g.du[2 * i + 1] = s.u_min;
    }
    // Distance for followers, then speed limits for everyone.
    std::vector<Vec> rows;
    std::vector<double> offs;
    for (int i = 0; i < N; ++i) {
        if (lay.leader(i)) continue;
        Vec r = Vec::Zero(n);
        r[lay.offset[static_cast<std::size_t>(i)]] = -1.0;
        rows.push_back(r);
        offs.push_back(s.d_min - s.d_des);
    }
    for (int i = 0; i < N; ++i) {
        const Vec si = lay.speed_error_row(i);
        rows.push_back(-si);  // v_i <= v_max
        offs.push_back(s.v_ref - s.v_max);
        rows.push_back(si);   // v_i >= v_min
        offs.push_back(s.v_min - s.v_ref);
    }
    g.Dx = Mat(static_cast<Index>(rows.size()), n);
    g.dx = Vec(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        g.Dx.row(static_cast<Index>(r)) = rows[r].transpose();
        g.dx[static_cast<Index>(r)] = offs[r];
    }
    std::vector<Mat> K;
    for (int i = 0; i < N; ++i) {
        Mat k = Mat::Zero(1, n);
        k.block(0, lay.offset[static_cast<std::size_t>(i)], 1, lay.size(i)).setConstant(s.k_pre);
        K.push_back(k);
    }
    return LqGame::prestabilized(std::move(g), K);
}

/// Error-coordinate state from speeds (m/s) and gaps to the predecessor (m).
inline Vec crossroad_state(const CrossroadSpec& s, const std::vector<double>& speeds, const std::vector<double>& gaps) {
    const CrossroadLayout lay(s);
    const auto N = static_cast<std::size_t>(s.vehicles());
    if (speeds.size() != N || gaps.size() != N) throw SpecError("crossroad: need one speed and gap per vehicle");
    Vec x(lay.n);
    for (std::size_t i = 0; i < N; ++i) {
        const Index o = lay.offset[i];
        if (s.chi[i] < 0) {
            x[o] = s.v_ref - speeds[i];
        } else {
            x[o] = gaps[i] - s.d_des;
            x[o + 1] = speeds[static_cast<std::size_t>(s.chi[i])] - speeds[i];
        }
    }
    return x;
}

inline Vec crossroad_initial_state(const CrossroadSpec& s) {
    if (s.initial_speeds.empty() || s.initial_gaps.empty()) return Vec::Zero(CrossroadLayout(s).n);
    return crossroad_state(s, s.initial_speeds, s.initial_gaps);
}

/// Speeds of all vehicles for an error-coordinate state.
inline Vec crossroad_speeds(const CrossroadSpec& s, const Vec& x) {
    const CrossroadLayout lay(s);
    Vec v(s.vehicles());
    for (int i = 0; i < s.vehicles(); ++i) v[i] = s.v_ref - lay.speed_error_row(i).dot(x);
    return v;
}

/// Distance to the predecessor; NaN for leaders.
inline Vec crossroad_distances(const CrossroadSpec& s, const Vec& x) {
    const CrossroadLayout lay(s);
    Vec d(s.vehicles());
    for (int i = 0; i < s.vehicles(); ++i) {
        d[i] = lay.leader(i) ? NAN : x[lay.offset[static_cast<std::size_t>(i)]] + s.d_des;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Random AVIs

/// M = 0.1 I + S S'/n + (W - W')/2 with standard normal S, W; q, D standard
/// normal; d = -D u0 - s with u0 standard normal and s uniform on [0.1, 1], so
/// u0 is strictly feasible. Deterministic in the seed.
inline AviProblem random_avi(Index n, Index m, std::uint64_t seed) {
    if (n < 1 || m < 1) throw ConfigError("random_avi: n and m must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    auto gauss = [&](Index r, Index c) {
        Mat out(r, c);
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < c; ++j) out(i, j) = g(rng);
        return out;
    };
    const Mat S = gauss(n, n);
    const Mat W = gauss(n, n);
    Mat M = 0.1 * Mat::Identity(n, n) + S * S.transpose() / static_cast<double>(n) + 0.5 * (W - W.transpose());
    const Vec q = gauss(n, 1);
    const Mat D = gauss(m, n);
    const Vec u0 = gauss(n, 1);
    std::uniform_real_distribution<double> slack(0.1, 1.0);
    Vec d(m);
    for (Index r = 0; r < m; ++r) d[r] = -D.row(r).dot(u0) - slack(rng);
    return AviProblem(std::move(M), q, Polyhedron(D, d));
}

// ---------------------------------------------------------------------------
// Spec JSON. chi is 1-based with null for leaders.

namespace io {

inline json crossroad_spec_to_json(const CrossroadSpec& s) {
    json j;
    j["directions"] = s.directions;
    json chi = json::array();
    for (int c : s.chi) chi.push_back(c < 0 ? json(nullptr) : json(c + 1));
    j["chi"] = chi;
    j["tau"] = s.tau;
    j["v_ref"] = s.v_ref;
    j["d_des"] = s.d_des;
    j["d_min"] = s.d_min;
    j["v_min"] = s.v_min;
    j["v_max"] = s.v_max;
    j["u_min"] = s.u_min;
    j["u_max"] = s.u_max;
    j["k_pre"] = s.k_pre;
    j["horizon"] = s.horizon;
    j["initial_speeds"] = s.initial_speeds;
    j["initial_gaps"] = s.initial_gaps;
    return j;
}

/// Missing numeric fields take the defaults; a missing chi is derived from
/// the default conflict table.
inline CrossroadSpec crossroad_spec_from_json(const json& j) {
    CrossroadSpec s;
    s.directions = j.at("directions").get<std::vector<std::string>>();
    if (j.contains("chi")) {
        for (const auto& c : j.at("chi")) s.chi.push_back(c.is_null() ? -1 : c.get<int>() - 1);
    } else {
        s.chi = derive_chi(s.directions);
    }
    s.tau = j.value("tau", s.tau);
    s.v_ref = j.value("v_ref", s.v_ref);
    s.d_des = j.value("d_des", s.d_des);
    s.d_min = j.value("d_min", s.d_min);
    s.v_min = j.value("v_min", s.v_min);
    s.v_max = j.value("v_max", s.v_max);
    s.u_min = j.value("u_min", s.u_min);
    s.u_max = j.value("u_max", s.u_max);
    s.k_pre = j.value("k_pre", s.k_pre);
    s.horizon = j.value("horizon", s.horizon);
    if (j.contains("initial_speeds")) s.initial_speeds = j.at("initial_speeds").get<std::vector<double>>();
    if (j.contains("initial_gaps")) s.initial_gaps = j.at("initial_gaps").get<std::vector<double>>();
    s.validate();
    return s;
}

}  // namespace io

}  // namespace dgvi
