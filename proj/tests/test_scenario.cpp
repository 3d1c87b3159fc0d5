#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dgvi/game.hpp"
#include "dgvi/scenario.hpp"

using namespace dgvi;

namespace {

CrossroadSpec chain_spec(int vehicles) {
    CrossroadSpec s;
    for (int i = 0; i < vehicles; ++i) {
        s.directions.push_back("NS");
        s.chi.push_back(i - 1);
    }
    return s;
}

// Dynamics before the local feedback was folded in.
Mat raw_A(const LqGame& g) {
    Mat A = g.A;
    for (int i = 0; i < g.agents(); ++i) A -= g.B[static_cast<std::size_t>(i)] * g.K_pre[static_cast<std::size_t>(i)];
    return A;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Crossroad, SingleLeader) {
    const LqGame g = build_crossroad(chain_spec(1));
    ASSERT_EQ(g.states(), 1);
    EXPECT_DOUBLE_EQ(raw_A(g)(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(g.B[0](0, 0), -0.1);
    EXPECT_DOUBLE_EQ(g.K_pre[0](0, 0), 0.1);
    EXPECT_NEAR(g.A(0, 0), 0.99, 1e-15);
}

TEST(Crossroad, FollowerBlock) {
    const LqGame g = build_crossroad(chain_spec(2));
    ASSERT_EQ(g.states(), 3);
    const Mat A = raw_A(g);
    EXPECT_NEAR(A(1, 2), 0.1, 1e-15);
    EXPECT_NEAR(A(1, 1), 1.0, 1e-15);
    EXPECT_NEAR(g.B[1](1, 0), -0.005, 1e-15);
    EXPECT_NEAR(g.B[1](2, 0), -0.1, 1e-15);
    // The leader's input moves the follower's relative state the other way.
    EXPECT_NEAR(g.B[0](1, 0), 0.005, 1e-15);
    EXPECT_NEAR(g.B[0](2, 0), 0.1, 1e-15);
}

TEST(Crossroad, ChainMatchesKinematics) {
    CrossroadSpec s = chain_spec(3);
    const LqGame g = build_crossroad(s);
    const Mat A = raw_A(g);
    std::vector<double> p = {30.0, 18.0, 5.0};
    std::vector<double> v = {9.0, 11.0, 7.5};
    const std::vector<double> a = {0.4, -1.0, 2.0};
    auto gaps = [&] { return std::vector<double>{0.0, p[0] - p[1], p[1] - p[2]}; };
    Vec x = crossroad_state(s, v, gaps());
    for (int step = 0; step < 20; ++step) {
        Vec next = A * x;
        for (int i = 0; i < 3; ++i) next += g.B[static_cast<std::size_t>(i)] * a[static_cast<std::size_t>(i)];
        for (std::size_t i = 0; i < 3; ++i) {
            p[i] += s.tau * v[i] + s.tau * s.tau / 2 * a[i];
            v[i] += s.tau * a[i];
        }
        x = next;
        const Vec expect = crossroad_state(s, v, gaps());
        ASSERT_LE((x - expect).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Crossroad, StateConversionsInvert) {
    const CrossroadSpec s = default_15_vehicle_spec();
    const Vec x = crossroad_initial_state(s);
    const Vec v = crossroad_speeds(s, x);
    const Vec d = crossroad_distances(s, x);
    for (int i = 0; i < s.vehicles(); ++i) {
        EXPECT_NEAR(v[i], s.initial_speeds[static_cast<std::size_t>(i)], 1e-12);
        if (s.is_leader(i)) {
            EXPECT_TRUE(std::isnan(d[i]));
        } else {
            EXPECT_NEAR(d[i], s.initial_gaps[static_cast<std::size_t>(i)], 1e-12);
        }
    }
}

TEST(Crossroad, SpeedRowsFollowTheChain) {
    const CrossroadLayout lay(chain_spec(3));
    const Vec r = lay.speed_error_row(2);
    Vec expect(5);
    expect << 1, 0, 1, 0, 1;
    EXPECT_EQ(r, expect);
}

TEST(Crossroad, ConstraintsEncodeTheLimits) {
    CrossroadSpec s = chain_spec(2);
    const LqGame g = build_crossroad(s);
    // Speeds (9, 12), gap 6: admissible; the follower's speed limit is 15.
    const Vec x = crossroad_state(s, {9, 12}, {0, 6});
    EXPECT_LE((g.Dx * x + g.dx).maxCoeff(), 0.0);
    const Vec bad_gap = crossroad_state(s, {9, 12}, {0, 4});
    EXPECT_GT((g.Dx * bad_gap + g.dx).maxCoeff(), 0.0);
    const Vec too_fast = crossroad_state(s, {9, 16}, {0, 6});
    EXPECT_GT((g.Dx * too_fast + g.dx).maxCoeff(), 0.0);
    // Total acceleration of the leader at x with residual input v.
    const Vec z = Vec::Zero(g.states());
    Vec rows = g.Ex * z + g.e + g.Eu[0] * Vec::Constant(1, 3.5);
    EXPECT_GT(rows.maxCoeff(), 0.0);
    rows = g.Ex * z + g.e + g.Eu[0] * Vec::Constant(1, 2.5);
    EXPECT_LE(rows.maxCoeff(), 0.0);
}

TEST(Crossroad, SpecValidation) {
    CrossroadSpec s = chain_spec(2);
    s.chi[1] = 1;
    EXPECT_THROW(build_crossroad(s), SpecError);
    s = chain_spec(2);
    s.tau = 0;
    EXPECT_THROW(s.validate(), SpecError);
    s = chain_spec(2);
    s.initial_speeds = {1.0};
    EXPECT_THROW(s.validate(), SpecError);
}

TEST(Precedence, WorkedExamples) {
    const CrossroadSpec s = default_15_vehicle_spec();
    EXPECT_TRUE(s.is_leader(0));
    EXPECT_EQ(s.chi[1], 0);
    EXPECT_EQ(s.chi[3], 0);
    for (int i = 0; i < s.vehicles(); ++i) EXPECT_LT(s.chi[static_cast<std::size_t>(i)], i);
}

TEST(Precedence, DefaultListDerivation) {
    const std::vector<int> expect = {-1, 0, 1, 0, 2, 4, 5, 3, 7, 8, 9, 10, 11, 10, 13};
    EXPECT_EQ(default_15_vehicle_spec().chi, expect);
}

TEST(Precedence, UnknownDirection) {
    EXPECT_THROW(derive_chi({"NS", "XX"}), SpecError);
}

TEST(ConflictTable, ShippedFileMatchesEmbeddedTable) {
    const auto file = ConflictTable::parse(read_file(DGVI_DATA_DIR "/conflict_table.txt"));
    const auto& def = default_conflict_table();
    ASSERT_EQ(file.labels(), def.labels());
    for (const auto& a : def.labels())
        for (const auto& b : def.labels()) EXPECT_EQ(file.conflict(a, b), def.conflict(a, b)) << a << "/" << b;
}

TEST(ConflictTable, Symmetric) {
    const auto& t = default_conflict_table();
    for (const auto& a : t.labels()) {
        EXPECT_TRUE(t.conflict(a, a));
        for (const auto& b : t.labels()) EXPECT_EQ(t.conflict(a, b), t.conflict(b, a));
    }
}

TEST(ConflictTable, RejectsAsymmetricInput) {
    EXPECT_THROW(ConflictTable::parse("A B\nA 1 1\nB 0 1\n"), SpecError);
    EXPECT_THROW(ConflictTable::parse("A B\nA 1 2\nB 0 1\n"), SpecError);
    EXPECT_NO_THROW(ConflictTable::parse("# c\nA B\nA 1 0\nB 0 1\n"));
}

TEST(Crossroad, DefaultGameCompiles) {
    const auto c = compile_vi(build_crossroad(default_15_vehicle_spec()));
    EXPECT_EQ(c.game.agents(), 15);
    EXPECT_GT(monotonicity_constants(c.M).mu, 0);
    EXPECT_LT(spectral_radius(c.riccati.Acl), 1.0);
}

TEST(Crossroad, FourVehicleGameSatisfiesStandingAssumptions) {
    const LqGame g = build_crossroad(default_15_vehicle_spec().prefix(4));
    EXPECT_TRUE(check_assumption3(g).holds());
    const auto c = compile_vi(g);
    EXPECT_GT(monotonicity_constants(c.M).mu, 0);
    EXPECT_TRUE(validate(c.problem(Vec::Zero(g.states()))).strictly_feasible);
}

TEST(SpecFile, RoundTrip) {
    const CrossroadSpec s = default_15_vehicle_spec();
    const auto back = io::crossroad_spec_from_json(io::json::parse(io::crossroad_spec_to_json(s).dump()));
    EXPECT_EQ(back.directions, s.directions);
    EXPECT_EQ(back.chi, s.chi);
    EXPECT_EQ(back.initial_speeds, s.initial_speeds);
    EXPECT_EQ(back.initial_gaps, s.initial_gaps);
    EXPECT_EQ(back.v_max, s.v_max);
}

TEST(SpecFile, ChiDerivedWhenAbsent) {
    const auto s = io::crossroad_spec_from_json(io::json::parse(R"({"directions":["NS","ES","SN"]})"));
    EXPECT_EQ(s.chi, (std::vector<int>{-1, 0, 1}));
}

TEST(RandomAvi, StronglyMonotoneWithInteriorPoint) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const AviProblem p = random_avi(30, 8, seed);
        EXPECT_GE(monotonicity_constants(p.M).mu, 0.1 - 1e-12);
        const auto diag = validate(p);
        EXPECT_TRUE(diag.ok());
        EXPECT_GT(diag.max_slack, 0.0);
    }
}

TEST(RandomAvi, DeterministicInSeed) {
    const AviProblem a = random_avi(12, 3, 42);
    const AviProblem b = random_avi(12, 3, 42);
    const AviProblem c = random_avi(12, 3, 43);
    EXPECT_EQ(a.M, b.M);
    EXPECT_EQ(a.q, b.q);
    EXPECT_EQ(a.C.D, b.C.D);
    EXPECT_EQ(a.C.d, b.C.d);
    EXPECT_NE(a.M, c.M);
}

TEST(RandomAvi, RejectsEmptySizes) {
    EXPECT_THROW(random_avi(0, 1, 1), ConfigError);
}
