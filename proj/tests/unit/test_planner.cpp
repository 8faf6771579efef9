#include <doctest.h>

#include "cape/planner.hpp"
#include "cape/rng.hpp"
#include "support/grid_homotopy.hpp"

#include <algorithm>
#include <map>
#include <set>

using namespace cape::geometry;
using namespace cape::planner;
using cape::testing::Cell;
using cape::testing::GridBlock;
using cape::testing::GridMap;

namespace {

PlanQuery query(Point start, Point goal, double radius = 2.0, double margin = 0.0)
{
    PlanQuery q;
    q.start = Pose::at(start, 0);
    q.goal = goal;
    q.body = AgentBody{radius, 1.0};
    q.margin = margin;
    return q;
}

void check_candidate_set(const ObstacleMap& map, const PlanQuery& q, const CandidateSet& set)
{
    REQUIRE_FALSE(set.candidates.empty());
    std::set<HomotopySignature> seen;
    for (const auto& c : set.candidates) {
        CHECK(path_feasible(map, c.path, q.body.radius, q.margin));
        CHECK(c.path.front().pose.position() == q.start.position());
        CHECK(c.path.back().pose.position() == q.goal);
        CHECK(c.signature == h_signature(map, c.path));
        CHECK(seen.insert(c.signature).second);
    }
}

std::vector<Point> reversed(std::vector<Point> pts)
{
    std::reverse(pts.begin(), pts.end());
    return pts;
}

} // namespace

TEST_CASE("signature on an empty map is empty")
{
    const ObstacleMap m{100, 100, {}, {}};
    const std::vector<Point> path{{5, 5}, {90, 20}, {10, 80}, {95, 95}};
    CHECK(h_signature(m, path).word.empty());
}

TEST_CASE("one obstacle separates left and right passes")
{
    const ObstacleMap m{100, 100, {{"box", {40, 40, 20, 20}}}, {}};
    const std::vector<Point> above{{10, 50}, {50, 20}, {90, 50}};
    const std::vector<Point> below{{10, 50}, {50, 80}, {90, 50}};
    const auto a = h_signature(m, above);
    const auto b = h_signature(m, below);
    CHECK(a != b);
    // The pass above crosses the upward ray left to right.
    CHECK(a.word == std::vector<Crossing>{{0, 1}});
    CHECK(b.word.empty());
    // Travelling east, the pass above keeps the box on its right.
    CHECK(a.net_crossings(0) > b.net_crossings(0));
}

TEST_CASE("signature reduction and path operations")
{
    const ObstacleMap m{100, 100, {{"a", {20, 40, 10, 10}}, {"b", {60, 40, 10, 10}}}, {}};
    const std::vector<Point> wiggle{{5, 30}, {50, 30}, {5, 30}, {95, 30}};
    CHECK(h_signature(m, wiggle).word == std::vector<Crossing>{{0, 1}, {1, 1}});

    cape::Rng rng(9);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Point> pts;
        const int n = int(rng.integer(2, 7));
        for (int i = 0; i < n; ++i)
            pts.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
        const auto sig = h_signature(m, pts);
        // Reversal inverts and reverses the word.
        auto inv = sig.word;
        std::reverse(inv.begin(), inv.end());
        for (auto& c : inv)
            c.sign = -c.sign;
        CHECK(h_signature(m, reversed(pts)).word == inv);
        // Midpoint insertion changes nothing.
        auto with_mid = pts;
        const std::size_t k = std::size_t(rng.integer(0, n - 2));
        with_mid.insert(with_mid.begin() + std::ptrdiff_t(k) + 1, lerp(pts[k], pts[k + 1], 0.5));
        CHECK(h_signature(m, with_mid) == sig);
        // Word is reduced.
        for (std::size_t i = 1; i < sig.word.size(); ++i)
            CHECK_FALSE((sig.word[i].region == sig.word[i - 1].region && sig.word[i].sign == -sig.word[i - 1].sign));
    }
}

TEST_CASE("coincident rays are separated")
{
    const ObstacleMap m{100, 100, {{"top", {40, 10, 20, 10}}, {"bottom", {40, 70, 20, 10}}}, {}};
    const auto xs = ray_abscissae(m);
    CHECK(xs[0] == 50);
    CHECK(xs[1] != xs[0]);
    CHECK(xs[1] > 40);
    CHECK(xs[1] < 60);
    // Between the boxes vs above both: different classes.
    const std::vector<Point> mid{{10, 45}, {90, 45}};
    const std::vector<Point> high{{10, 45}, {10, 5}, {90, 5}, {90, 45}};
    CHECK(h_signature(m, mid) != h_signature(m, high));
}

TEST_CASE("signature equality matches the grid oracle on random grid paths")
{
    cape::Rng rng(2024);
    std::size_t pairs = 0, equal_pairs = 0;
    for (int mi = 0; mi < 5; ++mi) {
        const GridMap g = cape::testing::random_grid_map(20, 16, 3, rng);
        const ObstacleMap m = g.to_obstacle_map();
        const Cell from{0, 8};
        const Cell to{19, 8};
        std::vector<cape::testing::GridPath> paths;
        for (int i = 0; i < 25; ++i) {
            std::vector<Cell> vias;
            const int nv = int(rng.integer(0, 3));
            for (int v = 0; v < nv; ++v) {
                Cell c{int(rng.integer(0, 19)), int(rng.integer(0, 15))};
                if (g.free(c))
                    vias.push_back(c);
            }
            if (auto p = cape::testing::path_through(g, from, vias, to, rng))
                paths.push_back(*p);
        }
        for (std::size_t i = 0; i < paths.size(); ++i) {
            for (std::size_t j = i + 1; j < paths.size(); ++j) {
                const bool oracle = cape::testing::grid_word(g, paths[i]) == cape::testing::grid_word(g, paths[j]);
                const bool ours = h_signature(m, cape::testing::centres(paths[i])) ==
                                  h_signature(m, cape::testing::centres(paths[j]));
                CHECK(oracle == ours);
                ++pairs;
                equal_pairs += oracle ? 1 : 0;
            }
        }
    }
    CHECK(pairs > 500);
    CHECK(equal_pairs > 0);
    CHECK(equal_pairs < pairs);
}

TEST_CASE("empty map plans a straight line")
{
    const ObstacleMap m{100, 100, {}, {}};
    const auto q = query({10, 10}, {90, 70});
    const TimedPath p = rrt_plan(m, q, 1);
    REQUIRE(p.size() == 2);
    CHECK(p.back().pose.position() == Point{90, 70});
    CHECK(p.back().pose.theta == doctest::Approx(heading_degrees({10, 10}, {90, 70})));
    const auto set = multi_candidate_plan(m, q, 3, 1);
    CHECK(set.candidates.size() == 1);
}

TEST_CASE("start equal to goal gives a single waypoint")
{
    const ObstacleMap m{100, 100, {}, {}};
    const TimedPath p = rrt_plan(m, query({30, 30}, {30, 30}), 4);
    CHECK(p.size() == 1);
}

TEST_CASE("infeasible endpoints are rejected and an enclosed goal exhausts the budget")
{
    const ObstacleMap m{100, 100,
                        {{"n", {60, 60, 30, 2}}, {"s", {60, 88, 30, 2}}, {"w", {60, 60, 2, 30}}, {"e", {88, 60, 2, 30}}},
                        {}};
    CHECK_THROWS_AS(rrt_plan(m, query({61, 61}, {10, 10}), 1), std::invalid_argument);
    RrtParams small;
    small.budget = 500;
    CHECK_THROWS_AS(rrt_plan(m, query({10, 10}, {75, 75}), 1, small), NoPathFound);
}

TEST_CASE("single obstacle yields exactly two classes")
{
    const ObstacleMap m{100, 100, {{"box", {40, 30, 20, 40}}}, {}};
    const auto q = query({10, 50}, {90, 50});
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto set = multi_candidate_plan(m, q, 3, seed);
        check_candidate_set(m, q, set);
        CHECK(set.candidates.size() == 2);
    }
}

TEST_CASE("corridor passage class matches the oracle")
{
    // Wall across the map with a single gap; two wall segments are the blocks.
    GridMap g{40, 20, {GridBlock{19, 0, 2, 8}, GridBlock{19, 12, 2, 8}}};
    const ObstacleMap m = g.to_obstacle_map();
    const auto q = query({5.5, 3.5}, {34.5, 16.5}, 0.8);
    const TimedPath p = rrt_plan(m, q, 11);
    CHECK(path_feasible(m, p, 0.8, 0));
    const auto cells = cape::testing::rasterize(p.polyline());
    REQUIRE(cape::testing::valid_path(g, cells));
    cape::Rng rng(1);
    const auto through = cape::testing::shortest_path(g, {5, 3}, {34, 16}, rng);
    REQUIRE(through);
    CHECK(cape::testing::grid_word(g, cells) == cape::testing::grid_word(g, *through));
    const auto set = multi_candidate_plan(m, q, 3, 11);
    check_candidate_set(m, q, set);
    CHECK(set.candidates.size() == 1);
}

TEST_CASE("two separated obstacles give three oracle-distinct classes")
{
    GridMap g{60, 40, {GridBlock{18, 14, 6, 12}, GridBlock{36, 14, 6, 12}}};
    const ObstacleMap m = g.to_obstacle_map();
    const auto q = query({4.5, 20.5}, {55.5, 20.5}, 1.0);
    const auto set = multi_candidate_plan(m, q, 3, 21);
    check_candidate_set(m, q, set);
    CHECK(set.candidates.size() == 3);
    std::set<cape::testing::GridWord> words;
    for (const auto& c : set.candidates) {
        const auto cells = cape::testing::rasterize(c.path.polyline());
        REQUIRE(cape::testing::valid_path(g, cells));
        words.insert(cape::testing::grid_word(g, cells));
    }
    CHECK(words.size() == set.candidates.size());
}

TEST_CASE("candidate sets on random maps keep their invariants")
{
    cape::Rng rng(77);
    for (int trial = 0; trial < 15; ++trial) {
        ObstacleMap m{200, 200, {}, {}};
        const int n = int(rng.integer(1, 8));
        for (int i = 0; i < n; ++i) {
            const double w = rng.uniform(10, 30), h = rng.uniform(10, 30);
            m.obstacles.push_back(
                {"o" + std::to_string(i), {rng.uniform(30, 170 - w), rng.uniform(10, 190 - h), w, h}});
        }
        const auto q = query({10, rng.uniform(10, 190)}, {190, rng.uniform(10, 190)}, 3, 1);
        if (clearance(m, q.start.position()) < 4 || clearance(m, q.goal) < 4)
            continue;
        const auto set = multi_candidate_plan(m, q, 3, std::uint64_t(trial));
        check_candidate_set(m, q, set);
        CHECK(set.candidates.size() <= 3);
        CHECK(multi_candidate_plan(m, q, 3, std::uint64_t(trial)) == set);
    }
}

TEST_CASE("incumbent stays first and its class is not repeated")
{
    const ObstacleMap m{100, 100, {{"box", {40, 30, 20, 40}}}, {}};
    const auto q = query({10, 50}, {90, 50});
    const std::vector<Point> below{{10, 50}, {30, 85}, {70, 85}, {90, 50}};
    const TimedPath incumbent = make_path(below, 0, std::nullopt);
    const auto set = multi_candidate_plan(m, q, 3, 3, {}, incumbent);
    REQUIRE(set.candidates.size() == 2);
    CHECK(set.candidates[0].path == incumbent);
    CHECK(set.candidates[1].signature != set.candidates[0].signature);
}

TEST_CASE("joint plan")
{
    const ObstacleMap empty{100, 100, {}, {}};
    AgentTask self{"robot", query({10, 10}, {90, 90}), std::nullopt};
    PlannerConfig cfg;
    cfg.seed = 5;

    SUBCASE("no other agents")
    {
        const JointPlan plan = joint_plan(empty, self, {}, cfg);
        CHECK(plan.predicted_others.empty());
        CHECK(plan.self_candidates.for_agent == "robot");
    }
    SUBCASE("one other agent on an empty map goes straight")
    {
        const std::vector<AgentTask> others{{"human", query({90, 10}, {10, 90}), std::nullopt}};
        const JointPlan plan = joint_plan(empty, self, others, cfg);
        REQUIRE(plan.predicted_others.count("human") == 1);
        CHECK(plan.predicted_others.at("human").path.size() == 2);
    }
    SUBCASE("parking-style layout with two others")
    {
        ObstacleMap lot{400, 300, {}, {}};
        for (int i = 0; i < 4; ++i)
            lot.obstacles.push_back({"car" + std::to_string(i), {60.0 + 80 * i, 120, 40, 60}});
        AgentTask ego{"car_a", query({20, 150}, {380, 150}, 10), std::nullopt};
        const std::vector<AgentTask> others{{"car_b", query({380, 40}, {20, 260}, 10), std::nullopt},
                                            {"car_c", query({200, 20}, {200, 280}, 10), std::nullopt}};
        const JointPlan plan = joint_plan(lot, ego, others, cfg);
        check_candidate_set(lot, ego.query, plan.self_candidates);
        CHECK(plan.self_candidates.candidates.size() >= 2);
        for (const auto& other : others)
            CHECK(path_feasible(lot, plan.predicted_others.at(other.id).path, 10, 0));
    }
    SUBCASE("single path ablation")
    {
        const ObstacleMap m{100, 100, {{"box", {40, 30, 20, 40}}}, {}};
        AgentTask s{"robot", query({10, 50}, {90, 50}), std::nullopt};
        cfg.single_path = true;
        CHECK(joint_plan(m, s, {}, cfg).self_candidates.candidates.size() == 1);
        cfg.single_path = false;
        CHECK(joint_plan(m, s, {}, cfg).self_candidates.candidates.size() == 2);
    }
    SUBCASE("known paths are used as predictions")
    {
        const Track known{make_path(std::vector<Point>{{90, 10}, {50, 50}, {10, 90}}, 0, std::nullopt), 4};
        const std::vector<AgentTask> others{{"human", query({90, 10}, {10, 90}), known}};
        CHECK(joint_plan(empty, self, others, cfg).predicted_others.at("human") == known);
    }
    SUBCASE("failing agent is named")
    {
        const ObstacleMap boxed{100, 100,
                                {{"n", {60, 60, 30, 2}}, {"s", {60, 88, 30, 2}}, {"w", {60, 60, 2, 30}},
                                 {"e", {88, 60, 2, 30}}},
                                {}};
        cfg.rrt.budget = 300;
        const std::vector<AgentTask> others{{"stuck", query({10, 80}, {75, 75}), std::nullopt}};
        try {
            joint_plan(boxed, AgentTask{"robot", query({10, 10}, {40, 10}), std::nullopt}, others, cfg);
            FAIL("expected NoPathFound");
        } catch (const NoPathFound& e) {
            CHECK(e.agent() == "stuck");
        }
    }
}
