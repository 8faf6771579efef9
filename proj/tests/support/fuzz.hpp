#pragma once
//
// Random sessions and random (often nonsensical) edit programs.
//

#include "cape/dsl.hpp"
#include "cape/editverify.hpp"
#include "cape/planner.hpp"
#include "cape/rng.hpp"

#include <optional>
#include <string>

namespace cape::testing {

/// A session whose candidates are all conflict-free against the others;
/// nullopt when the drawn layout does not satisfy that.
inline std::optional<editverify::EditSession> random_session(Rng& rng)
{
    using namespace geometry;
    editverify::EditSession s;
    s.map = ObstacleMap{300, 300, {}, {}};
    const int n = int(rng.integer(2, 7));
    for (int i = 0; i < n; ++i) {
        const double w = rng.uniform(15, 50), h = rng.uniform(15, 50);
        s.map.obstacles.push_back({"obstacle_" + std::to_string(i), {rng.uniform(40, 260 - w), rng.uniform(10, 290 - h), w, h}});
    }
    if (rng.chance(0.3))
        s.map.unreachable.push_back({rng.uniform(40, 200), rng.uniform(0, 250), 30, 40});
    s.target = "robot";
    s.margin = rng.chance(0.5) ? 0.0 : 2.0;
    s.inter_agent_margin = rng.chance(0.5) ? 0.0 : 3.0;
    s.bodies["robot"] = AgentBody{6, 2};

    auto free_point = [&](double x0, double x1) -> std::optional<Point> {
        for (int k = 0; k < 50; ++k) {
            const Point p{rng.uniform(x0, x1), rng.uniform(15, 285)};
            if (clearance(s.map, p) >= 20)
                return p;
        }
        return std::nullopt;
    };
    const auto start = free_point(10, 40);
    const auto goal = free_point(260, 290);
    if (!start || !goal)
        return std::nullopt;
    planner::PlanQuery q{Pose::at(*start, 0), *goal, std::nullopt, s.bodies["robot"], s.margin};
    try {
        s.candidates = planner::multi_candidate_plan(s.map, q, 3, rng.next());
        s.candidates.for_agent = "robot";
        const int others = int(rng.integer(1, 2));
        for (int i = 0; i < others; ++i) {
            const std::string id = "agent_" + std::to_string(i);
            s.bodies[id] = AgentBody{rng.uniform(4, 8), rng.uniform(1, 3)};
            const auto a = free_point(10, 290);
            const auto b = free_point(10, 290);
            if (!a || !b)
                return std::nullopt;
            planner::PlanQuery oq{Pose::at(*a, 0), *b, std::nullopt, s.bodies[id], 0.0};
            s.others[id] = Track{planner::rrt_plan(s.map, oq, rng.next()), Tick(rng.integer(0, 20))};
        }
    } catch (const std::exception&) {
        return std::nullopt;
    }
    for (const auto& c : s.candidates.candidates)
        if (editverify::first_conflict(s, c.path))
            return std::nullopt;
    return s;
}

inline std::string random_program_text(Rng& rng, const editverify::EditSession& s)
{
    const std::size_t len = s.candidates.candidates.front().path.size();
    auto step = [&] { return std::to_string(rng.integer(0, std::int64_t(len) + 1)); };
    auto num = [&](double scale) { return dsl::format_number(std::round(rng.uniform(-scale, scale) * 100) / 100); };
    std::string text;
    if (rng.chance(0.2))
        text += "```python\n";
    const int lines = int(rng.integer(0, 8));
    for (int i = 0; i < lines; ++i) {
        std::string agent = "\"robot\"";
        if (rng.chance(0.08))
            agent = "\"agent_0\"";
        const double u = rng.uniform();
        if (u < 0.12) {
            text += "select_path(" + std::to_string(rng.integer(0, 4)) + ", " + agent + ")";
        } else if (u < 0.40) {
            const double scale = rng.chance(0.5) ? 15 : 120;
            text += "modify_translation(" + step() + ", " + num(scale) + ", " + num(scale) + ", " + agent + ")";
        } else if (u < 0.52) {
            text += "modify_rotation(" + step() + ", " + num(400) + ", " + agent + ")";
        } else if (u < 0.72) {
            text += "wait(" + step() + ", " + std::to_string(rng.integer(0, 80)) + ", " + agent + ")";
        } else if (u < 0.92) {
            text += "insert_waypoint(" + step() + ", " + num(320) + ", " + num(320) + ", ";
            if (rng.chance(0.5))
                text += num(180) + ", ";
            text += agent + ")";
        } else {
            static const char* junk[] = {"move left please", "wait(1, robot", "select_path(-1, \"robot\")",
                                         "fly(2, \"robot\")", "wait(1, 2.5, \"robot\")", "# comment only"};
            text += junk[rng.integer(0, 5)];
        }
        text += "\n";
    }
    if (rng.chance(0.2))
        text += "```\n";
    return text;
}

} // namespace cape::testing
