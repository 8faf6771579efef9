#include "cape/sim.hpp"

#include "cape/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace cape::sim {

using geometry::Obstacle;
using geometry::ObstacleMap;
using geometry::Rect;

namespace {

std::string numbered(const std::string& prefix, std::size_t i) { return prefix + "_" + std::to_string(i); }

// Four square blocks around the centre leave a single-lane crossroad.
// Agents enter from the open ground around the blocks.
Scenario crossroad(std::size_t agents, bool head_on, Rng& rng, std::uint64_t seed, const std::string& name)
{
    constexpr double size = 1000, c = size / 2, radius = 12, speed = 6;
    const double block = rng.uniform(100, 150);
    const double half = rng.uniform(1.5, 1.8) * radius;
    const double reach = half + block;

    Scenario s;
    s.name = name;
    s.archetype = "crossing";
    s.seed = seed;
    s.map.width = size;
    s.map.height = size;
    s.map.obstacles = {
        Obstacle{"block_1", Rect{c - reach, c - reach, block, block}},
        Obstacle{"block_2", Rect{c + half, c - reach, block, block}},
        Obstacle{"block_3", Rect{c - reach, c + half, block, block}},
        Obstacle{"block_4", Rect{c + half, c + half, block, block}},
    };
    s.trigger_distance = 2 * reach + 80;
    s.cooldown = 3;
    s.inter_agent_margin = 2;

    // Entry arms as headings: 0 from the west, 90 from the north, 180 from the east, -90 from the south.
    std::vector<double> arms{0, 90, 180, -90};
    std::vector<double> chosen;
    if (agents == 2) {
        const double first = arms[static_cast<std::size_t>(rng.integer(0, 3))];
        chosen = {first, head_on ? first + 180 : first + 90};
    } else {
        for (std::size_t i = 0; i < 4; ++i)
            std::swap(arms[i], arms[static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i), 3))]);
        chosen.assign(arms.begin(), arms.begin() + static_cast<std::ptrdiff_t>(agents));
    }

    const double base = rng.uniform(reach + 130, reach + 160);
    double longest = 0;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const double heading = geometry::normalize_degrees(chosen[i]);
        const Point dir = geometry::unit_vector(heading);
        const double d = base + rng.uniform(0, 4 * radius);
        const double g = 380;
        AgentSpec a;
        a.id = numbered("robot", i + 1);
        a.start = Pose{c - d * dir.x, c - d * dir.y, heading};
        a.goal = Point{c + g * dir.x, c + g * dir.y};
        a.goal_theta = heading;
        a.body = geometry::AgentBody{radius, speed};
        a.policy = Policy::Cape;
        a.role = Role::Robot;
        longest = std::max(longest, d + g);
        s.agents.push_back(std::move(a));
    }
    s.max_ticks = static_cast<Tick>(std::ceil(4 * longest / speed)) + 100;
    return s;
}

// Length from `from` to `to` that never overshoots `to` after rounding.
double span_to(double from, double to)
{
    double h = to - from;
    while (from + h > to)
        h = std::nextafter(h, 0.0);
    return h;
}

bool overlaps(const Rect& a, const Rect& b, double gap)
{
    return a.x < b.right() + gap && b.x < a.right() + gap && a.y < b.bottom() + gap && b.y < a.bottom() + gap;
}

// Rooms separated by thin walls; every wall carries one door.
Scenario household(Rng& rng, std::uint64_t seed, const std::string& name)
{
    constexpr double width = 16, height = 12, wall = 0.2;
    Scenario s;
    s.name = name;
    s.archetype = "household";
    s.seed = seed;
    s.map.width = width;
    s.map.height = height;
    s.trigger_distance = 5.0;
    s.cooldown = 3;
    s.margin = 0.05;
    s.inter_agent_margin = 0.05;

    const double wx = rng.uniform(7, 9);
    const double door = rng.uniform(1.0, 1.6);
    const double hy = rng.uniform(5, 7);
    // The main door opens fully into one of the two left rooms.
    const bool door_top = rng.chance(0.5);
    const double dy = door_top ? rng.uniform(1.5, hy - 1 - door) : rng.uniform(hy + 1.2, height - 1.5 - door);
    const double hdoor = rng.uniform(1.0, 1.6);
    const double hdx = rng.uniform(1.5, wx - 1.5 - hdoor);
    s.map.obstacles = {
        Obstacle{"wall_1", Rect{wx, 0, wall, dy}},
        Obstacle{"wall_2", Rect{wx, dy + door, wall, span_to(dy + door, height)}},
        Obstacle{"wall_3", Rect{0, hy, hdx, wall}},
        Obstacle{"wall_4", Rect{hdx + hdoor, hy, span_to(hdx + hdoor, wx), wall}},
    };
    const Point main_door{wx + wall / 2, dy + door / 2};
    const Point side_door{hdx + hdoor / 2, hy + wall / 2};

    static const std::array<const char*, 8> furniture{"sofa",  "table", "bed",     "fridge",
                                                      "shelf", "desk",  "counter", "armchair"};
    std::vector<std::size_t> order(furniture.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    for (std::size_t i = 0; i < order.size(); ++i)
        std::swap(order[i], order[static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i),
                                                                       static_cast<std::int64_t>(order.size()) - 1))]);
    const auto want = static_cast<std::size_t>(rng.integer(4, 6));
    std::vector<Rect> walls;
    for (const auto& o : s.map.obstacles)
        walls.push_back(o.rect);
    for (std::size_t k = 0, tries = 0; k < want && tries < 400; ++tries) {
        const Rect r{rng.uniform(0.3, width - 2.1), rng.uniform(0.3, height - 1.5), rng.uniform(0.6, 1.8),
                     rng.uniform(0.5, 1.2)};
        bool ok = r.right() < width - 0.3 && r.bottom() < height - 0.3;
        for (const auto& w : walls)
            ok = ok && !overlaps(r, w, 1.0);
        for (const auto& o : s.map.obstacles)
            ok = ok && !overlaps(r, o.rect, 1.0);
        const Point centre{r.x + r.w / 2, r.y + r.h / 2};
        ok = ok && geometry::distance(centre, main_door) > 2.0 && geometry::distance(centre, side_door) > 2.0;
        if (!ok)
            continue;
        s.map.obstacles.push_back(Obstacle{furniture[order[k]], r});
        ++k;
    }

    const geometry::AgentBody robot_body{0.3, 0.1}, human_body{0.25, 0.1};
    auto free_point = [&](double x0, double x1, double y0, double y1, double radius) {
        for (int i = 0; i < 500; ++i) {
            const Point p{rng.uniform(x0, x1), rng.uniform(y0, y1)};
            if (geometry::clearance(s.map, p) >= radius + s.margin + 0.3)
                return p;
        }
        throw ScenarioInfeasible(name + ": no free point in room");
    };
    // Robot on the right, human on the left, each heading through the main door.
    const double along = rng.uniform(2.5, 4.5);
    const bool human_top = door_top;
    const Point human_start = free_point(std::max(0.5, wx - along - 1), wx - 1, human_top ? 0.5 : hy + 0.8,
                                         human_top ? hy - 0.6 : height - 0.5, human_body.radius);
    const Point robot_start = free_point(wx + 1.2, std::min(width - 0.5, wx + along + 1.2), 0.5, height - 0.5,
                                         robot_body.radius);
    const Point human_goal = free_point(wx + 2, width - 0.5, 0.5, height - 0.5, human_body.radius);
    Point robot_goal = free_point(0.5, wx - 1, human_top ? hy + 0.8 : 0.5, human_top ? height - 0.5 : hy - 0.6,
                                  robot_body.radius);
    for (int i = 0; i < 50 && geometry::distance(robot_goal, human_goal) < 1.5; ++i)
        robot_goal = free_point(0.5, wx - 1, 0.5, height - 0.5, robot_body.radius);

    AgentSpec human;
    human.id = "human";
    human.start = Pose{human_start.x, human_start.y, geometry::heading_degrees(human_start, main_door)};
    human.goal = human_goal;
    human.body = human_body;
    human.policy = Policy::PlannerOnly;
    human.role = Role::ScriptedHuman;
    AgentSpec robot;
    robot.id = "robot";
    robot.start = Pose{robot_start.x, robot_start.y, geometry::heading_degrees(robot_start, main_door)};
    robot.goal = robot_goal;
    robot.body = robot_body;
    robot.policy = Policy::Cape;
    robot.role = Role::Robot;
    s.agents = {robot, human};
    s.max_ticks = 1500;
    return s;
}

Scenario parking(Rng& rng, std::uint64_t seed, const std::string& name)
{
    constexpr double width = 4000, height = 3000, radius = 120, speed = 40;
    Scenario s;
    s.name = name;
    s.archetype = "parking";
    s.seed = seed;
    s.map.width = width;
    s.map.height = height;
    s.trigger_distance = 700;
    s.cooldown = 3;
    s.inter_agent_margin = 10;

    // Two rows of parked cars split into blocks; the gaps are cross aisles.
    std::size_t n = 0;
    for (double row : {rng.uniform(650, 800), rng.uniform(1900, 2050)}) {
        double x = rng.uniform(500, 700);
        while (x < width - 900) {
            const double w = rng.uniform(600, 1000);
            if (x + w > width - 500)
                break;
            s.map.obstacles.push_back(Obstacle{numbered("parked", ++n), Rect{x, row, w, 450}});
            x += w + rng.uniform(550, 750);
        }
    }

    const auto cars = static_cast<std::size_t>(rng.integer(2, 3));
    std::vector<Point> used;
    auto lane_point = [&](double x0, double x1) {
        for (int i = 0; i < 500; ++i) {
            const Point p{rng.uniform(x0, x1), rng.uniform(200, height - 200)};
            bool ok = geometry::clearance(s.map, p) >= radius + 60;
            for (const auto& q : used)
                ok = ok && geometry::distance(p, q) > 4 * radius;
            if (ok) {
                used.push_back(p);
                return p;
            }
        }
        throw ScenarioInfeasible(name + ": no free parking spot");
    };
    double longest = 0;
    for (std::size_t i = 0; i < cars; ++i) {
        const bool from_left = i % 2 == 0;
        const Point start = from_left ? lane_point(200, 500) : lane_point(width - 500, width - 200);
        const Point goal = from_left ? lane_point(width - 700, width - 200) : lane_point(200, 700);
        AgentSpec a;
        a.id = numbered("car", i + 1);
        a.start = Pose{start.x, start.y, geometry::heading_degrees(start, goal)};
        a.goal = goal;
        a.body = geometry::AgentBody{radius, speed};
        a.policy = Policy::Cape;
        a.role = Role::Robot;
        longest = std::max(longest, geometry::distance(start, goal));
        s.agents.push_back(std::move(a));
    }
    s.max_ticks = static_cast<Tick>(std::ceil(4 * longest / speed)) + 100;
    return s;
}

// Object-carrying layouts on a 6 x 6 m floor: start on the right, goal on the left.
struct CarryLayout
{
    std::vector<Obstacle> obstacles;
    Point start;
    Point goal;
    const char* landmark;
    bool left;
    const char* avoid;
};

const std::vector<CarryLayout>& carry_layouts()
{
    static const std::vector<CarryLayout> layouts{
        {{{"desk", {2.4, 2.3, 1.0, 1.2}},
          {"chair", {4.0, 0.0, 0.6, 0.7}},
          {"cabinet", {1.0, 5.2, 0.9, 0.8}},
          {"box", {3.9, 5.4, 0.7, 0.6}}},
         {5.2, 3.0},
         {0.8, 3.0},
         "desk",
         true,
         "chair"},
        {{{"table", {2.6, 1.6, 0.9, 0.9}},
          {"plant", {2.8, 4.5, 0.5, 0.5}},
          {"chair", {3.9, 4.9, 0.5, 0.6}},
          {"shelf", {0.0, 0.0, 1.4, 0.5}},
          {"bin", {1.2, 5.5, 0.5, 0.5}}},
         {5.2, 2.0},
         {0.8, 3.4},
         "table",
         false,
         "plant"},
        {{{"sofa", {2.4, 2.4, 0.8, 1.4}},
          {"lamp", {4.2, 0.0, 0.4, 0.4}},
          {"chair", {1.2, 5.3, 0.5, 0.5}},
          {"printer", {0.9, 0.0, 0.8, 0.6}},
          {"box", {4.0, 5.4, 0.6, 0.6}},
          {"stool", {5.6, 5.6, 0.4, 0.4}}},
         {5.2, 3.4},
         {0.8, 3.0},
         "sofa",
         false,
         "lamp"},
        {{{"desk", {1.9, 1.9, 0.8, 0.5}},
          {"table", {3.6, 3.4, 0.7, 0.7}},
          {"chair", {2.0, 5.5, 0.5, 0.5}},
          {"cabinet", {0.0, 5.4, 0.9, 0.6}},
          {"plant", {4.4, 0.0, 0.5, 0.4}},
          {"box", {5.5, 5.5, 0.5, 0.5}},
          {"bin", {0.2, 0.0, 0.5, 0.4}}},
         {5.2, 2.6},
         {0.8, 3.0},
         "table",
         true,
         "chair"},
    };
    return layouts;
}

Scenario carry(std::size_t layout, std::uint64_t seed, const std::string& name)
{
    const auto& l = carry_layouts()[layout % carry_layouts().size()];
    Scenario s;
    s.name = name;
    s.archetype = "carry";
    s.seed = seed;
    s.map.width = 6;
    s.map.height = 6;
    s.map.obstacles = l.obstacles;
    s.trigger_distance = 1.0;
    s.cooldown = 3;
    s.margin = 0.1;
    const Carry object{0.85, 0.2};
    AgentSpec robot;
    robot.id = "robot";
    robot.start = Pose{l.start.x, l.start.y, -180};
    robot.goal = l.goal;
    robot.goal_theta = -180;
    robot.body = geometry::AgentBody{object.length / 2 + object.radius, 0.05};
    robot.policy = Policy::Cape;
    robot.role = Role::Robot;
    robot.carry = object;
    s.agents = {robot};
    const std::string side = l.left ? "left" : "right";
    s.schedule = {
        {0, "robot", "human", "take the path to the " + side + " of the " + l.landmark, side},
        {20, "robot", "human", std::string("stay away from the ") + l.avoid + " a bit", ""},
    };
    s.max_ticks = 800;
    return s;
}

// Generated layouts are kept only if every agent has an initial plan under
// the default planner settings, so episodes never start infeasible.
bool plannable(const Scenario& s)
{
    for (const auto& a : s.agents) {
        try {
            planner::rrt_plan(s.map, {a.start, a.goal, a.goal_theta, a.body, s.margin},
                              derive_seed(s.seed, "plan/" + a.id));
        } catch (const planner::NoPathFound&) {
            return false;
        }
    }
    return true;
}

template <class Generate>
Scenario first_plannable(const std::string& name, std::uint64_t seed, Generate generate)
{
    for (std::uint64_t attempt = 0; attempt < 50; ++attempt) {
        const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, attempt);
        Rng rng(s);
        try {
            Scenario scenario = generate(rng, s);
            if (plannable(scenario))
                return scenario;
        } catch (const ScenarioInfeasible&) {
        }
    }
    throw ScenarioInfeasible(name + ": no plannable layout after 50 attempts");
}

} // namespace

const std::vector<std::string>& archetype_names()
{
    static const std::vector<std::string> names{"parking", "household", "carry", "crossing"};
    return names;
}

std::vector<Scenario> make_crossing_scenarios(std::size_t agents, std::size_t count, std::uint64_t seed)
{
    if (agents < 2 || agents > 4)
        throw std::invalid_argument("crossing scenarios take 2 to 4 agents");
    std::vector<Scenario> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t s = derive_seed(seed, "crossing/" + std::to_string(agents) + "/" + std::to_string(i));
        Rng rng(s);
        const bool head_on = agents == 2 && i % 2 == 1;
        out.push_back(crossroad(agents, head_on, rng, s,
                                "crossing" + std::to_string(agents) + (head_on ? "_corridor_" : "_crossroad_") +
                                    std::to_string(i)));
    }
    return out;
}

std::vector<Scenario> make_archetype_scenarios(const std::string& archetype, std::size_t count, std::uint64_t seed)
{
    if (archetype == "crossing")
        return make_crossing_scenarios(2, count, seed);
    std::vector<Scenario> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t s = derive_seed(seed, archetype + "/" + std::to_string(i));
        const std::string name = archetype + "_" + std::to_string(i);
        if (archetype == "parking")
            out.push_back(first_plannable(name, s, [&](Rng& rng, std::uint64_t k) { return parking(rng, k, name); }));
        else if (archetype == "household")
            out.push_back(first_plannable(name, s, [&](Rng& rng, std::uint64_t k) { return household(rng, k, name); }));
        else if (archetype == "carry")
            out.push_back(carry(i, s, "carry_map" + std::to_string(i % carry_layouts().size() + 1)));
        else
            throw std::invalid_argument("unknown archetype '" + archetype + "'");
    }
    for (const auto& s : out)
        s.validate();
    return out;
}

} // namespace cape::sim
