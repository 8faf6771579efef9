#include "cape/datagen.hpp"

#include "cape/planner.hpp"
#include "cape/raster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace cape::datagen {

using geometry::AgentBody;
using geometry::Point;
using geometry::Pose;
using geometry::Rect;
using geometry::Tick;
using geometry::TimedPath;
using geometry::Track;
using pipeline::Behavior;

std::string_view to_string(StructuredKind kind)
{
    switch (kind) {
    case StructuredKind::None:
        return "none";
    case StructuredKind::Corridor:
        return "corridor";
    case StructuredKind::Crossroad:
        return "crossroad";
    }
    return "?";
}

std::optional<StructuredKind> structured_kind_from_string(std::string_view name)
{
    for (auto k : {StructuredKind::None, StructuredKind::Corridor, StructuredKind::Crossroad})
        if (to_string(k) == name)
            return k;
    return std::nullopt;
}

void MapGenConfig::validate() const
{
    if (!(width > 0) || !(height > 0))
        throw std::invalid_argument("map size must be positive");
    if (!(min_size > 0) || min_size > max_size || max_size >= std::min(width, height))
        throw std::invalid_argument("obstacle size range must lie within (0, min(width, height))");
    if (clutter_level < 1 || clutter_level > 3)
        throw std::invalid_argument("clutter level must be 1, 2 or 3");
    if (count_spread < 0 || std::any_of(counts.begin(), counts.end(), [](int c) { return c < 0; }))
        throw std::invalid_argument("obstacle counts must be non-negative");
    if (!(agent_radius > 0))
        throw std::invalid_argument("agent radius must be positive");
}

namespace {

bool overlaps(const Rect& a, const Rect& b)
{
    return a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom();
}

std::string wall_name(std::size_t i) { return "wall " + std::to_string(i); }

// Walls first, plus the zones sampled obstacles must keep clear of so the
// passages keep their width.
std::vector<Rect> overlay(ObstacleMap& map, const MapGenConfig& c, Rng& rng)
{
    const double d = 2.0 * c.agent_radius;
    const double w = map.width, h = map.height;
    std::vector<Rect> keep_clear;
    if (c.structured == StructuredKind::Corridor) {
        const double thickness = 40.0;
        const double gap = rng.uniform(2.5 * d, 4.0 * d);
        const double wx = w / 2 - thickness / 2 + rng.uniform(-w / 10, w / 10);
        const double gy = rng.uniform(0.2 * h, 0.8 * h - gap);
        map.obstacles.push_back({wall_name(1), {wx, 0, thickness, gy}});
        map.obstacles.push_back({wall_name(2), {wx, gy + gap, thickness, h - gy - gap}});
        keep_clear.push_back({wx - 3 * d, gy - d, thickness + 6 * d, gap + 2 * d});
    } else if (c.structured == StructuredKind::Crossroad) {
        const double cx = w / 2 + rng.uniform(-w / 20, w / 20);
        const double cy = h / 2 + rng.uniform(-h / 20, h / 20);
        const double gx = rng.uniform(2.5 * d, 4.0 * d);
        const double gy = rng.uniform(2.5 * d, 4.0 * d);
        const double e = 0.15 * std::min(w, h);
        const double l = cx - gx / 2, r = cx + gx / 2, t = cy - gy / 2, b = cy + gy / 2;
        map.obstacles.push_back({wall_name(1), {e, e, l - e, t - e}});
        map.obstacles.push_back({wall_name(2), {r, e, w - e - r, t - e}});
        map.obstacles.push_back({wall_name(3), {e, b, l - e, h - e - b}});
        map.obstacles.push_back({wall_name(4), {r, b, w - e - r, h - e - b}});
        keep_clear.push_back({l - d, 0, gx + 2 * d, h});
        keep_clear.push_back({0, t - d, w, gy + 2 * d});
    }
    return keep_clear;
}

} // namespace

bool free_space_connected(const ObstacleMap& map, double agent_radius)
{
    // A cell is free when its centre keeps radius + cell/2; clearance is
    // 1-Lipschitz, so the segment between adjacent free centres is feasible.
    const double cell = agent_radius / 2.0;
    const double need = agent_radius + cell / 2.0;
    const int nx = static_cast<int>(std::ceil(map.width / cell));
    const int ny = static_cast<int>(std::ceil(map.height / cell));
    std::vector<char> free(static_cast<std::size_t>(nx) * ny, 0);
    std::size_t total = 0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const Point p{std::min((i + 0.5) * cell, map.width), std::min((j + 0.5) * cell, map.height)};
            if (geometry::clearance(map, p) >= need) {
                free[static_cast<std::size_t>(j) * nx + i] = 1;
                ++total;
            }
        }
    if (total == 0)
        return false;
    const auto first = static_cast<std::size_t>(std::find(free.begin(), free.end(), 1) - free.begin());
    std::vector<std::size_t> stack{first};
    free[first] = 2;
    std::size_t seen = 1;
    while (!stack.empty()) {
        const std::size_t k = stack.back();
        stack.pop_back();
        const int i = static_cast<int>(k % nx), j = static_cast<int>(k / nx);
        const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
        for (int n = 0; n < 4; ++n) {
            const int a = i + di[n], b = j + dj[n];
            if (a < 0 || b < 0 || a >= nx || b >= ny)
                continue;
            const std::size_t q = static_cast<std::size_t>(b) * nx + a;
            if (free[q] == 1) {
                free[q] = 2;
                ++seen;
                stack.push_back(q);
            }
        }
    }
    return seen == total;
}

ObstacleMap gen_map(const MapGenConfig& config, std::uint64_t seed)
{
    config.validate();
    Rng rng(seed);
    ObstacleMap map{config.width, config.height, {}, {}};
    const auto keep_clear = overlay(map, config, rng);
    if (!free_space_connected(map, config.agent_radius))
        throw GenerationFailed("structured layout leaves free space disconnected");

    const int mean = config.counts[static_cast<std::size_t>(config.clutter_level - 1)];
    const auto count = std::max<std::int64_t>(0, mean + rng.integer(-config.count_spread, config.count_spread));
    int rejections = 0, placed = 0;
    while (placed < count) {
        const double w = rng.uniform(config.min_size, config.max_size);
        const double h = rng.uniform(config.min_size, config.max_size);
        const Rect r{rng.uniform(0, config.width - w), rng.uniform(0, config.height - h), w, h};
        bool ok = std::none_of(map.obstacles.begin(), map.obstacles.end(),
                               [&](const auto& o) { return overlaps(o.rect, r); }) &&
                  std::none_of(keep_clear.begin(), keep_clear.end(), [&](const Rect& k) { return overlaps(k, r); });
        if (ok) {
            map.obstacles.push_back({"obstacle " + std::to_string(placed + 1), r});
            ok = free_space_connected(map, config.agent_radius);
            if (ok)
                ++placed;
            else
                map.obstacles.pop_back();
        }
        if (!ok && ++rejections > config.max_rejections)
            throw GenerationFailed("gave up after " + std::to_string(rejections) + " rejected obstacles (placed " +
                                   std::to_string(placed) + " of " + std::to_string(count) + ")");
    }
    return map;
}

editverify::EditSession record_session(const ObstacleMap& map, const DatasetRecord& record)
{
    editverify::EditSession s;
    s.map = map;
    s.target = "robot";
    s.candidates = record.candidates;
    s.others["human"] = record.human_track;
    s.bodies["robot"] = record.robot.body;
    s.bodies["human"] = record.human.body;
    s.margin = record.margin;
    s.inter_agent_margin = record.inter_agent_margin;
    return s;
}

pipeline::Speaker record_speaker(const DatasetRecord& record)
{
    const auto& t = record.human_track;
    return {"human", geometry::pose_at_tick(t.path, record.human.body, t.offset).position()};
}

namespace {

struct Scene
{
    const ObstacleMap& map;
    const RecordConfig& config;
    AgentSetup robot;
    planner::CandidateSet candidates;
};

bool inside(const ObstacleMap& map, Point p)
{
    return p.x >= 0 && p.y >= 0 && p.x <= map.width && p.y <= map.height;
}

std::optional<Point> free_point(const ObstacleMap& map, Rng& rng, double need)
{
    for (int k = 0; k < 100; ++k) {
        const Point p{rng.uniform(0, map.width), rng.uniform(0, map.height)};
        if (geometry::clearance(map, p) >= need)
            return p;
    }
    return std::nullopt;
}

// Start and goal on opposite sides of an obstacle, so the first candidate
// bends around it and the map has at least two classes nearby.
std::optional<Scene> sample_scene(const ObstacleMap& map, const RecordConfig& c, std::uint64_t seed)
{
    Rng rng(seed);
    const double need = 2.0 * (c.robot.radius + c.margin);
    const double span = std::min(map.width, map.height);
    for (int attempt = 0; attempt < c.attempts; ++attempt) {
        Point centre{map.width / 2, map.height / 2};
        if (!map.obstacles.empty())
            centre = map.obstacles[static_cast<std::size_t>(
                                       rng.integer(0, static_cast<std::int64_t>(map.obstacles.size()) - 1))]
                         .rect.center();
        const Point dir = geometry::unit_vector(rng.uniform(-180, 180));
        const double reach = rng.uniform(0.25, 0.4) * span;
        const Point a = centre + reach * dir, b = centre - reach * dir;
        if (!inside(map, a) || !inside(map, b) || geometry::clearance(map, a) < need ||
            geometry::clearance(map, b) < need)
            continue;
        const Pose start = Pose::at(a, geometry::heading_degrees(a, b));
        planner::PlanQuery q{start, b, std::nullopt, c.robot, c.margin};
        try {
            auto set = planner::multi_candidate_plan(map, q, c.k, rng.next());
            set.for_agent = "robot";
            if (set.candidates.front().path.size() < 3)
                continue;
            return Scene{map, c, {start, b, c.robot}, std::move(set)};
        } catch (const planner::NoPathFound&) {
            continue;
        }
    }
    return std::nullopt;
}

std::optional<AgentSetup> setup_of(const TimedPath& path, const AgentBody& body)
{
    if (path.waypoints.empty())
        return std::nullopt;
    return AgentSetup{path.front().pose, path.back().pose.position(), body};
}

struct Human
{
    AgentSetup setup;
    Track track;
};

editverify::EditSession session_of(const Scene& scene, const Human& human)
{
    DatasetRecord r;
    r.candidates = scene.candidates;
    r.human_track = human.track;
    r.robot = scene.robot;
    r.human = human.setup;
    r.margin = scene.config.margin;
    r.inter_agent_margin = scene.config.inter_agent_margin;
    return record_session(scene.map, r);
}

bool conflicts(const editverify::EditSession& s, const TimedPath& path)
{
    return editverify::first_conflict(s, path).has_value();
}

// Human crossing the first candidate at right angles, timed to meet it.
std::optional<Human> crossing_human(const Scene& scene, Rng& rng)
{
    const auto& c = scene.config;
    const TimedPath& path = scene.candidates.candidates.front().path;
    const Tick duration = geometry::path_duration(path, c.robot);
    const Tick meet = static_cast<Tick>(rng.uniform(0.3, 0.6) * static_cast<double>(duration));
    const Pose at = geometry::pose_at_tick(path, c.robot, meet);
    const double side = rng.chance(0.5) ? 90.0 : -90.0;
    const Point perp = geometry::unit_vector(at.theta + side);
    const double reach = rng.uniform(150, 300);
    const Point a = at.position() + reach * perp, b = at.position() - reach * perp;
    if (!inside(scene.map, a) || !inside(scene.map, b) ||
        !geometry::segment_feasible(scene.map, a, b, c.human.radius, 0.0))
        return std::nullopt;
    const Tick arrive = geometry::segment_ticks(a, at.position(), c.human) + rng.integer(-3, 3);
    const Pose hs = Pose::at(a, geometry::heading_degrees(a, b));
    TimedPath hp{{{hs, 0}, {Pose::at(b, hs.theta), 0}}};
    Tick offset = 0;
    if (arrive >= meet)
        offset = arrive - meet;
    else
        hp.waypoints[0].dwell = meet - arrive;
    Human h{{hs, b, c.human}, {hp, offset}};
    if (!conflicts(session_of(scene, h), path))
        return std::nullopt;
    return h;
}

// Human coming head-on along the first candidate and continuing past the
// robot's start.
std::optional<Human> head_on_human(const Scene& scene, Rng& rng)
{
    const auto& c = scene.config;
    const TimedPath& path = scene.candidates.candidates.front().path;
    const Tick duration = geometry::path_duration(path, c.robot);
    const Tick from = static_cast<Tick>(rng.uniform(0.5, 0.8) * static_cast<double>(duration));
    const Point start = geometry::pose_at_tick(path, c.robot, from).position();
    std::vector<Point> pts{start};
    const auto poly = path.polyline();
    // waypoints already passed by the time the robot would reach `start`
    Tick t = 0;
    std::vector<Point> behind;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        if (i > 0)
            t += geometry::segment_ticks(poly[i - 1], poly[i], c.robot);
        if (t < from)
            behind.push_back(poly[i]);
    }
    for (auto it = behind.rbegin(); it != behind.rend(); ++it)
        if (!(*it == pts.back()))
            pts.push_back(*it);
    const Point p0 = poly.front();
    const Point back = geometry::unit_vector(geometry::heading_degrees(poly[1], poly[0]));
    const Point end = p0 + rng.uniform(4, 8) * c.robot.radius * back;
    if (!inside(scene.map, end) || !geometry::segment_feasible(scene.map, p0, end, c.human.radius, 0.0))
        return std::nullopt;
    pts.push_back(end);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        if (!geometry::segment_feasible(scene.map, pts[i], pts[i + 1], c.human.radius, 0.0))
            return std::nullopt;
    std::vector<Pose> poses;
    for (std::size_t i = 0; i < pts.size(); ++i)
        poses.push_back(Pose::at(pts[i], geometry::heading_degrees(pts[i == 0 ? 0 : i - 1], pts[i == 0 ? 1 : i])));
    Human h{{poses.front(), end, c.human}, {TimedPath::from_poses(poses), 0}};
    if (!conflicts(session_of(scene, h), path))
        return std::nullopt;
    return h;
}

// Human elsewhere on the map, clear of every candidate.
std::optional<Human> bystander(const Scene& scene, Rng& rng)
{
    const auto& c = scene.config;
    const double need = c.human.radius + c.margin;
    const auto a = free_point(scene.map, rng, need);
    const auto b = free_point(scene.map, rng, need);
    if (!a || !b)
        return std::nullopt;
    planner::PlanQuery q{Pose::at(*a, geometry::heading_degrees(*a, *b)), *b, std::nullopt, c.human, 0.0};
    TimedPath hp;
    try {
        hp = planner::rrt_plan(scene.map, q, rng.next());
    } catch (const planner::NoPathFound&) {
        return std::nullopt;
    }
    Human h{*setup_of(hp, c.human), {hp, 0}};
    const auto s = session_of(scene, h);
    for (const auto& cand : scene.candidates.candidates)
        if (conflicts(s, cand.path))
            return std::nullopt;
    return h;
}

pipeline::Amount random_amount(Rng& rng)
{
    using K = pipeline::Amount::Kind;
    switch (rng.integer(0, 3)) {
    case 0:
        return {K::Bit, 0.0};
    case 1:
        return {K::Little, 0.0};
    case 2:
        return {K::More, 0.0};
    default:
        return {K::Units, static_cast<double>(rng.integer(5, 40))};
    }
}

std::optional<std::int64_t> random_step(Rng& rng, std::int64_t lo, std::int64_t hi)
{
    if (lo > hi)
        return std::nullopt;
    return rng.integer(lo, hi);
}

std::optional<pipeline::Intent> random_intent(Behavior b, const editverify::EditSession& s, Rng& rng)
{
    using namespace pipeline;
    const TimedPath& path = s.candidates.candidates.front().path;
    const auto last = static_cast<std::int64_t>(path.size()) - 1;
    switch (b) {
    case Behavior::Movement: {
        const auto step = random_step(rng, 1, last - 1);
        if (!step)
            return std::nullopt;
        MoveIntent m;
        m.direction = static_cast<Direction>(rng.integer(0, 3));
        m.frame = rng.chance(0.5) ? Frame::Robot : Frame::Speaker;
        m.amount = random_amount(rng);
        if (*step != 1 || rng.chance(0.5))
            m.step = step;
        return m;
    }
    case Behavior::Rotation: {
        static const double degrees[] = {10, 15, 30, 45, 60, 90};
        const auto step = random_step(rng, 1, last);
        RotateIntent r{rng.chance(0.5), degrees[rng.integer(0, 5)], std::nullopt};
        if (*step != 1 || rng.chance(0.5))
            r.step = step;
        return r;
    }
    case Behavior::PathSelection: {
        const auto& cands = s.candidates.candidates;
        if (cands.size() < 2)
            return std::nullopt;
        std::vector<std::size_t> telling;
        for (std::size_t o = 0; o < s.map.obstacles.size(); ++o)
            for (std::size_t i = 1; i < cands.size(); ++i)
                if (cands[i].signature.net_crossings(o) != cands[0].signature.net_crossings(o)) {
                    telling.push_back(o);
                    break;
                }
        const double roll = rng.uniform();
        if (roll < 0.6 && !telling.empty()) {
            const auto o = telling[static_cast<std::size_t>(rng.integer(0, std::int64_t(telling.size()) - 1))];
            return SelectIntent{SelectIntent::Kind::Landmark, rng.chance(0.5), s.map.obstacles[o].name, 1};
        }
        if (roll < 0.8)
            return SelectIntent{SelectIntent::Kind::Side, rng.chance(0.5), "", 1};
        return SelectIntent{SelectIntent::Kind::Index, true, "", rng.integer(1, std::int64_t(cands.size()))};
    }
    case Behavior::ObstacleDistance: {
        if (s.map.obstacles.empty() || last < 2)
            return std::nullopt;
        const auto step = rng.integer(1, last - 1);
        const Point p = path.waypoints[static_cast<std::size_t>(step)].pose.position();
        std::size_t nearest = 0;
        for (std::size_t o = 1; o < s.map.obstacles.size(); ++o)
            if (s.map.obstacles[o].rect.distance_to(p) < s.map.obstacles[nearest].rect.distance_to(p))
                nearest = o;
        DistanceIntent d{rng.chance(0.6), s.map.obstacles[nearest].name, random_amount(rng), step};
        if (rng.chance(0.3))
            d.step.reset();
        return d;
    }
    case Behavior::Wait:
        return WaitIntent{};
    case Behavior::Backout:
        return BackoutIntent{};
    case Behavior::PassThrough:
        return PassIntent{};
    }
    return std::nullopt;
}

bool all_accepted(const editverify::EditSession& s, const std::vector<dsl::Statement>& program, bool must_clear)
{
    const auto outcome = editverify::apply_program(s, dsl::parse(dsl::print(program)));
    return outcome.count("Accepted") == program.size() && outcome.feasible && (!must_clear || outcome.conflict_free);
}

std::optional<DatasetRecord> make_record(const Scene& scene, std::size_t index, Behavior behavior, std::uint64_t seed)
{
    Rng rng(seed);
    const auto& c = scene.config;
    std::optional<Human> human;
    if (behavior == Behavior::Wait)
        human = crossing_human(scene, rng);
    else if (behavior == Behavior::Backout)
        human = head_on_human(scene, rng);
    else
        human = bystander(scene, rng);
    if (!human)
        return std::nullopt;

    DatasetRecord r;
    r.map_id = c.map_id;
    r.clutter_level = c.clutter_level;
    r.structured = c.structured;
    r.scenario = index;
    r.behavior = behavior;
    r.robot = scene.robot;
    r.human = human->setup;
    r.margin = c.margin;
    r.inter_agent_margin = c.inter_agent_margin;
    r.candidates = scene.candidates;
    r.human_track = human->track;

    const auto session = record_session(scene.map, r);
    const auto intent = random_intent(behavior, session, rng);
    if (!intent)
        return std::nullopt;
    const auto speaker = record_speaker(r);
    r.instruction = pipeline::render(*intent);
    r.gt_program = pipeline::resolve(*intent, session, speaker);
    if (r.gt_program.empty())
        return std::nullopt;
    const bool clears = behavior == Behavior::Wait || behavior == Behavior::Backout;
    if (!all_accepted(session, r.gt_program, clears))
        return std::nullopt;
    if (behavior == Behavior::Backout &&
        std::none_of(r.gt_program.begin(), r.gt_program.end(),
                     [](const auto& st) { return std::holds_alternative<dsl::InsertWaypoint>(st); }))
        return std::nullopt;
    if (c.paraphrase) {
        const std::string text = c.paraphrase(r.instruction);
        const auto again = pipeline::parse_instruction(text);
        if (!again || pipeline::resolve(*again, session, speaker) != r.gt_program)
            return std::nullopt;
        r.instruction = text;
    }
    return r;
}

std::string behavior_key(Behavior b) { return std::string(pipeline::to_string(b)); }

} // namespace

std::vector<DatasetRecord> gen_records(const ObstacleMap& map, std::uint64_t seed, const std::vector<Behavior>& behaviors,
                                       const RecordConfig& config)
{
    std::vector<DatasetRecord> out;
    for (std::size_t i = 0; i < config.scenarios; ++i) {
        const std::string tag = "scenario/" + std::to_string(i);
        const auto scene = sample_scene(map, config, derive_seed(seed, tag));
        if (!scene)
            continue;
        for (Behavior b : behaviors)
            for (int a = 0; a < config.attempts; ++a) {
                const auto seed_a = derive_seed(seed, tag + "/" + behavior_key(b) + "/" + std::to_string(a));
                if (auto r = make_record(*scene, i, b, seed_a)) {
                    out.push_back(std::move(*r));
                    break;
                }
            }
    }
    return out;
}

dsl::Statement random_statement(Rng& rng, const std::vector<std::string>& agents)
{
    const std::string agent =
        agents.empty() ? "robot" : agents[static_cast<std::size_t>(rng.integer(0, std::int64_t(agents.size()) - 1))];
    auto num = [&] { return std::round(rng.uniform(-200, 200) * 100) / 100; };
    const std::int64_t step = rng.integer(0, 10);
    switch (rng.integer(0, 4)) {
    case 0:
        return dsl::SelectPath{rng.integer(0, 4), agent};
    case 1:
        return dsl::ModifyTranslation{step, num(), num(), agent};
    case 2:
        return dsl::ModifyRotation{step, std::round(rng.uniform(-180, 180)), agent};
    case 3:
        return dsl::Wait{step, rng.integer(0, 200), agent};
    default: {
        dsl::InsertWaypoint w{step, std::abs(num()) * 2.5, std::abs(num()) * 2.5, std::nullopt, agent};
        if (rng.chance(0.5))
            w.theta = std::round(rng.uniform(-180, 180));
        return w;
    }
    }
}

const ObstacleMap& Dataset::map(const std::string& id) const
{
    for (const auto& [name, m] : maps)
        if (name == id)
            return m;
    throw std::out_of_range("unknown map '" + id + "'");
}

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed)
{
    if (config.clutter_levels.empty())
        throw std::invalid_argument("at least one clutter level is required");
    struct Slot
    {
        std::string id;
        ObstacleMap map;
        std::vector<DatasetRecord> records;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(config.maps);
    std::size_t structured_seen = 0;
    std::vector<MapGenConfig> map_configs;
    for (std::size_t i = 0; i < config.maps; ++i) {
        MapGenConfig mc = config.map;
        mc.clutter_level = config.clutter_levels[i % config.clutter_levels.size()];
        const double f = config.structured_fraction;
        if (std::floor(double(i + 1) * f) > std::floor(double(i) * f))
            mc.structured = structured_seen++ % 2 == 0 ? StructuredKind::Corridor : StructuredKind::Crossroad;
        else
            mc.structured = StructuredKind::None;
        map_configs.push_back(mc);
        char id[32];
        std::snprintf(id, sizeof id, "map_%04zu", i);
        slots[i].id = id;
    }

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < slots.size(); i = next++) {
            try {
                const auto& mc = map_configs[i];
                const auto map_seed = derive_seed(seed, "map/" + std::to_string(i));
                std::optional<ObstacleMap> map;
                for (int retry = 0; retry < 5 && !map; ++retry) {
                    try {
                        map = gen_map(mc, retry == 0 ? map_seed : derive_seed(map_seed, std::uint64_t(retry)));
                    } catch (const GenerationFailed&) {
                        if (retry == 4)
                            throw;
                    }
                }
                RecordConfig rc = config.records;
                rc.map_id = slots[i].id;
                rc.clutter_level = mc.clutter_level;
                rc.structured = mc.structured;
                slots[i].records =
                    gen_records(*map, derive_seed(seed, "records/" + std::to_string(i)), config.behaviors, rc);
                slots[i].map = std::move(*map);
            } catch (...) {
                slots[i].error = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 8));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();

    Dataset out;
    for (auto& s : slots) {
        if (s.error)
            std::rethrow_exception(s.error);
        out.maps.emplace_back(s.id, std::move(s.map));
        for (auto& r : s.records)
            out.records.push_back(std::move(r));
    }
    return out;
}

io::Json manifest(const Dataset& dataset)
{
    io::Json behaviors = io::Json::object();
    for (Behavior b : pipeline::generated_behaviors())
        behaviors[behavior_key(b)] = 0;
    io::Json clutter = io::Json::object();
    io::Json kinds = io::Json::object();
    for (const auto& r : dataset.records) {
        auto& b = behaviors[behavior_key(r.behavior)];
        b = b.get<std::int64_t>() + 1;
        auto& c = clutter[std::to_string(r.clutter_level)];
        c = c.is_null() ? 1 : c.get<std::int64_t>() + 1;
        auto& k = kinds[std::string(to_string(r.structured))];
        k = k.is_null() ? 1 : k.get<std::int64_t>() + 1;
    }
    return {{"schema", kManifestSchema},
            {"records", dataset.records.size()},
            {"maps", dataset.maps.size()},
            {"behaviors", behaviors},
            {"clutter_levels", clutter},
            {"structured", kinds}};
}

std::vector<std::filesystem::path> export_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                                                  const ExportOptions& options)
{
    if (dataset.records.empty())
        throw std::invalid_argument("nothing to export: the record list is empty");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error(dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;

    std::string lines;
    for (const auto& r : dataset.records)
        lines += io::dump_line(io::to_json(r)) + "\n";
    written.push_back(dir / "records.jsonl");
    io::write_text(written.back(), lines);

    lines.clear();
    for (const auto& [id, map] : dataset.maps)
        lines += io::dump_line(io::Json{{"id", id}, {"map", io::to_json(map)}}) + "\n";
    written.push_back(dir / "maps.jsonl");
    io::write_text(written.back(), lines);

    if (options.rasters) {
        const auto raster_dir = dir / "rasters";
        std::filesystem::create_directories(raster_dir, ec);
        if (ec)
            throw std::runtime_error(raster_dir.string() + ": " + ec.message());
        for (std::size_t i = 0; i < dataset.records.size(); ++i) {
            const auto& r = dataset.records[i];
            char name[32];
            std::snprintf(name, sizeof name, "record_%06zu.ppm", i);
            written.push_back(raster_dir / name);
            const auto raster = pipeline::render_session(record_session(dataset.map(r.map_id), r), options.raster_side);
            io::write_text(written.back(), raster.to_ppm());
        }
    }

    auto m = manifest(dataset);
    io::Json files = io::Json::array();
    for (const auto& p : written)
        files.push_back(std::filesystem::relative(p, dir).generic_string());
    files.push_back("manifest.json");
    m["files"] = files;
    written.push_back(dir / "manifest.json");
    io::write_text(written.back(), io::dump_pretty(m));
    return written;
}

} // namespace cape::datagen

namespace cape::io {

namespace {

Json setup_json(const datagen::AgentSetup& a)
{
    return {{"start", to_json(a.start)}, {"goal", to_json(a.goal)}, {"body", to_json(a.body)}};
}

datagen::AgentSetup setup_from_json(const Json& j)
{
    return {pose_from_json(field(j, "start")), point_from_json(field(j, "goal")), body_from_json(field(j, "body"))};
}

} // namespace

Json to_json(const datagen::DatasetRecord& r)
{
    return {{"schema", datagen::kRecordSchema},
            {"map_id", r.map_id},
            {"clutter_level", r.clutter_level},
            {"structured", datagen::to_string(r.structured)},
            {"scenario", r.scenario},
            {"behavior", pipeline::to_string(r.behavior)},
            {"robot", setup_json(r.robot)},
            {"human", setup_json(r.human)},
            {"margin", r.margin},
            {"inter_agent_margin", r.inter_agent_margin},
            {"candidates", to_json(r.candidates)},
            {"human_track", to_json(r.human_track)},
            {"instruction", r.instruction},
            {"gt_program", dsl::print(r.gt_program)}};
}

datagen::DatasetRecord record_from_json(const Json& j)
{
    if (text(j, "schema") != datagen::kRecordSchema)
        throw FormatError("schema: expected " + std::string(datagen::kRecordSchema));
    datagen::DatasetRecord r;
    r.map_id = text(j, "map_id");
    r.clutter_level = static_cast<int>(integer(j, "clutter_level"));
    const auto kind = datagen::structured_kind_from_string(text(j, "structured"));
    if (!kind)
        throw FormatError("structured: unknown kind");
    r.structured = *kind;
    r.scenario = static_cast<std::size_t>(integer(j, "scenario"));
    const auto behavior = pipeline::behavior_from_string(text(j, "behavior"));
    if (!behavior)
        throw FormatError("behavior: unknown behavior");
    r.behavior = *behavior;
    r.robot = setup_from_json(field(j, "robot"));
    r.human = setup_from_json(field(j, "human"));
    r.margin = number(j, "margin");
    r.inter_agent_margin = number(j, "inter_agent_margin");
    r.candidates = candidates_from_json(field(j, "candidates"));
    r.human_track = track_from_json(field(j, "human_track"));
    r.instruction = text(j, "instruction");
    const auto program = dsl::parse(text(j, "gt_program"));
    if (!program.valid())
        throw FormatError("gt_program: line " + std::to_string(program.errors().front().line) + ": " +
                          program.errors().front().message);
    r.gt_program = program.statements();
    return r;
}

} // namespace cape::io
