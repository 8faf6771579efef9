#include "cape/instructions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>

namespace cape::pipeline {

using editverify::EditSession;
using geometry::Point;
using geometry::Tick;
using geometry::TimedPath;

std::string_view to_string(Behavior behavior)
{
    switch (behavior) {
    case Behavior::Movement:
        return "movement";
    case Behavior::Rotation:
        return "rotation";
    case Behavior::PathSelection:
        return "path_selection";
    case Behavior::ObstacleDistance:
        return "obstacle_distance";
    case Behavior::Wait:
        return "wait";
    case Behavior::Backout:
        return "backout";
    case Behavior::PassThrough:
        return "pass_through";
    }
    return "movement";
}

std::optional<Behavior> behavior_from_string(std::string_view name)
{
    for (auto b : {Behavior::Movement, Behavior::Rotation, Behavior::PathSelection, Behavior::ObstacleDistance,
                   Behavior::Wait, Behavior::Backout, Behavior::PassThrough})
        if (to_string(b) == name)
            return b;
    return std::nullopt;
}

const std::vector<Behavior>& generated_behaviors()
{
    static const std::vector<Behavior> all{Behavior::Movement,         Behavior::Rotation, Behavior::PathSelection,
                                           Behavior::ObstacleDistance, Behavior::Wait,     Behavior::Backout};
    return all;
}

double Amount::value(double width, double height) const
{
    switch (kind) {
    case Kind::Bit:
    case Kind::Little:
        return 0.05 * std::min(width, height);
    case Kind::More:
        return 0.15 * std::min(width, height);
    case Kind::Units:
        return units;
    }
    return units;
}

Behavior behavior_of(const Intent& intent)
{
    struct Of
    {
        Behavior operator()(const MoveIntent&) const { return Behavior::Movement; }
        Behavior operator()(const RotateIntent&) const { return Behavior::Rotation; }
        Behavior operator()(const SelectIntent&) const { return Behavior::PathSelection; }
        Behavior operator()(const DistanceIntent&) const { return Behavior::ObstacleDistance; }
        Behavior operator()(const WaitIntent&) const { return Behavior::Wait; }
        Behavior operator()(const BackoutIntent&) const { return Behavior::Backout; }
        Behavior operator()(const PassIntent&) const { return Behavior::PassThrough; }
    };
    return std::visit(Of{}, intent);
}

double round2(double value)
{
    const double r = std::round(value * 100.0) / 100.0;
    return r == 0.0 ? 0.0 : r;
}

namespace {

std::string amount_text(const Amount& a)
{
    switch (a.kind) {
    case Amount::Kind::Bit:
        return "a bit";
    case Amount::Kind::Little:
        return "a little";
    case Amount::Kind::More:
        return "more";
    case Amount::Kind::Units:
        return dsl::format_number(a.units) + " units";
    }
    return "a bit";
}

std::string step_suffix(const std::optional<std::int64_t>& step)
{
    return step ? " at waypoint " + std::to_string(*step) : "";
}

std::string direction_text(Direction d, Frame f)
{
    if (f == Frame::Robot) {
        switch (d) {
        case Direction::Forward:
            return "forward";
        case Direction::Backward:
            return "backward";
        case Direction::Left:
            return "to your left";
        case Direction::Right:
            return "to your right";
        }
    }
    switch (d) {
    case Direction::Forward:
        return "away from me";
    case Direction::Backward:
        return "toward me";
    case Direction::Left:
        return "to my left";
    case Direction::Right:
        return "to my right";
    }
    return "forward";
}

std::string lower(std::string_view s)
{
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string normalize(std::string_view text)
{
    std::string out;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space)
            out += ' ';
        space = false;
        out += c;
    }
    while (!out.empty() && (out.back() == '.' || out.back() == '!'))
        out.pop_back();
    const std::string l = lower(out);
    if (l.rfind("please ", 0) == 0)
        out.erase(0, 7);
    if (l.size() > 8 && l.compare(l.size() - 8, 8, ", please") == 0)
        out.erase(out.size() - 8);
    return out;
}

Amount parse_amount(const std::string& word, const std::string& number)
{
    const std::string w = lower(word);
    if (w == "a bit")
        return {Amount::Kind::Bit, 0.0};
    if (w == "a little")
        return {Amount::Kind::Little, 0.0};
    if (w == "more")
        return {Amount::Kind::More, 0.0};
    return {Amount::Kind::Units, std::stod(number)};
}

std::optional<std::int64_t> parse_step(const std::ssub_match& m)
{
    if (!m.matched)
        return std::nullopt;
    return std::stoll(m.str());
}

bool contains(const std::string& haystack, std::string_view needle)
{
    return haystack.find(needle) != std::string::npos;
}

} // namespace

std::string render(const Intent& intent)
{
    struct Render
    {
        std::string operator()(const MoveIntent& m) const
        {
            return "move " + direction_text(m.direction, m.frame) + " " + amount_text(m.amount) + step_suffix(m.step);
        }
        std::string operator()(const RotateIntent& r) const
        {
            return std::string("rotate ") + (r.clockwise ? "clockwise " : "counterclockwise ") +
                   dsl::format_number(r.degrees) + " degrees" + step_suffix(r.step);
        }
        std::string operator()(const SelectIntent& s) const
        {
            const char* side = s.left ? "left" : "right";
            switch (s.kind) {
            case SelectIntent::Kind::Landmark:
                return std::string("take the path to the ") + side + " of the " + s.landmark;
            case SelectIntent::Kind::Side:
                return std::string("take the ") + side + " path";
            case SelectIntent::Kind::Index:
                return "take path " + std::to_string(s.number);
            }
            return "";
        }
        std::string operator()(const DistanceIntent& d) const
        {
            return std::string(d.away ? "stay away from the " : "move closer to the ") + d.obstacle + " " +
                   amount_text(d.amount) + step_suffix(d.step);
        }
        std::string operator()(const WaitIntent&) const { return "wait here, let me pass first"; }
        std::string operator()(const BackoutIntent&) const { return "back out of the way"; }
        std::string operator()(const PassIntent&) const { return "go ahead"; }
    };
    return std::visit(Render{}, intent);
}

std::optional<Intent> parse_instruction(std::string_view raw)
{
    static const auto flags = std::regex::ECMAScript | std::regex::icase;
    static const std::string amount = R"((a bit|a little|more|(\d+(?:\.\d+)?) units?))";
    static const std::string at = R"((?: at waypoint (\d+))?)";
    static const std::regex move_re(
        "^move (forward|backward|back|to your left|to your right|to my left|to my right|away from me|towards? me) " +
            amount + at + "$",
        flags);
    static const std::regex rotate_re(
        R"(^(?:rotate|turn) (clockwise|counterclockwise|counter-clockwise|anticlockwise) (\d+(?:\.\d+)?) degrees?)" + at +
            "$",
        flags);
    static const std::regex landmark_re(R"(^take the path (?:to the )?(left|right) of (?:the )?(.+)$)", flags);
    static const std::regex side_re(R"(^take the (left|right) path$)", flags);
    static const std::regex index_re(R"(^take path (\d+)$)", flags);
    static const std::regex distance_re(
        "^(stay away from|move away from|keep away from|move closer to|get closer to) (?:the )?(.+?) " + amount + at +
            "$",
        flags);

    const std::string text = normalize(raw);
    const std::string l = lower(text);
    std::smatch m;
    if (std::regex_match(text, m, move_re)) {
        MoveIntent intent;
        const std::string d = lower(m[1].str());
        if (d == "forward" || d == "away from me")
            intent.direction = Direction::Forward;
        else if (d == "backward" || d == "back" || d == "toward me" || d == "towards me")
            intent.direction = Direction::Backward;
        else if (contains(d, "left"))
            intent.direction = Direction::Left;
        else
            intent.direction = Direction::Right;
        intent.frame = contains(d, "my") || contains(d, "me") ? Frame::Speaker : Frame::Robot;
        intent.amount = parse_amount(m[2].str(), m[3].str());
        intent.step = parse_step(m[4]);
        return intent;
    }
    if (std::regex_match(text, m, rotate_re)) {
        RotateIntent intent;
        intent.clockwise = lower(m[1].str()) == "clockwise";
        intent.degrees = std::stod(m[2].str());
        intent.step = parse_step(m[3]);
        return intent;
    }
    if (std::regex_match(text, m, side_re))
        return SelectIntent{SelectIntent::Kind::Side, lower(m[1].str()) == "left", "", 1};
    if (std::regex_match(text, m, index_re))
        return SelectIntent{SelectIntent::Kind::Index, true, "", std::stoll(m[1].str())};
    if (std::regex_match(text, m, landmark_re))
        return SelectIntent{SelectIntent::Kind::Landmark, lower(m[1].str()) == "left", m[2].str(), 1};
    if (std::regex_match(text, m, distance_re)) {
        DistanceIntent intent;
        intent.away = contains(lower(m[1].str()), "away");
        intent.obstacle = m[2].str();
        intent.amount = parse_amount(m[3].str(), m[4].str());
        intent.step = parse_step(m[5]);
        return intent;
    }
    if (contains(l, "back out") || contains(l, "out of the way") || contains(l, "out of my way"))
        return BackoutIntent{};
    if (l.rfind("wait", 0) == 0 || contains(l, "let me pass"))
        return WaitIntent{};
    for (std::string_view p : {"go ahead", "you go first", "carry on", "keep going", "proceed"})
        if (l.rfind(p, 0) == 0)
            return PassIntent{};
    return std::nullopt;
}

std::size_t select_by_side(const EditSession& session, bool left, std::optional<std::size_t> region)
{
    const auto& cands = session.candidates.candidates;
    auto score = [&](std::size_t i) {
        const auto& sig = cands[i].signature;
        if (region)
            return sig.net_crossings(*region);
        int total = 0;
        for (std::size_t r = 0; r < session.map.region_count(); ++r)
            total += sig.net_crossings(r);
        return total;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i) {
        const int s = score(i), b = score(best);
        if (left ? s > b : s < b)
            best = i;
    }
    return best;
}

std::optional<Tick> clearing_wait(const EditSession& session, const TimedPath& path, std::size_t step, Tick min_wait,
                                  Tick limit)
{
    TimedPath trial = path;
    const Tick base = path.waypoints.at(step).dwell;
    for (Tick w = min_wait; w <= limit; ++w) {
        trial.waypoints[step].dwell = base + w;
        if (!editverify::first_conflict(session, trial))
            return w;
    }
    return std::nullopt;
}

namespace {

std::optional<std::size_t> find_obstacle_ci(const geometry::ObstacleMap& map, const std::string& name)
{
    const std::string key = lower(name);
    for (std::size_t i = 0; i < map.obstacles.size(); ++i)
        if (lower(map.obstacles[i].name) == key)
            return i;
    return std::nullopt;
}

Tick wait_limit(const EditSession& session)
{
    Tick limit = 0;
    for (const auto& [id, track] : session.others)
        limit = std::max(limit, track.remaining(session.body(id)));
    return limit + 2 + kWaitBuffer;
}

dsl::Statement selection(const EditSession& s, std::size_t i)
{
    return dsl::SelectPath{static_cast<std::int64_t>(i), s.target};
}

struct Plan
{
    std::vector<dsl::Statement> program;
    Tick cost = 0;
};

std::optional<Plan> wait_plan(const EditSession& s)
{
    const auto& body = s.body(s.target);
    const Tick limit = wait_limit(s);
    std::optional<Plan> best;
    for (std::size_t i = 0; i < s.candidates.candidates.size(); ++i) {
        const TimedPath& path = s.candidates.candidates[i].path;
        const auto minimal = clearing_wait(s, path, 0, 0, limit);
        if (!minimal)
            continue;
        const auto w = clearing_wait(s, path, 0, *minimal + kWaitBuffer, limit + kWaitBuffer);
        if (!w)
            continue;
        const Tick cost = *w + geometry::path_duration(path, body);
        if (!best || cost < best->cost)
            best = Plan{{selection(s, i), dsl::Wait{0, *w, s.target}}, cost};
    }
    return best;
}

bool applies_cleanly(const EditSession& s, const std::vector<dsl::Statement>& program)
{
    const auto outcome = editverify::apply_program(s, dsl::parse(dsl::print(program)));
    return outcome.count("Accepted") == program.size() && outcome.conflict_free && outcome.feasible;
}

std::optional<Plan> backout_plan(const EditSession& s)
{
    const auto& body = s.body(s.target);
    const double need = 2.0 * (body.radius + s.margin);
    const Tick limit = wait_limit(s);
    std::optional<Plan> best;
    for (std::size_t i = 0; i < s.candidates.candidates.size(); ++i) {
        const TimedPath& path = s.candidates.candidates[i].path;
        if (path.size() < 2)
            continue;
        const Point p0 = path.front().pose.position();
        const Point p1 = path.waypoints[1].pose.position();
        const double base = p0 == p1 ? path.front().pose.theta : geometry::heading_degrees(p0, p1);
        std::optional<Plan> found;
        for (int mult = 2; mult <= 20 && !found; ++mult) {
            for (double offset : {0.0, -45.0, 45.0, -90.0, 90.0}) {
                const Point dir = geometry::unit_vector(base + 180.0 + offset);
                const Point p{round2(p0.x + mult * body.radius * dir.x), round2(p0.y + mult * body.radius * dir.y)};
                if (geometry::clearance(s.map, p) < need ||
                    !geometry::segment_feasible(s.map, p0, p, body.radius, s.margin))
                    continue;
                // Step aside and continue from there, or step aside and come
                // back when the next waypoint is out of sight of the retreat.
                std::vector<dsl::Statement> program{selection(s, i)};
                if (!geometry::segment_feasible(s.map, p, p1, body.radius, s.margin))
                    program.push_back(dsl::InsertWaypoint{0, round2(p0.x), round2(p0.y), std::nullopt, s.target});
                program.push_back(dsl::InsertWaypoint{0, p.x, p.y, std::nullopt, s.target});
                TimedPath moved = path;
                for (std::size_t k = 1; k < program.size(); ++k)
                    moved = editverify::apply_line(moved, program[k]);
                const auto minimal = clearing_wait(s, moved, 1, 0, limit);
                if (!minimal)
                    continue;
                const auto w = clearing_wait(s, moved, 1, *minimal + kWaitBuffer, limit + kWaitBuffer);
                if (!w)
                    continue;
                program.push_back(dsl::Wait{1, *w, s.target});
                if (!applies_cleanly(s, program))
                    continue;
                found = Plan{std::move(program), *w + geometry::path_duration(moved, body)};
                break;
            }
        }
        if (found && (!best || found->cost < best->cost))
            best = std::move(found);
    }
    return best;
}

std::vector<dsl::Statement> resolve_move(const MoveIntent& m, const EditSession& s, const std::optional<Speaker>& speaker)
{
    const TimedPath& path = s.candidates.candidates.front().path;
    const std::int64_t step = m.step.value_or(1);
    if (step < 0 || static_cast<std::size_t>(step) >= path.size())
        return {};
    double heading = path.waypoints[static_cast<std::size_t>(step)].pose.theta;
    if (m.frame == Frame::Speaker && speaker && speaker->position != path.front().pose.position())
        heading = geometry::heading_degrees(speaker->position, path.front().pose.position());
    double turn = 0.0;
    switch (m.direction) {
    case Direction::Forward:
        turn = 0.0;
        break;
    case Direction::Backward:
        turn = 180.0;
        break;
    case Direction::Left:
        turn = -90.0;
        break;
    case Direction::Right:
        turn = 90.0;
        break;
    }
    const double amount = m.amount.value(s.map.width, s.map.height);
    const Point u = geometry::unit_vector(heading + turn);
    return {selection(s, 0), dsl::ModifyTranslation{step, round2(amount * u.x), round2(amount * u.y), s.target}};
}

std::vector<dsl::Statement> resolve_distance(const DistanceIntent& d, const EditSession& s)
{
    const auto region = find_obstacle_ci(s.map, d.obstacle);
    if (!region)
        return {};
    const auto& rect = s.map.obstacles[*region].rect;
    const TimedPath& path = s.candidates.candidates.front().path;
    std::int64_t step = -1;
    if (d.step) {
        step = *d.step;
    } else {
        double best = 0.0;
        for (std::size_t i = 1; i + 1 < path.size(); ++i) {
            const double dist = rect.distance_to(path.waypoints[i].pose.position());
            if (step < 0 || dist < best) {
                step = static_cast<std::int64_t>(i);
                best = dist;
            }
        }
    }
    if (step < 0 || static_cast<std::size_t>(step) >= path.size())
        return {};
    const Point p = path.waypoints[static_cast<std::size_t>(step)].pose.position();
    const Point away = p - rect.nearest_point(p);
    const double len = geometry::norm(away);
    if (len == 0.0)
        return {};
    const double amount = (d.away ? 1.0 : -1.0) * d.amount.value(s.map.width, s.map.height);
    return {selection(s, 0),
            dsl::ModifyTranslation{step, round2(amount * away.x / len), round2(amount * away.y / len), s.target}};
}

} // namespace

std::vector<dsl::Statement> resolve(const Intent& intent, const EditSession& s, const std::optional<Speaker>& speaker)
{
    if (s.candidates.candidates.empty())
        return {};
    if (const auto* m = std::get_if<MoveIntent>(&intent))
        return resolve_move(*m, s, speaker);
    if (const auto* r = std::get_if<RotateIntent>(&intent)) {
        const double d = round2(r->clockwise ? r->degrees : -r->degrees);
        return {selection(s, 0), dsl::ModifyRotation{r->step.value_or(0), d, s.target}};
    }
    if (const auto* sel = std::get_if<SelectIntent>(&intent)) {
        switch (sel->kind) {
        case SelectIntent::Kind::Index:
            if (sel->number < 1)
                return {};
            return {dsl::SelectPath{sel->number - 1, s.target}};
        case SelectIntent::Kind::Side:
            return {selection(s, select_by_side(s, sel->left))};
        case SelectIntent::Kind::Landmark: {
            const auto region = find_obstacle_ci(s.map, sel->landmark);
            if (!region)
                return {};
            return {selection(s, select_by_side(s, sel->left, *region))};
        }
        }
    }
    if (const auto* d = std::get_if<DistanceIntent>(&intent))
        return resolve_distance(*d, s);
    if (std::holds_alternative<WaitIntent>(intent)) {
        if (auto plan = wait_plan(s))
            return plan->program;
        if (auto plan = backout_plan(s))
            return plan->program;
        return {};
    }
    if (std::holds_alternative<BackoutIntent>(intent)) {
        if (auto plan = backout_plan(s))
            return plan->program;
        if (auto plan = wait_plan(s))
            return plan->program;
        return {};
    }
    return {};
}

} // namespace cape::pipeline
