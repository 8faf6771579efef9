#include "cape/editverify.hpp"

#include <algorithm>

namespace cape::editverify {

using geometry::PathSampler;
using geometry::Point;

std::string_view reason_kind(const RejectReason& reason)
{
    struct Kind
    {
        std::string_view operator()(const StaticCollision&) const { return "StaticCollision"; }
        std::string_view operator()(const AgentConflict&) const { return "AgentConflict"; }
        std::string_view operator()(const EndpointMoved&) const { return "EndpointMoved"; }
        std::string_view operator()(const IndexOutOfRange&) const { return "IndexOutOfRange"; }
        std::string_view operator()(const BadIndex&) const { return "BadIndex"; }
    };
    return std::visit(Kind{}, reason);
}

std::string describe(const RejectReason& reason)
{
    struct Text
    {
        std::string operator()(const StaticCollision& r) const { return "path too close to " + r.blocker; }
        std::string operator()(const AgentConflict& r) const
        {
            return "conflict with " + r.other + " at tick " + std::to_string(r.tick);
        }
        std::string operator()(const EndpointMoved&) const { return "start or goal position changed"; }
        std::string operator()(const IndexOutOfRange& r) const
        {
            return "step " + std::to_string(r.step) + " out of range for " + std::to_string(r.len) + " waypoints";
        }
        std::string operator()(const BadIndex& r) const
        {
            return "path index " + std::to_string(r.index) + " out of range for " + std::to_string(r.count) +
                   " candidates";
        }
    };
    return std::visit(Text{}, reason);
}

std::string_view to_string(IgnoreReason reason)
{
    switch (reason) {
    case IgnoreReason::WrongAgent:
        return "WrongAgent";
    case IgnoreReason::ExtraSelection:
        return "ExtraSelection";
    case IgnoreReason::DefaultedSelection:
        return "DefaultedSelection";
    }
    return "WrongAgent";
}

std::string_view verdict_kind(const Verdict& verdict)
{
    struct Kind
    {
        std::string_view operator()(const Accepted&) const { return "Accepted"; }
        std::string_view operator()(const Rejected&) const { return "Rejected"; }
        std::string_view operator()(const Ignored&) const { return "Ignored"; }
        std::string_view operator()(const Invalid&) const { return "Invalid"; }
    };
    return std::visit(Kind{}, verdict);
}

std::size_t EditOutcome::count(std::string_view verdict) const
{
    return static_cast<std::size_t>(std::count_if(line_results.begin(), line_results.end(), [&](const LineResult& r) {
        return verdict_kind(r.verdict) == verdict;
    }));
}

IndexOutOfRangeError::IndexOutOfRangeError(std::int64_t step, std::size_t len)
    : std::out_of_range("step " + std::to_string(step) + " out of range for " + std::to_string(len) + " waypoints"),
      step_(step), len_(len)
{
}

namespace {

std::size_t checked_step(const TimedPath& path, std::int64_t step)
{
    if (step < 0 || static_cast<std::size_t>(step) >= path.size())
        throw IndexOutOfRangeError(step, path.size());
    return static_cast<std::size_t>(step);
}

} // namespace

TimedPath apply_line(const TimedPath& path, const dsl::Statement& stmt)
{
    TimedPath out = path;
    if (std::holds_alternative<dsl::SelectPath>(stmt))
        throw std::invalid_argument("select_path is not a path edit");
    if (const auto* s = std::get_if<dsl::ModifyTranslation>(&stmt)) {
        auto& pose = out.waypoints[checked_step(path, s->step)].pose;
        pose.x += s->dx;
        pose.y += s->dy;
    } else if (const auto* s = std::get_if<dsl::ModifyRotation>(&stmt)) {
        auto& pose = out.waypoints[checked_step(path, s->step)].pose;
        pose.theta = geometry::normalize_degrees(pose.theta + s->dtheta);
    } else if (const auto* s = std::get_if<dsl::Wait>(&stmt)) {
        out.waypoints[checked_step(path, s->step)].dwell += s->t;
    } else if (const auto* s = std::get_if<dsl::InsertWaypoint>(&stmt)) {
        const std::size_t i = checked_step(path, s->step);
        const Point here = path.waypoints[i].pose.position();
        const Point p{s->x, s->y};
        double theta = path.waypoints[i].pose.theta;
        if (s->theta)
            theta = *s->theta;
        else if (i + 1 < path.size())
            theta = geometry::heading_degrees(here, path.waypoints[i + 1].pose.position());
        else if (p != here)
            theta = geometry::heading_degrees(here, p);
        out.waypoints.insert(out.waypoints.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                             geometry::Waypoint{geometry::Pose::make(p.x, p.y, theta), 0});
    }
    return out;
}

void EditSession::validate() const
{
    map.validate();
    if (candidates.candidates.empty())
        throw std::invalid_argument("session has no candidate paths");
    body(target).validate();
    for (const auto& [id, track] : others) {
        body(id).validate();
        track.path.validate();
    }
}

const AgentBody& EditSession::body(const std::string& agent) const
{
    const auto it = bodies.find(agent);
    if (it == bodies.end())
        throw std::invalid_argument("no body for agent '" + agent + "'");
    return it->second;
}

std::optional<StaticCollision> static_violation(const EditSession& session, const TimedPath& path)
{
    const double radius = session.body(session.target).radius;
    const double need = radius + session.margin;
    const auto& map = session.map;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Point p = path.waypoints[i].pose.position();
        const auto blocker = geometry::nearest_blocker(map, p);
        if (!(blocker.distance >= need))
            return StaticCollision{geometry::describe(map, blocker)};
        if (i + 1 < path.size()) {
            const Point q = path.waypoints[i + 1].pose.position();
            if (!geometry::segment_feasible(map, p, q, radius, session.margin))
                return StaticCollision{geometry::describe(map, geometry::nearest_blocker(map, p, q))};
        }
    }
    return std::nullopt;
}

std::optional<AgentConflict> first_conflict(const EditSession& session, const TimedPath& path)
{
    if (session.others.empty())
        return std::nullopt;
    const AgentBody& self = session.body(session.target);
    PathSampler mine(path, self);
    Tick horizon = mine.duration();

    struct Other
    {
        const std::string* id;
        PathSampler sampler;
        Tick offset;
        double separation;
    };
    std::vector<Other> others;
    for (const auto& [id, track] : session.others) {
        const AgentBody& body = session.body(id);
        others.push_back({&id, PathSampler(track.path, body), track.offset,
                          self.radius + body.radius + session.inter_agent_margin});
        horizon = std::max(horizon, others.back().sampler.duration() - track.offset);
    }
    for (Tick t = 0; t <= horizon + 1; ++t) {
        const Point p = mine.at(t).position();
        for (auto& o : others) {
            const Point q = o.sampler.at(t + o.offset).position();
            if (geometry::distance(p, q) < o.separation)
                return AgentConflict{*o.id, t};
        }
    }
    return std::nullopt;
}

std::optional<RejectReason> check_line(const EditSession& session, const TimedPath& before, const TimedPath& after)
{
    if (after.front().pose.position() != before.front().pose.position() ||
        after.back().pose.position() != before.back().pose.position())
        return EndpointMoved{};
    if (auto collision = static_violation(session, after))
        return *collision;
    const auto conflict = first_conflict(session, after);
    if (!conflict)
        return std::nullopt;
    // An edit to a path that already conflicts is allowed if it does not
    // bring the first conflict forward; a later line may then clear it.
    const auto previous = first_conflict(session, before);
    if (previous && conflict->tick >= previous->tick)
        return std::nullopt;
    return *conflict;
}

EditOutcome apply_program(const EditSession& session, const dsl::EditProgram& program)
{
    session.validate();
    const auto& cands = session.candidates.candidates;
    EditOutcome outcome;

    // The first selection for the target always runs first.
    std::optional<std::size_t> selection_line;
    for (std::size_t i = 0; i < program.lines.size(); ++i) {
        const auto& line = program.lines[i];
        if (line.ok() && std::holds_alternative<dsl::SelectPath>(line.statement()) &&
            dsl::agent_of(line.statement()) == session.target) {
            selection_line = i;
            break;
        }
    }
    std::optional<Verdict> selection_verdict;
    if (selection_line) {
        const auto& sel = std::get<dsl::SelectPath>(program.lines[*selection_line].statement());
        if (static_cast<std::size_t>(sel.path_index) < cands.size()) {
            outcome.selected_index = static_cast<std::size_t>(sel.path_index);
            selection_verdict = Accepted{};
        } else {
            selection_verdict = Rejected{BadIndex{sel.path_index, cands.size()}};
        }
    } else {
        outcome.line_results.push_back({0, std::nullopt, Ignored{IgnoreReason::DefaultedSelection}});
    }

    TimedPath current = cands[outcome.selected_index].path;
    for (std::size_t i = 0; i < program.lines.size(); ++i) {
        const auto& line = program.lines[i];
        LineResult result{line.span.line, std::nullopt, Accepted{}};
        if (!line.ok()) {
            result.verdict = Invalid{line.error()};
            outcome.line_results.push_back(std::move(result));
            continue;
        }
        const dsl::Statement& stmt = line.statement();
        result.statement = stmt;
        if (selection_line && i == *selection_line) {
            result.verdict = *selection_verdict;
        } else if (dsl::agent_of(stmt) != session.target) {
            result.verdict = Ignored{IgnoreReason::WrongAgent};
        } else if (std::holds_alternative<dsl::SelectPath>(stmt)) {
            result.verdict = Ignored{IgnoreReason::ExtraSelection};
        } else {
            try {
                TimedPath next = apply_line(current, stmt);
                std::optional<RejectReason> reason;
                if (session.verify_enabled)
                    reason = check_line(session, current, next);
                if (reason)
                    result.verdict = Rejected{*reason};
                else
                    current = std::move(next);
            } catch (const IndexOutOfRangeError& e) {
                result.verdict = Rejected{IndexOutOfRange{e.step(), e.len()}};
            }
        }
        outcome.line_results.push_back(std::move(result));
    }

    outcome.final_path = std::move(current);
    outcome.feasible = !static_violation(session, outcome.final_path).has_value();
    outcome.conflict_free = !first_conflict(session, outcome.final_path).has_value();
    return outcome;
}

} // namespace cape::editverify
