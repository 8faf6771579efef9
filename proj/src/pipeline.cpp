#include "cape/pipeline.hpp"

#include "cape/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cape::pipeline {

using geometry::Point;

const WorldAgent& World::agent(const std::string& id) const
{
    for (const auto& a : agents)
        if (a.id == id)
            return a;
    throw std::invalid_argument("unknown agent '" + id + "'");
}

namespace {

std::string num(double v) { return dsl::format_number(round2(v)); }

std::string pose_text(const geometry::Pose& p)
{
    return "(" + num(p.x) + ", " + num(p.y) + ", " + num(p.theta) + ")";
}

std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

std::string describe_scene(const editverify::EditSession& s)
{
    std::ostringstream out;
    const auto& map = s.map;
    out << "map " << num(map.width) << " x " << num(map.height)
        << " (origin top-left, +x right, +y down, theta 0 faces +x, positive theta turns clockwise)\n";
    for (const auto& o : map.obstacles)
        out << "obstacle " << o.name << ": x " << num(o.rect.x) << ", y " << num(o.rect.y) << ", w " << num(o.rect.w)
            << ", h " << num(o.rect.h) << "\n";
    for (std::size_t i = 0; i < map.unreachable.size(); ++i) {
        const auto& r = map.unreachable[i];
        out << "unreachable region " << i << ": x " << num(r.x) << ", y " << num(r.y) << ", w " << num(r.w) << ", h "
            << num(r.h) << "\n";
    }
    const auto& me = s.body(s.target);
    const auto& cands = s.candidates.candidates;
    out << "agent " << s.target << " (planning): pose " << pose_text(cands.front().path.front().pose) << ", radius "
        << num(me.radius) << ", speed " << num(me.speed) << "\n";
    for (const auto& [id, track] : s.others) {
        const auto& body = s.body(id);
        out << "agent " << id << ": pose " << pose_text(geometry::pose_at_tick(track.path, body, track.offset))
            << ", radius " << num(body.radius) << ", speed " << num(body.speed) << "\n";
    }
    return out.str();
}

io::Json SynthesizerRequest::to_json() const
{
    io::Json others = io::Json::object();
    for (const auto& [id, track] : session.others)
        others[id] = io::to_json(geometry::remaining_path(track.path, session.body(id), track.offset));
    io::Json bodies = io::Json::object();
    for (const auto& [id, body] : session.bodies)
        bodies[id] = io::to_json(body);
    io::Json j{{"target", session.target},
               {"instruction", instruction},
               {"speaker", speaker ? io::Json{{"id", speaker->id}, {"position", io::to_json(speaker->position)}}
                                   : io::Json(nullptr)},
               {"scene", scene},
               {"candidates", io::to_json(session.candidates)},
               {"predicted_others", std::move(others)},
               {"bodies", std::move(bodies)},
               {"margin", session.margin},
               {"inter_agent_margin", session.inter_agent_margin}};
    if (rendered_map)
        j["rendered_map"] = io::Json{{"format", "ppm"},
                                     {"width", rendered_map->width},
                                     {"height", rendered_map->height},
                                     {"fnv1a", hex(fnv1a(rendered_map->to_ppm()))}};
    else
        j["rendered_map"] = nullptr;
    return j;
}

SynthesizerResponse ScriptedSynthesizer::synthesize(const SynthesizerRequest& request) const
{
    const auto intent = parse_instruction(request.instruction);
    if (!intent)
        return {"", 0, 0.0};
    return {dsl::print(resolve(*intent, request.session, request.speaker)), 0, 0.0};
}

std::string strip_fences(const std::string& text)
{
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t");
        if (first != std::string::npos && line.compare(first, 3, "```") == 0)
            continue;
        out += line;
        out += '\n';
    }
    return out;
}

editverify::EditSession make_session(const World& world, const std::string& target, const planner::JointPlan& plan,
                                     bool verify_enabled)
{
    editverify::EditSession s;
    s.map = world.map;
    s.target = target;
    s.candidates = plan.self_candidates;
    s.others = plan.predicted_others;
    for (const auto& a : world.agents)
        s.bodies[a.id] = a.body;
    s.margin = world.margin;
    s.inter_agent_margin = world.inter_agent_margin;
    s.verify_enabled = verify_enabled;
    return s;
}

planner::JointPlan plan_for(const World& world, const std::string& target, const planner::PlannerConfig& config)
{
    const WorldAgent& self = world.agent(target);
    planner::AgentTask self_task{self.id, {self.pose, self.goal, self.goal_theta, self.body, world.margin}, self.known};
    std::vector<planner::AgentTask> others;
    for (const auto& a : world.agents)
        if (a.id != target)
            others.push_back({a.id, {a.pose, a.goal, a.goal_theta, a.body, world.margin}, a.known});
    return planner::joint_plan(world.map, self_task, others, config);
}

StepResult cape_step(const World& world, const std::string& target, const std::string& instruction,
                     const Synthesizer& synthesizer, const StepConfig& config,
                     const std::optional<std::string>& speaker)
{
    if (instruction.empty())
        throw std::invalid_argument("instruction must not be empty");
    StepResult result;
    result.plan = plan_for(world, target, config.planner);

    SynthesizerRequest request;
    request.session = make_session(world, target, result.plan, config.verify_enabled);
    request.scene = describe_scene(request.session);
    request.instruction = instruction;
    if (speaker)
        request.speaker = Speaker{*speaker, world.agent(*speaker).pose.position()};
    if (config.render_map)
        request.rendered_map = render_session(request.session);

    try {
        result.response = synthesizer.synthesize(request);
        result.program = dsl::parse(result.response.program_text);
        if (!result.program.lines.empty() && result.program.statements().empty()) {
            result.degraded = true;
            result.degradation = "no line of the synthesized program could be parsed";
        }
    } catch (const std::exception& e) {
        result.degraded = true;
        result.degradation = e.what();
        result.program = dsl::parse("");
    }
    result.outcome = editverify::apply_program(request.session, result.program);
    return result;
}

GoalBelief infer_goal_heuristic(const std::vector<Point>& trajectory,
                                const std::vector<std::pair<std::string, Point>>& goals,
                                const std::optional<std::string>& instruction)
{
    if (goals.empty())
        throw std::invalid_argument("goal inference needs at least one candidate goal");
    if (trajectory.empty())
        throw std::invalid_argument("goal inference needs at least one observed pose");
    auto lower = [](std::string s) {
        for (char& c : s)
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };

    const Point now = trajectory.back();
    const Point recent_from = trajectory[trajectory.size() >= 5 ? trajectory.size() - 5 : 0];
    const Point heading = now - recent_from;
    double travelled = 0.0;
    for (std::size_t i = 1; i < trajectory.size(); ++i)
        travelled += geometry::distance(trajectory[i - 1], trajectory[i]);
    const std::string said = instruction ? lower(*instruction) : "";

    GoalBelief belief;
    belief.candidates = goals;
    for (const auto& [label, goal] : goals) {
        double score = 0.0;
        const Point to_goal = goal - now;
        if (geometry::norm(heading) > 0 && geometry::norm(to_goal) > 0)
            score += geometry::dot(heading, to_goal) / (geometry::norm(heading) * geometry::norm(to_goal));
        if (travelled > 0)
            score += std::clamp(
                (geometry::distance(trajectory.front(), goal) - geometry::distance(now, goal)) / travelled, -1.0, 1.0);
        if (!said.empty() && !label.empty() && said.find(lower(label)) != std::string::npos)
            score += 1.0;
        belief.scores.push_back(score);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < goals.size(); ++i)
        if (belief.scores[i] > belief.scores[best] ||
            (belief.scores[i] == belief.scores[best] && goals[i].first < goals[best].first))
            best = i;
    belief.chosen = goals[best].first;
    return belief;
}

} // namespace cape::pipeline
