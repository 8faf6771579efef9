#include "cape/sim.hpp"

#include "cape/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cape::sim {

using geometry::Track;

std::string_view to_string(Policy policy) { return policy == Policy::Cape ? "cape" : "planner_only"; }

std::string_view to_string(Role role) { return role == Role::Robot ? "robot" : "scripted_human"; }

std::string_view to_string(EventAction action)
{
    switch (action) {
    case EventAction::Replanned:
        return "replanned";
    case EventAction::PassThrough:
        return "pass_through";
    case EventAction::Ignored:
        return "ignored";
    }
    return "?";
}

std::string_view to_string(Status status)
{
    switch (status) {
    case Status::Running:
        return "running";
    case Status::Success:
        return "success";
    case Status::Failure:
        return "failure";
    }
    return "?";
}

namespace {

std::vector<std::pair<Point, double>> discs(const AgentSpec& a, const Pose& p)
{
    if (!a.carry)
        return {{p.position(), a.body.radius}};
    const Point half = (a.carry->length / 2) * geometry::unit_vector(p.theta);
    return {{p.position() - half, a.carry->radius}, {p.position() + half, a.carry->radius}};
}

double path_distance(Point p, const std::vector<Point>& polyline)
{
    if (polyline.size() == 1)
        return geometry::distance(p, polyline.front());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i)
        best = std::min(best, geometry::point_segment_distance(p, polyline[i], polyline[i + 1]));
    return best;
}

} // namespace

void Scenario::validate() const
{
    try {
        map.validate();
    } catch (const geometry::InvalidMap& e) {
        throw InvalidScenario(e.what());
    }
    if (agents.empty())
        throw InvalidScenario("scenario has no agents");
    if (!(trigger_distance > 0))
        throw InvalidScenario("trigger_distance must be positive");
    if (cooldown < 0)
        throw InvalidScenario("cooldown must be >= 0");
    if (max_ticks < 1)
        throw InvalidScenario("max_ticks must be >= 1");
    if (margin < 0 || inter_agent_margin < 0)
        throw InvalidScenario("margins must be >= 0");
    std::set<std::string> ids;
    for (const auto& a : agents) {
        if (a.id.empty() || !ids.insert(a.id).second)
            throw InvalidScenario("agent ids must be unique and non-empty");
        try {
            a.body.validate();
        } catch (const std::exception& e) {
            throw InvalidScenario(a.id + ": " + e.what());
        }
        if (a.carry && a.body.radius + 1e-9 < a.carry->length / 2 + a.carry->radius)
            throw InvalidScenario(a.id + ": body radius must enclose the carried object");
        const double need = a.body.radius + margin;
        if (geometry::clearance(map, a.start.position()) < need)
            throw InvalidScenario(a.id + ": start is not feasible");
        if (geometry::clearance(map, a.goal) < need)
            throw InvalidScenario(a.id + ": goal is not feasible");
    }
    for (std::size_t i = 0; i < agents.size(); ++i)
        for (std::size_t j = i + 1; j < agents.size(); ++j)
            if (geometry::distance(agents[i].goal, agents[j].goal) <
                agents[i].body.radius + agents[j].body.radius + inter_agent_margin)
                throw InvalidScenario("goals of " + agents[i].id + " and " + agents[j].id + " conflict");
    for (const auto& s : schedule) {
        if (!ids.count(s.listener))
            throw InvalidScenario("scheduled instruction for unknown agent '" + s.listener + "'");
        if (s.text.empty() || s.tick < 0)
            throw InvalidScenario("scheduled instruction needs text and a tick >= 0");
    }
}

const AgentSpec& Scenario::agent(const std::string& id) const
{
    for (const auto& a : agents)
        if (a.id == id)
            return a;
    throw std::invalid_argument("unknown agent '" + id + "'");
}

Simulation::Simulation(Scenario scenario, SimConfig config) : scenario_(std::move(scenario)), config_(std::move(config))
{
    scenario_.validate();
    if (!config_.synthesizer)
        config_.synthesizer = std::make_shared<pipeline::ScriptedSynthesizer>();
    const std::size_t n = scenario_.agents.size();
    last_event_.assign(n * n, -1);
    result_.scenario = scenario_.name;
    result_.archetype = scenario_.archetype;
    result_.optimal_ticks = 1;
    for (const auto& a : scenario_.agents) {
        policies_.push_back(a.role == Role::Robot && config_.policy_override ? *config_.policy_override : a.policy);
        const planner::PlanQuery query{a.start, a.goal, a.goal_theta, a.body, scenario_.margin};
        try {
            auto path = planner::rrt_plan(scenario_.map, query, derive_seed(scenario_.seed, "plan/" + a.id),
                                          config_.planner.rrt);
            result_.optimal_ticks = std::max(result_.optimal_ticks, geometry::path_duration(path, a.body));
            tracks_.push_back(Track{std::move(path), 0});
        } catch (const planner::NoPathFound& e) {
            throw ScenarioInfeasible(a.id + ": no initial plan (" + e.what() + ")");
        }
    }
    evaluate();
}

std::size_t Simulation::index(const std::string& id) const
{
    for (std::size_t i = 0; i < scenario_.agents.size(); ++i)
        if (scenario_.agents[i].id == id)
            return i;
    throw std::invalid_argument("unknown agent '" + id + "'");
}

Pose Simulation::pose(const std::string& id) const
{
    const std::size_t i = index(id);
    return geometry::pose_at_tick(tracks_[i].path, scenario_.agents[i].body, now_ + tracks_[i].offset);
}

const Track& Simulation::track(const std::string& id) const { return tracks_[index(id)]; }

Policy Simulation::policy(const std::string& id) const { return policies_[index(id)]; }

pipeline::World Simulation::world() const
{
    pipeline::World w;
    w.map = scenario_.map;
    w.margin = scenario_.margin;
    w.inter_agent_margin = scenario_.inter_agent_margin;
    for (std::size_t i = 0; i < scenario_.agents.size(); ++i) {
        const auto& a = scenario_.agents[i];
        w.agents.push_back({a.id, a.body, pose(a.id), a.goal, a.goal_theta,
                            Track{tracks_[i].path, tracks_[i].offset + now_}});
    }
    return w;
}

bool Simulation::at_goal(std::size_t i) const
{
    const auto& a = scenario_.agents[i];
    if (now_ + tracks_[i].offset < geometry::path_duration(tracks_[i].path, a.body))
        return false;
    return geometry::distance(pose(a.id).position(), a.goal) <= a.body.radius / 2;
}

bool Simulation::check_collisions()
{
    const auto& agents = scenario_.agents;
    std::vector<std::vector<std::pair<Point, double>>> shapes;
    for (const auto& a : agents)
        shapes.push_back(discs(a, pose(a.id)));
    bool hit = false;
    for (std::size_t i = 0; i < agents.size(); ++i)
        for (const auto& [c, r] : shapes[i])
            if (geometry::clearance(scenario_.map, c) < r) {
                const auto blocker = geometry::nearest_blocker(scenario_.map, c);
                result_.collisions.push_back({now_, agents[i].id, geometry::describe(scenario_.map, blocker)});
                hit = true;
                break;
            }
    for (std::size_t i = 0; i < agents.size(); ++i)
        for (std::size_t j = i + 1; j < agents.size(); ++j) {
            bool touching = false;
            for (const auto& [ci, ri] : shapes[i])
                for (const auto& [cj, rj] : shapes[j])
                    touching = touching || geometry::distance(ci, cj) < ri + rj;
            if (touching) {
                result_.collisions.push_back({now_, agents[i].id, agents[j].id});
                hit = true;
            }
        }
    return hit;
}

bool Simulation::predicted_conflict(const std::string& a, const std::string& b) const
{
    const std::size_t i = index(a), j = index(b);
    const auto& ai = scenario_.agents[i];
    const auto& aj = scenario_.agents[j];
    const Tick end = std::max({geometry::path_duration(tracks_[i].path, ai.body) - now_ - tracks_[i].offset,
                               geometry::path_duration(tracks_[j].path, aj.body) - now_ - tracks_[j].offset, Tick{0}}) +
                     1;
    const double reach = ai.body.radius + aj.body.radius + scenario_.inter_agent_margin;
    geometry::PathSampler si(tracks_[i].path, ai.body), sj(tracks_[j].path, aj.body);
    for (Tick t = now_; t <= now_ + end; ++t)
        if (geometry::distance(si.at(t + tracks_[i].offset).position(), sj.at(t + tracks_[j].offset).position()) <
            reach)
            return true;
    return false;
}

std::string Simulation::negotiation_text(const std::string& speaker, const std::string& listener) const
{
    if (!predicted_conflict(speaker, listener))
        return pipeline::render(pipeline::PassIntent{});
    const std::size_t s = index(speaker), l = index(listener);
    const auto& sb = scenario_.agents[s].body;
    const auto remaining = geometry::remaining_path(tracks_[s].path, sb, now_ + tracks_[s].offset);
    const double reach = sb.radius + scenario_.agents[l].body.radius + scenario_.inter_agent_margin;
    if (path_distance(pose(listener).position(), remaining.polyline()) < reach)
        return pipeline::render(pipeline::BackoutIntent{});
    return pipeline::render(pipeline::WaitIntent{});
}

std::string Simulation::choose_listener(const std::string& a, const std::string& b) const
{
    const std::size_t i = index(a), j = index(b);
    const auto& ai = scenario_.agents[i];
    const auto& aj = scenario_.agents[j];
    // A scripted human never yields; otherwise prefer whoever can act on it.
    if (ai.role == Role::ScriptedHuman)
        return b;
    if (aj.role == Role::ScriptedHuman)
        return a;
    if (policies_[i] != policies_[j])
        return policies_[i] == Policy::Cape ? a : b;
    const double di = path_distance(
        pose(a).position(), geometry::remaining_path(tracks_[j].path, aj.body, now_ + tracks_[j].offset).polyline());
    const double dj = path_distance(
        pose(b).position(), geometry::remaining_path(tracks_[i].path, ai.body, now_ + tracks_[i].offset).polyline());
    if (di != dj)
        return di > dj ? a : b;
    return std::max(a, b);
}

const EventRecord& Simulation::instruct(const std::string& listener, const std::string& speaker,
                                        const std::string& text)
{
    index(listener);
    if (text.empty())
        throw std::invalid_argument("instruction must not be empty");
    return handle(listener, speaker, text, true);
}

planner::PlannerConfig Simulation::planner_config(const std::string& listener) const
{
    auto config = config_.planner;
    config.seed = derive_seed(scenario_.seed, "event/" + listener + "/" + std::to_string(now_));
    return config;
}

planner::JointPlan Simulation::preview_plan(const std::string& listener) const
{
    index(listener);
    return pipeline::plan_for(world(), listener, planner_config(listener));
}

const EventRecord& Simulation::handle(const std::string& listener, const std::string& speaker,
                                      const std::string& text, bool scheduled)
{
    EventRecord ev;
    ev.tick = now_;
    ev.speaker = speaker;
    ev.listener = listener;
    ev.instruction = text;
    ev.scheduled = scheduled;
    const std::size_t l = index(listener);
    const auto intent = pipeline::parse_instruction(text);
    if (policies_[l] != Policy::Cape) {
        ev.action = EventAction::Ignored;
    } else if (intent && std::holds_alternative<pipeline::PassIntent>(*intent)) {
        ev.action = EventAction::PassThrough;
    } else {
        pipeline::StepConfig step;
        step.planner = planner_config(listener);
        step.verify_enabled = config_.verify_enabled;
        step.render_map = config_.render_map;
        const auto w = world();
        std::optional<std::string> who;
        for (const auto& a : scenario_.agents)
            if (a.id == speaker && a.id != listener)
                who = speaker;
        const auto r = pipeline::cape_step(w, listener, text, *config_.synthesizer, step, who);
        ev.action = EventAction::Replanned;
        ev.program = r.response.program_text;
        ev.outcome = r.outcome;
        ev.candidates = r.plan.self_candidates;
        ev.degraded = r.degraded;
        ev.degradation = r.degradation;
        ev.tokens = r.response.token_count;
        ev.latency = r.response.latency;
        tracks_[l] = Track{r.outcome.final_path, -now_};
        ++result_.synth_calls;
        result_.tokens_total += ev.tokens;
        result_.wall_time += ev.latency;
    }
    result_.events.push_back(std::move(ev));
    return result_.events.back();
}

void Simulation::evaluate()
{
    if (check_collisions()) {
        status_ = Status::Failure;
        result_.failure = "collision";
        return;
    }
    bool done = true;
    for (std::size_t i = 0; i < scenario_.agents.size(); ++i)
        done = done && at_goal(i);
    if (done) {
        status_ = Status::Success;
        return;
    }
    if (now_ >= scenario_.max_ticks) {
        status_ = Status::Failure;
        result_.failure = "timeout";
        return;
    }

    for (const auto& s : scenario_.schedule)
        if (s.tick == now_)
            handle(s.listener, s.speaker, s.text, true);

    const auto& agents = scenario_.agents;
    const std::size_t n = agents.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (agents[i].role == Role::ScriptedHuman && agents[j].role == Role::ScriptedHuman)
                continue;
            if (geometry::distance(pose(agents[i].id).position(), pose(agents[j].id).position()) >=
                scenario_.trigger_distance)
                continue;
            Tick& last = last_event_[i * n + j];
            if (last >= 0 && now_ - last <= scenario_.cooldown)
                continue;
            last = now_;
            const std::string listener = choose_listener(agents[i].id, agents[j].id);
            const std::string speaker = listener == agents[i].id ? agents[j].id : agents[i].id;
            handle(listener, speaker, negotiation_text(speaker, listener), false);
        }
}

void Simulation::step()
{
    if (finished())
        return;
    ++now_;
    evaluate();
}

Tick Simulation::advance(Tick ticks)
{
    Tick done = 0;
    while (done < ticks && !finished()) {
        step();
        ++done;
    }
    return done;
}

void Simulation::run()
{
    while (!finished())
        step();
}

EpisodeResult Simulation::result() const
{
    EpisodeResult r = result_;
    r.success = status_ == Status::Success;
    r.ticks_taken = now_;
    for (const auto& a : scenario_.agents)
        r.final_poses.emplace_back(a.id, pose(a.id));
    return r;
}

EpisodeResult run_episode(const Scenario& scenario, const SimConfig& config)
{
    Simulation sim(scenario, config);
    sim.run();
    return sim.result();
}

MetricsSummary compute_metrics(std::span<const EpisodeResult> results)
{
    if (results.empty())
        throw EmptyResultSet("no episodes to summarize");
    MetricsSummary m;
    m.episodes = results.size();
    double successes = 0, efficiency = 0, latency = 0, tokens = 0, calls = 0;
    for (const auto& r : results) {
        if (r.success) {
            successes += 1;
            efficiency += double(r.optimal_ticks) / double(std::max(r.ticks_taken, r.optimal_ticks));
        }
        m.collisions += r.failure == "collision";
        m.timeouts += r.failure == "timeout";
        latency += r.wall_time;
        tokens += double(r.tokens_total);
        calls += double(r.synth_calls);
    }
    const double n = double(results.size());
    m.sr = 100.0 * successes / n;
    m.sel = 100.0 * efficiency / n;
    if (calls > 0) {
        m.mean_time = latency / calls;
        m.mean_tokens = tokens / calls;
    }
    return m;
}

} // namespace cape::sim

namespace cape::io {

using namespace cape::sim;

Json to_json(const AgentSpec& a)
{
    Json j{{"id", a.id},
           {"start", to_json(a.start)},
           {"goal", to_json(a.goal)},
           {"goal_theta", a.goal_theta ? Json(*a.goal_theta) : Json(nullptr)},
           {"body", to_json(a.body)},
           {"policy", to_string(a.policy)},
           {"role", to_string(a.role)}};
    if (a.carry)
        j["carry"] = Json{{"length", a.carry->length}, {"radius", a.carry->radius}};
    return j;
}

Json to_json(const Scenario& s)
{
    Json agents = Json::array();
    for (const auto& a : s.agents)
        agents.push_back(to_json(a));
    Json schedule = Json::array();
    for (const auto& e : s.schedule) {
        Json item{{"tick", e.tick}, {"listener", e.listener}, {"speaker", e.speaker}, {"text", e.text}};
        if (!e.intent.empty())
            item["intent"] = e.intent;
        schedule.push_back(std::move(item));
    }
    return Json{{"schema", kScenarioSchema},
                {"name", s.name},
                {"archetype", s.archetype},
                {"seed", s.seed},
                {"trigger_distance", s.trigger_distance},
                {"cooldown", s.cooldown},
                {"max_ticks", s.max_ticks},
                {"margin", s.margin},
                {"inter_agent_margin", s.inter_agent_margin},
                {"meters_per_unit", s.meters_per_unit},
                {"map", to_json(s.map)},
                {"agents", std::move(agents)},
                {"schedule", std::move(schedule)}};
}

Scenario scenario_from_json(const Json& j)
{
    if (!j.is_object())
        throw FormatError("scenario must be an object");
    if (text(j, "schema") != kScenarioSchema)
        throw FormatError("unsupported scenario schema '" + text(j, "schema") + "'");
    Scenario s;
    s.name = text(j, "name");
    s.archetype = j.contains("archetype") ? text(j, "archetype") : "";
    if (j.contains("seed")) {
        if (!field(j, "seed").is_number_unsigned() && !field(j, "seed").is_number_integer())
            throw FormatError("field 'seed' must be an integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    s.trigger_distance = number(j, "trigger_distance");
    s.cooldown = integer(j, "cooldown");
    s.max_ticks = integer(j, "max_ticks");
    if (j.contains("margin"))
        s.margin = number(j, "margin");
    if (j.contains("inter_agent_margin"))
        s.inter_agent_margin = number(j, "inter_agent_margin");
    if (j.contains("meters_per_unit"))
        s.meters_per_unit = number(j, "meters_per_unit");
    s.map = map_from_json(field(j, "map"));
    const auto& agents = field(j, "agents");
    if (!agents.is_array())
        throw FormatError("field 'agents' must be an array");
    for (const auto& a : agents) {
        AgentSpec spec;
        spec.id = text(a, "id");
        spec.start = pose_from_json(field(a, "start"));
        spec.goal = point_from_json(field(a, "goal"));
        if (a.contains("goal_theta") && !a["goal_theta"].is_null())
            spec.goal_theta = number(a, "goal_theta");
        spec.body = body_from_json(field(a, "body"));
        const std::string policy = a.contains("policy") ? text(a, "policy") : "cape";
        if (policy == "cape")
            spec.policy = Policy::Cape;
        else if (policy == "planner_only")
            spec.policy = Policy::PlannerOnly;
        else
            throw FormatError("agent '" + spec.id + "': unknown policy '" + policy + "'");
        const std::string role = a.contains("role") ? text(a, "role") : "robot";
        if (role == "robot")
            spec.role = Role::Robot;
        else if (role == "scripted_human")
            spec.role = Role::ScriptedHuman;
        else
            throw FormatError("agent '" + spec.id + "': unknown role '" + role + "'");
        if (a.contains("carry"))
            spec.carry = Carry{number(a["carry"], "length"), number(a["carry"], "radius")};
        s.agents.push_back(std::move(spec));
    }
    if (j.contains("schedule"))
        for (const auto& e : j["schedule"]) {
            ScheduledInstruction item{integer(e, "tick"), text(e, "listener"),
                                      e.contains("speaker") ? text(e, "speaker") : "", text(e, "text"), ""};
            if (e.contains("intent"))
                item.intent = text(e, "intent");
            s.schedule.push_back(std::move(item));
        }
    try {
        s.validate();
    } catch (const InvalidScenario& e) {
        throw FormatError(e.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& file)
{
    try {
        return scenario_from_json(read_json(file));
    } catch (const FormatError& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

Json to_json(const Collision& c) { return Json{{"tick", c.tick}, {"agent", c.agent}, {"other", c.other}}; }

Json to_json(const EventRecord& e)
{
    Json j{{"tick", e.tick},
           {"speaker", e.speaker},
           {"listener", e.listener},
           {"instruction", e.instruction},
           {"action", to_string(e.action)},
           {"scheduled", e.scheduled}};
    if (e.action == EventAction::Replanned) {
        j["program"] = e.program;
        j["degraded"] = e.degraded;
        if (e.degraded)
            j["degradation"] = e.degradation;
        j["tokens"] = e.tokens;
        j["latency"] = e.latency;
        if (e.outcome)
            j["outcome"] = to_json(*e.outcome);
    }
    return j;
}

Json to_json(const EpisodeResult& r)
{
    Json collisions = Json::array();
    for (const auto& c : r.collisions)
        collisions.push_back(to_json(c));
    Json events = Json::array();
    for (const auto& e : r.events)
        events.push_back(to_json(e));
    Json poses = Json::object();
    for (const auto& [id, p] : r.final_poses)
        poses[id] = to_json(p);
    return Json{{"schema", kEpisodeSchema},
                {"scenario", r.scenario},
                {"archetype", r.archetype},
                {"success", r.success},
                {"failure", r.failure},
                {"ticks_taken", r.ticks_taken},
                {"optimal_ticks", r.optimal_ticks},
                {"collisions", std::move(collisions)},
                {"tokens_total", r.tokens_total},
                {"synth_calls", r.synth_calls},
                {"wall_time", r.wall_time},
                {"final_poses", std::move(poses)},
                {"events", std::move(events)}};
}

Json to_json(const MetricsSummary& m)
{
    return Json{{"episodes", m.episodes}, {"SR", m.sr},           {"SEL", m.sel},
                {"time_s", m.mean_time},  {"tokens", m.mean_tokens}, {"collisions", m.collisions},
                {"timeouts", m.timeouts}};
}

} // namespace cape::io
