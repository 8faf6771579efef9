#include "cape/service.hpp"

#include <httplib.h>

#include <atomic>

namespace cape::service {

using geometry::Tick;

Json to_json(const Command& c)
{
    if (c.kind == Command::Kind::Advance)
        return {{"type", "advance"}, {"ticks", c.ticks}};
    return {{"type", "instruction"}, {"text", c.text}, {"listener", c.listener}, {"speaker", c.speaker}};
}

Command command_from_json(const Json& j)
{
    Command c;
    const std::string type = io::text(j, "type");
    if (type == "advance") {
        c.kind = Command::Kind::Advance;
        c.ticks = io::integer(j, "ticks");
    } else if (type == "instruction") {
        c.kind = Command::Kind::Instruction;
        c.text = io::text(j, "text");
        c.listener = j.value("listener", "");
        c.speaker = j.value("speaker", "");
    } else {
        throw io::FormatError("type: expected \"instruction\" or \"advance\", got \"" + type + "\"");
    }
    return c;
}

namespace {

std::string pick_ego(const sim::Scenario& s)
{
    for (const auto& a : s.agents)
        if (a.policy == sim::Policy::Cape && a.role == sim::Role::Robot)
            return a.id;
    return s.agents.empty() ? std::string() : s.agents.front().id;
}

sim::SimConfig with_default_synth(sim::SimConfig config)
{
    if (!config.synthesizer)
        config.synthesizer = std::make_shared<pipeline::ScriptedSynthesizer>();
    return config;
}

} // namespace

Session::Session(std::string id, sim::Scenario scenario, sim::SimConfig config)
    : id_(std::move(id)), ego_(pick_ego(scenario)), sim_(std::move(scenario), with_default_synth(std::move(config)))
{
    if (!ego_.empty())
        plan_ = sim_.preview_plan(ego_);
    publish("created");
}

Json Session::build_scene() const
{
    const auto& s = sim_.scenario();
    Json agents = Json::array();
    for (const auto& a : s.agents) {
        const auto& t = sim_.track(a.id);
        Json item{{"id", a.id},
                  {"role", sim::to_string(a.role)},
                  {"policy", sim::to_string(sim_.policy(a.id))},
                  {"body", io::to_json(a.body)},
                  {"pose", io::to_json(sim_.pose(a.id))},
                  {"goal", io::to_json(a.goal)},
                  {"path", io::to_json(geometry::remaining_path(t.path, a.body, sim_.now() + t.offset))}};
        if (a.carry)
            item["carry"] = {{"length", a.carry->length}, {"radius", a.carry->radius}};
        agents.push_back(std::move(item));
    }
    Json predicted = Json::object();
    for (const auto& [id, track] : plan_.predicted_others)
        predicted[id] = io::to_json(track);
    Json collisions = Json::array();
    for (const auto& c : sim_.collisions())
        collisions.push_back(io::to_json(c));
    return Json{{"schema", kSceneSchema},
                {"scenario", s.name},
                {"archetype", s.archetype},
                {"tick", sim_.now()},
                {"status", sim::to_string(sim_.status())},
                {"failure", sim_.result().failure},
                {"ego", ego_},
                {"map", io::to_json(s.map)},
                {"agents", std::move(agents)},
                {"plan_tick", plan_tick_},
                {"candidates", io::to_json(plan_.self_candidates)},
                {"predicted", std::move(predicted)},
                {"last_outcome", last_outcome_ ? io::to_json(*last_outcome_) : Json()},
                {"collisions", std::move(collisions)}};
}

void Session::publish(const std::string& kind)
{
    Json scene = build_scene();
    Json events = Json::array();
    for (const auto& e : sim_.events())
        events.push_back(io::to_json(e));
    Json commands = Json::array();
    for (const auto& c : log_)
        commands.push_back(to_json(c));
    Json log{{"schema", kSessionLogSchema},
             {"session", id_},
             {"scenario", io::to_json(sim_.scenario())},
             {"commands", std::move(commands)}};
    auto result = sim_.result();
    {
        std::lock_guard lock(read_);
        updates_.push_back(Json{{"schema", kUpdateSchema}, {"seq", updates_.size()}, {"kind", kind}, {"scene", scene}});
        scene_ = std::move(scene);
        events_ = std::move(events);
        log_json_ = std::move(log);
        result_ = std::move(result);
        status_ = sim_.status();
    }
    changed_.notify_all();
}

Json Session::instruct(const std::string& text, const std::string& listener, const std::string& speaker)
{
    std::lock_guard lock(write_);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ValidationError("instruction text must not be empty");
    if (sim_.finished())
        throw SessionTerminal("session " + id_ + " has finished (" + std::string(sim::to_string(sim_.status())) + ")");
    const std::string who = listener.empty() ? ego_ : listener;
    try {
        sim_.track(who);
    } catch (const std::exception&) {
        throw ValidationError("unknown listener '" + who + "'");
    }
    const auto& ev = sim_.instruct(who, speaker, text);
    if (ev.action == sim::EventAction::Replanned && who == ego_) {
        if (ev.candidates)
            plan_.self_candidates = *ev.candidates;
        plan_tick_ = sim_.now();
        last_outcome_ = ev.outcome;
    }
    Json reply{{"session", id_},
               {"tick", sim_.now()},
               {"listener", who},
               {"action", sim::to_string(ev.action)},
               {"program", ev.program},
               {"verdicts", ev.outcome ? io::to_json(*ev.outcome)["lines"] : Json::array()},
               {"path", io::to_json(geometry::remaining_path(sim_.track(who).path, sim_.scenario().agent(who).body,
                                                             sim_.now() + sim_.track(who).offset))},
               {"tokens", ev.tokens},
               {"degraded", ev.degraded},
               {"degradation", ev.degradation}};
    log_.push_back(Command{Command::Kind::Instruction, text, listener, speaker, 0});
    publish("instruction");
    return reply;
}

Json Session::advance(Tick ticks)
{
    std::lock_guard lock(write_);
    if (ticks < 1)
        throw ValidationError("ticks must be at least 1");
    if (sim_.finished())
        throw SessionTerminal("session " + id_ + " has finished (" + std::string(sim::to_string(sim_.status())) + ")");
    const std::size_t events_before = sim_.events().size();
    const Tick done = sim_.advance(ticks);
    Json poses = Json::object();
    for (const auto& a : sim_.scenario().agents)
        poses[a.id] = io::to_json(sim_.pose(a.id));
    Json collisions = Json::array();
    for (const auto& c : sim_.collisions())
        collisions.push_back(io::to_json(c));
    Json events = Json::array();
    for (std::size_t i = events_before; i < sim_.events().size(); ++i)
        events.push_back(io::to_json(sim_.events()[i]));
    log_.push_back(Command{Command::Kind::Advance, "", "", "", ticks});
    publish("advance");
    return Json{{"session", id_},
                {"tick", sim_.now()},
                {"advanced", done},
                {"status", sim::to_string(sim_.status())},
                {"failure", sim_.result().failure},
                {"success", sim_.status() == sim::Status::Success},
                {"poses", std::move(poses)},
                {"collisions", std::move(collisions)},
                {"events", std::move(events)}};
}

Json Session::apply(const Command& c)
{
    if (c.kind == Command::Kind::Advance)
        return advance(c.ticks);
    return instruct(c.text, c.listener, c.speaker);
}

Json Session::scene() const
{
    std::lock_guard lock(read_);
    return scene_;
}

Json Session::events() const
{
    std::lock_guard lock(read_);
    return events_;
}

Json Session::log() const
{
    std::lock_guard lock(read_);
    return log_json_;
}

std::vector<Json> Session::updates(std::size_t since) const
{
    std::lock_guard lock(read_);
    if (since >= updates_.size())
        return {};
    return {updates_.begin() + static_cast<std::ptrdiff_t>(since), updates_.end()};
}

bool Session::wait_for_update(std::size_t since, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(read_);
    return changed_.wait_for(lock, timeout, [&] { return updates_.size() > since; });
}

sim::EpisodeResult Session::result() const
{
    std::lock_guard lock(read_);
    return result_;
}

sim::Status Session::status() const
{
    std::lock_guard lock(read_);
    return status_;
}

std::unique_ptr<Session> replay(const Json& log, const sim::SimConfig& config, const std::string& id)
{
    if (io::text(log, "schema") != kSessionLogSchema)
        throw io::FormatError("schema: expected " + std::string(kSessionLogSchema));
    auto session = std::make_unique<Session>(id, io::scenario_from_json(io::field(log, "scenario")), config);
    const auto& commands = io::field(log, "commands");
    if (!commands.is_array())
        throw io::FormatError("commands: expected an array");
    for (const auto& c : commands)
        session->apply(command_from_json(c));
    return session;
}

SessionManager::SessionManager(sim::SimConfig config) : config_(with_default_synth(std::move(config))) {}

std::shared_ptr<Session> SessionManager::create(const Json& request)
{
    if (!request.is_object())
        throw ValidationError("request body must be a JSON object");
    if (request.contains("seed") && !(request["seed"].is_number_integer() && request["seed"].get<std::int64_t>() >= 0))
        throw ValidationError("seed must be a non-negative integer");
    sim::Scenario scenario;
    if (request.contains("scenario")) {
        scenario = io::scenario_from_json(request["scenario"]);
    } else if (request.contains("archetype")) {
        const std::string name = io::text(request, "archetype");
        const auto index = request.contains("index") ? io::integer(request, "index") : 0;
        if (index < 0 || index > 1000)
            throw ValidationError("index must be in [0, 1000]");
        const std::uint64_t seed = request.contains("seed") ? request["seed"].get<std::uint64_t>() : 0;
        try {
            scenario = sim::make_archetype_scenarios(name, static_cast<std::size_t>(index) + 1, seed).back();
        } catch (const std::invalid_argument& e) {
            throw ValidationError(e.what());
        }
    } else {
        throw ValidationError("request needs either \"scenario\" or \"archetype\"");
    }
    if (request.contains("seed"))
        scenario.seed = request["seed"].get<std::uint64_t>();
    std::string id;
    {
        std::unique_lock lock(mutex_);
        id = "s" + std::to_string(next_++);
    }
    auto session = std::make_shared<Session>(id, std::move(scenario), config_);
    std::unique_lock lock(mutex_);
    sessions_[id] = session;
    return session;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const
{
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end())
        throw SessionNotFound("no session '" + id + "'");
    return it->second;
}

bool SessionManager::remove(const std::string& id)
{
    std::unique_lock lock(mutex_);
    return sessions_.erase(id) > 0;
}

std::vector<std::string> SessionManager::ids() const
{
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_)
        out.push_back(id);
    return out;
}

struct Server::Impl
{
    SessionManager& sessions;
    httplib::Server http;
    std::atomic<bool> stopping{false};

    explicit Impl(SessionManager& s) : sessions(s) { routes(); }

    static void reply(httplib::Response& res, int status, const Json& body)
    {
        res.status = status;
        res.set_content(io::dump_line(body), "application/json");
    }

    static void error(httplib::Response& res, int status, const std::string& kind, const std::string& message)
    {
        reply(res, status, Json{{"error", kind}, {"message", message}});
    }

    template <class F>
    static void guarded(httplib::Response& res, F&& f)
    {
        try {
            f();
        } catch (const SessionNotFound& e) {
            error(res, 404, "SessionNotFound", e.what());
        } catch (const SessionTerminal& e) {
            error(res, 409, "SessionTerminal", e.what());
        } catch (const sim::ScenarioInfeasible& e) {
            error(res, 422, "ScenarioInfeasible", e.what());
        } catch (const planner::NoPathFound& e) {
            error(res, 422, "NoPathFound", e.what());
        } catch (const sim::InvalidScenario& e) {
            error(res, 400, "InvalidScenario", e.what());
        } catch (const io::FormatError& e) {
            error(res, 400, "FormatError", e.what());
        } catch (const ValidationError& e) {
            error(res, 400, "ValidationError", e.what());
        } catch (const Json::exception& e) {
            error(res, 400, "FormatError", e.what());
        } catch (const std::exception& e) {
            error(res, 500, "InternalError", e.what());
        }
    }

    static Json body(const httplib::Request& req)
    {
        if (req.body.empty())
            return Json::object();
        try {
            return Json::parse(req.body);
        } catch (const Json::parse_error& e) {
            throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
        }
    }

    static std::size_t since(const httplib::Request& req)
    {
        if (!req.has_param("since"))
            return 0;
        try {
            return std::stoull(req.get_param_value("since"));
        } catch (const std::exception&) {
            throw ValidationError("since must be a non-negative integer");
        }
    }

    void routes()
    {
        http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = sessions.create(body(req));
                reply(res, 201, Json{{"session", s->id()}, {"scene", s->scene()}});
            });
        });
        http.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, Json{{"sessions", sessions.ids()}}); });
        });
        http.Get(R"(/sessions/([^/]+)/scene)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, sessions.get(req.matches[1])->scene()); });
        });
        http.Post(R"(/sessions/([^/]+)/instruction)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = sessions.get(req.matches[1]);
                const Json b = body(req);
                if (!b.contains("text") || !b["text"].is_string())
                    throw ValidationError("text: expected a string");
                reply(res, 200, s->instruct(b["text"], b.value("listener", ""), b.value("speaker", "")));
            });
        });
        http.Post(R"(/sessions/([^/]+)/advance)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = sessions.get(req.matches[1]);
                const Json b = body(req);
                if (!b.contains("ticks") || !b["ticks"].is_number_integer())
                    throw ValidationError("ticks: expected an integer");
                reply(res, 200, s->advance(b["ticks"].get<Tick>()));
            });
        });
        http.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, Json{{"events", sessions.get(req.matches[1])->events()}}); });
        });
        http.Get(R"(/sessions/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, sessions.get(req.matches[1])->log()); });
        });
        http.Get(R"(/sessions/([^/]+)/updates)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                reply(res, 200, Json{{"updates", sessions.get(req.matches[1])->updates(since(req))}});
            });
        });
        http.Get(R"(/sessions/([^/]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = sessions.get(req.matches[1]);
                auto next = std::make_shared<std::size_t>(since(req));
                res.set_chunked_content_provider("text/event-stream", [this, s, next](std::size_t, httplib::DataSink& sink) {
                    while (!stopping && sink.is_writable()) {
                        const auto batch = s->updates(*next);
                        for (const auto& u : batch) {
                            const std::string frame =
                                "id: " + std::to_string(*next) + "\ndata: " + io::dump_line(u) + "\n\n";
                            if (!sink.write(frame.data(), frame.size()))
                                return false;
                            ++*next;
                        }
                        if (!batch.empty())
                            return true;
                        s->wait_for_update(*next, std::chrono::milliseconds(200));
                    }
                    sink.done();
                    return true;
                });
            });
        });
        http.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (!sessions.remove(req.matches[1]))
                    throw SessionNotFound("no session '" + std::string(req.matches[1]) + "'");
                reply(res, 200, Json{{"deleted", std::string(req.matches[1])}});
            });
        });
    }
};

Server::Server(SessionManager& sessions) : impl_(std::make_unique<Impl>(sessions)) {}

Server::~Server() { stop(); }

bool Server::listen(const std::string& host, int port) { return impl_->http.listen(host, port); }

int Server::bind_to_any_port(const std::string& host) { return impl_->http.bind_to_any_port(host); }

bool Server::listen_after_bind() { return impl_->http.listen_after_bind(); }

void Server::stop()
{
    impl_->stopping = true;
    if (impl_->http.is_running())
        impl_->http.stop();
}

bool Server::is_running() const { return impl_->http.is_running(); }

} // namespace cape::service
