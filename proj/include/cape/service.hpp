#pragma once
//
// In-memory interactive sessions over the simulator, and the HTTP+JSON front
// end the browser companion talks to.
//

#include "cape/sim.hpp"

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace cape::service {

using io::Json;

inline constexpr std::string_view kSceneSchema = "cape.scene/1";
inline constexpr std::string_view kUpdateSchema = "cape.update/1";
inline constexpr std::string_view kSessionLogSchema = "cape.session_log/1";

class SessionNotFound : public std::out_of_range
{
  public:
    using std::out_of_range::out_of_range;
};

class SessionTerminal : public std::logic_error
{
  public:
    using std::logic_error::logic_error;
};

class ValidationError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

struct Command
{
    enum class Kind
    {
        Instruction,
        Advance,
    };
    Kind kind = Kind::Advance;
    std::string text;
    std::string listener; ///< empty: the session's ego agent
    std::string speaker;
    geometry::Tick ticks = 0;

    friend bool operator==(const Command&, const Command&) = default;
};

Json to_json(const Command& command);
Command command_from_json(const Json& j);

class Session
{
  public:
    /// Throws sim::InvalidScenario or sim::ScenarioInfeasible.
    Session(std::string id, sim::Scenario scenario, sim::SimConfig config);

    const std::string& id() const { return id_; }
    /// Agent instructions go to by default: the first Cape robot.
    const std::string& ego() const { return ego_; }

    /// Stops motion, runs the pipeline from the current pose and commits the
    /// verified path. Throws ValidationError, SessionTerminal.
    Json instruct(const std::string& text, const std::string& listener = {}, const std::string& speaker = {});
    /// Throws ValidationError for ticks < 1 and SessionTerminal once finished.
    Json advance(geometry::Tick ticks);
    Json apply(const Command& command);

    // Readers see the state published after the last completed command.
    Json scene() const;
    Json events() const;
    Json log() const;
    /// Updates with sequence number >= since.
    std::vector<Json> updates(std::size_t since) const;
    /// Blocks until an update with sequence number >= since exists or the
    /// timeout passes; returns whether one exists.
    bool wait_for_update(std::size_t since, std::chrono::milliseconds timeout) const;
    sim::EpisodeResult result() const;
    sim::Status status() const;

  private:
    Json build_scene() const;
    void publish(const std::string& kind);

    std::string id_;
    std::string ego_;
    sim::Simulation sim_;
    planner::JointPlan plan_;
    geometry::Tick plan_tick_ = 0;
    std::optional<editverify::EditOutcome> last_outcome_;
    std::vector<Command> log_;

    mutable std::mutex write_;
    mutable std::mutex read_;
    mutable std::condition_variable changed_;
    Json scene_;
    Json events_;
    Json log_json_;
    std::vector<Json> updates_;
    sim::EpisodeResult result_;
    sim::Status status_ = sim::Status::Running;
};

/// Rebuilds a session from an exported log by re-applying its commands.
std::unique_ptr<Session> replay(const Json& log, const sim::SimConfig& config, const std::string& id = "replay");

class SessionManager
{
  public:
    explicit SessionManager(sim::SimConfig config = {});

    /// Body: {"scenario": {...}} or {"archetype": name, "index"?: i}, with an
    /// optional "seed" overriding the scenario seed.
    std::shared_ptr<Session> create(const Json& request);
    std::shared_ptr<Session> get(const std::string& id) const;
    bool remove(const std::string& id);
    std::vector<std::string> ids() const;
    const sim::SimConfig& config() const { return config_; }

  private:
    sim::SimConfig config_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t next_ = 1;
};

/// Routes:
///   POST /sessions                      create, returns {session, scene}
///   GET  /sessions                      list ids
///   GET  /sessions/{id}/scene
///   POST /sessions/{id}/instruction     {"text", "listener"?, "speaker"?}
///   POST /sessions/{id}/advance         {"ticks"}
///   GET  /sessions/{id}/events
///   GET  /sessions/{id}/log
///   GET  /sessions/{id}/updates?since=N polling fallback
///   GET  /sessions/{id}/stream?since=N  server-sent events
///   DELETE /sessions/{id}
class Server
{
  public:
    explicit Server(SessionManager& sessions);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Blocks until stop().
    bool listen(const std::string& host, int port);
    /// Returns the bound port, or -1.
    int bind_to_any_port(const std::string& host);
    /// Serves on a socket bound by bind_to_any_port; blocks until stop().
    bool listen_after_bind();
    void stop();
    bool is_running() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace cape::service
