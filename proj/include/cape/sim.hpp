#pragma once
//
// Episodic multi-agent simulator. Agents follow their current timed paths;
// when two come within the trigger distance an instruction is exchanged and a
// Cape listener edits its plan through the pipeline.
//

#include "cape/io.hpp"
#include "cape/pipeline.hpp"

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cape::sim {

using geometry::Point;
using geometry::Pose;
using geometry::Tick;

enum class Policy
{
    PlannerOnly,
    Cape,
};

enum class Role
{
    Robot,
    ScriptedHuman,
};

std::string_view to_string(Policy policy);
std::string_view to_string(Role role);

/// Jointly carried object: two discs at +-length/2 along the heading of the
/// agent pose, which is the object's centre.
struct Carry
{
    double length = 0.85;
    double radius = 0.2;

    friend bool operator==(const Carry&, const Carry&) = default;
};

struct AgentSpec
{
    std::string id;
    Pose start;
    Point goal;
    std::optional<double> goal_theta;
    geometry::AgentBody body;
    Policy policy = Policy::Cape;
    Role role = Role::Robot;
    std::optional<Carry> carry;

    friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

/// Instruction issued at a fixed tick regardless of proximity.
struct ScheduledInstruction
{
    Tick tick = 0;
    std::string listener;
    std::string speaker; ///< may name no agent (e.g. the carrying human)
    std::string text;
    /// Optional hidden intent used for reporting (e.g. intended candidate side).
    std::string intent;

    friend bool operator==(const ScheduledInstruction&, const ScheduledInstruction&) = default;
};

class InvalidScenario : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

class ScenarioInfeasible : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class EmptyResultSet : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr std::string_view kScenarioSchema = "cape.scenario/1";
inline constexpr std::string_view kEpisodeSchema = "cape.episode/1";

struct Scenario
{
    std::string name;
    std::string archetype; ///< parking | household | carry | crossing
    geometry::ObstacleMap map;
    std::vector<AgentSpec> agents;
    double trigger_distance = 5.0;
    Tick cooldown = 3;
    Tick max_ticks = 1000;
    std::uint64_t seed = 0;
    double margin = 0.0;
    double inter_agent_margin = 0.0;
    double meters_per_unit = 1.0; ///< reporting only
    std::vector<ScheduledInstruction> schedule;

    /// Throws InvalidScenario.
    void validate() const;
    const AgentSpec& agent(const std::string& id) const;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct SimConfig
{
    planner::PlannerConfig planner;
    bool verify_enabled = true;
    bool render_map = false;
    /// Applied to every robot-role agent when set.
    std::optional<Policy> policy_override;
    /// Defaults to the scripted synthesizer.
    std::shared_ptr<const pipeline::Synthesizer> synthesizer;
};

struct Collision
{
    Tick tick = 0;
    std::string agent;
    std::string other; ///< agent id, obstacle label or "boundary"

    friend bool operator==(const Collision&, const Collision&) = default;
};

enum class EventAction
{
    Replanned, ///< listener ran the pipeline and adopted its output
    PassThrough,
    Ignored, ///< planner-only listener
};

std::string_view to_string(EventAction action);

struct EventRecord
{
    Tick tick = 0;
    std::string speaker;
    std::string listener;
    std::string instruction;
    EventAction action = EventAction::PassThrough;
    bool scheduled = false;
    std::string program;
    std::optional<editverify::EditOutcome> outcome;
    std::optional<planner::CandidateSet> candidates;
    bool degraded = false;
    std::string degradation;
    std::int64_t tokens = 0;
    double latency = 0.0;

    friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

enum class Status
{
    Running,
    Success,
    Failure,
};

std::string_view to_string(Status status);

struct EpisodeResult
{
    std::string scenario;
    std::string archetype;
    bool success = false;
    std::string failure; ///< "collision", "timeout" or empty
    Tick ticks_taken = 0;
    Tick optimal_ticks = 1;
    std::vector<Collision> collisions;
    std::vector<EventRecord> events;
    std::int64_t tokens_total = 0;
    std::int64_t synth_calls = 0;
    double wall_time = 0.0; ///< summed synthesizer latency
    std::vector<std::pair<std::string, Pose>> final_poses;

    friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

class Simulation
{
  public:
    /// Plans every agent from its start (single-agent plans) and evaluates tick 0.
    /// Throws ScenarioInfeasible when an initial plan cannot be found.
    Simulation(Scenario scenario, SimConfig config);

    const Scenario& scenario() const { return scenario_; }
    const SimConfig& config() const { return config_; }
    Tick now() const { return now_; }
    Status status() const { return status_; }
    bool finished() const { return status_ != Status::Running; }

    /// Advances one tick (no-op once finished).
    void step();
    /// Steps until finished or `ticks` have elapsed; returns ticks advanced.
    Tick advance(Tick ticks);
    void run();

    /// Instruction from outside the proximity loop. The speaker may be empty
    /// or name a non-agent. Throws std::invalid_argument for an unknown
    /// listener or empty text.
    const EventRecord& instruct(const std::string& listener, const std::string& speaker, const std::string& text);

    /// Decision tree of a speaking agent: "go ahead" when no conflict is
    /// predicted between the pair, backout when the listener stands within
    /// reach of the speaker's remaining path, wait otherwise.
    std::string negotiation_text(const std::string& speaker, const std::string& listener) const;
    /// Which of two agents is asked to give way.
    std::string choose_listener(const std::string& a, const std::string& b) const;
    bool predicted_conflict(const std::string& a, const std::string& b) const;

    /// The joint plan an instruction to `listener` would start from at the
    /// current tick.
    planner::JointPlan preview_plan(const std::string& listener) const;

    Pose pose(const std::string& id) const;
    const geometry::Track& track(const std::string& id) const;
    Policy policy(const std::string& id) const;
    const std::vector<EventRecord>& events() const { return result_.events; }
    const std::vector<Collision>& collisions() const { return result_.collisions; }
    Tick optimal_ticks() const { return result_.optimal_ticks; }
    /// World snapshot handed to the pipeline at the current tick.
    pipeline::World world() const;

    EpisodeResult result() const;

  private:
    std::size_t index(const std::string& id) const;
    planner::PlannerConfig planner_config(const std::string& listener) const;
    void evaluate();
    bool check_collisions();
    bool at_goal(std::size_t i) const;
    const EventRecord& handle(const std::string& listener, const std::string& speaker, const std::string& text,
                              bool scheduled);

    Scenario scenario_;
    SimConfig config_;
    std::vector<geometry::Track> tracks_;
    std::vector<Policy> policies_;
    std::vector<Tick> last_event_; ///< per unordered pair, -1 when none
    Tick now_ = 0;
    Status status_ = Status::Running;
    EpisodeResult result_;
};

EpisodeResult run_episode(const Scenario& scenario, const SimConfig& config);

struct MetricsSummary
{
    std::size_t episodes = 0;
    double sr = 0.0;
    double sel = 0.0;
    double mean_time = 0.0;   ///< seconds per synthesizer call
    double mean_tokens = 0.0; ///< per synthesizer call
    std::int64_t collisions = 0;
    std::int64_t timeouts = 0;

    friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

/// Throws EmptyResultSet for an empty input.
MetricsSummary compute_metrics(std::span<const EpisodeResult> results);

/// archetype: parking, household, carry or crossing. Carry always yields its
/// four fixed layouts (count is ignored beyond selecting how many to return,
/// cycling through the four).
std::vector<Scenario> make_archetype_scenarios(const std::string& archetype, std::size_t count, std::uint64_t seed);
/// Crossing scenarios with a fixed number of agents (2 or 3).
std::vector<Scenario> make_crossing_scenarios(std::size_t agents, std::size_t count, std::uint64_t seed);
const std::vector<std::string>& archetype_names();

} // namespace cape::sim

namespace cape::io {

Json to_json(const sim::AgentSpec& agent);
Json to_json(const sim::Scenario& scenario);
sim::Scenario scenario_from_json(const Json& j);
sim::Scenario load_scenario(const std::filesystem::path& file);
Json to_json(const sim::Collision& collision);
Json to_json(const sim::EventRecord& event);
Json to_json(const sim::EpisodeResult& result);
Json to_json(const sim::MetricsSummary& summary);

} // namespace cape::io
