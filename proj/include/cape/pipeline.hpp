#pragma once
//
// One CaPE step: joint plan, build the synthesizer request, synthesize an
// edit program, verify it line by line and return the final path.
//

#include "cape/editverify.hpp"
#include "cape/instructions.hpp"
#include "cape/io.hpp"
#include "cape/planner.hpp"
#include "cape/raster.hpp"

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cape::pipeline {

struct WorldAgent
{
    std::string id;
    geometry::AgentBody body;
    geometry::Pose pose; ///< current pose
    geometry::Point goal;
    std::optional<double> goal_theta;
    /// Path the agent is executing, offset so that tick 0 is now.
    std::optional<geometry::Track> known;
};

struct World
{
    geometry::ObstacleMap map;
    std::vector<WorldAgent> agents;
    double margin = 0.0;
    double inter_agent_margin = 0.0;

    const WorldAgent& agent(const std::string& id) const;
};

struct StepConfig
{
    planner::PlannerConfig planner;
    bool verify_enabled = true;
    bool render_map = false;
};

struct SynthesizerRequest
{
    std::string scene; ///< textual description of map, obstacles and agents
    editverify::EditSession session;
    std::string instruction;
    std::optional<Speaker> speaker;
    std::optional<Raster> rendered_map;

    /// The serialized form sent to remote synthesizers and used as the
    /// replay fixture key.
    io::Json to_json() const;
};

struct SynthesizerResponse
{
    std::string program_text;
    std::int64_t token_count = 0;
    double latency = 0.0; ///< seconds
};

class TransportError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class Timeout : public TransportError
{
  public:
    using TransportError::TransportError;
};

/// Implementations must be safe to call concurrently.
class Synthesizer
{
  public:
    virtual ~Synthesizer() = default;
    virtual SynthesizerResponse synthesize(const SynthesizerRequest& request) const = 0;
    virtual std::string name() const = 0;
};

/// Rule-based inverse of the instruction templates. Latency and tokens are
/// reported as zero so runs are reproducible byte for byte.
class ScriptedSynthesizer : public Synthesizer
{
  public:
    SynthesizerResponse synthesize(const SynthesizerRequest& request) const override;
    std::string name() const override { return "scripted"; }
};

/// Returns the same text for every request.
class FixedSynthesizer : public Synthesizer
{
  public:
    explicit FixedSynthesizer(std::string text) : text_(std::move(text)) {}
    SynthesizerResponse synthesize(const SynthesizerRequest&) const override { return {text_, 0, 0.0}; }
    std::string name() const override { return "fixed"; }

  private:
    std::string text_;
};

struct EndpointConfig
{
    std::string url;           ///< scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env;   ///< name of the environment variable holding the key
    double timeout_seconds = 60.0;
    std::string prompt = "simworld_edit";

    /// Reads {"url", "path"?, "model", "api_key_env"?, "timeout_seconds"?, "prompt"?}.
    static EndpointConfig from_json(const io::Json& j);
    static EndpointConfig load(const std::filesystem::path& file);
};

/// Chat-completion endpoint. Retries once on transport failure, then throws.
class ExternalSynthesizer : public Synthesizer
{
  public:
    explicit ExternalSynthesizer(EndpointConfig config) : config_(std::move(config)) {}
    SynthesizerResponse synthesize(const SynthesizerRequest& request) const override;
    std::string name() const override { return "external"; }

    std::string system_prompt() const;
    std::string user_prompt(const SynthesizerRequest& request) const;

  private:
    SynthesizerResponse call_once(const SynthesizerRequest& request) const;

    EndpointConfig config_;
};

/// Serves responses from fixture files named by the request's FNV-1a hash.
/// With an inner synthesizer, missing fixtures are recorded; without one they
/// are a TransportError.
class ReplaySynthesizer : public Synthesizer
{
  public:
    ReplaySynthesizer(std::filesystem::path dir, std::shared_ptr<const Synthesizer> record_from = nullptr);
    SynthesizerResponse synthesize(const SynthesizerRequest& request) const override;
    std::string name() const override { return "replay"; }

    static std::string fixture_key(const SynthesizerRequest& request);

  private:
    std::filesystem::path dir_;
    std::shared_ptr<const Synthesizer> inner_;
};

/// Text of a prompt asset by name (e.g. "simworld_edit"); throws for unknown names.
std::string prompt_asset(const std::string& name);
std::vector<std::string> prompt_asset_names();

/// Removes markdown code fences around a program.
std::string strip_fences(const std::string& text);

struct StepResult
{
    planner::JointPlan plan;
    SynthesizerResponse response;
    dsl::EditProgram program;
    editverify::EditOutcome outcome;
    bool degraded = false;
    std::string degradation; ///< why the program was replaced by the empty one
};

/// Builds the session (candidates and predictions) the synthesizer and
/// verifier see for `target`.
editverify::EditSession make_session(const World& world, const std::string& target, const planner::JointPlan& plan,
                                     bool verify_enabled);

std::string describe_scene(const editverify::EditSession& session);

/// Joint plan for `target` against everyone else in the world.
planner::JointPlan plan_for(const World& world, const std::string& target, const planner::PlannerConfig& config);

/// Throws planner::NoPathFound; synthesizer failures degrade instead.
StepResult cape_step(const World& world, const std::string& target, const std::string& instruction,
                     const Synthesizer& synthesizer, const StepConfig& config,
                     const std::optional<std::string>& speaker = std::nullopt);

struct GoalBelief
{
    std::vector<std::pair<std::string, geometry::Point>> candidates;
    std::vector<double> scores;
    std::string chosen;
};

/// Scores each goal by heading agreement over the last (up to) five poses,
/// normalized distance decrease over the whole trajectory, and a bonus of 1
/// when the instruction names the goal. Ties go to the smaller label.
GoalBelief infer_goal_heuristic(const std::vector<geometry::Point>& trajectory,
                                const std::vector<std::pair<std::string, geometry::Point>>& goals,
                                const std::optional<std::string>& instruction = std::nullopt);

} // namespace cape::pipeline
