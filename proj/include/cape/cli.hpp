#pragma once
//
// Operator commands behind the cape executable. Each command reads JSON or DSL
// inputs, calls into the library and writes deterministic JSON/CSV output.
//

#include "cape/datagen.hpp"
#include "cape/sim.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

namespace cape::cli {

using io::Json;

inline constexpr const char* kSessionFileSchema = "cape.edit_session/1";
inline constexpr const char* kReportSchema = "cape.eval_report/1";

/// Bad flag combination or unusable input; the message is shown to the operator.
class UsageError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

enum class Format
{
    Json,
    Csv,
};

struct RunConfig
{
    std::string subcommand;
    std::filesystem::path map;          ///< plan: bare map file
    std::filesystem::path scenario;     ///< plan/simulate: scenario file
    std::filesystem::path scenario_dir; ///< eval: every *.json inside, by name
    std::string suite;                  ///< eval: generated suite instead of a directory
    std::size_t count = 20;             ///< eval: generated suite size
    std::filesystem::path session;      ///< edit/verify: output of plan
    std::filesystem::path program;      ///< edit/verify: DSL file
    std::string agent;                  ///< plan: target agent of a scenario
    std::optional<geometry::Pose> start;
    std::optional<geometry::Point> goal;
    geometry::AgentBody body{10.0, 5.0};
    std::optional<std::uint64_t> seed;
    std::size_t k = 3;
    std::optional<double> margin;
    bool single_path = false;
    bool no_verify = false;
    std::string synth = "scripted"; ///< scripted | external
    std::filesystem::path endpoint_config;
    std::filesystem::path out;
    Format format = Format::Json;
    int port = 8080;
    std::size_t maps = 10;          ///< datagen
    std::size_t scenarios_per_map = 5;
    bool rasters = false;
    std::size_t threads = 0; ///< eval workers; 0 = hardware concurrency

    /// Throws UsageError for missing seeds, conflicting synthesizer flags and
    /// missing inputs.
    void validate() const;
};

Json to_json(const editverify::EditSession& session);
editverify::EditSession session_from_json(const Json& j);

/// Synthesizer named by the config; "external" reads the endpoint file.
std::shared_ptr<const pipeline::Synthesizer> make_synthesizer(const RunConfig& config);
sim::SimConfig sim_config(const RunConfig& config);

/// Scenario set for eval: the directory's files sorted by name, or a generated
/// suite (parking, household, carry, crossing, crossing3, adversarial).
std::vector<sim::Scenario> resolve_scenarios(const RunConfig& config);

/// Wraps a synthesizer and appends an edit that drives the robot off the map.
/// The verifier rejects that line; without verification it causes a collision.
class HostileSuffixSynthesizer : public pipeline::Synthesizer
{
  public:
    explicit HostileSuffixSynthesizer(std::shared_ptr<const pipeline::Synthesizer> inner) : inner_(std::move(inner)) {}
    pipeline::SynthesizerResponse synthesize(const pipeline::SynthesizerRequest& request) const override;
    std::string name() const override { return "hostile:" + inner_->name(); }

  private:
    std::shared_ptr<const pipeline::Synthesizer> inner_;
};

// Commands write their main document to `out` (stdout in the tool) and any
// files under config.out. They return the process exit code.
int cmd_plan(const RunConfig& config, std::ostream& out);
int cmd_edit(const RunConfig& config, std::ostream& out);
int cmd_verify(const RunConfig& config, std::ostream& out);
int cmd_simulate(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_datagen(const RunConfig& config, std::ostream& out);
/// Blocks until the server stops.
int cmd_serve(const RunConfig& config, std::ostream& out);

/// Dispatches on config.subcommand after validate().
int run(const RunConfig& config, std::ostream& out);

/// Report as written by cmd_eval: {"schema", "suite", "metrics", "config"}.
Json eval_report(const std::string& suite, const sim::MetricsSummary& metrics, const RunConfig& config);
/// Header plus one row: suite,episodes,SR,SEL,Time(s),Token.
std::string eval_csv(const std::string& suite, const sim::MetricsSummary& metrics);

} // namespace cape::cli
