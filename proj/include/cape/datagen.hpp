#pragma once
//
// Synthetic training data: random maps, sampled two-agent scenarios, and
// templated instructions paired with ground-truth edit programs.
//

#include "cape/editverify.hpp"
#include "cape/instructions.hpp"
#include "cape/io.hpp"
#include "cape/rng.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cape::datagen {

using geometry::ObstacleMap;

enum class StructuredKind
{
    None,
    Corridor,
    Crossroad,
};

std::string_view to_string(StructuredKind kind);
std::optional<StructuredKind> structured_kind_from_string(std::string_view name);

class GenerationFailed : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct MapGenConfig
{
    double width = 1000.0;
    double height = 1000.0;
    double min_size = 20.0;
    double max_size = 50.0;
    int clutter_level = 1; ///< 1..3
    /// Mean obstacle count per clutter level; the drawn count is mean +- spread.
    std::array<int, 3> counts{4, 8, 14};
    int count_spread = 2;
    StructuredKind structured = StructuredKind::None;
    /// Free space must stay connected for a disc of this radius.
    double agent_radius = 10.0;
    int max_rejections = 500;

    /// Throws std::invalid_argument.
    void validate() const;
};

/// Deterministic per seed. Sampled obstacles are named "obstacle N"; the walls
/// of structured kinds are named "wall N" and are not bound by the size range.
ObstacleMap gen_map(const MapGenConfig& config, std::uint64_t seed);

/// Grid flood fill at half the agent radius; conservative near narrow gaps.
bool free_space_connected(const ObstacleMap& map, double agent_radius);

inline constexpr std::string_view kRecordSchema = "cape.record/1";
inline constexpr std::string_view kManifestSchema = "cape.dataset_manifest/1";

struct AgentSetup
{
    geometry::Pose start;
    geometry::Point goal;
    geometry::AgentBody body;

    friend bool operator==(const AgentSetup&, const AgentSetup&) = default;
};

struct DatasetRecord
{
    std::string map_id;
    int clutter_level = 1;
    StructuredKind structured = StructuredKind::None;
    std::size_t scenario = 0;
    pipeline::Behavior behavior = pipeline::Behavior::Movement;
    AgentSetup robot;
    AgentSetup human;
    double margin = 0.0;
    double inter_agent_margin = 0.0;
    planner::CandidateSet candidates;
    geometry::Track human_track;
    std::string instruction;
    std::vector<dsl::Statement> gt_program;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

/// Session the record's program is meant for (robot is the target).
editverify::EditSession record_session(const ObstacleMap& map, const DatasetRecord& record);
/// The human, at its tick-0 position, is the one giving the instruction.
pipeline::Speaker record_speaker(const DatasetRecord& record);

struct RecordConfig
{
    std::string map_id = "map";
    int clutter_level = 1;
    StructuredKind structured = StructuredKind::None;
    std::size_t scenarios = 5;
    geometry::AgentBody robot{10.0, 5.0};
    geometry::AgentBody human{10.0, 5.0};
    double margin = 2.0;
    double inter_agent_margin = 0.0;
    std::size_t k = 3;
    int attempts = 20;
    /// Optional rewrite of the instruction text (e.g. a paraphrasing model).
    /// Records whose rewritten text no longer resolves to the same program
    /// are dropped.
    std::function<std::string(const std::string&)> paraphrase;
};

/// One record per (scenario, behavior) that could be realized. Every emitted
/// program applies with all lines accepted; combinations that cannot be
/// realized within the attempt budget are skipped.
std::vector<DatasetRecord> gen_records(const ObstacleMap& map, std::uint64_t seed,
                                       const std::vector<pipeline::Behavior>& behaviors, const RecordConfig& config = {});

/// Random statement over plausible argument ranges, for parser round trips.
dsl::Statement random_statement(Rng& rng, const std::vector<std::string>& agents = {"robot"});

struct DatasetConfig
{
    std::size_t maps = 10;
    std::vector<int> clutter_levels{1, 2, 3};
    /// Fraction of maps with a structured layout (alternating corridor/crossroad).
    double structured_fraction = 0.2;
    MapGenConfig map;
    RecordConfig records;
    std::vector<pipeline::Behavior> behaviors = pipeline::generated_behaviors();
};

struct Dataset
{
    std::vector<std::pair<std::string, ObstacleMap>> maps;
    std::vector<DatasetRecord> records;

    const ObstacleMap& map(const std::string& id) const;
};

/// Map i uses derive_seed(seed, "map/i"); output order is fixed by map index.
Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed);

struct ExportOptions
{
    bool rasters = false;
    int raster_side = 256;
};

/// Writes records.jsonl, maps.jsonl, manifest.json and optionally one PPM per
/// record under rasters/. Returns the written paths. Throws std::invalid_argument
/// for an empty record list and std::runtime_error naming the path on IO errors.
std::vector<std::filesystem::path> export_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                                                  const ExportOptions& options = {});

io::Json manifest(const Dataset& dataset);

} // namespace cape::datagen

namespace cape::io {

Json to_json(const datagen::DatasetRecord& record);
datagen::DatasetRecord record_from_json(const Json& j);

} // namespace cape::io
