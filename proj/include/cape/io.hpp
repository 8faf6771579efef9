#pragma once
//
// JSON encoding of the shared data types. Objects keep insertion order and
// numbers print in shortest round-trip form, so equal values always encode to
// equal bytes.
//

#include "cape/dsl.hpp"
#include "cape/editverify.hpp"
#include "cape/geometry.hpp"
#include "cape/planner.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace cape::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kMapSchema = "cape.map/1";
inline constexpr const char* kOutcomeSchema = "cape.edit_outcome/1";
inline constexpr const char* kCandidatesSchema = "cape.candidates/1";

/// Malformed document; the message names the offending field.
class FormatError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

Json to_json(const geometry::Point& p);
Json to_json(const geometry::Pose& p);
Json to_json(const geometry::Rect& r);
Json to_json(const geometry::ObstacleMap& map);
Json to_json(const geometry::TimedPath& path);
Json to_json(const geometry::Track& track);
Json to_json(const geometry::AgentBody& body);
Json to_json(const planner::HomotopySignature& sig);
Json to_json(const planner::CandidateSet& set);
Json to_json(const planner::JointPlan& plan);
Json to_json(const dsl::ParseError& error);
Json to_json(const editverify::Verdict& verdict);
Json to_json(const editverify::LineResult& result);
Json to_json(const editverify::EditOutcome& outcome);

geometry::Point point_from_json(const Json& j);
geometry::Pose pose_from_json(const Json& j);
geometry::Rect rect_from_json(const Json& j);
geometry::ObstacleMap map_from_json(const Json& j);
geometry::TimedPath path_from_json(const Json& j);
geometry::Track track_from_json(const Json& j);
geometry::AgentBody body_from_json(const Json& j);
planner::CandidateSet candidates_from_json(const Json& j);

/// Field access that reports the missing or mistyped key.
const Json& field(const Json& j, const char* key);
double number(const Json& j, const char* key);
std::int64_t integer(const Json& j, const char* key);
std::string text(const Json& j, const char* key);

/// Reads and parses a file; errors carry the path (and parser position).
Json read_json(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
/// Writes atomically enough for reports: whole buffer, then close.
void write_text(const std::filesystem::path& path, const std::string& content);

/// Compact single-line encoding used for JSON-lines output.
std::string dump_line(const Json& j);
/// Indented encoding used for standalone files (ends with a newline).
std::string dump_pretty(const Json& j);

} // namespace cape::io
