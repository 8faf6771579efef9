#pragma once
//
// Applies edit programs to a candidate path, checking every line against
// static obstacles and the other agents' timed paths before committing it.
//

#include "cape/dsl.hpp"
#include "cape/geometry.hpp"
#include "cape/planner.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cape::editverify {

using geometry::AgentBody;
using geometry::Tick;
using geometry::TimedPath;
using geometry::Track;

struct StaticCollision
{
    std::string blocker; ///< obstacle name, "unreachable[i]" or "boundary"

    friend bool operator==(const StaticCollision&, const StaticCollision&) = default;
};

struct AgentConflict
{
    std::string other;
    Tick tick = 0;

    friend bool operator==(const AgentConflict&, const AgentConflict&) = default;
};

struct EndpointMoved
{
    friend bool operator==(const EndpointMoved&, const EndpointMoved&) = default;
};

struct IndexOutOfRange
{
    std::int64_t step = 0;
    std::size_t len = 0;

    friend bool operator==(const IndexOutOfRange&, const IndexOutOfRange&) = default;
};

struct BadIndex
{
    std::int64_t index = 0;
    std::size_t count = 0;

    friend bool operator==(const BadIndex&, const BadIndex&) = default;
};

using RejectReason = std::variant<StaticCollision, AgentConflict, EndpointMoved, IndexOutOfRange, BadIndex>;

std::string_view reason_kind(const RejectReason& reason);
std::string describe(const RejectReason& reason);

enum class IgnoreReason
{
    WrongAgent,
    ExtraSelection,
    DefaultedSelection,
};

std::string_view to_string(IgnoreReason reason);

struct Accepted
{
    friend bool operator==(const Accepted&, const Accepted&) = default;
};

struct Rejected
{
    RejectReason reason;

    friend bool operator==(const Rejected&, const Rejected&) = default;
};

struct Ignored
{
    IgnoreReason reason;

    friend bool operator==(const Ignored&, const Ignored&) = default;
};

struct Invalid
{
    dsl::ParseError error;

    friend bool operator==(const Invalid&, const Invalid&) = default;
};

using Verdict = std::variant<Accepted, Rejected, Ignored, Invalid>;

std::string_view verdict_kind(const Verdict& verdict);

struct LineResult
{
    std::size_t line = 0; ///< source line; 0 for the synthetic defaulted selection
    std::optional<dsl::Statement> statement;
    Verdict verdict;

    friend bool operator==(const LineResult&, const LineResult&) = default;
};

struct EditOutcome
{
    TimedPath final_path;
    std::vector<LineResult> line_results;
    std::size_t selected_index = 0;
    bool feasible = true;      ///< final path clears obstacles by radius + margin
    bool conflict_free = true; ///< final path has no conflict with the other agents

    std::size_t count(std::string_view verdict) const;

    friend bool operator==(const EditOutcome&, const EditOutcome&) = default;
};

class IndexOutOfRangeError : public std::out_of_range
{
  public:
    IndexOutOfRangeError(std::int64_t step, std::size_t len);
    std::int64_t step() const { return step_; }
    std::size_t len() const { return len_; }

  private:
    std::int64_t step_;
    std::size_t len_;
};

/// Pure edit without verification. Throws IndexOutOfRangeError, and
/// std::invalid_argument for SelectPath (selection is not a path edit).
TimedPath apply_line(const TimedPath& path, const dsl::Statement& stmt);

struct EditSession
{
    geometry::ObstacleMap map;
    std::string target;
    planner::CandidateSet candidates;
    std::map<std::string, Track> others;
    std::map<std::string, AgentBody> bodies;
    double margin = 0.0;
    double inter_agent_margin = 0.0;
    bool verify_enabled = true;

    /// Throws std::invalid_argument if candidates are empty or a body is missing.
    void validate() const;
    const AgentBody& body(const std::string& agent) const;
};

/// First violation of static clearance along the path, if any.
std::optional<StaticCollision> static_violation(const EditSession& session, const TimedPath& path);

/// Earliest tick at which the path comes closer than the allowed separation
/// to some other agent (ties broken by agent id).
std::optional<AgentConflict> first_conflict(const EditSession& session, const TimedPath& path);

/// Accept (nullopt) iff the endpoints are unchanged, the edited path is
/// statically feasible, and it either has no agent conflict or does not bring
/// forward the conflict that `before` already had.
std::optional<RejectReason> check_line(const EditSession& session, const TimedPath& before, const TimedPath& after);

EditOutcome apply_program(const EditSession& session, const dsl::EditProgram& program);

} // namespace cape::editverify
