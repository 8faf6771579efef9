#pragma once
//
// Homotopy-aware RRT: single-query planning, multi-class candidate generation
// and the joint planner (ego candidates + predicted paths for other agents).
//

#include "cape/geometry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cape::planner {

using geometry::AgentBody;
using geometry::ObstacleMap;
using geometry::Point;
using geometry::Pose;
using geometry::TimedPath;

/// One letter of a signature word: region index with crossing direction
/// (+1 left-to-right across the region's upward ray, -1 right-to-left).
struct Crossing
{
    std::size_t region = 0;
    int sign = 1;

    friend bool operator==(const Crossing&, const Crossing&) = default;
    friend auto operator<=>(const Crossing&, const Crossing&) = default;
};

struct HomotopySignature
{
    std::vector<Crossing> word;

    /// Sum of crossing signs for one region. Between two paths with shared
    /// endpoints the one with the larger value keeps the region on its right.
    int net_crossings(std::size_t region) const;
    int total_crossings() const;
    /// True if the word repeats a signed letter, i.e. the path winds around something.
    bool winds() const;
    std::string to_string() const;

    friend bool operator==(const HomotopySignature&, const HomotopySignature&) = default;
    friend auto operator<=>(const HomotopySignature&, const HomotopySignature&) = default;
};

class DegenerateRay : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

class NoPathFound : public std::runtime_error
{
  public:
    explicit NoPathFound(std::string agent, const std::string& detail = "no path found")
        : std::runtime_error(agent.empty() ? detail : agent + ": " + detail), agent_(std::move(agent))
    {
    }
    const std::string& agent() const { return agent_; }

  private:
    std::string agent_;
};

/// x coordinate of each region's upward ray; coincident rays are separated by
/// a deterministic perturbation that keeps them inside their rect.
std::vector<double> ray_abscissae(const ObstacleMap& map);

HomotopySignature h_signature(const ObstacleMap& map, std::span<const Point> polyline);
HomotopySignature h_signature(const ObstacleMap& map, const TimedPath& path);

struct RrtParams
{
    double step = 0.0;           ///< extension length; 0 selects 2x agent radius
    double goal_bias = 0.1;
    double connect_radius = 0.0; ///< goal connection range; 0 selects 4x step
    std::size_t budget = 20000;  ///< iterations
    std::size_t smoothing_attempts = 60;
};

struct PlanQuery
{
    Pose start;
    Point goal;
    std::optional<double> goal_theta; ///< defaults to the heading of the final segment
    AgentBody body;
    double margin = 0.0;
};

/// Single feasible path (all dwells 0). Throws NoPathFound once the budget is spent.
TimedPath rrt_plan(const ObstacleMap& map, const PlanQuery& query, std::uint64_t seed, const RrtParams& params = {});

struct Candidate
{
    TimedPath path;
    HomotopySignature signature;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateSet
{
    std::string for_agent;
    std::vector<Candidate> candidates;

    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

/// Up to k paths in pairwise-distinct homotopy classes. Classes already found
/// (and `incumbent`'s class, which is placed first when given) are rejected at
/// goal-connection time.
CandidateSet multi_candidate_plan(const ObstacleMap& map, const PlanQuery& query, std::size_t k, std::uint64_t seed,
                                  const RrtParams& params = {}, const std::optional<TimedPath>& incumbent = std::nullopt);

struct AgentTask
{
    std::string id;
    PlanQuery query;
    /// Path the agent is already executing; when present it is used as the
    /// prediction (others) or as the first candidate (self).
    std::optional<geometry::Track> known;
};

struct PlannerConfig
{
    std::size_t k = 3;
    bool single_path = false;
    RrtParams rrt;
    std::uint64_t seed = 0;
};

struct JointPlan
{
    CandidateSet self_candidates;
    std::map<std::string, geometry::Track> predicted_others;

    friend bool operator==(const JointPlan&, const JointPlan&) = default;
};

JointPlan joint_plan(const ObstacleMap& map, const AgentTask& self, std::span<const AgentTask> others,
                     const PlannerConfig& config);

/// Builds a timed path through `points`: start heading kept, interior headings
/// face the next point, goal heading given or taken from the last segment.
TimedPath make_path(std::span<const Point> points, double start_theta, std::optional<double> goal_theta);

} // namespace cape::planner
