#pragma once
//
// World representation and the collision / timing primitives shared by every
// other module. Screen convention throughout: +x right, +y down, heading 0
// faces +x and positive angles turn clockwise.
//

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cape::geometry {

using Tick = std::int64_t;

struct Point
{
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }

double dot(Point a, Point b);
double norm(Point p);
double distance(Point a, Point b);
Point lerp(Point a, Point b, double f);

/// Distance from p to the closed segment ab.
double point_segment_distance(Point p, Point a, Point b);

/// Wraps an angle in degrees into [-180, 180).
double normalize_degrees(double degrees);

/// Heading of the direction from -> to, in degrees (screen frame).
double heading_degrees(Point from, Point to);

/// Unit vector for a heading in degrees.
Point unit_vector(double degrees);

struct Rect
{
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double right() const { return x + w; }
    double bottom() const { return y + h; }
    Point center() const { return {x + w / 2.0, y + h / 2.0}; }
    bool contains(Point p) const;
    Point nearest_point(Point p) const;
    double distance_to(Point p) const;
    /// Exact minimum distance between this rect and segment ab (0 when they touch).
    double distance_to_segment(Point a, Point b) const;

    friend bool operator==(const Rect&, const Rect&) = default;
};

struct Pose
{
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Point position() const { return {x, y}; }

    /// Builds a pose with theta normalized into [-180, 180).
    static Pose make(double x, double y, double theta);
    static Pose at(Point p, double theta) { return make(p.x, p.y, theta); }

    friend bool operator==(const Pose&, const Pose&) = default;
};

struct Obstacle
{
    std::string name;
    Rect rect;

    friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

class InvalidMap : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Bounded world with named obstacles and anonymous unreachable regions.
/// Regions are indexed obstacles first, then unreachable rects.
struct ObstacleMap
{
    double width = 0.0;
    double height = 0.0;
    std::vector<Obstacle> obstacles;
    std::vector<Rect> unreachable;

    /// Throws InvalidMap on non-positive extents, duplicate names or out-of-bounds rects.
    void validate() const;

    std::size_t region_count() const { return obstacles.size() + unreachable.size(); }
    const Rect& region(std::size_t index) const;
    std::string region_label(std::size_t index) const;
    std::optional<std::size_t> find_obstacle(std::string_view name) const;

    friend bool operator==(const ObstacleMap&, const ObstacleMap&) = default;
};

enum class BlockerKind
{
    Obstacle,
    Unreachable,
    Boundary,
};

struct Blocker
{
    BlockerKind kind = BlockerKind::Boundary;
    std::size_t index = 0;
    double distance = 0.0;
};

/// Closest thing to p: an obstacle, an unreachable rect or the map boundary.
Blocker nearest_blocker(const ObstacleMap& map, Point p);
/// Same, measured against the whole segment ab.
Blocker nearest_blocker(const ObstacleMap& map, Point a, Point b);
std::string describe(const ObstacleMap& map, const Blocker& blocker);

double clearance(const ObstacleMap& map, Point p);
double segment_clearance(const ObstacleMap& map, Point a, Point b);

/// Every point of ab keeps clearance >= radius + margin. Computed exactly
/// (segment/rect distance), not by sampling.
bool segment_feasible(const ObstacleMap& map, Point a, Point b, double radius, double margin);

struct Waypoint
{
    Pose pose;
    Tick dwell = 0;

    friend bool operator==(const Waypoint&, const Waypoint&) = default;
};

struct TimedPath
{
    std::vector<Waypoint> waypoints;

    /// Throws std::invalid_argument if empty, non-finite or with negative dwell.
    void validate() const;

    std::size_t size() const { return waypoints.size(); }
    const Waypoint& front() const { return waypoints.front(); }
    const Waypoint& back() const { return waypoints.back(); }
    std::vector<Point> polyline() const;
    double length() const;

    static TimedPath from_poses(std::span<const Pose> poses);

    friend bool operator==(const TimedPath&, const TimedPath&) = default;
};

bool path_feasible(const ObstacleMap& map, const TimedPath& path, double radius, double margin);

struct AgentBody
{
    double radius = 10.0;
    double speed = 1.0;

    void validate() const;

    friend bool operator==(const AgentBody&, const AgentBody&) = default;
};

/// ceil(length / speed); zero-length segments take no time.
Tick segment_ticks(Point a, Point b, const AgentBody& body);
/// Total dwell plus traversal ticks; after this the agent rests at the last waypoint.
Tick path_duration(const TimedPath& path, const AgentBody& body);
Pose pose_at_tick(const TimedPath& path, const AgentBody& body, Tick t);

/// Sequential sampler: amortized O(1) per call when ticks are queried in
/// increasing order, falls back to a rewind otherwise.
class PathSampler
{
  public:
    PathSampler(const TimedPath& path, const AgentBody& body);

    Pose at(Tick t);
    Tick duration() const { return duration_; }

  private:
    const TimedPath* path_;
    AgentBody body_;
    std::vector<Tick> segment_ticks_;
    Tick duration_ = 0;
    std::size_t index_ = 0;
    Tick phase_start_ = 0;
};

/// A path being executed with a tick offset: the pose at tick t is
/// pose_at_tick(path, t + offset).
struct Track
{
    TimedPath path;
    Tick offset = 0;

    Tick remaining(const AgentBody& body) const;

    friend bool operator==(const Track&, const Track&) = default;
};

/// Path equivalent (up to segment rounding) to following `path` from tick t on,
/// starting at the current pose.
TimedPath remaining_path(const TimedPath& path, const AgentBody& body, Tick t);

} // namespace cape::geometry
