#include "cape/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace cape::geometry {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

bool finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

// Liang-Barsky clip of ab against the closed rect.
bool segment_hits_rect(const Rect& r, Point a, Point b)
{
    double t0 = 0.0;
    double t1 = 1.0;
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const std::array<double, 4> p{-dx, dx, -dy, dy};
    const std::array<double, 4> q{a.x - r.x, r.right() - a.x, a.y - r.y, r.bottom() - a.y};
    for (std::size_t i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0)
                return false;
            continue;
        }
        const double t = q[i] / p[i];
        if (p[i] < 0.0)
            t0 = std::max(t0, t);
        else
            t1 = std::min(t1, t);
        if (t0 > t1)
            return false;
    }
    return true;
}

double boundary_distance(const ObstacleMap& map, Point p)
{
    if (p.x < 0.0 || p.y < 0.0 || p.x > map.width || p.y > map.height)
        return 0.0;
    return std::min({p.x, map.width - p.x, p.y, map.height - p.y});
}

} // namespace

double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }

double norm(Point p) { return std::hypot(p.x, p.y); }

double distance(Point a, Point b) { return norm(b - a); }

Point lerp(Point a, Point b, double f) { return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)}; }

double point_segment_distance(Point p, Point a, Point b)
{
    const Point ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0)
        return distance(p, a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return distance(p, lerp(a, b, t));
}

double normalize_degrees(double degrees)
{
    double r = std::fmod(degrees + 180.0, 360.0);
    if (r < 0.0)
        r += 360.0;
    r -= 180.0;
    // fmod can land exactly on the excluded upper bound after the shift.
    if (r >= 180.0)
        r -= 360.0;
    return r;
}

double heading_degrees(Point from, Point to)
{
    return normalize_degrees(std::atan2(to.y - from.y, to.x - from.x) / kDegToRad);
}

Point unit_vector(double degrees)
{
    const double rad = degrees * kDegToRad;
    return {std::cos(rad), std::sin(rad)};
}

bool Rect::contains(Point p) const { return p.x >= x && p.x <= right() && p.y >= y && p.y <= bottom(); }

Point Rect::nearest_point(Point p) const { return {std::clamp(p.x, x, right()), std::clamp(p.y, y, bottom())}; }

double Rect::distance_to(Point p) const { return distance(p, nearest_point(p)); }

double Rect::distance_to_segment(Point a, Point b) const
{
    if (segment_hits_rect(*this, a, b))
        return 0.0;
    double best = std::min(distance_to(a), distance_to(b));
    const std::array<Point, 4> corners{Point{x, y}, Point{right(), y}, Point{x, bottom()}, Point{right(), bottom()}};
    for (const Point& c : corners)
        best = std::min(best, point_segment_distance(c, a, b));
    return best;
}

Pose Pose::make(double x, double y, double theta) { return Pose{x, y, normalize_degrees(theta)}; }

void ObstacleMap::validate() const
{
    if (!(std::isfinite(width) && std::isfinite(height) && width > 0.0 && height > 0.0))
        throw InvalidMap("map extents must be positive and finite");
    auto check_rect = [&](const Rect& r, const std::string& label) {
        if (!(std::isfinite(r.x) && std::isfinite(r.y) && std::isfinite(r.w) && std::isfinite(r.h)))
            throw InvalidMap(label + ": non-finite rect");
        if (r.w <= 0.0 || r.h <= 0.0)
            throw InvalidMap(label + ": rect must have positive width and height");
        if (r.x < 0.0 || r.y < 0.0 || r.right() > width || r.bottom() > height)
            throw InvalidMap(label + ": rect lies outside the map bounds");
    };
    std::unordered_set<std::string> names;
    for (const auto& o : obstacles) {
        if (o.name.empty())
            throw InvalidMap("obstacle with empty name");
        if (!names.insert(o.name).second)
            throw InvalidMap("duplicate obstacle name '" + o.name + "'");
        check_rect(o.rect, "obstacle '" + o.name + "'");
    }
    for (std::size_t i = 0; i < unreachable.size(); ++i)
        check_rect(unreachable[i], "unreachable[" + std::to_string(i) + "]");
}

const Rect& ObstacleMap::region(std::size_t index) const
{
    if (index < obstacles.size())
        return obstacles[index].rect;
    return unreachable.at(index - obstacles.size());
}

std::string ObstacleMap::region_label(std::size_t index) const
{
    if (index < obstacles.size())
        return obstacles[index].name;
    return "unreachable[" + std::to_string(index - obstacles.size()) + "]";
}

std::optional<std::size_t> ObstacleMap::find_obstacle(std::string_view name) const
{
    for (std::size_t i = 0; i < obstacles.size(); ++i)
        if (obstacles[i].name == name)
            return i;
    return std::nullopt;
}

Blocker nearest_blocker(const ObstacleMap& map, Point p)
{
    Blocker best{BlockerKind::Boundary, 0, boundary_distance(map, p)};
    for (std::size_t i = 0; i < map.region_count(); ++i) {
        const double d = map.region(i).distance_to(p);
        if (d < best.distance) {
            best.kind = i < map.obstacles.size() ? BlockerKind::Obstacle : BlockerKind::Unreachable;
            best.index = i;
            best.distance = d;
        }
    }
    return best;
}

Blocker nearest_blocker(const ObstacleMap& map, Point a, Point b)
{
    // Distance to the inside of a box is concave along a segment, so the
    // boundary term is attained at an endpoint.
    Blocker best{BlockerKind::Boundary, 0, std::min(boundary_distance(map, a), boundary_distance(map, b))};
    for (std::size_t i = 0; i < map.region_count(); ++i) {
        const double d = map.region(i).distance_to_segment(a, b);
        if (d < best.distance) {
            best.kind = i < map.obstacles.size() ? BlockerKind::Obstacle : BlockerKind::Unreachable;
            best.index = i;
            best.distance = d;
        }
    }
    return best;
}

std::string describe(const ObstacleMap& map, const Blocker& blocker)
{
    if (blocker.kind == BlockerKind::Boundary)
        return "boundary";
    return map.region_label(blocker.index);
}

double clearance(const ObstacleMap& map, Point p) { return nearest_blocker(map, p).distance; }

double segment_clearance(const ObstacleMap& map, Point a, Point b) { return nearest_blocker(map, a, b).distance; }

bool segment_feasible(const ObstacleMap& map, Point a, Point b, double radius, double margin)
{
    if (!finite(a) || !finite(b))
        return false;
    return segment_clearance(map, a, b) >= radius + margin;
}

void TimedPath::validate() const
{
    if (waypoints.empty())
        throw std::invalid_argument("path must contain at least one waypoint");
    for (const auto& wp : waypoints) {
        if (!(std::isfinite(wp.pose.x) && std::isfinite(wp.pose.y) && std::isfinite(wp.pose.theta)))
            throw std::invalid_argument("path waypoint is not finite");
        if (wp.dwell < 0)
            throw std::invalid_argument("path waypoint has negative dwell");
    }
}

std::vector<Point> TimedPath::polyline() const
{
    std::vector<Point> pts;
    pts.reserve(waypoints.size());
    for (const auto& wp : waypoints)
        pts.push_back(wp.pose.position());
    return pts;
}

double TimedPath::length() const
{
    double total = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i)
        total += distance(waypoints[i - 1].pose.position(), waypoints[i].pose.position());
    return total;
}

TimedPath TimedPath::from_poses(std::span<const Pose> poses)
{
    TimedPath path;
    path.waypoints.reserve(poses.size());
    for (const Pose& p : poses)
        path.waypoints.push_back({p, 0});
    return path;
}

bool path_feasible(const ObstacleMap& map, const TimedPath& path, double radius, double margin)
{
    const double need = radius + margin;
    for (const auto& wp : path.waypoints) {
        const Point p = wp.pose.position();
        if (!finite(p) || clearance(map, p) < need)
            return false;
    }
    for (std::size_t i = 1; i < path.waypoints.size(); ++i)
        if (!segment_feasible(map, path.waypoints[i - 1].pose.position(), path.waypoints[i].pose.position(), radius,
                              margin))
            return false;
    return true;
}

void AgentBody::validate() const
{
    if (!(std::isfinite(radius) && radius > 0.0))
        throw std::invalid_argument("agent radius must be positive and finite");
    if (!(std::isfinite(speed) && speed > 0.0))
        throw std::invalid_argument("agent speed must be positive and finite");
}

Tick segment_ticks(Point a, Point b, const AgentBody& body)
{
    const double len = distance(a, b);
    if (len == 0.0)
        return 0;
    // Absorb round-off so that e.g. 10 / 2 does not become 6 ticks.
    return static_cast<Tick>(std::ceil(len / body.speed - 1e-9));
}

Tick path_duration(const TimedPath& path, const AgentBody& body)
{
    Tick total = 0;
    for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
        total += path.waypoints[i].dwell;
        if (i + 1 < path.waypoints.size())
            total += segment_ticks(path.waypoints[i].pose.position(), path.waypoints[i + 1].pose.position(), body);
    }
    return total;
}

namespace {

Pose interpolate(const Pose& a, const Pose& b, double f)
{
    const Point p = lerp(a.position(), b.position(), f);
    const double delta = normalize_degrees(b.theta - a.theta);
    return Pose::make(p.x, p.y, a.theta + f * delta);
}

} // namespace

Pose pose_at_tick(const TimedPath& path, const AgentBody& body, Tick t)
{
    const auto& wps = path.waypoints;
    Tick remaining = std::max<Tick>(t, 0);
    for (std::size_t i = 0; i < wps.size(); ++i) {
        if (remaining <= wps[i].dwell || i + 1 == wps.size())
            return wps[i].pose;
        remaining -= wps[i].dwell;
        const Tick n = segment_ticks(wps[i].pose.position(), wps[i + 1].pose.position(), body);
        if (remaining < n)
            return interpolate(wps[i].pose, wps[i + 1].pose, static_cast<double>(remaining) / static_cast<double>(n));
        remaining -= n;
    }
    return wps.back().pose;
}

PathSampler::PathSampler(const TimedPath& path, const AgentBody& body) : path_(&path), body_(body)
{
    const auto& wps = path.waypoints;
    for (std::size_t i = 0; i + 1 < wps.size(); ++i)
        segment_ticks_.push_back(segment_ticks(wps[i].pose.position(), wps[i + 1].pose.position(), body));
    duration_ = path_duration(path, body);
}

Pose PathSampler::at(Tick t)
{
    const auto& wps = path_->waypoints;
    t = std::max<Tick>(t, 0);
    if (t < phase_start_) {
        index_ = 0;
        phase_start_ = 0;
    }
    // phase_start_ is the tick at which the agent arrives at waypoint index_.
    while (true) {
        const Tick dwell = wps[index_].dwell;
        const Tick local = t - phase_start_;
        if (local <= dwell || index_ + 1 == wps.size())
            return wps[index_].pose;
        const Tick n = segment_ticks_[index_];
        if (local - dwell < n)
            return interpolate(wps[index_].pose, wps[index_ + 1].pose,
                               static_cast<double>(local - dwell) / static_cast<double>(n));
        phase_start_ += dwell + n;
        ++index_;
    }
}

Tick Track::remaining(const AgentBody& body) const { return std::max<Tick>(path_duration(path, body) - offset, 0); }

TimedPath remaining_path(const TimedPath& path, const AgentBody& body, Tick t)
{
    const auto& wps = path.waypoints;
    Tick remaining = std::max<Tick>(t, 0);
    for (std::size_t i = 0; i < wps.size(); ++i) {
        if (remaining <= wps[i].dwell || i + 1 == wps.size()) {
            TimedPath out;
            out.waypoints.push_back({wps[i].pose, std::max<Tick>(wps[i].dwell - remaining, 0)});
            out.waypoints.insert(out.waypoints.end(), wps.begin() + static_cast<std::ptrdiff_t>(i) + 1, wps.end());
            return out;
        }
        remaining -= wps[i].dwell;
        const Tick n = segment_ticks(wps[i].pose.position(), wps[i + 1].pose.position(), body);
        if (remaining < n) {
            TimedPath out;
            out.waypoints.push_back(
                {interpolate(wps[i].pose, wps[i + 1].pose, static_cast<double>(remaining) / static_cast<double>(n)),
                 0});
            out.waypoints.insert(out.waypoints.end(), wps.begin() + static_cast<std::ptrdiff_t>(i) + 1, wps.end());
            return out;
        }
        remaining -= n;
    }
    return TimedPath{{{wps.back().pose, 0}}};
}

} // namespace cape::geometry
