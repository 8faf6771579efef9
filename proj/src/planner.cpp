#include "cape/planner.hpp"

#include "cape/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace cape::planner {

using geometry::distance;
using geometry::lerp;
using geometry::segment_feasible;

int HomotopySignature::net_crossings(std::size_t region) const
{
    int total = 0;
    for (const Crossing& c : word)
        if (c.region == region)
            total += c.sign;
    return total;
}

int HomotopySignature::total_crossings() const
{
    int total = 0;
    for (const Crossing& c : word)
        total += c.sign;
    return total;
}

bool HomotopySignature::winds() const
{
    for (std::size_t i = 0; i < word.size(); ++i)
        for (std::size_t j = i + 1; j < word.size(); ++j)
            if (word[i] == word[j])
                return true;
    return false;
}

std::string HomotopySignature::to_string() const
{
    if (word.empty())
        return "[]";
    std::ostringstream out;
    for (const Crossing& c : word)
        out << (c.sign > 0 ? '+' : '-') << c.region;
    return out.str();
}

std::vector<double> ray_abscissae(const ObstacleMap& map)
{
    std::vector<double> xs;
    xs.reserve(map.region_count());
    auto clashes = [&](double x) {
        for (double other : xs)
            if (std::abs(other - x) <= 1e-9 * (1.0 + std::abs(x)))
                return true;
        return false;
    };
    for (std::size_t i = 0; i < map.region_count(); ++i) {
        const geometry::Rect& r = map.region(i);
        const double cx = r.center().x;
        double x = cx;
        const double eps = r.w / 64.0;
        int attempt = 0;
        while (clashes(x)) {
            ++attempt;
            if (attempt > 24)
                throw DegenerateRay("cannot separate ray of " + map.region_label(i));
            const double offset = ((attempt + 1) / 2) * eps * (attempt % 2 == 1 ? 1.0 : -1.0);
            if (std::abs(offset) >= r.w / 2.0)
                throw DegenerateRay("cannot separate ray of " + map.region_label(i));
            x = cx + offset;
        }
        xs.push_back(x);
    }
    return xs;
}

namespace {

struct Ray
{
    double x;
    double base_y;
};

std::vector<Ray> rays_for(const ObstacleMap& map)
{
    const auto xs = ray_abscissae(map);
    std::vector<Ray> rays;
    rays.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        rays.push_back({xs[i], map.region(i).center().y});
    return rays;
}

void push_reduced(std::vector<Crossing>& word, Crossing c)
{
    if (!word.empty() && word.back().region == c.region && word.back().sign == -c.sign)
        word.pop_back();
    else
        word.push_back(c);
}

HomotopySignature signature_with_rays(const std::vector<Ray>& rays, std::span<const Point> polyline)
{
    HomotopySignature sig;
    std::vector<std::pair<double, Crossing>> hits;
    for (std::size_t s = 1; s < polyline.size(); ++s) {
        const Point p = polyline[s - 1];
        const Point q = polyline[s];
        hits.clear();
        for (std::size_t i = 0; i < rays.size(); ++i) {
            const bool p_left = p.x < rays[i].x;
            const bool q_left = q.x < rays[i].x;
            if (p_left == q_left)
                continue;
            const double t = (rays[i].x - p.x) / (q.x - p.x);
            const double y = p.y + t * (q.y - p.y);
            if (y < rays[i].base_y)
                hits.push_back({t, Crossing{i, p_left ? 1 : -1}});
        }
        std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [t, c] : hits)
            push_reduced(sig.word, c);
    }
    return sig;
}

} // namespace

HomotopySignature h_signature(const ObstacleMap& map, std::span<const Point> polyline)
{
    return signature_with_rays(rays_for(map), polyline);
}

HomotopySignature h_signature(const ObstacleMap& map, const TimedPath& path)
{
    const auto pts = path.polyline();
    return h_signature(map, pts);
}

TimedPath make_path(std::span<const Point> points, double start_theta, std::optional<double> goal_theta)
{
    TimedPath path;
    if (points.empty())
        return path;
    path.waypoints.push_back({Pose::at(points[0], start_theta), 0});
    for (std::size_t i = 1; i < points.size(); ++i) {
        double theta = 0.0;
        if (i + 1 < points.size())
            theta = geometry::heading_degrees(points[i], points[i + 1]);
        else
            theta = goal_theta ? *goal_theta : geometry::heading_degrees(points[i - 1], points[i]);
        path.waypoints.push_back({Pose::at(points[i], theta), 0});
    }
    return path;
}

namespace {

/// Uniform bucket grid for nearest-neighbour queries over tree nodes.
class NearestGrid
{
  public:
    NearestGrid(double width, double height, double cell)
    {
        cell_ = std::max(cell, 1e-9);
        while (true) {
            nx_ = std::max<long>(1, static_cast<long>(std::ceil(width / cell_)));
            ny_ = std::max<long>(1, static_cast<long>(std::ceil(height / cell_)));
            if (nx_ * ny_ <= 250000)
                break;
            cell_ *= 2.0;
        }
        buckets_.resize(static_cast<std::size_t>(nx_ * ny_));
    }

    void insert(std::size_t index, Point p) { buckets_[bucket(p)].push_back(index); }

    std::size_t nearest(Point p, const std::vector<Point>& pts) const
    {
        const long cx = clamp_x(p.x);
        const long cy = clamp_y(p.y);
        std::size_t best = std::numeric_limits<std::size_t>::max();
        double best_d = std::numeric_limits<double>::infinity();
        auto scan = [&](long i, long j) {
            if (i < 0 || j < 0 || i >= nx_ || j >= ny_)
                return;
            for (std::size_t idx : buckets_[static_cast<std::size_t>(j * nx_ + i)]) {
                const double d = distance(p, pts[idx]);
                if (d < best_d || (d == best_d && idx < best)) {
                    best_d = d;
                    best = idx;
                }
            }
        };
        const long max_ring = std::max(nx_, ny_);
        for (long r = 0; r <= max_ring; ++r) {
            if (r == 0) {
                scan(cx, cy);
            } else {
                for (long i = cx - r; i <= cx + r; ++i) {
                    scan(i, cy - r);
                    scan(i, cy + r);
                }
                for (long j = cy - r + 1; j <= cy + r - 1; ++j) {
                    scan(cx - r, j);
                    scan(cx + r, j);
                }
            }
            if (best != std::numeric_limits<std::size_t>::max() && best_d <= static_cast<double>(r) * cell_)
                break;
        }
        return best;
    }

  private:
    long clamp_x(double x) const { return std::clamp(static_cast<long>(std::floor(x / cell_)), 0L, nx_ - 1); }
    long clamp_y(double y) const { return std::clamp(static_cast<long>(std::floor(y / cell_)), 0L, ny_ - 1); }
    std::size_t bucket(Point p) const { return static_cast<std::size_t>(clamp_y(p.y) * nx_ + clamp_x(p.x)); }

    double cell_ = 1.0;
    long nx_ = 1;
    long ny_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
};

struct Resolved
{
    double step;
    double goal_bias;
    double connect_radius;
    std::size_t smoothing_attempts;
};

Resolved resolve(const RrtParams& params, const AgentBody& body)
{
    Resolved r{};
    r.step = params.step > 0.0 ? params.step : 2.0 * body.radius;
    r.goal_bias = params.goal_bias;
    r.connect_radius = params.connect_radius > 0.0 ? params.connect_radius : 4.0 * r.step;
    r.smoothing_attempts = params.smoothing_attempts;
    return r;
}

class Searcher
{
  public:
    Searcher(const ObstacleMap& map, const PlanQuery& query, const Resolved& params)
        : map_(map), query_(query), params_(params), rays_(rays_for(map))
    {
    }

    std::optional<Candidate> search(Rng& rng, const std::vector<HomotopySignature>& blocked, std::size_t& budget)
    {
        const Point start = query_.start.position();
        const Point goal = query_.goal;
        if (feasible(start, goal)) {
            if (auto c = accept({start, goal}, rng, blocked))
                return c;
        }

        const double lo = query_.body.radius + query_.margin;
        const double hi_x = map_.width - lo;
        const double hi_y = map_.height - lo;
        if (hi_x < lo || hi_y < lo)
            return std::nullopt;

        // A rejected connection means the tree reached the goal region through
        // a blocked class, and a goal-biased tree will keep doing so. Later
        // rounds mostly route through a random via point instead, which lands
        // in other classes with useful probability.
        for (std::size_t round = 0; budget > 0; ++round) {
            --budget; // every round costs at least one iteration
            std::optional<std::vector<Point>> raw;
            if (round == 0 || rng.chance(0.25)) {
                raw = grow(start, goal, rng, budget);
            } else {
                const Point via{rng.uniform(lo, hi_x), rng.uniform(lo, hi_y)};
                if (clearance(map_, via) < lo)
                    continue;
                auto first = grow(start, via, rng, budget);
                auto second = first ? grow(via, goal, rng, budget) : std::nullopt;
                if (second) {
                    raw = std::move(first);
                    raw->insert(raw->end(), second->begin() + 1, second->end());
                }
            }
            if (!raw)
                continue;
            if (auto c = accept(std::move(*raw), rng, blocked))
                return c;
        }
        return std::nullopt;
    }

  private:
    // Plain RRT from `from` until a node connects to `to`; spends at most
    // kGrowLimit iterations of the shared budget.
    std::optional<std::vector<Point>> grow(Point from, Point to, Rng& rng, std::size_t& budget) const
    {
        static constexpr std::size_t kGrowLimit = 4000;
        if (feasible(from, to))
            return std::vector<Point>{from, to};
        const double lo = query_.body.radius + query_.margin;
        const double hi_x = map_.width - lo;
        const double hi_y = map_.height - lo;
        std::vector<Point> nodes{from};
        std::vector<std::size_t> parent{0};
        NearestGrid grid(map_.width, map_.height, params_.step);
        grid.insert(0, from);
        for (std::size_t spent = 0; budget > 0 && spent < kGrowLimit; ++spent) {
            --budget;
            const Point sample = rng.chance(params_.goal_bias) ? to : Point{rng.uniform(lo, hi_x), rng.uniform(lo, hi_y)};
            const std::size_t near = grid.nearest(sample, nodes);
            const Point p = nodes[near];
            const double d = distance(p, sample);
            if (d < 1e-9)
                continue;
            const Point next = d <= params_.step ? sample : lerp(p, sample, params_.step / d);
            if (!feasible(p, next))
                continue;
            const std::size_t idx = nodes.size();
            nodes.push_back(next);
            parent.push_back(near);
            grid.insert(idx, next);
            if (distance(next, to) <= params_.connect_radius && feasible(next, to)) {
                std::vector<Point> raw;
                if (distance(next, to) > 1e-9)
                    raw.push_back(to);
                for (std::size_t n = idx;; n = parent[n]) {
                    raw.push_back(nodes[n]);
                    if (n == 0)
                        break;
                }
                std::reverse(raw.begin(), raw.end());
                raw.back() = to;
                return raw;
            }
        }
        return std::nullopt;
    }

    bool feasible(Point a, Point b) const
    {
        return segment_feasible(map_, a, b, query_.body.radius, query_.margin);
    }

    HomotopySignature signature(std::span<const Point> pts) const { return signature_with_rays(rays_, pts); }

    // Net angle swept around a point inside each region is a class invariant;
    // more than a full turn means the class encircles that region.
    bool loops(std::span<const Point> pts) const
    {
        for (const Ray& r : rays_) {
            double sweep = 0.0;
            for (std::size_t i = 1; i < pts.size(); ++i) {
                const double ax = pts[i - 1].x - r.x, ay = pts[i - 1].y - r.base_y;
                const double bx = pts[i].x - r.x, by = pts[i].y - r.base_y;
                sweep += std::atan2(ax * by - ay * bx, ax * bx + ay * by);
            }
            if (std::abs(sweep) > 2 * std::numbers::pi + 1e-9)
                return true;
        }
        return false;
    }

    bool same_class(std::span<const Point> chain) const
    {
        const std::array<Point, 2> direct{chain.front(), chain.back()};
        return signature(chain) == signature(direct);
    }

    std::optional<Candidate> accept(std::vector<Point> raw, Rng& rng, const std::vector<HomotopySignature>& blocked)
    {
        HomotopySignature sig = signature(raw);
        if (sig.winds() || loops(raw) || std::find(blocked.begin(), blocked.end(), sig) != blocked.end())
            return std::nullopt;
        std::vector<Point> pts = smooth(std::move(raw), rng);
        // Shortcuts are class-preserving, so this only differs on round-off.
        if (signature(pts) != sig)
            return std::nullopt;
        return Candidate{make_path(pts, query_.start.theta, query_.goal_theta), std::move(sig)};
    }

    std::vector<Point> smooth(std::vector<Point> pts, Rng& rng) const
    {
        std::vector<Point> out = greedy_shortcut(pts);

        // Random partial shortcuts between points on two different segments.
        for (std::size_t attempt = 0; attempt < params_.smoothing_attempts && out.size() >= 3; ++attempt) {
            const std::size_t segs = out.size() - 1;
            const auto s1 = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(segs) - 2));
            const auto s2 = static_cast<std::size_t>(
                rng.integer(static_cast<std::int64_t>(s1) + 1, static_cast<std::int64_t>(segs) - 1));
            const Point p = lerp(out[s1], out[s1 + 1], rng.uniform());
            const Point q = lerp(out[s2], out[s2 + 1], rng.uniform());
            if (!feasible(p, q) || !feasible(out[s1], p) || !feasible(q, out[s2 + 1]))
                continue;
            std::vector<Point> chain{p};
            chain.insert(chain.end(), out.begin() + static_cast<std::ptrdiff_t>(s1) + 1,
                         out.begin() + static_cast<std::ptrdiff_t>(s2) + 1);
            chain.push_back(q);
            if (!same_class(chain))
                continue;
            const double before = polyline_length(chain);
            if (distance(p, q) >= before - 1e-9)
                continue;
            std::vector<Point> next(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(s1) + 1);
            if (distance(next.back(), p) > 1e-9)
                next.push_back(p);
            if (distance(q, out[s2 + 1]) > 1e-9)
                next.push_back(q);
            next.insert(next.end(), out.begin() + static_cast<std::ptrdiff_t>(s2) + 1, out.end());
            out = std::move(next);
        }
        return greedy_shortcut(out);
    }

    // From each vertex jump to the farthest vertex reachable by a feasible,
    // class-preserving straight segment.
    std::vector<Point> greedy_shortcut(const std::vector<Point>& pts) const
    {
        std::vector<Point> out{pts.front()};
        std::size_t i = 0;
        while (i + 1 < pts.size()) {
            std::size_t j = pts.size() - 1;
            while (j > i + 1) {
                if (feasible(pts[i], pts[j]) && same_class(std::span<const Point>(pts).subspan(i, j - i + 1)))
                    break;
                --j;
            }
            out.push_back(pts[j]);
            i = j;
        }
        return out;
    }

    static double polyline_length(std::span<const Point> pts)
    {
        double total = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i)
            total += distance(pts[i - 1], pts[i]);
        return total;
    }

    const ObstacleMap& map_;
    const PlanQuery& query_;
    Resolved params_;
    std::vector<Ray> rays_;
};

void check_query(const ObstacleMap& map, const PlanQuery& query)
{
    map.validate();
    query.body.validate();
    const double need = query.body.radius + query.margin;
    if (geometry::clearance(map, query.start.position()) < need)
        throw std::invalid_argument("start pose violates clearance");
    if (geometry::clearance(map, query.goal) < need)
        throw std::invalid_argument("goal violates clearance");
}

} // namespace

CandidateSet multi_candidate_plan(const ObstacleMap& map, const PlanQuery& query, std::size_t k, std::uint64_t seed,
                                  const RrtParams& params, const std::optional<TimedPath>& incumbent)
{
    check_query(map, query);
    if (k == 0)
        throw std::invalid_argument("k must be at least 1");

    CandidateSet set;
    std::vector<HomotopySignature> blocked;
    if (incumbent) {
        incumbent->validate();
        if (incumbent->front().pose.position() != query.start.position() ||
            incumbent->back().pose.position() != query.goal)
            throw std::invalid_argument("incumbent path does not share the query endpoints");
        auto sig = h_signature(map, *incumbent);
        blocked.push_back(sig);
        set.candidates.push_back({*incumbent, std::move(sig)});
    }

    if (query.start.position() == query.goal) {
        if (set.candidates.empty()) {
            TimedPath single{{{query.start, 0}}};
            set.candidates.push_back({single, HomotopySignature{}});
        }
        return set;
    }

    const Resolved resolved = resolve(params, query.body);
    Searcher searcher(map, query, resolved);
    std::size_t budget = params.budget;
    std::uint64_t attempt = 0;
    while (set.candidates.size() < k && budget > 0) {
        Rng rng(derive_seed(seed, attempt++));
        auto found = searcher.search(rng, blocked, budget);
        if (!found)
            break;
        blocked.push_back(found->signature);
        set.candidates.push_back(std::move(*found));
    }
    if (set.candidates.empty())
        throw NoPathFound("", "no path found within " + std::to_string(params.budget) + " iterations");
    return set;
}

TimedPath rrt_plan(const ObstacleMap& map, const PlanQuery& query, std::uint64_t seed, const RrtParams& params)
{
    return multi_candidate_plan(map, query, 1, seed, params).candidates.front().path;
}

JointPlan joint_plan(const ObstacleMap& map, const AgentTask& self, std::span<const AgentTask> others,
                     const PlannerConfig& config)
{
    JointPlan plan;
    std::optional<TimedPath> incumbent;
    if (self.known)
        incumbent = self.known->offset == 0 ? self.known->path
                                             : geometry::remaining_path(self.known->path, self.query.body,
                                                                        self.known->offset);
    try {
        if (config.single_path && incumbent) {
            plan.self_candidates.candidates.push_back({*incumbent, h_signature(map, *incumbent)});
        } else {
            const std::size_t k = config.single_path ? 1 : config.k;
            plan.self_candidates =
                multi_candidate_plan(map, self.query, k, derive_seed(config.seed, self.id), config.rrt, incumbent);
        }
    } catch (const NoPathFound& e) {
        throw NoPathFound(self.id, e.what());
    }
    plan.self_candidates.for_agent = self.id;

    for (const AgentTask& other : others) {
        if (other.known) {
            plan.predicted_others[other.id] = *other.known;
            continue;
        }
        try {
            plan.predicted_others[other.id] =
                geometry::Track{rrt_plan(map, other.query, derive_seed(config.seed, other.id), config.rrt), 0};
        } catch (const NoPathFound& e) {
            throw NoPathFound(other.id, e.what());
        }
    }
    return plan;
}

} // namespace cape::planner
