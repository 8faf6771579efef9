#include "cape/io.hpp"

#include <fstream>
#include <sstream>

namespace cape::io {

using namespace geometry;

const Json& field(const Json& j, const char* key)
{
    if (!j.is_object())
        throw FormatError(std::string("expected an object holding '") + key + "'");
    const auto it = j.find(key);
    if (it == j.end())
        throw FormatError(std::string("missing field '") + key + "'");
    return *it;
}

double number(const Json& j, const char* key)
{
    const Json& v = field(j, key);
    if (!v.is_number())
        throw FormatError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::int64_t integer(const Json& j, const char* key)
{
    const Json& v = field(j, key);
    if (!v.is_number_integer())
        throw FormatError(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
}

std::string text(const Json& j, const char* key)
{
    const Json& v = field(j, key);
    if (!v.is_string())
        throw FormatError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

Json to_json(const Point& p) { return Json::array({p.x, p.y}); }

Json to_json(const Pose& p) { return Json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

Json to_json(const Rect& r) { return Json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

Json to_json(const ObstacleMap& map)
{
    Json obstacles = Json::array();
    for (const auto& o : map.obstacles) {
        Json j = to_json(o.rect);
        j["name"] = o.name;
        obstacles.push_back(std::move(j));
    }
    Json unreachable = Json::array();
    for (const auto& r : map.unreachable)
        unreachable.push_back(to_json(r));
    return Json{{"schema", kMapSchema},
                {"width", map.width},
                {"height", map.height},
                {"obstacles", std::move(obstacles)},
                {"unreachable", std::move(unreachable)}};
}

Json to_json(const TimedPath& path)
{
    Json out = Json::array();
    for (const auto& w : path.waypoints) {
        Json j = to_json(w.pose);
        j["dwell"] = w.dwell;
        out.push_back(std::move(j));
    }
    return out;
}

Json to_json(const Track& track) { return Json{{"offset", track.offset}, {"path", to_json(track.path)}}; }

Json to_json(const AgentBody& body) { return Json{{"radius", body.radius}, {"speed", body.speed}}; }

Json to_json(const planner::HomotopySignature& sig)
{
    Json out = Json::array();
    for (const auto& c : sig.word)
        out.push_back(Json::array({c.region, c.sign}));
    return out;
}

Json to_json(const planner::CandidateSet& set)
{
    Json cands = Json::array();
    for (std::size_t i = 0; i < set.candidates.size(); ++i) {
        const auto& c = set.candidates[i];
        cands.push_back(Json{{"index", i},
                             {"signature", to_json(c.signature)},
                             {"signature_text", c.signature.to_string()},
                             {"path", to_json(c.path)}});
    }
    return Json{{"schema", kCandidatesSchema}, {"agent", set.for_agent}, {"candidates", std::move(cands)}};
}

Json to_json(const planner::JointPlan& plan)
{
    Json others = Json::object();
    for (const auto& [id, track] : plan.predicted_others)
        others[id] = to_json(track);
    return Json{{"candidates", to_json(plan.self_candidates)}, {"predicted_others", std::move(others)}};
}

Json to_json(const dsl::ParseError& error)
{
    return Json{{"line", error.line},
                {"col", error.col},
                {"kind", dsl::to_string(error.kind)},
                {"message", error.message},
                {"token", error.token}};
}

Json to_json(const editverify::Verdict& verdict)
{
    using namespace editverify;
    Json j{{"verdict", verdict_kind(verdict)}};
    if (const auto* r = std::get_if<Rejected>(&verdict)) {
        j["reason"] = reason_kind(r->reason);
        j["detail"] = describe(r->reason);
        if (const auto* c = std::get_if<AgentConflict>(&r->reason)) {
            j["other"] = c->other;
            j["tick"] = c->tick;
        }
    } else if (const auto* g = std::get_if<Ignored>(&verdict)) {
        j["reason"] = to_string(g->reason);
    } else if (const auto* e = std::get_if<Invalid>(&verdict)) {
        j["reason"] = dsl::to_string(e->error.kind);
        j["error"] = to_json(e->error);
    }
    return j;
}

Json to_json(const editverify::LineResult& result)
{
    Json j{{"line", result.line}};
    j["statement"] = result.statement ? Json(dsl::print(*result.statement)) : Json(nullptr);
    const Json verdict = to_json(result.verdict);
    for (const auto& [k, v] : verdict.items())
        j[k] = v;
    return j;
}

Json to_json(const editverify::EditOutcome& outcome)
{
    Json lines = Json::array();
    for (const auto& r : outcome.line_results)
        lines.push_back(to_json(r));
    return Json{{"schema", kOutcomeSchema},
                {"selected_index", outcome.selected_index},
                {"feasible", outcome.feasible},
                {"conflict_free", outcome.conflict_free},
                {"accepted", outcome.count("Accepted")},
                {"rejected", outcome.count("Rejected")},
                {"lines", std::move(lines)},
                {"final_path", to_json(outcome.final_path)}};
}

Point point_from_json(const Json& j)
{
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return {j[0].get<double>(), j[1].get<double>()};
    if (j.is_object())
        return {number(j, "x"), number(j, "y")};
    throw FormatError("point must be [x, y] or {\"x\", \"y\"}");
}

Pose pose_from_json(const Json& j)
{
    const double theta = j.is_object() && j.contains("theta") ? number(j, "theta") : 0.0;
    const Point p = point_from_json(j);
    return Pose::make(p.x, p.y, theta);
}

Rect rect_from_json(const Json& j) { return {number(j, "x"), number(j, "y"), number(j, "w"), number(j, "h")}; }

ObstacleMap map_from_json(const Json& j)
{
    if (j.contains("schema") && text(j, "schema") != kMapSchema)
        throw FormatError("unsupported map schema '" + text(j, "schema") + "'");
    ObstacleMap map;
    map.width = number(j, "width");
    map.height = number(j, "height");
    if (j.contains("obstacles"))
        for (const auto& o : field(j, "obstacles"))
            map.obstacles.push_back({text(o, "name"), rect_from_json(o)});
    if (j.contains("unreachable"))
        for (const auto& r : field(j, "unreachable"))
            map.unreachable.push_back(rect_from_json(r));
    map.validate();
    return map;
}

TimedPath path_from_json(const Json& j)
{
    if (!j.is_array())
        throw FormatError("path must be an array of waypoints");
    TimedPath path;
    for (const auto& w : j)
        path.waypoints.push_back({pose_from_json(w), w.is_object() && w.contains("dwell") ? integer(w, "dwell") : 0});
    path.validate();
    return path;
}

Track track_from_json(const Json& j) { return {path_from_json(field(j, "path")), integer(j, "offset")}; }

AgentBody body_from_json(const Json& j)
{
    AgentBody body{number(j, "radius"), number(j, "speed")};
    body.validate();
    return body;
}

planner::CandidateSet candidates_from_json(const Json& j)
{
    planner::CandidateSet set;
    set.for_agent = text(j, "agent");
    for (const auto& c : field(j, "candidates")) {
        planner::Candidate cand;
        cand.path = path_from_json(field(c, "path"));
        for (const auto& letter : field(c, "signature"))
            cand.signature.word.push_back({letter.at(0).get<std::size_t>(), letter.at(1).get<int>()});
        set.candidates.push_back(std::move(cand));
    }
    return set;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(path.string() + ": cannot open for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Json read_json(const std::filesystem::path& path)
{
    const std::string content = read_text(path);
    try {
        return Json::parse(content);
    } catch (const Json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error(path.string() + ": cannot open for writing");
    out << content;
    out.close();
    if (!out)
        throw std::runtime_error(path.string() + ": write failed");
}

std::string dump_line(const Json& j) { return j.dump(); }

std::string dump_pretty(const Json& j) { return j.dump(2) + "\n"; }

} // namespace cape::io
