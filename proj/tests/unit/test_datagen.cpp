#include <doctest.h>

#include "cape/datagen.hpp"
#include "cape/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace cape;
using namespace cape::datagen;
using geometry::Point;
using pipeline::Behavior;

namespace {

bool is_wall(const geometry::Obstacle& o) { return o.name.rfind("wall ", 0) == 0; }

// Winding number of a closed polyline around c.
int winding(const std::vector<Point>& loop, Point c)
{
    double total = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const Point a = loop[i] - c, b = loop[(i + 1) % loop.size()] - c;
        total += std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y);
    }
    return static_cast<int>(std::lround(total / (2 * std::numbers::pi)));
}

// +1 when `first` passes the point with it on its right and `second` with it
// on its left (screen frame), -1 for the reverse, 0 when on the same side.
int relative_side(const geometry::TimedPath& first, const geometry::TimedPath& second, Point c)
{
    auto loop = first.polyline();
    auto back = second.polyline();
    std::reverse(back.begin(), back.end());
    loop.insert(loop.end(), back.begin() + 1, back.end() - 1);
    return winding(loop, c);
}

const Dataset& small_dataset()
{
    static const Dataset d = [] {
        DatasetConfig c;
        c.maps = 6;
        return generate_dataset(c, 2024);
    }();
    return d;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("map generation")
{
    MapGenConfig c;
    SUBCASE("deterministic per seed")
    {
        for (int level = 1; level <= 3; ++level) {
            c.clutter_level = level;
            CHECK(gen_map(c, 11) == gen_map(c, 11));
        }
        CHECK_FALSE(gen_map(c, 11) == gen_map(c, 12));
    }
    SUBCASE("sampled obstacles respect the size range and counts")
    {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            c.clutter_level = int(seed % 3) + 1;
            const auto m = gen_map(c, seed);
            const int mean = c.counts[std::size_t(c.clutter_level - 1)];
            CHECK(int(m.obstacles.size()) >= mean - c.count_spread);
            CHECK(int(m.obstacles.size()) <= mean + c.count_spread);
            for (const auto& o : m.obstacles) {
                CHECK(o.rect.w >= 20.0);
                CHECK(o.rect.w <= 50.0);
                CHECK(o.rect.h >= 20.0);
                CHECK(o.rect.h <= 50.0);
                CHECK(o.rect.x >= 0.0);
                CHECK(o.rect.right() <= m.width);
            }
            CHECK(free_space_connected(m, c.agent_radius));
        }
    }
    SUBCASE("corridor has exactly one passage of the right width")
    {
        c.structured = StructuredKind::Corridor;
        const double d = 2 * c.agent_radius;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto m = gen_map(c, seed);
            std::vector<geometry::Rect> walls;
            for (const auto& o : m.obstacles)
                if (is_wall(o))
                    walls.push_back(o.rect);
            REQUIRE(walls.size() == 2);
            const double x0 = walls[0].x, x1 = walls[0].right();
            // Free vertical intervals of the wall strip, from every obstacle touching it.
            std::vector<std::pair<double, double>> blocked;
            for (const auto& o : m.obstacles)
                if (o.rect.x < x1 && o.rect.right() > x0)
                    blocked.emplace_back(o.rect.y, o.rect.bottom());
            std::sort(blocked.begin(), blocked.end());
            std::vector<double> gaps;
            double y = 0.0;
            for (const auto& [a, b] : blocked) {
                if (a > y + 1e-9)
                    gaps.push_back(a - y);
                y = std::max(y, b);
            }
            if (y < m.height - 1e-9)
                gaps.push_back(m.height - y);
            REQUIRE(gaps.size() == 1);
            CHECK(gaps[0] >= 2.5 * d);
            CHECK(gaps[0] <= 4.0 * d);
            CHECK(free_space_connected(m, c.agent_radius));
        }
    }
    SUBCASE("crossroad streets")
    {
        c.structured = StructuredKind::Crossroad;
        const auto m = gen_map(c, 5);
        CHECK(std::count_if(m.obstacles.begin(), m.obstacles.end(), is_wall) == 4);
        CHECK(free_space_connected(m, c.agent_radius));
    }
    SUBCASE("invalid and over-dense configurations")
    {
        MapGenConfig bad = c;
        bad.clutter_level = 4;
        CHECK_THROWS_AS(gen_map(bad, 1), std::invalid_argument);
        bad = c;
        bad.max_size = 1000;
        CHECK_THROWS_AS(gen_map(bad, 1), std::invalid_argument);
        bad = c;
        bad.min_size = 60;
        CHECK_THROWS_AS(gen_map(bad, 1), std::invalid_argument);
        MapGenConfig dense;
        dense.width = dense.height = 200;
        dense.counts = {200, 200, 200};
        dense.max_rejections = 50;
        CHECK_THROWS_AS(gen_map(dense, 1), GenerationFailed);
    }
}

TEST_CASE("connectivity check")
{
    geometry::ObstacleMap open{200, 100, {}, {}};
    CHECK(free_space_connected(open, 10));
    // A full-height wall splits the map; a 60-wide gap reconnects it.
    geometry::ObstacleMap split{200, 100, {{"w", {90, 0, 20, 100}}}, {}};
    CHECK_FALSE(free_space_connected(split, 10));
    geometry::ObstacleMap gap{200, 100, {{"a", {90, 0, 20, 20}}, {"b", {90, 80, 20, 20}}}, {}};
    CHECK(free_space_connected(gap, 10));
    // 16 wide: narrower than the 20-wide agent.
    geometry::ObstacleMap narrow{200, 100, {{"a", {90, 0, 20, 42}}, {"b", {90, 58, 20, 42}}}, {}};
    CHECK_FALSE(free_space_connected(narrow, 10));
}

TEST_CASE("records")
{
    const Dataset& d = small_dataset();
    REQUIRE(d.records.size() > 60);
    std::map<Behavior, int> seen;
    for (const auto& r : d.records) {
        CAPTURE(r.instruction);
        ++seen[r.behavior];
        const auto& map = d.map(r.map_id);
        const auto session = record_session(map, r);
        REQUIRE_FALSE(r.gt_program.empty());

        // Applies cleanly, and survives print/parse.
        const auto text = dsl::print(r.gt_program);
        CHECK(dsl::parse(text).statements() == r.gt_program);
        const auto outcome = editverify::apply_program(session, dsl::parse(text));
        CHECK(outcome.count("Rejected") == 0);
        CHECK(outcome.count("Accepted") == r.gt_program.size());
        CHECK(geometry::path_feasible(map, outcome.final_path, r.robot.body.radius, r.margin));

        // Closed loop through the scripted synthesizer.
        pipeline::SynthesizerRequest req;
        req.session = session;
        req.instruction = r.instruction;
        req.speaker = record_speaker(r);
        const auto response = pipeline::ScriptedSynthesizer{}.synthesize(req);
        CHECK(dsl::parse(response.program_text).statements() == r.gt_program);

        CHECK(io::record_from_json(io::to_json(r)) == r);

        const auto& c0 = r.candidates.candidates.front().path;
        switch (r.behavior) {
        case Behavior::Wait:
        case Behavior::Backout:
            // The human's path really conflicts with the unedited plan, and
            // the program clears it.
            CHECK(editverify::first_conflict(session, c0).has_value());
            CHECK(outcome.conflict_free);
            break;
        case Behavior::PathSelection: {
            const auto intent = pipeline::parse_instruction(r.instruction);
            REQUIRE(intent);
            const auto& sel = std::get<pipeline::SelectIntent>(*intent);
            if (sel.kind != pipeline::SelectIntent::Kind::Landmark)
                break;
            const auto chosen = std::size_t(std::get<dsl::SelectPath>(r.gt_program.front()).path_index);
            const auto o = map.find_obstacle(sel.landmark);
            REQUIRE(o);
            const Point c = map.obstacles[*o].rect.center();
            bool discriminates = false;
            for (std::size_t i = 0; i < r.candidates.candidates.size(); ++i) {
                if (i == chosen)
                    continue;
                const int side = relative_side(r.candidates.candidates[chosen].path,
                                               r.candidates.candidates[i].path, c);
                discriminates = discriminates || side != 0;
                CHECK(side * (sel.left ? 1 : -1) >= 0);
            }
            CHECK(discriminates);
            break;
        }
        case Behavior::Movement: {
            const auto intent = std::get<pipeline::MoveIntent>(*pipeline::parse_instruction(r.instruction));
            const auto& t = std::get<dsl::ModifyTranslation>(r.gt_program.back());
            const double expected = intent.amount.kind == pipeline::Amount::Kind::Units ? intent.amount.units
                                    : intent.amount.kind == pipeline::Amount::Kind::More ? 150.0
                                                                                        : 50.0;
            CHECK(std::hypot(t.dx, t.dy) == doctest::Approx(expected).epsilon(1e-3));
            break;
        }
        default:
            break;
        }
    }
    for (Behavior b : pipeline::generated_behaviors())
        CHECK(seen[b] > 0);
}

TEST_CASE("a wait record on crossing paths")
{
    const Dataset& d = small_dataset();
    const auto it = std::find_if(d.records.begin(), d.records.end(),
                                 [](const auto& r) { return r.behavior == Behavior::Wait; });
    REQUIRE(it != d.records.end());
    CHECK(it->instruction.find("let me pass") != std::string::npos);
    const auto& w = std::get<dsl::Wait>(it->gt_program.back());
    const auto session = record_session(d.map(it->map_id), *it);
    const auto sel = std::size_t(std::get<dsl::SelectPath>(it->gt_program.front()).path_index);
    auto path = session.candidates.candidates[sel].path;
    path.waypoints[std::size_t(w.step)].dwell += w.t;
    CHECK_FALSE(editverify::first_conflict(session, path).has_value());
}

TEST_CASE("generation is deterministic")
{
    DatasetConfig c;
    c.maps = 3;
    const auto a = generate_dataset(c, 77);
    const auto b = generate_dataset(c, 77);
    CHECK(a.records == b.records);
    CHECK(a.maps == b.maps);
}

TEST_CASE("paraphrase hook")
{
    DatasetConfig c;
    c.maps = 2;
    c.records.paraphrase = [](const std::string& text) { return "Please " + text + "."; };
    const auto d = generate_dataset(c, 3);
    REQUIRE_FALSE(d.records.empty());
    for (const auto& r : d.records)
        CHECK(r.instruction.rfind("Please ", 0) == 0);
    c.records.paraphrase = [](const std::string&) { return std::string("sing a song"); };
    CHECK(generate_dataset(c, 3).records.empty());
}

TEST_CASE("export")
{
    const auto root = std::filesystem::temp_directory_path() / "cape_test_export";
    std::filesystem::remove_all(root);
    Dataset d = small_dataset();
    d.records.resize(10);

    const auto files = export_dataset(d, root / "a", {true, 64});
    const auto lines = slurp(root / "a" / "records.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 10);
    const auto m = io::read_json(root / "a" / "manifest.json");
    CHECK(m["records"] == 10);
    std::int64_t total = 0;
    for (const auto& [k, v] : m["behaviors"].items())
        total += v.get<std::int64_t>();
    CHECK(total == 10);
    CHECK(std::filesystem::exists(root / "a" / "rasters" / "record_000009.ppm"));
    CHECK(slurp(root / "a" / "rasters" / "record_000000.ppm").rfind("P6", 0) == 0);
    CHECK(files.size() == 2 + 10 + 1);

    export_dataset(d, root / "b", {true, 64});
    for (const auto& f : files) {
        const auto rel = std::filesystem::relative(f, root / "a");
        CHECK(slurp(f) == slurp(root / "b" / rel));
    }

    CHECK_THROWS_AS(export_dataset(Dataset{}, root / "c"), std::invalid_argument);
    std::ofstream(root / "blocker") << "x";
    try {
        export_dataset(d, root / "blocker" / "inner");
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("blocker") != std::string::npos);
    }
    std::filesystem::remove_all(root);
}

TEST_CASE("random statements round trip")
{
    Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
        const std::vector<dsl::Statement> prog{random_statement(rng, {"robot", "human"})};
        CHECK(dsl::parse(dsl::print(prog)).statements() == prog);
    }
}
