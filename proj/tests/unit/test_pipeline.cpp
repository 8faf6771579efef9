#include <doctest.h>

#include "cape/pipeline.hpp"
#include "support/reverify.hpp"
#include "support/sessions.hpp"

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

using namespace cape::pipeline;
using namespace cape::geometry;
namespace dsl = cape::dsl;
using cape::testing::candidate;
using cape::testing::straight;

namespace {

std::vector<dsl::Statement> scripted(const cape::editverify::EditSession& s, const std::string& text,
                                     std::optional<Speaker> speaker = std::nullopt)
{
    SynthesizerRequest r;
    r.session = s;
    r.instruction = text;
    r.speaker = speaker;
    return dsl::parse(ScriptedSynthesizer{}.synthesize(r).program_text).statements();
}

// 400x200 map, one straight path heading +x along y = 100.
cape::editverify::EditSession corridor_free_session()
{
    cape::editverify::EditSession s;
    s.map = ObstacleMap{400, 200, {}, {}};
    s.target = "robot";
    s.bodies["robot"] = AgentBody{5, 2};
    s.candidates.candidates.push_back(candidate(s.map, straight({{20, 100}, {200, 100}, {380, 100}})));
    return s;
}

dsl::Statement sel(std::int64_t i) { return dsl::SelectPath{i, "robot"}; }

} // namespace

TEST_CASE("instruction templates round trip")
{
    const std::vector<Intent> intents{
        MoveIntent{Direction::Forward, Frame::Robot, {Amount::Kind::Bit, 0}, std::nullopt},
        MoveIntent{Direction::Left, Frame::Robot, {Amount::Kind::Little, 0}, 2},
        MoveIntent{Direction::Right, Frame::Speaker, {Amount::Kind::More, 0}, std::nullopt},
        MoveIntent{Direction::Backward, Frame::Speaker, {Amount::Kind::Units, 12.5}, 3},
        MoveIntent{Direction::Backward, Frame::Robot, {Amount::Kind::Units, 7}, std::nullopt},
        RotateIntent{true, 30, std::nullopt},
        RotateIntent{false, 42.25, 1},
        SelectIntent{SelectIntent::Kind::Landmark, true, "kitchen table", 1},
        SelectIntent{SelectIntent::Kind::Landmark, false, "block_3", 1},
        SelectIntent{SelectIntent::Kind::Side, false, "", 1},
        SelectIntent{SelectIntent::Kind::Index, true, "", 2},
        DistanceIntent{true, "sofa", {Amount::Kind::Bit, 0}, std::nullopt},
        DistanceIntent{false, "block_12", {Amount::Kind::Units, 3.5}, 4},
        WaitIntent{},
        BackoutIntent{},
        PassIntent{},
    };
    for (const auto& intent : intents) {
        const std::string text = render(intent);
        CAPTURE(text);
        const auto back = parse_instruction(text);
        REQUIRE(back.has_value());
        CHECK(*back == intent);
    }
    CHECK(render(intents[1]) == "move to your left a little at waypoint 2");
    CHECK(render(intents[3]) == "move toward me 12.5 units at waypoint 3");
    CHECK(render(intents[7]) == "take the path to the left of the kitchen table");
}

TEST_CASE("instruction parsing is forgiving about form, strict about grammar")
{
    CHECK(parse_instruction("  Please MOVE forward a bit!  ") ==
          std::optional<Intent>(MoveIntent{Direction::Forward, Frame::Robot, {Amount::Kind::Bit, 0}, std::nullopt}));
    CHECK(parse_instruction("Wait for me.") == std::optional<Intent>(WaitIntent{}));
    CHECK(parse_instruction("could you get out of the way") == std::optional<Intent>(BackoutIntent{}));
    CHECK(parse_instruction("Go ahead, I will follow") == std::optional<Intent>(PassIntent{}));
    CHECK_FALSE(parse_instruction("dance for me").has_value());
    CHECK_FALSE(parse_instruction("move sideways a bit").has_value());
    CHECK_FALSE(parse_instruction("").has_value());
}

TEST_CASE("movement resolves in the robot and speaker frames")
{
    const auto s = corridor_free_session();
    // "a bit" is 5% of the shorter side: 10 units. Heading is +x.
    CHECK(scripted(s, "move forward a bit") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, 10, 0, "robot"}});
    CHECK(scripted(s, "move to your left a bit") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, 0, -10, "robot"}});
    CHECK(scripted(s, "move to your right more") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, 0, 30, "robot"}});
    CHECK(scripted(s, "move backward 12.5 units at waypoint 1") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, -12.5, 0, "robot"}});

    // Speaker below the robot faces up (-y); their left is -x.
    const Speaker below{"human", {20, 180}};
    CHECK(scripted(s, "move to my left a bit", below) ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, -10, 0, "robot"}});
    CHECK(scripted(s, "move away from me a bit", below) ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, 0, -10, "robot"}});

    // Diagonal speaker: heading 45 degrees toward the robot, right is 135.
    const Speaker diagonal{"human", {10, 90}};
    const double c = std::round(20 * std::cos(135 * M_PI / 180) * 100) / 100;
    const double d = std::round(20 * std::sin(135 * M_PI / 180) * 100) / 100;
    CHECK(scripted(s, "move to my right 20 units", diagonal) ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, c, d, "robot"}});
}

TEST_CASE("rotation and index selection")
{
    const auto s = corridor_free_session();
    CHECK(scripted(s, "rotate counterclockwise 45 degrees") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyRotation{0, -45, "robot"}});
    CHECK(scripted(s, "turn clockwise 90 degrees at waypoint 2") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyRotation{2, 90, "robot"}});
    CHECK(scripted(s, "take path 2") == std::vector<dsl::Statement>{sel(1)});
    CHECK(scripted(s, "take path 0").empty());
    CHECK(scripted(s, "sing a song").empty());
}

TEST_CASE("landmark selection picks the side by geometry")
{
    // Candidate 0 passes below the box, candidate 1 above. Travelling +x on a
    // y-down screen, the path above has the box on its right: it is the left path.
    cape::editverify::EditSession s;
    s.map = ObstacleMap{200, 200, {{"box", {80, 80, 40, 40}}, {"crate", {20, 10, 20, 20}}}, {}};
    s.target = "robot";
    s.bodies["robot"] = AgentBody{5, 2};
    s.candidates.candidates.push_back(candidate(s.map, straight({{20, 100}, {60, 150}, {140, 150}, {180, 100}})));
    s.candidates.candidates.push_back(candidate(s.map, straight({{20, 100}, {60, 50}, {140, 50}, {180, 100}})));

    auto above = [&](std::size_t i) {
        // y of the candidate where it passes the box centre
        const auto pts = s.candidates.candidates[i].path.polyline();
        for (std::size_t k = 0; k + 1 < pts.size(); ++k)
            if (pts[k].x <= 100 && pts[k + 1].x >= 100)
                return pts[k].y < 100;
        return false;
    };
    const std::int64_t left = above(0) ? 0 : 1;
    CHECK(scripted(s, "take the path to the left of the box") == std::vector<dsl::Statement>{sel(left)});
    CHECK(scripted(s, "take the path to the right of the Box") == std::vector<dsl::Statement>{sel(1 - left)});
    CHECK(scripted(s, "take the left path") == std::vector<dsl::Statement>{sel(left)});
    // Both candidates pass the crate on the same side: lowest index wins.
    CHECK(scripted(s, "take the path to the left of the crate") == std::vector<dsl::Statement>{sel(0)});
    CHECK(scripted(s, "take the path to the left of the piano").empty());
}

TEST_CASE("obstacle distance moves the nearest interior waypoint")
{
    const auto s = cape::testing::open_session();
    // Waypoints 1 (60,50) and 2 (140,50) are both sqrt(20^2 + 30^2) from the
    // box; the lower index wins. "a bit" = 10 along (-20,-30)/|.|.
    const double n = std::hypot(20.0, 30.0);
    const double dx = std::round(-20 / n * 10 * 100) / 100, dy = std::round(-30 / n * 10 * 100) / 100;
    CHECK(dx == -5.55);
    CHECK(dy == -8.32);
    CHECK(scripted(s, "stay away from the box a bit") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{1, dx, dy, "robot"}});
    // Waypoint 2 (140,50) sits at (20,-30) from the corner (120,80); closer is negative.
    CHECK(scripted(s, "move closer to the box 5 units at waypoint 2") ==
          std::vector<dsl::Statement>{sel(0), dsl::ModifyTranslation{2, std::round(-20 / n * 5 * 100) / 100,
                                                                     std::round(30 / n * 5 * 100) / 100, "robot"}});
}

TEST_CASE("wait clears a crossing with the minimal wait plus buffer")
{
    const auto s = cape::testing::crossing_session();
    // After waiting W the closest approach is W / sqrt(2) (continuous), so the
    // smallest clearing W satisfies W^2 / 2 >= 100.
    const auto minimal = static_cast<std::int64_t>(std::ceil(std::sqrt(200.0)));
    CHECK(minimal == 15);
    const auto program = scripted(s, "wait here, let me pass first");
    CHECK(program == std::vector<dsl::Statement>{sel(0), dsl::Wait{0, minimal + kWaitBuffer, "robot"}});

    const auto outcome = cape::editverify::apply_program(s, dsl::parse(dsl::print(program)));
    CHECK(outcome.count("Accepted") == 2);
    CHECK_FALSE(cape::testing::reverify(s, outcome.final_path).has_value());
}

TEST_CASE("backout steps off the other agent's line and waits")
{
    // Head-on on y = 100: waiting in place cannot help since the human walks
    // through the robot's position.
    cape::editverify::EditSession s;
    s.map = ObstacleMap{200, 200, {}, {}};
    s.target = "robot";
    s.bodies["robot"] = AgentBody{5, 1};
    s.bodies["human"] = AgentBody{5, 1};
    s.candidates.candidates.push_back(candidate(s.map, straight({{100, 100}, {60, 100}, {20, 100}})));
    s.others["human"] = Track{straight({{40, 100}, {110, 100}, {180, 100}}), 0};

    const auto program = scripted(s, "back out of the way");
    REQUIRE(program.size() == 3);
    // Reverse heading (+x) and the 45 degree offsets stay within 10 of the
    // line at two radii; -90 (up) at two radii is the first candidate point.
    CHECK(program[0] == sel(0));
    CHECK(program[1] == dsl::Statement{dsl::InsertWaypoint{0, 100, 90, std::nullopt, "robot"}});
    const auto wait = std::get<dsl::Wait>(program[2]);
    CHECK(wait.step == 1);

    const auto outcome = cape::editverify::apply_program(s, dsl::parse(dsl::print(program)));
    CHECK(outcome.count("Accepted") == 3);
    CHECK_FALSE(cape::testing::reverify(s, outcome.final_path).has_value());

    // Minimality: the wait without its buffer is the smallest clearing one.
    auto shorter = outcome.final_path;
    shorter.waypoints[1].dwell = wait.t - kWaitBuffer - 1;
    CHECK(cape::testing::reverify_conflicts(s, shorter).has_value());

    // The wait template falls back to the same backout here.
    CHECK(scripted(s, "wait for me") == program);
}

namespace {

World two_class_world()
{
    World w;
    w.map = ObstacleMap{300, 200, {{"pillar", {130, 70, 40, 60}}}, {}};
    w.agents.push_back({"robot", AgentBody{6, 3}, Pose{30, 100, 0}, {270, 100}, std::nullopt, std::nullopt});
    w.agents.push_back({"human", AgentBody{6, 3}, Pose{150, 20, 90}, {150, 180}, std::nullopt, std::nullopt});
    return w;
}

StepConfig step_config()
{
    StepConfig c;
    c.planner.k = 3;
    c.planner.seed = 11;
    return c;
}

} // namespace

TEST_CASE("cape_step selection, degradation and ablation")
{
    const World world = two_class_world();
    const ScriptedSynthesizer scripted_synth;

    SUBCASE("left path")
    {
        const auto r = cape_step(world, "robot", "take the left path", scripted_synth, step_config());
        REQUIRE(r.plan.self_candidates.candidates.size() == 2);
        // The left path passes the pillar with smaller y (above it).
        const auto& chosen = r.outcome.final_path;
        double min_y = 1e9;
        for (const auto& w : chosen.waypoints)
            min_y = std::min(min_y, w.pose.y);
        CHECK(min_y < 70);
        CHECK_FALSE(r.degraded);
        CHECK(r.response.token_count == 0);
    }
    SUBCASE("garbage text degrades to candidate 0")
    {
        const FixedSynthesizer garbage("I think you should go around it!\n???");
        const auto r = cape_step(world, "robot", "take the left path", garbage, step_config());
        CHECK(r.degraded);
        CHECK(r.outcome.final_path == r.plan.self_candidates.candidates[0].path);
        CHECK(path_feasible(world.map, r.outcome.final_path, 6, 0));
    }
    SUBCASE("unmatched instruction keeps candidate 0 without degradation")
    {
        const auto r = cape_step(world, "robot", "sing a song", scripted_synth, step_config());
        CHECK_FALSE(r.degraded);
        CHECK(r.outcome.final_path == r.plan.self_candidates.candidates[0].path);
    }
    SUBCASE("no_verify lets an edit into the pillar through")
    {
        auto config = step_config();
        const auto safe = cape_step(world, "robot", "take path 1", scripted_synth, config);
        const auto& c0 = safe.plan.self_candidates.candidates[0].path;
        REQUIRE(c0.size() >= 3);
        const Point p = c0.waypoints[1].pose.position();
        const std::string text = "select_path(0, \"robot\")\nmodify_translation(1, " +
                                 dsl::format_number(150 - p.x) + ", " + dsl::format_number(100 - p.y) +
                                 ", \"robot\")";
        const FixedSynthesizer into_pillar(text);
        const auto verified = cape_step(world, "robot", "move", into_pillar, config);
        CHECK(verified.outcome.feasible);
        config.verify_enabled = false;
        const auto unverified = cape_step(world, "robot", "move", into_pillar, config);
        CHECK_FALSE(unverified.outcome.feasible);
        CHECK(cape::testing::reverify_clearance(world.map, unverified.outcome.final_path, 6, 0).has_value());
    }
    SUBCASE("deterministic")
    {
        const auto a = cape_step(world, "robot", "move to your left a bit", scripted_synth, step_config());
        const auto b = cape_step(world, "robot", "move to your left a bit", scripted_synth, step_config());
        CHECK(a.outcome == b.outcome);
        CHECK(cape::io::to_json(a.outcome).dump() == cape::io::to_json(b.outcome).dump());
    }
    CHECK_THROWS_AS(cape_step(world, "robot", "", scripted_synth, step_config()), std::invalid_argument);
}

namespace {

// Minimal chat-completion endpoint on an ephemeral port.
struct MockEndpoint
{
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> calls{0};
    std::string last_auth;
    std::string last_body;
    std::mutex mutex;

    MockEndpoint(std::string content, int delay_ms)
    {
        server.Post("/v1/chat/completions", [this, content, delay_ms](const httplib::Request& req, httplib::Response& res) {
            ++calls;
            {
                std::lock_guard lock(mutex);
                last_auth = req.get_header_value("Authorization");
                last_body = req.body;
            }
            if (delay_ms)
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            const cape::io::Json body{
                {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                {"usage", {{"prompt_tokens", 30}, {"completion_tokens", 12}, {"total_tokens", 42}}}};
            res.set_content(body.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~MockEndpoint()
    {
        server.stop();
        thread.join();
    }

    EndpointConfig config(double timeout) const
    {
        EndpointConfig c;
        c.url = "http://127.0.0.1:" + std::to_string(port);
        c.model = "mock";
        c.api_key_env = "CAPE_TEST_SYNTH_KEY";
        c.timeout_seconds = timeout;
        return c;
    }
};

} // namespace

TEST_CASE("external synthesizer against a mock endpoint")
{
    ::setenv("CAPE_TEST_SYNTH_KEY", "secret-token", 1);
    const World world = two_class_world();

    SUBCASE("fenced program is applied like the scripted one")
    {
        MockEndpoint endpoint("```python\nselect_path(1, \"robot\")\n```", 0);
        const ExternalSynthesizer external(endpoint.config(5));
        const auto r = cape_step(world, "robot", "take path 2", external, step_config());
        const auto s = cape_step(world, "robot", "take path 2", ScriptedSynthesizer{}, step_config());
        CHECK_FALSE(r.degraded);
        CHECK(r.outcome == s.outcome);
        CHECK(r.response.token_count == 42);
        CHECK(endpoint.last_auth == "Bearer secret-token");
        const auto sent = cape::io::Json::parse(endpoint.last_body);
        CHECK(sent["model"] == "mock");
        const std::string user = sent["messages"].back()["content"];
        CHECK(user.find("INSTRUCTION: take path 2") != std::string::npos);
        CHECK(user.find("{target_agent") == std::string::npos);
        CHECK(user.find("Path 1:") != std::string::npos);
    }
    SUBCASE("timeout retries once then degrades")
    {
        MockEndpoint endpoint("select_path(1, \"robot\")", 1500);
        const ExternalSynthesizer external(endpoint.config(0.3));
        const auto r = cape_step(world, "robot", "take path 2", external, step_config());
        CHECK(r.degraded);
        CHECK(r.outcome.final_path == r.plan.self_candidates.candidates[0].path);
        CHECK(endpoint.calls.load() == 2);
    }
    SUBCASE("missing credential is a transport failure")
    {
        MockEndpoint endpoint("select_path(1, \"robot\")", 0);
        auto config = endpoint.config(5);
        config.api_key_env = "CAPE_TEST_UNSET_VARIABLE";
        const auto r = cape_step(world, "robot", "take path 2", ExternalSynthesizer(config), step_config());
        CHECK(r.degraded);
        CHECK(endpoint.calls.load() == 0);
    }
}

TEST_CASE("replay fixtures")
{
    const World world = two_class_world();
    const auto dir = std::filesystem::temp_directory_path() / "cape_replay_test";
    std::filesystem::remove_all(dir);

    auto recorder = std::make_shared<FixedSynthesizer>("select_path(1, \"robot\")");
    const ReplaySynthesizer record(dir, recorder);
    const auto first = cape_step(world, "robot", "take path 2", record, step_config());
    const ReplaySynthesizer replay(dir);
    const auto second = cape_step(world, "robot", "take path 2", replay, step_config());
    CHECK(first.outcome == second.outcome);
    CHECK(first.response.program_text == second.response.program_text);

    const auto missing = cape_step(world, "robot", "take path 1", replay, step_config());
    CHECK(missing.degraded);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checked-in transcript replays byte-identically")
{
    const World world = two_class_world();
    const auto dir = std::filesystem::path(CAPE_TEST_DATA) / "replay";
    std::shared_ptr<const Synthesizer> inner;
    if (std::getenv("CAPE_RECORD_FIXTURES"))
        inner = std::make_shared<FixedSynthesizer>("select_path(1, \"robot\")\nwait(0, 3, \"robot\")\n");
    const ReplaySynthesizer replay(dir, inner);
    const auto r = cape_step(world, "robot", "take the right path and wait a moment", replay, step_config());
    CHECK_FALSE(r.degraded);
    CHECK(r.response.program_text == "select_path(1, \"robot\")\nwait(0, 3, \"robot\")\n");

    // The stored request is exactly what this build sends.
    SynthesizerRequest request;
    request.session = make_session(world, "robot", r.plan, true);
    request.scene = describe_scene(request.session);
    request.instruction = "take the right path and wait a moment";
    const auto file = dir / (ReplaySynthesizer::fixture_key(request) + ".json");
    REQUIRE(std::filesystem::exists(file));
    CHECK(cape::io::read_json(file)["request"].dump() == request.to_json().dump());
}

TEST_CASE("goal inference heuristic")
{
    const std::vector<std::pair<std::string, Point>> ab{{"A", {100, 0}}, {"B", {-100, 0}}};
    CHECK(infer_goal_heuristic({{0, 0}, {10, 0}, {20, 0}}, ab).chosen == "A");
    CHECK(infer_goal_heuristic({{0, 0}, {-10, 0}}, ab).chosen == "B");
    CHECK(infer_goal_heuristic({{0, 0}, {-10, 0}}, {{"only", {5, 5}}}).chosen == "only");

    // L-shape: east then south. Total displacement (10,25) points at A, the
    // last leg points straight at B.
    const std::vector<Point> l_shape{{0, 0}, {5, 0}, {10, 0}, {10, 5}, {10, 10}, {10, 15}, {10, 20}, {10, 25}};
    const std::vector<std::pair<std::string, Point>> goals{{"A", {40, 100}}, {"B", {10, 70}}};
    const auto belief = infer_goal_heuristic(l_shape, goals);
    CHECK(belief.chosen == "B");
    // Oracle: A would win on displacement direction alone.
    const Point disp = l_shape.back() - l_shape.front();
    auto cosine = [](Point a, Point b) { return dot(a, b) / (norm(a) * norm(b)); };
    CHECK(cosine(disp, goals[0].second - l_shape.front()) > cosine(disp, goals[1].second - l_shape.front()));

    // Instruction keyword and tie-break by label.
    CHECK(infer_goal_heuristic({{0, 0}}, {{"B", {0, 10}}, {"A", {0, -10}}}).chosen == "A");
    CHECK(infer_goal_heuristic({{0, 0}}, {{"A", {0, -10}}, {"sink", {0, 10}}}, "going to the Sink").chosen == "sink");
    for (double s : belief.scores)
        CHECK(std::isfinite(s));
}

TEST_CASE("rendered map follows the legend and is deterministic")
{
    auto s = cape::testing::open_session();
    s.bodies["human"] = AgentBody{5, 2};
    s.others["human"] = Track{straight({{100, 190}, {190, 190}}), 0};
    const Raster a = render_session(s, 400);
    const Raster b = render_session(s, 400);
    CHECK(a == b);
    CHECK(a.width == 400);
    CHECK(a.height == 400);
    CHECK(a.at(200, 200) == colors::obstacle); // box centre (100,100) at scale 2
    CHECK(a.at(40, 200) == colors::robot);     // start (20,100)
    CHECK(a.at(200, 380) == colors::human);    // other agent at (100,190)
    CHECK(a.at(5, 5) == colors::background);
    const std::string ppm = a.to_ppm();
    CHECK(ppm.rfind("P6\n400 400\n255\n", 0) == 0);
    CHECK(ppm.size() == 15 + 400 * 400 * 3);
}

TEST_CASE("prompt assets are embedded")
{
    const auto names = prompt_asset_names();
    CHECK(names.size() == 8);
    CHECK(prompt_asset("simworld_edit").find("Generate DSL:") != std::string::npos);
    CHECK(prompt_asset("carry_edit").find("connected by a stick") != std::string::npos);
    CHECK_THROWS_AS(prompt_asset("nope"), std::invalid_argument);
}
