// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include "cape/cli.hpp"
#include "cape/datagen.hpp"
#include "cape/rng.hpp"
#include "cape/service.hpp"
#include "support/fuzz.hpp"
#include "support/grid_homotopy.hpp"
#include "support/reverify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace cape;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) { char b[64]; std::snprintf(b, sizeof b, f, a); return b; }

// Free point with clearance for the query body, drawn uniformly.
geometry::Point free_point(const geometry::ObstacleMap& m, double need, Rng& rng)
{
    for (;;) {
        const geometry::Point p{rng.uniform(need, m.width - need), rng.uniform(need, m.height - need)};
        if (geometry::clearance(m, p) >= need)
            return p;
    }
}

Verdict planner_properties()
{
    Rng rng(101);
    const double radius = 10, margin = 1;
    std::vector<double> times;
    std::size_t violations = 0, candidates = 0;
    for (int i = 0; i < 200; ++i) {
        datagen::MapGenConfig mc;
        mc.clutter_level = 1 + i % 3;
        const auto map = datagen::gen_map(mc, derive_seed(101, std::uint64_t(i)));
        planner::PlanQuery q;
        q.body = {radius, 1};
        q.margin = margin;
        geometry::Point a, b;
        do {
            a = free_point(map, radius + margin + 1, rng);
            b = free_point(map, radius + margin + 1, rng);
        } while (geometry::distance(a, b) < 400);
        q.start = geometry::Pose::at(a, 0);
        q.goal = b;
        const auto t0 = Clock::now();
        const auto set = planner::multi_candidate_plan(map, q, 3, std::uint64_t(i));
        times.push_back(seconds_since(t0));
        std::set<planner::HomotopySignature> seen;
        for (const auto& c : set.candidates) {
            ++candidates;
            const bool bad = testing::reverify_clearance(map, c.path, radius, margin).has_value() ||
                             c.path.front().pose.position() != a || c.path.back().pose.position() != b ||
                             c.signature != planner::h_signature(map, c.path) || !seen.insert(c.signature).second;
            violations += bad;
        }
        violations += set.candidates.empty() || set.candidates.size() > 3;
    }
    std::size_t wrong_classes = 0;
    for (int i = 0; i < 50; ++i) {
        const double w = rng.uniform(40, 300), h = rng.uniform(40, 300);
        const geometry::ObstacleMap map{1000, 1000, {{"box", {500 - w / 2, rng.uniform(300, 700 - h), w, h}}}, {}};
        planner::PlanQuery q;
        q.body = {radius, 1};
        q.start = geometry::Pose::at({50, rng.uniform(100, 900)}, 0);
        q.goal = {950, rng.uniform(100, 900)};
        wrong_classes += planner::multi_candidate_plan(map, q, 3, std::uint64_t(i)).candidates.size() != 2;
    }
    std::sort(times.begin(), times.end());
    const double median = (times[99] + times[100]) / 2;
    return {violations == 0 && wrong_classes == 0 && median < 1.0,
            std::to_string(candidates) + " candidates on 200 maps, " + std::to_string(violations) +
                " violations; single obstacle: " + std::to_string(50 - wrong_classes) + "/50 with 2 classes; median " +
                fmt("%.4f s", median)};
}

Verdict homotopy_oracle()
{
    Rng rng(202);
    std::size_t pairs = 0, agree = 0, equal = 0;
    for (int mi = 0; mi < 20; ++mi) {
        const int width = int(rng.integer(8, 30)), height = int(rng.integer(6, 30));
        const auto g = testing::random_grid_map(width, height, 3, rng);
        const auto m = g.to_obstacle_map();
        testing::Cell from{0, height / 2}, to{width - 1, height / 2};
        if (!g.free(from) || !g.free(to))
            from = {0, 0}, to = {width - 1, height - 1};
        std::vector<testing::GridPath> paths;
        // Short walks are enumerated exhaustively; longer detours are sampled.
        const std::size_t manhattan = std::size_t(std::abs(to.x - from.x) + std::abs(to.y - from.y)) + 1;
        if (manhattan <= 14) {
            auto walks = testing::enumerate_walks(g, from, to, manhattan + 4);
            for (std::size_t i = 0; i < walks.size() && paths.size() < 40; i += std::max<std::size_t>(1, walks.size() / 40))
                paths.push_back(walks[i]);
        }
        for (int i = 0; i < 40; ++i) {
            std::vector<testing::Cell> vias;
            for (int v = int(rng.integer(0, 3)); v > 0; --v) {
                const testing::Cell c{int(rng.integer(0, width - 1)), int(rng.integer(0, height - 1))};
                if (g.free(c))
                    vias.push_back(c);
            }
            if (auto p = testing::path_through(g, from, vias, to, rng))
                paths.push_back(*p);
        }
        for (std::size_t i = 0; i < paths.size(); ++i)
            for (std::size_t j = i + 1; j < paths.size(); ++j) {
                const bool oracle = testing::grid_word(g, paths[i]) == testing::grid_word(g, paths[j]);
                const bool ours = planner::h_signature(m, testing::centres(paths[i])) ==
                                  planner::h_signature(m, testing::centres(paths[j]));
                ++pairs;
                agree += oracle == ours;
                equal += oracle;
            }
    }
    return {pairs > 0 && agree == pairs && equal > 0 && equal < pairs,
            std::to_string(agree) + "/" + std::to_string(pairs) + " pairs agree (" + std::to_string(equal) +
                " homotopic) on 20 grid maps"};
}

Verdict dsl_round_trip()
{
    const auto t0 = Clock::now();
    Rng rng(303);
    const std::vector<std::string> agents{"robot", "human", "agent_2"};
    std::size_t failures = 0;
    for (int i = 0; i < 10000; ++i) {
        std::vector<dsl::Statement> program;
        for (int n = int(rng.integer(1, 6)); n > 0; --n)
            program.push_back(datagen::random_statement(rng, agents));
        const auto first = dsl::parse(dsl::print(program));
        const auto second = dsl::parse(dsl::print(first));
        failures += !first.valid() || first.statements() != program || second != first;
    }
    std::ifstream in(std::string(CAPE_TEST_DATA) + "/dsl_malformed.json");
    const auto corpus = io::Json::parse(in);
    std::size_t wrong = 0;
    for (const auto& c : corpus) {
        const auto errors = dsl::parse(c["text"].get<std::string>()).errors();
        bool ok = errors.size() == c["invalid"].size();
        for (std::size_t i = 0; ok && i < errors.size(); ++i)
            ok = errors[i].line == c["invalid"][i]["line"].get<std::size_t>() &&
                 dsl::to_string(errors[i].kind) == c["invalid"][i]["kind"].get<std::string>();
        wrong += !ok;
    }
    const double t = seconds_since(t0);
    return {failures == 0 && corpus.size() == 50 && wrong == 0 && t < 5.0,
            std::to_string(10000 - failures) + "/10000 round trips, " + std::to_string(corpus.size() - wrong) + "/" +
                std::to_string(corpus.size()) + " malformed cases, " + fmt("%.2f s", t)};
}

Verdict verifier_fuzz()
{
    Rng rng(404);
    int sessions = 0, programs = 0, violations = 0, unverified_violations = 0;
    while (sessions < 50) {
        auto s = testing::random_session(rng);
        if (!s)
            continue;
        ++sessions;
        auto unchecked = *s;
        unchecked.verify_enabled = false;
        for (int i = 0; i < 200; ++i, ++programs) {
            const auto program = dsl::parse(testing::random_program_text(rng, *s));
            violations += testing::reverify(*s, editverify::apply_program(*s, program).final_path).has_value();
            unverified_violations +=
                testing::reverify(unchecked, editverify::apply_program(unchecked, program).final_path).has_value();
        }
    }
    return {programs == 10000 && violations == 0 && unverified_violations >= 1,
            std::to_string(programs) + " programs over 50 sessions: " + std::to_string(violations) +
                " violations verified, " + std::to_string(unverified_violations) + " with --no-verify"};
}

std::vector<sim::EpisodeResult> run_all(const std::vector<sim::Scenario>& scenarios, const sim::SimConfig& config)
{
    std::vector<sim::EpisodeResult> out;
    for (const auto& s : scenarios)
        out.push_back(sim::run_episode(s, config));
    return out;
}

sim::SimConfig planner_only()
{
    sim::SimConfig c;
    c.policy_override = sim::Policy::PlannerOnly;
    return c;
}

Verdict two_agent()
{
    const auto t0 = Clock::now();
    const auto scenarios = sim::make_crossing_scenarios(2, 50, 505);
    const auto base = sim::compute_metrics(run_all(scenarios, planner_only()));
    const auto cape = sim::compute_metrics(run_all(scenarios, sim::SimConfig{}));
    const double t = seconds_since(t0);
    return {base.sr <= 40 && cape.sr >= 90 && cape.sel > base.sel && t < 120,
            "planner-only SR " + fmt("%.1f", base.sr) + " SEL " + fmt("%.1f", base.sel) + ", cape SR " +
                fmt("%.1f", cape.sr) + " SEL " + fmt("%.1f", cape.sel) + ", " + fmt("%.1f s", t)};
}

Verdict three_agent()
{
    const auto scenarios = sim::make_crossing_scenarios(3, 20, 606);
    const auto base = sim::compute_metrics(run_all(scenarios, planner_only()));
    const auto cape = sim::compute_metrics(run_all(scenarios, sim::SimConfig{}));
    return {cape.sr - base.sr >= 20,
            "planner-only SR " + fmt("%.1f", base.sr) + ", cape SR " + fmt("%.1f", cape.sr)};
}

Verdict ablations()
{
    const auto scenarios = sim::make_archetype_scenarios("household", 30, 707);
    const auto full = sim::compute_metrics(run_all(scenarios, sim::SimConfig{}));
    sim::SimConfig single;
    single.planner.single_path = true;
    const auto one = sim::compute_metrics(run_all(scenarios, single));
    sim::SimConfig unverified;
    unverified.verify_enabled = false;
    const auto nv = sim::compute_metrics(run_all(scenarios, unverified));
    return {one.sr <= full.sr && nv.sr <= full.sr,
            "default SR " + fmt("%.1f", full.sr) + ", single_path " + fmt("%.1f", one.sr) + ", no_verify " +
                fmt("%.1f", nv.sr)};
}

sim::EpisodeResult episode(bool success, geometry::Tick optimal, geometry::Tick taken)
{
    sim::EpisodeResult r;
    r.success = success;
    r.optimal_ticks = optimal;
    r.ticks_taken = taken;
    r.failure = success ? "" : "collision";
    return r;
}

Verdict metrics_examples()
{
    const std::vector<sim::EpisodeResult> none{episode(false, 10, 5), episode(false, 10, 30)};
    const std::vector<sim::EpisodeResult> all{episode(true, 10, 10)};
    const std::vector<sim::EpisodeResult> half{episode(true, 10, 20), episode(false, 10, 7)};
    const auto a = sim::compute_metrics(none), b = sim::compute_metrics(all), c = sim::compute_metrics(half);
    return {a.sr == 0 && a.sel == 0 && b.sr == 100 && b.sel == 100 && c.sr == 50 && c.sel == 25,
            "(" + fmt("%g", a.sr) + "," + fmt("%g", a.sel) + ") (" + fmt("%g", b.sr) + "," + fmt("%g", b.sel) +
                ") (" + fmt("%g", c.sr) + "," + fmt("%g", c.sel) + ")"};
}

Verdict datagen_conformance()
{
    datagen::DatasetConfig config;
    config.maps = 30;
    config.records.scenarios = 8;
    const auto dataset = datagen::generate_dataset(config, 909);
    std::size_t sampled = 0, out_of_range = 0, walls = 0, bad_canvas = 0;
    for (const auto& [id, map] : dataset.maps) {
        bad_canvas += map.width != 1000 || map.height != 1000;
        for (const auto& o : map.obstacles) {
            if (o.name.rfind("wall ", 0) == 0) {
                ++walls;
                continue;
            }
            ++sampled;
            out_of_range += o.rect.w < 20 || o.rect.w > 50 || o.rect.h < 20 || o.rect.h > 50;
        }
    }
    const std::size_t n = std::min<std::size_t>(1000, dataset.records.size());
    std::size_t rejections = 0, mismatches = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = dataset.records[i];
        const auto session = datagen::record_session(dataset.map(r.map_id), r);
        const auto outcome = editverify::apply_program(session, dsl::parse(dsl::print(r.gt_program)));
        rejections += outcome.count("Rejected") + outcome.count("Invalid");
        pipeline::SynthesizerRequest req;
        req.session = session;
        req.instruction = r.instruction;
        req.speaker = datagen::record_speaker(r);
        mismatches += dsl::parse(pipeline::ScriptedSynthesizer{}.synthesize(req).program_text).statements() != r.gt_program;
    }
    return {n == 1000 && out_of_range == 0 && bad_canvas == 0 && rejections == 0 && mismatches == 0,
            std::to_string(n) + " records; " + std::to_string(sampled) + " sampled obstacles, " +
                std::to_string(out_of_range) + " outside [20,50] (" + std::to_string(walls) + " structured walls); " +
                std::to_string(rejections) + " rejections; closed loop " + std::to_string(n - mismatches) + "/" +
                std::to_string(n)};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict determinism()
{
    const auto root = std::filesystem::temp_directory_path() / "cape_acceptance_eval";
    std::filesystem::remove_all(root);
    std::size_t differing = 0;
    for (const std::string suite : {"crossing", "household"}) {
        std::vector<std::string> outputs;
        for (const char* run : {"a", "b"}) {
            cli::RunConfig c;
            c.subcommand = "eval";
            c.suite = suite;
            c.count = 10;
            c.seed = 1010;
            c.out = root / (suite + run);
            std::ostringstream out;
            cli::run(c, out);
            outputs.push_back(out.str() + slurp(c.out / "metrics.json") + slurp(c.out / "episodes.jsonl") +
                              slurp(c.out / "report.csv"));
        }
        differing += outputs[0] != outputs[1];
    }

    service::SessionManager manager;
    using Cmd = service::Command;
    const std::vector<std::pair<io::Json, std::vector<Cmd>>> recordings{
        {{{"archetype", "carry"}, {"index", 0}, {"seed", 1}},
         {{Cmd::Kind::Instruction, "take the left path", "", "human", 0}, {Cmd::Kind::Advance, "", "", "", 2000}}},
        {{{"archetype", "carry"}, {"index", 1}, {"seed", 2}},
         {{Cmd::Kind::Advance, "", "", "", 40}, {Cmd::Kind::Instruction, "move to your right a bit", "", "human", 0},
          {Cmd::Kind::Advance, "", "", "", 2000}}},
        {{{"archetype", "carry"}, {"index", 2}, {"seed", 3}},
         {{Cmd::Kind::Instruction, "wait for me", "", "human", 0}, {Cmd::Kind::Advance, "", "", "", 2000}}},
        {{{"archetype", "carry"}, {"index", 3}, {"seed", 4}},
         {{Cmd::Kind::Instruction, "rotate counterclockwise 30 degrees", "", "human", 0},
          {Cmd::Kind::Advance, "", "", "", 2000}}},
        {{{"archetype", "household"}, {"seed", 5}}, {{Cmd::Kind::Advance, "", "", "", 5000}}},
        {{{"archetype", "household"}, {"index", 1}, {"seed", 6}},
         {{Cmd::Kind::Advance, "", "", "", 10}, {Cmd::Kind::Instruction, "wait here, let me pass first", "", "human", 0},
          {Cmd::Kind::Advance, "", "", "", 5000}}},
        {{{"archetype", "parking"}, {"seed", 7}}, {{Cmd::Kind::Advance, "", "", "", 5000}}},
        {{{"archetype", "parking"}, {"index", 2}, {"seed", 8}},
         {{Cmd::Kind::Advance, "", "", "", 25}, {Cmd::Kind::Instruction, "go ahead", "", "", 0},
          {Cmd::Kind::Advance, "", "", "", 5000}}},
        {{{"archetype", "crossing"}, {"seed", 9}},
         {{Cmd::Kind::Instruction, "back out of the way", "", "", 0}, {Cmd::Kind::Advance, "", "", "", 5000}}},
        {{{"archetype", "crossing"}, {"index", 3}, {"seed", 10}},
         {{Cmd::Kind::Advance, "", "", "", 15}, {Cmd::Kind::Instruction, "take path 1", "", "", 0},
          {Cmd::Kind::Advance, "", "", "", 5000}}},
    };
    std::size_t replayed = 0, terminal = 0;
    for (const auto& [request, commands] : recordings) {
        const auto s = manager.create(request);
        for (const auto& c : commands)
            if (s->status() == sim::Status::Running)
                s->apply(c);
        terminal += s->status() != sim::Status::Running;
        // The log goes through its text form, as an exported file would.
        const auto log = io::Json::parse(io::dump_line(s->log()));
        const auto again = service::replay(log, manager.config());
        replayed += again->scene() == s->scene() && again->events() == s->events() &&
                    io::to_json(again->result()) == io::to_json(s->result());
    }
    return {differing == 0 && replayed == recordings.size(),
            "eval reports identical for " + std::to_string(2 - differing) + "/2 suites; " + std::to_string(replayed) +
                "/" + std::to_string(recordings.size()) + " sessions replay identically (" + std::to_string(terminal) +
                " finished)"};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"planner properties", planner_properties},
        {"homotopy oracle equivalence", homotopy_oracle},
        {"dsl round trip and malformed corpus", dsl_round_trip},
        {"verifier soundness fuzz", verifier_fuzz},
        {"two-agent closed loop", two_agent},
        {"three-agent closed loop", three_agent},
        {"household ablation directions", ablations},
        {"metrics formula", metrics_examples},
        {"datagen conformance", datagen_conformance},
        {"determinism and replay", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
