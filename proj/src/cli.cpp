#include "cape/cli.hpp"

#include "cape/service.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <iostream>
#include <thread>

namespace cape::cli {

namespace {

const std::vector<std::string>& subcommands()
{
    static const std::vector<std::string> names{"plan", "edit", "verify", "simulate", "eval", "datagen", "serve"};
    return names;
}

const std::vector<std::string>& suites()
{
    static const std::vector<std::string> names{"parking", "household", "carry", "crossing", "crossing3", "adversarial"};
    return names;
}

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

void write_if(const std::filesystem::path& dir, const std::string& name, const std::string& content)
{
    if (dir.empty())
        return;
    std::filesystem::create_directories(dir);
    io::write_text(dir / name, content);
}

std::string agent_or_default(const sim::Scenario& s, const std::string& requested)
{
    if (!requested.empty()) {
        s.agent(requested);
        return requested;
    }
    for (const auto& a : s.agents)
        if (a.policy == sim::Policy::Cape && a.role == sim::Role::Robot)
            return a.id;
    return s.agents.front().id;
}

sim::Scenario load(const RunConfig& config, const std::filesystem::path& file)
{
    auto s = io::load_scenario(file);
    if (config.seed)
        s.seed = *config.seed;
    if (config.margin)
        s.margin = *config.margin;
    return s;
}

editverify::EditOutcome edit_outcome(const RunConfig& config)
{
    auto session = session_from_json(io::read_json(config.session));
    session.verify_enabled = !config.no_verify;
    const auto program = dsl::parse(io::read_text(config.program));
    return editverify::apply_program(session, program);
}

} // namespace

void RunConfig::validate() const
{
    if (!contains(subcommands(), subcommand))
        throw UsageError("unknown subcommand '" + subcommand + "'");
    if ((subcommand == "simulate" || subcommand == "eval" || subcommand == "datagen") && !seed)
        throw UsageError(subcommand + " requires --seed");
    if (synth != "scripted" && synth != "external")
        throw UsageError("--synth must be scripted or external");
    if (synth == "external" && endpoint_config.empty())
        throw UsageError("--synth external requires --endpoint-config");
    if (synth == "scripted" && !endpoint_config.empty())
        throw UsageError("--endpoint-config only applies to --synth external");
    if (k < 1)
        throw UsageError("--k must be at least 1");
    if (margin && !(*margin >= 0))
        throw UsageError("--margin must be non-negative");
    if (port < 0 || port > 65535)
        throw UsageError("--port must be in [0, 65535]");
    if (subcommand == "plan" && scenario.empty() && (map.empty() || !start || !goal))
        throw UsageError("plan needs --scenario, or --map with --start and --goal");
    if ((subcommand == "edit" || subcommand == "verify") && (session.empty() || program.empty()))
        throw UsageError(subcommand + " needs --session and --program");
    if (subcommand == "simulate" && scenario.empty())
        throw UsageError("simulate needs --scenario");
    if (subcommand == "eval") {
        if (scenario_dir.empty() == suite.empty())
            throw UsageError("eval needs exactly one of --scenario-dir and --suite");
        if (!suite.empty() && !contains(suites(), suite))
            throw UsageError("unknown suite '" + suite + "'");
        if (!suite.empty() && count < 1)
            throw UsageError("--count must be at least 1");
    }
    if (subcommand == "datagen" && out.empty())
        throw UsageError("datagen needs --out");
}

Json to_json(const editverify::EditSession& s)
{
    Json others = Json::object();
    for (const auto& [id, track] : s.others)
        others[id] = io::to_json(track);
    Json bodies = Json::object();
    for (const auto& [id, body] : s.bodies)
        bodies[id] = io::to_json(body);
    return Json{{"schema", kSessionFileSchema},
                {"map", io::to_json(s.map)},
                {"target", s.target},
                {"candidates", io::to_json(s.candidates)},
                {"others", std::move(others)},
                {"bodies", std::move(bodies)},
                {"margin", s.margin},
                {"inter_agent_margin", s.inter_agent_margin}};
}

editverify::EditSession session_from_json(const Json& j)
{
    if (io::text(j, "schema") != kSessionFileSchema)
        throw io::FormatError(std::string("schema: expected ") + kSessionFileSchema);
    editverify::EditSession s;
    s.map = io::map_from_json(io::field(j, "map"));
    s.target = io::text(j, "target");
    s.candidates = io::candidates_from_json(io::field(j, "candidates"));
    for (const auto& [id, track] : io::field(j, "others").items())
        s.others[id] = io::track_from_json(track);
    for (const auto& [id, body] : io::field(j, "bodies").items())
        s.bodies[id] = io::body_from_json(body);
    s.margin = io::number(j, "margin");
    s.inter_agent_margin = io::number(j, "inter_agent_margin");
    s.validate();
    return s;
}

std::shared_ptr<const pipeline::Synthesizer> make_synthesizer(const RunConfig& config)
{
    if (config.synth == "external")
        return std::make_shared<pipeline::ExternalSynthesizer>(pipeline::EndpointConfig::load(config.endpoint_config));
    return std::make_shared<pipeline::ScriptedSynthesizer>();
}

sim::SimConfig sim_config(const RunConfig& config)
{
    sim::SimConfig c;
    c.planner.k = config.k;
    c.planner.single_path = config.single_path;
    c.verify_enabled = !config.no_verify;
    c.synthesizer = make_synthesizer(config);
    if (config.suite == "adversarial")
        c.synthesizer = std::make_shared<HostileSuffixSynthesizer>(c.synthesizer);
    return c;
}

std::vector<sim::Scenario> resolve_scenarios(const RunConfig& config)
{
    std::vector<sim::Scenario> out;
    if (!config.suite.empty()) {
        const std::uint64_t seed = config.seed.value_or(0);
        if (config.suite == "crossing3")
            out = sim::make_crossing_scenarios(3, config.count, seed);
        else if (config.suite == "adversarial")
            out = sim::make_crossing_scenarios(2, config.count, seed);
        else
            out = sim::make_archetype_scenarios(config.suite, config.count, seed);
        if (config.margin)
            for (auto& s : out)
                s.margin = *config.margin;
        return out;
    }
    if (!std::filesystem::is_directory(config.scenario_dir))
        throw UsageError("scenario directory not found: " + config.scenario_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(config.scenario_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw UsageError("no *.json scenarios in " + config.scenario_dir.string());
    for (const auto& f : files)
        out.push_back(load(config, f));
    return out;
}

pipeline::SynthesizerResponse HostileSuffixSynthesizer::synthesize(const pipeline::SynthesizerRequest& request) const
{
    auto r = inner_->synthesize(request);
    if (!r.program_text.empty() && r.program_text.back() != '\n')
        r.program_text += '\n';
    r.program_text += "insert_waypoint(1, -50, -50, \"" + request.session.target + "\")\n";
    return r;
}

int cmd_plan(const RunConfig& config, std::ostream& out)
{
    planner::PlannerConfig pc;
    pc.k = config.k;
    pc.single_path = config.single_path;
    editverify::EditSession session;
    if (!config.scenario.empty()) {
        const auto scenario = load(config, config.scenario);
        const auto target = agent_or_default(scenario, config.agent);
        pc.seed = scenario.seed;
        const sim::Simulation sim(scenario, sim::SimConfig{});
        const auto world = sim.world();
        session = pipeline::make_session(world, target, pipeline::plan_for(world, target, pc), !config.no_verify);
    } else {
        planner::PlanQuery q;
        q.start = *config.start;
        q.goal = *config.goal;
        q.body = config.body;
        q.margin = config.margin.value_or(0.0);
        session.map = io::map_from_json(io::read_json(config.map));
        session.target = config.agent.empty() ? "robot" : config.agent;
        session.candidates =
            planner::multi_candidate_plan(session.map, q, config.single_path ? 1 : config.k, config.seed.value_or(0));
        session.candidates.for_agent = session.target;
        session.bodies[session.target] = config.body;
        session.margin = q.margin;
    }
    const std::string doc = io::dump_pretty(to_json(session));
    write_if(config.out, "session.json", doc);
    out << doc;
    return 0;
}

int cmd_edit(const RunConfig& config, std::ostream& out)
{
    const std::string doc = io::dump_pretty(io::to_json(edit_outcome(config)));
    write_if(config.out, "outcome.json", doc);
    out << doc;
    return 0;
}

int cmd_verify(const RunConfig& config, std::ostream& out)
{
    const auto outcome = edit_outcome(config);
    const Json full = io::to_json(outcome);
    Json rejected = Json::array();
    for (const auto& line : full["lines"])
        if (line["verdict"] == "Rejected" || line["verdict"] == "Invalid")
            rejected.push_back(line);
    const Json report{{"schema", "cape.verify_report/1"},
                      {"accepted", outcome.count("Accepted")},
                      {"rejected_count", rejected.size()},
                      {"feasible", outcome.feasible},
                      {"conflict_free", outcome.conflict_free},
                      {"rejected", std::move(rejected)},
                      {"lines", full["lines"]}};
    const std::string doc = io::dump_pretty(report);
    write_if(config.out, "verify.json", doc);
    out << doc;
    return 0;
}

int cmd_simulate(const RunConfig& config, std::ostream& out)
{
    const auto result = sim::run_episode(load(config, config.scenario), sim_config(config));
    std::string events;
    for (const auto& e : result.events)
        events += io::dump_line(io::to_json(e)) + "\n";
    write_if(config.out, "events.jsonl", events);
    write_if(config.out, "episode.json", io::dump_pretty(io::to_json(result)));
    const auto metrics = sim::compute_metrics(std::span(&result, 1));
    if (config.format == Format::Csv)
        out << eval_csv(result.scenario, metrics);
    else
        out << io::dump_pretty(io::to_json(result));
    return 0;
}

Json eval_report(const std::string& suite, const sim::MetricsSummary& metrics, const RunConfig& config)
{
    return Json{{"schema", kReportSchema},
                {"suite", suite},
                {"metrics", io::to_json(metrics)},
                {"config",
                 {{"seed", config.seed.value_or(0)},
                  {"k", config.k},
                  {"single_path", config.single_path},
                  {"no_verify", config.no_verify},
                  {"synth", config.synth},
                  {"margin", config.margin ? Json(*config.margin) : Json()}}}};
}

std::string eval_csv(const std::string& suite, const sim::MetricsSummary& m)
{
    return "suite,episodes,SR,SEL,Time(s),Token\n" + suite + "," + std::to_string(m.episodes) + "," +
           dsl::format_number(m.sr) + "," + dsl::format_number(m.sel) + "," + dsl::format_number(m.mean_time) + "," +
           dsl::format_number(m.mean_tokens) + "\n";
}

int cmd_eval(const RunConfig& config, std::ostream& out)
{
    const auto scenarios = resolve_scenarios(config);
    const auto sc = sim_config(config);
    std::vector<sim::EpisodeResult> results(scenarios.size());
    std::vector<std::exception_ptr> errors(scenarios.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers =
        std::min(scenarios.size(), config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < scenarios.size(); i = next++) {
                try {
                    results[i] = sim::run_episode(scenarios[i], sc);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (errors[i]) {
            try {
                std::rethrow_exception(errors[i]);
            } catch (const std::exception& e) {
                throw std::runtime_error("scenario " + scenarios[i].name + ": " + e.what());
            }
        }

    const std::string suite = config.suite.empty() ? config.scenario_dir.filename().string() : config.suite;
    const auto metrics = sim::compute_metrics(results);
    std::string episodes;
    for (const auto& r : results)
        episodes += io::dump_line(io::to_json(r)) + "\n";
    const std::string report = io::dump_pretty(eval_report(suite, metrics, config));
    const std::string csv = eval_csv(suite, metrics);
    write_if(config.out, "metrics.json", report);
    write_if(config.out, "episodes.jsonl", episodes);
    write_if(config.out, "report.csv", csv);
    out << (config.format == Format::Csv ? csv : report);
    return 0;
}

int cmd_datagen(const RunConfig& config, std::ostream& out)
{
    datagen::DatasetConfig dc;
    dc.maps = config.maps;
    dc.records.scenarios = config.scenarios_per_map;
    dc.records.k = config.k;
    if (config.margin)
        dc.records.margin = *config.margin;
    const auto dataset = datagen::generate_dataset(dc, *config.seed);
    datagen::ExportOptions options;
    options.rasters = config.rasters;
    datagen::export_dataset(dataset, config.out, options);
    out << io::dump_pretty(datagen::manifest(dataset));
    return 0;
}

int cmd_serve(const RunConfig& config, std::ostream& out)
{
    service::SessionManager sessions(sim_config(config));
    service::Server server(sessions);
    out << "serving on port " << config.port << std::endl;
    return server.listen("0.0.0.0", config.port) ? 0 : 1;
}

int run(const RunConfig& config, std::ostream& out)
{
    config.validate();
    const auto& s = config.subcommand;
    if (s == "plan")
        return cmd_plan(config, out);
    if (s == "edit")
        return cmd_edit(config, out);
    if (s == "verify")
        return cmd_verify(config, out);
    if (s == "simulate")
        return cmd_simulate(config, out);
    if (s == "eval")
        return cmd_eval(config, out);
    if (s == "datagen")
        return cmd_datagen(config, out);
    return cmd_serve(config, out);
}

} // namespace cape::cli
