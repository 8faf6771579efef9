#include "cape/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    using namespace cape;
    cli::RunConfig config;
    CLI::App app{"Plan, edit, verify and simulate path edits from instructions"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    double margin = 0;
    std::vector<double> start, goal;
    std::string format = "json";

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Random seed (required for simulate, eval and datagen)");
        sub->add_option("--k", config.k, "Number of homotopy-distinct candidates")->check(CLI::PositiveNumber);
        sub->add_option("--margin", margin, "Extra obstacle clearance")->check(CLI::NonNegativeNumber);
        sub->add_flag("--single-path", config.single_path, "Plan a single candidate");
        sub->add_flag("--no-verify", config.no_verify, "Apply edits without verification");
        sub->add_option("--synth", config.synth, "Synthesizer")->check(CLI::IsMember({"scripted", "external"}));
        sub->add_option("--endpoint-config", config.endpoint_config, "Endpoint JSON for --synth external")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", config.out, "Output directory");
        sub->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));
    };

    auto* plan = app.add_subcommand("plan", "Write candidate paths as an edit session");
    plan->add_option("--scenario", config.scenario, "Scenario file")->check(CLI::ExistingFile);
    plan->add_option("--agent", config.agent, "Agent to plan for (default: first robot)");
    plan->add_option("--map", config.map, "Map file, with --start and --goal")->check(CLI::ExistingFile);
    plan->add_option("--start", start, "x,y,theta")->delimiter(',')->expected(3);
    plan->add_option("--goal", goal, "x,y")->delimiter(',')->expected(2);
    plan->add_option("--radius", config.body.radius, "Agent radius")->check(CLI::PositiveNumber);

    auto* edit = app.add_subcommand("edit", "Apply a program to a session and print the outcome");
    auto* verify = app.add_subcommand("verify", "Report the lines a program would have rejected");
    for (auto* sub : {edit, verify}) {
        sub->add_option("--session", config.session, "Session file written by plan")->required()->check(CLI::ExistingFile);
        sub->add_option("--program", config.program, "Program file")->required()->check(CLI::ExistingFile);
    }

    auto* simulate = app.add_subcommand("simulate", "Run one episode");
    simulate->add_option("--scenario", config.scenario, "Scenario file")->required()->check(CLI::ExistingFile);

    auto* eval = app.add_subcommand("eval", "Run a scenario set and write SR/SEL/Time/Token reports");
    eval->add_option("--scenario-dir", config.scenario_dir, "Directory of scenario files")->check(CLI::ExistingDirectory);
    eval->add_option("--suite", config.suite, "Generated suite")
        ->check(CLI::IsMember({"parking", "household", "carry", "crossing", "crossing3", "adversarial"}));
    eval->add_option("--count", config.count, "Generated suite size")->check(CLI::PositiveNumber);
    eval->add_option("--threads", config.threads, "Worker threads (0: one per core)");

    auto* datagen = app.add_subcommand("datagen", "Generate a synthetic instruction dataset");
    datagen->add_option("--maps", config.maps, "Number of maps")->check(CLI::PositiveNumber);
    datagen->add_option("--scenarios-per-map", config.scenarios_per_map, "Scenes per map")->check(CLI::PositiveNumber);
    datagen->add_flag("--rasters", config.rasters, "Also write PPM rasters");

    auto* serve = app.add_subcommand("serve", "Serve the session API");
    serve->add_option("--port", config.port, "TCP port")->check(CLI::Range(0, 65535));

    for (auto* sub : {plan, edit, verify, simulate, eval, datagen, serve})
        common(sub);

    CLI11_PARSE(app, argc, argv);

    config.subcommand = app.get_subcommands().front()->get_name();
    const auto* sub = app.get_subcommands().front();
    if (sub->count("--seed"))
        config.seed = seed;
    if (sub->count("--margin"))
        config.margin = margin;
    if (start.size() == 3)
        config.start = geometry::Pose{start[0], start[1], start[2]};
    if (goal.size() == 2)
        config.goal = geometry::Point{goal[0], goal[1]};
    config.format = format == "csv" ? cli::Format::Csv : cli::Format::Json;

    try {
        return cli::run(config, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "cape " << config.subcommand << ": " << e.what() << "\n";
        return 2;
    }
}
