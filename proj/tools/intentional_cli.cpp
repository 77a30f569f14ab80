#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "intentional/config.hpp"
#include "intentional/harness.hpp"
#include "intentional/suites.hpp"

using namespace intentional;

namespace {

struct RunFlags {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::optional<std::string> out;
    std::vector<std::string> overrides;
};

void add_run_flags(CLI::App* cmd, RunFlags& f)
{
    cmd->add_option("--seed", f.seed, "run a single seed");
    cmd->add_option("--steps", f.steps, "step budget (replaces any episode budget)");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--override", f.overrides, "dotted key=value assignment, repeatable")->take_all();
}

RunConfig apply_flags(ConfigMap map, const RunFlags& f)
{
    for (const auto& o : f.overrides) apply_override(map, o);
    if (f.seed) map["run.seeds"] = ConfigList{std::to_string(*f.seed)};
    if (f.steps) {
        map["run.total_steps"] = static_cast<std::int64_t>(*f.steps);
        map["run.episodes"] = std::int64_t{0};
    }
    if (f.out) map["run.output_dir"] = *f.out;
    auto cfg = run_config_from_map(map);
    cfg.validate();
    return cfg;
}

int execute(const RunConfig& cfg)
{
    const auto rec = run_experiment(cfg);
    write_outputs(rec, cfg.output_dir);
    auto diag = rec.diagnostics;
    std::cout << to_string(cfg.experiment) << ": " << rec.seeds.size() << " seed(s), " << rec.wall_time_s
              << " s, outputs in " << cfg.output_dir << "\n";
    if (diag.contains("flops")) {
        std::cout << diag["flops"]["table"].get<std::string>();
        diag["flops"].erase("table");
    }
    std::cout << diag.dump(2) << "\n";
    for (const auto& s : rec.seeds)
        if (s.abort_message) std::cerr << "seed " << s.seed << " aborted: " << *s.abort_message << "\n";
    return rec.aborted() ? 2 : 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Streaming reinforcement learning with intentional updates"};
    app.require_subcommand(1);

    RunFlags run_flags;
    std::string config_path;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("config", config_path, "config file")->required();
    add_run_flags(run, run_flags);

    RunFlags suite_flags;
    std::string suite_name;
    auto* suite = app.add_subcommand("suite", "run a canned experiment suite");
    suite->add_option("name", suite_name, "suite name")->required()->check(CLI::IsMember(suite_names()));
    add_run_flags(suite, suite_flags);

    auto* flops = app.add_subcommand("flops", "print the per-update cost table");
    auto* bias = app.add_subcommand("bias-demo", "print the action-reweighting demonstration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*run) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
            std::stringstream ss;
            ss << in.rdbuf();
            return execute(apply_flags(parse_config_text(ss.str()), run_flags));
        }
        if (*suite) return execute(apply_flags(run_config_to_map(suite_config(suite_name)), suite_flags));
        if (*flops) {
            std::cout << format_flops_table(flops_model());
            return 0;
        }
        if (*bias) {
            std::cout << detail::bias_demo_json().dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
