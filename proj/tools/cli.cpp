// SPDX-License-Identifier: Apache-2.0
//
// pdpalign command-line front end:
//   simulate  run the Monte-Carlo experiment and persist CSV or a JSON summary
//   align     draw one scene and print the chosen alignment plan as JSON
//   check     validate a plan's intra-cell orthogonality against a config

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdpalign/alignment.hpp"
#include "pdpalign/experiment.hpp"

namespace {

pdpalign::ExperimentConfig load_config(const std::string& path, bool seed_set,
                                       std::uint64_t seed) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j = nlohmann::json::parse(is);
    auto cfg = j.get<pdpalign::ExperimentConfig>();
    if (seed_set) cfg.master_seed = seed;
    return cfg;
}

pdpalign::AlignmentPlan derive_plan(const pdpalign::ExperimentConfig& cfg,
                                    const std::string& scheme) {
    pdpalign::SpatialScene scene = pdpalign::scene_for_run(cfg, 0);
    pdpalign::LinkBudget budget = pdpalign::build_budget(cfg);
    if (scheme == "full_length")
        return pdpalign::optimize_full_length(scene, budget, cfg.array, cfg.ofdm);
    return pdpalign::optimize_tone_groups(scene, budget, cfg.array, cfg.ofdm);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-cell massive MIMO OFDM pilot alignment simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string format = "csv";
    std::string plan_path;
    std::string scheme = "tone_group";
    std::uint64_t seed = 0;
    int threads = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        return cmd->add_option("--seed", seed, "override the config's master_seed");
    };

    CLI::App* sim = app.add_subcommand("simulate", "run the Monte-Carlo experiment");
    CLI::Option* sim_seed = add_common(sim);
    sim->add_option("--out", out_path, "output file path")->required();
    sim->add_option("--format", format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));
    sim->add_option("--threads", threads, "worker threads, 0 = all cores");

    CLI::App* align = app.add_subcommand("align", "print the chosen alignment plan");
    CLI::Option* align_seed = add_common(align);
    align->add_option("--scheme", scheme, "alignment scheme")
        ->check(CLI::IsMember({"tone_group", "full_length"}));

    CLI::App* check = app.add_subcommand("check", "validate a plan's intra-cell orthogonality");
    CLI::Option* check_seed = add_common(check);
    check->add_option("--plan", plan_path, "plan JSON file (derived from the config when omitted)")
        ->check(CLI::ExistingFile);
    check->add_option("--scheme", scheme, "scheme for the derived plan")
        ->check(CLI::IsMember({"tone_group", "full_length"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            auto cfg = load_config(config_path, !sim_seed->empty(), seed);
            auto records = pdpalign::run_experiment(cfg, threads);
            pdpalign::emit_results(records, cfg, out_path,
                                   format == "json" ? pdpalign::OutputFormat::json
                                                    : pdpalign::OutputFormat::csv);
            std::cerr << "wrote " << records.size() << " records to " << out_path << "\n";
        } else if (align->parsed()) {
            auto cfg = load_config(config_path, !align_seed->empty(), seed);
            nlohmann::json j = derive_plan(cfg, scheme);
            std::cout << j.dump(2) << "\n";
        } else if (check->parsed()) {
            auto cfg = load_config(config_path, !check_seed->empty(), seed);
            pdpalign::AlignmentPlan plan;
            if (!plan_path.empty()) {
                std::ifstream is(plan_path);
                if (!is) throw std::runtime_error("cannot open plan file: " + plan_path);
                plan = nlohmann::json::parse(is).get<pdpalign::AlignmentPlan>();
            } else {
                plan = derive_plan(cfg, scheme);
            }
            pdpalign::SpatialScene scene = pdpalign::scene_for_run(cfg, 0);
            try {
                pdpalign::check_intra_cell_orthogonality(plan, scene);
            } catch (const pdpalign::infeasible_plan& e) {
                std::cerr << "violation: " << e.what() << "\n";
                return 2;
            }
            std::cout << "plan is intra-cell orthogonal\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
