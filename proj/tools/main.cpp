#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "neurovid/pipeline.hpp"

using namespace neurovid;

int main(int argc, char** argv) {
    CLI::App app{"fMRI-to-video reconstruction pipeline"};
    app.require_subcommand(1);

    std::string config_path, run_dir = "run";
    bool resume = false;
    int64_t seed = -1;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--run-dir", run_dir, "run directory");
    app.add_option("--seed", seed, "override the config seed");
    app.add_flag("--resume", resume, "resume a partially completed run");

    int64_t sampler_steps = -1;
    double sampler_scale = -1.0;
    std::string sampler_negative;

    std::vector<CLI::App*> subs;
    for (const auto& name : Pipeline::stage_names())
        subs.push_back(app.add_subcommand(name));
    CLI::App* sample_cmd = subs[5];
    sample_cmd->add_option("--steps", sampler_steps, "DDIM steps");
    sample_cmd->add_option("--guidance-scale", sampler_scale, "guidance scale");
    sample_cmd->add_option("--negative", sampler_negative,
                           "negative condition: avg-fmri or null");
    CLI::App* ablate_cmd = app.add_subcommand("ablate");
    CLI::App* report_cmd = app.add_subcommand("report");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{}
                                            : RunConfig::from_file(config_path);
        if (seed >= 0) cfg.seed = (uint64_t)seed;
        cfg.validate();
        Pipeline pipe(cfg, run_dir);
        if (sampler_steps > 0) pipe.steps_override = sampler_steps;
        if (sampler_scale >= 0) pipe.scale_override = sampler_scale;
        if (!sampler_negative.empty()) pipe.negative_override = sampler_negative;

        if (ablate_cmd->parsed()) {
            pipe.ablate();
        } else if (report_cmd->parsed()) {
            pipe.report();
        } else {
            for (size_t i = 0; i < subs.size(); ++i)
                if (subs[i]->parsed()) pipe.run_stage(Pipeline::stage_names()[i]);
        }
    } catch (const ConfigError& e) {
        fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const PrereqError& e) {
        fprintf(stderr, "prerequisite error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
