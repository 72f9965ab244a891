#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "kdaudit/experiment.hpp"

namespace {

kdaudit::ExperimentConfig load_config(const std::string& config_path, const std::string& out_dir,
                                      long long seed_override) {
    kdaudit::ExperimentConfig cfg = config_path.empty()
                                        ? kdaudit::ExperimentConfig::defaults()
                                        : kdaudit::ExperimentConfig::load(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kdaudit: knowledge-distillation privacy audit workbench"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    long long seed_override = -1;
    bool resume = false;
    app.add_option("--config", config_path, "experiment config file (JSON)");
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--seed", seed_override, "run a single seed instead of the config's list");
    app.add_flag("--resume", resume, "reuse completed stages from the output directory");

    auto* cmd_split = app.add_subcommand("split", "generate corpus, tokenizer and data splits");
    auto* cmd_teacher =
        app.add_subcommand("train-teacher", "train the teacher and reference models");
    auto* cmd_distill = app.add_subcommand("distill", "distill every (student size, recipe) pair");
    auto* cmd_attack = app.add_subcommand("attack", "run the attack battery on all models");
    auto* cmd_memorize = app.add_subcommand("memorize", "joint teacher/student extraction report");
    auto* cmd_probe = app.add_subcommand("blockprobe", "per-block privacy probe of the teacher");
    auto* cmd_all = app.add_subcommand("run-all", "full pipeline end to end");
    auto* cmd_ablate = app.add_subcommand("ablate", "sweep one design axis");
    std::string axis = "divergence";
    cmd_ablate->add_option("--axis", axis, "divergence | sgo_ratio | student_size");
    auto* cmd_report = app.add_subcommand("report", "emit heatmap CSVs from matrix.json");

    CLI11_PARSE(app, argc, argv);

    try {
        const kdaudit::ExperimentConfig cfg = load_config(config_path, out_dir, seed_override);
        if (cmd_split->parsed()) {
            kdaudit::stage_split(cfg, resume);
        } else if (cmd_teacher->parsed()) {
            kdaudit::stage_train_teacher(cfg, resume);
        } else if (cmd_distill->parsed()) {
            kdaudit::stage_distill(cfg, resume);
        } else if (cmd_attack->parsed()) {
            kdaudit::stage_attacks(cfg, resume);
        } else if (cmd_memorize->parsed()) {
            kdaudit::stage_memorize(cfg, resume);
        } else if (cmd_probe->parsed()) {
            kdaudit::stage_blockprobe(cfg, resume);
        } else if (cmd_all->parsed()) {
            const kdaudit::RunResult result = kdaudit::run_experiment(cfg, resume);
            std::printf("models: %zu, failed stages: %d\n", result.matrix.models().size(),
                        result.failed_cells);
            std::printf("outputs in %s\n", cfg.out_dir.c_str());
            if (result.failed_cells > 0) return 3;
        } else if (cmd_ablate->parsed()) {
            const nlohmann::json report = kdaudit::ablate(cfg, axis, resume);
            std::printf("%s\n", report.dump(2).c_str());
        } else if (cmd_report->parsed()) {
            const nlohmann::json report = kdaudit::emit_report(cfg);
            std::printf("%s\n", report.dump(2).c_str());
        }
        return 0;
    } catch (const kdaudit::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
