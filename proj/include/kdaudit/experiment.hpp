#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/attacks.hpp"
#include "kdaudit/blockprobe.hpp"
#include "kdaudit/corpus.hpp"
#include "kdaudit/distill.hpp"
#include "kdaudit/memorize.hpp"
#include "kdaudit/metrics.hpp"
#include "kdaudit/model.hpp"
#include "kdaudit/train.hpp"

namespace kdaudit {

struct StudentSpec {
    std::string name;
    int n_blocks = 2;
    int embed_dim = 96;
    int n_heads = 4;
    bool init_from_teacher = false;

    nlohmann::json to_json() const;
    static StudentSpec from_json(const nlohmann::json& j);
};

/// Attack selection as it appears in config files; model references are
/// resolved by the pipeline.
struct AttackSpec {
    AttackKind kind = AttackKind::Loss;
    double k_percent = 0.2;
    int mope_n = 8;
    double mope_sigma = 0.005;

    nlohmann::json to_json() const;
    static AttackSpec from_json(const nlohmann::json& j);
};

/// The whole experiment, reproducible from this value alone. Every stage
/// seed is derived from the per-run seed via labeled streams.
struct ExperimentConfig {
    int version = 1;

    // corpus
    std::string corpus_source = "synthetic";  // "synthetic" or a JSONL path
    int corpus_size = 6000;
    std::uint64_t corpus_seed = 1234;
    std::string tokenizer_mode = "char";  // "char" | "bpe"
    int bpe_vocab = 512;
    SplitSpec split;
    std::string canary_text;
    int canary_repetitions = 10;

    // models and training
    ModelConfig teacher;  // vocab_size is filled from the tokenizer
    TrainConfig teacher_train;
    TrainConfig reference_train;
    int reference_slice = 1200;
    std::vector<StudentSpec> students;
    std::vector<std::string> recipes;  // technique names
    TrainConfig distill_train;
    DistillOptions distill_options;
    double recipe_beta = 0.5;
    double recipe_alpha = 0.1;
    double recipe_sgo_ratio = 0.5;

    // evaluation
    std::vector<AttackSpec> attacks;
    ProbeConfig probe;
    int memorize_prompt_tokens = 8;
    int memorize_victim_cap = 32;
    int utility_prompts = 100;

    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string out_dir = "out";

    static ExperimentConfig defaults();
    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    std::uint64_t config_hash() const;
};

/// Attack-evaluation cells keyed (model, attack, metric, seed), with
/// mean/variance aggregation across seeds. Serialization is deterministic.
class ResultMatrix {
public:
    void set(const std::string& model, const std::string& attack, const std::string& metric,
             std::uint64_t seed, double value);
    std::optional<double> get(const std::string& model, const std::string& attack,
                              const std::string& metric, std::uint64_t seed) const;
    std::optional<double> mean(const std::string& model, const std::string& attack,
                               const std::string& metric) const;
    std::optional<double> variance(const std::string& model, const std::string& attack,
                                   const std::string& metric) const;
    std::vector<std::string> models() const;
    std::vector<std::string> attacks() const;
    bool empty() const { return cells_.empty(); }

    nlohmann::json to_json() const;
    static ResultMatrix from_json(const nlohmann::json& j);
    std::string to_csv() const;
    static ResultMatrix from_csv(const std::string& text);

private:
    // model -> attack -> metric -> seed -> value
    std::map<std::string, std::map<std::string, std::map<std::string, std::map<std::uint64_t, double>>>>
        cells_;
};

struct RunResult {
    ResultMatrix matrix;
    nlohmann::json summary;
    int failed_cells = 0;
};

/// Full pipeline: split, teacher (+ pre-fine-tune checkpoint), reference,
/// distill grid, attack battery, memorization, per-block probe, reports.
/// Stages are checkpointed under cfg.out_dir and skipped on resume.
RunResult run_experiment(const ExperimentConfig& cfg, bool resume = false);

// Individual stages, exposed for the CLI subcommands. Each one reuses
// completed prerequisite artifacts from the output directory.
void stage_split(const ExperimentConfig& cfg, bool resume);
void stage_train_teacher(const ExperimentConfig& cfg, bool resume);
void stage_distill(const ExperimentConfig& cfg, bool resume);
ResultMatrix stage_attacks(const ExperimentConfig& cfg, bool resume);
void stage_memorize(const ExperimentConfig& cfg, bool resume);
void stage_blockprobe(const ExperimentConfig& cfg, bool resume);

/// Ablation sweeps: "divergence" (loss type on the first student),
/// "sgo_ratio" (student-generated data share), "student_size".
nlohmann::json ablate(const ExperimentConfig& cfg, const std::string& axis, bool resume = false);

/// Renders matrix.json into per-size heatmap CSVs and a 4-decimal summary.
nlohmann::json emit_report(const ExperimentConfig& cfg);

}  // namespace kdaudit
