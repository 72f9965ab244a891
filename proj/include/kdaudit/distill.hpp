#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/corpus.hpp"
#include "kdaudit/graph.hpp"
#include "kdaudit/model.hpp"
#include "kdaudit/train.hpp"

namespace kdaudit {

enum class Technique { KD, SeqKD, ImitKD, GKD, MiniLLM, DistiLLM };
enum class DivergenceKind { KL, RKL, JSD, SRKL };
enum class DatasetStrategy { Public, TeacherFeedback, StudentFeedback, Mixed, AdaptiveMixed };

std::string technique_name(Technique t);
Technique technique_from_name(const std::string& name);
std::string divergence_name(DivergenceKind k);
DivergenceKind divergence_from_name(const std::string& name);
std::string strategy_name(DatasetStrategy s);

/// Technique selector plus the divergence/dataset pair it implies, with the
/// associated hyperparameters.
struct KDRecipe {
    Technique technique = Technique::KD;
    DivergenceKind divergence = DivergenceKind::KL;
    DatasetStrategy strategy = DatasetStrategy::Public;
    double beta = 0.5;       // JSD weight, in [0, 1]
    double alpha = 0.1;      // SRKL skew, in (0, 1]
    double sgo_ratio = 0.5;  // student-generated share for the fixed Mixed strategy
    std::uint64_t seed = 0;

    /// Canonical (divergence, dataset) defaults for each technique.
    static KDRecipe for_technique(Technique t, std::uint64_t seed = 0);

    void validate() const;
    nlohmann::json to_json() const;
    static KDRecipe from_json(const nlohmann::json& j);
};

/// Divergence between full next-token distributions given two logit
/// matrices (positions x vocab), summed over positions.
///   KL   = sum_p p (log p - log q)
///   RKL  = sum_q q (log q - log p)
///   JSD  = beta * KL + (1 - beta) * RKL
///   SRKL = KL(q, alpha p + (1 - alpha) q)
double divergence(const Tensor& p_logits, const Tensor& q_logits, DivergenceKind kind,
                  double beta = 0.5, double alpha = 0.1);

/// Differentiable form: teacher logits enter as constants, gradients flow
/// only through the student logits node.
int divergence_node(Graph& g, const Tensor& p_logits, int q_logits_node, DivergenceKind kind,
                    double beta = 0.5, double alpha = 0.1);

enum class Provenance { Public, Teacher, Student, Mixed };

struct FeedbackRecord {
    std::vector<int> prompt;    // [BOS] prompt \n
    std::vector<int> response;  // response tokens, EOS-terminated when emitted
    bool from_student = false;
};

struct FeedbackDataset {
    std::vector<FeedbackRecord> records;
    Provenance provenance = Provenance::Public;
    int skipped = 0;  // prompts whose generation produced no usable response
};

/// Public records in feedback form (prompt/response token split).
FeedbackDataset public_feedback(const std::vector<Sample>& samples, const Tokenizer& tok,
                                int context_len);

/// D_T: greedy teacher continuations of the given prompts.
FeedbackDataset build_teacher_feedback(const Parameters& teacher,
                                       const std::vector<std::vector<int>>& prompts,
                                       const GenerateConfig& gen);

/// D_S: sampled continuations from the current student.
FeedbackDataset build_student_feedback(const Parameters& student,
                                       const std::vector<std::vector<int>>& prompts,
                                       const GenerateConfig& gen);

/// Per-record seeded draw: student-generated with probability sgo_ratio,
/// public otherwise (with replacement from either side).
FeedbackDataset mix_datasets(const FeedbackDataset& public_part, const FeedbackDataset& sgo_part,
                             double sgo_ratio, std::uint64_t seed);

struct DistillOptions {
    int max_records_per_epoch = 0;  // 0 = all public records each epoch
    int feedback_prompts = 0;       // 0 = all prompts for generated datasets
    GenerateConfig generation;      // shared caps; mode is forced per builder
    double validation_fraction = 0.1;
};

struct DistillResult {
    Parameters student;
    TrainReport report;
    std::vector<double> sgo_ratio_trace;  // per-epoch, for mixed strategies
    int skipped_generations = 0;
};

/// Builds the per-epoch KD dataset for the recipe and trains the student to
/// minimize the recipe divergence between teacher and student next-token
/// distributions over the response region. The teacher is never modified.
DistillResult distill(const Parameters& teacher, const Parameters& student_init,
                      const std::vector<Sample>& public_data, const Tokenizer& tok,
                      const KDRecipe& recipe, const TrainConfig& train_cfg,
                      const DistillOptions& opts = {});

}  // namespace kdaudit
