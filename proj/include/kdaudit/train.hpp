#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/corpus.hpp"
#include "kdaudit/model.hpp"

namespace kdaudit {

struct TrainConfig {
    int epochs = 12;
    int batch_size = 16;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    enum class Optimizer { Adam, SgdMomentum } optimizer = Optimizer::Adam;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double momentum = 0.9;
    int warmup_steps = 0;
    // When non-empty, only the listed blocks (1-based) receive updates;
    // embeddings, final norm and head stay frozen.
    std::vector<int> trainable_blocks;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainReport {
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> val_loss;    // empty when no validation data given
    std::string checkpoint_path;     // filled by the pipeline when persisted

    nlohmann::json to_json() const;
};

/// Next-token cross-entropy loss over the scored (response) region of one
/// encoded sequence.
double masked_loss(const Parameters& params, const EncodedSample& enc);

/// Mean of masked_loss over a set; exactly the mean of the individual values.
double dataset_loss(const Parameters& params, const std::vector<EncodedSample>& encs);

/// Splits an over-long tokenized sample into consecutive context-sized
/// chunks, preserving the scored region.
std::vector<EncodedSample> chunk_for_context(const EncodedSample& enc, int context_len);

/// Cross-entropy fine-tuning with loss restricted to response tokens.
/// Gradients are accumulated in sample order, so a fixed (seed, data,
/// config) gives bit-identical results at any thread count. Throws
/// NumericError on NaN loss.
std::pair<Parameters, TrainReport> train_lm(const Parameters& init, const std::vector<Sample>& data,
                                            const Tokenizer& tok, const TrainConfig& cfg,
                                            const std::vector<Sample>* validation = nullptr);

}  // namespace kdaudit
