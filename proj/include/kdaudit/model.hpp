#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/graph.hpp"
#include "kdaudit/tensor.hpp"

namespace kdaudit {

struct ModelConfig {
    int vocab_size = 0;
    int context_len = 128;
    int n_blocks = 4;
    int embed_dim = 128;
    int n_heads = 4;
    int mlp_ratio = 2;  // hidden width of the MLP as a multiple of embed_dim
    std::uint64_t seed = 0;
    bool tie_embedding = true;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// One transformer block's weight set. Blocks are the unit of per-block
/// perturbation; embeddings and head are not part of any block.
struct BlockWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor qkv_weight, qkv_bias;    // d x 3d, 3d
    Tensor proj_weight, proj_bias;  // d x d, d
    Tensor ln2_gain, ln2_bias;
    Tensor fc_weight, fc_bias;      // d x rd, rd
    Tensor out_weight, out_bias;    // rd x d, d

    template <typename F>
    void for_each(F&& f) {
        f("ln1_gain", ln1_gain);
        f("ln1_bias", ln1_bias);
        f("qkv_weight", qkv_weight);
        f("qkv_bias", qkv_bias);
        f("proj_weight", proj_weight);
        f("proj_bias", proj_bias);
        f("ln2_gain", ln2_gain);
        f("ln2_bias", ln2_bias);
        f("fc_weight", fc_weight);
        f("fc_bias", fc_bias);
        f("out_weight", out_weight);
        f("out_bias", out_bias);
    }
};

/// Block-structured model parameters: embeddings, an ordered list of block
/// weight sets, final norm, and an optional untied output head.
struct Parameters {
    ModelConfig config;
    Tensor token_embedding;  // V x d
    Tensor pos_embedding;    // context x d
    std::vector<BlockWeights> blocks;
    Tensor final_ln_gain, final_ln_bias;
    Tensor head_weight;  // V x d; empty when tied to the embedding

    template <typename F>
    void for_each_tensor(F&& f) {
        f("token_embedding", token_embedding);
        f("pos_embedding", pos_embedding);
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            const std::string prefix = "block" + std::to_string(l + 1) + ".";
            blocks[l].for_each([&](const std::string& name, Tensor& t) { f(prefix + name, t); });
        }
        f("final_ln_gain", final_ln_gain);
        f("final_ln_bias", final_ln_bias);
        if (!config.tie_embedding) f("head_weight", head_weight);
    }

    std::vector<Tensor*> tensor_list();
    std::vector<const Tensor*> tensor_list() const;
    std::int64_t parameter_count() const;
    bool all_finite() const;
    bool bitwise_equal(const Parameters& other) const;
};

/// Seeded Gaussian init, scale 0.02 for embeddings and weight matrices;
/// norm gains start at 1, all biases at 0.
Parameters init_parameters(const ModelConfig& config);

/// Block selector for perturb(): 1..n_blocks, or kAllBlocks for every block.
inline constexpr int kAllBlocks = 0;

/// Copy of `params` with i.i.d. N(0, sigma^2) noise added to the selected
/// block(s) only; embeddings, final norm and head are never touched.
Parameters perturb(const Parameters& params, int block_index, double sigma, std::uint64_t seed);

/// Forward pass recorded on `g`. `bound_params[i]` is the graph node bound
/// to tensor_list()[i]; `logits` is the T x V output node (row t scores
/// token t+1).
struct BoundForward {
    int logits = -1;
    std::vector<int> bound_params;
};

BoundForward forward(Graph& g, const Parameters& params, const std::vector<int>& tokens);

/// log p(token_t | tokens_<t) for t = 2..len (length len-1). Requires
/// 2 <= len <= context_len.
std::vector<double> token_logprobs(const Parameters& params, const std::vector<int>& tokens);

/// -mean(token_logprobs(tokens)).
double sequence_loss(const Parameters& params, const std::vector<int>& tokens);

struct NextTokenStats {
    Tensor log_probs;  // over the vocabulary
    double mu = 0.0;
    double sigma = 0.0;
};

/// Full next-token distribution after `prefix`, with the mean and standard
/// deviation of log-probabilities under that distribution.
NextTokenStats next_token_stats(const Parameters& params, const std::vector<int>& prefix);

/// Per-position token statistics from a single forward pass: realized token
/// log-probability plus the categorical mean/stddev at that position.
struct TokenStat {
    double logprob = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
};

std::vector<TokenStat> token_stats(const Parameters& params, const std::vector<int>& tokens);

struct GenerateConfig {
    int max_new = 32;
    enum class Mode { Greedy, Temperature } mode = Mode::Greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::optional<int> stop_token;
};

/// Returns prompt ++ generated tokens. Greedy mode is a pure function of
/// (params, prompt); the context window slides when the sequence outgrows it.
std::vector<int> generate(const Parameters& params, const std::vector<int>& prompt,
                          const GenerateConfig& cfg);

// Checkpoint format: one magic line, one JSON header line (config, seed,
// provenance, tensor directory with shapes), then raw little-endian 64-bit
// floats in directory order. Round-trips bit-exactly.
void save_checkpoint(const Parameters& params, const std::string& path,
                     const nlohmann::json& provenance = nlohmann::json::object());

struct Checkpoint {
    Parameters params;
    nlohmann::json provenance;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace kdaudit
