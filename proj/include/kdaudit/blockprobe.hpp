#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/corpus.hpp"
#include "kdaudit/model.hpp"

namespace kdaudit {

struct ProbeConfig {
    int n_perturbations = 8;
    double sigma = 0.005;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Per-block membership separability: one AUC per transformer block, from
/// the mean absolute loss deviation under block-local noise.
struct BlockLeakageReport {
    std::vector<double> auc_per_block;           // length n_blocks
    std::vector<double> mean_dloss_members;      // averaged over samples and draws
    std::vector<double> mean_dloss_nonmembers;
    ProbeConfig config;

    nlohmann::json to_json() const;
};

/// For each block l and draw n, perturbs only that block, measures
/// |loss_perturbed - loss_base| per sample, averages over draws, and scores
/// member/nonmember separability of the deviations (higher deviation =>
/// member). Base losses are computed once; noise is seeded per (l, n).
BlockLeakageReport per_block_probe(const Parameters& model, const std::vector<Sample>& members,
                                   const std::vector<Sample>& nonmembers, const Tokenizer& tok,
                                   const ProbeConfig& cfg);

/// Per-block AUC vector as delimited text for bar plots.
void save_block_auc(const BlockLeakageReport& report, const std::string& path);

}  // namespace kdaudit
