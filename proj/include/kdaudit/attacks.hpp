#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/corpus.hpp"
#include "kdaudit/model.hpp"

namespace kdaudit {

/// The attack battery. ExternalRef calibrates against an independently
/// trained reference model; PretrainRef against the teacher's
/// pre-fine-tuning checkpoint; MoPe is the white-box perturbation attack.
enum class AttackKind { Loss, Zlib, MinK, MinKpp, ExternalRef, PretrainRef, MoPe };

std::string attack_name(AttackKind k);
AttackKind attack_from_name(const std::string& name);

struct AttackConfig {
    AttackKind kind = AttackKind::Loss;
    double k_percent = 0.2;      // Min-K family tail fraction, in (0, 1]
    int mope_n = 8;              // perturbed models for MoPe
    double mope_sigma = 0.005;   // MoPe noise scale
    const Parameters* reference = nullptr;  // required for reference-based kinds
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Per-sample membership scores; higher always means "more likely member".
struct AttackScore {
    std::vector<double> scores;
};

// All scorers share the sign convention above and score every predictable
// position of the sequence (everything after the first token).

double score_loss(const Parameters& model, const std::vector<int>& tokens);

double score_zlib(const Parameters& model, const std::vector<int>& tokens,
                  const std::string& raw_text);

double score_mink(const Parameters& model, const std::vector<int>& tokens, double k);

double score_minkpp(const Parameters& model, const std::vector<int>& tokens, double k);

double score_reference(const Parameters& target, const Parameters& reference,
                       const std::vector<int>& tokens);

/// Population variance of the sequence loss across the perturbed models.
double score_mope(const std::vector<Parameters>& perturbed, const std::vector<int>& tokens);

double score_mope(const Parameters& model, const std::vector<int>& tokens, int n, double sigma,
                  std::uint64_t seed);

/// All-block perturbed copies used by MoPe; built once and shared read-only
/// across samples.
std::vector<Parameters> make_mope_models(const Parameters& model, int n, double sigma,
                                         std::uint64_t seed);

/// DEFLATE-compressed byte count at level 6 with an empty dictionary.
std::size_t zlib_compressed_size(const std::string& text);

/// Scores every member and nonmember sample with the configured attack.
std::pair<AttackScore, AttackScore> run_attack(const AttackConfig& cfg, const Parameters& model,
                                               const std::vector<Sample>& members,
                                               const std::vector<Sample>& nonmembers,
                                               const Tokenizer& tok);

}  // namespace kdaudit
