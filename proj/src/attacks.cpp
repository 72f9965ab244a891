#include "kdaudit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <zlib.h>

namespace kdaudit {

std::string attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::Loss: return "loss";
        case AttackKind::Zlib: return "zlib";
        case AttackKind::MinK: return "min_k";
        case AttackKind::MinKpp: return "min_k_pp";
        case AttackKind::ExternalRef: return "external_ref";
        case AttackKind::PretrainRef: return "pretrain_ref";
        case AttackKind::MoPe: return "mope";
    }
    return "loss";
}

AttackKind attack_from_name(const std::string& name) {
    if (name == "loss") return AttackKind::Loss;
    if (name == "zlib") return AttackKind::Zlib;
    if (name == "min_k") return AttackKind::MinK;
    if (name == "min_k_pp") return AttackKind::MinKpp;
    if (name == "external_ref") return AttackKind::ExternalRef;
    if (name == "pretrain_ref") return AttackKind::PretrainRef;
    if (name == "mope") return AttackKind::MoPe;
    throw ConfigError("unknown attack: " + name);
}

void AttackConfig::validate() const {
    if (k_percent <= 0.0 || k_percent > 1.0) throw ConfigError("k_percent must lie in (0, 1]");
    if (kind == AttackKind::MoPe) {
        if (mope_n < 2) throw ConfigError("MoPe needs at least 2 perturbed models");
        if (mope_sigma <= 0.0) throw ConfigError("MoPe sigma must be > 0");
    }
    if ((kind == AttackKind::ExternalRef || kind == AttackKind::PretrainRef) && reference == nullptr)
        throw ConfigError("reference model required for " + attack_name(kind));
}

nlohmann::json AttackConfig::to_json() const {
    return {{"kind", attack_name(kind)}, {"k_percent", k_percent},   {"mope_n", mope_n},
            {"mope_sigma", mope_sigma},  {"has_reference", reference != nullptr},
            {"seed", seed}};
}

namespace {

// Mean over the m selected entries, summed in ascending index order so that
// selecting all entries reproduces score_loss bit for bit.
double mean_of_selected(const std::vector<double>& values, std::vector<std::size_t> selected) {
    std::sort(selected.begin(), selected.end());
    double sum = 0.0;
    for (std::size_t i : selected) sum += values[i];
    return sum / static_cast<double>(selected.size());
}

std::vector<std::size_t> smallest_indices(const std::vector<double>& values, std::size_t m) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    idx.resize(m);
    return idx;
}

std::size_t tail_count(std::size_t total, double k) {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(k * static_cast<double>(total))));
}

}  // namespace

double score_loss(const Parameters& model, const std::vector<int>& tokens) {
    const std::vector<double> lp = token_logprobs(model, tokens);
    std::vector<std::size_t> all(lp.size());
    std::iota(all.begin(), all.end(), 0);
    return mean_of_selected(lp, std::move(all));
}

std::size_t zlib_compressed_size(const std::string& text) {
    if (text.empty()) throw InputError("zlib score needs non-empty text");
    uLongf bound = compressBound(static_cast<uLong>(text.size()));
    std::vector<Bytef> buf(bound);
    const int rc = compress2(buf.data(), &bound, reinterpret_cast<const Bytef*>(text.data()),
                             static_cast<uLong>(text.size()), 6);
    if (rc != Z_OK) throw NumericError("zlib compression failed");
    return static_cast<std::size_t>(bound);
}

double score_zlib(const Parameters& model, const std::vector<int>& tokens,
                  const std::string& raw_text) {
    const std::vector<double> lp = token_logprobs(model, tokens);
    double nll = 0.0;
    for (double v : lp) nll -= v;
    return -nll / static_cast<double>(zlib_compressed_size(raw_text));
}

double score_mink(const Parameters& model, const std::vector<int>& tokens, double k) {
    if (k <= 0.0 || k > 1.0) throw ConfigError("k_percent must lie in (0, 1]");
    const std::vector<double> lp = token_logprobs(model, tokens);
    return mean_of_selected(lp, smallest_indices(lp, tail_count(lp.size(), k)));
}

double score_minkpp(const Parameters& model, const std::vector<int>& tokens, double k) {
    if (k <= 0.0 || k > 1.0) throw ConfigError("k_percent must lie in (0, 1]");
    const std::vector<TokenStat> stats = token_stats(model, tokens);
    std::vector<double> z(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        // degenerate categorical: the normalized score carries no signal
        z[i] = stats[i].sigma < 1e-12 ? 0.0 : (stats[i].logprob - stats[i].mu) / stats[i].sigma;
    }
    return mean_of_selected(z, smallest_indices(z, tail_count(z.size(), k)));
}

double score_reference(const Parameters& target, const Parameters& reference,
                       const std::vector<int>& tokens) {
    if (target.config.vocab_size != reference.config.vocab_size)
        throw ConfigError("target and reference models use different vocabularies");
    return score_loss(target, tokens) - score_loss(reference, tokens);
}

std::vector<Parameters> make_mope_models(const Parameters& model, int n, double sigma,
                                         std::uint64_t seed) {
    if (n < 2) throw ConfigError("MoPe needs at least 2 perturbed models");
    if (sigma <= 0.0) throw ConfigError("MoPe sigma must be > 0");
    std::vector<Parameters> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(perturb(model, kAllBlocks, sigma, seed_for(seed, "mope", static_cast<std::uint64_t>(i))));
    return out;
}

double score_mope(const std::vector<Parameters>& perturbed, const std::vector<int>& tokens) {
    if (perturbed.size() < 2) throw ConfigError("MoPe needs at least 2 perturbed models");
    std::vector<double> losses(perturbed.size());
    for (std::size_t i = 0; i < perturbed.size(); ++i)
        losses[i] = sequence_loss(perturbed[i], tokens);
    // two-pass population variance
    double mean = 0.0;
    for (double v : losses) mean += v;
    mean /= static_cast<double>(losses.size());
    double var = 0.0;
    for (double v : losses) var += (v - mean) * (v - mean);
    return var / static_cast<double>(losses.size());
}

double score_mope(const Parameters& model, const std::vector<int>& tokens, int n, double sigma,
                  std::uint64_t seed) {
    return score_mope(make_mope_models(model, n, sigma, seed), tokens);
}

std::pair<AttackScore, AttackScore> run_attack(const AttackConfig& cfg, const Parameters& model,
                                               const std::vector<Sample>& members,
                                               const std::vector<Sample>& nonmembers,
                                               const Tokenizer& tok) {
    cfg.validate();
    if (members.empty() || nonmembers.empty())
        throw DataError("run_attack needs non-empty member and nonmember sets");
    {
        std::unordered_set<std::string> texts;
        for (const auto& s : members) texts.insert(s.prompt_text + "\n" + s.response_text);
        for (const auto& s : nonmembers)
            if (texts.count(s.prompt_text + "\n" + s.response_text))
                throw DataError("member and nonmember sets overlap");
    }

    std::vector<Parameters> mope_models;
    if (cfg.kind == AttackKind::MoPe)
        mope_models = make_mope_models(model, cfg.mope_n, cfg.mope_sigma, cfg.seed);

    const int ctx = model.config.context_len;
    auto score_set = [&](const std::vector<Sample>& set) {
        AttackScore out;
        out.scores.resize(set.size());
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < set.size(); ++i) {
            const EncodedSample enc = encode_sample(tok, set[i], ctx);
            switch (cfg.kind) {
                case AttackKind::Loss:
                    out.scores[i] = score_loss(model, enc.tokens);
                    break;
                case AttackKind::Zlib:
                    out.scores[i] = score_zlib(model, enc.tokens, enc.raw_text);
                    break;
                case AttackKind::MinK:
                    out.scores[i] = score_mink(model, enc.tokens, cfg.k_percent);
                    break;
                case AttackKind::MinKpp:
                    out.scores[i] = score_minkpp(model, enc.tokens, cfg.k_percent);
                    break;
                case AttackKind::ExternalRef:
                case AttackKind::PretrainRef:
                    out.scores[i] = score_reference(model, *cfg.reference, enc.tokens);
                    break;
                case AttackKind::MoPe:
                    out.scores[i] = score_mope(mope_models, enc.tokens);
                    break;
            }
        }
        return out;
    };
    return {score_set(members), score_set(nonmembers)};
}

}  // namespace kdaudit
