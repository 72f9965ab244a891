#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kdaudit/tokenizer.hpp"

namespace kdaudit {

/// One instruction-following record. `category` carries the task tag used
/// for grouped evaluation; it is empty for untagged user data.
struct Sample {
    std::string prompt_text;
    std::string response_text;
    std::string category;
};

/// Disjoint corpus splits. The teacher trains on `private_set`; distillation
/// sees only `public_set`. `members` is a subset of the private split;
/// `nonmembers`, `validation` and `reference_slice` are drawn from held-out
/// data and are disjoint from private, public and each other.
struct SplitDataset {
    std::vector<Sample> private_set;
    std::vector<Sample> public_set;
    std::vector<Sample> members;
    std::vector<Sample> nonmembers;
    std::vector<Sample> validation;
    std::vector<Sample> reference_slice;
    std::uint64_t split_seed = 0;
};

struct SplitSpec {
    double private_fraction = 1.0 / 3.0;
    double public_fraction = 1.0 / 3.0;
    int member_count = 200;
    int nonmember_count = 200;
    int validation_count = 200;
};

/// Seeded uniform split with exact-duplicate responses removed first.
/// Throws DataError when there are not enough samples for the request.
SplitDataset split(const std::vector<Sample>& samples, const SplitSpec& spec, std::uint64_t seed);

/// Fraction of distinct token n-grams of `a` that also occur in `b`.
double ngram_overlap(const std::vector<std::vector<int>>& a,
                     const std::vector<std::vector<int>>& b, int n);

/// Overlap over whitespace-delimited word n-grams of the samples' full text.
double word_ngram_overlap(const std::vector<Sample>& a, const std::vector<Sample>& b, int n);

/// Any full sample text present in both sets? Runs as part of the split audit.
bool exact_overlap_exists(const std::vector<Sample>& a, const std::vector<Sample>& b);

/// Chi-square homogeneity p-value of category proportions between two sets.
double category_balance_p_value(const std::vector<Sample>& a, const std::vector<Sample>& b);

/// Inserts `repetitions` copies of the canary at seeded random positions.
/// `canary_text` is "prompt\nresponse"; without a newline the first quarter
/// of the text is treated as the prompt. Throws InputError for repetitions < 1.
std::vector<Sample> inject_canary(const std::vector<Sample>& dataset, const std::string& canary_text,
                                  int repetitions, std::uint64_t seed);

Sample make_canary_sample(const std::string& canary_text);

/// Bundled synthetic instruction generator: seeded prompt/response pairs
/// across eight task tags.
std::vector<Sample> make_synthetic_corpus(int count, std::uint64_t seed);

const std::vector<std::string>& category_tags();

// Line-delimited record I/O (one JSON object per line: prompt/response/category).
std::vector<Sample> load_samples(const std::string& path);
void save_samples(const std::vector<Sample>& samples, const std::string& path);

/// Token sequence in model form: [BOS] prompt \n response [EOS], truncated
/// to fit `context_len`. `scored_from` is the index of the first response
/// token; positions before it are context only and carry no loss.
struct EncodedSample {
    std::vector<int> tokens;
    int scored_from = 0;
    std::string raw_text;
    std::string category;
};

EncodedSample encode_sample(const Tokenizer& tok, const Sample& s, int context_len);

}  // namespace kdaudit
