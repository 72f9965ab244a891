#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kdaudit/common.hpp"

namespace kdaudit {

/// Reversible text <-> token-id mapping. Char mode enumerates the corpus
/// alphabet; BPE mode learns a merge table on top of it. The two highest
/// ids are reserved for BOS and EOS and are never produced by encode().
class Tokenizer {
public:
    enum class Mode { Char, Bpe };

    static Tokenizer train_char(const std::vector<std::string>& texts);
    static Tokenizer train_bpe(const std::vector<std::string>& texts, int vocab_target);

    Mode mode() const { return mode_; }
    int vocab_size() const { return static_cast<int>(units_.size()) + 2; }
    int bos_id() const { return static_cast<int>(units_.size()); }
    int eos_id() const { return static_cast<int>(units_.size()) + 1; }

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json& j);

private:
    Mode mode_ = Mode::Char;
    std::vector<std::string> units_;
    std::unordered_map<std::string, int> unit_to_id_;
    // BPE merges in learned order: (left id, right id) -> merged id.
    std::vector<std::array<int, 3>> merges_;

    void rebuild_index();
    std::vector<int> encode_chars(const std::string& text) const;
};

}  // namespace kdaudit
