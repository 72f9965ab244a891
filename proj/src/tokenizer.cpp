#include "kdaudit/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>

namespace kdaudit {

void Tokenizer::rebuild_index() {
    unit_to_id_.clear();
    for (std::size_t i = 0; i < units_.size(); ++i) unit_to_id_[units_[i]] = static_cast<int>(i);
}

Tokenizer Tokenizer::train_char(const std::vector<std::string>& texts) {
    std::set<char> alphabet;
    for (const auto& t : texts)
        for (char c : t) alphabet.insert(c);
    Tokenizer tok;
    tok.mode_ = Mode::Char;
    for (char c : alphabet) tok.units_.push_back(std::string(1, c));
    tok.rebuild_index();
    return tok;
}

Tokenizer Tokenizer::train_bpe(const std::vector<std::string>& texts, int vocab_target) {
    Tokenizer tok = train_char(texts);
    tok.mode_ = Mode::Bpe;
    if (vocab_target <= tok.vocab_size()) return tok;

    std::vector<std::vector<int>> seqs;
    seqs.reserve(texts.size());
    for (const auto& t : texts) seqs.push_back(tok.encode_chars(t));

    while (tok.vocab_size() < vocab_target) {
        std::map<std::pair<int, int>, long long> counts;
        for (const auto& s : seqs)
            for (std::size_t i = 0; i + 1 < s.size(); ++i)
                ++counts[{s[i], s[i + 1]}];
        if (counts.empty()) break;
        // Most frequent pair; std::map ordering breaks ties deterministically.
        std::pair<int, int> best{-1, -1};
        long long best_count = 0;
        for (const auto& [pair, c] : counts) {
            if (c > best_count) {
                best_count = c;
                best = pair;
            }
        }
        if (best_count < 2) break;
        const int merged = static_cast<int>(tok.units_.size());
        tok.units_.push_back(tok.units_[static_cast<std::size_t>(best.first)] +
                             tok.units_[static_cast<std::size_t>(best.second)]);
        tok.merges_.push_back({best.first, best.second, merged});
        for (auto& s : seqs) {
            std::vector<int> out;
            out.reserve(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
                    out.push_back(merged);
                    ++i;
                } else {
                    out.push_back(s[i]);
                }
            }
            s = std::move(out);
        }
    }
    tok.rebuild_index();
    return tok;
}

std::vector<int> Tokenizer::encode_chars(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) {
        auto it = unit_to_id_.find(std::string(1, c));
        if (it == unit_to_id_.end())
            throw InputError(std::string("character not in tokenizer vocabulary: '") + c + "'");
        ids.push_back(it->second);
    }
    return ids;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
    std::vector<int> ids = encode_chars(text);
    if (mode_ == Mode::Char) return ids;
    for (const auto& m : merges_) {
        if (ids.size() < 2) break;
        std::vector<int> out;
        out.reserve(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i + 1 < ids.size() && ids[i] == m[0] && ids[i + 1] == m[1]) {
                out.push_back(m[2]);
                ++i;
            } else {
                out.push_back(ids[i]);
            }
        }
        ids = std::move(out);
    }
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == bos_id() || id == eos_id()) continue;
        if (id < 0 || id >= vocab_size())
            throw InputError("token id out of range in decode");
        out += units_[static_cast<std::size_t>(id)];
    }
    return out;
}

nlohmann::json Tokenizer::to_json() const {
    nlohmann::json j;
    j["mode"] = mode_ == Mode::Char ? "char" : "bpe";
    j["units"] = units_;
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& m : merges_) merges.push_back({m[0], m[1], m[2]});
    j["merges"] = merges;
    return j;
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
    Tokenizer tok;
    tok.mode_ = j.at("mode").get<std::string>() == "bpe" ? Mode::Bpe : Mode::Char;
    tok.units_ = j.at("units").get<std::vector<std::string>>();
    for (const auto& m : j.at("merges"))
        tok.merges_.push_back({m.at(0).get<int>(), m.at(1).get<int>(), m.at(2).get<int>()});
    tok.rebuild_index();
    return tok;
}

}  // namespace kdaudit
