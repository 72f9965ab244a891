#include "kdaudit/memorize.hpp"

#include <algorithm>
#include <fstream>

namespace kdaudit {

nlohmann::json MemorizationRecord::to_json() const {
    return {{"sample_id", sample_id},           {"prompt_len", prompt_len},
            {"victim_len", victim_len},         {"teacher_matched", teacher_matched},
            {"student_matched", student_matched}, {"jointly_memorized", jointly_memorized},
            {"category", category}};
}

nlohmann::json JointMemorizationReport::to_json() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) recs.push_back(r.to_json());
    return {{"records", recs},
            {"diagonal_fraction", diagonal_fraction},
            {"jointly_memorized_count", jointly_memorized_count},
            {"skipped", skipped}};
}

int extract(const Parameters& model, const std::vector<int>& seq, int prompt_tokens,
            int victim_cap) {
    if (prompt_tokens < 1) throw InputError("extraction prompt length must be >= 1");
    if (static_cast<int>(seq.size()) <= prompt_tokens)
        throw InputError("sequence too short to split at the requested prompt length");
    const std::vector<int> prompt(seq.begin(), seq.begin() + prompt_tokens);
    const int victim_len =
        std::min<int>(victim_cap, static_cast<int>(seq.size()) - prompt_tokens);
    GenerateConfig cfg;
    cfg.max_new = victim_len;
    cfg.mode = GenerateConfig::Mode::Greedy;
    const std::vector<int> generated = generate(model, prompt, cfg);
    int matched = 0;
    for (int i = 0; i < victim_len; ++i) {
        if (prompt_tokens + i >= static_cast<int>(generated.size())) break;
        if (generated[static_cast<std::size_t>(prompt_tokens + i)] !=
            seq[static_cast<std::size_t>(prompt_tokens + i)])
            break;
        ++matched;
    }
    return matched;
}

JointMemorizationReport joint_memorization(const Parameters& teacher, const Parameters& student,
                                           const std::vector<Sample>& dataset, const Tokenizer& tok,
                                           int prompt_tokens, int victim_cap) {
    if (teacher.config.vocab_size != student.config.vocab_size)
        throw ConfigError("teacher and student must share one tokenizer vocabulary");
    JointMemorizationReport report;
    const int ctx = std::min(teacher.config.context_len, student.config.context_len);

    struct Item {
        EncodedSample enc;
        int id;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        EncodedSample enc = encode_sample(tok, dataset[i], ctx);
        if (static_cast<int>(enc.tokens.size()) <= prompt_tokens) {
            ++report.skipped;
            continue;
        }
        items.push_back({std::move(enc), static_cast<int>(i)});
    }

    report.records.resize(items.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Item& item = items[i];
        MemorizationRecord rec;
        rec.sample_id = item.id;
        rec.prompt_len = prompt_tokens;
        rec.victim_len =
            std::min<int>(victim_cap, static_cast<int>(item.enc.tokens.size()) - prompt_tokens);
        rec.category = item.enc.category;
        rec.teacher_matched = extract(teacher, item.enc.tokens, prompt_tokens, victim_cap);
        rec.student_matched = extract(student, item.enc.tokens, prompt_tokens, victim_cap);
        rec.jointly_memorized =
            rec.teacher_matched == rec.victim_len && rec.student_matched == rec.victim_len;
        report.records[i] = std::move(rec);
    }

    int diagonal = 0;
    for (const auto& r : report.records) {
        if (r.student_matched == r.teacher_matched) ++diagonal;
        if (r.jointly_memorized) ++report.jointly_memorized_count;
    }
    report.diagonal_fraction =
        report.records.empty() ? 0.0
                               : static_cast<double>(diagonal) / static_cast<double>(report.records.size());
    return report;
}

void save_memorization_scatter(const JointMemorizationReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write scatter file: " + path);
    out << "teacher_matched\tstudent_matched\tsample_id\tcategory\n";
    for (const auto& r : report.records)
        out << r.teacher_matched << "\t" << r.student_matched << "\t" << r.sample_id << "\t"
            << r.category << "\n";
}

}  // namespace kdaudit
