#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/corpus.hpp"
#include "kdaudit/model.hpp"

namespace kdaudit {

/// Per-sample extraction outcome for a teacher/student pair. A sample is
/// jointly memorized when both models reproduce the full victim.
struct MemorizationRecord {
    int sample_id = 0;
    int prompt_len = 0;  // K
    int victim_len = 0;  // capped at the victim cap (default 32)
    int teacher_matched = 0;
    int student_matched = 0;
    bool jointly_memorized = false;
    std::string category;

    nlohmann::json to_json() const;
};

/// Greedy-generates victim_len tokens from the first K tokens of `seq` and
/// returns the longest common prefix length with the true continuation.
/// Requires len(seq) > K.
int extract(const Parameters& model, const std::vector<int>& seq, int prompt_tokens,
            int victim_cap = 32);

struct JointMemorizationReport {
    std::vector<MemorizationRecord> records;
    double diagonal_fraction = 0.0;  // student_matched == teacher_matched
    int jointly_memorized_count = 0;
    int skipped = 0;  // sequences too short to split at K

    nlohmann::json to_json() const;
};

JointMemorizationReport joint_memorization(const Parameters& teacher, const Parameters& student,
                                           const std::vector<Sample>& dataset, const Tokenizer& tok,
                                           int prompt_tokens, int victim_cap = 32);

/// Scatter rows (teacher_matched, student_matched, sample id, category) as
/// delimited text for plotting.
void save_memorization_scatter(const JointMemorizationReport& report, const std::string& path);

}  // namespace kdaudit
