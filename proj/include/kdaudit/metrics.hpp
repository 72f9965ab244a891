#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdaudit/common.hpp"

namespace kdaudit {

/// Probabilistic (Mann-Whitney) AUC: fraction of (member, nonmember) pairs
/// where the member scores higher, ties counted one half. Computed via
/// midranks; the O(M*N) pairwise count is the test oracle.
double auc(const std::vector<double>& member_scores, const std::vector<double>& nonmember_scores);

/// TPR at the most permissive threshold whose FPR stays <= fpr_level.
/// fpr_level = 0 means strictly above the highest nonmember score.
double tpr_at_fpr(const std::vector<double>& member_scores,
                  const std::vector<double>& nonmember_scores, double fpr_level);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocReport {
    double auc = 0.0;
    std::map<double, double> tpr_at;  // keyed by FPR level
    std::vector<RocPoint> curve;      // monotone, endpoints (0,.) and (1,1)

    nlohmann::json to_json() const;
};

/// Full ROC evaluation at the standard FPR levels {0.05, 0.01, 0.001, 0}.
RocReport roc_report(const std::vector<double>& member_scores,
                     const std::vector<double>& nonmember_scores);

struct GroupAuc {
    std::optional<double> auc;  // absent when a side has no samples
    int member_count = 0;
    int nonmember_count = 0;
    bool low_confidence = false;  // fewer than 5 samples on a side
};

/// Per-category AUC over samples labeled with task tags.
std::map<std::string, GroupAuc> grouped_auc(const std::vector<double>& member_scores,
                                            const std::vector<std::string>& member_categories,
                                            const std::vector<double>& nonmember_scores,
                                            const std::vector<std::string>& nonmember_categories);

/// LCS-based Rouge-L F-measure over token sequences. Empty input yields 0.
double rouge_l(const std::vector<int>& hypothesis, const std::vector<int>& reference);

}  // namespace kdaudit
