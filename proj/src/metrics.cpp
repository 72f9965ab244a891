#include "kdaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "kdaudit/common.hpp"

namespace kdaudit {

double auc(const std::vector<double>& member_scores, const std::vector<double>& nonmember_scores) {
    if (member_scores.empty() || nonmember_scores.empty())
        throw DataError("auc needs non-empty member and nonmember score sets");
    const std::size_t m = member_scores.size();
    const std::size_t n = nonmember_scores.size();

    struct Entry {
        double score;
        bool member;
    };
    std::vector<Entry> all;
    all.reserve(m + n);
    for (double s : member_scores) all.push_back({s, true});
    for (double s : nonmember_scores) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    // Midrank sum of the member scores.
    double member_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (all[k].member) member_rank_sum += midrank;
        i = j;
    }
    const double md = static_cast<double>(m);
    const double wins = member_rank_sum - md * (md + 1.0) / 2.0;
    return wins / (md * static_cast<double>(n));
}

double tpr_at_fpr(const std::vector<double>& member_scores,
                  const std::vector<double>& nonmember_scores, double fpr_level) {
    if (member_scores.empty() || nonmember_scores.empty())
        throw DataError("tpr_at_fpr needs non-empty member and nonmember score sets");
    if (fpr_level < 0.0 || fpr_level > 1.0) throw InputError("fpr_level must lie in [0, 1]");

    std::set<double, std::greater<double>> thresholds(member_scores.begin(), member_scores.end());
    thresholds.insert(nonmember_scores.begin(), nonmember_scores.end());

    auto rate_at = [](const std::vector<double>& scores, double t) {
        std::size_t c = 0;
        for (double s : scores)
            if (s >= t) ++c;
        return static_cast<double>(c) / static_cast<double>(scores.size());
    };

    double best_tpr = 0.0;
    for (double t : thresholds) {  // descending; TPR and FPR both nondecreasing
        const double fpr = rate_at(nonmember_scores, t);
        if (fpr > fpr_level) break;
        best_tpr = rate_at(member_scores, t);
    }
    return best_tpr;
}

RocReport roc_report(const std::vector<double>& member_scores,
                     const std::vector<double>& nonmember_scores) {
    RocReport r;
    r.auc = auc(member_scores, nonmember_scores);
    for (double level : {0.05, 0.01, 0.001, 0.0})
        r.tpr_at[level] = tpr_at_fpr(member_scores, nonmember_scores, level);

    std::set<double, std::greater<double>> thresholds(member_scores.begin(), member_scores.end());
    thresholds.insert(nonmember_scores.begin(), nonmember_scores.end());
    auto rate_at = [](const std::vector<double>& scores, double t) {
        std::size_t c = 0;
        for (double s : scores)
            if (s >= t) ++c;
        return static_cast<double>(c) / static_cast<double>(scores.size());
    };
    r.curve.push_back({0.0, 0.0});
    for (double t : thresholds)
        r.curve.push_back({rate_at(nonmember_scores, t), rate_at(member_scores, t)});
    if (r.curve.back().fpr != 1.0 || r.curve.back().tpr != 1.0) r.curve.push_back({1.0, 1.0});
    return r;
}

nlohmann::json RocReport::to_json() const {
    nlohmann::json j;
    j["auc"] = auc;
    nlohmann::json tpr = nlohmann::json::object();
    for (const auto& [level, v] : tpr_at) {
        char key[16];
        std::snprintf(key, sizeof(key), "%g", level);
        tpr[key] = v;
    }
    j["tpr_at_fpr"] = tpr;
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : this->curve) curve.push_back({p.fpr, p.tpr});
    j["curve"] = curve;
    return j;
}

std::map<std::string, GroupAuc> grouped_auc(const std::vector<double>& member_scores,
                                            const std::vector<std::string>& member_categories,
                                            const std::vector<double>& nonmember_scores,
                                            const std::vector<std::string>& nonmember_categories) {
    if (member_scores.size() != member_categories.size() ||
        nonmember_scores.size() != nonmember_categories.size())
        throw InputError("grouped_auc: scores and category labels must align");

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> buckets;
    for (std::size_t i = 0; i < member_scores.size(); ++i)
        buckets[member_categories[i]].first.push_back(member_scores[i]);
    for (std::size_t i = 0; i < nonmember_scores.size(); ++i)
        buckets[nonmember_categories[i]].second.push_back(nonmember_scores[i]);

    std::map<std::string, GroupAuc> out;
    for (const auto& [cat, sides] : buckets) {
        GroupAuc g;
        g.member_count = static_cast<int>(sides.first.size());
        g.nonmember_count = static_cast<int>(sides.second.size());
        g.low_confidence = g.member_count < 5 || g.nonmember_count < 5;
        if (g.member_count > 0 && g.nonmember_count > 0) g.auc = auc(sides.first, sides.second);
        out[cat] = g;
    }
    return out;
}

double rouge_l(const std::vector<int>& hypothesis, const std::vector<int>& reference) {
    if (hypothesis.empty() || reference.empty()) return 0.0;
    const std::size_t h = hypothesis.size();
    const std::size_t r = reference.size();
    std::vector<int> prev(r + 1, 0), cur(r + 1, 0);
    for (std::size_t i = 1; i <= h; ++i) {
        for (std::size_t j = 1; j <= r; ++j) {
            if (hypothesis[i - 1] == reference[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = prev[r];
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(h);
    const double rec = lcs / static_cast<double>(r);
    return 2.0 * p * rec / (p + rec);
}

}  // namespace kdaudit
