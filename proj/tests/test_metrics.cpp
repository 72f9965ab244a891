#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "kdaudit/metrics.hpp"

using namespace kdaudit;

namespace {

// Independent O(M*N) pairwise oracle, ties counted one half.
double auc_oracle(const std::vector<double>& m, const std::vector<double>& n) {
    double wins = 0.0;
    for (double a : m)
        for (double b : n) {
            if (a > b)
                wins += 1.0;
            else if (a == b)
                wins += 0.5;
        }
    return wins / (static_cast<double>(m.size()) * static_cast<double>(n.size()));
}

// Exhaustive threshold scan: try every candidate threshold, take the best
// TPR whose FPR stays within the level.
double tpr_oracle(const std::vector<double>& m, const std::vector<double>& n, double level) {
    std::vector<double> candidates = m;
    candidates.insert(candidates.end(), n.begin(), n.end());
    double best = 0.0;
    for (double t : candidates) {
        double fp = 0.0, tp = 0.0;
        for (double v : n)
            if (v >= t) fp += 1.0;
        for (double v : m)
            if (v >= t) tp += 1.0;
        if (fp / static_cast<double>(n.size()) <= level)
            best = std::max(best, tp / static_cast<double>(m.size()));
    }
    return best;
}

int lcs_oracle(const std::vector<int>& a, const std::vector<int>& b, std::size_t i, std::size_t j,
               std::vector<std::vector<int>>& memo) {
    if (i == a.size() || j == b.size()) return 0;
    int& slot = memo[i][j];
    if (slot >= 0) return slot;
    if (a[i] == b[j])
        slot = 1 + lcs_oracle(a, b, i + 1, j + 1, memo);
    else
        slot = std::max(lcs_oracle(a, b, i + 1, j, memo), lcs_oracle(a, b, i, j + 1, memo));
    return slot;
}

double rouge_oracle(const std::vector<int>& hyp, const std::vector<int>& ref) {
    std::vector<std::vector<int>> memo(hyp.size(), std::vector<int>(ref.size(), -1));
    const double lcs = hyp.empty() || ref.empty() ? 0 : lcs_oracle(hyp, ref, 0, 0, memo);
    if (lcs == 0) return 0.0;
    const double p = lcs / static_cast<double>(hyp.size());
    const double r = lcs / static_cast<double>(ref.size());
    return 2 * p * r / (p + r);
}

}  // namespace

TEST_CASE("auc: perfect separation and all ties") {
    CHECK(auc({2.0, 3.0}, {0.0, 1.0}) == 1.0);
    CHECK(auc({1.0, 1.0, 1.0}, {1.0, 1.0}) == 0.5);
    CHECK(auc({0.0}, {1.0}) == 0.0);
    CHECK_THROWS_AS(auc({}, {1.0}), DataError);
}

TEST_CASE("auc matches the pairwise oracle exactly on random sets") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 9);  // forces ties
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> m(50), n(50);
        const bool tie_heavy = rep % 2 == 0;
        for (auto& v : m) v = tie_heavy ? coarse(rng) : uni(rng);
        for (auto& v : n) v = tie_heavy ? coarse(rng) : uni(rng);
        CHECK(auc(m, n) == auc_oracle(m, n));
    }
}

TEST_CASE("auc complement identity and monotone invariance") {
    std::mt19937_64 rng(32);
    std::uniform_int_distribution<int> coarse(0, 6);
    std::vector<double> m(40), n(35);
    for (auto& v : m) v = coarse(rng);
    for (auto& v : n) v = coarse(rng);
    CHECK(auc(m, n) + auc(n, m) == doctest::Approx(1.0).epsilon(1e-12));

    auto squash = [](double v) { return std::tanh(v) * 3.0 + 7.0; };
    std::vector<double> ms = m, ns = n;
    for (auto& v : ms) v = squash(v);
    for (auto& v : ns) v = squash(v);
    CHECK(auc(ms, ns) == doctest::Approx(auc(m, n)).epsilon(1e-12));
}

TEST_CASE("tpr_at_fpr basic contracts") {
    const std::vector<double> m{5.0, 6.0, 7.0};
    const std::vector<double> n{1.0, 2.0, 3.0};
    for (double level : {0.0, 0.001, 0.01, 0.05, 1.0})
        CHECK(tpr_at_fpr(m, n, level) == 1.0);

    const std::vector<double> same{1.0, 2.0, 3.0};
    CHECK(tpr_at_fpr(same, same, 0.0) == 0.0);
    CHECK_THROWS_AS(tpr_at_fpr(m, n, -0.1), InputError);
    CHECK_THROWS_AS(tpr_at_fpr({}, n, 0.1), DataError);
}

TEST_CASE("tpr_at_fpr matches the exhaustive threshold scan") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> coarse(0, 12);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> m(10), n(10);
        for (auto& v : m) v = coarse(rng);
        for (auto& v : n) v = coarse(rng);
        for (double level : {0.0, 0.1, 0.2, 0.5, 1.0})
            CHECK(tpr_at_fpr(m, n, level) == tpr_oracle(m, n, level));
    }
}

TEST_CASE("tpr_at_fpr is nondecreasing in the level") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> m(30), n(30);
    for (auto& v : m) v = uni(rng) + 0.2;
    for (auto& v : n) v = uni(rng);
    double prev = 0.0;
    for (double level : {0.0, 0.01, 0.05, 0.1, 0.3, 0.7, 1.0}) {
        const double t = tpr_at_fpr(m, n, level);
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("roc_report curve is monotone and integrates to the pairwise auc") {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<int> coarse(0, 8);
    std::vector<double> m(60), n(45);
    for (auto& v : m) v = coarse(rng) + 2;
    for (auto& v : n) v = coarse(rng);
    const RocReport r = roc_report(m, n);

    CHECK(r.curve.front().fpr == 0.0);
    CHECK(r.curve.back().fpr == 1.0);
    CHECK(r.curve.back().tpr == 1.0);
    for (std::size_t i = 1; i < r.curve.size(); ++i) {
        CHECK(r.curve[i].fpr >= r.curve[i - 1].fpr);
        CHECK(r.curve[i].tpr >= r.curve[i - 1].tpr);
    }
    double trap = 0.0;
    for (std::size_t i = 1; i < r.curve.size(); ++i)
        trap += (r.curve[i].fpr - r.curve[i - 1].fpr) * (r.curve[i].tpr + r.curve[i - 1].tpr) / 2.0;
    CHECK(trap == doctest::Approx(r.auc).epsilon(1e-9));
    CHECK(r.tpr_at.size() == 4);
}

TEST_CASE("grouped_auc") {
    SUBCASE("single category equals the global auc") {
        const std::vector<double> m{3.0, 4.0, 5.0, 6.0, 7.0};
        const std::vector<double> n{1.0, 2.0, 3.0, 4.0, 5.0};
        const std::vector<std::string> cm(5, "open_qa"), cn(5, "open_qa");
        const auto g = grouped_auc(m, cm, n, cn);
        REQUIRE(g.count("open_qa") == 1);
        CHECK(*g.at("open_qa").auc == auc(m, n));
        CHECK_FALSE(g.at("open_qa").low_confidence);
    }
    SUBCASE("two categories with distinct separation") {
        std::vector<double> m, n;
        std::vector<std::string> cm, cn;
        for (int i = 0; i < 6; ++i) {
            m.push_back(10.0 + i);
            cm.push_back("perfect");
            n.push_back(i);
            cn.push_back("perfect");
            m.push_back(i % 2);
            cm.push_back("random");
            n.push_back(i % 2);
            cn.push_back("random");
        }
        const auto g = grouped_auc(m, cm, n, cn);
        CHECK(*g.at("perfect").auc == 1.0);
        CHECK(*g.at("random").auc == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("missing side is flagged, small side low-confidence") {
        const auto g = grouped_auc({1.0, 2.0}, {"a", "b"}, {0.5}, {"a"});
        CHECK_FALSE(g.at("b").auc.has_value());
        CHECK(g.at("a").auc.has_value());
        CHECK(g.at("a").low_confidence);
    }
    SUBCASE("three-category fixture matches per-group oracle") {
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::vector<double> m, n;
        std::vector<std::string> cm, cn;
        const std::vector<std::string> cats{"x", "y", "z"};
        for (const auto& c : cats)
            for (int i = 0; i < 8; ++i) {
                m.push_back(uni(rng));
                cm.push_back(c);
                n.push_back(uni(rng));
                cn.push_back(c);
            }
        const auto g = grouped_auc(m, cm, n, cn);
        for (const auto& c : cats) {
            std::vector<double> mc, nc;
            for (std::size_t i = 0; i < m.size(); ++i)
                if (cm[i] == c) mc.push_back(m[i]);
            for (std::size_t i = 0; i < n.size(); ++i)
                if (cn[i] == c) nc.push_back(n[i]);
            CHECK(*g.at(c).auc == auc_oracle(mc, nc));
        }
    }
}

TEST_CASE("rouge_l basics and worked example") {
    const std::vector<int> x{1, 2, 3, 4};
    CHECK(rouge_l(x, x) == 1.0);
    CHECK(rouge_l({1, 2}, {3, 4}) == 0.0);
    CHECK(rouge_l({}, x) == 0.0);
    // "a b c d" vs "a c d e": LCS=3, P=R=3/4, F=0.75
    CHECK(rouge_l({1, 2, 3, 4}, {1, 3, 4, 5}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("rouge_l matches the memoized LCS oracle on random pairs") {
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<int> tok(0, 5);
    std::uniform_int_distribution<int> len(1, 24);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<int> a(static_cast<std::size_t>(len(rng)));
        std::vector<int> b(static_cast<std::size_t>(len(rng)));
        for (auto& v : a) v = tok(rng);
        for (auto& v : b) v = tok(rng);
        CHECK(rouge_l(a, b) == doctest::Approx(rouge_oracle(a, b)).epsilon(1e-12));
        CHECK(rouge_l(a, a) == 1.0);
    }
}
