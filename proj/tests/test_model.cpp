#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>

#include "kdaudit/model.hpp"
#include "kdaudit/train.hpp"

using namespace kdaudit;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 11;
    c.context_len = 16;
    c.n_blocks = 2;
    c.embed_dim = 8;
    c.n_heads = 2;
    c.seed = 5;
    return c;
}

void zero_all(Parameters& p) {
    p.for_each_tensor([](const std::string&, Tensor& t) {
        std::fill(t.values().begin(), t.values().end(), 0.0);
    });
}

}  // namespace

TEST_CASE("init is deterministic and block-structured") {
    ModelConfig c = tiny_config();
    c.n_blocks = 3;
    const Parameters a = init_parameters(c);
    const Parameters b = init_parameters(c);
    CHECK(a.blocks.size() == 3);
    CHECK(a.bitwise_equal(b));

    ModelConfig other = c;
    other.seed = 6;
    CHECK_FALSE(init_parameters(other).bitwise_equal(a));
}

TEST_CASE("init rejects invalid configs") {
    ModelConfig c = tiny_config();
    c.embed_dim = 10;
    c.n_heads = 4;
    CHECK_THROWS_AS(init_parameters(c), ConfigError);
    c = tiny_config();
    c.n_blocks = 0;
    CHECK_THROWS_AS(init_parameters(c), ConfigError);
    c = tiny_config();
    c.context_len = 1;
    CHECK_THROWS_AS(init_parameters(c), ConfigError);
}

TEST_CASE("init statistics: gaussian tensors have near-zero mean") {
    ModelConfig c;
    c.vocab_size = 64;
    c.context_len = 64;
    c.n_blocks = 2;
    c.embed_dim = 32;
    c.n_heads = 4;
    c.seed = 77;
    Parameters p = init_parameters(c);
    p.for_each_tensor([](const std::string& name, Tensor& t) {
        const bool gaussian = name.find("weight") != std::string::npos ||
                              name.find("embedding") != std::string::npos;
        if (!gaussian) return;
        double mean = 0.0;
        for (std::int64_t i = 0; i < t.size(); ++i) mean += t[i];
        mean /= static_cast<double>(t.size());
        const double bound = 5.0 * 0.02 / std::sqrt(static_cast<double>(t.size()));
        CHECK(std::fabs(mean) < bound);
    });
}

TEST_CASE("zeroed model is uniform over the vocabulary") {
    const ModelConfig c = tiny_config();
    Parameters p = init_parameters(c);
    zero_all(p);
    const std::vector<int> seq{1, 2, 3, 4};
    const std::vector<double> lp = token_logprobs(p, seq);
    CHECK(lp.size() == 3);
    for (double v : lp) CHECK(v == doctest::Approx(-std::log(11.0)).epsilon(1e-12));

    const NextTokenStats stats = next_token_stats(p, seq);
    CHECK(stats.mu == doctest::Approx(-std::log(11.0)).epsilon(1e-12));
    CHECK(stats.sigma == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("token_logprobs are log-probabilities") {
    const Parameters p = init_parameters(tiny_config());
    const std::vector<int> seq{0, 3, 7, 2, 9, 1};
    const std::vector<double> lp = token_logprobs(p, seq);
    for (double v : lp) {
        CHECK(v <= 0.0);
        CHECK(std::exp(v) > 0.0);
        CHECK(std::exp(v) <= 1.0);
    }
    // full next-token distribution normalizes
    const NextTokenStats stats = next_token_stats(p, seq);
    double sum = 0.0;
    for (std::int64_t i = 0; i < stats.log_probs.size(); ++i) sum += std::exp(stats.log_probs[i]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("token_logprobs validates sequence length") {
    const Parameters p = init_parameters(tiny_config());
    CHECK_THROWS_AS(token_logprobs(p, {1}), InputError);
    const std::vector<int> too_long(20, 1);
    CHECK_THROWS_AS(token_logprobs(p, too_long), InputError);
}

TEST_CASE("sequence_loss is minus the mean token logprob") {
    const Parameters p = init_parameters(tiny_config());
    const std::vector<int> seq{0, 3, 7, 2, 9, 1};
    const std::vector<double> lp = token_logprobs(p, seq);
    const double mean = std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
    CHECK(sequence_loss(p, seq) == doctest::Approx(-mean).epsilon(1e-15));
}

TEST_CASE("next_token_stats matches direct summation, V=8") {
    ModelConfig c = tiny_config();
    c.vocab_size = 8;
    const Parameters p = init_parameters(c);
    const std::vector<int> prefix{1, 5, 2};
    const NextTokenStats stats = next_token_stats(p, prefix);
    double mu = 0.0;
    for (int v = 0; v < 8; ++v) mu += std::exp(stats.log_probs[v]) * stats.log_probs[v];
    double var = 0.0;
    for (int v = 0; v < 8; ++v) {
        const double d = stats.log_probs[v] - mu;
        var += std::exp(stats.log_probs[v]) * d * d;
    }
    CHECK(stats.mu == doctest::Approx(mu).epsilon(1e-10));
    CHECK(stats.sigma == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
    CHECK(stats.sigma >= 0.0);
}

TEST_CASE("generate basics") {
    const Parameters p = init_parameters(tiny_config());
    const std::vector<int> prompt{1, 2, 3};

    GenerateConfig cfg;
    cfg.max_new = 0;
    CHECK(generate(p, prompt, cfg) == prompt);

    cfg.max_new = 5;
    const auto a = generate(p, prompt, cfg);
    const auto b = generate(p, prompt, cfg);
    CHECK(a == b);
    CHECK(a.size() == 8);

    CHECK_THROWS_AS(generate(p, {}, cfg), InputError);
}

TEST_CASE("generate slides the context window") {
    const Parameters p = init_parameters(tiny_config());
    std::vector<int> prompt(14, 2);
    GenerateConfig cfg;
    cfg.max_new = 10;  // pushes past context_len=16
    const auto out = generate(p, prompt, cfg);
    CHECK(out.size() == 24);
}

TEST_CASE("sampled generation is seeded") {
    const Parameters p = init_parameters(tiny_config());
    GenerateConfig cfg;
    cfg.max_new = 6;
    cfg.mode = GenerateConfig::Mode::Temperature;
    cfg.temperature = 1.0;
    cfg.seed = 42;
    const auto a = generate(p, {1, 2}, cfg);
    const auto b = generate(p, {1, 2}, cfg);
    CHECK(a == b);
    cfg.seed = 43;
    const auto c = generate(p, {1, 2}, cfg);
    CHECK(a != c);  // 11^6 outcomes; collision under a different seed is negligible
}

TEST_CASE("perturb: sigma zero is the identity") {
    const Parameters p = init_parameters(tiny_config());
    const Parameters q = perturb(p, kAllBlocks, 0.0, 123);
    CHECK(p.bitwise_equal(q));
}

TEST_CASE("perturb touches only the selected block") {
    const Parameters p = init_parameters(tiny_config());
    const Parameters q = perturb(p, 2, 0.01, 9);
    CHECK_FALSE(p.bitwise_equal(q));

    auto pa = p.tensor_list();
    auto qa = q.tensor_list();
    std::vector<std::string> names;
    const_cast<Parameters&>(p).for_each_tensor(
        [&](const std::string& n, Tensor&) { names.push_back(n); });
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const bool in_block2 = names[i].rfind("block2.", 0) == 0;
        bool identical = true;
        for (std::int64_t k = 0; k < pa[i]->size(); ++k)
            if ((*pa[i])[k] != (*qa[i])[k]) identical = false;
        CHECK(identical == !in_block2);
    }
}

TEST_CASE("perturb on a 1-block model: single block equals ALL") {
    ModelConfig c = tiny_config();
    c.n_blocks = 1;
    const Parameters p = init_parameters(c);
    const Parameters a = perturb(p, 1, 0.02, 77);
    const Parameters b = perturb(p, kAllBlocks, 0.02, 77);
    CHECK(a.bitwise_equal(b));
}

TEST_CASE("perturb deltas look like N(0, sigma^2)") {
    ModelConfig c = tiny_config();
    c.embed_dim = 32;
    c.n_heads = 4;
    const Parameters p = init_parameters(c);
    const double sigma = 0.05;
    const Parameters q = perturb(p, kAllBlocks, sigma, 2024);
    // deltas from block tensors only; embeddings and head are untouched
    std::vector<double> deltas;
    auto pa = p.tensor_list();
    auto qa = q.tensor_list();
    std::vector<std::string> names;
    const_cast<Parameters&>(p).for_each_tensor(
        [&](const std::string& n, Tensor&) { names.push_back(n); });
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (names[i].rfind("block", 0) != 0) continue;
        for (std::int64_t k = 0; k < pa[i]->size(); ++k)
            deltas.push_back((*qa[i])[k] - (*pa[i])[k]);
    }
    REQUIRE(deltas.size() > 1000);
    double mean = 0.0;
    for (double d : deltas) mean += d;
    mean /= static_cast<double>(deltas.size());
    double var = 0.0;
    for (double d : deltas) var += (d - mean) * (d - mean);
    var /= static_cast<double>(deltas.size());
    CHECK(std::fabs(mean) < 5.0 * sigma / std::sqrt(static_cast<double>(deltas.size())));
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.2));
}

TEST_CASE("perturb rejects bad block indices") {
    const Parameters p = init_parameters(tiny_config());
    CHECK_THROWS_AS(perturb(p, 3, 0.01, 1), InputError);
    CHECK_THROWS_AS(perturb(p, -1, 0.01, 1), InputError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const Parameters p = init_parameters(tiny_config());
    nlohmann::json prov;
    prov["stage"] = "unit-test";
    const std::string path = "/tmp/kdaudit_test_ckpt.bin";
    save_checkpoint(p, path, prov);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.params.bitwise_equal(p));
    CHECK(ck.provenance.at("stage") == "unit-test");
    std::remove(path.c_str());
}

TEST_CASE("untied head round-trips and runs") {
    ModelConfig c = tiny_config();
    c.tie_embedding = false;
    const Parameters p = init_parameters(c);
    CHECK(p.head_weight.size() == 11 * 8);
    const std::string path = "/tmp/kdaudit_test_ckpt_untied.bin";
    save_checkpoint(p, path);
    CHECK(load_checkpoint(path).params.bitwise_equal(p));
    std::remove(path.c_str());
    CHECK(token_logprobs(p, {1, 2, 3}).size() == 2);
}

// Central finite differences over every parameter of a 2-block model.
TEST_CASE("analytic gradients match finite differences for every leaf") {
    ModelConfig c = tiny_config();  // 2 blocks
    Parameters p = init_parameters(c);
    const std::vector<int> tokens{0, 4, 9, 2, 5};

    auto loss_nodes = [&](Graph& g, const Parameters& params) {
        const BoundForward f = forward(g, params, tokens);
        const int lsm = g.log_softmax_rows(f.logits);
        std::vector<int> rows, targets;
        for (int t = 0; t + 1 < static_cast<int>(tokens.size()); ++t) {
            rows.push_back(t);
            targets.push_back(tokens[static_cast<std::size_t>(t + 1)]);
        }
        const int picked = g.pick_positions(g.gather_rows(lsm, rows), targets);
        const std::vector<double> w(rows.size(), 1.0);
        return std::pair<int, BoundForward>(
            g.scale(g.weighted_sum(picked, w), -1.0 / static_cast<double>(rows.size())), f);
    };

    Graph g;
    auto [loss, bound] = loss_nodes(g, p);
    g.backward(loss);

    auto tensors = p.tensor_list();
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        const Tensor analytic = g.grad(bound.bound_params[ti]);
        Tensor& t = *tensors[ti];
        // probe a deterministic subset of each tensor to keep runtime low
        const std::int64_t stride = std::max<std::int64_t>(1, t.size() / 5);
        for (std::int64_t k = 0; k < t.size(); k += stride) {
            const double orig = t[k];
            t[k] = orig + h;
            const double fp = sequence_loss(p, tokens);
            t[k] = orig - h;
            const double fm = sequence_loss(p, tokens);
            t[k] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::fabs(fd), std::fabs(analytic[k]), 1e-8});
            CHECK(std::fabs(fd - analytic[k]) / denom < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 50);
}
