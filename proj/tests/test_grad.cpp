#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kdaudit/graph.hpp"
#include "kdaudit/tensor.hpp"

using namespace kdaudit;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> d(0.0, scale);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

// Independent triple-loop reference for matmul.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor out({a.dim(0), b.dim(1)});
    for (int i = 0; i < a.dim(0); ++i)
        for (int j = 0; j < b.dim(1); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("matmul identity") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor m({2, 2}, {1, 2, 3, 4});
    const Tensor r = matmul(eye, m);
    for (int i = 0; i < 4; ++i) CHECK(r[i] == m[i]);
}

TEST_CASE("matmul hand arithmetic") {
    const Tensor a({1, 2}, {1, 2});
    const Tensor b({2, 1}, {3, 4});
    const Tensor r = matmul(a, b);
    CHECK(r.size() == 1);
    CHECK(r[0] == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle exactly") {
    std::mt19937_64 rng(11);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor got = matmul(a, b);
    const Tensor want = matmul_oracle(a, b);
    for (std::int64_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-15));
}

TEST_CASE("matmul shape mismatch throws") {
    const Tensor a({2, 3});
    const Tensor b({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("softmax symmetry and stability") {
    const Tensor z({2}, {0.0, 0.0});
    const Tensor s = softmax(z);
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-15));

    const Tensor big({2}, {1000.0, 1000.0});
    const Tensor sb = softmax(big);
    CHECK(sb[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(sb[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax matches direct evaluation") {
    const Tensor x({3}, {1.0, 2.0, 3.0});
    const Tensor s = softmax(x);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(s[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const Tensor x = random_tensor({4, 9}, rng, 5.0);
        const Tensor s = softmax(x, -1);
        for (int r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 9; ++c) {
                CHECK(s.at(r, c) >= 0.0);
                sum += s.at(r, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("log_softmax equals log of softmax but stays finite for extremes") {
    const Tensor x({3}, {-1000.0, 0.0, 1000.0});
    const Tensor ls = log_softmax(x);
    CHECK(std::isfinite(ls[0]));
    CHECK(ls[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("backward of x squared at 3 gives 6") {
    Graph g;
    const int x = g.leaf(Tensor({}, {3.0}), true);
    const int y = g.mul(x, x);
    g.backward(y);
    CHECK(g.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward of a constant loss gives zero grads") {
    Graph g;
    const int x = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}), true);
    const int c = g.leaf(Tensor({}, {5.0}));
    const int loss = g.sum(g.scale(c, 1.0));
    g.backward(loss);
    (void)x;
    for (int i = 0; i < 3; ++i) CHECK(g.grad(x)[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    const int x = g.leaf(Tensor({2}, {1.0, 2.0}), true);
    CHECK_THROWS_AS(g.backward(x), InputError);
}

namespace {

// Central finite differences against the analytic gradient of a scalar-valued
// graph builder, on a copy of the leaf tensor.
template <typename BuildFn>
void check_gradient(Tensor leaf_value, BuildFn&& build, double h = 1e-5, double tol = 1e-3) {
    Graph g;
    const int leaf = g.leaf(leaf_value, true);
    const int loss = build(g, leaf);
    g.backward(loss);
    const Tensor analytic = g.grad(leaf);

    for (std::int64_t i = 0; i < leaf_value.size(); ++i) {
        Tensor plus = leaf_value;
        Tensor minus = leaf_value;
        plus[i] += h;
        minus[i] -= h;
        Graph gp, gm;
        const double fp = gp.value(build(gp, gp.leaf(plus, false)))[0];
        const double fm = gm.value(build(gm, gm.leaf(minus, false)))[0];
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-8});
        CHECK(std::fabs(fd - analytic[i]) / denom < tol);
    }
}

}  // namespace

TEST_CASE("finite differences validate every op's backward") {
    std::mt19937_64 rng(23);

    SUBCASE("matmul") {
        const Tensor x = random_tensor({3, 4}, rng);
        const Tensor w = random_tensor({4, 2}, rng);
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.matmul(leaf, g.leaf(w))); });
        check_gradient(w, [&](Graph& g, int leaf) { return g.sum(g.matmul(g.leaf(x), leaf)); });
    }
    SUBCASE("matmul_nt") {
        const Tensor x = random_tensor({3, 4}, rng);
        const Tensor w = random_tensor({5, 4}, rng);
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.matmul_nt(leaf, g.leaf(w))); });
        check_gradient(w, [&](Graph& g, int leaf) { return g.sum(g.matmul_nt(g.leaf(x), leaf)); });
    }
    SUBCASE("elementwise and reductions") {
        const Tensor x = random_tensor({6}, rng);
        const Tensor y = random_tensor({6}, rng);
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.mul(leaf, g.leaf(y))); });
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.sub(leaf, g.leaf(y))); });
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.scale(leaf, -1.7)); });
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.exp_op(leaf)); });
        check_gradient(x, [&](Graph& g, int leaf) { return g.sum(g.relu_sq(leaf)); });
        check_gradient(x, [&](Graph& g, int leaf) {
            return g.weighted_sum(leaf, {0.5, -1.0, 2.0, 0.0, 1.0, 3.0});
        });
        Tensor pos = x;
        for (std::int64_t i = 0; i < pos.size(); ++i) pos[i] = std::fabs(pos[i]) + 0.5;
        check_gradient(pos, [&](Graph& g, int leaf) { return g.sum(g.log_op(leaf)); });
    }
    SUBCASE("softmax and log_softmax rows") {
        const Tensor x = random_tensor({3, 5}, rng);
        const Tensor w = random_tensor({3, 5}, rng);
        check_gradient(x, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.softmax_rows(leaf), g.leaf(w)));
        });
        check_gradient(x, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.log_softmax_rows(leaf), g.leaf(w)));
        });
    }
    SUBCASE("layer_norm") {
        const Tensor x = random_tensor({3, 6}, rng);
        const Tensor gain = random_tensor({6}, rng, 0.5);
        const Tensor bias = random_tensor({6}, rng, 0.5);
        const Tensor w = random_tensor({3, 6}, rng);
        check_gradient(x, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.layer_norm(leaf, g.leaf(gain), g.leaf(bias)), g.leaf(w)));
        });
        check_gradient(gain, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.layer_norm(g.leaf(x), leaf, g.leaf(bias)), g.leaf(w)));
        });
        check_gradient(bias, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.layer_norm(g.leaf(x), g.leaf(gain), leaf), g.leaf(w)));
        });
    }
    SUBCASE("causal_attention") {
        const Tensor qkv = random_tensor({5, 12}, rng);  // T=5, d=4, 2 heads
        const Tensor w = random_tensor({5, 4}, rng);
        check_gradient(qkv, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.causal_attention(leaf, 2), g.leaf(w)));
        });
    }
    SUBCASE("gather and pick") {
        const Tensor table = random_tensor({4, 3}, rng);
        const Tensor w = random_tensor({5, 3}, rng);
        check_gradient(table, [&](Graph& g, int leaf) {
            return g.sum(g.mul(g.gather_rows(leaf, {0, 2, 2, 3, 1}), g.leaf(w)));
        });
        const Tensor mat = random_tensor({4, 3}, rng);
        check_gradient(mat, [&](Graph& g, int leaf) {
            return g.weighted_sum(g.pick_positions(leaf, {1, 0, 2, 2}), {1.0, -2.0, 0.5, 1.5});
        });
    }
    SUBCASE("add_row bias broadcast") {
        const Tensor x = random_tensor({3, 4}, rng);
        const Tensor b = random_tensor({4}, rng);
        check_gradient(b, [&](Graph& g, int leaf) { return g.sum(g.add_row(g.leaf(x), leaf)); });
    }
}

TEST_CASE("seeded tensor fills are reproducible") {
    std::mt19937_64 a(99), b(99);
    const Tensor ta = random_tensor({32}, a);
    const Tensor tb = random_tensor({32}, b);
    for (std::int64_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
}
