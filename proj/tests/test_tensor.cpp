#include <doctest.h>

#include <cmath>
#include <vector>

#include "plat/rng.hpp"
#include "plat/tensor.hpp"

using namespace plat;

namespace {

Tensor rand_leaf(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    return Tensor::randn(std::move(shape), stddev, rng, /*requires_grad=*/true);
}

// Finite-difference pass for a scalar function of the given leaves.
bool fd_pass(const std::function<Tensor()>& f, const std::vector<Tensor>& xs, double tol = 1e-4) {
    auto rep = grad_check(f, xs, 1e-6, tol);
    INFO(rep.to_string());
    return rep.pass;
}

}  // namespace

TEST_CASE("matmul identity") {
    auto id2 = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    auto b = Tensor::from_values({2, 2}, {3, 4, 5, 6});
    auto c = matmul(id2, b);
    CHECK(c.values() == std::vector<double>{3, 4, 5, 6});
}

TEST_CASE("softmax symmetry and normalization") {
    auto x = Tensor::from_values({2}, {0.0, 0.0});
    auto y = softmax_lastdim(x);
    CHECK(y.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(11);
    auto z = softmax_lastdim(rand_leaf({5, 7}, rng, 3.0));
    for (int r = 0; r < 5; ++r) {
        double s = 0.0;
        for (int c = 0; c < 7; ++c) s += z.at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("cross entropy uniform case") {
    auto logits = Tensor::from_values({4}, {0, 0, 0, 0});
    auto loss = cross_entropy_logits(logits, {2});
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient is softmax minus onehot") {
    auto logits = Tensor::from_values({2}, {0, 0}, true);
    auto loss = cross_entropy_logits(logits, {0});
    backward(loss);
    CHECK(logits.grad()[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(logits.grad()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mean of squares gradient") {
    auto x = Tensor::from_values({2}, {1, 2}, true);
    auto loss = mean_all(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("sum gradient is exactly one") {
    Rng rng(3);
    auto x = rand_leaf({3, 5}, rng);
    auto loss = sum_all(x);
    backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("gradient accumulation across reuse") {
    auto x = Tensor::from_values({3}, {1, 2, 3}, true);
    // x used twice: loss = sum(x) + sum(x)
    auto loss = add(sum_all(x), sum_all(x));
    backward(loss);
    for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("leaf grads accumulate across backward calls") {
    auto x = Tensor::from_values({2}, {1, 1}, true);
    backward(sum_all(x));
    backward(sum_all(x));
    for (double g : x.grad()) CHECK(g == 2.0);
    x.zero_grad();
    for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward requires scalar loss") {
    auto x = Tensor::from_values({2}, {1, 2}, true);
    auto y = mul(x, x);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("shape errors") {
    auto a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(mul(a, b), ShapeError);
}

TEST_CASE("non-finite output detected") {
    auto a = Tensor::from_values({1}, {1e308});
    CHECK_THROWS_AS(add(a, a), NumericError);
    auto b = Tensor::from_values({1}, {710.0});
    CHECK_THROWS_AS(exp_elem(b), NumericError);
}

TEST_CASE("determinism: identical op sequence gives identical bits") {
    auto run = [] {
        Rng rng(99);
        auto x = rand_leaf({4, 4}, rng);
        auto w = rand_leaf({4, 4}, rng);
        auto loss = sum_all(gelu(matmul(x, w)));
        backward(loss);
        auto out = x.grad();
        auto wv = w.grad();
        out.insert(out.end(), wv.begin(), wv.end());
        out.push_back(loss.item());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("finite differences: every op kind on randomized shapes") {
    Rng rng(2024);
    auto dims = [&](int lo, int hi) { return static_cast<int>(lo + rng.below(static_cast<uint64_t>(hi - lo + 1))); };

    for (int trial = 0; trial < 3; ++trial) {
        const int m = dims(1, 6), k = dims(1, 6), n = dims(1, 6);

        SUBCASE("") {}  // keep doctest happy about loop structure

        {
            auto a = rand_leaf({m, k}, rng);
            auto b = rand_leaf({k, n}, rng);
            CHECK(fd_pass([&] { return mean_all(matmul(a, b)); }, {a, b}));
        }
        {
            auto a = rand_leaf({m, n}, rng);
            auto b = rand_leaf({m, n}, rng);
            CHECK(fd_pass([&] { return mean_all(add(a, b)); }, {a, b}));
            CHECK(fd_pass([&] { return mean_all(mul(a, b)); }, {a, b}));
        }
        {
            auto a = rand_leaf({m, n}, rng);
            auto bias = rand_leaf({n}, rng);
            CHECK(fd_pass([&] { return mean_all(add(a, bias)); }, {a, bias}));
        }
        {
            auto a = rand_leaf({m, n}, rng);
            CHECK(fd_pass([&] { return mean_all(scale(a, -1.7)); }, {a}));
            CHECK(fd_pass([&] { return mean_all(gelu(a)); }, {a}));
            CHECK(fd_pass([&] { return mean_all(transpose2d(a)); }, {a}));
            CHECK(fd_pass([&] { return sum_all(a); }, {a}));
        }
        {
            // Keep exp inputs small so FD stays well conditioned.
            auto a = rand_leaf({m, n}, rng, 0.5);
            CHECK(fd_pass([&] { return mean_all(exp_elem(a)); }, {a}));
        }
        {
            auto a = rand_leaf({m, n}, rng);
            auto w = rand_leaf({m, n}, rng);
            CHECK(fd_pass([&] { return mean_all(mul(softmax_lastdim(a), w)); }, {a, w}));
        }
        {
            const int s = dims(2, 6);
            auto a = rand_leaf({s, s}, rng);
            auto w = rand_leaf({s, s}, rng);
            CHECK(fd_pass([&] { return mean_all(mul(causal_softmax(a), w)); }, {a, w}));
        }
        {
            auto x = rand_leaf({m, n == 1 ? 2 : n}, rng);
            const int cols = x.dim(1);
            auto g = rand_leaf({cols}, rng);
            auto b = rand_leaf({cols}, rng);
            CHECK(fd_pass([&] { return mean_all(layernorm_lastdim(x, g, b)); }, {x, g, b}));
        }
        {
            auto table = rand_leaf({5, n}, rng);
            std::vector<int> ids{0, 3, 3, 1};
            CHECK(fd_pass([&] { return mean_all(embedding_lookup(table, ids)); }, {table}));
        }
        {
            auto a = rand_leaf({2, n}, rng);
            auto b = rand_leaf({m, n}, rng);
            CHECK(fd_pass([&] { return mean_all(concat_rows({a, b})); }, {a, b}));
            CHECK(fd_pass([&] { return mean_all(slice_rows(b, 0, m)); }, {b}));
        }
        {
            auto logits = rand_leaf({3, 5}, rng);
            std::vector<int> targets{4, -1, 0};
            CHECK(fd_pass([&] { return cross_entropy_logits(logits, targets); }, {logits}));
        }
        {
            auto a = rand_leaf({m, n}, rng);
            auto b = rand_leaf({m, n}, rng);
            CHECK(fd_pass([&] { return mean_all(minimum(a, b)); }, {a, b}));
            CHECK(fd_pass([&] { return mean_all(clamp(a, -0.4, 0.4)); }, {a}));
        }
        {
            auto a = rand_leaf({m, 5}, rng);
            auto b = rand_leaf({m, 5}, rng);
            CHECK(fd_pass([&] { return kl_from_logits(a, b); }, {a, b}));
        }
    }
}

TEST_CASE("grad_check on composed nonlinear function") {
    Rng rng(7);
    auto x = rand_leaf({8}, rng);
    CHECK(fd_pass([&] { return mean_all(gelu(x)); }, {x}));
}

TEST_CASE("grad_check report fields") {
    // At x=0 the +-step values are exactly representable, so sum's finite
    // difference is exactly 1 and the relative error is exactly zero.
    auto x = Tensor::from_values({3}, {0, 0, 0}, true);
    auto rep = grad_check([&] { return sum_all(x); }, {x}, 1e-6, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err == 0.0);
    CHECK(rep.n_elements == 3);

    auto y = Tensor::from_values({3}, {1, 2, 3}, true);
    auto rep2 = grad_check([&] { return sum_all(y); }, {y}, 1e-6, 1e-4);
    CHECK(rep2.pass);
    CHECK(rep2.max_rel_err <= 1e-9);
}

TEST_CASE("causal softmax zeroes the strict upper triangle") {
    Rng rng(5);
    auto a = rand_leaf({4, 4}, rng);
    auto y = causal_softmax(a);
    for (int q = 0; q < 4; ++q) {
        double s = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (j > q) CHECK(y.at(q, j) == 0.0);
            s += y.at(q, j);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("no-grad mode builds no graph") {
    auto x = Tensor::from_values({2}, {1, 2}, true);
    NoGradGuard ng;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.impl()->parents.empty());
}

TEST_CASE("minimum sends tie gradient to first argument") {
    auto a = Tensor::from_values({1}, {2.0}, true);
    auto b = Tensor::from_values({1}, {2.0}, true);
    backward(minimum(a, b));
    CHECK(a.grad()[0] == 1.0);
    CHECK(b.grad()[0] == 0.0);
}
