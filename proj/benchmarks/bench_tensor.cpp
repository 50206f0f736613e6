#include <benchmark/benchmark.h>

#include "plat/rng.hpp"
#include "plat/tensor.hpp"

using namespace plat;

namespace {

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    auto a = Tensor::randn({n, n}, 1.0, rng);
    auto b = Tensor::randn({n, n}, 1.0, rng);
    for (auto _ : state) {
        auto c = matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_matmul_backward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    auto a = Tensor::randn({n, n}, 1.0, rng, true);
    auto b = Tensor::randn({n, n}, 1.0, rng, true);
    for (auto _ : state) {
        auto loss = mean_all(matmul(a, b));
        backward(loss);
        a.zero_grad();
        b.zero_grad();
    }
}
BENCHMARK(BM_matmul_backward)->Arg(32)->Arg(64)->Arg(128);

void BM_softmax_rows(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(2);
    auto a = Tensor::randn({n, n}, 2.0, rng);
    for (auto _ : state) {
        auto y = softmax_lastdim(a);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_softmax_rows)->Arg(64)->Arg(256);

void BM_layernorm(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(3);
    auto x = Tensor::randn({n, n}, 1.0, rng);
    auto g = Tensor::full({n}, 1.0);
    auto b = Tensor::zeros({n});
    for (auto _ : state) {
        auto y = layernorm_lastdim(x, g, b);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_layernorm)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
