#include <benchmark/benchmark.h>

#include "plat/rng.hpp"
#include "plat/training.hpp"
#include "plat/verbalizer.hpp"

using namespace plat;

namespace {

ModelBundle bench_bundle(int d_m, int n_latent) {
    BackboneConfig bcfg;
    bcfg.d_m = d_m;
    bcfg.n_layers = 2;
    bcfg.n_planner_layers = 2;
    bcfg.n_heads = 4;
    bcfg.max_seq_len = 96;
    bcfg.vocab_size = Vocab::standard().size();
    PlannerConfig pcfg;
    pcfg.d_s = d_m / 2;
    pcfg.n_latent = n_latent;
    pcfg.max_plan_steps = 5;
    return make_bundle(bcfg, pcfg, 7);
}

ReasoningSample bench_sample() {
    GeneratorConfig g;
    g.seed = 3;
    g.n = 1;
    g.step_min = g.step_max = 3;
    return generate_corpus(g).front();
}

void BM_backbone_forward(benchmark::State& state) {
    auto bundle = bench_bundle(static_cast<int>(state.range(0)), 1);
    const auto& vocab = Vocab::standard();
    auto ids = question_token_ids(vocab, bench_sample());
    NoGradGuard ng;
    for (auto _ : state) {
        auto h = bundle.net.hidden_states(to_mixed(ids), true);
        benchmark::DoNotOptimize(h.values().data());
    }
}
BENCHMARK(BM_backbone_forward)->Arg(64)->Arg(128);

void BM_roll_trajectory(benchmark::State& state) {
    auto bundle = bench_bundle(64, static_cast<int>(state.range(0)));
    const auto& vocab = Vocab::standard();
    auto ids = question_token_ids(vocab, bench_sample());
    NoGradGuard ng;
    for (auto _ : state) {
        auto roll = roll_trajectory(bundle, vocab, ids, 3);
        benchmark::DoNotOptimize(roll.aggregated.data());
    }
}
BENCHMARK(BM_roll_trajectory)->Arg(1)->Arg(2);

void BM_lazy_infer(benchmark::State& state) {
    auto bundle = bench_bundle(64, 1);
    const auto& vocab = Vocab::standard();
    auto ids = question_token_ids(vocab, bench_sample());
    InferOptions opts;
    opts.max_steps = 4;
    opts.max_tokens = 12;
    for (auto _ : state) {
        auto trace = lazy_infer(bundle, vocab, ids, opts);
        benchmark::DoNotOptimize(&trace);
    }
}
BENCHMARK(BM_lazy_infer);

void BM_reconstruction_loss_backward(benchmark::State& state) {
    auto bundle = bench_bundle(64, 1);
    const auto& vocab = Vocab::standard();
    auto sample = bench_sample();
    Adam opt(named_parameters(bundle), {1e-4});
    Rng noise(5);
    for (auto _ : state) {
        auto [loss, count] = plat_sample_loss(bundle, vocab, sample, 0.1, &noise);
        opt.zero_grad();
        backward(loss);
        benchmark::DoNotOptimize(count);
    }
}
BENCHMARK(BM_reconstruction_loss_backward);

}  // namespace

BENCHMARK_MAIN();
