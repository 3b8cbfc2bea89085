#include <benchmark/benchmark.h>

#include "icld/model.hpp"
#include "icld/objectives.hpp"

using namespace icld;

namespace {

Parameters<float> make_model(int layers, int heads, int d_model) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.d_model = d_model;
  cfg.d_ff = 4 * d_model;
  cfg.vocab_size = 96;
  cfg.context_len = 256;
  return init_params<float>(cfg, 1);
}

TokenSeq make_tokens(int n, int vocab) {
  TokenSeq t;
  for (int i = 0; i < n; ++i) t.push_back(static_cast<TokenId>(i % vocab));
  return t;
}

}  // namespace

static void BM_ForwardStudent(benchmark::State& state) {
  auto params = make_model(2, 2, 64);
  auto tokens = make_tokens(static_cast<int>(state.range(0)), 96);
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(params, tokens));
}
BENCHMARK(BM_ForwardStudent)->Arg(32)->Arg(128);

static void BM_ForwardTeacher(benchmark::State& state) {
  auto params = make_model(4, 4, 128);
  auto tokens = make_tokens(static_cast<int>(state.range(0)), 96);
  for (auto _ : state) benchmark::DoNotOptimize(forward_logits(params, tokens));
}
BENCHMARK(BM_ForwardTeacher)->Arg(32)->Arg(128);

static void BM_ForwardBackwardStudent(benchmark::State& state) {
  auto params = make_model(2, 2, 64);
  auto tokens = make_tokens(static_cast<int>(state.range(0)), 96);
  Weights<float> grads = make_weights<float>(params.config);
  for (auto _ : state) {
    std::vector<TokenSeq> docs{tokens};
    zero_weights(grads);
    benchmark::DoNotOptimize(
        lm_hard_loss(params, std::span<const TokenSeq>(docs), &grads, 1.0f));
  }
}
BENCHMARK(BM_ForwardBackwardStudent)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
