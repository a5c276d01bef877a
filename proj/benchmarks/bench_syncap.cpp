#include <benchmark/benchmark.h>

#include <vector>

#include "syncap/attention.hpp"
#include "syncap/dataset.hpp"
#include "syncap/metrics.hpp"
#include "syncap/model.hpp"
#include "syncap/objectives.hpp"
#include "syncap/rng.hpp"
#include "syncap/tensor.hpp"

namespace {

using namespace syncap;

Tensor random_tensor(Rng& rng, int64_t rows, int64_t cols,
                     bool requires_grad = false) {
  std::vector<double> v(static_cast<size_t>(rows * cols));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_vector(std::move(v), rows, cols, requires_grad);
}

ModelConfig bench_config(int64_t vocab_size) {
  ModelConfig cfg;
  cfg.d_m = 64;
  cfg.n_h = 4;
  cfg.r = 10;
  cfg.d_cross = 10;
  cfg.n_layers = 1;
  cfg.max_t_y = 32;
  cfg.max_t_x = 256;
  cfg.vocab_size = vocab_size;
  cfg.c = data::kPoseDim;
  return cfg;
}

void bm_matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(1);
  Tensor a = random_tensor(rng, n, n);
  Tensor b = random_tensor(rng, n, n);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape, a, b));
  }
}

void bm_windowed_self_attention(benchmark::State& state) {
  const int64_t t = state.range(0);
  Rng rng(2);
  const int64_t d_m = 64, n_h = 4;
  SelfAttentionParams params;
  for (int64_t h = 0; h < n_h; ++h) {
    HeadParams head;
    head.wq = random_tensor(rng, d_m, d_m / n_h);
    head.bq = random_tensor(rng, 1, d_m / n_h);
    head.wk = random_tensor(rng, d_m, d_m / n_h);
    head.bk = random_tensor(rng, 1, d_m / n_h);
    head.wv = random_tensor(rng, d_m, d_m / n_h);
    head.bv = random_tensor(rng, 1, d_m / n_h);
    params.heads.push_back(std::move(head));
  }
  params.wo = random_tensor(rng, d_m, d_m);
  Tensor x = random_tensor(rng, t, d_m);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(
        windowed_self_attention(tape, x, params, 10, t, false));
  }
}

void bm_controlled_cross_step(benchmark::State& state) {
  const int64_t t = state.range(0);
  Rng rng(3);
  const int64_t d_m = 64;
  Tensor q = random_tensor(rng, 1, d_m);
  Tensor k = random_tensor(rng, t, d_m);
  Tensor v = random_tensor(rng, t, d_m);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(controlled_cross_step(tape, q, k, v, 10, t));
  }
}

void bm_train_step(benchmark::State& state) {
  const int64_t t_x = state.range(0);
  Rng rng(4);
  ModelConfig cfg = bench_config(24);
  Model model(cfg, 7);
  Tensor poses = random_tensor(rng, t_x, cfg.c);
  const std::vector<int> tokens = {1, 4, 5, 6, 7, 8, 9, 10, 2};
  for (auto _ : state) {
    Tape tape;
    SampleForward fwd = model.forward_teacher_forced(tape, poses, t_x, tokens);
    Tensor lang = objectives::loss_lang(
        tape, fwd.logits,
        std::span<const int>(tokens.data() + 1, tokens.size() - 1));
    Tensor l0 = objectives::loss_init(tape, fwd.centers.front(), t_x);
    Tensor lm = objectives::loss_monotonic(tape, fwd.centers, 1.0, t_x);
    Tensor total = objectives::combine(tape, lang, l0, lm, 0.1, 1000.0);
    for (auto& [name, p] : model.parameters()) {
      for (double& g : p.grad_mut()) g = 0.0;
    }
    tape.backward(total);
    benchmark::DoNotOptimize(total.item());
  }
}

void bm_generate(benchmark::State& state) {
  Rng rng(5);
  ModelConfig cfg = bench_config(24);
  cfg.max_t_y = 16;
  Model model(cfg, 8);
  Tensor poses = random_tensor(rng, 80, cfg.c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.generate(poses, 80));
  }
}

void bm_corpus_bleu(benchmark::State& state) {
  auto corpus = data::generate_corpus(64, 11, 2, 3);
  std::vector<std::vector<std::string>> cands, refs;
  for (size_t i = 0; i < corpus.size(); ++i) {
    refs.push_back(data::tokenize(corpus[i].caption));
    cands.push_back(data::tokenize(corpus[(i + 1) % corpus.size()].caption));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::bleu(cands, refs, 4));
  }
}

void bm_generate_corpus(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(data::generate_corpus(8, 13, 2, 3));
  }
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(128);
BENCHMARK(bm_windowed_self_attention)->Arg(60)->Arg(120);
BENCHMARK(bm_controlled_cross_step)->Arg(60)->Arg(120);
BENCHMARK(bm_train_step)->Arg(60)->Arg(120);
BENCHMARK(bm_generate);
BENCHMARK(bm_corpus_bleu);
BENCHMARK(bm_generate_corpus);

BENCHMARK_MAIN();
