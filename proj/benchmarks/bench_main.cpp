#include <benchmark/benchmark.h>

#include "signet/data.hpp"
#include "signet/layers.hpp"
#include "signet/model.hpp"
#include "signet/train.hpp"

using namespace signet;

namespace {

Tensor bench_tensor(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.next_uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tape tape;
  Var a = tape.constant(bench_tensor({n, n}, 1));
  Var b = tape.constant(bench_tensor({n, n}, 2));
  for (auto _ : state) {
    Var c = matmul(a, b);
    benchmark::DoNotOptimize(c.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv1dForward(benchmark::State& state) {
  Rng rng(3);
  Conv1DLayer conv("c", 8, 16, 5, 1, 0, Activation::kRelu, rng);
  const Tensor x = bench_tensor({8, 500}, 4);
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    Ctx ctx{tape};
    Var y = conv.forward(ctx, tape.constant(x));
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_Conv1dForward);

void BM_AttentionForward(benchmark::State& state) {
  Rng rng(5);
  MultiHeadAttention mha("a", 48, 4, rng);
  const Tensor x = bench_tensor({8, 48}, 6);
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    Ctx ctx{tape};
    Var y = mha.forward(ctx, tape.constant(x));
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_AttentionForward);

void BM_LstmSequence(benchmark::State& state) {
  Rng rng(7);
  LSTMLayer lstm("l", 250, 32, true, rng);
  const Tensor segments = bench_tensor({8, 250}, 8);
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    Ctx ctx{tape};
    Var y = lstm.forward_sequence(ctx, tape.constant(segments));
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_LstmSequence);

void BM_ModelForwardBackward(benchmark::State& state) {
  const ModelFamily family = static_cast<ModelFamily>(state.range(0));
  Model model(shipped_config(family), 1);
  const Tensor window = bench_tensor({1, 2000}, 9);
  Tape tape;
  for (auto _ : state) {
    tape.clear();
    Ctx ctx{tape, true};
    Var loss = cross_entropy_logits(model.forward(ctx, window), {1});
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value().item());
    for (Parameter* p : model.parameters()) p->zero_grad();
  }
}
BENCHMARK(BM_ModelForwardBackward)
    ->Arg(static_cast<int>(ModelFamily::kTransformer))
    ->Arg(static_cast<int>(ModelFamily::kCnn1d))
    ->Arg(static_cast<int>(ModelFamily::kLstm))
    ->Arg(static_cast<int>(ModelFamily::kCnnLstm));

void BM_AdamStep(benchmark::State& state) {
  Model model(shipped_config(ModelFamily::kTransformer), 1);
  AdamOptimizer opt(model.parameters(), 1e-3, 0.9, 0.999, 1e-8);
  Rng rng(10);
  for (Parameter* p : model.parameters()) {
    for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] = rng.next_uniform(-1.0, 1.0);
  }
  for (auto _ : state) {
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<long long>(model.parameter_total()));
}
BENCHMARK(BM_AdamStep);

void BM_SynthGenerate(benchmark::State& state) {
  SynthSpec spec;
  spec.per_class = 2;
  spec.channels = 4;
  spec.samples = 2200;
  for (auto _ : state) {
    auto recs = synth_generate(spec, 11);
    benchmark::DoNotOptimize(recs.data());
  }
}
BENCHMARK(BM_SynthGenerate);

}  // namespace

BENCHMARK_MAIN();
