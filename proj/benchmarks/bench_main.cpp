#include <benchmark/benchmark.h>

#include <random>

#include "leafae/data.hpp"
#include "leafae/detect.hpp"
#include "leafae/models.hpp"
#include "leafae/nn.hpp"
#include "leafae/ops.hpp"
#include "leafae/optim.hpp"

using namespace leafae;

namespace {

Tensor32 random_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor32 t(s);
  for (float& v : t.data()) v = u(rng);
  return t;
}

// conv 3x3 stride 1 pad 1 over a [8, C, S, S] batch; args: channels, side.
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const Tensor32 x = random_tensor({8, c, s, s}, 1), w = random_tensor({c, c, 3, 3}, 2), b = random_tensor({c}, 3);
  for (auto _ : state) {
    Graph<float> g;
    Var<float> y = nn::conv2d(g.constant(x), g.constant(w), g.constant(b), 1, 1);
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_Conv2dForward)->Args({16, 32})->Args({64, 8})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const Tensor32 x = random_tensor({8, c, s, s}, 1), w = random_tensor({c, c, 3, 3}, 2), b = random_tensor({c}, 3);
  for (auto _ : state) {
    Graph<float> g;
    Var<float> xv = g.leaf(x, true), wv = g.leaf(w, true), bv = g.leaf(b, true);
    Var<float> loss = ops::sum(nn::conv2d(xv, wv, bv, 1, 1));
    auto grads = g.backward(loss);
    benchmark::DoNotOptimize(&grads);
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 32})->Args({64, 8})->Unit(benchmark::kMillisecond);

void BM_TransposedConv2dForward(benchmark::State& state) {
  const Tensor32 x = random_tensor({8, 64, 8, 8}, 1), w = random_tensor({64, 32, 8, 8}, 2), b = random_tensor({32}, 3);
  for (auto _ : state) {
    Graph<float> g;
    Var<float> y = nn::transposed_conv2d(g.constant(x), g.constant(w), g.constant(b), 4, 2);
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_TransposedConv2dForward)->Unit(benchmark::kMillisecond);

// One optimizer epoch of 32 synthetic 32x32 tiles for each architecture.
void BM_TrainEpoch(benchmark::State& state) {
  const auto kind = static_cast<models::ModelKind>(state.range(0));
  std::vector<data::LabeledImage> train;
  for (const auto& s : data::make_synthetic_set({}, 32, 0)) train.push_back(s.image);
  auto model = models::make_model<float>(models::ModelConfig::defaults(kind, 32));
  for (auto _ : state) {
    auto r = optim::train<float>(*model, train, optim::TrainBudget::fixed_epochs(1), {});
    benchmark::DoNotOptimize(r.loss_history.data());
  }
  state.SetLabel(std::string(models::to_string(kind)));
}
BENCHMARK(BM_TrainEpoch)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_Reconstruct256(benchmark::State& state) {
  const auto kind = static_cast<models::ModelKind>(state.range(0));
  auto model = models::make_model<float>(models::ModelConfig::defaults(kind, 256));
  const Tensor32 x = random_tensor({3, 256, 256}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model->reconstruct(x).data().data());
  state.SetLabel(std::string(models::to_string(kind)));
}
BENCHMARK(BM_Reconstruct256)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_AucRoc(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> h(static_cast<std::size_t>(state.range(0))), d(h.size());
  for (double& v : h) v = u(rng);
  for (double& v : d) v = u(rng) + 0.2;
  for (auto _ : state) benchmark::DoNotOptimize(detect::auc_roc(h, d));
}
BENCHMARK(BM_AucRoc)->Arg(100)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
