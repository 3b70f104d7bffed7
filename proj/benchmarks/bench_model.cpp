#include <benchmark/benchmark.h>

#include "gazestab/loss.hpp"
#include "gazestab/segmentation.hpp"
#include "gazestab/simulator.hpp"
#include "gazestab/training.hpp"

using namespace gazestab;
using ad::Mat;

namespace {

Mat history(std::size_t rows) {
  Mat h = Mat::Random(static_cast<Eigen::Index>(rows), 4) * 0.1;
  return h;
}

Mat times(std::size_t rows) {
  Mat t(static_cast<Eigen::Index>(rows), 1);
  for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, 0) = (static_cast<double>(i) - static_cast<double>(rows)) / 60.0;
  return t;
}

void BM_Forward(benchmark::State& state) {
  const Model model(ModelConfig{}, 0);
  const Mat x = history(64), t = times(64);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x, t));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_Rollout(benchmark::State& state) {
  const Model model(ModelConfig{}, 0);
  const Mat x = history(96), t = times(96);
  const auto window = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rollout(model, x, t, window, 60.0));
}
BENCHMARK(BM_Rollout)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ExampleGradient(benchmark::State& state) {
  const Model model(ModelConfig{}, 0);
  SimConfig sc;
  sc.n_trials = 4;
  const auto kept = clean_corpus(simulate_corpus(sc), CleaningRules{}, FixationConfig{}).kept;
  const Example ex = *make_example(kept.front(), 96, 64, 32, 60.0);
  const LossConfig lcfg;
  for (auto _ : state) benchmark::DoNotOptimize(example_gradient(model, ex, lcfg, 16, 60.0, false));
}
BENCHMARK(BM_ExampleGradient)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
  SimConfig sc;
  sc.n_trials = 100;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_corpus(sc));
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
