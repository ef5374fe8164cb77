#include "semiipc/experiment.hpp"

#include <benchmark/benchmark.h>

using namespace semiipc;

namespace {

void BM_IpcGradient(benchmark::State& state) {
  const auto k = static_cast<Eigen::Index>(state.range(0));
  const Eigen::Index d = 512;
  Rng rng(1);
  Eigen::MatrixXd m(k, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  std::vector<ClassId> ids(k);
  for (Eigen::Index i = 0; i < k; ++i) ids[i] = i;
  const PrototypeSet set(m, ids);
  std::vector<LabeledFeature> batch(128);
  for (auto& f : batch) {
    f.z.resize(d);
    for (auto& v : f.z) v = rng.normal();
    f.y = static_cast<ClassId>(rng.below(static_cast<std::size_t>(k)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(ipc_gradient(batch, set, {}));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_IpcGradient)->Arg(10)->Arg(100);

void BM_TrainTask(benchmark::State& state) {
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.5");
  const auto tasks = split_dataset(generate_synthetic(cfg), SplitPlan{0, 5, {}, 5, 0});
  TrainConfig train;
  train.epochs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    TrainerState s = initial_state(cfg.dim, 0);
    for (const auto& t : tasks) s = train_task(std::move(s), t.data, train);
    benchmark::DoNotOptimize(s.protos.matrix().data());
  }
}
BENCHMARK(BM_TrainTask)->Arg(10)->Arg(80)->Unit(benchmark::kMillisecond);

void BM_PcId(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  Rng rng(2);
  Eigen::MatrixXd x(2000, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(pc_id(x).pc_id);
}
BENCHMARK(BM_PcId)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
