// Latency of the online prediction path at production size: 183 features,
// 183 -> 100 -> 100 -> 100 hidden stack (head dim 101), subspace dim 20.

#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <vector>

#include "toxflow/features.hpp"
#include "toxflow/labeler.hpp"
#include "toxflow/market_data.hpp"
#include "toxflow/online.hpp"
#include "toxflow/pulse.hpp"
#include "toxflow/rng.hpp"
#include "toxflow/warmup.hpp"

namespace {

using namespace toxflow;

// A structurally faithful model without the warmup cost: orthonormal A,
// random anchor and head, identity standardization.
SubspaceModel make_model(int input_dim, int d) {
  SubspaceModel m;
  m.arch.input_dim = input_dim;
  m.arch.hidden = {100, 100, 100};
  m.cfg.subspace_dim = d;
  const auto D = m.arch.psi_dim();
  Rng rng(7);
  Eigen::MatrixXd G(D, d);
  for (Eigen::Index i = 0; i < G.size(); ++i) *(G.data() + i) = rng.normal();
  m.A = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() *
        Eigen::MatrixXd::Identity(D, d);
  m.b.resize(D);
  for (Eigen::Index i = 0; i < D; ++i) m.b(i) = 0.05 * rng.normal();
  m.w_final.resize(m.arch.head_dim());
  for (Eigen::Index i = 0; i < m.w_final.size(); ++i) {
    m.w_final(i) = 0.1 * rng.normal();
  }
  m.standardizer.mean = Eigen::VectorXd::Zero(input_dim);
  m.standardizer.scale = Eigen::VectorXd::Ones(input_dim);
  return m;
}

Eigen::VectorXd random_x(Rng& rng, int dim) {
  Eigen::VectorXd x(dim);
  for (int i = 0; i < dim; ++i) x(i) = rng.normal();
  return x;
}

void BM_PulsePredict(benchmark::State& state) {
  const SubspaceModel model = make_model(183, 20);
  PulseOnline online(init_priors(model), &model);
  Rng rng(11);
  const Eigen::VectorXd x = random_x(rng, 183);
  for (auto _ : state) {
    benchmark::DoNotOptimize(online.predict(x));
  }
}

void BM_PulseUpdate(benchmark::State& state) {
  const SubspaceModel model = make_model(183, 20);
  PulseOnline online(init_priors(model), &model);
  Rng rng(12);
  const Eigen::VectorXd x = random_x(rng, 183);
  bool y = false;
  for (auto _ : state) {
    online.update(x, y);
    y = !y;
  }
  benchmark::DoNotOptimize(online.version());
}

// The full scheduler step: release due labels (one per arrival at steady
// state), predict, enqueue. This is the number the <1ms budget is about.
void BM_ProcessArrival(benchmark::State& state) {
  const SubspaceModel model = make_model(183, 20);
  AsyncScheduler<PulseOnline> sched(PulseOnline(init_priors(model), &model));
  Rng rng(13);
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < 256; ++i) xs.push_back(random_x(rng, 183));
  const Micros horizon = 30'000'000;
  Micros ts = 0;
  int i = 0;
  for (auto _ : state) {
    Label label;
    label.y = (i & 3) == 0;
    label.resolved_ts = ts + horizon;
    label.tau = horizon;
    ts += 500'000;  // 2 arrivals/s: ~60 labels pending at steady state
    benchmark::DoNotOptimize(
        sched.process_arrival(ts, xs[static_cast<std::size_t>(i & 255)], label));
    ++i;
  }
}

void BM_Featurize(benchmark::State& state) {
  SynthConfig synth;
  synth.seed = 21;
  synth.n_days = 1;
  synth.session_len = 600'000'000;
  const std::vector<Tape> tapes = generate_tapes(synth);
  const std::vector<std::vector<Label>> labels = {
      label_tape(tapes[0], Horizon{30'000'000})};
  const FeatureConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(featurize_tapes(tapes, labels, cfg, 8));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(tapes[0].trades.size()));
}

void BM_LabelTape(benchmark::State& state) {
  SynthConfig synth;
  synth.seed = 22;
  synth.n_days = 1;
  synth.session_len = 600'000'000;
  const std::vector<Tape> tapes = generate_tapes(synth);
  for (auto _ : state) {
    benchmark::DoNotOptimize(label_tape(tapes[0], Horizon{30'000'000}));
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(tapes[0].trades.size()));
}

}  // namespace

BENCHMARK(BM_PulsePredict)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PulseUpdate)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ProcessArrival)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Featurize)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelTape)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
