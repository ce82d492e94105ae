#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "stoptime/estimator.hpp"
#include "stoptime/sources.hpp"

namespace {

stoptime::SourceSpec sticky_spec() {
  stoptime::SourceSpec spec;
  spec.kind = stoptime::SourceSpec::Kind::markov;
  spec.markov.values = {stoptime::DyadicValue::from_integer(0),
                        stoptime::DyadicValue::from_integer(1)};
  spec.markov.transitions = {{0.95, 0.05}, {0.05, 0.95}};
  return spec;
}

// End-to-end advance cost on a low-entropy path, the regime the presets
// spend nearly all their samples in.
void BM_EstimatorAdvance(benchmark::State& state) {
  auto src = stoptime::make_source(sticky_spec(), 11);
  std::vector<stoptime::DyadicValue> path;
  for (int i = 0; i < (1 << 16); ++i) path.push_back(src->next());

  auto max_level = static_cast<int>(state.range(0));
  stoptime::QuantizedEstimator est(max_level);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(est.advance(path[i]));
    if (++i == path.size()) {
      i = 0;
      est = stoptime::QuantizedEstimator(max_level);
    }
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_SourceNext(benchmark::State& state) {
  stoptime::SourceSpec spec;
  spec.kind = state.range(0) == 0 ? stoptime::SourceSpec::Kind::counterexample
                                  : stoptime::SourceSpec::Kind::ar1;
  auto src = stoptime::make_source(spec, 13);
  for (auto _ : state) benchmark::DoNotOptimize(src->next());
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_EstimatorAdvance)->Arg(4)->Arg(8);
BENCHMARK(BM_SourceNext)->Arg(0)->Arg(1);
