#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "stoptime/matcher.hpp"
#include "stoptime/quantize.hpp"

namespace {

std::vector<std::int64_t> random_symbols(std::size_t n, int alphabet,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> out(n);
  for (auto& s : out) s = static_cast<std::int64_t>(rng() % alphabet);
  return out;
}

void BM_MatcherFeed(benchmark::State& state) {
  auto alphabet = static_cast<int>(state.range(1));
  auto text = random_symbols(1 << 16, alphabet, 7);
  auto pattern = random_symbols(static_cast<std::size_t>(state.range(0)),
                                alphabet, 8);
  stoptime::StreamMatcher<std::int64_t> matcher(pattern);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matcher.feed(text[i]));
    if (++i == text.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}

// Self-similar pattern: worst case for the failure-link fallback loop.
void BM_MatcherFeedSelfSimilar(benchmark::State& state) {
  std::vector<std::int64_t> pattern(static_cast<std::size_t>(state.range(0)),
                                    0);
  pattern.back() = 1;
  std::vector<std::int64_t> text(1 << 16, 0);
  stoptime::StreamMatcher<std::int64_t> matcher(pattern);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(matcher.feed(text[i]));
    if (++i == text.size()) i = 0;
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_CellIndex(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::vector<stoptime::DyadicValue> values;
  for (int i = 0; i < 1024; ++i)
    values.push_back(stoptime::DyadicValue::inexact(
        std::ldexp(static_cast<double>(rng()) - 9.2e18, -60)));
  auto level = static_cast<int>(state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stoptime::cell_index(values[i & 1023], level));
    ++i;
  }
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_MatcherFeed)->Args({4, 2})->Args({64, 2})->Args({64, 16});
BENCHMARK(BM_MatcherFeedSelfSimilar)->Arg(8)->Arg(256);
BENCHMARK(BM_CellIndex)->Arg(0)->Arg(8)->Arg(30);

BENCHMARK_MAIN();
