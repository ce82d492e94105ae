#ifndef STOPTIME_SOURCES_HPP
#define STOPTIME_SOURCES_HPP

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stoptime/dyadic.hpp"

namespace stoptime {

// Deterministic random layer. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard, and every sampler below is spelled out
// explicitly so that value streams are identical across platforms and
// compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t word() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(word() >> 11) * 0x1.0p-53; }

  // Standard normal via the polar rejection method.
  double normal();

  bool fair_bit() { return (word() >> 63) != 0; }

  // k >= 1 with probability exactly 2^-k: position of the first set bit in
  // the random bit stream. Unbounded, almost surely finite.
  int geometric1();

  // Per-replicate stream derivation (splitmix64 finalizer).
  static std::uint64_t mix(std::uint64_t base, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// A stationary source emits one value per step and reports the conditional
// mean of its next emission given everything emitted so far.
class Source {
 public:
  virtual ~Source() = default;

  // Emit the value at the next time index (the first call emits time 0,
  // drawn from the stationary law).
  virtual DyadicValue next() = 0;

  // E[X_{t+1} | X_0..X_t] where t is the index of the last emission. Every
  // shipped kind carries a one-step-sufficient statistic, so this is exact.
  virtual double conditional_mean() const = 0;

  virtual std::string kind() const = 0;
};

// Finite-state chain: one emitted value per state plus a row-stochastic
// transition matrix. An empty initial law means "start from the stationary
// law", which keeps the emitted series strictly stationary.
struct MarkovSpec {
  std::vector<DyadicValue> values;
  std::vector<std::vector<double>> transitions;
  std::vector<double> initial;
};

// Unique stationary law of an irreducible row-stochastic matrix: direct
// linear solve with a normalization row, residual-checked to 2^-40, with a
// damped fixed-point fallback. Throws std::invalid_argument for malformed
// matrices and std::runtime_error for reducible chains.
std::vector<double> stationary_distribution(
    const std::vector<std::vector<double>>& transitions);

struct SourceSpec {
  enum class Kind { replay, iid_bernoulli, iid_uniform, ar1, markov,
                    counterexample };

  Kind kind = Kind::iid_bernoulli;
  std::vector<DyadicValue> pattern;  // replay
  double p = 0.5;                    // iid_bernoulli
  double coeff = 0.5;                // ar1: next = coeff * current + noise
  double noise_sd = 1.0;             // ar1
  MarkovSpec markov;                 // markov
};

// Throws std::invalid_argument for out-of-range parameters.
std::unique_ptr<Source> make_source(const SourceSpec& spec, std::uint64_t seed);

const char* kind_name(SourceSpec::Kind kind);

// Countable-state chain whose emitted values become dyadically tiny: state 0
// emits 0, state 1 emits 1, and state i >= 2 emits 2^-(2^i + 1), held exactly
// (these underflow doubles from i = 11 on). From state 0 a fair coin picks
// state 0 or 1; from state 1 the chain falls back to 0 with probability 1/2
// or jumps to state i >= 2 with probability 2^-i; every state i >= 2 returns
// to 0. Started from its stationary law.
class CounterexampleSource final : public Source {
 public:
  explicit CounterexampleSource(std::uint64_t seed);

  DyadicValue next() override;
  double conditional_mean() const override;
  std::string kind() const override { return "counterexample"; }

  int state() const { return state_; }

  // Value emitted from a state, exact.
  static DyadicValue state_value(int state);
  // Stationary mass of a state: 4/7, 2/7, then (1/7) * 2^-(i-1).
  static double state_weight(int state);
  // Exact conditional mean of the next emission given the current state.
  static double mean_from_state(int state);

 private:
  int sample_initial_state();
  int step_from(int state);

  Rng rng_;
  int state_ = 0;
  bool started_ = false;
};

}  // namespace stoptime

#endif
