#include "stoptime/sources.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

namespace stoptime {

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  have_spare_ = true;
  return u * f;
}

int Rng::geometric1() {
  int base = 0;
  for (;;) {
    std::uint64_t x = word();
    if (x != 0) return base + std::countl_zero(x) + 1;
    base += 64;
  }
}

std::uint64_t Rng::mix(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

constexpr double kRowSumTolerance = 0x1.0p-40;
constexpr double kResidualTolerance = 0x1.0p-40;

// Deepest representable chain state: state i emits 2^-(2^i + 1) and the
// exponent range caps at 2^62. A jump this deep has probability below 2^-61
// per visit to state 1.
constexpr int kMaxCounterexampleState = 61;

// Conditional mean out of state 1: sum over i >= 2 of 2^-i * 2^-(2^i + 1)
// = 2^-7 + 2^-12 + 2^-21 + 2^-38 + ...; terms from i = 6 on are below the
// resolution of the double sum.
constexpr double kMeanFromStateOne = 0.008057117465796182;

int sample_categorical(Rng& rng, const std::vector<double>& probs) {
  double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

void validate_rows(const std::vector<std::vector<double>>& rows) {
  std::size_t n = rows.size();
  if (n == 0) throw std::invalid_argument("transition matrix is empty");
  for (const auto& row : rows) {
    if (row.size() != n)
      throw std::invalid_argument("transition matrix is not square");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0) || p > 1.0)
        throw std::invalid_argument("transition probability out of range");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > kRowSumTolerance)
      throw std::invalid_argument("transition row does not sum to 1");
  }
}

// Both sweeps from state 0 must cover everything for irreducibility.
bool strongly_connected(const std::vector<std::vector<double>>& rows) {
  std::size_t n = rows.size();
  auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        double p = forward ? rows[i][j] : rows[j][i];
        if (p > 0.0 && !seen[j]) {
          seen[j] = 1;
          ++count;
          stack.push_back(j);
        }
      }
    }
    return count == n;
  };
  return reach(true) && reach(false);
}

double stationarity_residual(const std::vector<std::vector<double>>& rows,
                             const std::vector<double>& pi) {
  std::size_t n = rows.size();
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += pi[i] * rows[i][j];
    worst = std::max(worst, std::fabs(acc - pi[j]));
  }
  return worst;
}

std::vector<double> normalize(std::vector<double> v) {
  double sum = 0.0;
  for (double& x : v) {
    if (x < 0.0) x = 0.0;
    sum += x;
  }
  if (sum <= 0.0)
    throw std::runtime_error("stationary_distribution: degenerate solution");
  for (double& x : v) x /= sum;
  return v;
}

}  // namespace

std::vector<double> stationary_distribution(
    const std::vector<std::vector<double>>& transitions) {
  validate_rows(transitions);
  if (!strongly_connected(transitions))
    throw std::runtime_error("stationary_distribution: chain is reducible");
  std::size_t n = transitions.size();

  Eigen::MatrixXd a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          transitions[j][i] - (i == j ? 1.0 : 0.0);
  for (std::size_t j = 0; j < n; ++j)
    a(static_cast<Eigen::Index>(n - 1), static_cast<Eigen::Index>(j)) = 1.0;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  b(static_cast<Eigen::Index>(n - 1)) = 1.0;
  Eigen::VectorXd x = a.partialPivLu().solve(b);

  std::vector<double> pi(n);
  bool plausible = true;
  for (std::size_t i = 0; i < n; ++i) {
    pi[i] = x(static_cast<Eigen::Index>(i));
    if (!std::isfinite(pi[i]) || pi[i] < -1e-9) plausible = false;
  }
  if (plausible) {
    pi = normalize(std::move(pi));
    if (stationarity_residual(transitions, pi) < kResidualTolerance) return pi;
  }

  // Damped fixed-point iteration; the half-step damping also handles
  // periodic chains, whose undamped iteration oscillates.
  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  for (int iter = 0; iter < 1000000; ++iter) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[j] += v[i] * transitions[i][j];
    double delta = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      next[j] = 0.5 * v[j] + 0.5 * next[j];
      delta = std::max(delta, std::fabs(next[j] - v[j]));
    }
    v = std::move(next);
    if (delta < 1e-16) break;
  }
  v = normalize(std::move(v));
  if (stationarity_residual(transitions, v) < kResidualTolerance) return v;
  throw std::runtime_error("stationary_distribution: did not converge");
}

namespace {

class ReplaySource final : public Source {
 public:
  explicit ReplaySource(std::vector<DyadicValue> pattern)
      : pattern_(std::move(pattern)) {
    if (pattern_.empty())
      throw std::invalid_argument("replay: empty pattern");
  }

  DyadicValue next() override {
    DyadicValue v = pattern_[pos_];
    pos_ = (pos_ + 1) % pattern_.size();
    return v;
  }

  double conditional_mean() const override {
    return pattern_[pos_].to_double();
  }

  std::string kind() const override { return "replay"; }

 private:
  std::vector<DyadicValue> pattern_;
  std::size_t pos_ = 0;
};

class IidBernoulliSource final : public Source {
 public:
  IidBernoulliSource(double p, std::uint64_t seed) : rng_(seed), p_(p) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("iid_bernoulli: p outside [0, 1]");
  }

  DyadicValue next() override {
    return DyadicValue::from_integer(rng_.uniform01() < p_ ? 1 : 0);
  }

  double conditional_mean() const override { return p_; }
  std::string kind() const override { return "iid_bernoulli"; }

 private:
  Rng rng_;
  double p_;
};

class IidUniformSource final : public Source {
 public:
  explicit IidUniformSource(std::uint64_t seed) : rng_(seed) {}

  DyadicValue next() override {
    return DyadicValue::inexact(rng_.uniform01());
  }

  double conditional_mean() const override { return 0.5; }
  std::string kind() const override { return "iid_uniform"; }

 private:
  Rng rng_;
};

class Ar1Source final : public Source {
 public:
  Ar1Source(double coeff, double noise_sd, std::uint64_t seed)
      : rng_(seed), coeff_(coeff), noise_sd_(noise_sd) {
    if (!(std::fabs(coeff) < 1.0))
      throw std::invalid_argument("ar1: |coeff| must be < 1");
    if (!(noise_sd > 0.0))
      throw std::invalid_argument("ar1: noise_sd must be > 0");
    // Stationary marginal: mean 0, variance noise_sd^2 / (1 - coeff^2).
    x_ = rng_.normal() * noise_sd / std::sqrt(1.0 - coeff * coeff);
  }

  DyadicValue next() override {
    if (started_)
      x_ = coeff_ * x_ + noise_sd_ * rng_.normal();
    else
      started_ = true;
    return DyadicValue::inexact(x_);
  }

  double conditional_mean() const override { return coeff_ * x_; }
  std::string kind() const override { return "ar1"; }

 private:
  Rng rng_;
  double coeff_;
  double noise_sd_;
  double x_ = 0.0;
  bool started_ = false;
};

class MarkovSource final : public Source {
 public:
  MarkovSource(MarkovSpec spec, std::uint64_t seed)
      : rng_(seed), spec_(std::move(spec)) {
    validate_rows(spec_.transitions);
    if (spec_.values.size() != spec_.transitions.size())
      throw std::invalid_argument("markov: one value per state required");
    if (spec_.initial.empty()) {
      spec_.initial = stationary_distribution(spec_.transitions);
    } else if (spec_.initial.size() != spec_.transitions.size()) {
      throw std::invalid_argument("markov: initial law has wrong length");
    } else {
      double sum = 0.0;
      for (double p : spec_.initial) {
        if (!(p >= 0.0) || p > 1.0)
          throw std::invalid_argument("markov: initial probability invalid");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > kRowSumTolerance)
        throw std::invalid_argument("markov: initial law does not sum to 1");
    }
    means_.reserve(spec_.values.size());
    for (const auto& row : spec_.transitions) {
      double m = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j)
        m += row[j] * spec_.values[j].to_double();
      means_.push_back(m);
    }
    state_ = sample_categorical(rng_, spec_.initial);
  }

  DyadicValue next() override {
    if (started_)
      state_ = sample_categorical(rng_, spec_.transitions[state_]);
    else
      started_ = true;
    return spec_.values[state_];
  }

  double conditional_mean() const override { return means_[state_]; }
  std::string kind() const override { return "markov"; }

 private:
  Rng rng_;
  MarkovSpec spec_;
  std::vector<double> means_;
  int state_ = 0;
  bool started_ = false;
};

}  // namespace

CounterexampleSource::CounterexampleSource(std::uint64_t seed) : rng_(seed) {
  state_ = sample_initial_state();
}

DyadicValue CounterexampleSource::state_value(int state) {
  if (state < 0) throw std::invalid_argument("counterexample: negative state");
  if (state == 0) return DyadicValue::from_integer(0);
  if (state == 1) return DyadicValue::from_integer(1);
  if (state > kMaxCounterexampleState)
    throw std::overflow_error("counterexample: state too deep to represent");
  return DyadicValue::exact(1, -((std::int64_t{1} << state) + 1));
}

double CounterexampleSource::state_weight(int state) {
  if (state < 0) throw std::invalid_argument("counterexample: negative state");
  if (state == 0) return 4.0 / 7.0;
  if (state == 1) return 2.0 / 7.0;
  return std::ldexp(1.0 / 7.0, -(state - 1));
}

double CounterexampleSource::mean_from_state(int state) {
  if (state < 0) throw std::invalid_argument("counterexample: negative state");
  if (state == 0) return 0.5;
  if (state == 1) return kMeanFromStateOne;
  return 0.0;
}

int CounterexampleSource::sample_initial_state() {
  double u = rng_.uniform01();
  if (u < 4.0 / 7.0) return 0;
  if (u < 6.0 / 7.0) return 1;
  int state = 1 + rng_.geometric1();
  if (state > kMaxCounterexampleState)
    throw std::overflow_error("counterexample: state too deep to represent");
  return state;
}

int CounterexampleSource::step_from(int state) {
  if (state == 0) return rng_.fair_bit() ? 1 : 0;
  if (state >= 2) return 0;
  int k = rng_.geometric1();
  if (k == 1) return 0;
  if (k > kMaxCounterexampleState)
    throw std::overflow_error("counterexample: state too deep to represent");
  return k;
}

DyadicValue CounterexampleSource::next() {
  if (started_)
    state_ = step_from(state_);
  else
    started_ = true;
  return state_value(state_);
}

double CounterexampleSource::conditional_mean() const {
  return mean_from_state(state_);
}

const char* kind_name(SourceSpec::Kind kind) {
  switch (kind) {
    case SourceSpec::Kind::replay: return "replay";
    case SourceSpec::Kind::iid_bernoulli: return "iid_bernoulli";
    case SourceSpec::Kind::iid_uniform: return "iid_uniform";
    case SourceSpec::Kind::ar1: return "ar1";
    case SourceSpec::Kind::markov: return "markov";
    case SourceSpec::Kind::counterexample: return "counterexample";
  }
  return "unknown";
}

std::unique_ptr<Source> make_source(const SourceSpec& spec,
                                    std::uint64_t seed) {
  switch (spec.kind) {
    case SourceSpec::Kind::replay:
      return std::make_unique<ReplaySource>(spec.pattern);
    case SourceSpec::Kind::iid_bernoulli:
      return std::make_unique<IidBernoulliSource>(spec.p, seed);
    case SourceSpec::Kind::iid_uniform:
      return std::make_unique<IidUniformSource>(seed);
    case SourceSpec::Kind::ar1:
      return std::make_unique<Ar1Source>(spec.coeff, spec.noise_sd, seed);
    case SourceSpec::Kind::markov:
      return std::make_unique<MarkovSource>(spec.markov, seed);
    case SourceSpec::Kind::counterexample:
      return std::make_unique<CounterexampleSource>(seed);
  }
  throw std::invalid_argument("make_source: unknown kind");
}

}  // namespace stoptime
