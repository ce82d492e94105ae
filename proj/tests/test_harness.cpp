#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stoptime/estimator.hpp"
#include "stoptime/harness.hpp"
#include "stoptime/metrics.hpp"

using stoptime::DyadicValue;
using stoptime::ExperimentConfig;
using stoptime::SourceSpec;
using stoptime::TraceRecord;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("stoptime_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json sticky_config_json() {
  return json{{"name", "sticky"},
              {"source",
               {{"kind", "markov"},
                {"values", {0, 1}},
                {"transitions", {{0.95, 0.05}, {0.05, 0.95}}}}},
              {"seed", 11},
              {"replicates", 6},
              {"budget", 20000},
              {"max_level", 5},
              {"run_exact_variant", true}};
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(STOPTIME_CLI_PATH) + " " + args +
                    " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

}  // namespace

TEST_CASE("config parsing is strict about keys and ranges") {
  auto good = sticky_config_json();
  auto cfg = stoptime::parse_config(good);
  CHECK(cfg.name == "sticky");
  CHECK(cfg.replicates == 6);
  CHECK(cfg.max_level == 5);
  CHECK(cfg.run_exact_variant);
  CHECK(cfg.source.kind == SourceSpec::Kind::markov);
  CHECK(cfg.source.markov.values.size() == 2);

  auto unknown_top = good;
  unknown_top["surprise"] = 1;
  CHECK_THROWS_AS(stoptime::parse_config(unknown_top), stoptime::ConfigError);

  auto unknown_nested = good;
  unknown_nested["source"]["stickiness"] = 0.5;
  CHECK_THROWS_AS(stoptime::parse_config(unknown_nested),
                  stoptime::ConfigError);

  auto missing_source = good;
  missing_source.erase("source");
  CHECK_THROWS_AS(stoptime::parse_config(missing_source),
                  stoptime::ConfigError);

  auto bad_kind = good;
  bad_kind["source"]["kind"] = "weather";
  CHECK_THROWS_AS(stoptime::parse_config(bad_kind), stoptime::ConfigError);

  for (auto patch : std::vector<json>{
           {{"replicates", 0}},
           {{"budget", 0}},
           {{"max_level", 0}},
           {{"min_level", 9}},
           {{"snapshot_depth", -1}},
           {{"stationarity_level", 0}},
           {{"stationarity_level", 9}},
           {{"threads", -2}},
       }) {
    auto bad = good;
    bad.update(patch);
    CAPTURE(patch.dump());
    CHECK_THROWS_AS(stoptime::parse_config(bad), stoptime::ConfigError);
  }

  json bernoulli{{"source", {{"kind", "iid_bernoulli"}, {"p", 1.5}}}};
  CHECK_THROWS_AS(stoptime::parse_config(bernoulli), stoptime::ConfigError);
  json ar1{{"source", {{"kind", "ar1"}, {"coeff", 1.0}}}};
  CHECK_THROWS_AS(stoptime::parse_config(ar1), stoptime::ConfigError);
  json replay{{"source", {{"kind", "replay"}, {"pattern", json::array()}}}};
  CHECK_THROWS_AS(stoptime::parse_config(replay), stoptime::ConfigError);
  CHECK_THROWS_AS(stoptime::parse_config(json::array()),
                  stoptime::ConfigError);

  // Dyadic string values are accepted in patterns and markov values.
  json literal{{"source",
                {{"kind", "replay"}, {"pattern", {"1*2^-2049", "0.5", 3}}}}};
  auto parsed = stoptime::parse_config(literal);
  CHECK(parsed.source.pattern[0] == DyadicValue::pow2(-2049));
  CHECK(parsed.source.pattern[1] == DyadicValue::pow2(-1));
  CHECK(parsed.source.pattern[2] == DyadicValue::from_integer(3));
}

TEST_CASE("config json round trip") {
  auto cfg = stoptime::parse_config(sticky_config_json());
  cfg.stationarity_level = 2;
  auto again = stoptime::parse_config(stoptime::config_to_json(cfg));
  CHECK(again.name == cfg.name);
  CHECK(again.seed == cfg.seed);
  CHECK(again.replicates == cfg.replicates);
  CHECK(again.budget == cfg.budget);
  CHECK(again.max_level == cfg.max_level);
  CHECK(again.run_exact_variant == cfg.run_exact_variant);
  CHECK(again.stationarity_level == cfg.stationarity_level);
  CHECK(again.source.markov.transitions == cfg.source.markov.transitions);
  CHECK(again.source.markov.values == cfg.source.markov.values);
}

TEST_CASE("presets carry the documented experiment shapes") {
  auto markov = stoptime::preset("convergence-markov");
  CHECK(markov.source.kind == SourceSpec::Kind::markov);
  CHECK(markov.replicates == 200);
  CHECK(markov.budget == 1000000);
  CHECK(markov.source.markov.transitions[0][0] == 0.95);

  auto iid = stoptime::preset("convergence-iid");
  CHECK(iid.source.kind == SourceSpec::Kind::iid_bernoulli);
  CHECK(iid.source.p == 0.5);
  CHECK(iid.budget == 1000000);

  auto ar1 = stoptime::preset("continuity-ar1");
  CHECK(ar1.source.kind == SourceSpec::Kind::ar1);
  CHECK(ar1.source.coeff == 0.5);
  CHECK(ar1.budget == 100000);

  auto ce = stoptime::preset("divergence-counterexample");
  CHECK(ce.source.kind == SourceSpec::Kind::counterexample);
  CHECK(ce.max_level == 3);
  CHECK(ce.replicates == 10000);
  CHECK(ce.run_exact_variant);

  CHECK_THROWS_AS(stoptime::preset("divergence"), stoptime::ConfigError);
}

TEST_CASE("load_config_file failure modes") {
  TempDir dir("cfg");
  CHECK_THROWS_AS(stoptime::load_config_file(dir.path / "absent.json"),
                  stoptime::ConfigError);
  auto bad = dir.path / "bad.json";
  std::ofstream(bad) << "{not json";
  CHECK_THROWS_AS(stoptime::load_config_file(bad), stoptime::ConfigError);
  auto good = dir.path / "good.json";
  std::ofstream(good) << sticky_config_json().dump();
  CHECK(stoptime::load_config_file(good).name == "sticky");
}

TEST_CASE("csv rows round trip bit for bit") {
  TempDir dir("csv");
  std::vector<TraceRecord> rows;
  TraceRecord a;
  a.replicate = 3;
  a.n = 2;
  a.lambda = 17;
  a.estimate = 1.0 / 3.0;
  a.oracle_stop = 0.05;
  a.oracle_limit = 0.05;
  a.gap = std::abs(1.0 / 3.0 - 0.05);
  a.value_at_stop = DyadicValue::pow2(-(std::int64_t{1} << 11) - 1);
  a.event_an = true;
  a.event_h_prefix = false;
  rows.push_back(a);
  TraceRecord b;
  b.replicate = 4;
  b.n = 1;
  b.lambda = 1;
  b.exact_estimate = 0.008057117465796182;
  b.value_at_stop = DyadicValue::inexact(0.1);
  b.event_h_prefix = true;
  rows.push_back(b);

  auto file = dir.path / "trace.csv";
  stoptime::write_trace_csv(file, rows);
  auto back = stoptime::read_trace_csv(file);
  REQUIRE(back.size() == 2);
  CHECK(back[0].replicate == 3);
  CHECK(back[0].estimate == a.estimate);
  CHECK(!back[0].exact_estimate.has_value());
  CHECK(back[0].gap == a.gap);
  CHECK(back[0].value_at_stop == a.value_at_stop);
  CHECK(back[0].event_an);
  CHECK(!back[0].event_h_prefix);
  CHECK(back[1].exact_estimate == b.exact_estimate);
  CHECK(!back[1].oracle_stop.has_value());
  CHECK(back[1].value_at_stop == b.value_at_stop);

  // Writing the parsed rows again reproduces the identical file.
  auto file2 = dir.path / "again.csv";
  stoptime::write_trace_csv(file2, back);
  CHECK(slurp(file) == slurp(file2));

  std::ofstream(dir.path / "bad_header.csv") << "a,b,c\n1,2,3\n";
  CHECK_THROWS(stoptime::read_trace_csv(dir.path / "bad_header.csv"));
  std::ofstream(dir.path / "short_row.csv")
      << stoptime::trace_csv_header() << "\n1,2,3\n";
  CHECK_THROWS(stoptime::read_trace_csv(dir.path / "short_row.csv"));
}

TEST_CASE("experiments are deterministic and thread-count invariant") {
  auto cfg = stoptime::parse_config(sticky_config_json());
  cfg.verify_matcher = true;
  TempDir d1("exp1"), d2("exp2"), d3("exp3");

  cfg.threads = 1;
  auto serial = stoptime::run_experiment(cfg, d1.path, false);
  auto serial_again = stoptime::run_experiment(cfg, d2.path, false);
  CHECK(slurp(d1.path / "trace.csv") == slurp(d2.path / "trace.csv"));
  CHECK(slurp(d1.path / "summary.json") == slurp(d2.path / "summary.json"));
  CHECK(slurp(d1.path / "metadata.json") == slurp(d2.path / "metadata.json"));

  cfg.threads = 3;
  auto parallel = stoptime::run_experiment(cfg, d3.path, false);
  CHECK(slurp(d1.path / "trace.csv") == slurp(d3.path / "trace.csv"));
  CHECK(serial.rows.size() == parallel.rows.size());
  CHECK(serial_again.summary.rows == serial.summary.rows);

  // Row order contract: grouped by replicate, quantized then exact.
  std::int64_t last_rep = -1;
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    const auto& r = serial.rows[i];
    CHECK(r.replicate >= last_rep);
    last_rep = r.replicate;
  }

  auto meta = json::parse(slurp(d1.path / "metadata.json"));
  CHECK(meta["rng"]["engine"] == "mt19937_64");
  CHECK(meta["config"]["seed"] == 11);
  CHECK(meta["csv_header"] == stoptime::trace_csv_header());
}

TEST_CASE("each replicate depends only on (seed, replicate index)") {
  auto cfg = stoptime::parse_config(sticky_config_json());
  cfg.replicates = 3;
  TempDir small("small"), large("large");
  auto out_small = stoptime::run_experiment(cfg, small.path, false);
  auto big = cfg;
  big.replicates = 6;
  auto out_large = stoptime::run_experiment(big, large.path, false);

  // The 3-replicate run's rows appear verbatim in the 6-replicate run.
  REQUIRE(out_large.rows.size() >= out_small.rows.size());
  for (std::size_t i = 0; i < out_small.rows.size(); ++i) {
    CHECK(stoptime::to_csv_row(out_small.rows[i]) ==
          stoptime::to_csv_row(out_large.rows[i]));
  }

  // And a lone run_replicate reproduces replicate 2 exactly.
  auto solo = stoptime::run_replicate(cfg, 2);
  std::vector<std::string> expect;
  for (const auto& r : out_small.rows)
    if (r.replicate == 2) expect.push_back(stoptime::to_csv_row(r));
  std::vector<std::string> got;
  for (const auto& r : solo.quantized_rows)
    got.push_back(stoptime::to_csv_row(r));
  for (const auto& r : solo.exact_rows)
    got.push_back(stoptime::to_csv_row(r));
  CHECK(got == expect);
}

TEST_CASE("sweep emits per-seed files consistent with the combined trace") {
  auto cfg = stoptime::parse_config(sticky_config_json());
  cfg.replicates = 4;
  TempDir dir("sweep");
  auto out = stoptime::run_experiment(cfg, dir.path, true);
  for (std::int64_t r = 0; r < 4; ++r) {
    auto file = dir.path / "per_seed" /
                ("replicate_0000" + std::to_string(r) + ".csv");
    REQUIRE(fs::exists(file));
    auto rows = stoptime::read_trace_csv(file);
    std::vector<std::string> expect;
    for (const auto& row : out.rows)
      if (row.replicate == r) expect.push_back(stoptime::to_csv_row(row));
    std::vector<std::string> got;
    for (const auto& row : rows) got.push_back(stoptime::to_csv_row(row));
    CHECK(got == expect);
  }
  CHECK(out.summary.rows == static_cast<std::int64_t>(out.rows.size()));
}

TEST_CASE("summary is recomputable from the csv alone") {
  auto cfg = stoptime::parse_config(sticky_config_json());
  cfg.stationarity_level = 2;
  TempDir dir("resum");
  auto out = stoptime::run_experiment(cfg, dir.path, false);
  REQUIRE(out.summary.stationarity.has_value());
  CHECK(out.summary.stationarity->pass);

  auto rows = stoptime::read_trace_csv(dir.path / "trace.csv");
  auto redo = stoptime::summarize(rows);
  auto written = json::parse(slurp(dir.path / "summary.json"));
  // The stationarity block needs live replicates, not CSV rows; everything
  // else must match bit for bit.
  written["stationarity"] = nullptr;
  CHECK(stoptime::summary_to_json(redo) == written);
  CHECK(redo.deepest_common_level == out.summary.deepest_common_level);
}

TEST_CASE("summary aggregates are what the rows say") {
  auto cfg = stoptime::parse_config(sticky_config_json());
  TempDir dir("agg");
  auto out = stoptime::run_experiment(cfg, dir.path, false);

  for (const auto& row : out.rows) {
    // Markov oracle: transition row of the state at the stop.
    double want = row.value_at_stop.is_zero() ? 0.05 : 0.95;
    CHECK(row.oracle_stop == want);
    CHECK(row.oracle_limit == want);
    double est = row.estimate ? *row.estimate : *row.exact_estimate;
    CHECK(row.gap == std::abs(est - want));
  }

  const auto& level1 = out.summary.levels.front();
  CHECK(level1.n == 1);
  double mean = 0.0;
  std::int64_t count = 0;
  for (const auto& row : out.rows)
    if (row.n == 1 && row.estimate) {
      mean += *row.estimate;
      ++count;
    }
  CHECK(level1.count == count);
  CHECK(*level1.mean_estimate == doctest::Approx(mean / double(count)));
}

TEST_CASE("counterexample rows: event implies zero oracle and zero next") {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 200 && hits < 25; ++seed) {
    stoptime::CounterexampleSource src(stoptime::Rng::mix(808, seed));
    stoptime::QuantizedEstimator est(3);
    bool expect_zero_next = false;
    for (int t = 0; t < 50000 && !(est.done() && !expect_zero_next); ++t) {
      auto x = src.next();
      if (expect_zero_next) {
        CHECK(x.is_zero());  // P(next = 0) = 1 from any deep state
        expect_zero_next = false;
      }
      auto c = est.advance(x);
      if (c && stoptime::detect_event_an(c->value_at_stop, c->n)) {
        ++hits;
        CHECK(src.conditional_mean() == 0.0);
        expect_zero_next = true;
      }
    }
  }
  CHECK(hits >= 25);
}

TEST_CASE("budget exhaustion with a demanded level is an error") {
  ExperimentConfig cfg;
  cfg.source.kind = SourceSpec::Kind::replay;
  cfg.source.pattern = {DyadicValue::from_integer(0),
                        DyadicValue::from_integer(1),
                        DyadicValue::from_integer(0)};
  cfg.budget = 4;  // stop 3 sits at index 8, unreachable
  cfg.max_level = 3;
  cfg.min_level = 3;
  CHECK_THROWS_AS(stoptime::run_replicate(cfg, 0), stoptime::BudgetError);
  cfg.min_level = 1;
  CHECK_NOTHROW(stoptime::run_replicate(cfg, 0));
}

TEST_CASE("cli maps failures to documented exit codes") {
  TempDir dir("cli");
  auto good = dir.path / "good.json";
  std::ofstream(good) << sticky_config_json().dump();
  auto bad = dir.path / "bad.json";
  std::ofstream(bad) << "{\"source\": {\"kind\": \"weather\"}}";
  auto starved = dir.path / "starved.json";
  {
    auto j = sticky_config_json();
    j["budget"] = 2;
    j["min_level"] = 5;
    j["replicates"] = 1;
    std::ofstream(starved) << j.dump();
  }

  CHECK(run_cli("run --config " + good.string() + " --out " +
                (dir.path / "ok").string()) == 0);
  CHECK(run_cli("run --config " + bad.string() + " --out " +
                (dir.path / "x1").string()) == 1);
  CHECK(run_cli("run --config " + (dir.path / "absent.json").string() +
                " --out " + (dir.path / "x2").string()) == 1);
  CHECK(run_cli("run --preset no-such-preset --out " +
                (dir.path / "x3").string()) == 1);
  CHECK(run_cli("run --config " + starved.string() + " --out " +
                (dir.path / "x4").string()) == 2);
  CHECK(run_cli("summary --in " + (dir.path / "ok").string()) == 0);
  CHECK(run_cli("summary --in " + (dir.path / "nowhere").string()) == 4);
  CHECK(run_cli("trace --pattern 0,1,0 --levels 3") == 0);
  CHECK(run_cli("trace --pattern 0,oops --levels 2") == 1);
}
