#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dqpipe/bench.hpp"
#include "dqpipe/error.hpp"
#include "support.hpp"

using namespace dqpipe;

namespace {

GridConfig tiny_grid() {
  GridConfig g;
  g.pipeline.inference = {30, 3, 0.1, 5, 0};
  g.pipeline.scorer = {30, 3, 0.1, 5, 0};
  g.pipeline.corpus_windows = 15;
  g.pipeline.fsync = false;
  StreamSpec s;
  s.synth.n_cycles = 280;
  s.synth.lambda_jitter = 0.05;
  s.synth.drift_schedule = {{170, 1.5, 3.0}};
  s.baseline_cycles = 60;
  g.stream = s;
  g.seeds = {1};
  g.latency_repeats = 1;
  return g;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(f, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

std::vector<std::vector<std::string>> drop_column(std::vector<std::vector<std::string>> rows,
                                                  const std::string& name) {
  const auto& head = rows.front();
  const auto col = static_cast<std::size_t>(std::find(head.begin(), head.end(), name) - head.begin());
  for (auto& r : rows)
    if (col < r.size()) r.erase(r.begin() + static_cast<std::ptrdiff_t>(col));
  return rows;
}

}  // namespace

TEST_CASE("pearson and correlate") {
  CHECK(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 4, 6, 8}) ==
        doctest::Approx(1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) ==
        doctest::Approx(-1.0));
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);

  std::vector<double> dq(60, 80.0), pred(60), labels(60);
  for (std::size_t i = 0; i < 60; ++i) {
    labels[i] = static_cast<double>(i % 7);
    pred[i] = labels[i] + static_cast<double>(i) * 0.1;
  }
  const auto flat = correlate(dq, pred, labels, 25);
  CHECK_FALSE(flat.dq_vs_mae.has_value());
  CHECK_FALSE(flat.dq_vs_r2.has_value());

  // errors grow with dq: rolling MAE rises monotonically with the window's dq
  for (std::size_t i = 0; i < 60; ++i) dq[i] = static_cast<double>(i);
  const auto up = correlate(dq, pred, labels, 25);
  REQUIRE(up.dq_vs_mae);
  CHECK(*up.dq_vs_mae > 0.99);
  CHECK_THROWS_AS(correlate(std::span<const double>(dq).first(10),
                            std::span<const double>(pred).first(10),
                            std::span<const double>(labels).first(10)),
                  Error);
}

TEST_CASE("strategy labels and defaults") {
  CHECK(default_strategies().size() == 7);
  CHECK(default_thresholds() == std::vector<double>{0, 25, 50, 75, 90});
  CHECK(Strategy{"standard", 0}.label() == "standard");
  CHECK(Strategy{"active", 0.08}.label() == "active_0.08");
  CHECK(Strategy{"passive", 50}.label() == "passive_50");
}

TEST_CASE("default stream is deterministic and materializes one window per cycle") {
  const auto a = default_stream(3);
  CHECK(a == default_stream(3));
  CHECK_FALSE(a.synth.drift_schedule.empty());
  CHECK_FALSE(a.synth.corruption_schedule.empty());
  CHECK(nlohmann::json(a).get<StreamSpec>() == a);
  auto small = a;
  small.synth.n_cycles = 80;
  small.baseline_cycles = 50;
  const auto d = materialize(small, 1200);
  CHECK(d.baseline.size() == 50);
  CHECK(d.stream.size() == 30);
  CHECK(d.stream.front().id() == 50);
  CHECK(d.stream_labels.size() == 30);
}

TEST_CASE("grid over every strategy and threshold") {
  dqtest::TempDir dir("grid");
  const auto g = tiny_grid();
  const auto res = run_grid(g, dir.str());
  REQUIRE(res.cells.size() == 35);
  const std::size_t T = 220;
  for (const auto& c : res.cells) {
    CHECK(c.error == "");
    CHECK(c.audit_ok);
    CHECK(c.n_windows == T);
    if (c.strategy.name == "passive")
      CHECK(c.n_adaptations == T / static_cast<std::size_t>(c.strategy.param));
    if (c.strategy.name == "standard") CHECK(c.n_adaptations == 0);
  }
  report(res, g, dir.str());
  for (const char* f : {"grid.csv", "latency_trend.csv", "quality_sweep.csv", "correlations.csv"})
    CHECK(std::filesystem::exists(dir.path / f));
  CHECK(read_csv(dir.str() + "/grid.csv").size() == 36);

  const auto trend = read_csv(dir.str() + "/latency_trend.csv");
  std::map<std::string, long long> last;
  for (std::size_t i = 1; i < trend.size(); ++i) {
    const auto key = trend[i][0] + "/" + trend[i][1];
    const long long v = std::stoll(trend[i][3]);
    if (last.count(key)) CHECK(v >= last[key]);
    last[key] = v;
  }

  dqtest::TempDir again("grid2");
  report(run_grid(g, again.str()), g, again.str());
  CHECK(drop_column(read_csv(dir.str() + "/grid.csv"), "cumulative_latency_ns") ==
        drop_column(read_csv(again.str() + "/grid.csv"), "cumulative_latency_ns"));
  CHECK(read_csv(dir.str() + "/quality_sweep.csv") == read_csv(again.str() + "/quality_sweep.csv"));
  CHECK(read_csv(dir.str() + "/correlations.csv") == read_csv(again.str() + "/correlations.csv"));
}

TEST_CASE("grid config JSON") {
  auto g = tiny_grid();
  const auto back = nlohmann::json(g).get<GridConfig>();
  CHECK(back.pipeline == g.pipeline);
  CHECK(back.stream == g.stream);
  CHECK(back.strategies == g.strategies);
  CHECK(back.seeds == g.seeds);
}
