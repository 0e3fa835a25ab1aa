#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpipe/ingest.hpp"
#include "dqpipe/runtime.hpp"

namespace dqpipe {

/// A synthetic stream: the first baseline_cycles feed initialization, the
/// rest are replayed one prediction window per cycle.
struct StreamSpec {
  SynthConfig synth;
  std::size_t baseline_cycles = 500;
  bool operator==(const StreamSpec&) const = default;
};

void to_json(nlohmann::json& j, const StreamSpec& s);
void from_json(const nlohmann::json& j, StreamSpec& s);

/// Three decay regimes over ~1500 stream cycles with a corruption schedule
/// of short mild and severe episodes.
StreamSpec default_stream(std::uint64_t seed = 1);

/// Fences, constraints and scale of the clean baseline regime, used by the
/// generator's corruption operators.
MutationContext clean_context(const SynthConfig& synth, std::size_t cycles,
                              const Constraints& constraints);

struct StreamData {
  std::vector<Window> baseline;
  std::vector<double> baseline_labels;
  std::vector<Window> stream;
  std::vector<double> stream_labels;
};

/// First window of every cycle, with ids 0,1,2,... over the whole stream.
StreamData materialize(const StreamSpec& spec, std::size_t window_size);

struct Strategy {
  std::string name;    // standard | active | passive
  double param = 0.0;  // tau or w
  std::string label() const;
  bool operator==(const Strategy&) const = default;
};

std::vector<Strategy> default_strategies();
std::vector<double> default_thresholds();

struct GridConfig {
  PipelineConfig pipeline;
  std::optional<StreamSpec> stream;  // empty: default_stream(seed) per seed
  std::vector<Strategy> strategies = default_strategies();
  std::vector<double> thresholds = default_thresholds();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t latency_repeats = 3;  // latency is the median over repeats (first seed only)
  std::size_t rolling = 25;
};

void to_json(nlohmann::json& j, const GridConfig& g);
void from_json(const nlohmann::json& j, GridConfig& g);

struct CellResult {
  std::uint64_t seed = 0;
  Strategy strategy;
  double threshold = 0.0;
  std::size_t n_windows = 0;
  std::size_t n_errors = 0;
  std::size_t n_adaptations = 0;
  std::size_t n_skipped = 0;
  double mae = 0.0;
  std::optional<double> r2;
  std::int64_t cumulative_latency_ns = 0;
  double mean_dq = 0.0;
  double below_threshold = 0.0;  // fraction of stream windows scored under threshold
  bool audit_ok = false;
  std::string error;

  std::vector<double> dq;         // per stream window
  std::vector<double> predicted;
  std::vector<double> labels;
  std::vector<std::int64_t> latency_ns;
};

/// Runs one cell on pre-built stream data and shared init artifacts, with
/// the registry rooted at store_dir (wiped first).
CellResult run_cell(const StreamData& data, const InitArtifacts& init, const PipelineConfig& base,
                    const Strategy& strategy, double threshold, const std::string& store_dir);

/// Like run_cell, repeated; non-latency fields come from the first run and
/// the latency series from the run with the median total.
CellResult run_cell_repeated(const StreamData& data, const InitArtifacts& init,
                             const PipelineConfig& base, const Strategy& strategy,
                             double threshold, const std::string& store_dir,
                             std::size_t repeats);

/// Pearson correlation; throws ZeroVariance when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

struct Correlation {
  std::optional<double> dq_vs_mae;  // empty: undefined
  std::optional<double> dq_vs_r2;
};

/// Window dq score against the trailing rolling MAE / R^2 ending at the same
/// window. Needs at least 30 windows.
Correlation correlate(std::span<const double> dq, std::span<const double> predicted,
                      std::span<const double> labels, std::size_t rolling = 25);

struct GridResult {
  std::vector<CellResult> cells;
};

/// All strategies x thresholds for every seed. Stores live under
/// out_dir/stores/<seed>/<cell>; only the first seed's stores are kept.
GridResult run_grid(const GridConfig& cfg, const std::string& out_dir,
                    std::ostream* progress = nullptr);

/// grid.csv, latency_trend.csv, quality_sweep.csv, correlations.csv.
void report(const GridResult& result, const GridConfig& cfg, const std::string& out_dir);

}  // namespace dqpipe
