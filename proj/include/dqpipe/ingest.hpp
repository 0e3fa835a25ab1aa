#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/mutate.hpp"

namespace dqpipe {

inline constexpr std::size_t kDefaultWindowSize = 1200;
inline constexpr TimestampNs kSamplePeriodNs = 100'000'000;  // 100 ms

struct RegimeSwitch {
  std::size_t cycle = 0;  // first cycle of the new regime
  double lambda = 1.0;
  double noise_std = 0.0;
  bool operator==(const RegimeSwitch&) const = default;
};

struct CorruptionSpan {
  std::size_t first_cycle = 0;
  std::size_t last_cycle = 0;  // inclusive
  MutationPlan plan;
  bool operator==(const CorruptionSpan&) const = default;
};

/// Parameters of the ESR-like pump-cycle generator. Each cycle follows
/// p(t) = p0 * exp(-lambda * t / cycle_len) + noise for t = 1..cycle_len,
/// with per-cycle multiplicative jitter on p0 and lambda.
struct SynthConfig {
  std::size_t n_cycles = 100;
  std::size_t cycle_len = 2400;
  std::size_t window_size = kDefaultWindowSize;
  double p0 = 1000.0;
  double lambda = 1.0;
  double noise_std = 2.0;
  double lambda_jitter = 0.0;  // relative std of per-cycle lambda
  double p0_jitter = 0.0;      // relative std of per-cycle p0
  std::vector<RegimeSwitch> drift_schedule;
  std::vector<CorruptionSpan> corruption_schedule;
  MutationContext corruption_context{{0.0, 2000.0}, {0.0, 2000.0}, 1.0};
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Lazily generates cycles; cycle k is a pure function of (cfg, k).
class SynthStream {
 public:
  explicit SynthStream(SynthConfig cfg);
  std::optional<PumpCycle> next();
  PumpCycle generate(std::size_t cycle_index) const;
  const SynthConfig& config() const noexcept { return cfg_; }

 private:
  SynthConfig cfg_;
  std::size_t cursor_ = 0;
};

std::vector<PumpCycle> synth_generate(const SynthConfig& cfg);

/// Parses one `timestamp_ns,value` row; an empty value is a missing reading.
/// Throws MalformedRecordError carrying line_no.
Reading parse_csv_row(std::string_view line, std::size_t line_no);

/// Replays readings from a canonical CSV stream in file order. A finite
/// speedup paces emission by timestamp deltas divided by speedup.
class ReplaySource {
 public:
  ReplaySource(const std::string& path,
               double speedup = std::numeric_limits<double>::infinity());
  explicit ReplaySource(std::unique_ptr<std::istream> in,
                        double speedup = std::numeric_limits<double>::infinity());
  std::optional<Reading> next();

 private:
  std::unique_ptr<std::istream> in_;
  double speedup_;
  std::size_t line_no_ = 0;
  std::optional<TimestampNs> first_ts_;
  std::chrono::steady_clock::time_point started_;
};

std::vector<Reading> read_cycle_csv(const std::string& path);
void write_cycle_csv(const std::string& path, std::span<const Reading> readings);
std::vector<std::pair<std::uint64_t, double>> read_labels_csv(const std::string& path);
void write_labels_csv(const std::string& path,
                      std::span<const std::pair<std::uint64_t, double>> labels);

/// Writes cycle_<id>.csv files plus labels.csv into dir.
void write_cycles(const std::string& dir, std::span<const PumpCycle> cycles);

/// Tumbling windows of exactly n readings; a trailing remainder becomes a
/// flagged partial window. Ids continue from first_id.
std::vector<Window> windowize(std::span<const Reading> readings, std::size_t n,
                              std::uint64_t cycle_id = 0, std::uint64_t first_id = 0);

/// Push-based variant for unbounded sources.
class Windowizer {
 public:
  Windowizer(std::size_t n, std::uint64_t cycle_id = 0, std::uint64_t first_id = 0);
  std::optional<Window> push(const Reading& r);
  std::optional<Window> flush();

 private:
  std::size_t n_;
  std::uint64_t cycle_id_;
  std::uint64_t next_id_;
  std::vector<Reading> buf_;
};

struct FeatureConfig {
  std::size_t n_buckets = 60;
  std::size_t f_history = 5;
  bool stat_min = true;
  bool stat_max = true;
  bool stat_std = true;
  bool stat_last = true;
  bool stat_slope = false;

  std::size_t length() const noexcept;
  std::string schema_id() const;
  bool operator==(const FeatureConfig&) const = default;
};

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);

struct FeatureVector {
  std::vector<double> values;
  std::string schema;
  bool operator==(const FeatureVector&) const = default;
};

/// Bucket means (all-missing buckets take the window mean), enabled stats in
/// the order min, max, std, last, slope, then the f_history most recent
/// labels newest first, padded with the mean of the given labels.
/// completed_labels is ordered oldest to newest.
FeatureVector featureize(const Window& current, std::span<const double> completed_labels,
                         const FeatureConfig& cfg);
FeatureVector featureize(const Window& current, std::span<const PumpCycle> history,
                         const FeatureConfig& cfg);

}  // namespace dqpipe
