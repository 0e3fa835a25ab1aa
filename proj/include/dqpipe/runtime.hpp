#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/dqscore.hpp"
#include "dqpipe/drift.hpp"
#include "dqpipe/error.hpp"
#include "dqpipe/ingest.hpp"
#include "dqpipe/learn.hpp"
#include "dqpipe/mutate.hpp"
#include "dqpipe/registry.hpp"

namespace dqpipe {

enum class ScoringMode { Direct, Ml };

std::string to_string(ScoringMode mode);
ScoringMode scoring_mode_from_string(const std::string& name);

struct PipelineConfig {
  std::size_t window_size = kDefaultWindowSize;
  FeatureConfig features;
  DriftConfig drift;
  GbdtParams inference{100, 3, 0.1, 5, 0};
  GbdtParams scorer{100, 3, 0.1, 5, 0};
  double threshold = 50.0;          // acceptability threshold in [0,100]
  std::size_t buffer_size = 500;    // L: labeled cycles kept for retraining
  ScoringMode scoring = ScoringMode::Ml;
  Constraints constraints{0.0, 1200.0};
  std::size_t histogram_bins = kDefaultHistogramBins;
  std::size_t corpus_windows = 60;        // baseline windows mutated at init
  std::size_t adapt_corpus_windows = 6;   // recent windows mutated per adaptation
  std::size_t min_labels = 20;
  std::uint64_t seed = 1;
  bool fsync = true;

  void validate() const;
  std::string hash() const;
  bool operator==(const PipelineConfig&) const = default;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// standard: no drift handling, direct scoring. active / passive: ML
/// scoring with the given tau or w.
PipelineConfig strategy_config(PipelineConfig base, const std::string& strategy,
                               double param = 0.0);

std::int64_t monotonic_ns() noexcept;

struct PredictionRecord {
  std::uint64_t window_id = 0;
  std::uint64_t cycle_id = 0;
  std::optional<UnifiedScore> dq_score;
  std::optional<DriftVerdict> verdict;  // active mode only
  bool adaptation_triggered = false;
  bool adapted = false;
  double predicted_min_pressure = 0.0;
  Deployment deployment;
  std::int64_t t_ingest = 0;
  std::int64_t t_ready = 0;
  std::int64_t latency_ns = 0;
  std::optional<std::string> error;
};

nlohmann::json to_event(const PredictionRecord& r);

struct AdaptationEvent {
  bool applied = false;
  std::string trigger;
  std::uint64_t window_id = 0;
  std::optional<Deployment> deployment;
  std::optional<Errc> skipped_because;
  std::string detail;
  std::size_t training_rows = 0;
  std::size_t corpus_rows = 0;
};

/// Threshold-independent products of the initialization phase. Computing
/// them once lets several pipelines that differ only in the acceptability
/// threshold share the expensive part.
struct InitArtifacts {
  ReferenceProfile profile;  // carries the fitted unifier
  std::shared_ptr<const GbdtModel> scorer;
  AnnotatedCorpus corpus;
  std::vector<TrainingRow> buffer;  // baseline rows, oldest first
  std::vector<double> labels;       // baseline labels, oldest first
  std::vector<Window> recent;       // last K baseline windows
  std::uint64_t next_window_id = 0;
};

/// First window of each baseline cycle is profiled, mutated into the
/// annotated corpus and direct-scored into the seed training buffer.
/// Throws InsufficientBaseline or DegenerateCorpus.
InitArtifacts prepare_init(std::span<const PumpCycle> baseline, const PipelineConfig& cfg);

/// Same as above for pre-cut windows; labels[i] belongs to windows[i].
InitArtifacts prepare_init(std::span<const Window> windows, std::span<const double> labels,
                           const PipelineConfig& cfg);

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, Registry& registry);

  /// Runs the full initialization phase and registers deployment 1.
  void init(std::span<const PumpCycle> baseline);
  void init_from(const InitArtifacts& art);

  /// Scores, checks drift, adapts if triggered and predicts one window.
  /// Errors inside the step are recorded on the returned record.
  PredictionRecord step(const Window& w);

  /// Completes a cycle: the label joins the history and, with the features
  /// computed at prediction time, the training buffer.
  void observe_label(std::uint64_t cycle_id, double label);

  AdaptationEvent adapt(const std::string& trigger);

  bool initialized() const noexcept { return model_ != nullptr; }
  const PipelineConfig& config() const noexcept { return cfg_; }
  const ReferenceProfile& profile() const noexcept { return profile_; }
  const Regressor& scorer() const { return *scorer_; }
  const Regressor& model() const { return *model_; }
  Deployment deployment() const;
  std::size_t windows_seen() const noexcept { return index_; }
  std::uint64_t next_window_id() const noexcept { return next_window_id_; }
  std::size_t adaptations() const noexcept { return n_adapt_; }
  std::size_t buffer_rows() const noexcept { return buffer_.size(); }

  /// Checkpoint of the mutable loop state, for run/serve across processes.
  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

  /// Called after every step with the finished record (after t_ready).
  std::function<void(const PredictionRecord&)> on_record;

 private:
  struct BufferedRow {
    TrainingRow row;
    bool accepted = false;
  };

  std::vector<double> recent_labels() const;
  std::shared_ptr<const Regressor> fit_inference() const;

  PipelineConfig cfg_;
  Registry* registry_;
  GbdtLearner learner_;
  ReferenceProfile profile_;
  std::shared_ptr<const Regressor> scorer_;
  std::shared_ptr<const Regressor> model_;

  std::deque<BufferedRow> buffer_;
  std::map<std::uint64_t, TrainingRow> pending_;  // cycle id -> row awaiting its label
  std::deque<double> labels_;                      // last f_history labels
  std::deque<Window> recent_;
  std::size_t index_ = 0;
  std::size_t since_rebase_ = 0;
  std::size_t n_adapt_ = 0;
  std::uint64_t next_window_id_ = 0;
};

/// Writes predictions.csv rows; the header is written on construction.
class PredictionCsv {
 public:
  explicit PredictionCsv(const std::string& path, bool append = false);
  ~PredictionCsv();
  void write(const PredictionRecord& r);

 private:
  std::unique_ptr<std::ostream> out_;
};

/// Handles one serve frame and returns the response line (no newline).
/// Frames: `PREDICT <cycle_id> <path>` and `LABEL <cycle_id> <value>`.
std::string handle_frame(Pipeline& p, const std::string& frame);

/// Line protocol loop over a stream pair; returns the number of frames.
std::size_t serve_stream(Pipeline& p, std::istream& in, std::ostream& out);

/// Same protocol on a local TCP port, one connection at a time, frames
/// handled strictly in arrival order. Stops after max_connections when
/// it is non-zero.
void serve_tcp(Pipeline& p, const std::string& host, int port, std::size_t max_connections = 0);

}  // namespace dqpipe
