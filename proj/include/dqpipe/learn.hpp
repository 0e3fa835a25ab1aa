#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/dqscore.hpp"

namespace dqpipe {

/// Dense row-major matrix of model inputs.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t cols) : cols_(cols) {}

  std::size_t rows() const noexcept { return cols_ == 0 ? 0 : data_.size() / cols_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  void push_row(std::span<const double> values);

 private:
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct GbdtParams {
  int rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 5;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const GbdtParams&) const = default;
};

void to_json(nlohmann::json& j, const GbdtParams& p);
void from_json(const nlohmann::json& j, GbdtParams& p);

/// Model-agnostic regressor surface used by the pipeline.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double predict(std::span<const double> x) const = 0;
  virtual std::size_t n_features() const = 0;
  virtual std::string serialize() const = 0;
};

/// Trains and restores one family of regressors.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::unique_ptr<Regressor> fit(const FeatureMatrix& x, std::span<const double> y) const = 0;
  virtual std::unique_ptr<Regressor> load(const std::string& payload) const = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  bool operator==(const RegressionTree&) const = default;
};

class GbdtModel final : public Regressor {
 public:
  double base_prediction = 0.0;
  std::vector<RegressionTree> trees;
  GbdtParams params;
  std::size_t width = 0;
  std::string training_config_hash;

  double predict(std::span<const double> x) const override;
  std::size_t n_features() const override { return width; }
  std::string serialize() const override;
  static GbdtModel deserialize(const std::string& payload);

  /// Prediction using only the first `rounds` trees.
  double predict_partial(std::span<const double> x, std::size_t rounds) const;

  bool operator==(const GbdtModel& o) const {
    return base_prediction == o.base_prediction && trees == o.trees && params == o.params &&
           width == o.width;
  }
};

/// Stagewise least-squares boosting with exhaustive midpoint split search.
GbdtModel train_gbdt(const FeatureMatrix& x, std::span<const double> y, const GbdtParams& params);

class GbdtLearner final : public Learner {
 public:
  explicit GbdtLearner(GbdtParams params) : params_(params) {}
  std::unique_ptr<Regressor> fit(const FeatureMatrix& x, std::span<const double> y) const override;
  std::unique_ptr<Regressor> load(const std::string& payload) const override;
  const GbdtParams& params() const noexcept { return params_; }

 private:
  GbdtParams params_;
};

inline constexpr std::size_t kDqFeatureCount = 12;

/// Window summary consumed by the ML quality scorer.
struct DqFeatures {
  // mean, std, min, max, median, q1, q3, missing_rate, out_of_range_rate,
  // outside_fence_rate, ks_vs_ref, last_minus_first
  std::array<double, kDqFeatureCount> values{};
  bool operator==(const DqFeatures&) const = default;
};

inline constexpr std::array<const char*, kDqFeatureCount> kDqFeatureNames = {
    "mean",     "std",          "min",               "max",
    "median",   "q1",           "q3",                "missing_rate",
    "out_of_range_rate", "outside_fence_rate", "ks_vs_ref", "last_minus_first"};

/// One pass plus three selections over the window. ks_vs_ref is evaluated on
/// the reference histogram's bin edges rather than the full reference sample.
/// Throws AllMissingWindow.
DqFeatures compute_dq_features(const Window& w, const ReferenceProfile& profile);

struct TrainingRow {
  std::vector<double> features;
  double label = 0.0;
  double score = 0.0;  // unified quality score in [0,100]
  std::uint64_t window_id = 0;
};

/// Rows whose score is >= threshold, order preserved.
std::vector<TrainingRow> filter_by_quality(std::span<const TrainingRow> rows, double threshold);

struct CorpusRow;  // mutate.hpp

/// GBDT over DqFeatures regressing the unified score. Throws DegenerateCorpus
/// for fewer than 50 rows or constant labels.
GbdtModel train_dq_scorer(std::span<const CorpusRow> corpus, const GbdtParams& params);

/// Scorer output clamped to [0,100].
UnifiedScore predict_dq_score(const Regressor& scorer, const DqFeatures& f);

struct EvalResult {
  double mae = 0.0;
  std::optional<double> r2;  // empty when labels have zero variance
};

EvalResult evaluate(std::span<const double> preds, std::span<const double> labels);

}  // namespace dqpipe
