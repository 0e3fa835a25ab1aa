#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/stats.hpp"

namespace dqpipe {

inline constexpr int kProfileSchemaVersion = 1;
inline constexpr std::size_t kDefaultHistogramBins = 32;
inline constexpr std::size_t kDivergenceHistoryCap = 1000;

struct Fences {
  double low = 0.0;
  double high = 0.0;
  bool operator==(const Fences&) const = default;
};

/// Integrity range used by the consistency dimension.
struct Constraints {
  double min_valid = 0.0;
  double max_valid = 0.0;
  bool operator==(const Constraints&) const = default;
};

/// Leading principal axis of the five dimension scores plus the min-max
/// range of centered projections seen at fit time.
struct UnifierParams {
  std::array<double, kDimensionCount> mean{};
  std::array<double, kDimensionCount> loading{};
  double proj_min = 0.0;
  double proj_max = 0.0;
  bool operator==(const UnifierParams&) const = default;
};

struct ReferenceProfile {
  std::vector<double> ref_sample;  // ascending
  Histogram ref_hist;
  Fences fences;
  Constraints constraints;
  std::optional<UnifierParams> unifier;
  std::deque<double> divergence_history;
  std::pair<std::uint64_t, std::uint64_t> built_from{0, 0};  // inclusive window ids
  double ref_mean = 0.0;
  double ref_std = 0.0;

  bool operator==(const ReferenceProfile&) const = default;
};

/// Builds sample, Tukey fences (Q1 - 1.5 IQR, Q3 + 1.5 IQR) and a histogram
/// over the fence-clipped value range. Throws InsufficientData on an empty pool.
ReferenceProfile build_reference_profile(std::vector<double> pooled_values,
                                         const Constraints& constraints,
                                         std::pair<std::uint64_t, std::uint64_t> built_from,
                                         std::size_t bins = kDefaultHistogramBins);

/// Pools the present values of every window.
ReferenceProfile build_reference_profile(std::span<const Window> windows,
                                         const Constraints& constraints,
                                         std::size_t bins = kDefaultHistogramBins);

struct ScoringOptions {
  /// When set, timeliness of a window with a single present value is 0.0
  /// instead of an InsufficientSample error.
  bool lenient = true;
};

double score_accuracy(const Window& w, const ReferenceProfile& profile);
double score_completeness(const Window& w);
double score_consistency(const Window& w, const Constraints& constraints);
double score_timeliness(const Window& w, const ReferenceProfile& profile,
                        ScoringOptions opts = {});
double score_skewness(const Window& w, const ReferenceProfile& profile);

/// All five dimensions in one pass over the window.
DimensionScores direct_dimensions(const Window& w, const ReferenceProfile& profile,
                                  ScoringOptions opts = {});

UnifierParams fit_unifier(std::span<const DimensionScores> rows);
UnifiedScore unify(const DimensionScores& d, const UnifierParams& u);
double unifier_projection(const DimensionScores& d, const UnifierParams& u);

/// Ground-truth scorer: five dimensions then unification. Requires
/// profile.unifier.
std::pair<DimensionScores, UnifiedScore> direct_score(const Window& w,
                                                      const ReferenceProfile& profile,
                                                      ScoringOptions opts = {});

/// Jacobi eigendecomposition of a symmetric 5x5 matrix; returns the unit
/// eigenvector of the largest eigenvalue and that eigenvalue.
std::pair<std::array<double, kDimensionCount>, double> leading_eigenvector(
    const std::array<std::array<double, kDimensionCount>, kDimensionCount>& sym);

void to_json(nlohmann::json& j, const Fences& f);
void from_json(const nlohmann::json& j, Fences& f);
void to_json(nlohmann::json& j, const Constraints& c);
void from_json(const nlohmann::json& j, Constraints& c);
void to_json(nlohmann::json& j, const UnifierParams& u);
void from_json(const nlohmann::json& j, UnifierParams& u);
void to_json(nlohmann::json& j, const ReferenceProfile& p);
void from_json(const nlohmann::json& j, ReferenceProfile& p);

/// Little-endian IEEE-754 doubles as hex; exact and compact for large samples.
std::string encode_f64_hex(std::span<const double> values);
std::vector<double> decode_f64_hex(const std::string& hex);

}  // namespace dqpipe
