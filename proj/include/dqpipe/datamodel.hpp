#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace dqpipe {

using TimestampNs = std::int64_t;

/// One pressure sample. An absent value is a missing measurement and is
/// distinct from 0.0.
struct Reading {
  TimestampNs timestamp_ns = 0;
  std::optional<double> value;

  bool operator==(const Reading&) const = default;
};

/// Fixed-size ordered slice of readings. Immutable once built; use
/// make_window() or with_values() to obtain one.
class Window {
 public:
  Window() = default;

  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t cycle_id() const noexcept { return cycle_id_; }
  bool partial() const noexcept { return partial_; }
  std::size_t size() const noexcept { return readings_.size(); }
  const std::vector<Reading>& readings() const noexcept { return readings_; }

  std::size_t present_count() const noexcept;
  /// Non-missing values in reading order.
  std::vector<double> present_values() const;

  /// Same metadata and timestamps, new values (size must match).
  Window with_values(std::span<const std::optional<double>> values) const;

  bool operator==(const Window&) const = default;

 private:
  friend Window make_window(std::vector<Reading>, std::uint64_t, std::uint64_t, std::size_t,
                            bool);
  friend void from_json(const nlohmann::json&, Window&);

  std::uint64_t id_ = 0;
  std::uint64_t cycle_id_ = 0;
  bool partial_ = false;
  std::vector<Reading> readings_;
};

/// Validates ordering and length. A short window is accepted only when
/// allow_partial is set, and is then flagged partial.
Window make_window(std::vector<Reading> readings, std::uint64_t id, std::uint64_t cycle_id,
                   std::size_t expected_n, bool allow_partial = false);

struct PumpCycle {
  std::uint64_t cycle_id = 0;
  std::vector<Reading> readings;
  std::optional<double> label;

  bool operator==(const PumpCycle&) const = default;
};

/// Minimum over the non-missing values of a cycle.
double extract_label(const PumpCycle& cycle);

inline constexpr std::size_t kDimensionCount = 5;

struct DimensionScores {
  double accuracy = 1.0;
  double completeness = 1.0;
  double consistency = 1.0;
  double timeliness = 1.0;
  double skewness = 1.0;

  std::array<double, kDimensionCount> as_array() const {
    return {accuracy, completeness, consistency, timeliness, skewness};
  }
  static DimensionScores from_array(const std::array<double, kDimensionCount>& a) {
    return {a[0], a[1], a[2], a[3], a[4]};
  }
  bool operator==(const DimensionScores&) const = default;
};

struct UnifiedScore {
  double value = 0.0;
  bool operator==(const UnifiedScore&) const = default;
};

struct DriftVerdict {
  double divergence = 0.0;
  std::optional<double> quantile_rank;  // empty during warm-up
  std::optional<double> threshold;      // empty during warm-up
  bool drift = false;
  std::size_t history_len = 0;

  bool operator==(const DriftVerdict&) const = default;
};

enum class ArtifactKind { ReferenceProfile, Unifier, DqScorer, InferenceModel };

inline constexpr std::array<ArtifactKind, 4> kAllArtifactKinds = {
    ArtifactKind::ReferenceProfile, ArtifactKind::Unifier, ArtifactKind::DqScorer,
    ArtifactKind::InferenceModel};

std::string to_string(ArtifactKind kind);
ArtifactKind artifact_kind_from_string(const std::string& name);

struct VersionedArtifact {
  ArtifactKind kind = ArtifactKind::ReferenceProfile;
  std::uint64_t version = 0;
  std::string payload;  // opaque bytes
  std::map<std::string, std::string> meta;

  bool operator==(const VersionedArtifact&) const = default;
};

// JSON round-trip for every domain type. Missing values encode as null;
// artifact payloads encode as lowercase hex.
void to_json(nlohmann::json& j, const Reading& r);
void from_json(const nlohmann::json& j, Reading& r);
void to_json(nlohmann::json& j, const Window& w);
void from_json(const nlohmann::json& j, Window& w);
void to_json(nlohmann::json& j, const PumpCycle& c);
void from_json(const nlohmann::json& j, PumpCycle& c);
void to_json(nlohmann::json& j, const DimensionScores& d);
void from_json(const nlohmann::json& j, DimensionScores& d);
void to_json(nlohmann::json& j, const UnifiedScore& u);
void from_json(const nlohmann::json& j, UnifiedScore& u);
void to_json(nlohmann::json& j, const DriftVerdict& v);
void from_json(const nlohmann::json& j, DriftVerdict& v);
void to_json(nlohmann::json& j, const VersionedArtifact& a);
void from_json(const nlohmann::json& j, VersionedArtifact& a);

std::string hex_encode(std::string_view bytes);
std::string hex_decode(std::string_view hex);

/// Stable 64-bit FNV-1a, used for config and payload fingerprints.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string fingerprint(std::string_view bytes);

}  // namespace dqpipe
