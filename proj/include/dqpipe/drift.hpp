#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/dqscore.hpp"

namespace dqpipe {

enum class DriftMode { Active, Passive, None };

std::string to_string(DriftMode mode);
DriftMode drift_mode_from_string(const std::string& name);

struct DriftConfig {
  DriftMode mode = DriftMode::Active;
  double tau = 0.06;               // tail sensitivity for active detection
  std::size_t w_passive = 100;     // windows between passive adaptations
  std::size_t warmup = 20;         // M: history length before active verdicts
  std::size_t rebase_windows = 50; // K: windows pooled by a rebase

  void validate() const;
  bool operator==(const DriftConfig&) const = default;
};

void to_json(nlohmann::json& j, const DriftConfig& c);
void from_json(const nlohmann::json& j, DriftConfig& c);

/// D_t: base-2 JSD between the window's histogram and the reference
/// histogram. Throws AllMissingWindow.
double divergence(const Window& w, const ReferenceProfile& profile);

/// Nearest-rank (1 - tau) quantile of history: the ceil((1 - tau) * h)-th
/// smallest value. Requires a non-empty history.
double nearest_rank_threshold(std::span<const double> history, double tau);

/// Drift iff d_t strictly exceeds the nearest-rank (1 - tau) quantile of the
/// history. Histories shorter than warmup give a warm-up verdict.
DriftVerdict detect_active(double d_t, std::span<const double> history, double tau,
                           std::size_t warmup = 20);
DriftVerdict detect_active(double d_t, const std::deque<double>& history, double tau,
                           std::size_t warmup = 20);

/// Appends d_t, keeping the most recent kDivergenceHistoryCap values.
void update_history(ReferenceProfile& profile, double d_t);

/// True every w_passive-th window (window_index counts from 1).
bool passive_due(std::size_t window_index, std::size_t w_passive);

/// New sample, histogram and fences from the pooled recent windows.
/// Constraints and unifier carry over; the divergence history starts empty.
/// Throws InsufficientData when the windows hold no values.
ReferenceProfile rebase_reference(std::span<const Window> recent, const ReferenceProfile& old);

}  // namespace dqpipe
