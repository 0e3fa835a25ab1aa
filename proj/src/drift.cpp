#include "dqpipe/drift.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dqpipe/error.hpp"

namespace dqpipe {

std::string to_string(DriftMode mode) {
  switch (mode) {
    case DriftMode::Active: return "active";
    case DriftMode::Passive: return "passive";
    case DriftMode::None: return "none";
  }
  return "unknown";
}

DriftMode drift_mode_from_string(const std::string& name) {
  if (name == "active") return DriftMode::Active;
  if (name == "passive") return DriftMode::Passive;
  if (name == "none") return DriftMode::None;
  throw Error(Errc::InvalidConfig, "unknown drift mode '" + name + "'");
}

void DriftConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(Errc::InvalidConfig, "tau must lie in (0,1)");
  if (warmup < 5) throw Error(Errc::InvalidConfig, "warm-up M must be >= 5");
  if (w_passive == 0) throw Error(Errc::InvalidConfig, "w_passive must be positive");
  if (rebase_windows == 0) throw Error(Errc::InvalidConfig, "rebase window count must be positive");
}

void to_json(nlohmann::json& j, const DriftConfig& c) {
  j = nlohmann::json{{"mode", to_string(c.mode)},
                     {"tau", c.tau},
                     {"w_passive", c.w_passive},
                     {"warmup", c.warmup},
                     {"rebase_windows", c.rebase_windows}};
}

void from_json(const nlohmann::json& j, DriftConfig& c) {
  DriftConfig d;
  c.mode = drift_mode_from_string(j.value("mode", to_string(d.mode)));
  c.tau = j.value("tau", d.tau);
  c.w_passive = j.value("w_passive", d.w_passive);
  c.warmup = j.value("warmup", d.warmup);
  c.rebase_windows = j.value("rebase_windows", d.rebase_windows);
  c.validate();
}

double divergence(const Window& w, const ReferenceProfile& profile) {
  const auto values = w.present_values();
  return jsd(estimate_pdf(values, profile.ref_hist.edges), profile.ref_hist);
}

double nearest_rank_threshold(std::span<const double> history, double tau) {
  if (history.empty()) throw Error(Errc::EmptySample, "empty divergence history");
  const double h = static_cast<double>(history.size());
  // the epsilon keeps exact products such as 0.95 * 20 from rounding up a rank
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - tau) * h - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, history.size());
  std::vector<double> copy(history.begin(), history.end());
  const auto kth = copy.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(copy.begin(), kth, copy.end());
  return *kth;
}

DriftVerdict detect_active(double d_t, std::span<const double> history, double tau,
                           std::size_t warmup) {
  DriftVerdict v;
  v.divergence = d_t;
  v.history_len = history.size();
  if (history.size() < warmup || history.empty()) return v;
  const double threshold = nearest_rank_threshold(history, tau);
  const auto below = std::count_if(history.begin(), history.end(),
                                   [&](double x) { return x < d_t; });
  v.threshold = threshold;
  v.quantile_rank = static_cast<double>(below) / static_cast<double>(history.size());
  v.drift = d_t > threshold;
  return v;
}

DriftVerdict detect_active(double d_t, const std::deque<double>& history, double tau,
                           std::size_t warmup) {
  const std::vector<double> flat(history.begin(), history.end());
  return detect_active(d_t, std::span<const double>(flat), tau, warmup);
}

void update_history(ReferenceProfile& profile, double d_t) {
  profile.divergence_history.push_back(d_t);
  while (profile.divergence_history.size() > kDivergenceHistoryCap) {
    profile.divergence_history.pop_front();
  }
}

bool passive_due(std::size_t window_index, std::size_t w_passive) {
  return w_passive > 0 && window_index > 0 && window_index % w_passive == 0;
}

ReferenceProfile rebase_reference(std::span<const Window> recent, const ReferenceProfile& old) {
  std::vector<double> pooled;
  for (const auto& w : recent) {
    for (const auto& r : w.readings()) {
      if (r.value) pooled.push_back(*r.value);
    }
  }
  if (pooled.empty()) throw Error(Errc::InsufficientData, "no present values in recent windows");
  auto fresh = build_reference_profile(std::move(pooled), old.constraints,
                                       {recent.front().id(), recent.back().id()},
                                       old.ref_hist.bins());
  fresh.unifier = old.unifier;
  return fresh;
}

}  // namespace dqpipe
