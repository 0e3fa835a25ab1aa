#include "dqpipe/dqscore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "dqpipe/error.hpp"

namespace dqpipe {

namespace {

std::vector<double> require_present(const Window& w) {
  auto values = w.present_values();
  if (values.empty()) {
    throw Error(Errc::AllMissingWindow, "window " + std::to_string(w.id()) + " has no values");
  }
  return values;
}

double complement_ratio(std::size_t bad, std::size_t total) {
  return 1.0 - static_cast<double>(bad) / static_cast<double>(total);
}

bool outside(const Fences& f, double v) { return v < f.low || v > f.high; }
bool violates(const Constraints& c, double v) { return v < c.min_valid || v > c.max_valid; }

double timeliness_from_sorted(std::span<const double> sorted_values,
                              const ReferenceProfile& profile, ScoringOptions opts,
                              std::uint64_t window_id) {
  if (sorted_values.size() < 2) {
    if (opts.lenient) return 0.0;
    throw Error(Errc::InsufficientSample,
                "window " + std::to_string(window_id) + " has fewer than 2 present values");
  }
  return 1.0 - ks_statistic_sorted(sorted_values, profile.ref_sample);
}

}  // namespace

ReferenceProfile build_reference_profile(std::vector<double> pooled,
                                         const Constraints& constraints,
                                         std::pair<std::uint64_t, std::uint64_t> built_from,
                                         std::size_t bins) {
  if (pooled.empty()) throw Error(Errc::InsufficientData, "reference pool is empty");
  if (constraints.min_valid > constraints.max_valid) {
    throw Error(Errc::InvalidConfig, "constraints.min_valid > constraints.max_valid");
  }
  std::sort(pooled.begin(), pooled.end());

  ReferenceProfile p;
  p.constraints = constraints;
  p.built_from = built_from;

  const double q1 = quantile_sorted(pooled, 0.25);
  const double q3 = quantile_sorted(pooled, 0.75);
  const double iqr = q3 - q1;
  p.fences = {q1 - 1.5 * iqr, q3 + 1.5 * iqr};

  double lo = std::max(pooled.front(), p.fences.low);
  double hi = std::min(pooled.back(), p.fences.high);
  if (!(lo < hi)) {
    lo = pooled.front();
    hi = pooled.back();
  }
  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
  }
  p.ref_hist = estimate_pdf(pooled, uniform_edges(lo, hi, bins));

  const double n = static_cast<double>(pooled.size());
  p.ref_mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : pooled) ss += (v - p.ref_mean) * (v - p.ref_mean);
  p.ref_std = std::sqrt(ss / n);
  p.ref_sample = std::move(pooled);
  return p;
}

ReferenceProfile build_reference_profile(std::span<const Window> windows,
                                         const Constraints& constraints, std::size_t bins) {
  if (windows.empty()) throw Error(Errc::InsufficientData, "no windows to build a reference from");
  std::vector<double> pooled;
  pooled.reserve(windows.size() * windows.front().size());
  for (const auto& w : windows) {
    for (const auto& r : w.readings()) {
      if (r.value) pooled.push_back(*r.value);
    }
  }
  return build_reference_profile(std::move(pooled), constraints,
                                 {windows.front().id(), windows.back().id()}, bins);
}

double score_accuracy(const Window& w, const ReferenceProfile& profile) {
  const auto values = require_present(w);
  const auto bad = std::count_if(values.begin(), values.end(),
                                 [&](double v) { return outside(profile.fences, v); });
  return complement_ratio(static_cast<std::size_t>(bad), values.size());
}

double score_completeness(const Window& w) {
  if (w.size() == 0) return 0.0;
  return complement_ratio(w.size() - w.present_count(), w.size());
}

double score_consistency(const Window& w, const Constraints& constraints) {
  std::size_t present = 0;
  std::size_t bad = 0;
  for (const auto& r : w.readings()) {
    if (!r.value) continue;
    ++present;
    if (violates(constraints, *r.value)) ++bad;
  }
  if (present == 0) return 1.0;
  return complement_ratio(bad, present);
}

double score_timeliness(const Window& w, const ReferenceProfile& profile, ScoringOptions opts) {
  auto values = require_present(w);
  std::sort(values.begin(), values.end());
  return timeliness_from_sorted(values, profile, opts, w.id());
}

double score_skewness(const Window& w, const ReferenceProfile& profile) {
  const auto values = require_present(w);
  return 1.0 - jsd(estimate_pdf(values, profile.ref_hist.edges), profile.ref_hist);
}

DimensionScores direct_dimensions(const Window& w, const ReferenceProfile& profile,
                                  ScoringOptions opts) {
  auto values = require_present(w);
  std::size_t anomalous = 0;
  std::size_t violations = 0;
  for (double v : values) {
    if (outside(profile.fences, v)) ++anomalous;
    if (violates(profile.constraints, v)) ++violations;
  }
  DimensionScores d;
  d.completeness = complement_ratio(w.size() - values.size(), w.size());
  d.accuracy = complement_ratio(anomalous, values.size());
  d.consistency = complement_ratio(violations, values.size());
  d.skewness = 1.0 - jsd(estimate_pdf(values, profile.ref_hist.edges), profile.ref_hist);
  std::sort(values.begin(), values.end());
  d.timeliness = timeliness_from_sorted(values, profile, opts, w.id());
  return d;
}

std::pair<std::array<double, kDimensionCount>, double> leading_eigenvector(
    const std::array<std::array<double, kDimensionCount>, kDimensionCount>& sym) {
  constexpr std::size_t n = kDimensionCount;
  auto a = sym;
  std::array<std::array<double, n>, n> v{};
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      diag += a[p][p] * a[p][p];
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off <= 1e-30 * std::max(diag, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        // classic Jacobi rotation zeroing a[p][q]
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p];
          const double vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (a[i][i] > a[best][best]) best = i;
  }
  std::array<double, n> vec{};
  double norm = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    vec[k] = v[k][best];
    norm += vec[k] * vec[k];
  }
  norm = std::sqrt(norm);
  for (auto& x : vec) x /= norm;
  return {vec, a[best][best]};
}

UnifierParams fit_unifier(std::span<const DimensionScores> rows) {
  constexpr std::size_t d = kDimensionCount;
  if (rows.size() < 5) {
    throw Error(Errc::DegenerateCorpus, "fit_unifier needs at least 5 rows, got " +
                                            std::to_string(rows.size()));
  }
  const double n = static_cast<double>(rows.size());
  UnifierParams u;
  for (const auto& r : rows) {
    const auto a = r.as_array();
    for (std::size_t k = 0; k < d; ++k) u.mean[k] += a[k];
  }
  for (auto& m : u.mean) m /= n;

  std::array<std::array<double, d>, d> cov{};
  for (const auto& r : rows) {
    const auto a = r.as_array();
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) cov[i][j] += (a[i] - u.mean[i]) * (a[j] - u.mean[j]);
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) cov[i][j] /= (n - 1.0);
    trace += cov[i][i];
  }
  if (!(trace > 1e-15)) throw Error(Errc::DegenerateCorpus, "score covariance is zero");

  auto [loading, eigenvalue] = leading_eigenvector(cov);
  (void)eigenvalue;
  double sum = std::accumulate(loading.begin(), loading.end(), 0.0);
  bool flip = sum < 0.0;
  if (std::abs(sum) <= 1e-12) {
    // components cancel: orient by the first non-negligible component
    for (double c : loading) {
      if (std::abs(c) > 1e-12) {
        flip = c < 0.0;
        break;
      }
    }
  }
  if (flip) {
    for (auto& c : loading) c = -c;
  }
  for (auto& c : loading) {
    if (c == 0.0) c = 0.0;  // normalise -0.0
  }
  u.loading = loading;

  u.proj_min = std::numeric_limits<double>::infinity();
  u.proj_max = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    const double proj = unifier_projection(r, u);
    u.proj_min = std::min(u.proj_min, proj);
    u.proj_max = std::max(u.proj_max, proj);
  }
  if (!(u.proj_max - u.proj_min > 1e-12)) {
    throw Error(Errc::DegenerateCorpus, "projections of the fit corpus do not spread");
  }
  return u;
}

double unifier_projection(const DimensionScores& d, const UnifierParams& u) {
  const auto a = d.as_array();
  double proj = 0.0;
  for (std::size_t k = 0; k < kDimensionCount; ++k) proj += u.loading[k] * (a[k] - u.mean[k]);
  return proj;
}

UnifiedScore unify(const DimensionScores& d, const UnifierParams& u) {
  const double proj = unifier_projection(d, u);
  const double scaled = 100.0 * (proj - u.proj_min) / (u.proj_max - u.proj_min);
  return UnifiedScore{std::clamp(scaled, 0.0, 100.0)};
}

std::pair<DimensionScores, UnifiedScore> direct_score(const Window& w,
                                                      const ReferenceProfile& profile,
                                                      ScoringOptions opts) {
  if (!profile.unifier) throw Error(Errc::InvalidConfig, "profile has no fitted unifier");
  auto dims = direct_dimensions(w, profile, opts);
  return {dims, unify(dims, *profile.unifier)};
}

void to_json(nlohmann::json& j, const Fences& f) {
  j = nlohmann::json{{"low", f.low}, {"high", f.high}};
}
void from_json(const nlohmann::json& j, Fences& f) {
  f.low = j.at("low").get<double>();
  f.high = j.at("high").get<double>();
}
void to_json(nlohmann::json& j, const Constraints& c) {
  j = nlohmann::json{{"min_valid", c.min_valid}, {"max_valid", c.max_valid}};
}
void from_json(const nlohmann::json& j, Constraints& c) {
  c.min_valid = j.at("min_valid").get<double>();
  c.max_valid = j.at("max_valid").get<double>();
}

void to_json(nlohmann::json& j, const UnifierParams& u) {
  j = nlohmann::json{{"schema_version", kProfileSchemaVersion},
                     {"mean", u.mean},
                     {"loading", u.loading},
                     {"proj_min", u.proj_min},
                     {"proj_max", u.proj_max}};
}

void from_json(const nlohmann::json& j, UnifierParams& u) {
  if (j.at("schema_version").get<int>() != kProfileSchemaVersion) {
    throw Error(Errc::SchemaMismatch, "unsupported unifier schema_version");
  }
  u.mean = j.at("mean").get<std::array<double, kDimensionCount>>();
  u.loading = j.at("loading").get<std::array<double, kDimensionCount>>();
  u.proj_min = j.at("proj_min").get<double>();
  u.proj_max = j.at("proj_max").get<double>();
}

void to_json(nlohmann::json& j, const ReferenceProfile& p) {
  j = nlohmann::json{
      {"schema_version", kProfileSchemaVersion},
      {"ref_sample", {{"encoding", "f64le-hex"},
                      {"count", p.ref_sample.size()},
                      {"data", encode_f64_hex(p.ref_sample)}}},
      {"ref_hist", p.ref_hist},
      {"fences", p.fences},
      {"constraints", p.constraints},
      {"unifier", nullptr},
      {"divergence_history", std::vector<double>(p.divergence_history.begin(),
                                                 p.divergence_history.end())},
      {"built_from", {p.built_from.first, p.built_from.second}},
      {"ref_mean", p.ref_mean},
      {"ref_std", p.ref_std}};
  if (p.unifier) j["unifier"] = *p.unifier;
}

void from_json(const nlohmann::json& j, ReferenceProfile& p) {
  if (j.at("schema_version").get<int>() != kProfileSchemaVersion) {
    throw Error(Errc::SchemaMismatch, "unsupported profile schema_version");
  }
  const auto& rs = j.at("ref_sample");
  if (rs.at("encoding").get<std::string>() != "f64le-hex") {
    throw Error(Errc::SchemaMismatch, "unknown ref_sample encoding");
  }
  p.ref_sample = decode_f64_hex(rs.at("data").get<std::string>());
  if (p.ref_sample.size() != rs.at("count").get<std::size_t>()) {
    throw Error(Errc::SchemaMismatch, "ref_sample count mismatch");
  }
  p.ref_hist = j.at("ref_hist").get<Histogram>();
  p.fences = j.at("fences").get<Fences>();
  p.constraints = j.at("constraints").get<Constraints>();
  const auto& u = j.at("unifier");
  p.unifier = u.is_null() ? std::nullopt : std::optional<UnifierParams>(u.get<UnifierParams>());
  const auto hist = j.at("divergence_history").get<std::vector<double>>();
  p.divergence_history.assign(hist.begin(), hist.end());
  const auto bf = j.at("built_from").get<std::array<std::uint64_t, 2>>();
  p.built_from = {bf[0], bf[1]};
  p.ref_mean = j.at("ref_mean").get<double>();
  p.ref_std = j.at("ref_std").get<double>();
}

std::string encode_f64_hex(std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  std::string bytes(values.size() * sizeof(double), '\0');
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return hex_encode(bytes);
}

std::vector<double> decode_f64_hex(const std::string& hex) {
  const std::string bytes = hex_decode(hex);
  if (bytes.size() % sizeof(double) != 0) {
    throw Error(Errc::SchemaMismatch, "f64 payload is not a multiple of 8 bytes");
  }
  std::vector<double> out(bytes.size() / sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace dqpipe
