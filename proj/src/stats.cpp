#include "dqpipe/stats.hpp"

#include <algorithm>
#include <cmath>

#include "dqpipe/error.hpp"

namespace dqpipe {

void to_json(nlohmann::json& j, const Histogram& h) {
  j = nlohmann::json{{"edges", h.edges}, {"mass", h.mass}};
}

void from_json(const nlohmann::json& j, Histogram& h) {
  h.edges = j.at("edges").get<std::vector<double>>();
  h.mass = j.at("mass").get<std::vector<double>>();
  if (h.edges.size() != h.mass.size() + 1) {
    throw Error(Errc::SchemaMismatch, "histogram edges/mass length mismatch");
  }
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (!(lo < hi) || bins == 0) {
    throw Error(Errc::InvalidConfig, "uniform_edges requires lo < hi and bins >= 1");
  }
  std::vector<double> edges(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = lo + width * static_cast<double>(i);
  edges.back() = hi;
  return edges;
}

std::size_t bin_index(std::span<const double> edges, double v) noexcept {
  // interior edges only: anything below edges[1] lands in bin 0, anything at or
  // above edges[B-1] lands in bin B-1
  const auto first = edges.begin() + 1;
  const auto last = edges.end() - 1;
  return static_cast<std::size_t>(std::upper_bound(first, last, v) - first);
}

Histogram estimate_pdf(std::span<const double> values, std::span<const double> edges) {
  if (values.empty()) throw Error(Errc::AllMissingWindow, "no present values to bin");
  if (edges.size() < 2) throw Error(Errc::BinMismatch, "need at least one bin");
  const std::size_t bins = edges.size() - 1;
  std::vector<double> counts(bins, 0.0);
  for (double v : values) counts[bin_index(edges, v)] += 1.0;
  const double total = static_cast<double>(values.size()) + kHistogramEpsilon * static_cast<double>(bins);
  for (auto& c : counts) c = (c + kHistogramEpsilon) / total;
  return Histogram{std::vector<double>(edges.begin(), edges.end()), std::move(counts)};
}

double entropy_bits(std::span<const double> mass) noexcept {
  double h = 0.0;
  for (double p : mass) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

double jsd(const Histogram& p, const Histogram& q) {
  if (p.edges != q.edges || p.mass.size() != q.mass.size()) {
    throw Error(Errc::BinMismatch, "histograms do not share bin edges");
  }
  std::vector<double> mid(p.mass.size());
  for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = (p.mass[i] + q.mass[i]) / 2.0;
  const double d = entropy_bits(mid) - (entropy_bits(p.mass) + entropy_bits(q.mass)) / 2.0;
  return std::clamp(d, 0.0, 1.0);
}

double ks_statistic_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(Errc::EmptySample, "KS needs two non-empty samples");
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double z = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= z) ++i;
    while (j < b.size() && b[j] <= z) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return best;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return ks_statistic_sorted(sa, sb);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(Errc::EmptySample, "quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace dqpipe
