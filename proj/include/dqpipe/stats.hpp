#pragma once

#include <span>
#include <vector>

#include <json.hpp>

namespace dqpipe {

inline constexpr double kHistogramEpsilon = 1e-10;

/// Binned probability mass over strictly increasing edges.
struct Histogram {
  std::vector<double> edges;  // B + 1
  std::vector<double> mass;   // B

  std::size_t bins() const noexcept { return mass.size(); }
  bool operator==(const Histogram&) const = default;
};

void to_json(nlohmann::json& j, const Histogram& h);
void from_json(const nlohmann::json& j, Histogram& h);

/// B equal-width bins spanning [lo, hi]. Requires lo < hi and B >= 1.
std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);

/// Index of the bin holding v; values outside the edge range clip to the end bins.
std::size_t bin_index(std::span<const double> edges, double v) noexcept;

/// Counts per bin plus kHistogramEpsilon per bin, renormalized to unit mass.
/// Throws AllMissingWindow when values is empty.
Histogram estimate_pdf(std::span<const double> values, std::span<const double> edges);

/// Base-2 Shannon entropy; zero-mass bins contribute nothing.
double entropy_bits(std::span<const double> mass) noexcept;

/// Jensen-Shannon divergence in bits: H((P+Q)/2) - (H(P)+H(Q))/2, in [0,1].
/// Throws BinMismatch unless both histograms share identical edges.
double jsd(const Histogram& p, const Histogram& q);

/// Two-sample KS statistic: max |ECDF_a(z) - ECDF_b(z)| over the combined
/// sample. Throws EmptySample if either side is empty.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Same statistic for inputs already sorted ascending. One linear sweep over
/// the combined sample.
double ks_statistic_sorted(std::span<const double> a_sorted, std::span<const double> b_sorted);

/// Linear-interpolation quantile (R type 7) of ascending-sorted data.
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace dqpipe
