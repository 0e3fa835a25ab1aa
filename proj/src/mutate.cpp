#include "dqpipe/mutate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "dqpipe/error.hpp"

namespace dqpipe {

namespace {

std::vector<std::optional<double>> values_of(const Window& w) {
  std::vector<std::optional<double>> out;
  out.reserve(w.size());
  for (const auto& r : w.readings()) out.push_back(r.value);
  return out;
}

std::vector<std::size_t> present_positions(const std::vector<std::optional<double>>& v) {
  std::vector<std::size_t> pos;
  pos.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i]) pos.push_back(i);
  }
  return pos;
}

std::size_t exact_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

// k distinct positions chosen by a partial Fisher-Yates shuffle
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t k,
                                std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw Error(Errc::InvalidConfig, "mutation rate must lie in [0,1]");
  }
}

}  // namespace

std::string to_string(MutationKind kind) {
  switch (kind) {
    case MutationKind::Missing: return "missing";
    case MutationKind::Anomaly: return "anomaly";
    case MutationKind::OutOfRange: return "out_of_range";
    case MutationKind::Shift: return "shift";
  }
  return "unknown";
}

MutationKind mutation_kind_from_string(const std::string& name) {
  if (name == "missing") return MutationKind::Missing;
  if (name == "anomaly") return MutationKind::Anomaly;
  if (name == "out_of_range") return MutationKind::OutOfRange;
  if (name == "shift") return MutationKind::Shift;
  throw Error(Errc::InvalidConfig, "unknown mutation operator '" + name + "'");
}

void MutationPlan::validate() const {
  for (const auto& op : ops) {
    check_rate(op.rate);
    if (op.magnitude < 0.0 && op.kind != MutationKind::Shift) {
      throw Error(Errc::InvalidConfig, "mutation magnitude must be >= 0");
    }
  }
}

void to_json(nlohmann::json& j, const MutationOp& op) {
  j = nlohmann::json{{"op", to_string(op.kind)},
                     {"rate", op.rate},
                     {"magnitude", op.magnitude},
                     {"seed", op.seed}};
}

void from_json(const nlohmann::json& j, MutationOp& op) {
  op.kind = mutation_kind_from_string(j.at("op").get<std::string>());
  op.rate = j.value("rate", 0.0);
  op.magnitude = j.value("magnitude", 0.0);
  op.seed = j.value("seed", std::uint64_t{0});
}

void to_json(nlohmann::json& j, const MutationPlan& p) {
  j = nlohmann::json{{"name", p.name}, {"ops", p.ops}};
}

void from_json(const nlohmann::json& j, MutationPlan& p) {
  p.name = j.value("name", std::string{});
  p.ops = j.at("ops").get<std::vector<MutationOp>>();
  p.validate();
}

MutationContext context_from(const ReferenceProfile& profile) {
  return MutationContext{profile.fences, profile.constraints,
                         profile.ref_std > 0.0 ? profile.ref_std : 1.0};
}

Window inject_missing(const Window& w, double rate, std::uint64_t seed) {
  check_rate(rate);
  auto values = values_of(w);
  std::mt19937_64 rng(seed);
  for (auto i : choose(present_positions(values), exact_count(rate, w.size()), rng)) {
    values[i].reset();
  }
  return w.with_values(values);
}

Window inject_anomalies(const Window& w, double rate, double magnitude, const Fences& fences,
                        std::uint64_t seed) {
  check_rate(rate);
  auto values = values_of(w);
  const auto present = present_positions(values);
  std::mt19937_64 rng(seed);
  const auto picked = choose(present, exact_count(rate, present.size()), rng);
  const double width = std::max(fences.high - fences.low, 1e-9);
  const double step = std::max(magnitude, 1e-6) * width;
  std::bernoulli_distribution up(0.5);
  for (auto i : picked) {
    const bool positive = up(rng);
    double v = *values[i] + (positive ? step : -step);
    if (v >= fences.low && v <= fences.high) v = positive ? fences.high + step : fences.low - step;
    values[i] = v;
  }
  return w.with_values(values);
}

Window inject_out_of_range(const Window& w, double rate, const Constraints& constraints,
                           std::uint64_t seed) {
  check_rate(rate);
  auto values = values_of(w);
  const auto present = present_positions(values);
  std::mt19937_64 rng(seed);
  const auto picked = choose(present, exact_count(rate, present.size()), rng);
  const double width = std::max(constraints.max_valid - constraints.min_valid, 1.0);
  std::bernoulli_distribution up(0.5);
  std::uniform_real_distribution<double> depth(0.1, 0.5);
  for (auto i : picked) {
    const double offset = depth(rng) * width;
    values[i] = up(rng) ? constraints.max_valid + offset : constraints.min_valid - offset;
  }
  return w.with_values(values);
}

Window inject_shift(const Window& w, double delta) {
  auto values = values_of(w);
  for (auto& v : values) {
    if (v) *v += delta;
  }
  return w.with_values(values);
}

Window apply_plan(const Window& w, const MutationPlan& plan, const MutationContext& ctx) {
  Window out = w;
  for (const auto& op : plan.ops) {
    switch (op.kind) {
      case MutationKind::Missing:
        out = inject_missing(out, op.rate, op.seed);
        break;
      case MutationKind::Anomaly:
        out = inject_anomalies(out, op.rate, op.magnitude, ctx.fences, op.seed);
        break;
      case MutationKind::OutOfRange:
        out = inject_out_of_range(out, op.rate, ctx.constraints, op.seed);
        break;
      case MutationKind::Shift:
        out = inject_shift(out, op.magnitude * ctx.scale);
        break;
    }
  }
  return out;
}

std::vector<MutationPlan> default_plans(std::uint64_t seed) {
  using K = MutationKind;
  auto op = [&](K kind, double rate, double magnitude, std::uint64_t salt) {
    return MutationOp{kind, rate, magnitude, seed * 1000003ULL + salt};
  };
  return {
      {"missing_10", {op(K::Missing, 0.1, 0.0, 1)}},
      {"missing_30", {op(K::Missing, 0.3, 0.0, 2)}},
      {"anomaly_10", {op(K::Anomaly, 0.1, 2.0, 3)}},
      {"out_of_range_20", {op(K::OutOfRange, 0.2, 0.0, 4)}},
      {"shift_0.5sd", {op(K::Shift, 0.0, 0.5, 5)}},
      {"shift_2sd", {op(K::Shift, 0.0, 2.0, 6)}},
      {"missing_anomaly", {op(K::Missing, 0.2, 0.0, 7), op(K::Anomaly, 0.05, 2.0, 8)}},
      {"range_shift", {op(K::OutOfRange, 0.1, 0.0, 9), op(K::Shift, 0.0, 1.0, 10)}},
      {"everything",
       {op(K::Missing, 0.15, 0.0, 11), op(K::Anomaly, 0.05, 1.0, 12),
        op(K::OutOfRange, 0.05, 0.0, 13), op(K::Shift, 0.0, 0.75, 14)}},
  };
}

namespace {

// Seeds are re-derived per window so each corpus row corrupts different
// positions while staying reproducible.
MutationPlan reseeded(const MutationPlan& plan, std::uint64_t window_id) {
  MutationPlan p = plan;
  for (auto& op : p.ops) op.seed = op.seed * 0x9e3779b97f4a7c15ULL + window_id;
  return p;
}

template <typename Sink>
std::size_t for_each_variant(std::span<const Window> clean, std::span<const MutationPlan> plans,
                             const ReferenceProfile& profile, Sink&& sink) {
  const auto ctx = context_from(profile);
  std::size_t skipped = 0;
  for (const auto& w : clean) {
    for (int pi = -1; pi < static_cast<int>(plans.size()); ++pi) {
      const Window variant =
          pi < 0 ? w : apply_plan(w, reseeded(plans[static_cast<std::size_t>(pi)], w.id()), ctx);
      if (variant.present_count() == 0) {
        ++skipped;
        continue;
      }
      sink(variant, pi);
    }
  }
  return skipped;
}

}  // namespace

AnnotatedCorpus build_annotated_corpus(std::span<const Window> clean,
                                       std::span<const MutationPlan> plans,
                                       const ReferenceProfile& profile) {
  AnnotatedCorpus corpus;
  corpus.rows.reserve(clean.size() * (plans.size() + 1));
  corpus.skipped = for_each_variant(clean, plans, profile, [&](const Window& v, int pi) {
    auto [dims, score] = direct_score(v, profile);
    corpus.rows.push_back({compute_dq_features(v, profile), dims, score, v.id(), pi});
  });
  return corpus;
}

AnnotatedCorpus build_corpus_and_fit_unifier(std::span<const Window> clean,
                                             std::span<const MutationPlan> plans,
                                             ReferenceProfile& profile) {
  AnnotatedCorpus corpus;
  corpus.rows.reserve(clean.size() * (plans.size() + 1));
  corpus.skipped = for_each_variant(clean, plans, profile, [&](const Window& v, int pi) {
    corpus.rows.push_back(
        {compute_dq_features(v, profile), direct_dimensions(v, profile), {}, v.id(), pi});
  });
  std::vector<DimensionScores> dims;
  dims.reserve(corpus.rows.size());
  for (const auto& r : corpus.rows) dims.push_back(r.dims);
  profile.unifier = fit_unifier(dims);
  for (auto& r : corpus.rows) r.score = unify(r.dims, *profile.unifier);
  return corpus;
}

void write_corpus_csv(const std::string& path, std::span<const CorpusRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::StorageFailure, "cannot open " + path);
  out.precision(17);
  for (const char* name : kDqFeatureNames) out << name << ',';
  out << "unified_score\n";
  for (const auto& r : rows) {
    for (double v : r.features.values) out << v << ',';
    out << r.score.value << '\n';
  }
  if (!out) throw Error(Errc::StorageFailure, "failed writing " + path);
}

}  // namespace dqpipe
