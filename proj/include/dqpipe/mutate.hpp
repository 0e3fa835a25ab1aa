#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/dqscore.hpp"
#include "dqpipe/learn.hpp"

namespace dqpipe {

enum class MutationKind { Missing, Anomaly, OutOfRange, Shift };

std::string to_string(MutationKind kind);
MutationKind mutation_kind_from_string(const std::string& name);

struct MutationOp {
  MutationKind kind = MutationKind::Missing;
  double rate = 0.0;       // fraction of values touched (ignored by Shift)
  double magnitude = 0.0;  // Anomaly: fence widths; Shift: multiples of the context scale
  std::uint64_t seed = 0;
  bool operator==(const MutationOp&) const = default;
};

struct MutationPlan {
  std::string name;
  std::vector<MutationOp> ops;

  void validate() const;
  bool operator==(const MutationPlan&) const = default;
};

void to_json(nlohmann::json& j, const MutationOp& op);
void from_json(const nlohmann::json& j, MutationOp& op);
void to_json(nlohmann::json& j, const MutationPlan& p);
void from_json(const nlohmann::json& j, MutationPlan& p);

/// What the operators need to know about "normal": anomaly fences, the
/// integrity range and the unit for shifts.
struct MutationContext {
  Fences fences;
  Constraints constraints;
  double scale = 1.0;
  bool operator==(const MutationContext&) const = default;
};

MutationContext context_from(const ReferenceProfile& profile);

/// round(rate * N) currently-present values become missing.
Window inject_missing(const Window& w, double rate, std::uint64_t seed);

/// round(rate * Npresent) present values move by +/- magnitude fence widths,
/// landing strictly outside the fences.
Window inject_anomalies(const Window& w, double rate, double magnitude, const Fences& fences,
                        std::uint64_t seed);

/// round(rate * Npresent) present values move outside [min_valid, max_valid].
Window inject_out_of_range(const Window& w, double rate, const Constraints& constraints,
                           std::uint64_t seed);

/// Every present value increases by delta.
Window inject_shift(const Window& w, double delta);

Window apply_plan(const Window& w, const MutationPlan& plan, const MutationContext& ctx);

/// Nine plans covering every dimension: two missing rates, anomalies,
/// out-of-range, two shifts and three composites.
std::vector<MutationPlan> default_plans(std::uint64_t seed = 7);

struct CorpusRow {
  DqFeatures features;
  DimensionScores dims;
  UnifiedScore score;
  std::uint64_t window_id = 0;
  int plan_index = -1;  // -1 is the identity plan
};

struct AnnotatedCorpus {
  std::vector<CorpusRow> rows;
  std::size_t skipped = 0;  // all-missing mutated windows
};

/// Every window under the identity plan and each plan, direct-scored against
/// the profile (which must carry a unifier).
AnnotatedCorpus build_annotated_corpus(std::span<const Window> clean,
                                       std::span<const MutationPlan> plans,
                                       const ReferenceProfile& profile);

/// Same rows, but first fits the unifier on the corpus dimensions and stores
/// it in profile.
AnnotatedCorpus build_corpus_and_fit_unifier(std::span<const Window> clean,
                                             std::span<const MutationPlan> plans,
                                             ReferenceProfile& profile);

void write_corpus_csv(const std::string& path, std::span<const CorpusRow> rows);

}  // namespace dqpipe
