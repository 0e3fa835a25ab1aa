#include "dqpipe/datamodel.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "dqpipe/error.hpp"

namespace dqpipe {

std::size_t Window::present_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(
      readings_.begin(), readings_.end(), [](const Reading& r) { return r.value.has_value(); }));
}

std::vector<double> Window::present_values() const {
  std::vector<double> out;
  out.reserve(readings_.size());
  for (const auto& r : readings_) {
    if (r.value) out.push_back(*r.value);
  }
  return out;
}

Window Window::with_values(std::span<const std::optional<double>> values) const {
  if (values.size() != readings_.size()) {
    throw Error(Errc::WindowSizeMismatch, "with_values: expected " +
                                              std::to_string(readings_.size()) + " values, got " +
                                              std::to_string(values.size()));
  }
  Window out = *this;
  for (std::size_t i = 0; i < values.size(); ++i) out.readings_[i].value = values[i];
  return out;
}

Window make_window(std::vector<Reading> readings, std::uint64_t id, std::uint64_t cycle_id,
                   std::size_t expected_n, bool allow_partial) {
  for (std::size_t i = 1; i < readings.size(); ++i) {
    if (readings[i].timestamp_ns <= readings[i - 1].timestamp_ns) {
      throw Error(Errc::NonMonotoneTimestamps,
                  "reading " + std::to_string(i) + " does not advance the timestamp");
    }
  }
  const bool short_window = readings.size() < expected_n;
  if (readings.size() > expected_n || (short_window && !allow_partial) || readings.empty()) {
    throw Error(Errc::WindowSizeMismatch, "expected " + std::to_string(expected_n) +
                                              " readings, got " +
                                              std::to_string(readings.size()));
  }
  Window w;
  w.id_ = id;
  w.cycle_id_ = cycle_id;
  w.partial_ = short_window;
  w.readings_ = std::move(readings);
  return w;
}

double extract_label(const PumpCycle& cycle) {
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& r : cycle.readings) {
    if (r.value) {
      best = std::min(best, *r.value);
      any = true;
    }
  }
  if (!any) {
    throw Error(Errc::EmptyCycle, "cycle " + std::to_string(cycle.cycle_id) +
                                      " has no non-missing readings");
  }
  return best;
}

std::string to_string(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::ReferenceProfile: return "reference_profile";
    case ArtifactKind::Unifier: return "unifier";
    case ArtifactKind::DqScorer: return "dq_scorer";
    case ArtifactKind::InferenceModel: return "inference_model";
  }
  return "unknown";
}

ArtifactKind artifact_kind_from_string(const std::string& name) {
  for (auto k : kAllArtifactKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::NotFound, "unknown artifact kind '" + name + "'");
}

void to_json(nlohmann::json& j, const Reading& r) {
  j = nlohmann::json{{"timestamp_ns", r.timestamp_ns}, {"value", nullptr}};
  if (r.value) j["value"] = *r.value;
}

void from_json(const nlohmann::json& j, Reading& r) {
  r.timestamp_ns = j.at("timestamp_ns").get<TimestampNs>();
  const auto& v = j.at("value");
  r.value = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
}

void to_json(nlohmann::json& j, const Window& w) {
  j = nlohmann::json{{"id", w.id()},
                     {"cycle_id", w.cycle_id()},
                     {"partial", w.partial()},
                     {"readings", w.readings()}};
}

void from_json(const nlohmann::json& j, Window& w) {
  w.id_ = j.at("id").get<std::uint64_t>();
  w.cycle_id_ = j.at("cycle_id").get<std::uint64_t>();
  w.partial_ = j.at("partial").get<bool>();
  w.readings_ = j.at("readings").get<std::vector<Reading>>();
}

void to_json(nlohmann::json& j, const PumpCycle& c) {
  j = nlohmann::json{{"cycle_id", c.cycle_id}, {"readings", c.readings}, {"label", nullptr}};
  if (c.label) j["label"] = *c.label;
}

void from_json(const nlohmann::json& j, PumpCycle& c) {
  c.cycle_id = j.at("cycle_id").get<std::uint64_t>();
  c.readings = j.at("readings").get<std::vector<Reading>>();
  const auto& l = j.at("label");
  c.label = l.is_null() ? std::nullopt : std::optional<double>(l.get<double>());
}

void to_json(nlohmann::json& j, const DimensionScores& d) {
  j = nlohmann::json{{"accuracy", d.accuracy},
                     {"completeness", d.completeness},
                     {"consistency", d.consistency},
                     {"timeliness", d.timeliness},
                     {"skewness", d.skewness}};
}

void from_json(const nlohmann::json& j, DimensionScores& d) {
  d.accuracy = j.at("accuracy").get<double>();
  d.completeness = j.at("completeness").get<double>();
  d.consistency = j.at("consistency").get<double>();
  d.timeliness = j.at("timeliness").get<double>();
  d.skewness = j.at("skewness").get<double>();
}

void to_json(nlohmann::json& j, const UnifiedScore& u) { j = nlohmann::json{{"value", u.value}}; }
void from_json(const nlohmann::json& j, UnifiedScore& u) { u.value = j.at("value").get<double>(); }

namespace {
nlohmann::json opt_to_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
std::optional<double> opt_from_json(const nlohmann::json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}
}  // namespace

void to_json(nlohmann::json& j, const DriftVerdict& v) {
  j = nlohmann::json{{"divergence", v.divergence},
                     {"quantile_rank", opt_to_json(v.quantile_rank)},
                     {"threshold", opt_to_json(v.threshold)},
                     {"drift", v.drift},
                     {"history_len", v.history_len}};
}

void from_json(const nlohmann::json& j, DriftVerdict& v) {
  v.divergence = j.at("divergence").get<double>();
  v.quantile_rank = opt_from_json(j.at("quantile_rank"));
  v.threshold = opt_from_json(j.at("threshold"));
  v.drift = j.at("drift").get<bool>();
  v.history_len = j.at("history_len").get<std::size_t>();
}

void to_json(nlohmann::json& j, const VersionedArtifact& a) {
  j = nlohmann::json{{"kind", to_string(a.kind)},
                     {"version", a.version},
                     {"payload_hex", hex_encode(a.payload)},
                     {"meta", a.meta}};
}

void from_json(const nlohmann::json& j, VersionedArtifact& a) {
  a.kind = artifact_kind_from_string(j.at("kind").get<std::string>());
  a.version = j.at("version").get<std::uint64_t>();
  a.payload = hex_decode(j.at("payload_hex").get<std::string>());
  a.meta = j.at("meta").get<std::map<std::string, std::string>>();
}

std::string hex_encode(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.resize(bytes.size() * 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<unsigned char>(bytes[i]);
    out[2 * i] = kDigits[b >> 4];
    out[2 * i + 1] = kDigits[b & 0x0f];
  }
  return out;
}

std::string hex_decode(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::SchemaMismatch, "invalid hex digit");
  };
  if (hex.size() % 2 != 0) throw Error(Errc::SchemaMismatch, "odd-length hex string");
  std::string out(hex.size() / 2, '\0');
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<char>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fingerprint(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace dqpipe
