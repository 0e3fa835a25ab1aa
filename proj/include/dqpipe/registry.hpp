#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpipe/datamodel.hpp"

namespace dqpipe {

/// Versions of all four artifact kinds that were registered together.
struct Deployment {
  std::uint64_t id = 0;
  std::map<ArtifactKind, std::uint64_t> versions;
  bool operator==(const Deployment&) const = default;
};

void to_json(nlohmann::json& j, const Deployment& d);
void from_json(const nlohmann::json& j, Deployment& d);

struct RegistryOptions {
  bool fsync = true;      // flush payloads and log lines to stable storage
  bool read_only = false; // readers take no lock and may not write
};

/// File-backed artifact store and event log rooted at a directory:
///
///   <root>/.lock                          writer lock (flock)
///   <root>/store/<kind>/<version>/payload
///   <root>/store/<kind>/<version>/meta.json
///   <root>/events.jsonl                   append-only event log
///
/// Versions become visible by renaming a fully written temp directory, so
/// readers only ever see committed versions.
class Registry {
 public:
  explicit Registry(std::string root, RegistryOptions opts = {});
  ~Registry();
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;
  Registry(Registry&&) noexcept;
  Registry& operator=(Registry&&) noexcept;

  const std::string& root() const noexcept { return root_; }
  std::string events_path() const;

  std::uint64_t put_artifact(ArtifactKind kind, std::string_view payload,
                             std::map<std::string, std::string> meta = {});
  VersionedArtifact get(ArtifactKind kind, std::uint64_t version) const;
  VersionedArtifact get_latest(ArtifactKind kind) const;
  std::vector<std::uint64_t> list_versions(ArtifactKind kind) const;

  /// Puts every given artifact, tags each with the new deployment id, then
  /// appends the deployment event that commits them as one unit.
  Deployment put_deployment(const std::map<ArtifactKind, std::string>& payloads,
                            std::map<std::string, std::string> meta = {});
  std::optional<Deployment> current_deployment() const { return current_; }

  /// Appends one JSON line; `seq` is assigned by the registry.
  void log_event(nlohmann::json record);

 private:
  void require_writer() const;

  std::string root_;
  RegistryOptions opts_;
  int lock_fd_ = -1;
  int log_fd_ = -1;
  std::uint64_t next_seq_ = 0;
  std::optional<Deployment> current_;
};

std::vector<nlohmann::json> read_events(const std::string& events_path);

/// Result of replaying an event log against a registry.
struct AuditReport {
  bool ok = true;
  std::size_t deployments = 0;
  std::size_t predictions = 0;
  std::size_t adaptations_skipped = 0;
  std::vector<std::string> problems;
};

/// Checks that seq numbers are contiguous, deployment ids and per-kind
/// versions advance by exactly one, every prediction names the deployment
/// then in force with matching versions, and the store holds gapless
/// versions 1..n for each kind.
AuditReport audit(const std::string& root);

}  // namespace dqpipe
