#include "dqpipe/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dqpipe/error.hpp"

namespace fs = std::filesystem;

namespace dqpipe {

namespace {

std::string sys_error(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

void write_all(int fd, std::string_view data, const std::string& path) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::StorageFailure, sys_error("write " + path));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void write_file(const std::string& path, std::string_view data, bool sync) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::StorageFailure, sys_error("open " + path));
  try {
    write_all(fd, data, path);
    if (sync && ::fsync(fd) != 0) throw Error(Errc::StorageFailure, sys_error("fsync " + path));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

void sync_dir(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::NotFound, "cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::optional<std::uint64_t> parse_version(const std::string& name) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(name.data(), name.data() + name.size(), v);
  if (ec != std::errc() || p != name.data() + name.size() || v == 0) return std::nullopt;
  return v;
}

std::string kind_dir(const std::string& root, ArtifactKind kind) {
  return root + "/store/" + to_string(kind);
}

}  // namespace

void to_json(nlohmann::json& j, const Deployment& d) {
  nlohmann::json v = nlohmann::json::object();
  for (const auto& [k, ver] : d.versions) v[to_string(k)] = ver;
  j = nlohmann::json{{"deployment_id", d.id}, {"versions", v}};
}

void from_json(const nlohmann::json& j, Deployment& d) {
  d.id = j.at("deployment_id").get<std::uint64_t>();
  d.versions.clear();
  for (const auto& [k, v] : j.at("versions").items())
    d.versions[artifact_kind_from_string(k)] = v.get<std::uint64_t>();
}

Registry::Registry(std::string root, RegistryOptions opts) : root_(std::move(root)), opts_(opts) {
  if (opts_.read_only) {
    if (!fs::is_directory(root_)) throw Error(Errc::NotFound, "no registry at " + root_);
    return;
  }
  std::error_code ec;
  fs::create_directories(root_ + "/store", ec);
  if (ec) throw Error(Errc::StorageFailure, "cannot create " + root_ + ": " + ec.message());

  const std::string lock_path = root_ + "/.lock";
  lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw Error(Errc::StorageFailure, sys_error("open " + lock_path));
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    const int err = errno;
    ::close(lock_fd_);
    lock_fd_ = -1;
    if (err == EWOULDBLOCK) throw Error(Errc::WriterLocked, "another writer holds " + root_);
    errno = err;
    throw Error(Errc::StorageFailure, sys_error("flock " + lock_path));
  }

  for (const auto& e : read_events(events_path())) {
    next_seq_ = std::max(next_seq_, e.value("seq", std::uint64_t{0}) + 1);
    if (e.value("type", "") == "deployment") current_ = e.get<Deployment>();
  }
  log_fd_ = ::open(events_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) {
    ::close(lock_fd_);
    throw Error(Errc::StorageFailure, sys_error("open " + events_path()));
  }
}

Registry::~Registry() {
  if (log_fd_ >= 0) ::close(log_fd_);
  if (lock_fd_ >= 0) ::close(lock_fd_);  // releases the flock
}

Registry::Registry(Registry&& o) noexcept
    : root_(std::move(o.root_)),
      opts_(o.opts_),
      lock_fd_(std::exchange(o.lock_fd_, -1)),
      log_fd_(std::exchange(o.log_fd_, -1)),
      next_seq_(o.next_seq_),
      current_(std::move(o.current_)) {}

Registry& Registry::operator=(Registry&& o) noexcept {
  if (this != &o) {
    if (log_fd_ >= 0) ::close(log_fd_);
    if (lock_fd_ >= 0) ::close(lock_fd_);
    root_ = std::move(o.root_);
    opts_ = o.opts_;
    lock_fd_ = std::exchange(o.lock_fd_, -1);
    log_fd_ = std::exchange(o.log_fd_, -1);
    next_seq_ = o.next_seq_;
    current_ = std::move(o.current_);
  }
  return *this;
}

std::string Registry::events_path() const { return root_ + "/events.jsonl"; }

void Registry::require_writer() const {
  if (lock_fd_ < 0) throw Error(Errc::WriterLocked, "registry opened read-only");
}

std::uint64_t Registry::put_artifact(ArtifactKind kind, std::string_view payload,
                                     std::map<std::string, std::string> meta) {
  require_writer();
  if (payload.empty()) throw Error(Errc::InvalidConfig, "empty payload");
  const auto versions = list_versions(kind);
  const std::uint64_t version = versions.empty() ? 1 : versions.back() + 1;

  const std::string dir = kind_dir(root_, kind);
  const std::string tmp = dir + "/.tmp-" + std::to_string(version);
  const std::string dst = dir + "/" + std::to_string(version);
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) throw Error(Errc::StorageFailure, "cannot create " + tmp + ": " + ec.message());

  meta["payload_hash"] = fingerprint(payload);
  nlohmann::json mj{{"kind", to_string(kind)}, {"version", version}, {"meta", meta}};
  write_file(tmp + "/payload", payload, opts_.fsync);
  write_file(tmp + "/meta.json", mj.dump(2) + "\n", opts_.fsync);
  if (opts_.fsync) sync_dir(tmp);
  if (::rename(tmp.c_str(), dst.c_str()) != 0)
    throw Error(Errc::StorageFailure, sys_error("rename " + tmp));
  if (opts_.fsync) sync_dir(dir);
  return version;
}

VersionedArtifact Registry::get(ArtifactKind kind, std::uint64_t version) const {
  const std::string dir = kind_dir(root_, kind) + "/" + std::to_string(version);
  if (version == 0 || !fs::is_directory(dir))
    throw Error(Errc::NotFound, to_string(kind) + " version " + std::to_string(version));
  VersionedArtifact a;
  a.kind = kind;
  a.version = version;
  a.payload = read_file(dir + "/payload");
  const auto mj = nlohmann::json::parse(read_file(dir + "/meta.json"));
  a.meta = mj.at("meta").get<std::map<std::string, std::string>>();
  return a;
}

VersionedArtifact Registry::get_latest(ArtifactKind kind) const {
  const auto v = list_versions(kind);
  if (v.empty()) throw Error(Errc::NotFound, "no versions of " + to_string(kind));
  return get(kind, v.back());
}

std::vector<std::uint64_t> Registry::list_versions(ArtifactKind kind) const {
  std::vector<std::uint64_t> out;
  const std::string dir = kind_dir(root_, kind);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory()) continue;
    if (auto v = parse_version(e.path().filename().string())) out.push_back(*v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Deployment Registry::put_deployment(const std::map<ArtifactKind, std::string>& payloads,
                                    std::map<std::string, std::string> meta) {
  require_writer();
  Deployment d;
  d.id = current_ ? current_->id + 1 : 1;
  if (current_) d.versions = current_->versions;
  meta["deployment_id"] = std::to_string(d.id);
  for (const auto& [kind, payload] : payloads) d.versions[kind] = put_artifact(kind, payload, meta);

  nlohmann::json ev = d;
  ev["type"] = "deployment";
  for (const auto& [k, v] : meta)
    if (k != "deployment_id") ev[k] = v;
  log_event(std::move(ev));
  current_ = d;
  return d;
}

void Registry::log_event(nlohmann::json record) {
  require_writer();
  record["seq"] = next_seq_;
  const std::string line = record.dump() + "\n";
  write_all(log_fd_, line, events_path());
  if (opts_.fsync && ::fdatasync(log_fd_) != 0)
    throw Error(Errc::StorageFailure, sys_error("fdatasync " + events_path()));
  ++next_seq_;
}

std::vector<nlohmann::json> read_events(const std::string& path) {
  std::vector<nlohmann::json> out;
  std::ifstream f(path);
  if (!f) return out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecordError(n, e.what());
    }
  }
  return out;
}

AuditReport audit(const std::string& root) {
  AuditReport r;
  auto fail = [&](std::string msg) {
    r.ok = false;
    if (r.problems.size() < 50) r.problems.push_back(std::move(msg));
  };

  const Registry reg(root, {.fsync = false, .read_only = true});
  std::map<ArtifactKind, std::uint64_t> stored;
  for (auto kind : kAllArtifactKinds) {
    const auto v = reg.list_versions(kind);
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] != i + 1) {
        fail(to_string(kind) + " versions have a gap at " + std::to_string(i + 1));
        break;
      }
    stored[kind] = v.empty() ? 0 : v.back();
  }

  std::optional<Deployment> cur;
  std::uint64_t expect_seq = 0;
  for (const auto& e : read_events(reg.events_path())) {
    const auto seq = e.value("seq", std::uint64_t{0});
    if (seq != expect_seq)
      fail("seq " + std::to_string(seq) + " where " + std::to_string(expect_seq) + " expected");
    expect_seq = seq + 1;
    const std::string type = e.value("type", "");
    if (type == "deployment") {
      const auto d = e.get<Deployment>();
      const std::uint64_t want = cur ? cur->id + 1 : 1;
      if (d.id != want) fail("deployment " + std::to_string(d.id) + " out of order");
      for (auto kind : kAllArtifactKinds) {
        const auto it = d.versions.find(kind);
        const std::uint64_t before = cur && cur->versions.count(kind) ? cur->versions.at(kind) : 0;
        if (it == d.versions.end()) {
          fail("deployment " + std::to_string(d.id) + " lacks " + to_string(kind));
          continue;
        }
        if (it->second != before + 1)
          fail("deployment " + std::to_string(d.id) + " moves " + to_string(kind) + " from " +
               std::to_string(before) + " to " + std::to_string(it->second));
        try {
          const auto a = reg.get(kind, it->second);
          if (a.meta.count("deployment_id") && a.meta.at("deployment_id") != std::to_string(d.id))
            fail(to_string(kind) + " v" + std::to_string(it->second) + " tagged with deployment " +
                 a.meta.at("deployment_id"));
        } catch (const Error&) {
          fail(to_string(kind) + " v" + std::to_string(it->second) + " missing from store");
        }
      }
      cur = d;
      ++r.deployments;
    } else if (type == "prediction") {
      ++r.predictions;
      if (!cur) {
        fail("prediction before any deployment");
        continue;
      }
      const auto id = e.value("deployment_id", std::uint64_t{0});
      if (id != cur->id)
        fail("prediction for window " + std::to_string(e.value("window_id", std::uint64_t{0})) +
             " names deployment " + std::to_string(id) + " while " + std::to_string(cur->id) +
             " is current");
      else if (e.contains("versions") && e.at("versions").get<std::map<std::string, std::uint64_t>>() !=
                                             nlohmann::json(*cur).at("versions")
                                                 .get<std::map<std::string, std::uint64_t>>())
        fail("prediction versions disagree with deployment " + std::to_string(id));
    } else if (type == "adaptation_skipped") {
      ++r.adaptations_skipped;
    }
  }
  for (auto kind : kAllArtifactKinds) {
    const std::uint64_t logged = cur && cur->versions.count(kind) ? cur->versions.at(kind) : 0;
    if (logged != stored[kind])
      fail(to_string(kind) + ": store holds " + std::to_string(stored[kind]) +
           " versions, log commits " + std::to_string(logged));
  }
  return r;
}

}  // namespace dqpipe
