#include "dqpipe/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "dqpipe/error.hpp"

namespace dqpipe {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (cycle_len == 0) throw Error(Errc::InvalidConfig, "cycle_len must be positive");
  if (window_size == 0 || window_size > cycle_len)
    throw Error(Errc::InvalidConfig, "window_size must be in [1, cycle_len]");
  if (!std::isfinite(p0) || p0 <= 0.0) throw Error(Errc::InvalidConfig, "p0 must be positive");
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw Error(Errc::InvalidConfig, "lambda must be non-negative");
  if (!(noise_std >= 0.0) || !(lambda_jitter >= 0.0) || !(p0_jitter >= 0.0))
    throw Error(Errc::InvalidConfig, "noise and jitter must be non-negative");
  for (const auto& r : drift_schedule)
    if (r.lambda < 0.0 || r.noise_std < 0.0)
      throw Error(Errc::InvalidConfig, "drift regime values must be non-negative");
  for (const auto& c : corruption_schedule) {
    if (c.last_cycle < c.first_cycle)
      throw Error(Errc::InvalidConfig, "corruption span ends before it starts");
    c.plan.validate();
  }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  auto drift = nlohmann::json::array();
  for (const auto& r : c.drift_schedule)
    drift.push_back({{"cycle", r.cycle}, {"lambda", r.lambda}, {"noise_std", r.noise_std}});
  auto corr = nlohmann::json::array();
  for (const auto& s : c.corruption_schedule)
    corr.push_back({{"first_cycle", s.first_cycle}, {"last_cycle", s.last_cycle},
                    {"plan", s.plan}});
  j = nlohmann::json{{"n_cycles", c.n_cycles},
                     {"cycle_len", c.cycle_len},
                     {"window_size", c.window_size},
                     {"p0", c.p0},
                     {"lambda", c.lambda},
                     {"noise_std", c.noise_std},
                     {"lambda_jitter", c.lambda_jitter},
                     {"p0_jitter", c.p0_jitter},
                     {"drift_schedule", drift},
                     {"corruption_schedule", corr},
                     {"corruption_context",
                      {{"fences", c.corruption_context.fences},
                       {"constraints", c.corruption_context.constraints},
                       {"scale", c.corruption_context.scale}}},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.n_cycles = j.value("n_cycles", d.n_cycles);
  c.cycle_len = j.value("cycle_len", d.cycle_len);
  c.window_size = j.value("window_size", d.window_size);
  c.p0 = j.value("p0", d.p0);
  c.lambda = j.value("lambda", d.lambda);
  c.noise_std = j.value("noise_std", d.noise_std);
  c.lambda_jitter = j.value("lambda_jitter", d.lambda_jitter);
  c.p0_jitter = j.value("p0_jitter", d.p0_jitter);
  c.seed = j.value("seed", d.seed);
  c.drift_schedule.clear();
  if (j.contains("drift_schedule"))
    for (const auto& r : j.at("drift_schedule"))
      c.drift_schedule.push_back({r.at("cycle").get<std::size_t>(), r.at("lambda").get<double>(),
                                  r.at("noise_std").get<double>()});
  c.corruption_schedule.clear();
  if (j.contains("corruption_schedule"))
    for (const auto& s : j.at("corruption_schedule"))
      c.corruption_schedule.push_back({s.at("first_cycle").get<std::size_t>(),
                                       s.at("last_cycle").get<std::size_t>(),
                                       s.at("plan").get<MutationPlan>()});
  c.corruption_context = d.corruption_context;
  if (j.contains("corruption_context")) {
    const auto& x = j.at("corruption_context");
    c.corruption_context.fences = x.at("fences").get<Fences>();
    c.corruption_context.constraints = x.at("constraints").get<Constraints>();
    c.corruption_context.scale = x.at("scale").get<double>();
  }
}

SynthStream::SynthStream(SynthConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::stable_sort(cfg_.drift_schedule.begin(), cfg_.drift_schedule.end(),
                   [](const RegimeSwitch& a, const RegimeSwitch& b) { return a.cycle < b.cycle; });
}

std::optional<PumpCycle> SynthStream::next() {
  if (cursor_ >= cfg_.n_cycles) return std::nullopt;
  return generate(cursor_++);
}

PumpCycle SynthStream::generate(std::size_t k) const {
  double lambda = cfg_.lambda;
  double noise = cfg_.noise_std;
  for (const auto& r : cfg_.drift_schedule) {
    if (r.cycle > k) break;
    lambda = r.lambda;
    noise = r.noise_std;
  }

  std::mt19937_64 rng(cfg_.seed * kGolden + k);
  std::normal_distribution<double> z(0.0, 1.0);
  const double lam = std::max(0.0, lambda * (1.0 + cfg_.lambda_jitter * z(rng)));
  const double p0 = cfg_.p0 * (1.0 + cfg_.p0_jitter * z(rng));

  const auto L = cfg_.cycle_len;
  const TimestampNs start = static_cast<TimestampNs>(k) * static_cast<TimestampNs>(L) *
                            kSamplePeriodNs;
  PumpCycle c;
  c.cycle_id = k;
  c.readings.resize(L);
  double label = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < L; ++i) {
    const double t = static_cast<double>(i + 1) / static_cast<double>(L);
    double v = p0 * std::exp(-lam * t);
    if (noise > 0.0) v += noise * z(rng);
    c.readings[i] = {start + static_cast<TimestampNs>(i) * kSamplePeriodNs, v};
    label = std::min(label, v);
  }
  c.label = label;  // from the clean trace; corruption never moves the target

  for (const auto& span : cfg_.corruption_schedule) {
    if (k < span.first_cycle || k > span.last_cycle) continue;
    MutationPlan plan = span.plan;
    for (auto& op : plan.ops) op.seed = op.seed * kGolden + k;
    Window w = make_window(std::move(c.readings), k, k, L);
    w = apply_plan(w, plan, cfg_.corruption_context);
    c.readings = w.readings();
  }
  return c;
}

std::vector<PumpCycle> synth_generate(const SynthConfig& cfg) {
  SynthStream s(cfg);
  std::vector<PumpCycle> out;
  out.reserve(cfg.n_cycles);
  while (auto c = s.next()) out.push_back(std::move(*c));
  return out;
}

Reading parse_csv_row(std::string_view line, std::size_t line_no) {
  line = trim(line);
  const auto comma = line.find(',');
  if (comma == std::string_view::npos) throw MalformedRecordError(line_no, "expected 2 fields");
  const auto ts_s = trim(line.substr(0, comma));
  const auto v_s = trim(line.substr(comma + 1));
  if (v_s.find(',') != std::string_view::npos)
    throw MalformedRecordError(line_no, "expected 2 fields");
  Reading r;
  auto [p, ec] = std::from_chars(ts_s.data(), ts_s.data() + ts_s.size(), r.timestamp_ns);
  if (ts_s.empty() || ec != std::errc() || p != ts_s.data() + ts_s.size())
    throw MalformedRecordError(line_no, "bad timestamp '" + std::string(ts_s) + "'");
  if (!v_s.empty()) {
    double v = 0.0;
    auto [q, ec2] = std::from_chars(v_s.data(), v_s.data() + v_s.size(), v);
    if (ec2 != std::errc() || q != v_s.data() + v_s.size() || !std::isfinite(v))
      throw MalformedRecordError(line_no, "bad value '" + std::string(v_s) + "'");
    r.value = v;
  }
  return r;
}

ReplaySource::ReplaySource(const std::string& path, double speedup)
    : ReplaySource(std::make_unique<std::ifstream>(path), speedup) {
  if (!*in_) throw Error(Errc::NotFound, "cannot open " + path);
}

ReplaySource::ReplaySource(std::unique_ptr<std::istream> in, double speedup)
    : in_(std::move(in)), speedup_(speedup) {}

std::optional<Reading> ReplaySource::next() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_no_;
    const auto t = trim(line);
    if (t.empty()) continue;
    if (line_no_ == 1 && t.rfind("timestamp", 0) == 0) continue;  // header
    Reading r = parse_csv_row(t, line_no_);
    if (std::isfinite(speedup_) && speedup_ > 0.0) {
      if (!first_ts_) {
        first_ts_ = r.timestamp_ns;
        started_ = std::chrono::steady_clock::now();
      } else {
        const auto due = started_ + std::chrono::nanoseconds(static_cast<std::int64_t>(
                                        static_cast<double>(r.timestamp_ns - *first_ts_) /
                                        speedup_));
        std::this_thread::sleep_until(due);
      }
    }
    return r;
  }
  return std::nullopt;
}

std::vector<Reading> read_cycle_csv(const std::string& path) {
  ReplaySource src(path);
  std::vector<Reading> out;
  while (auto r = src.next()) out.push_back(*r);
  return out;
}

void write_cycle_csv(const std::string& path, std::span<const Reading> readings) {
  std::ofstream f(path);
  if (!f) throw Error(Errc::StorageFailure, "cannot write " + path);
  f << "timestamp_ns,value\n";
  char buf[64];
  for (const auto& r : readings) {
    f << r.timestamp_ns << ',';
    if (r.value) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, *r.value);
      f.write(buf, p - buf);
    }
    f << '\n';
  }
  if (!f) throw Error(Errc::StorageFailure, "write failed: " + path);
}

std::vector<std::pair<std::uint64_t, double>> read_labels_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::NotFound, "cannot open " + path);
  std::vector<std::pair<std::uint64_t, double>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    const auto t = trim(line);
    if (t.empty() || (n == 1 && t.rfind("cycle_id", 0) == 0)) continue;
    const auto comma = t.find(',');
    if (comma == std::string_view::npos) throw MalformedRecordError(n, "expected 2 fields");
    const auto a = trim(t.substr(0, comma));
    const auto b = trim(t.substr(comma + 1));
    std::uint64_t id = 0;
    double v = 0.0;
    auto r1 = std::from_chars(a.data(), a.data() + a.size(), id);
    auto r2 = std::from_chars(b.data(), b.data() + b.size(), v);
    if (r1.ec != std::errc() || r1.ptr != a.data() + a.size() || r2.ec != std::errc() ||
        r2.ptr != b.data() + b.size())
      throw MalformedRecordError(n, "bad label row");
    out.emplace_back(id, v);
  }
  return out;
}

void write_labels_csv(const std::string& path,
                      std::span<const std::pair<std::uint64_t, double>> labels) {
  std::ofstream f(path);
  if (!f) throw Error(Errc::StorageFailure, "cannot write " + path);
  f << "cycle_id,label\n";
  char buf[64];
  for (const auto& [id, v] : labels) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    f << id << ',';
    f.write(buf, p - buf);
    f << '\n';
  }
}

void write_cycles(const std::string& dir, std::span<const PumpCycle> cycles) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::uint64_t, double>> labels;
  for (const auto& c : cycles) {
    write_cycle_csv(dir + "/cycle_" + std::to_string(c.cycle_id) + ".csv", c.readings);
    if (c.label) labels.emplace_back(c.cycle_id, *c.label);
  }
  write_labels_csv(dir + "/labels.csv", labels);
}

std::vector<Window> windowize(std::span<const Reading> readings, std::size_t n,
                              std::uint64_t cycle_id, std::uint64_t first_id) {
  if (n == 0) throw Error(Errc::InvalidConfig, "window size must be positive");
  Windowizer wz(n, cycle_id, first_id);
  std::vector<Window> out;
  out.reserve(readings.size() / n + 1);
  for (const auto& r : readings)
    if (auto w = wz.push(r)) out.push_back(std::move(*w));
  if (auto w = wz.flush()) out.push_back(std::move(*w));
  return out;
}

Windowizer::Windowizer(std::size_t n, std::uint64_t cycle_id, std::uint64_t first_id)
    : n_(n), cycle_id_(cycle_id), next_id_(first_id) {
  if (n == 0) throw Error(Errc::InvalidConfig, "window size must be positive");
  buf_.reserve(n);
}

std::optional<Window> Windowizer::push(const Reading& r) {
  if (!buf_.empty() && r.timestamp_ns <= buf_.back().timestamp_ns)
    throw Error(Errc::NonMonotoneTimestamps,
                "timestamp " + std::to_string(r.timestamp_ns) + " after " +
                    std::to_string(buf_.back().timestamp_ns));
  buf_.push_back(r);
  if (buf_.size() < n_) return std::nullopt;
  auto w = make_window(std::exchange(buf_, {}), next_id_++, cycle_id_, n_);
  buf_.reserve(n_);
  return w;
}

std::optional<Window> Windowizer::flush() {
  if (buf_.empty()) return std::nullopt;
  return make_window(std::exchange(buf_, {}), next_id_++, cycle_id_, n_, true);
}

std::size_t FeatureConfig::length() const noexcept {
  return n_buckets + stat_min + stat_max + stat_std + stat_last + stat_slope + f_history;
}

std::string FeatureConfig::schema_id() const {
  std::ostringstream s;
  s << "fv1:b" << n_buckets << ":h" << f_history << ":s" << stat_min << stat_max << stat_std
    << stat_last << stat_slope;
  return s.str();
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  j = nlohmann::json{{"n_buckets", c.n_buckets},   {"f_history", c.f_history},
                     {"stat_min", c.stat_min},     {"stat_max", c.stat_max},
                     {"stat_std", c.stat_std},     {"stat_last", c.stat_last},
                     {"stat_slope", c.stat_slope}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  FeatureConfig d;
  c.n_buckets = j.value("n_buckets", d.n_buckets);
  c.f_history = j.value("f_history", d.f_history);
  c.stat_min = j.value("stat_min", d.stat_min);
  c.stat_max = j.value("stat_max", d.stat_max);
  c.stat_std = j.value("stat_std", d.stat_std);
  c.stat_last = j.value("stat_last", d.stat_last);
  c.stat_slope = j.value("stat_slope", d.stat_slope);
}

FeatureVector featureize(const Window& current, std::span<const double> completed_labels,
                         const FeatureConfig& cfg) {
  if (cfg.n_buckets == 0) throw Error(Errc::InvalidConfig, "n_buckets must be positive");
  const auto& rs = current.readings();
  const std::size_t n = rs.size();
  if (current.present_count() == 0) throw Error(Errc::AllMissingWindow, "no present values");

  double sum = 0.0, mn = std::numeric_limits<double>::infinity(), mx = -mn;
  std::size_t cnt = 0;
  std::optional<double> last;
  // slope of value against reading index over present values
  double sx = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!rs[i].value) continue;
    const double v = *rs[i].value;
    sum += v;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    ++cnt;
    last = v;
    const double x = static_cast<double>(i);
    sx += x;
    sxx += x * x;
    sxy += x * v;
  }
  const double mean = sum / static_cast<double>(cnt);
  double ss = 0.0;
  for (const auto& r : rs)
    if (r.value) ss += (*r.value - mean) * (*r.value - mean);
  const double sd = std::sqrt(ss / static_cast<double>(cnt));

  FeatureVector fv;
  fv.schema = cfg.schema_id();
  fv.values.reserve(cfg.length());
  for (std::size_t b = 0; b < cfg.n_buckets; ++b) {
    const std::size_t lo = b * n / cfg.n_buckets;
    const std::size_t hi = (b + 1) * n / cfg.n_buckets;
    double bs = 0.0;
    std::size_t bc = 0;
    for (std::size_t i = lo; i < hi; ++i)
      if (rs[i].value) {
        bs += *rs[i].value;
        ++bc;
      }
    fv.values.push_back(bc ? bs / static_cast<double>(bc) : mean);
  }
  if (cfg.stat_min) fv.values.push_back(mn);
  if (cfg.stat_max) fv.values.push_back(mx);
  if (cfg.stat_std) fv.values.push_back(sd);
  if (cfg.stat_last) fv.values.push_back(*last);
  if (cfg.stat_slope) {
    const double c = static_cast<double>(cnt);
    const double den = c * sxx - sx * sx;
    fv.values.push_back(den > 0.0 ? (c * sxy - sx * sum) / den : 0.0);
  }

  double pad = 0.0;
  if (!completed_labels.empty())
    pad = std::accumulate(completed_labels.begin(), completed_labels.end(), 0.0) /
          static_cast<double>(completed_labels.size());
  for (std::size_t h = 0; h < cfg.f_history; ++h) {
    if (h < completed_labels.size())
      fv.values.push_back(completed_labels[completed_labels.size() - 1 - h]);
    else
      fv.values.push_back(pad);
  }
  return fv;
}

FeatureVector featureize(const Window& current, std::span<const PumpCycle> history,
                         const FeatureConfig& cfg) {
  std::vector<double> labels;
  labels.reserve(history.size());
  for (const auto& c : history) labels.push_back(c.label ? *c.label : extract_label(c));
  return featureize(current, labels, cfg);
}

}  // namespace dqpipe
