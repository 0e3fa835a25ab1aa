#include "dqpipe/runtime.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dqpipe/error.hpp"

namespace dqpipe {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Count-based dimensions only; these need no unifier and are cheap.
double cleanliness(const Window& w, const ReferenceProfile& p) {
  if (w.present_count() == 0) return -1.0;
  return score_accuracy(w, p) + score_completeness(w) + score_consistency(w, p.constraints);
}

// Up to k windows, cleanest first; ties go to later windows. Result is in
// stream order.
std::vector<Window> pick_clean(std::span<const Window> pool, const ReferenceProfile& p,
                               std::size_t k) {
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!pool[i].partial()) ranked.emplace_back(cleanliness(pool[i], p), i);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second > b.second;
  });
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ranked.size() && idx.size() < k; ++i)
    if (ranked[i].first >= 0.0) idx.push_back(ranked[i].second);
  std::sort(idx.begin(), idx.end());
  std::vector<Window> out;
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

// Fully clean windows spread evenly over the pool, topped up with the
// cleanest of the rest.
std::vector<Window> spread_clean(std::span<const Window> pool, const ReferenceProfile& p,
                                 std::size_t k) {
  std::vector<std::size_t> clean;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!pool[i].partial() && cleanliness(pool[i], p) == 3.0) clean.push_back(i);
  if (clean.size() < k) return pick_clean(pool, p, k);
  std::vector<Window> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) out.push_back(pool[clean[j * clean.size() / k]]);
  return out;
}

}  // namespace

std::string to_string(ScoringMode mode) { return mode == ScoringMode::Direct ? "direct" : "ml"; }

ScoringMode scoring_mode_from_string(const std::string& name) {
  if (name == "direct") return ScoringMode::Direct;
  if (name == "ml") return ScoringMode::Ml;
  throw Error(Errc::InvalidConfig, "unknown scoring mode '" + name + "'");
}

void PipelineConfig::validate() const {
  if (window_size < 2) throw Error(Errc::InvalidConfig, "window_size must be >= 2");
  if (features.n_buckets == 0 || window_size % features.n_buckets != 0)
    throw Error(Errc::InvalidConfig, "n_buckets must divide window_size");
  drift.validate();
  inference.validate();
  scorer.validate();
  if (!(threshold >= 0.0 && threshold <= 100.0))
    throw Error(Errc::InvalidConfig, "threshold must be in [0,100]");
  if (buffer_size == 0) throw Error(Errc::InvalidConfig, "buffer_size must be positive");
  if (!(constraints.min_valid <= constraints.max_valid))
    throw Error(Errc::InvalidConfig, "constraints.min_valid exceeds max_valid");
  if (histogram_bins == 0) throw Error(Errc::InvalidConfig, "histogram_bins must be positive");
  if (corpus_windows == 0 || adapt_corpus_windows == 0)
    throw Error(Errc::InvalidConfig, "corpus window counts must be positive");
}

std::string PipelineConfig::hash() const { return fingerprint(nlohmann::json(*this).dump()); }

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"window_size", c.window_size},
                     {"features", c.features},
                     {"drift", c.drift},
                     {"inference", c.inference},
                     {"scorer", c.scorer},
                     {"threshold", c.threshold},
                     {"buffer_size", c.buffer_size},
                     {"scoring", to_string(c.scoring)},
                     {"constraints", c.constraints},
                     {"histogram_bins", c.histogram_bins},
                     {"corpus_windows", c.corpus_windows},
                     {"adapt_corpus_windows", c.adapt_corpus_windows},
                     {"min_labels", c.min_labels},
                     {"seed", c.seed},
                     {"fsync", c.fsync}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  PipelineConfig d;
  c.window_size = j.value("window_size", d.window_size);
  c.features = j.value("features", d.features);
  c.drift = j.value("drift", d.drift);
  c.inference = j.value("inference", d.inference);
  c.scorer = j.value("scorer", d.scorer);
  c.threshold = j.value("threshold", d.threshold);
  c.buffer_size = j.value("buffer_size", d.buffer_size);
  c.scoring = scoring_mode_from_string(j.value("scoring", to_string(d.scoring)));
  c.constraints = j.value("constraints", d.constraints);
  c.histogram_bins = j.value("histogram_bins", d.histogram_bins);
  c.corpus_windows = j.value("corpus_windows", d.corpus_windows);
  c.adapt_corpus_windows = j.value("adapt_corpus_windows", d.adapt_corpus_windows);
  c.min_labels = j.value("min_labels", d.min_labels);
  c.seed = j.value("seed", d.seed);
  c.fsync = j.value("fsync", d.fsync);
}

PipelineConfig strategy_config(PipelineConfig base, const std::string& strategy, double param) {
  if (strategy == "standard") {
    base.drift.mode = DriftMode::None;
    base.scoring = ScoringMode::Direct;
  } else if (strategy == "active") {
    base.drift.mode = DriftMode::Active;
    base.scoring = ScoringMode::Ml;
    if (param > 0.0) base.drift.tau = param;
  } else if (strategy == "passive") {
    base.drift.mode = DriftMode::Passive;
    base.scoring = ScoringMode::Ml;
    if (param > 0.0) base.drift.w_passive = static_cast<std::size_t>(param);
  } else {
    throw Error(Errc::InvalidConfig, "unknown strategy '" + strategy + "'");
  }
  base.validate();
  return base;
}

std::int64_t monotonic_ns() noexcept {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

nlohmann::json to_event(const PredictionRecord& r) {
  nlohmann::json j = r.deployment;
  j["type"] = r.error ? "error" : "prediction";
  j["window_id"] = r.window_id;
  j["cycle_id"] = r.cycle_id;
  j["t_ingest"] = r.t_ingest;
  j["t_ready"] = r.t_ready;
  j["latency_ns"] = r.latency_ns;
  j["adaptation_triggered"] = r.adaptation_triggered;
  j["adapted"] = r.adapted;
  if (r.dq_score) j["dq_score"] = r.dq_score->value;
  if (r.verdict) j["verdict"] = *r.verdict;
  if (r.error)
    j["error"] = *r.error;
  else
    j["predicted"] = r.predicted_min_pressure;
  return j;
}

InitArtifacts prepare_init(std::span<const PumpCycle> baseline, const PipelineConfig& cfg) {
  std::vector<Window> windows;
  std::vector<double> labels;
  std::uint64_t id = 0;
  for (const auto& c : baseline) {
    if (c.readings.size() < cfg.window_size) continue;
    std::vector<Reading> head(c.readings.begin(),
                              c.readings.begin() + static_cast<std::ptrdiff_t>(cfg.window_size));
    Window w = make_window(std::move(head), id, c.cycle_id, cfg.window_size);
    if (w.present_count() == 0) continue;
    const double label = c.label ? *c.label : extract_label(c);
    windows.push_back(std::move(w));
    labels.push_back(label);
    ++id;
  }
  return prepare_init(windows, labels, cfg);
}

InitArtifacts prepare_init(std::span<const Window> windows, std::span<const double> labels,
                           const PipelineConfig& cfg) {
  cfg.validate();
  if (windows.size() != labels.size())
    throw Error(Errc::LengthMismatch, "one label per baseline window expected");
  std::vector<Window> usable;
  std::vector<double> usable_labels;
  for (std::size_t i = 0; i < windows.size(); ++i)
    if (!windows[i].partial() && windows[i].present_count() > 0) {
      usable.push_back(windows[i]);
      usable_labels.push_back(labels[i]);
    }
  const std::size_t need = std::max<std::size_t>(50, cfg.drift.warmup);
  if (usable.size() < need)
    throw Error(Errc::InsufficientBaseline, "baseline has " + std::to_string(usable.size()) +
                                                " usable windows, need " + std::to_string(need));

  InitArtifacts art;
  art.profile = build_reference_profile(usable, cfg.constraints, cfg.histogram_bins);
  const auto plans = default_plans(cfg.seed);
  const auto chosen = spread_clean(usable, art.profile, cfg.corpus_windows);
  art.corpus = build_corpus_and_fit_unifier(chosen, plans, art.profile);
  art.scorer = std::make_shared<GbdtModel>(train_dq_scorer(art.corpus.rows, cfg.scorer));

  const std::size_t f = cfg.features.f_history;
  const std::size_t first = usable.size() > cfg.buffer_size ? usable.size() - cfg.buffer_size : 0;
  for (std::size_t i = first; i < usable.size(); ++i) {
    const std::size_t lo = i > f ? i - f : 0;
    std::span<const double> hist(usable_labels.data() + lo, i - lo);
    // fewer than f prior labels: pad with the mean of all of them
    auto fv = featureize(usable[i], hist, cfg.features);
    const double score = direct_score(usable[i], art.profile).second.value;
    art.buffer.push_back({std::move(fv.values), usable_labels[i], score, usable[i].id()});
  }
  art.labels = usable_labels;
  const std::size_t k = std::min(cfg.drift.rebase_windows, usable.size());
  art.recent.assign(usable.end() - static_cast<std::ptrdiff_t>(k), usable.end());
  art.next_window_id = usable.back().id() + 1;
  return art;
}

Pipeline::Pipeline(PipelineConfig cfg, Registry& registry)
    : cfg_(std::move(cfg)), registry_(&registry), learner_(cfg_.inference) {
  cfg_.validate();
}

void Pipeline::init(std::span<const PumpCycle> baseline) { init_from(prepare_init(baseline, cfg_)); }

void Pipeline::init_from(const InitArtifacts& art) {
  profile_ = art.profile;
  scorer_ = art.scorer;
  buffer_.clear();
  const std::size_t first =
      art.buffer.size() > cfg_.buffer_size ? art.buffer.size() - cfg_.buffer_size : 0;
  for (std::size_t i = first; i < art.buffer.size(); ++i)
    buffer_.push_back({art.buffer[i], art.buffer[i].score >= cfg_.threshold});
  labels_.clear();
  for (double l : art.labels) {
    labels_.push_back(l);
    if (labels_.size() > cfg_.features.f_history) labels_.pop_front();
  }
  recent_.assign(art.recent.begin(), art.recent.end());
  next_window_id_ = art.next_window_id;
  pending_.clear();
  index_ = 0;
  n_adapt_ = 0;

  std::shared_ptr<const Regressor> model = fit_inference();
  std::map<std::string, std::string> meta{{"trigger", "init"},
                                          {"config_hash", cfg_.hash()},
                                          {"training_rows", std::to_string(buffer_.size())}};
  registry_->put_deployment({{ArtifactKind::ReferenceProfile, nlohmann::json(profile_).dump()},
                             {ArtifactKind::Unifier, nlohmann::json(*profile_.unifier).dump()},
                             {ArtifactKind::DqScorer, scorer_->serialize()},
                             {ArtifactKind::InferenceModel, model->serialize()}},
                            std::move(meta));
  model_ = std::move(model);
}

Deployment Pipeline::deployment() const {
  auto d = registry_->current_deployment();
  if (!d) throw Error(Errc::NotFound, "no deployment registered");
  return *d;
}

std::vector<double> Pipeline::recent_labels() const { return {labels_.begin(), labels_.end()}; }

std::shared_ptr<const Regressor> Pipeline::fit_inference() const {
  FeatureMatrix x(cfg_.features.length());
  std::vector<double> y;
  for (const auto& b : buffer_)
    if (b.accepted) {
      x.push_row(b.row.features);
      y.push_back(b.row.label);
    }
  if (y.empty())
    throw Error(Errc::EmptyTrainingSet,
                "no buffered window meets threshold " + fmt(cfg_.threshold));
  return std::shared_ptr<const Regressor>(learner_.fit(x, y));
}

AdaptationEvent Pipeline::adapt(const std::string& trigger) {
  AdaptationEvent ev;
  ev.trigger = trigger;
  ev.window_id = next_window_id_ == 0 ? 0 : next_window_id_ - 1;
  auto skip = [&](Errc code, std::string detail) {
    ev.skipped_because = code;
    ev.detail = std::move(detail);
    registry_->log_event({{"type", "adaptation_skipped"},
                          {"trigger", trigger},
                          {"window_id", ev.window_id},
                          {"reason", std::string(errc_name(code))},
                          {"detail", ev.detail}});
    return ev;
  };

  const std::size_t need = cfg_.drift.mode == DriftMode::Passive
                               ? std::min(cfg_.drift.rebase_windows, cfg_.drift.w_passive)
                               : cfg_.drift.rebase_windows;
  if (recent_.size() < need)
    return skip(Errc::InsufficientData, std::to_string(recent_.size()) +
                                            " windows since the last rebase, need " +
                                            std::to_string(need));
  if (buffer_.size() < cfg_.min_labels)
    return skip(Errc::InsufficientData, std::to_string(buffer_.size()) +
                                            " labeled cycles buffered, need " +
                                            std::to_string(cfg_.min_labels));
  try {
    std::vector<Window> recent(recent_.begin(), recent_.end());
    ReferenceProfile next = rebase_reference(recent, profile_);
    const auto chosen = pick_clean(recent, next, cfg_.adapt_corpus_windows);
    const auto plans = default_plans(cfg_.seed);
    const auto corpus = build_corpus_and_fit_unifier(chosen, plans, next);
    auto scorer = std::make_shared<GbdtModel>(train_dq_scorer(corpus.rows, cfg_.scorer));
    auto model = fit_inference();
    ev.corpus_rows = corpus.rows.size();
    ev.training_rows = static_cast<std::size_t>(
        std::count_if(buffer_.begin(), buffer_.end(), [](const auto& b) { return b.accepted; }));

    std::map<std::string, std::string> meta{{"trigger", trigger},
                                            {"window_id", std::to_string(ev.window_id)},
                                            {"config_hash", cfg_.hash()},
                                            {"training_rows", std::to_string(ev.training_rows)},
                                            {"corpus_rows", std::to_string(ev.corpus_rows)}};
    ev.deployment = registry_->put_deployment(
        {{ArtifactKind::ReferenceProfile, nlohmann::json(next).dump()},
         {ArtifactKind::Unifier, nlohmann::json(*next.unifier).dump()},
         {ArtifactKind::DqScorer, scorer->serialize()},
         {ArtifactKind::InferenceModel, model->serialize()}},
        std::move(meta));
    profile_ = std::move(next);
    scorer_ = std::move(scorer);
    model_ = std::move(model);
    recent_.clear();
    ++n_adapt_;
    ev.applied = true;
  } catch (const Error& e) {
    if (e.code() == Errc::StorageFailure) throw;
    return skip(e.code(), e.what());
  }
  return ev;
}

PredictionRecord Pipeline::step(const Window& w) {
  if (!initialized()) throw Error(Errc::InvalidConfig, "pipeline not initialized");
  PredictionRecord rec;
  rec.t_ingest = monotonic_ns();
  rec.window_id = w.id();
  rec.cycle_id = w.cycle_id();
  ++index_;
  next_window_id_ = std::max(next_window_id_, w.id() + 1);
  try {
    if (w.partial()) throw Error(Errc::WindowSizeMismatch, "partial window");
    const UnifiedScore score = cfg_.scoring == ScoringMode::Direct
                                   ? direct_score(w, profile_).second
                                   : predict_dq_score(*scorer_, compute_dq_features(w, profile_));
    rec.dq_score = score;
    recent_.push_back(w);
    if (recent_.size() > cfg_.drift.rebase_windows) recent_.pop_front();

    switch (cfg_.drift.mode) {
      case DriftMode::Active: {
        const double d = divergence(w, profile_);
        rec.verdict = detect_active(d, profile_.divergence_history, cfg_.drift.tau,
                                    cfg_.drift.warmup);
        update_history(profile_, d);
        if (rec.verdict->drift) {
          registry_->log_event({{"type", "drift"},
                                {"window_id", w.id()},
                                {"divergence", d},
                                {"threshold", *rec.verdict->threshold},
                                {"quantile_rank", *rec.verdict->quantile_rank},
                                {"history_len", rec.verdict->history_len}});
          rec.adaptation_triggered = true;
        }
        break;
      }
      case DriftMode::Passive:
        rec.adaptation_triggered = passive_due(index_, cfg_.drift.w_passive);
        break;
      case DriftMode::None:
        break;
    }
    if (rec.adaptation_triggered)
      rec.adapted = adapt(to_string(cfg_.drift.mode)).applied;

    auto fv = featureize(w, recent_labels(), cfg_.features);
    rec.predicted_min_pressure = model_->predict(fv.values);
    pending_[w.cycle_id()] = {std::move(fv.values), 0.0, score.value, w.id()};
    while (pending_.size() > 64) pending_.erase(pending_.begin());
  } catch (const Error& e) {
    if (e.code() == Errc::StorageFailure) throw;
    rec.error = e.what();
  }
  rec.t_ready = monotonic_ns();
  rec.latency_ns = rec.t_ready - rec.t_ingest;
  rec.deployment = deployment();
  registry_->log_event(to_event(rec));
  if (on_record) on_record(rec);
  return rec;
}

void Pipeline::observe_label(std::uint64_t cycle_id, double label) {
  labels_.push_back(label);
  if (labels_.size() > cfg_.features.f_history) labels_.pop_front();
  auto it = pending_.find(cycle_id);
  if (it == pending_.end()) return;
  TrainingRow row = std::move(it->second);
  pending_.erase(it);
  row.label = label;
  const bool accepted = row.score >= cfg_.threshold;
  buffer_.push_back({std::move(row), accepted});
  if (buffer_.size() > cfg_.buffer_size) buffer_.pop_front();
}

void Pipeline::save_state(const std::string& path) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : buffer_)
    rows.push_back({{"features", encode_f64_hex(b.row.features)},
                    {"label", b.row.label},
                    {"score", b.row.score},
                    {"window_id", b.row.window_id},
                    {"accepted", b.accepted}});
  nlohmann::json pend = nlohmann::json::array();
  for (const auto& [cycle, r] : pending_)
    pend.push_back({{"cycle_id", cycle},
                    {"features", encode_f64_hex(r.features)},
                    {"score", r.score},
                    {"window_id", r.window_id}});
  nlohmann::json recent = nlohmann::json::array();
  for (const auto& w : recent_) recent.push_back(w);
  nlohmann::json j{{"schema_version", 1},
                   {"config_hash", cfg_.hash()},
                   {"deployment", deployment()},
                   {"profile", profile_},
                   {"buffer", rows},
                   {"pending", pend},
                   {"labels", std::vector<double>(labels_.begin(), labels_.end())},
                   {"recent", recent},
                   {"index", index_},
                   {"adaptations", n_adapt_},
                   {"next_window_id", next_window_id_}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw Error(Errc::StorageFailure, "cannot write " + tmp);
    f << j.dump();
    if (!f) throw Error(Errc::StorageFailure, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error(Errc::StorageFailure, "cannot rename " + tmp);
}

void Pipeline::load_state(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::NotFound, "no pipeline state at " + path);
  const auto j = nlohmann::json::parse(f);
  if (j.at("schema_version").get<int>() != 1)
    throw Error(Errc::SchemaMismatch, "unsupported state schema");
  const auto d = j.at("deployment").get<Deployment>();
  const auto cur = deployment();
  if (d != cur)
    throw Error(Errc::SchemaMismatch, "state belongs to deployment " + std::to_string(d.id) +
                                          ", registry is at " + std::to_string(cur.id));
  profile_ = j.at("profile").get<ReferenceProfile>();
  scorer_ = std::make_shared<GbdtModel>(
      GbdtModel::deserialize(registry_->get(ArtifactKind::DqScorer,
                                            cur.versions.at(ArtifactKind::DqScorer))
                                 .payload));
  model_ = std::shared_ptr<const Regressor>(learner_.load(
      registry_->get(ArtifactKind::InferenceModel, cur.versions.at(ArtifactKind::InferenceModel))
          .payload));
  buffer_.clear();
  for (const auto& r : j.at("buffer"))
    buffer_.push_back({{decode_f64_hex(r.at("features").get<std::string>()),
                        r.at("label").get<double>(), r.at("score").get<double>(),
                        r.at("window_id").get<std::uint64_t>()},
                       r.at("accepted").get<bool>()});
  pending_.clear();
  for (const auto& r : j.at("pending"))
    pending_[r.at("cycle_id").get<std::uint64_t>()] = {
        decode_f64_hex(r.at("features").get<std::string>()), 0.0, r.at("score").get<double>(),
        r.at("window_id").get<std::uint64_t>()};
  const auto labels = j.at("labels").get<std::vector<double>>();
  labels_.assign(labels.begin(), labels.end());
  recent_.clear();
  for (const auto& w : j.at("recent")) recent_.push_back(w.get<Window>());
  index_ = j.at("index").get<std::size_t>();
  n_adapt_ = j.at("adaptations").get<std::size_t>();
  next_window_id_ = j.at("next_window_id").get<std::uint64_t>();
}

PredictionCsv::PredictionCsv(const std::string& path, bool append) {
  const bool fresh = !append || !std::ifstream(path).good();
  out_ = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc);
  if (!*out_) throw Error(Errc::StorageFailure, "cannot write " + path);
  if (fresh)
    *out_ << "window_id,cycle_id,dq_score,divergence,drift,adapted,predicted,deployment_id,"
             "inference_model_version,dq_scorer_version,t_ingest_ns,t_ready_ns,latency_ns,error\n";
}

PredictionCsv::~PredictionCsv() = default;

void PredictionCsv::write(const PredictionRecord& r) {
  auto& o = *out_;
  auto version = [&](ArtifactKind k) {
    auto it = r.deployment.versions.find(k);
    return it == r.deployment.versions.end() ? std::string() : std::to_string(it->second);
  };
  o << r.window_id << ',' << r.cycle_id << ',' << (r.dq_score ? fmt(r.dq_score->value) : "")
    << ',' << (r.verdict ? fmt(r.verdict->divergence) : "") << ','
    << (r.verdict && r.verdict->drift ? 1 : 0) << ',' << (r.adapted ? 1 : 0) << ','
    << (r.error ? "" : fmt(r.predicted_min_pressure)) << ',' << r.deployment.id << ','
    << version(ArtifactKind::InferenceModel) << ',' << version(ArtifactKind::DqScorer) << ','
    << r.t_ingest << ',' << r.t_ready << ',' << r.latency_ns << ',';
  if (r.error) {
    std::string e = *r.error;
    std::replace(e.begin(), e.end(), ',', ';');
    std::replace(e.begin(), e.end(), '\n', ' ');
    o << e;
  }
  o << '\n';
}

std::string handle_frame(Pipeline& p, const std::string& frame) {
  std::istringstream in(frame);
  std::string verb, id_s, arg, extra;
  in >> verb >> id_s >> arg;
  if (verb.empty()) return "ERR empty frame";
  if (arg.empty() || (in >> extra)) return "ERR expected 3 fields";
  std::uint64_t cycle = 0;
  auto [ptr, ec] = std::from_chars(id_s.data(), id_s.data() + id_s.size(), cycle);
  if (ec != std::errc() || ptr != id_s.data() + id_s.size()) return "ERR bad cycle_id";
  try {
    if (verb == "LABEL") {
      double v = 0.0;
      auto [q, ec2] = std::from_chars(arg.data(), arg.data() + arg.size(), v);
      if (ec2 != std::errc() || q != arg.data() + arg.size() || !std::isfinite(v))
        return "ERR bad label";
      p.observe_label(cycle, v);
      return "OK " + id_s;
    }
    if (verb != "PREDICT") return "ERR unknown verb " + verb;
    auto readings = read_cycle_csv(arg);
    const std::size_t n = p.config().window_size;
    if (readings.size() < n)
      return "ERR window has " + std::to_string(readings.size()) + " readings, need " +
             std::to_string(n);
    readings.resize(n);
    const auto rec = p.step(make_window(std::move(readings), p.next_window_id(), cycle, n));
    if (rec.error) return "ERR " + *rec.error;
    const auto mv = rec.deployment.versions.at(ArtifactKind::InferenceModel);
    return id_s + ' ' + fmt(rec.predicted_min_pressure) + ' ' + fmt(rec.dq_score->value) + ' ' +
           std::to_string(mv) + ' ' + std::to_string(rec.latency_ns);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return "ERR " + msg;
  }
}

std::size_t serve_stream(Pipeline& p, std::istream& in, std::ostream& out) {
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out << handle_frame(p, line) << '\n' << std::flush;
    ++n;
  }
  return n;
}

namespace {

bool send_all(int fd, std::string_view s) {
  while (!s.empty()) {
    const auto k = ::send(fd, s.data(), s.size(), MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    s.remove_prefix(static_cast<std::size_t>(k));
  }
  return true;
}

}  // namespace

void serve_tcp(Pipeline& p, const std::string& host, int port, std::size_t max_connections) {
  const int ls = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (ls < 0) throw Error(Errc::StorageFailure, "socket() failed");
  const int one = 1;
  ::setsockopt(ls, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(ls);
    throw Error(Errc::InvalidConfig, "bad listen address " + host);
  }
  if (::bind(ls, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(ls, 8) != 0) {
    ::close(ls);
    throw Error(Errc::StorageFailure, "cannot listen on " + host + ":" + std::to_string(port));
  }
  for (std::size_t served = 0; max_connections == 0 || served < max_connections; ++served) {
    const int fd = ::accept(ls, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    std::string buf;
    char chunk[4096];
    bool open = true;
    while (open) {
      const auto k = ::recv(fd, chunk, sizeof chunk, 0);
      if (k <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(k));
      std::size_t pos;
      while ((pos = buf.find('\n')) != std::string::npos) {
        std::string frame = buf.substr(0, pos);
        buf.erase(0, pos + 1);
        if (!frame.empty() && frame.back() == '\r') frame.pop_back();
        if (!send_all(fd, handle_frame(p, frame) + "\n")) {
          open = false;
          break;
        }
      }
    }
    ::close(fd);
  }
  ::close(ls);
}

}  // namespace dqpipe
