// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dqpipe/bench.hpp"
#include "dqpipe/drift.hpp"
#include "dqpipe/error.hpp"
#include "dqpipe/learn.hpp"
#include "dqpipe/mutate.hpp"
#include "dqpipe/registry.hpp"
#include "dqpipe/runtime.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dqpipe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& why) {
    if (!ok) {
      if (!pass) detail << "; ";
      else detail.str("");
      pass = false;
      detail << why;
    }
  }
};

int failures = 0;

void emit(int id, Verdict& v, double seconds, const std::string& summary) {
  if (!v.pass) ++failures;
  std::cout << "AC" << id << ' ' << (v.pass ? "PASS" : "FAIL") << " (" << std::fixed
            << std::setprecision(1) << seconds << "s) "
            << (v.pass ? summary : v.detail.str() + " | " + summary) << std::endl;
}

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

void ac1() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> len(1, 50), coin(0, 1), small(0, 9);
  std::normal_distribution<double> z(0.0, 1.0);

  std::size_t ks_mismatch = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    const bool ties = coin(rng);
    for (auto& x : a) x = ties ? small(rng) : z(rng);
    for (auto& x : b) x = ties ? small(rng) : z(rng) + 0.3;
    if (ks_statistic(a, b) != oracle::ks(a, b)) ++ks_mismatch;
  }
  v.require(ks_mismatch == 0, std::to_string(ks_mismatch) + " KS mismatches");

  double jsd_err = 0.0;
  std::uniform_int_distribution<int> bins(1, 40);
  std::exponential_distribution<double> ex(1.0);
  for (int t = 0; t < 1000; ++t) {
    const auto b = static_cast<std::size_t>(bins(rng));
    Histogram p{uniform_edges(0.0, 1.0, b), std::vector<double>(b)};
    Histogram q{p.edges, std::vector<double>(b)};
    for (std::size_t i = 0; i < b; ++i) {
      p.mass[i] = small(rng) == 0 ? 0.0 : ex(rng);
      q.mass[i] = small(rng) == 0 ? 0.0 : ex(rng);
    }
    p.mass[0] += 1e-3;
    q.mass[b - 1] += 1e-3;
    const double sp = std::accumulate(p.mass.begin(), p.mass.end(), 0.0);
    const double sq = std::accumulate(q.mass.begin(), q.mass.end(), 0.0);
    for (auto& m : p.mass) m /= sp;
    for (auto& m : q.mass) m /= sq;
    jsd_err = std::max(jsd_err, std::abs(jsd(p, q) - oracle::jsd(p.mass, q.mass)));
  }
  v.require(jsd_err <= 1e-9, "JSD error " + num(jsd_err));

  double load_err = 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<DimensionScores> rows;
    const int n = 5 + t % 60;
    std::array<double, 5> w{};
    for (auto& c : w) c = u(rng);
    for (int i = 0; i < n; ++i) {
      const double common = u(rng);
      std::array<double, 5> a{};
      for (std::size_t k = 0; k < 5; ++k) a[k] = std::clamp(w[k] * common + 0.3 * u(rng), 0.0, 1.0);
      rows.push_back(DimensionScores::from_array(a));
    }
    const auto fit = fit_unifier(rows);
    load_err = std::max(load_err, oracle::loading_distance(fit.loading, oracle::leading_loading(rows)));
  }
  // also the corpus the pipeline actually fits
  const auto ws = dqtest::synth_windows(40, 3);
  auto profile = build_reference_profile(ws, Constraints{0.0, 1200.0});
  const auto corpus = build_corpus_and_fit_unifier(ws, default_plans(7), profile);
  std::vector<DimensionScores> dims;
  for (const auto& r : corpus.rows) dims.push_back(r.dims);
  load_err = std::max(load_err, oracle::loading_distance(profile.unifier->loading,
                                                         oracle::leading_loading(dims)));
  v.require(load_err <= 1e-9, "loading error " + num(load_err));

  const double secs = since(t0);
  v.require(secs < 10.0, "runtime " + num(secs) + "s");
  emit(1, v, secs,
       "1000 KS pairs exact, max JSD err " + num(jsd_err, 3) + ", max loading err " +
           num(load_err, 3));
}

// ---------------------------------------------------------------------------

void ac2() {
  const auto t0 = Clock::now();
  Verdict v;
  const auto ws = dqtest::synth_windows(100, 42);
  const auto profile = build_reference_profile(ws, Constraints{0.0, 1200.0});
  const auto ctx = context_from(profile);
  std::size_t checked = 0, wrong = 0, unclean = 0;
  for (const auto& w : ws) {
    const auto base = direct_dimensions(w, profile);
    if (base.accuracy != 1.0 || base.completeness != 1.0 || base.consistency != 1.0) ++unclean;
    const double n = static_cast<double>(w.size());
    const double np = static_cast<double>(w.present_count());
    for (double rate : {0.1, 0.3, 0.5}) {
      const auto seed = w.id() * 31 + static_cast<std::uint64_t>(rate * 10);
      const auto m = inject_missing(w, rate, seed);
      wrong += score_completeness(m) != 1.0 - std::round(rate * n) / n;
      const auto a = inject_anomalies(w, rate, 2.0, ctx.fences, seed);
      wrong += score_accuracy(a, profile) != 1.0 - std::round(rate * np) / np;
      const auto o = inject_out_of_range(w, rate, ctx.constraints, seed);
      wrong += score_consistency(o, ctx.constraints) != 1.0 - std::round(rate * np) / np;
      checked += 3;
    }
  }
  v.require(unclean == 0, std::to_string(unclean) + " base windows not clean");
  v.require(wrong == 0, std::to_string(wrong) + "/" + std::to_string(checked) + " closed forms off");

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0), val(-500.0, 2500.0);
  std::size_t outside = 0;
  const auto plans = default_plans(3);
  for (int t = 0; t < 10000; ++t) {
    Window w;
    switch (t % 3) {
      case 0: {
        std::vector<std::optional<double>> x(1 + static_cast<std::size_t>(u(rng) * 300));
        const double miss = u(rng);
        for (auto& e : x)
          if (u(rng) >= miss) e = val(rng);
        if (std::none_of(x.begin(), x.end(), [](const auto& e) { return e.has_value(); }))
          x[0] = val(rng);
        w = dqtest::window_of(x);
        break;
      }
      default: {
        auto p = plans[static_cast<std::size_t>(t) % plans.size()];
        for (auto& op : p.ops) op.seed += static_cast<std::uint64_t>(t);
        w = apply_plan(ws[static_cast<std::size_t>(t) % ws.size()], p, ctx);
        if (w.present_count() == 0) continue;
      }
    }
    for (double s : direct_dimensions(w, profile).as_array()) outside += (s < 0.0 || s > 1.0);
  }
  v.require(outside == 0, std::to_string(outside) + " fuzzed scores outside [0,1]");
  emit(2, v, since(t0),
       std::to_string(checked) + " closed-form checks, 10000 fuzzed windows in range");
}

// ---------------------------------------------------------------------------

void ac3() {
  const auto t0 = Clock::now();
  Verdict v;
  PipelineConfig cfg;
  const auto spec = default_stream(1);
  const auto data = materialize(spec, cfg.window_size);
  const auto init = prepare_init(data.baseline, data.baseline_labels, cfg);
  auto rows = init.corpus.rows;
  v.require(rows.size() >= 500, "corpus has " + std::to_string(rows.size()) + " rows");

  std::mt19937_64 rng(2024);
  std::shuffle(rows.begin(), rows.end(), rng);
  const std::size_t cut = rows.size() * 4 / 5;
  const std::vector<CorpusRow> train(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<CorpusRow> test(rows.begin() + static_cast<std::ptrdiff_t>(cut), rows.end());
  const auto scorer = train_dq_scorer(train, cfg.scorer);
  std::vector<double> pred, truth;
  for (const auto& r : test) {
    pred.push_back(predict_dq_score(scorer, r.features).value);
    truth.push_back(r.score.value);
  }
  const auto e = evaluate(pred, truth);
  const double r2 = e.r2.value_or(-1.0);
  v.require(r2 >= 0.90, "held-out R^2 " + num(r2));

  std::vector<double> t_direct, t_ml;
  for (std::size_t i = 0; i < 300; ++i) {
    const auto& w = data.stream[i];
    auto a = Clock::now();
    volatile double d = direct_score(w, init.profile).second.value;
    t_direct.push_back(since(a));
    a = Clock::now();
    volatile double m = predict_dq_score(*init.scorer, compute_dq_features(w, init.profile)).value;
    t_ml.push_back(since(a));
    (void)d;
    (void)m;
  }
  const double ratio = median(t_ml) / median(t_direct);
  v.require(ratio <= 0.25, "ML/direct time ratio " + num(ratio));
  const double secs = since(t0);
  v.require(secs < 120.0, "runtime " + num(secs) + "s");
  emit(3, v, secs,
       std::to_string(rows.size()) + " rows, held-out R^2 " + num(r2) + ", MAE " + num(e.mae) +
           ", median time ratio " + num(ratio, 3) + " (" + num(median(t_ml) * 1e6, 3) + "us vs " +
           num(median(t_direct) * 1e6, 3) + "us)");
}

// ---------------------------------------------------------------------------

void ac4() {
  const auto t0 = Clock::now();
  Verdict v;
  const std::vector<double> taus{0.04, 0.06, 0.08};
  const std::size_t warmup = 20;

  SynthConfig s = default_stream(4).synth;
  s.drift_schedule.clear();
  s.corruption_schedule.clear();
  s.n_cycles = 700;
  std::vector<Window> ws;
  for (const auto& c : synth_generate(s))
    ws.push_back(make_window({c.readings.begin(), c.readings.begin() + 1200}, c.cycle_id,
                             c.cycle_id, 1200));
  const std::span<const Window> base(ws.data(), 100), stream(ws.data() + 100, 600);
  const auto profile = build_reference_profile(base, Constraints{0.0, 1200.0});

  // history evolves the same way for every tau: no adaptation here
  std::vector<double> d(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) d[i] = divergence(stream[i], profile);

  std::map<double, std::set<std::size_t>> alarms;
  std::ostringstream rates;
  for (double tau : taus) {
    std::deque<double> hist;
    std::size_t judged = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto verdict = detect_active(d[i], hist, tau, warmup);
      if (verdict.threshold) ++judged;
      if (verdict.drift) alarms[tau].insert(i);
      hist.push_back(d[i]);
      if (hist.size() > kDivergenceHistoryCap) hist.pop_front();
    }
    const double rate = static_cast<double>(alarms[tau].size()) / static_cast<double>(judged);
    rates << "tau " << tau << ": " << num(rate, 3) << ' ';
    v.require(rate <= tau + 0.02, "false-alarm rate " + num(rate) + " at tau " + num(tau));
  }
  const bool nested = std::includes(alarms[0.06].begin(), alarms[0.06].end(),
                                    alarms[0.04].begin(), alarms[0.04].end()) &&
                      std::includes(alarms[0.08].begin(), alarms[0.08].end(),
                                    alarms[0.06].begin(), alarms[0.06].end());
  v.require(nested, "alarm sets not nested across tau");

  // 2-sigma shift at ten onsets along the stream, each against the history so far
  const double delta = 2.0 * profile.ref_std;
  std::size_t late = 0;
  for (double tau : taus)
    for (std::size_t onset = 100; onset < 600; onset += 50) {
      std::vector<double> hist(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(onset));
      bool hit = false;
      for (std::size_t k = 0; k < 3 && !hit; ++k) {
        const double dk = divergence(inject_shift(stream[onset + k], delta), profile);
        hit = detect_active(dk, hist, tau, warmup).drift;
        hist.push_back(dk);
      }
      late += hit ? 0 : 1;
    }
  v.require(late == 0, std::to_string(late) + "/30 shifts missed within 3 windows");
  const double secs = since(t0);
  v.require(secs < 60.0, "runtime " + num(secs) + "s");
  emit(4, v, secs,
       rates.str() + "| alarms " + std::to_string(alarms[0.04].size()) + " <= " +
           std::to_string(alarms[0.06].size()) + " <= " + std::to_string(alarms[0.08].size()) +
           ", nested, 30/30 shifts caught");
}

// ---------------------------------------------------------------------------

void ac5(const std::string& work) {
  const auto t0 = Clock::now();
  Verdict v;
  PipelineConfig cfg;
  cfg.fsync = false;
  auto spec = default_stream(5);
  spec.synth.n_cycles = spec.baseline_cycles + 437;
  const auto data = materialize(spec, cfg.window_size);
  const auto init = prepare_init(data.baseline, data.baseline_labels, cfg);
  const std::size_t T = data.stream.size();
  std::ostringstream counts;
  for (std::size_t w : {50u, 100u, 200u}) {
    const auto cell = run_cell(data, init, cfg, {"passive", static_cast<double>(w)}, 50.0,
                               work + "/ac5_" + std::to_string(w));
    counts << "w=" << w << ": " << cell.n_adaptations << '/' << T / w << ' ';
    v.require(cell.error.empty(), cell.error);
    v.require(cell.n_adaptations == T / w, "w=" + std::to_string(w) + " gave " +
                                               std::to_string(cell.n_adaptations));
  }
  emit(5, v, since(t0), "T=" + std::to_string(T) + " " + counts.str());
}

// ---------------------------------------------------------------------------

struct GridRun {
  std::vector<CellResult> cells;
  double ac6_seconds = 0.0;
  const CellResult* find(std::uint64_t seed, const std::string& label, double t) const {
    for (const auto& c : cells)
      if (c.seed == seed && c.strategy.label() == label && c.threshold == t) return &c;
    return nullptr;
  }
};

GridRun run_bench(const std::string& work) {
  GridRun g;
  GridConfig cfg;
  cfg.pipeline.fsync = false;
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    const auto seed = cfg.seeds[si];
    auto base = cfg.pipeline;
    base.seed = seed;
    auto t0 = Clock::now();
    const auto data = materialize(default_stream(seed), base.window_size);
    const auto init = prepare_init(data.baseline, data.baseline_labels, base);
    g.ac6_seconds += since(t0);
    const std::size_t repeats = si == 0 ? cfg.latency_repeats : 1;
    for (const auto& s : cfg.strategies)
      for (double t : cfg.thresholds) {
        // only the first seed keeps its stores; later seeds reuse one directory
        const std::string dir = work + "/stores/" +
                                (si == 0 ? s.label() + "_t" + num(t) : std::string("scratch"));
        t0 = Clock::now();
        g.cells.push_back(run_cell_repeated(data, init, base, s, t, dir, repeats));
        if (s.label() == "active_0.08") g.ac6_seconds += since(t0) / static_cast<double>(repeats);
        const auto& c = g.cells.back();
        std::cerr << "  seed " << seed << ' ' << s.label() << " t=" << t << " mae=" << num(c.mae)
                  << " adapt=" << c.n_adaptations << " skipped=" << c.n_skipped
                  << " latency_ms=" << num(static_cast<double>(c.cumulative_latency_ns) / 1e6, 5)
                  << " below=" << num(c.below_threshold, 3)
                  << (c.error.empty() ? "" : " error=" + c.error) << std::endl;
      }
  }
  report({g.cells}, cfg, work);
  return g;
}

void ac6(const GridRun& g) {
  Verdict v;
  std::map<double, std::vector<double>> mae;
  for (const auto& c : g.cells)
    if (c.strategy.label() == "active_0.08") mae[c.threshold].push_back(c.mae);
  std::ostringstream s;
  s << "active_0.08 mean MAE by threshold:";
  for (const auto& [t, m] : mae) s << ' ' << t << '=' << num(mean(m));
  const double m0 = mean(mae[0.0]), m90 = mean(mae[90.0]);
  const double best_mid = std::min(mean(mae[25.0]), mean(mae[50.0]));
  v.require(best_mid < m0, "min(MAE@25, MAE@50) = " + num(best_mid) + " not below MAE@0 = " + num(m0));
  v.require(best_mid < m90, "min(MAE@25, MAE@50) = " + num(best_mid) + " not below MAE@90 = " + num(m90));
  v.require(g.ac6_seconds < 600.0, "runtime " + num(g.ac6_seconds) + "s");
  // the other strategies, for the record only
  std::map<std::string, std::map<double, std::vector<double>>> others;
  for (const auto& c : g.cells)
    if (c.strategy.label() != "active_0.08") others[c.strategy.label()][c.threshold].push_back(c.mae);
  s << " | others:";
  for (const auto& [label, by_t] : others) {
    s << ' ' << label << " [";
    for (const auto& [t, m] : by_t) s << (t == 0.0 ? "" : " ") << num(mean(m));
    s << ']';
  }
  emit(6, v, g.ac6_seconds, s.str());
}

void ac7(const GridRun& g) {
  Verdict v;
  std::ostringstream s;
  for (double t : default_thresholds()) {
    std::vector<double> a, b;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto* act = g.find(seed, "active_0.08", t);
      const auto* std_ = g.find(seed, "standard", t);
      a.push_back(act->mae);
      b.push_back(std_->mae);
      v.require(act->mae < std_->mae, "seed " + std::to_string(seed) + " t=" + num(t) +
                                          ": active " + num(act->mae) + " >= standard " +
                                          num(std_->mae));
    }
    s << "t=" << t << ' ' << num(mean(a)) << " vs " << num(mean(b)) << "; ";
    v.require(mean(a) < mean(b), "mean ordering fails at t=" + num(t));
  }
  emit(7, v, 0.0, "active_0.08 vs standard MAE " + s.str());
}

void ac8(const GridRun& g) {
  Verdict v;
  std::map<std::string, std::vector<double>> by_strategy;
  std::ostringstream s;
  for (const auto& st : default_strategies())
    for (double t : default_thresholds()) {
      const auto* c = g.find(1, st.label(), t);
      by_strategy[st.label()].push_back(static_cast<double>(c->cumulative_latency_ns) / 1e9);
      if (st.name == "active") {
        const auto* ref = g.find(1, "standard", t);
        v.require(c->cumulative_latency_ns < ref->cumulative_latency_ns,
                  st.label() + " t=" + num(t) + " not faster than standard");
      }
      for (std::size_t i = 1; i < c->latency_ns.size(); ++i)
        v.require(c->latency_ns[i] >= 0, "negative window latency");
    }
  for (const auto& [label, lat] : by_strategy) {
    s << label << " [";
    for (std::size_t i = 0; i < lat.size(); ++i) {
      s << (i ? " " : "") << num(lat[i], 3);
      if (i > 0) {
        v.require(lat[i] <= lat[i - 1] * 1.05, label + " latency rises with threshold (" +
                                                   num(lat[i], 4) + "s after " + num(lat[i - 1], 4) + "s)");
      }
    }
    s << "]s ";
  }
  emit(8, v, 0.0, "seed 1 cumulative latency " + s.str());
}

// Replays a store's log without the library's audit: deployments must count
// 1,2,... and move each kind by one, predictions must name the deployment in
// force, and the store directories must hold versions 1..n.
std::string replay_store(const fs::path& root, std::size_t& predictions) {
  std::ifstream f(root / "events.jsonl");
  std::uint64_t seq = 0, dep = 0;
  std::map<std::string, std::uint64_t> versions;
  for (std::string line; std::getline(f, line);) {
    const auto e = nlohmann::json::parse(line);
    if (e.at("seq").get<std::uint64_t>() != seq++) return "seq gap";
    const auto type = e.at("type").get<std::string>();
    if (type == "deployment") {
      if (e.at("deployment_id").get<std::uint64_t>() != ++dep) return "deployment id jump";
      for (const auto& [kind, ver] : e.at("versions").items())
        if (ver.get<std::uint64_t>() != ++versions[kind]) return "version jump in " + kind;
    } else if (type == "prediction" || type == "error") {
      ++predictions;
      if (e.at("deployment_id").get<std::uint64_t>() != dep) return "prediction names stale deployment";
      for (const auto& [kind, ver] : e.at("versions").items())
        if (ver.get<std::uint64_t>() != versions[kind]) return "prediction versions stale";
    }
  }
  for (const auto& [kind, last] : versions) {
    std::set<std::uint64_t> on_disk;
    for (const auto& d : fs::directory_iterator(root / "store" / kind))
      on_disk.insert(std::stoull(d.path().filename().string()));
    if (on_disk.size() != last || *on_disk.begin() != 1 || *on_disk.rbegin() != last)
      return kind + " store not gapless";
  }
  return "";
}

void ac9(const GridRun& g, const std::string& work) {
  const auto t0 = Clock::now();
  Verdict v;
  std::size_t audited = 0;
  for (const auto& c : g.cells) {
    ++audited;
    v.require(c.audit_ok, "audit failed seed " + std::to_string(c.seed) + ' ' + c.strategy.label() +
                              ": " + c.error);
  }
  std::size_t stores = 0, predictions = 0;
  for (const auto& d : fs::directory_iterator(work + "/stores")) {
    if (d.path().filename() == "scratch") continue;
    const auto why = replay_store(d.path(), predictions);
    v.require(why.empty(), d.path().filename().string() + ": " + why);
    ++stores;
  }
  emit(9, v, since(t0),
       std::to_string(audited) + " cells audited, " + std::to_string(stores) +
           " seed-1 stores replayed independently (" + std::to_string(predictions) + " records)");
}

// ---------------------------------------------------------------------------

void ac10() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> rows(8, 40), cols(1, 4), depth(1, 4), leaf(1, 4);
  std::size_t rises = 0;
  double leaf_err = 0.0, base_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = rows(rng), d = cols(rng);
    FeatureMatrix x(static_cast<std::size_t>(d));
    std::vector<double> y;
    for (int i = 0; i < n; ++i) {
      std::vector<double> r(static_cast<std::size_t>(d));
      for (auto& e : r) e = u(rng);
      x.push_row(r);
      y.push_back(std::sin(r[0]) * 3.0 + u(rng));
    }
    const GbdtParams p{60, depth(rng), 0.05 + 0.9 * (u(rng) + 2.0) / 4.0, leaf(rng), 0};
    const auto m = train_gbdt(x, y, p);
    const auto replay = oracle::replay_boosting(m, x, y);
    for (std::size_t r = 1; r < replay.mse.size(); ++r)
      rises += replay.mse[r] > replay.mse[r - 1] + 1e-12;
    leaf_err = std::max(leaf_err, replay.worst_leaf_error);

    const auto m0 = train_gbdt(x, y, {0, 3, 0.1, 1, 0});
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> probe(static_cast<std::size_t>(d), 0.5);
    base_err = std::max(base_err, std::abs(m0.predict(probe) - ybar));
  }
  v.require(rises == 0, std::to_string(rises) + " rounds raised training MSE");
  v.require(leaf_err <= 1e-9, "leaf values off the mean residual by " + num(leaf_err));
  v.require(base_err <= 1e-12, "rounds=0 model off the mean by " + num(base_err));

  double interp = 0.0;
  for (int t = 0; t < 10; ++t) {
    FeatureMatrix x(2);
    std::vector<double> y;
    for (int i = 0; i < 25; ++i) {
      std::vector<double> r{u(rng), u(rng)};
      x.push_row(r);
      y.push_back(r[0] * r[0] - r[1]);
    }
    const auto m = train_gbdt(x, y, {300, 8, 1.0, 1, 0});
    for (std::size_t i = 0; i < y.size(); ++i) interp = std::max(interp, std::abs(m.predict(x.row(i)) - y[i]));
  }
  v.require(interp <= 1e-6, "interpolation error " + num(interp));
  emit(10, v, since(t0),
       "50 datasets: MSE never rises, leaf err " + num(leaf_err, 3) + ", interpolation err " +
           num(interp, 3));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string work = argc > 1 ? argv[1] : (fs::temp_directory_path() / "dqpipe-acceptance").string();
  fs::remove_all(work);
  fs::create_directories(work);
  const std::vector<std::pair<int, std::function<void()>>> quick{
      {1, ac1}, {2, ac2}, {3, ac3}, {4, ac4}, {5, [&] { ac5(work); }}};
  auto guarded = [](int id, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      Verdict v;
      v.require(false, std::string("exception: ") + e.what());
      emit(id, v, 0.0, "");
    }
  };
  for (const auto& [id, fn] : quick) guarded(id, fn);

  std::cerr << "bench grid: 5 seeds x 7 strategies x 5 thresholds" << std::endl;
  GridRun grid;
  try {
    grid = run_bench(work);
  } catch (const std::exception& e) {
    std::cerr << "bench failed: " << e.what() << std::endl;
  }
  if (grid.cells.size() == 175) {
    guarded(6, [&] { ac6(grid); });
    guarded(7, [&] { ac7(grid); });
    guarded(8, [&] { ac8(grid); });
    guarded(9, [&] { ac9(grid, work); });
  } else {
    for (int id : {6, 7, 8, 9}) {
      Verdict v;
      v.require(false, "bench grid incomplete");
      emit(id, v, 0.0, "");
    }
  }
  guarded(10, ac10);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : "all criteria passed")
            << std::endl;
  return failures ? 1 : 0;
}
