#include "dqpipe/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dqpipe/error.hpp"
#include "dqpipe/mutate.hpp"

namespace dqpipe {

void FeatureMatrix::push_row(std::span<const double> values) {
  if (cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) {
    throw Error(Errc::DimensionMismatch, "row has " + std::to_string(values.size()) +
                                             " columns, matrix has " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
}

void GbdtParams::validate() const {
  if (rounds < 0) throw Error(Errc::InvalidConfig, "gbdt rounds must be >= 0");
  if (max_depth < 1) throw Error(Errc::InvalidConfig, "gbdt max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw Error(Errc::InvalidConfig, "gbdt learning_rate must lie in (0,1]");
  }
  if (min_leaf < 1) throw Error(Errc::InvalidConfig, "gbdt min_leaf must be >= 1");
}

void to_json(nlohmann::json& j, const GbdtParams& p) {
  j = nlohmann::json{{"rounds", p.rounds},
                     {"max_depth", p.max_depth},
                     {"learning_rate", p.learning_rate},
                     {"min_leaf", p.min_leaf},
                     {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, GbdtParams& p) {
  GbdtParams d;
  p.rounds = j.value("rounds", d.rounds);
  p.max_depth = j.value("max_depth", d.max_depth);
  p.learning_rate = j.value("learning_rate", d.learning_rate);
  p.min_leaf = j.value("min_leaf", d.min_leaf);
  p.seed = j.value("seed", d.seed);
  p.validate();
}

double RegressionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

double GbdtModel::predict_partial(std::span<const double> x, std::size_t rounds) const {
  if (x.size() != width) {
    throw Error(Errc::DimensionMismatch, "model expects " + std::to_string(width) +
                                             " features, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  const std::size_t n = std::min(rounds, trees.size());
  for (std::size_t t = 0; t < n; ++t) sum += trees[t].predict(x);
  return base_prediction + params.learning_rate * sum;
}

double GbdtModel::predict(std::span<const double> x) const {
  return predict_partial(x, trees.size());
}

namespace {

nlohmann::json node_to_json(const RegressionTree& tree, int i) {
  const auto& n = tree.nodes[static_cast<std::size_t>(i)];
  if (n.feature < 0) return nlohmann::json{{"leaf", n.value}};
  return nlohmann::json{{"feature", n.feature},
                        {"threshold", n.threshold},
                        {"left", node_to_json(tree, n.left)},
                        {"right", node_to_json(tree, n.right)}};
}

int node_from_json(const nlohmann::json& j, RegressionTree& tree) {
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    tree.nodes[static_cast<std::size_t>(idx)].value = j.at("leaf").get<double>();
    return idx;
  }
  const int feature = j.at("feature").get<int>();
  const double threshold = j.at("threshold").get<double>();
  const int left = node_from_json(j.at("left"), tree);
  const int right = node_from_json(j.at("right"), tree);
  auto& n = tree.nodes[static_cast<std::size_t>(idx)];
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  return idx;
}

}  // namespace

std::string GbdtModel::serialize() const {
  nlohmann::json trees_json = nlohmann::json::array();
  for (const auto& t : trees) trees_json.push_back(node_to_json(t, 0));
  nlohmann::json j{{"schema_version", 1},
                   {"model", "gbdt"},
                   {"params", params},
                   {"n_features", width},
                   {"base_prediction", base_prediction},
                   {"training_config_hash", training_config_hash},
                   {"trees", std::move(trees_json)}};
  return j.dump();
}

GbdtModel GbdtModel::deserialize(const std::string& payload) {
  const auto j = nlohmann::json::parse(payload);
  if (j.at("schema_version").get<int>() != 1 || j.at("model").get<std::string>() != "gbdt") {
    throw Error(Errc::SchemaMismatch, "not a gbdt model document");
  }
  GbdtModel m;
  m.params = j.at("params").get<GbdtParams>();
  m.width = j.at("n_features").get<std::size_t>();
  m.base_prediction = j.at("base_prediction").get<double>();
  m.training_config_hash = j.value("training_config_hash", std::string{});
  for (const auto& t : j.at("trees")) {
    RegressionTree tree;
    node_from_json(t, tree);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

namespace {

struct SplitSearch {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Per-node running state while sweeping one feature's global sort order.
struct SweepState {
  std::size_t left_n = 0;
  double left_sum = 0.0;
  double last = -std::numeric_limits<double>::infinity();
};

struct RowState {
  int slot;
  double r;
};

}  // namespace

GbdtModel train_gbdt(const FeatureMatrix& x, std::span<const double> y, const GbdtParams& params) {
  params.validate();
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  if (n == 0 || y.empty()) throw Error(Errc::EmptyTrainingSet, "no training rows");
  if (n != y.size()) {
    throw Error(Errc::DimensionMismatch, std::to_string(n) + " rows but " +
                                             std::to_string(y.size()) + " labels");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "non-finite label");
  }

  // column-major copy and one global sort order per feature
  std::vector<std::vector<double>> cols(f, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double v = x.at(r, c);
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "non-finite feature value");
      cols[c][r] = v;
    }
  }
  std::vector<std::vector<std::uint32_t>> order(f, std::vector<std::uint32_t>(n));
  for (std::size_t c = 0; c < f; ++c) {
    std::iota(order[c].begin(), order[c].end(), 0U);
    std::stable_sort(order[c].begin(), order[c].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return cols[c][a] < cols[c][b]; });
  }
  std::vector<std::vector<double>> sorted(f, std::vector<double>(n));
  for (std::size_t c = 0; c < f; ++c) {
    for (std::size_t p = 0; p < n; ++p) sorted[c][p] = cols[c][order[c][p]];
  }
  std::vector<RowState> rows(n);
  std::vector<double> inv(n + 1, 0.0);
  for (std::size_t k = 1; k <= n; ++k) inv[k] = 1.0 / static_cast<double>(k);

  GbdtModel model;
  model.params = params;
  model.width = f;
  model.training_config_hash =
      fingerprint(nlohmann::json(params).dump() + ":" + std::to_string(f));
  model.base_prediction = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  model.trees.reserve(static_cast<std::size_t>(params.rounds));

  const auto min_leaf = static_cast<std::size_t>(params.min_leaf);
  std::vector<double> pred(n, model.base_prediction);
  std::vector<double> residual(n);
  std::vector<int> node_of(n);

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - pred[i];
    std::fill(node_of.begin(), node_of.end(), 0);

    RegressionTree tree;
    tree.nodes.emplace_back();
    std::vector<int> frontier{0};

    for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
      // slot[node] -> index into frontier, -1 when the node is not being split
      std::vector<int> slot(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
      }
      std::vector<std::size_t> count(frontier.size(), 0);
      std::vector<double> total(frontier.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const int s = slot[static_cast<std::size_t>(node_of[i])];
        if (s < 0) continue;
        ++count[static_cast<std::size_t>(s)];
        total[static_cast<std::size_t>(s)] += residual[i];
      }

      // Maximise L^2/nl + R^2/nr; the parent term is constant per node.
      std::vector<SplitSearch> best(frontier.size());
      std::vector<SweepState> state(frontier.size());
      for (std::size_t i = 0; i < n; ++i) {
        rows[i] = {slot[static_cast<std::size_t>(node_of[i])], residual[i]};
      }
      for (std::size_t c = 0; c < f; ++c) {
        std::fill(state.begin(), state.end(), SweepState{});
        const double* sv = sorted[c].data();
        const std::uint32_t* ord = order[c].data();
        for (std::size_t p = 0; p < n; ++p) {
          const RowState rs = rows[ord[p]];
          if (rs.slot < 0) continue;
          auto& st = state[static_cast<std::size_t>(rs.slot)];
          const double v = sv[p];
          if (v > st.last && st.left_n >= min_leaf) {
            const std::size_t nk = count[static_cast<std::size_t>(rs.slot)];
            const std::size_t right_n = nk - st.left_n;
            if (right_n >= min_leaf) {
              const double right_sum = total[static_cast<std::size_t>(rs.slot)] - st.left_sum;
              const double q = st.left_sum * st.left_sum * inv[st.left_n] +
                               right_sum * right_sum * inv[right_n];
              auto& b = best[static_cast<std::size_t>(rs.slot)];
              if (b.feature < 0 || q > b.gain) {
                double thr = st.last + (v - st.last) / 2.0;
                if (!(thr < v)) thr = st.last;
                b = {q, static_cast<int>(c), thr};
              }
            }
          }
          ++st.left_n;
          st.left_sum += rs.r;
          st.last = v;
        }
      }
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        if (best[s].feature >= 0) {
          best[s].gain -= total[s] * total[s] / static_cast<double>(count[s]);
        }
      }

      std::vector<int> next;
      for (std::size_t s = 0; s < frontier.size(); ++s) {
        const int node = frontier[s];
        const auto& b = best[s];
        if (b.feature < 0 || !(b.gain > 1e-12)) continue;
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& nd = tree.nodes[static_cast<std::size_t>(node)];
        nd.feature = b.feature;
        nd.threshold = b.threshold;
        nd.left = left;
        nd.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& nd = tree.nodes[static_cast<std::size_t>(node_of[i])];
        if (nd.feature >= 0) {
          node_of[i] = cols[static_cast<std::size_t>(nd.feature)][i] <= nd.threshold ? nd.left
                                                                                      : nd.right;
        }
      }
      frontier = std::move(next);
    }

    // leaf values: mean residual of the rows that land there
    std::vector<double> sum(tree.nodes.size(), 0.0);
    std::vector<std::size_t> cnt(tree.nodes.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[static_cast<std::size_t>(node_of[i])] += residual[i];
      ++cnt[static_cast<std::size_t>(node_of[i])];
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (tree.nodes[k].feature < 0 && cnt[k] > 0) {
        tree.nodes[k].value = sum[k] / static_cast<double>(cnt[k]);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] += params.learning_rate * tree.nodes[static_cast<std::size_t>(node_of[i])].value;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::unique_ptr<Regressor> GbdtLearner::fit(const FeatureMatrix& x,
                                            std::span<const double> y) const {
  return std::make_unique<GbdtModel>(train_gbdt(x, y, params_));
}

std::unique_ptr<Regressor> GbdtLearner::load(const std::string& payload) const {
  return std::make_unique<GbdtModel>(GbdtModel::deserialize(payload));
}

DqFeatures compute_dq_features(const Window& w, const ReferenceProfile& profile) {
  std::vector<double> values;
  values.reserve(w.size());
  const auto& edges = profile.ref_hist.edges;
  std::vector<std::size_t> counts(profile.ref_hist.bins(), 0);
  double sum = 0.0;
  double sum_sq = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::size_t outside = 0;
  for (const auto& r : w.readings()) {
    if (!r.value) continue;
    const double v = *r.value;
    values.push_back(v);
    sum += v;
    sum_sq += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    if (v < profile.constraints.min_valid || v > profile.constraints.max_valid) ++violations;
    if (v < profile.fences.low || v > profile.fences.high) ++outside;
    ++counts[bin_index(edges, v)];
  }
  if (values.empty()) {
    throw Error(Errc::AllMissingWindow, "window " + std::to_string(w.id()) + " has no values");
  }
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  const double var = std::max(sum_sq / n - mean * mean, 0.0);

  // binned KS against the reference histogram's cumulative mass
  double ks = 0.0;
  double cum_window = 0.0;
  double cum_ref = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    cum_window += static_cast<double>(counts[b]) / n;
    cum_ref += profile.ref_hist.mass[b];
    ks = std::max(ks, std::abs(cum_window - cum_ref));
  }

  auto order_stat = [&](double q) {
    const auto k = static_cast<std::size_t>(q * static_cast<double>(values.size() - 1));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
  };
  const double first = values.front();
  const double last = values.back();
  const double median = order_stat(0.5);
  const double q1 = order_stat(0.25);
  const double q3 = order_stat(0.75);

  DqFeatures f;
  f.values = {mean,
              std::sqrt(var),
              lo,
              hi,
              median,
              q1,
              q3,
              static_cast<double>(w.size() - values.size()) / static_cast<double>(w.size()),
              static_cast<double>(violations) / n,
              static_cast<double>(outside) / n,
              ks,
              last - first};
  return f;
}

std::vector<TrainingRow> filter_by_quality(std::span<const TrainingRow> rows, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 100.0)) {
    throw Error(Errc::InvalidConfig, "acceptability threshold must lie in [0,100]");
  }
  std::vector<TrainingRow> kept;
  kept.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.score >= threshold) kept.push_back(r);
  }
  return kept;
}

GbdtModel train_dq_scorer(std::span<const CorpusRow> corpus, const GbdtParams& params) {
  if (corpus.size() < 50) {
    throw Error(Errc::DegenerateCorpus, "dq scorer needs >= 50 rows, got " +
                                            std::to_string(corpus.size()));
  }
  FeatureMatrix x(kDqFeatureCount);
  std::vector<double> y;
  y.reserve(corpus.size());
  for (const auto& r : corpus) {
    x.push_row(r.features.values);
    y.push_back(r.score.value);
  }
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  if (!(*mx > *mn)) throw Error(Errc::DegenerateCorpus, "corpus labels have no spread");
  return train_gbdt(x, y, params);
}

UnifiedScore predict_dq_score(const Regressor& scorer, const DqFeatures& f) {
  return UnifiedScore{std::clamp(scorer.predict(f.values), 0.0, 100.0)};
}

EvalResult evaluate(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw Error(Errc::LengthMismatch, "evaluate needs equal non-zero lengths");
  }
  const double n = static_cast<double>(labels.size());
  double abs_err = 0.0;
  double ss_res = 0.0;
  const double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double e = preds[i] - labels[i];
    abs_err += std::abs(e);
    ss_res += e * e;
    ss_tot += (labels[i] - mean) * (labels[i] - mean);
  }
  EvalResult r;
  r.mae = abs_err / n;
  const bool constant = std::all_of(labels.begin(), labels.end(),
                                    [&](double v) { return v == labels.front(); });
  if (!constant) r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

}  // namespace dqpipe
