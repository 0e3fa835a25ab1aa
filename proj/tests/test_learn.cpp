#include <doctest.h>

#include <random>

#include "dqpipe/error.hpp"
#include "dqpipe/learn.hpp"
#include "dqpipe/mutate.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dqpipe;

namespace {

FeatureMatrix column(const std::vector<double>& xs) {
  FeatureMatrix m(1);
  for (double x : xs) m.push_row(std::vector<double>{x});
  return m;
}

}  // namespace

TEST_CASE("zero rounds predicts the label mean") {
  const auto x = column({1, 2, 3, 4});
  const std::vector<double> y{1, 2, 3, 10};
  const auto m = train_gbdt(x, y, {0, 3, 0.1, 1, 0});
  CHECK(m.predict(std::vector<double>{-50.0}) == doctest::Approx(4.0));
  CHECK(m.trees.empty());
}

TEST_CASE("constant labels are reproduced exactly") {
  const auto x = column({1, 2, 3, 4, 5, 6});
  const std::vector<double> y(6, 2.5);
  const auto m = train_gbdt(x, y, {20, 3, 0.1, 1, 0});
  for (double q : {-1.0, 3.3, 99.0}) CHECK(m.predict(std::vector<double>{q}) == 2.5);
}

TEST_CASE("boosting on y = x^2 replays stagewise") {
  std::vector<double> xs, y;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(i * 0.25);
    y.push_back(xs.back() * xs.back());
  }
  const auto x = column(xs);
  const auto m = train_gbdt(x, y, {200, 3, 0.1, 1, 0});
  const auto replay = oracle::replay_boosting(m, x, y);
  CHECK(replay.worst_leaf_error <= 1e-9);
  for (std::size_t r = 1; r < replay.mse.size(); ++r)
    CHECK(replay.mse[r] <= replay.mse[r - 1] + 1e-12);
  // the model's own partial sums agree with the replay
  for (std::size_t r : {0u, 1u, 50u, 200u}) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = y[i] - m.predict_partial(x.row(i), r);
      s += e * e;
    }
    CHECK(s / static_cast<double>(y.size()) == doctest::Approx(replay.mse[r]).epsilon(1e-9));
  }
}

TEST_CASE("interpolating model recovers training labels") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  FeatureMatrix x(3);
  std::vector<double> y;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> row{u(rng), u(rng), u(rng)};
    x.push_row(row);
    y.push_back(std::sin(3 * row[0]) + row[1] * row[2]);
  }
  const auto m = train_gbdt(x, y, {400, 8, 1.0, 1, 0});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(m.predict(x.row(i)) - y[i]) <= 1e-6);
  CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), Error);
}

TEST_CASE("model serialization round-trip") {
  const auto x = column({1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<double> y{1, 4, 9, 16, 25, 36, 49, 64};
  const auto m = train_gbdt(x, y, {15, 2, 0.3, 1, 0});
  const auto back = GbdtModel::deserialize(m.serialize());
  CHECK(back.serialize() == m.serialize());
  CHECK(m.training_config_hash.size() == 16);
  CHECK(back.training_config_hash == m.training_config_hash);
  CHECK(train_gbdt(x, y, {15, 2, 0.3, 1, 0}).training_config_hash == m.training_config_hash);
  CHECK(train_gbdt(x, y, {16, 2, 0.3, 1, 0}).training_config_hash != m.training_config_hash);
  for (double q : {0.5, 4.5, 9.0})
    CHECK(back.predict(std::vector<double>{q}) == m.predict(std::vector<double>{q}));
  GbdtLearner learner({15, 2, 0.3, 1, 0});
  const auto fitted = learner.fit(x, y);
  CHECK(learner.load(fitted->serialize())->predict(std::vector<double>{3.0}) ==
        fitted->predict(std::vector<double>{3.0}));
}

TEST_CASE("filter_by_quality is inclusive") {
  std::vector<TrainingRow> rows;
  for (double s : {10.0, 30.0, 60.0, 95.0}) rows.push_back({{}, 0.0, s, 0});
  CHECK(filter_by_quality(rows, 50.0).size() == 2);
  CHECK(filter_by_quality(rows, 30.0).size() == 3);
  CHECK(filter_by_quality(rows, 30.0).front().score == 30.0);
}

TEST_CASE("evaluate reference values") {
  const std::vector<double> labels{2, 4};
  const auto e = evaluate(std::vector<double>{1, 2}, labels);
  CHECK(e.mae == doctest::Approx(1.5));
  REQUIRE(e.r2);
  CHECK(*e.r2 == doctest::Approx(-1.5));
  const auto perfect = evaluate(labels, labels);
  CHECK(perfect.mae == 0.0);
  CHECK(*perfect.r2 == 1.0);
  CHECK(*evaluate(std::vector<double>{3, 3}, labels).r2 == doctest::Approx(0.0));
  CHECK_FALSE(evaluate(std::vector<double>{1, 2}, std::vector<double>{5, 5}).r2.has_value());
  CHECK_THROWS_AS(evaluate(std::vector<double>{1}, labels), Error);
}

TEST_CASE("dq scorer is deterministic and clamped") {
  const auto ws = dqtest::synth_windows(20, 6);
  auto profile = build_reference_profile(ws, Constraints{0.0, 1200.0});
  const auto corpus = build_corpus_and_fit_unifier(ws, default_plans(7), profile);
  const GbdtParams p{30, 3, 0.1, 5, 0};
  const auto a = train_dq_scorer(corpus.rows, p);
  CHECK(a == train_dq_scorer(corpus.rows, p));
  DqFeatures wild;
  wild.values.fill(1e9);
  const double s = predict_dq_score(a, wild).value;
  CHECK(s >= 0.0);
  CHECK(s <= 100.0);
  CHECK_THROWS_AS(train_dq_scorer(std::span<const CorpusRow>(corpus.rows.data(), 10), p), Error);
}
