#include <doctest.h>

#include <random>

#include "dqpipe/drift.hpp"
#include "dqpipe/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dqpipe;

TEST_CASE("divergence of resampled and disjoint windows") {
  const auto ws = dqtest::gaussian_windows(101, 1200, 500.0, 10.0, 17);
  const auto profile =
      build_reference_profile(std::span<const Window>(ws.data(), 1), Constraints{0, 1200});
  for (std::size_t i = 1; i < ws.size(); ++i) {
    const double d = divergence(ws[i], profile);
    CHECK(d <= 0.05);
    CHECK(d >= 0.0);
  }
  std::vector<std::optional<double>> far(1200, 5000.0);
  const double d = divergence(dqtest::window_of(far), profile);
  CHECK(d >= 0.95);
  CHECK(d <= 1.0);
}

TEST_CASE("detect_active reference cases") {
  const std::vector<double> flat(20, 0.1);
  CHECK(detect_active(0.5, flat, 0.05).drift);
  CHECK_FALSE(detect_active(0.1, flat, 0.05).drift);

  std::vector<double> ramp;
  for (int i = 1; i <= 20; ++i) ramp.push_back(0.01 * i);
  const auto v = detect_active(0.21, ramp, 0.04);
  REQUIRE(v.threshold);
  CHECK(*v.threshold == doctest::Approx(0.20));
  CHECK(v.drift);

  const auto warm = detect_active(9.0, std::vector<double>(19, 0.1), 0.05);
  CHECK_FALSE(warm.drift);
  CHECK_FALSE(warm.threshold.has_value());
}

TEST_CASE("nearest-rank threshold matches a sorting oracle") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> h(static_cast<std::size_t>(1 + t % 97));
    for (auto& x : h) x = u(rng);
    for (double tau : {0.04, 0.05, 0.06, 0.08, 0.5}) {
      CHECK(nearest_rank_threshold(h, tau) == oracle::nearest_rank(h, tau));
    }
  }
}

TEST_CASE("history cap") {
  ReferenceProfile p;
  update_history(p, 0.5);
  CHECK(p.divergence_history.size() == 1);
  for (int i = 0; i < 1000; ++i) update_history(p, i);
  CHECK(p.divergence_history.size() == 1000);
  CHECK(p.divergence_history.front() == 0.0);
  CHECK(p.divergence_history.back() == 999.0);
}

TEST_CASE("passive schedule") {
  CHECK(passive_due(50, 50));
  CHECK_FALSE(passive_due(49, 50));
  for (std::size_t w : {50u, 100u, 200u}) {
    std::size_t count = 0;
    for (std::size_t i = 1; i <= 1234; ++i) count += passive_due(i, w) ? 1 : 0;
    CHECK(count == 1234 / w);
  }
}

TEST_CASE("rebase adopts the new regime") {
  const auto old_ws = dqtest::gaussian_windows(10, 1200, 500.0, 10.0, 1);
  const auto new_ws = dqtest::gaussian_windows(11, 1200, 540.0, 10.0, 2, 100);
  auto old = build_reference_profile(old_ws, Constraints{0, 1200});
  old.divergence_history = {0.1, 0.2, 0.3};
  const auto next = rebase_reference(std::span<const Window>(new_ws.data(), 10), old);
  CHECK(divergence(new_ws[10], next) < divergence(new_ws[10], old));
  CHECK(next.constraints == old.constraints);
  CHECK(next.divergence_history.empty());
  CHECK_FALSE(detect_active(0.9, next.divergence_history, 0.04).drift);
}

TEST_CASE("drift config validation") {
  DriftConfig c;
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.w_passive = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.mode = DriftMode::Passive;
  CHECK(nlohmann::json(c).get<DriftConfig>() == c);
}
