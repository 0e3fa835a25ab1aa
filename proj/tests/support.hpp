#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "dqpipe/datamodel.hpp"
#include "dqpipe/dqscore.hpp"
#include "dqpipe/ingest.hpp"

namespace dqtest {

inline std::vector<dqpipe::Reading> readings(const std::vector<std::optional<double>>& values,
                                             dqpipe::TimestampNs t0 = 0) {
  std::vector<dqpipe::Reading> out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out.push_back({t0 + static_cast<dqpipe::TimestampNs>(i) * dqpipe::kSamplePeriodNs, values[i]});
  return out;
}

inline dqpipe::Window window_of(const std::vector<std::optional<double>>& values,
                                std::uint64_t id = 0) {
  return dqpipe::make_window(readings(values), id, id, values.size());
}

/// Gaussian windows around a fixed level; stand-in for one stationary regime.
inline std::vector<dqpipe::Window> gaussian_windows(std::size_t count, std::size_t n, double mean,
                                                    double sd, std::uint64_t seed,
                                                    std::uint64_t first_id = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(mean, sd);
  std::vector<dqpipe::Window> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<std::optional<double>> v(n);
    for (auto& x : v) x = z(rng);
    auto r = readings(v, static_cast<dqpipe::TimestampNs>(first_id + k) * 1'000'000'000'000);
    out.push_back(dqpipe::make_window(std::move(r), first_id + k, first_id + k, n));
  }
  return out;
}

/// First window of each clean synthetic cycle.
inline std::vector<dqpipe::Window> synth_windows(std::size_t count, std::uint64_t seed,
                                                 std::size_t n = 1200) {
  dqpipe::SynthConfig cfg;
  cfg.n_cycles = count;
  cfg.seed = seed;
  cfg.window_size = n;
  std::vector<dqpipe::Window> out;
  for (const auto& c : dqpipe::synth_generate(cfg)) {
    std::vector<dqpipe::Reading> r(c.readings.begin(), c.readings.begin() + n);
    out.push_back(dqpipe::make_window(std::move(r), c.cycle_id, c.cycle_id, n));
  }
  return out;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("dqpipe-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

}  // namespace dqtest
