#pragma once

#include <random>

#include "aqmqs/fluid_model.hpp"

namespace aqmqs::testing {

// Three-source router used throughout the worked example.
inline NetworkConfig three_source_config() {
  NetworkConfig cfg;
  cfg.capacity = 2500.0;
  cfg.buffer_max = 400.0;
  cfg.target_queue = 100.0;
  cfg.sources = {{10, 0.11, 0.025}, {10, 0.21, 0.05}, {10, 0.31, 0.075}};
  return cfg;
}

inline NetworkConfig toy_config() {
  NetworkConfig cfg;
  cfg.capacity = 1000.0;
  cfg.buffer_max = 200.0;
  cfg.target_queue = 50.0;
  cfg.sources = {{1, 0.1, 0.05}};
  return cfg;
}

inline NetworkConfig random_config(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> cap(100.0, 1e4), tp(0.01, 0.5), frac(0.0, 1.0);
  std::uniform_int_distribution<int> eta(1, 20);
  NetworkConfig cfg;
  cfg.capacity = cap(rng);
  cfg.buffer_max = 50.0 + 500.0 * frac(rng);
  cfg.target_queue = cfg.buffer_max * (0.1 + 0.8 * frac(rng));
  for (int i = 0; i < n; ++i) {
    const double p = tp(rng);
    cfg.sources.push_back({eta(rng), p, p * frac(rng)});
  }
  return cfg;
}

}  // namespace aqmqs::testing
