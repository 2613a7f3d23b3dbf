#pragma once

// Shared fixtures for the unit tests: small plate models and seeded random
// data.

#include <cmath>
#include <random>
#include <vector>

#include "tlsm/dataops.hpp"
#include "tlsm/wavesim.hpp"

namespace testing {

inline tlsm::wavesim::MaterialModel2D small_plate(double cell = 0.25e-3) {
  tlsm::wavesim::MaterialModel2D m;
  m.width = 0.03;
  m.depth = 0.012;
  m.cell = cell;
  m.density = 2730.0;
  m.c_long = 6580.0;
  m.c_shear = 3211.0;
  m.sponge_cells = 12;
  return m;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline tlsm::dataops::WaveformBlock random_block(std::size_t n_m, std::size_t n_i,
                                                 std::size_t n_t, std::mt19937_64& rng,
                                                 double dt = 1e-7) {
  tlsm::wavesim::ArrayGeometry a;
  for (std::size_t m = 0; m < n_m; ++m) a.receivers.push_back(1e-3 * static_cast<double>(m + 1));
  for (std::size_t i = 0; i < n_i; ++i) a.sources.push_back(1.5e-3 * static_cast<double>(i + 1));
  auto b = tlsm::dataops::WaveformBlock::zeros(tlsm::dataops::BlockKind::scattered, a,
                                               {dt, n_t});
  b.values = random_vector(b.values.size(), rng);
  return b;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += b[k] * b[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace testing
