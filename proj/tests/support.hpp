#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "ivsurv/rng.hpp"
#include "ivsurv/survival_data.hpp"

namespace testgen {

using ivsurv::Observation;
using ivsurv::Rng;
using ivsurv::SurvivalDataset;

inline double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Random binary-IV dataset with integer follow-up times in 1..tau and every
// (z, a) cell populated.
inline SurvivalDataset random_binary(Rng& rng, std::size_t n, std::size_t q, int tau, double censor_p = 0.3) {
  std::normal_distribution<double> nd;
  SurvivalDataset d;
  d.q = q;
  d.tau = tau;
  d.iv_kind = ivsurv::IvKind::Binary;
  d.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Observation& o = d.rows[i];
    o.x0.resize(q);
    for (auto& v : o.x0) v = nd(rng);
    o.z = ivsurv::uniform01(rng) < expit(0.3 * o.x0[0]) ? 1.0 : 0.0;
    o.a = ivsurv::uniform01(rng) < expit(-0.5 + 1.5 * o.z + 0.4 * o.x0[0]) ? 1 : 0;
    o.time = 1.0 + std::floor(ivsurv::uniform01(rng) * (tau + 5));
    o.r = ivsurv::uniform01(rng) < censor_p ? 0 : 1;
  }
  // pin one row per cell so every stratum exists
  for (std::size_t c = 0; c < 4 && c < n; ++c) {
    d.rows[c].z = static_cast<double>(c / 2);
    d.rows[c].a = static_cast<int>(c % 2);
    d.rows[c].r = 1;
  }
  return d;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * ivsurv::uniform01(rng);
  return v;
}

}  // namespace testgen
