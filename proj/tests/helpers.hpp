#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dcreg/data.hpp"

namespace testing {

inline dcreg::SubjectRecord rec(double u, int delta, double v, std::vector<double> z,
                                std::optional<double> c = std::nullopt) {
  dcreg::SubjectRecord r;
  r.u = u;
  r.delta = delta;
  r.v = v;
  r.z = std::move(z);
  r.c = c;
  return r;
}

inline std::string data_path(const std::string& name) { return std::string(DCREG_TEST_DATA) + "/" + name; }

// Doubly censored toy data: V in [0, 20], T = V + Weibull, C = V + 5 + Weibull,
// two covariates (continuous, binary). With `censored` false every event is observed.
inline dcreg::Dataset toy_dataset(std::size_t n, unsigned seed, bool censored = true, bool with_c = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<dcreg::SubjectRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = unif(rng), z2 = unif(rng) < 0.4 ? 1.0 : 0.0;
    const double v = 20.0 * z1;
    const double t = v + 18.0 * std::pow(-std::log(1.0 - unif(rng)), 1.0 / 2.5) * std::exp(-0.4 * z2 + 0.3 * z1);
    const double c = censored ? v + 5.0 + 20.0 * std::pow(-std::log(1.0 - unif(rng)), 1.0 / 3.0) *
                                              std::exp(-0.3 * z2)
                              : 1e9;
    dcreg::SubjectRecord r;
    r.delta = t <= c ? 1 : 0;
    r.u = std::min(t, c);
    r.v = v;
    r.z = {z1, z2};
    if (with_c) r.c = c;
    recs.push_back(r);
  }
  return dcreg::validate_dataset(std::move(recs), {"z1", "z2"});
}

}  // namespace testing
