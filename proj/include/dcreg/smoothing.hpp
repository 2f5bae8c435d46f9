#pragma once

#include <span>
#include <vector>

namespace dcreg {

struct SmoothingSpec {
  double span = 0.5;  // fraction of the grid used in each local fit
  int degree = 2;     // 1 or 2

  void validate(std::size_t m) const;
};

/// Local polynomial regression with tricube weights over the ceil(span * m)
/// nearest grid points. No robustness iterations.
std::vector<double> loess(std::span<const double> t, std::span<const double> y, const SmoothingSpec& spec);

}  // namespace dcreg
