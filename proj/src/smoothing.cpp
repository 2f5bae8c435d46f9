#include "dcreg/smoothing.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "dcreg/error.hpp"

namespace dcreg {

void SmoothingSpec::validate(std::size_t m) const {
  if (!(span > 0.0 && span <= 1.0)) throw Error(ErrorCode::InvalidParameter, "loess: span must lie in (0, 1]");
  if (degree != 1 && degree != 2) throw Error(ErrorCode::InvalidParameter, "loess: degree must be 1 or 2");
  if (m < static_cast<std::size_t>(degree) + 2)
    throw Error(ErrorCode::InsufficientPoints, "loess: need at least degree + 2 points");
  const auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(m) - 1e-12));
  // the farthest point of each window gets zero tricube weight
  if (k < static_cast<std::size_t>(degree) + 2)
    throw Error(ErrorCode::InsufficientPoints, "loess: span covers fewer than degree + 2 points");
}

std::vector<double> loess(std::span<const double> t, std::span<const double> y, const SmoothingSpec& spec) {
  const std::size_t m = t.size();
  if (y.size() != m) throw Error(ErrorCode::InconsistentDimension, "loess: grid and values differ in length");
  spec.validate(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw Error(ErrorCode::NonFiniteValue, "loess: non-finite input");
    if (i > 0 && !(t[i] > t[i - 1])) throw Error(ErrorCode::InvalidParameter, "loess: grid must be strictly increasing");
  }
  const auto k = static_cast<std::size_t>(std::ceil(spec.span * static_cast<double>(m) - 1e-12));
  const int q = spec.degree + 1;

  std::vector<double> out(m);
  std::vector<double> dist(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Nearest k points form a contiguous window on a sorted grid.
    std::size_t lo = i, hi = i + 1;
    while (hi - lo < k) {
      if (lo == 0) ++hi;
      else if (hi == m) --lo;
      else if (t[i] - t[lo - 1] <= t[hi] - t[i]) --lo;
      else ++hi;
    }
    double dmax = 0.0;
    for (std::size_t j = lo; j < hi; ++j) dmax = std::max(dmax, std::abs(t[j] - t[i]));

    const auto w = static_cast<Eigen::Index>(hi - lo);
    Eigen::MatrixXd a(w, q);
    Eigen::VectorXd b(w);
    for (std::size_t j = lo; j < hi; ++j) {
      const double d = t[j] - t[i];
      const double r = dmax > 0.0 ? std::abs(d) / dmax : 0.0;
      const double tri = r < 1.0 ? std::pow(1.0 - r * r * r, 3) : 0.0;
      const double sw = std::sqrt(tri);
      const auto row = static_cast<Eigen::Index>(j - lo);
      double pw = 1.0;
      for (int c = 0; c < q; ++c, pw *= d) a(row, c) = sw * pw;
      b[row] = sw * y[j];
    }
    // Centered at t[i], the intercept is the fitted value.
    out[i] = a.colPivHouseholderQr().solve(b)[0];
  }
  return out;
}

}  // namespace dcreg
