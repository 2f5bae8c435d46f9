#include <doctest.h>

#include "dcreg/error.hpp"
#include "dcreg/smoothing.hpp"
#include "oracles.hpp"

using namespace dcreg;

namespace {

std::vector<double> grid(double from, double to, double step) {
  std::vector<double> g;
  for (double t = from; t <= to + 1e-9; t += step) g.push_back(t);
  return g;
}

// Brute-force local fit at t[i]: sort all points by distance, keep the
// nearest k, tricube weights, weighted normal equations in raw powers of t.
double local_fit(const std::vector<double>& t, const std::vector<double>& y, std::size_t i, double span, int degree) {
  const std::size_t m = t.size();
  const auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(m) - 1e-12));
  std::vector<std::size_t> idx(m);
  for (std::size_t j = 0; j < m; ++j) idx[j] = j;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(t[a] - t[i]) < std::abs(t[b] - t[i]);
  });
  idx.resize(k);
  double h = 0.0;
  for (std::size_t j : idx) h = std::max(h, std::abs(t[j] - t[i]));
  const std::size_t q = static_cast<std::size_t>(degree) + 1;
  oracle::Matrix xtwx = oracle::zeros(q, q);
  oracle::Matrix xtwy = oracle::zeros(q, 1);
  for (std::size_t j : idx) {
    const double r = std::abs(t[j] - t[i]) / h;
    const double w = r < 1.0 ? std::pow(1.0 - r * r * r, 3) : 0.0;
    for (std::size_t a = 0; a < q; ++a) {
      xtwy[a][0] += w * std::pow(t[j], static_cast<double>(a)) * y[j];
      for (std::size_t b = 0; b < q; ++b)
        xtwx[a][b] += w * std::pow(t[j], static_cast<double>(a)) * std::pow(t[j], static_cast<double>(b));
    }
  }
  const auto coef = oracle::multiply(oracle::inverse(xtwx), xtwy);
  double fit = 0.0;
  for (std::size_t a = 0; a < q; ++a) fit += coef[a][0] * std::pow(t[i], static_cast<double>(a));
  return fit;
}

}  // namespace

TEST_SUITE("smoothing") {

TEST_CASE("polynomials of the local degree are reproduced") {
  const auto t = grid(17, 40, 1);
  std::vector<double> lin, quad;
  for (double x : t) {
    lin.push_back(-2.0 + 0.3 * x);
    quad.push_back(1.0 - 0.2 * x + 0.01 * x * x);
  }
  for (double span : {0.3, 0.5, 0.8, 1.0}) {
    const auto s1 = loess(t, lin, {span, 1});
    const auto s2 = loess(t, quad, {span, 2});
    const auto s21 = loess(t, lin, {span, 2});
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(std::abs(s1[i] - lin[i]) < 1e-10);
      CHECK(std::abs(s2[i] - quad[i]) < 1e-10);
      CHECK(std::abs(s21[i] - lin[i]) < 1e-10);
    }
  }
}

TEST_CASE("constant input stays constant") {
  const auto t = grid(13, 40, 0.5);
  const std::vector<double> y(t.size(), -0.75);
  for (int degree : {1, 2})
    for (double x : loess(t, y, {0.4, degree})) CHECK(std::abs(x + 0.75) < 1e-12);
}

TEST_CASE("agrees with a brute-force local regression") {
  const auto t = grid(17, 40, 1);
  std::vector<double> y;
  for (double x : t) y.push_back(std::sin(x / 3.0) + 0.1 * std::cos(7.0 * x));
  for (int degree : {1, 2})
    for (double span : {0.3, 0.5, 0.75}) {
      const auto s = loess(t, y, {span, degree});
      for (std::size_t i = 0; i < t.size(); ++i) CHECK(s[i] == doctest::Approx(local_fit(t, y, i, span, degree)).epsilon(1e-8));
    }
}

TEST_CASE("shifting the grid does not change the fit") {
  const auto t = grid(17, 40, 1);
  std::vector<double> shifted, y;
  for (double x : t) {
    shifted.push_back(x + 100.0);
    y.push_back(std::exp(-0.1 * x) * std::sin(x));
  }
  const auto a = loess(t, y, {0.5, 2});
  const auto b = loess(shifted, y, {0.5, 2});
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
}

TEST_CASE("invalid input") {
  const std::vector<double> t{1, 2, 3}, y{1, 2, 3};
  try {
    loess(t, y, {1.0, 2});
    FAIL("expected InsufficientPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientPoints);
  }
  const auto g = grid(1, 10, 1);
  const std::vector<double> v(g.size(), 1.0);
  CHECK_THROWS_AS(loess(g, v, {0.2, 2}), Error);  // 2 points per window
  CHECK_THROWS_AS(loess(g, v, {0.0, 2}), Error);
  CHECK_THROWS_AS(loess(g, v, {1.5, 2}), Error);
  CHECK_THROWS_AS(loess(g, v, {0.5, 3}), Error);
  CHECK_THROWS_AS(loess(g, std::vector<double>(3, 1.0), {0.5, 2}), Error);
  std::vector<double> bad = v;
  bad[4] = NAN;
  CHECK_THROWS_AS(loess(g, bad, {0.5, 2}), Error);
  std::vector<double> unsorted = g;
  std::swap(unsorted[2], unsorted[3]);
  CHECK_THROWS_AS(loess(unsorted, v, {0.5, 2}), Error);
}

}  // TEST_SUITE
