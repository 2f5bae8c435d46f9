#include <doctest.h>

#include "dcreg/error.hpp"
#include "dcreg/inference.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace dcreg;
using testing::rec;

namespace {

Dataset doubled(const Dataset& d) {
  std::vector<SubjectRecord> recs = d.records();
  recs.insert(recs.end(), d.records().begin(), d.records().end());
  return validate_dataset(std::move(recs), d.names());
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("sandwich matches the robust logistic covariance without censoring") {
  const auto d = read_csv_file(testing::data_path("uncensored.csv"));
  const auto g = fit_kaplan_meier(d);
  const double t0 = 25.0;
  oracle::Matrix x;
  oracle::Vector y;
  for (const auto& r : d.records()) {
    if (!(t0 >= r.v)) continue;
    x.push_back({1.0, r.z[0], r.z[1]});
    y.push_back(r.u <= t0 ? 1.0 : 0.0);
  }
  const auto ref = oracle::irls_logistic(x, y);
  for (Approach a : {Approach::A, Approach::B}) {
    const auto est = solve(a, t0, d, g);
    REQUIRE(est.converged);
    const auto inf = sandwich_variance(a, est.theta, t0, d, g);
    // the sandwich centers the per-subject terms; their mean is zero at the root
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(inf.covariance(i, j) - ref.robust_cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) <
              1e-6 * std::max(1.0, std::abs(inf.covariance(i, j))));
  }
}

TEST_CASE("duplicating every subject halves the covariance") {
  const auto d = testing::toy_dataset(400, 21);
  const auto dd = doubled(d);
  const auto g = fit_stratified_ecdf(d, {});
  const auto g2 = fit_stratified_ecdf(dd, {});
  for (Approach a : {Approach::A, Approach::B}) {
    const auto e1 = solve(a, 30.0, d, g);
    const auto e2 = solve(a, 30.0, dd, g2);
    REQUIRE(e1.converged);
    REQUIRE(e2.converged);
    CHECK((e1.theta - e2.theta).cwiseAbs().maxCoeff() < 1e-10);
    const auto c1 = sandwich_variance(a, e1.theta, 30.0, d, g).covariance;
    const auto c2 = sandwich_variance(a, e2.theta, 30.0, dd, g2).covariance;
    CHECK((c2 - 0.5 * c1).cwiseAbs().maxCoeff() < 1e-10 * c1.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("identical subjects give zero covariance") {
  const auto d = validate_dataset({rec(30, 1, 10, {0.5}), rec(30, 1, 10, {0.5})});
  const CensoringValues g{{1.0, 1.0}, {1.0, 1.0}};
  // a one-covariate design with a single distinct x is singular; use intercept-only terms
  const auto d0 = validate_dataset({rec(30, 1, 10, {}), rec(30, 1, 10, {})});
  Eigen::VectorXd theta(1);
  theta << 0.3;
  const auto inf = sandwich_variance(EstimatingFunction(Approach::A, 35.0, d0, g), theta);
  CHECK(inf.covariance(0, 0) == 0.0);
  CHECK(inf.se[0] == 0.0);
  CHECK_THROWS_AS(sandwich_variance(EstimatingFunction(Approach::A, 35.0, d, g), Eigen::VectorXd::Zero(2)), Error);
}

TEST_CASE("sandwich covariance is symmetric positive semi-definite") {
  const auto d = testing::toy_dataset(700, 22);
  const auto g = fit_cox_censoring(d, false);
  for (Approach a : {Approach::A, Approach::B, Approach::IM}) {
    const auto est = solve(a, 28.0, d, g);
    REQUIRE(est.converged);
    const auto cov = sandwich_variance(a, est.theta, 28.0, d, g).covariance;
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("plug-in efficiency difference") {
  SUBCASE("zero without censoring") {
    const auto d = read_csv_file(testing::data_path("uncensored.csv"));
    const auto g = fit_kaplan_meier(d);
    const auto est = solve(Approach::A, 27.0, d, g);
    const auto av = av_difference(est.theta, 27.0, d, g);
    CHECK(av.diff.cwiseAbs().maxCoeff() == 0.0);
    CHECK((av.gamma_a - av.gamma_b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches the direct formula") {
    const auto d = testing::toy_dataset(500, 23);
    const auto g = fit_stratified_ecdf(d, {});
    const auto est = solve(Approach::A, 33.0, d, g);
    const auto av = av_difference(est.theta, 33.0, d, g);
    CHECK((av.diff - av.diff.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const double n = static_cast<double>(d.n());
    const auto wa = EstimatingFunction(Approach::A, 33.0, d, g).workspace(est.theta);
    const auto wb = EstimatingFunction(Approach::B, 33.0, d, g).workspace(est.theta);
    const Eigen::MatrixXd ga_inv = (wa.jacobian / n).inverse();
    const Eigen::MatrixXd sa = wa.terms.transpose() * wa.terms / n, sb = wb.terms.transpose() * wb.terms / n;
    const Eigen::MatrixXd want = ga_inv * (sa - sb) * ga_inv.transpose() / n;
    CHECK((av.diff - want).cwiseAbs().maxCoeff() < 1e-12 * want.cwiseAbs().maxCoeff());
    CHECK((av.gamma_b * n - wb.jacobian).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("normal quantile and Wald interval") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normal_quantile(0.05) == doctest::Approx(-1.644853626951472).epsilon(1e-14));
  CHECK_THROWS_AS(normal_quantile(1.0), Error);

  Eigen::VectorXd est(2), se(2);
  est << 1.0, -0.4;
  se << 0.5, 0.0;
  const auto ci = wald_ci(est, se);
  CHECK(ci.lo[0] == doctest::Approx(0.020).epsilon(1e-3));
  CHECK(ci.hi[0] == doctest::Approx(1.980).epsilon(1e-3));
  CHECK(ci.lo[1] == -0.4);
  CHECK(ci.hi[1] == -0.4);
  CHECK_THROWS_AS(wald_ci(est, se, 1.5), Error);
  CHECK_THROWS_AS(wald_ci(est, Eigen::VectorXd::Zero(1)), Error);
}

TEST_CASE("bootstrap is reproducible and independent of the thread count") {
  const auto d = testing::toy_dataset(300, 24);
  CensoringSpec spec;
  BootstrapOptions opt;
  opt.replicates = 40;
  opt.seed = 99;
  opt.jobs = 1;
  const auto one = bootstrap_se(Approach::A, 30.0, d, spec, opt);
  opt.jobs = 4;
  const auto four = bootstrap_se(Approach::A, 30.0, d, spec, opt);
  CHECK(one.replicates + one.failures == 40);
  CHECK((one.covariance - four.covariance).cwiseAbs().maxCoeff() == 0.0);
  opt.seed = 100;
  const auto other = bootstrap_se(Approach::A, 30.0, d, spec, opt);
  CHECK((one.covariance - other.covariance).cwiseAbs().maxCoeff() > 0.0);

  // grid call gives the same numbers as the single-age call
  const Approach aps[] = {Approach::B, Approach::A};
  const double ages[] = {25.0, 30.0};
  opt.seed = 99;
  const auto grid = bootstrap_se_grid(aps, ages, d, spec, opt);
  CHECK((grid[1][1].covariance - one.covariance).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bootstrap agrees with the sandwich without censoring") {
  const auto d = read_csv_file(testing::data_path("uncensored.csv"));
  CensoringSpec spec;
  spec.method = CensoringMethod::KaplanMeier;
  BootstrapOptions opt;
  opt.replicates = 500;
  opt.seed = 7;
  const auto boot = bootstrap_se(Approach::A, 25.0, d, spec, opt);
  const auto g = fit_kaplan_meier(d);
  const auto est = solve(Approach::A, 25.0, d, g);
  const auto sw = sandwich_variance(Approach::A, est.theta, 25.0, d, g);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(boot.se[k] / sw.se[k] - 1.0) < 0.15);
}

TEST_CASE("frozen censoring reuses the full-data weights") {
  const auto d = read_csv_file(testing::data_path("small.csv"));
  CensoringSpec spec;
  BootstrapOptions opt;
  opt.replicates = 30;
  opt.freeze_censoring = true;
  const auto frozen = bootstrap_se(Approach::B, 30.0, d, spec, opt);
  opt.freeze_censoring = false;
  const auto refit = bootstrap_se(Approach::B, 30.0, d, spec, opt);
  CHECK(frozen.se.size() == 3);
  CHECK((frozen.covariance - refit.covariance).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("too many failed replicates") {
  // one subject alone in the top stratum: most resamples leave it empty
  std::vector<SubjectRecord> recs;
  for (int i = 0; i < 40; ++i) recs.push_back(rec(20.0 + (i % 13), i % 3 ? 1 : 0, 5.0, {0.1 + 0.005 * i}));
  recs.push_back(rec(25.0, 1, 5.0, {0.9}));
  const auto d = validate_dataset(recs);
  CensoringSpec spec;
  spec.strata.cutpoints = {0.5};
  BootstrapOptions opt;
  opt.replicates = 50;
  try {
    bootstrap_se(Approach::A, 26.0, d, spec, opt);
    FAIL("expected TooManyFailures");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooManyFailures);
  }
  opt.replicates = 1;
  CHECK_THROWS_AS(bootstrap_se(Approach::A, 26.0, d, spec, opt), Error);
}

}  // TEST_SUITE
