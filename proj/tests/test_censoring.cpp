#include <doctest.h>

#include <random>

#include "dcreg/censoring.hpp"
#include "dcreg/cox.hpp"
#include "dcreg/error.hpp"
#include "dcreg/forest.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace dcreg;
using testing::rec;

namespace {

Dataset with_c(const std::vector<double>& c, const std::vector<double>& z1) {
  std::vector<SubjectRecord> recs;
  for (std::size_t i = 0; i < c.size(); ++i) recs.push_back(rec(c[i], 0, 0.0, {z1[i]}, c[i]));
  return validate_dataset(recs);
}

std::vector<double> grid(double lo, double hi, int m) {
  std::vector<double> out;
  for (int k = 0; k < m; ++k) out.push_back(lo + (hi - lo) * k / (m - 1));
  return out;
}

double marginal_ecdf(const Dataset& d, double t) {
  double k = 0;
  for (const auto& r : d.records()) k += *r.c >= t;
  return k / static_cast<double>(d.n());
}

}  // namespace

TEST_SUITE("censoring") {

TEST_CASE("single-stratum ECDF counts values at or above t") {
  StrataSpec one;
  one.cutpoints.clear();
  const auto g = fit_stratified_ecdf(with_c({1, 2, 3, 4}, {0, 0, 0, 0}), one);
  const auto r = rec(1, 0, 0, {0.0}, 1.0);
  CHECK(g.survival_at(2.5, r) == 0.5);
  CHECK(g.survival_at(1.0, r) == 1.0);
  CHECK(g.survival_at(2.0, r) == 0.75);  // tie at t counts as surviving

  const auto g3 = fit_stratified_ecdf(with_c({10, 20, 30}, {0, 0, 0}), one);
  CHECK(g3.survival_at(20.0, r) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("default strata split z1 at quartiles") {
  StrataSpec s;
  CHECK(s.n_strata() == 4);
  CHECK(s.stratum_of(0.0) == 0);
  CHECK(s.stratum_of(0.25) == 1);
  CHECK(s.stratum_of(0.74) == 2);
  CHECK(s.stratum_of(1.0) == 3);

  const auto d = with_c({5, 6, 7, 8, 9, 10, 11, 12}, {0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9});
  const auto g = fit_stratified_ecdf(d, s);
  // stratum 3 holds C = {11, 12}
  CHECK(g.survival_at(11.5, rec(1, 0, 0, {0.85}, 1.0)) == 0.5);
  CHECK(g.survival_at(11.5, rec(1, 0, 0, {0.1}, 1.0)) == CensoringModel::kSurvivalFloor);

  const auto sparse = with_c({5, 6}, {0.1, 0.9});
  try {
    fit_stratified_ecdf(sparse, s);
    FAIL("expected EmptyStratum");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyStratum);
  }
}

TEST_CASE("without c every observed event censors C; all events gives G = 1") {
  std::vector<SubjectRecord> recs;
  for (double u : {3.0, 5.0, 5.0, 8.0, 11.0}) recs.push_back(rec(u, 1, 0, {0.5}));
  const auto d = validate_dataset(recs);
  const auto km = fit_kaplan_meier(d);
  for (double t : {0.0, 3.0, 5.0, 10.0, 11.0}) CHECK(km.survival_at(t, d[0]) == 1.0);
}

TEST_CASE("Kaplan-Meier matches hand computation with ties") {
  const std::vector<double> time{2, 3, 3, 3, 5, 7, 7, 8, 10, 12};
  const std::vector<int> ev{1, 1, 0, 1, 0, 1, 1, 0, 1, 0};
  const auto km = StepSurvival::kaplan_meier(time, ev);
  for (double t : {0.0, 2.0, 2.5, 3.0, 3.5, 5.0, 7.0, 7.5, 9.0, 10.0, 11.0, 13.0})
    CHECK(km.at(t) == doctest::Approx(oracle::kaplan_meier_at(time, ev, t)).epsilon(1e-14));
  // first factor by hand: 1 - 1/10 at t = 2, then 1 - 2/9 at t = 3
  CHECK(km.at(3.5) == doctest::Approx(0.9 * 7.0 / 9.0).epsilon(1e-14));

  const auto d = testing::toy_dataset(300, 5, true, false);
  const auto g = fit_kaplan_meier(d);
  std::vector<double> u;
  std::vector<int> obs;
  for (const auto& r : d.records()) {
    u.push_back(r.u);
    obs.push_back(1 - r.delta);
  }
  for (double t : grid(0, 60, 41)) CHECK(g.survival_at(t, d[0]) == doctest::Approx(std::max(oracle::kaplan_meier_at(u, obs, t), 1e-6)).epsilon(1e-12));
}

TEST_CASE("Cox partial likelihood and score against brute force") {
  const auto d = testing::toy_dataset(60, 11);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(d.n()), 2);
  oracle::Matrix xo;
  std::vector<double> time;
  std::vector<int> ev;
  for (std::size_t i = 0; i < d.n(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = d[i].z[0];
    x(static_cast<Eigen::Index>(i), 1) = d[i].z[1];
    xo.push_back(d[i].z);
    // coarse rounding creates ties
    time.push_back(std::round(*d[i].c));
    ev.push_back(1);
  }
  ev[3] = ev[7] = 0;
  const Eigen::Vector2d beta(0.4, -0.7);
  const auto cs = cox_score(x, time, ev, beta);
  CHECK(cs.loglik == doctest::Approx(oracle::cox_loglik(xo, time, ev, {0.4, -0.7})).epsilon(1e-11));
  const double h = 1e-5;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> bp{0.4, -0.7}, bm{0.4, -0.7};
    bp[static_cast<std::size_t>(k)] += h;
    bm[static_cast<std::size_t>(k)] -= h;
    const double fd = (oracle::cox_loglik(xo, time, ev, bp) - oracle::cox_loglik(xo, time, ev, bm)) / (2 * h);
    CHECK(cs.score[k] == doctest::Approx(fd).epsilon(1e-6));
    // information = -d score / d beta
    Eigen::Vector2d ep = beta, em = beta;
    ep[k] += h;
    em[k] -= h;
    const Eigen::VectorXd dscore = (cox_score(x, time, ev, ep).score - cox_score(x, time, ev, em).score) / (2 * h);
    for (int j = 0; j < 2; ++j) CHECK(-dscore[j] == doctest::Approx(cs.information(j, k)).epsilon(1e-6));
  }

  const auto fit = fit_cox(x, time, ev);
  CHECK(fit.converged);
  const auto at = cox_score(x, time, ev, fit.beta);
  CHECK(at.score.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("Cox score at zero is the log-rank statistic") {
  const std::vector<double> time{1, 2, 2, 3, 4, 4, 5, 6, 7, 9};
  const std::vector<int> ev{1, 1, 1, 0, 1, 1, 0, 1, 1, 0};
  const std::vector<int> grp{0, 1, 0, 1, 1, 0, 1, 0, 1, 1};
  Eigen::MatrixXd x(10, 1);
  for (int i = 0; i < 10; ++i) x(i, 0) = grp[static_cast<std::size_t>(i)];
  const auto lr = oracle::log_rank(time, ev, grp);
  const auto cs = cox_score(x, time, ev, Eigen::VectorXd::Zero(1));
  CHECK(std::abs(cs.score[0] - lr.u) < 1e-8);
  CHECK(cs.information(0, 0) == doctest::Approx(lr.var_plain).epsilon(1e-12));
  CHECK(cox_score_test(x, time, ev) == doctest::Approx(lr.u * lr.u / lr.var_plain).epsilon(1e-12));
}

TEST_CASE("Cox with no covariate effect equals the marginal ECDF") {
  // identical z: the covariate is dropped and beta = 0
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(20, 50);
  std::vector<double> c, z;
  for (int i = 0; i < 400; ++i) {
    c.push_back(unif(rng));
    z.push_back(1.0);
  }
  c[10] = c[11];  // a tie
  const auto d = with_c(c, z);
  const auto g = fit_cox_censoring(d, false);
  const auto* cox = g.as<CoxCensoringModel>();
  REQUIRE(cox != nullptr);
  CHECK(cox->fit().beta.cwiseAbs().maxCoeff() == 0.0);
  double worst = 0.0;
  for (double t : grid(0, 55, 400)) worst = std::max(worst, std::abs(g.survival_at(t, d[0]) - std::max(marginal_ecdf(d, t), 1e-6)));
  for (const auto& r : d.records()) worst = std::max(worst, std::abs(g.survival_at(*r.c, r) - marginal_ecdf(d, *r.c)));
  CHECK(worst < 1e-10);
}

TEST_CASE("gap-time Cox is 1 up to v + 5") {
  const auto d = testing::toy_dataset(300, 21);
  const auto g = fit_cox_censoring(d, true);
  for (const auto& r : d.records()) {
    CHECK(g.survival_at(r.v + 5.0, r) == 1.0);
    CHECK(g.survival_at(r.v + 1.0, r) == 1.0);
  }
  CHECK(g.method() == CensoringMethod::CoxGap);
}

TEST_CASE("best_split agrees with an exhaustive log-rank search") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t m = 12 + rng() % 40;
    std::vector<double> value, time;
    std::vector<int> obs;
    for (std::size_t i = 0; i < m; ++i) {
      value.push_back(static_cast<double>(rng() % 9));  // many ties in the covariate
      time.push_back(static_cast<double>(rng() % 15));  // and in time
      obs.push_back(rng() % 4 != 0);
    }
    const std::size_t min_child = 1 + rng() % 5;
    const auto got = detail::best_split(value, time, obs, min_child);

    std::vector<double> cuts(value);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double best = -1.0, best_cut = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double cut = 0.5 * (cuts[k] + cuts[k + 1]);
      std::vector<int> left;
      std::size_t nl = 0;
      for (double v : value) {
        left.push_back(v <= cut);
        nl += v <= cut;
      }
      if (nl < min_child || m - nl < min_child) continue;
      const auto lr = oracle::log_rank(time, obs, left);
      if (!(lr.var_ties > 1e-12)) continue;
      const double stat = std::abs(lr.u) / std::sqrt(lr.var_ties);
      if (stat > best + 1e-12) {
        best = stat;
        best_cut = cut;
      }
    }
    if (best < 0) {
      CHECK_FALSE(got.found);
      continue;
    }
    REQUIRE(got.found);
    CHECK(got.statistic == doctest::Approx(best).epsilon(1e-10));
    CHECK(got.threshold == best_cut);
  }
}

TEST_CASE("forest that cannot split equals the marginal curve") {
  const auto d = testing::toy_dataset(250, 31);
  ForestParams p;
  p.n_trees = 15;
  p.min_node_size = d.n();
  p.mtry = 2;
  p.seed = 4;
  const auto forest = fit_survival_forest(d, p);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.n(); i += 7)
    for (double t : grid(0, 70, 60)) {
      const double want = std::max(marginal_ecdf(d, t), 1e-6);
      worst = std::max(worst, std::abs(forest.survival_at(t, d[i]) - want));
      worst = std::max(worst, std::abs(forest.survival_at(t, d[i], RowRef{d.row_identity(), i}) - want));
    }
  CHECK(worst < 1e-10);

  // no c column: marginal Kaplan-Meier of (u, 1 - delta)
  const auto dn = testing::toy_dataset(250, 32, true, false);
  const auto fn = fit_survival_forest(dn, p);
  const auto km = fit_kaplan_meier(dn);
  worst = 0.0;
  for (double t : grid(0, 70, 60)) worst = std::max(worst, std::abs(fn.survival_at(t, dn[3]) - km.survival_at(t, dn[3])));
  CHECK(worst < 1e-10);
}

TEST_CASE("forest is deterministic in its seed and uses out-of-bag trees") {
  const auto d = testing::toy_dataset(400, 41);
  ForestParams p;
  p.n_trees = 25;
  p.min_node_size = 20;
  p.mtry = 1;
  p.seed = 77;
  const auto a = fit_survival_forest(d, p);
  const auto b = fit_survival_forest(d, p);
  p.seed = 78;
  const auto c = fit_survival_forest(d, p);
  bool differs = false;
  for (std::size_t i = 0; i < d.n(); i += 13)
    for (double t : {20.0, 30.0, 40.0}) {
      const RowRef ref{d.row_identity(), i};
      CHECK(a.survival_at(t, d[i], ref) == b.survival_at(t, d[i], ref));
      differs |= a.survival_at(t, d[i], ref) != c.survival_at(t, d[i], ref);
    }
  CHECK(differs);
  const auto* forest = a.as<SurvivalForest>();
  REQUIRE(forest != nullptr);
  CHECK(forest->trees().size() == 25);
  bool split = false;
  for (const auto& tr : forest->trees()) split |= tr.nodes.size() > 1;
  CHECK(split);

  // node size is the size a node must exceed to be split, not a floor on leaves
  p.min_node_size = d.n() - 1;
  const auto loose = fit_survival_forest(d, p);
  split = false;
  for (const auto& tr : loose.as<SurvivalForest>()->trees()) split |= tr.nodes.size() > 1;
  CHECK(split);
}

TEST_CASE("every fitted model is monotone and floored") {
  const auto d = testing::toy_dataset(500, 51);
  std::vector<CensoringModel> models{fit_stratified_ecdf(d, {}), fit_kaplan_meier(d), fit_cox_censoring(d, false),
                                     fit_cox_censoring(d, true)};
  ForestParams p;
  p.n_trees = 10;
  p.min_node_size = 30;
  models.push_back(fit_survival_forest(d, p));
  const auto g = grid(0, 120, 200);
  for (const auto& m : models)
    for (std::size_t i = 0; i < d.n(); i += 25) {
      double prev = 1.0;
      for (double t : g) {
        const double s = m.survival_at(t, d[i]);
        CHECK(s <= prev);
        CHECK(s >= CensoringModel::kSurvivalFloor);
        CHECK(s <= 1.0);
        prev = s;
      }
      CHECK(m.survival_at(0.0, d[i]) == 1.0);
      CHECK(m.survival_at(200.0, d[i]) == CensoringModel::kSurvivalFloor);
    }
}

TEST_CASE("unfitted and misconfigured models") {
  CensoringModel none;
  CHECK_FALSE(none.fitted());
  try {
    none.survival_at(1.0, rec(1, 1, 0, {}));
    FAIL("expected UnfittedModel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnfittedModel);
  }
  CensoringSpec spec;
  spec.method = CensoringMethod::True;
  CHECK_THROWS_AS(fit_censoring(spec, testing::toy_dataset(20, 1)), Error);
  ForestParams bad;
  bad.mtry = 3;
  CHECK_THROWS_AS(bad.validate(2), Error);
}

}  // TEST_SUITE
