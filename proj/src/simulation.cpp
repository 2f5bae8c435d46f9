#include "dcreg/simulation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "dcreg/csv.hpp"
#include "dcreg/error.hpp"
#include "dcreg/inference.hpp"
#include "dcreg/parallel.hpp"

namespace dcreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Neumaier-compensated running sum.
class Sum {
 public:
  void add(double x) {
    const double t = s_ + x;
    c_ += std::abs(s_) >= std::abs(x) ? (s_ - t) + x : (x - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

std::string_view to_string(EventModel m) {
  switch (m) {
    case EventModel::Logistic: return "logistic";
    case EventModel::LogisticTwoArm: return "logistic_two_arm";
    case EventModel::Weibull: return "weibull";
  }
  return "unknown";
}

std::string_view to_string(Generator g) { return g == Generator::Backward ? "backward" : "inverse"; }

EventModel parse_event_model(std::string_view s) {
  const auto k = lower(s);
  if (k == "logistic") return EventModel::Logistic;
  if (k == "logistic_two_arm" || k == "two_arm") return EventModel::LogisticTwoArm;
  if (k == "weibull") return EventModel::Weibull;
  throw Error(ErrorCode::ConfigInvalid, "unknown event model '" + std::string(s) + "'");
}

Generator parse_generator(std::string_view s) {
  const auto k = lower(s);
  if (k == "backward") return Generator::Backward;
  if (k == "inverse") return Generator::Inverse;
  throw Error(ErrorCode::ConfigInvalid, "unknown generator '" + std::string(s) + "'");
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, "scenario: " + msg); };
  if (n < 1) fail("n must be at least 1");
  if (reps < 1) fail("reps must be at least 1");
  if (!(s > 0.0)) fail("step s must be positive");
  if (!(floor_pi > 0.0 && floor_pi < 1.0)) fail("floor_pi must lie in (0, 1)");
  if (!(a1 > 0.0 && a2 > 0.0)) fail("Beta parameters must be positive");
  if (!(p_bern >= 0.0 && p_bern <= 1.0)) fail("p_bern must lie in [0, 1]");
  if (!(v_scale >= 0.0) || !(gap >= 0.0)) fail("v_scale and gap must be non-negative");
  for (double z2 : {0.0, 1.0})
    if (!(shape(z2) > 0.0 && scale(z2) > 0.0)) fail("Weibull censoring parameters must be positive for z2 = 0 and 1");
  if (model == EventModel::Weibull && !(lambda > 0.0 && nu > 0.0)) fail("Weibull event model needs lambda, nu > 0");
  if (t0_grid.empty()) fail("t0 grid is empty");
  for (std::size_t i = 0; i < t0_grid.size(); ++i) {
    if (!std::isfinite(t0_grid[i])) fail("t0 grid has a non-finite age");
    if (i > 0 && !(t0_grid[i] > t0_grid[i - 1])) fail("t0 grid must be strictly increasing");
  }
  if (!(horizon > 0.0)) fail("horizon must be positive");
}

std::optional<Eigen::VectorXd> ScenarioConfig::true_theta(double t0) const {
  if (model == EventModel::Weibull) return std::nullopt;
  Eigen::VectorXd th(3);
  th << gamma0 + gamma1 * t0, beta1, beta2;
  return th;
}

ScenarioConfig scenario_preset(std::string_view name) {
  const auto key = lower(name);
  ScenarioConfig c;
  c.id = key;
  if (key == "s11") return c;
  if (key == "s12") {
    c.psi3_0 = 6.0;
    c.psi3_1 = -1.0;
    c.psi4_0 = 31.0;
    c.psi4_1 = -2.0;
    c.gamma0 = -6.9;
    c.gamma1 = 0.26;
    c.beta1 = -5.46;
    c.beta2 = 1.5;
    return c;
  }
  if (key == "s2") {
    c.model = EventModel::LogisticTwoArm;
    c.a1 = c.a2 = 2.0;
    c.psi4_0 = 22.0;
    c.gamma0 = -6.3;
    c.gamma02 = -6.9;
    c.gamma1 = 0.30;
    c.beta1 = -6.30;
    c.beta2 = 1.0;
    c.beta22 = 1.6;
    c.v_threshold = 16.0;
    c.t0_grid = {13, 14, 15};
    return c;
  }
  if (key == "s3") {
    c.model = EventModel::Weibull;
    c.psi3_1 = -2.0;
    c.psi4_0 = 20.0;
    c.psi4_1 = 0.0;
    c.lambda = 4.5e-9;
    c.nu = 5.0;
    c.beta1 = 2.0;
    c.beta2 = -0.3;
    c.t0_grid = {15, 20, 25, 30, 35, 40};
    return c;
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown scenario preset '" + std::string(name) + "'");
}

double true_pi(const ScenarioConfig& cfg, double t, std::span<const double> z, double v) {
  if (!(t > v)) return 0.0;
  const double z1 = z[0], z2 = z.size() > 1 ? z[1] : 0.0;
  switch (cfg.model) {
    case EventModel::Logistic:
      return inv_logit(cfg.gamma0 + cfg.gamma1 * t + cfg.beta1 * z1 + cfg.beta2 * z2);
    case EventModel::LogisticTwoArm:
      if (v < cfg.v_threshold) return inv_logit(cfg.gamma0 + cfg.gamma1 * t + cfg.beta1 * z1 + cfg.beta2 * z2);
      return inv_logit(cfg.gamma02 + cfg.gamma1 * t + cfg.beta1 * z1 + cfg.beta22 * z2);
    case EventModel::Weibull: {
      const double rate = cfg.lambda * std::exp(cfg.beta1 * z1 + cfg.beta2 * z2);
      return -std::expm1(-rate * (std::pow(t, cfg.nu) - std::pow(v, cfg.nu)));
    }
  }
  return 0.0;
}

double true_pi_unconditional(const ScenarioConfig& cfg, double t, std::span<const double> z) {
  if (cfg.model != EventModel::Weibull) return kNaN;
  const double z1 = z[0], z2 = z.size() > 1 ? z[1] : 0.0;
  const double rate = cfg.lambda * std::exp(cfg.beta1 * z1 + cfg.beta2 * z2);
  return t > 0.0 ? -std::expm1(-rate * std::pow(t, cfg.nu)) : 0.0;
}

double true_censoring_survival(const ScenarioConfig& cfg, double t, std::span<const double> z, double v) {
  const double x = t - v - cfg.gap;
  if (x <= 0.0) return 1.0;
  const double z2 = z.size() > 1 ? z[1] : 0.0;
  return std::exp(-std::pow(x / cfg.scale(z2), cfg.shape(z2)));
}

CensoringModel true_censoring_model(const ScenarioConfig& cfg) {
  const double support = cfg.v_scale + cfg.gap + 10.0 * std::max(cfg.scale(0.0), cfg.scale(1.0));
  return make_true_censoring(
      [cfg](double t, const SubjectRecord& r) { return true_censoring_survival(cfg, t, r.z, r.v); }, support);
}

double sample_weibull(Rng& rng, double shape, double scale) {
  // 1 - U lies in (0, 1], so the log is finite.
  return scale * std::pow(-std::log1p(-uniform01(rng)), 1.0 / shape);
}

namespace {

struct Baseline {
  std::vector<double> z1, z2, v, c;
};

Baseline draw_baseline(const ScenarioConfig& cfg, std::uint64_t rep_seed) {
  Rng rng(substream_seed(rep_seed, 0));
  std::gamma_distribution<double> ga(cfg.a1, 1.0), gb(cfg.a2, 1.0);
  Baseline b;
  b.z1.resize(cfg.n);
  b.z2.resize(cfg.n);
  b.v.resize(cfg.n);
  b.c.resize(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x = ga(rng), y = gb(rng);
    b.z1[i] = x / (x + y);
    b.z2[i] = uniform01(rng) < cfg.p_bern ? 1.0 : 0.0;
    b.v[i] = cfg.v_scale * b.z1[i];
    b.c[i] = sample_weibull(rng, cfg.shape(b.z2[i]), cfg.scale(b.z2[i])) + b.v[i] + cfg.gap;
  }
  return b;
}

// Event age from the backward walk at t0, or +inf when Y(t0) = 0.
double backward_event(const ScenarioConfig& cfg, Rng& rng, double t0, std::span<const double> z, double v) {
  if (!(v < t0)) return kInf;
  double prev = true_pi(cfg, t0, z, v);
  if (!(uniform01(rng) < prev)) return kInf;
  for (std::size_t q = 1;; ++q) {
    const double pi = true_pi(cfg, t0 - static_cast<double>(q) * cfg.s, z, v);
    if (pi < cfg.floor_pi) return t0 - static_cast<double>(q - 1) * cfg.s;
    if (!(uniform01(rng) < pi / prev)) return t0 - static_cast<double>(q - 1) * cfg.s;
    prev = pi;
  }
}

// Smallest lattice age k*s with P(T <= k*s) >= b, or +inf up to the horizon.
double inverse_event(const ScenarioConfig& cfg, double b, std::span<const double> z, double v) {
  auto k_lo = static_cast<long long>(std::floor(v / cfg.s)) + 1;
  auto k_hi = static_cast<long long>(std::floor(cfg.horizon / cfg.s));
  if (k_lo > k_hi || true_pi(cfg, static_cast<double>(k_hi) * cfg.s, z, v) < b) return kInf;
  while (k_lo < k_hi) {
    const auto mid = k_lo + (k_hi - k_lo) / 2;
    if (true_pi(cfg, static_cast<double>(mid) * cfg.s, z, v) >= b) k_hi = mid;
    else k_lo = mid + 1;
  }
  return static_cast<double>(k_lo) * cfg.s;
}

Slice make_slice(double t0, const Baseline& b, std::vector<double> t_true) {
  const std::size_t n = b.v.size();
  Slice sl;
  sl.t0 = t0;
  sl.y.resize(n);
  std::vector<SubjectRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.v = b.v[i];
    r.z = {b.z1[i], b.z2[i]};
    r.c = b.c[i];
    r.delta = t_true[i] <= b.c[i] ? 1 : 0;
    r.u = r.delta ? t_true[i] : b.c[i];
    sl.y[i] = (b.v[i] < t0 && t_true[i] <= t0) ? 1 : 0;
  }
  sl.data = validate_dataset(std::move(recs), {"z1", "z2"});
  sl.t_true = std::move(t_true);
  return sl;
}

}  // namespace

Replication generate_replication(const ScenarioConfig& cfg, std::size_t rep_index) {
  cfg.validate();
  const std::uint64_t rep_seed = substream_seed(cfg.base_seed, rep_index);
  const Baseline b = draw_baseline(cfg, rep_seed);
  const std::size_t n = cfg.n;
  Replication rep;

  if (cfg.generator == Generator::Backward) {
    for (double t0 : cfg.t0_grid) {
      Rng rng(substream_seed(rep_seed, std::bit_cast<std::uint64_t>(t0)));
      std::vector<double> t_true(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double z[2] = {b.z1[i], b.z2[i]};
        t_true[i] = backward_event(cfg, rng, t0, z, b.v[i]);
      }
      rep.slices.push_back(make_slice(t0, b, std::move(t_true)));
    }
  } else {
    Rng rng(substream_seed(rep_seed, 1));
    std::vector<double> t_true(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double z[2] = {b.z1[i], b.z2[i]};
      const double u = std::max(uniform01(rng), cfg.floor_pi);
      t_true[i] = inverse_event(cfg, u, z, b.v[i]);
    }
    for (double t0 : cfg.t0_grid) rep.slices.push_back(make_slice(t0, b, t_true));
  }
  return rep;
}

double censoring_rate(const Slice& slice) {
  std::size_t at_risk = 0, censored = 0;
  for (const auto& r : slice.data.records()) {
    if (!(r.v < slice.t0)) continue;
    ++at_risk;
    censored += (r.delta == 0 && r.u <= slice.t0);
  }
  return at_risk ? 100.0 * static_cast<double>(censored) / static_cast<double>(at_risk) : kNaN;
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> StudyResult::approach_index(Approach a) const {
  for (std::size_t k = 0; k < spec.approaches.size(); ++k)
    if (spec.approaches[k] == a) return k;
  return std::nullopt;
}

namespace {

double mean_prediction(const Dataset& data, double t0, const Eigen::VectorXd& theta) {
  Sum s;
  std::size_t k = 0;
  for (const auto& r : data.records()) {
    if (!(r.v < t0)) continue;
    s.add(logistic_prob(theta, r.z));
    ++k;
  }
  return k ? s.value() / static_cast<double>(k) : kNaN;
}

}  // namespace

StudyResult run_study(const ScenarioConfig& cfg, const StudySpec& spec) {
  cfg.validate();
  if (spec.approaches.empty() || spec.methods.empty())
    throw Error(ErrorCode::ConfigInvalid, "study needs at least one approach and one censoring method");
  StudyResult out;
  out.scenario = cfg;
  out.spec = spec;
  out.reps = cfg.reps;
  const std::size_t M = spec.methods.size(), A = spec.approaches.size(), T = cfg.t0_grid.size();
  out.fits.resize(cfg.reps * M * A * T);
  out.censoring.assign(cfg.reps, std::vector<double>(T, kNaN));
  out.mean_true_pi.assign(cfg.reps, std::vector<double>(T, kNaN));
  out.v_stats.assign(cfg.reps, {});
  const auto ia = out.approach_index(Approach::A), ib = out.approach_index(Approach::B);
  const bool want_av = spec.plugin_av_difference && ia && ib;
  if (want_av) out.plugin_av.assign(cfg.reps, std::vector<Eigen::MatrixXd>(M * T));
  const CensoringModel truth = true_censoring_model(cfg);

  // Replications run in parallel; inside one, everything is sequential.
  parallel_for(
      cfg.reps,
      [&](std::size_t rep) {
        const Replication data = generate_replication(cfg, rep);
        for (std::size_t t = 0; t < T; ++t) {
          const auto& sl = data.slices[t];
          out.censoring[rep][t] = censoring_rate(sl);
          Sum s;
          std::size_t k = 0;
          for (const auto& r : sl.data.records())
            if (r.v < sl.t0) {
              s.add(true_pi(cfg, sl.t0, r.z, r.v));
              ++k;
            }
          out.mean_true_pi[rep][t] = k ? s.value() / static_cast<double>(k) : kNaN;
        }
        {
          std::vector<double> v;
          for (const auto& r : data.slices[0].data.records()) v.push_back(r.v);
          const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
          std::sort(v.begin(), v.end());
          const std::size_t h = v.size() / 2;
          const double median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
          out.v_stats[rep] = {median, mean};
        }

        for (std::size_t m = 0; m < M; ++m) {
          auto slot = [&](std::size_t a, std::size_t t) -> FitRecord& {
            return out.fits[((rep * M + m) * A + a) * T + t];
          };
          CensoringModel g;
          try {
            // Z, V and C are shared by every slice, so one censoring fit serves all ages.
            CensoringSpec cs = spec.methods[m].spec;
            cs.forest.seed = substream_seed(cs.forest.seed, rep);
            g = fit_censoring(cs, data.slices[0].data, &truth);
          } catch (const Error&) {
            for (std::size_t a = 0; a < A; ++a)
              for (std::size_t t = 0; t < T; ++t) slot(a, t).failed = true;
            continue;
          }
          for (std::size_t t = 0; t < T; ++t) {
            const auto& sl = data.slices[t];
            CensoringValues cv;
            try {
              cv = censoring_values(sl.data, g, sl.t0);
            } catch (const Error&) {
              for (std::size_t a = 0; a < A; ++a) slot(a, t).failed = true;
              continue;
            }
            for (std::size_t a = 0; a < A; ++a) {
              auto& fr = slot(a, t);
              try {
                const EstimatingFunction ef(spec.approaches[a], sl.t0, sl.data, cv);
                const auto est = solve(ef, spec.solver);
                fr.theta = est.theta;
                fr.converged = est.converged;
                if (!est.converged) continue;
                fr.mean_pred = mean_prediction(sl.data, sl.t0, est.theta);
                if (spec.sandwich) {
                  const auto inf = sandwich_variance(ef, est.theta);
                  fr.se = inf.se;
                  fr.covariance = inf.covariance;
                }
              } catch (const Error&) {
                fr.failed = true;
                fr.converged = false;
              }
            }
            if (want_av) {
              const auto& fa = slot(*ia, t);
              if (fa.converged) {
                try {
                  out.plugin_av[rep][m * T + t] = av_difference(fa.theta, sl.t0, sl.data, cv).diff;
                } catch (const Error&) {
                }
              }
            }
          }
        }
      },
      spec.jobs);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> term_names(std::span<const std::string> covariates) {
  std::vector<std::string> out{"intercept"};
  out.insert(out.end(), covariates.begin(), covariates.end());
  return out;
}

const MetricsRow* MetricsTable::find(std::string_view method, Approach approach, double t0,
                                     std::string_view term) const {
  for (const auto& r : rows)
    if (r.method == method && r.approach == approach && r.t0 == t0 && r.term == term) return &r;
  return nullptr;
}

namespace {

const std::vector<std::string> kSimCovariates{"z1", "z2"};

}  // namespace

MetricsTable compute_metrics(const StudyResult& study) {
  MetricsTable table;
  const auto terms = term_names(kSimCovariates);
  const double z975 = normal_quantile(0.975);
  for (std::size_t m = 0; m < study.n_methods(); ++m)
    for (std::size_t a = 0; a < study.n_approaches(); ++a)
      for (std::size_t t = 0; t < study.n_ages(); ++t) {
        const double t0 = study.scenario.t0_grid[t];
        const auto truth = study.scenario.true_theta(t0);
        for (std::size_t j = 0; j < terms.size(); ++j) {
          MetricsRow row;
          row.method = study.spec.methods[m].label;
          row.approach = study.spec.approaches[a];
          row.t0 = t0;
          row.term = terms[j];
          if (truth) row.truth = (*truth)[static_cast<Eigen::Index>(j)];
          Sum sx, sse, ssq;
          std::size_t with_se = 0, covered = 0;
          std::vector<double> vals;
          for (std::size_t rep = 0; rep < study.reps; ++rep) {
            const auto& f = study.fit(rep, m, a, t);
            if (f.failed) ++row.failed;
            if (!f.converged) continue;
            const double x = f.theta[static_cast<Eigen::Index>(j)];
            vals.push_back(x);
            sx.add(x);
            if (truth) ssq.add((x - row.truth) * (x - row.truth));
            if (f.se.size() > 0) {
              const double se = f.se[static_cast<Eigen::Index>(j)];
              sse.add(se);
              ++with_se;
              if (truth && std::abs(x - row.truth) <= z975 * se) ++covered;
            }
          }
          row.converged = vals.size();
          if (!vals.empty()) {
            const double k = static_cast<double>(vals.size());
            row.smean = sx.value() / k;
            if (vals.size() >= 2) {
              Sum dev;
              for (double x : vals) dev.add((x - row.smean) * (x - row.smean));
              row.ssd = std::sqrt(dev.value() / (k - 1.0));
            }
            if (truth) row.rsmse = std::sqrt(ssq.value() / k);
          }
          if (with_se > 0) {
            row.smese = sse.value() / static_cast<double>(with_se);
            if (truth) row.coverage = static_cast<double>(covered) / static_cast<double>(with_se);
          }
          table.rows.push_back(std::move(row));
        }
      }
  return table;
}

std::vector<CensoringRateRow> censoring_rate_summary(const StudyResult& study) {
  std::vector<CensoringRateRow> out;
  for (std::size_t t = 0; t < study.n_ages(); ++t) {
    CensoringRateRow row;
    row.t0 = study.scenario.t0_grid[t];
    Sum s;
    std::vector<double> vals;
    for (std::size_t rep = 0; rep < study.reps; ++rep) {
      const double x = study.censoring[rep][t];
      if (std::isnan(x)) continue;
      vals.push_back(x);
      s.add(x);
    }
    if (vals.empty()) {
      row.mean = row.sd = row.min = row.max = kNaN;
    } else {
      row.mean = s.value() / static_cast<double>(vals.size());
      Sum d;
      for (double x : vals) d.add((x - row.mean) * (x - row.mean));
      row.sd = vals.size() > 1 ? std::sqrt(d.value() / static_cast<double>(vals.size() - 1)) : kNaN;
      row.min = *std::min_element(vals.begin(), vals.end());
      row.max = *std::max_element(vals.begin(), vals.end());
    }
    out.push_back(row);
  }
  return out;
}

std::vector<AvDifferenceRow> empirical_av_difference(const StudyResult& study) {
  const auto ia = study.approach_index(Approach::A), ib = study.approach_index(Approach::B);
  if (!ia || !ib)
    throw Error(ErrorCode::RequiresBothApproaches, "variance comparison needs both approach A and approach B");
  const auto terms = term_names(kSimCovariates);
  const double n = static_cast<double>(study.scenario.n);
  std::vector<AvDifferenceRow> out;
  for (std::size_t m = 0; m < study.n_methods(); ++m)
    for (std::size_t t = 0; t < study.n_ages(); ++t)
      for (std::size_t j = 0; j < terms.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        auto sample_var = [&](std::size_t a) {
          std::vector<double> v;
          for (std::size_t rep = 0; rep < study.reps; ++rep) {
            const auto& f = study.fit(rep, m, a, t);
            if (f.converged) v.push_back(f.theta[jj]);
          }
          if (v.size() < 2) return kNaN;
          Sum s;
          for (double x : v) s.add(x);
          const double mean = s.value() / static_cast<double>(v.size());
          Sum d;
          for (double x : v) d.add((x - mean) * (x - mean));
          return d.value() / static_cast<double>(v.size() - 1);
        };
        AvDifferenceRow row;
        row.method = study.spec.methods[m].label;
        row.t0 = study.scenario.t0_grid[t];
        row.term = terms[j];
        row.empirical = (sample_var(*ia) - sample_var(*ib)) / n;
        if (!study.plugin_av.empty()) {
          Sum s;
          std::size_t k = 0, pos = 0;
          for (std::size_t rep = 0; rep < study.reps; ++rep) {
            const auto& d = study.plugin_av[rep][m * study.n_ages() + t];
            if (d.size() == 0) continue;
            s.add(d(jj, jj));
            ++k;
            pos += d(jj, jj) > 0.0;
          }
          if (k) {
            row.plugin_mean = s.value() / static_cast<double>(k);
            row.plugin_positive = static_cast<double>(pos) / static_cast<double>(k);
          }
        }
        out.push_back(row);
      }
  return out;
}

double prediction_se(const Eigen::VectorXd& theta, const Eigen::MatrixXd& covariance, std::span<const double> z) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(z.size() + 1));
  x[0] = 1.0;
  for (std::size_t j = 0; j < z.size(); ++j) x[static_cast<Eigen::Index>(j + 1)] = z[j];
  const double p = logistic_prob(theta, z);
  const double var = x.dot(covariance * x);
  return p * (1.0 - p) * std::sqrt(std::max(var, 0.0));
}

std::vector<SurvivalRow> survival_comparison(const StudyResult& study,
                                             const std::vector<std::vector<double>>& z_profiles) {
  std::vector<SurvivalRow> out;
  const auto& cfg = study.scenario;
  for (std::size_t m = 0; m < study.n_methods(); ++m)
    for (std::size_t a = 0; a < study.n_approaches(); ++a)
      for (std::size_t t = 0; t < study.n_ages(); ++t) {
        const double t0 = cfg.t0_grid[t];
        {
          SurvivalRow row;
          row.method = study.spec.methods[m].label;
          row.approach = study.spec.approaches[a];
          row.t0 = t0;
          row.profile = "population";
          Sum sp, st;
          std::size_t k = 0, kt = 0;
          for (std::size_t rep = 0; rep < study.reps; ++rep) {
            const double tp = study.mean_true_pi[rep][t];
            if (!std::isnan(tp)) {
              st.add(tp);
              ++kt;
            }
            const auto& f = study.fit(rep, m, a, t);
            if (!f.converged || std::isnan(f.mean_pred)) continue;
            sp.add(f.mean_pred);
            ++k;
          }
          if (k) row.mean_pred = sp.value() / static_cast<double>(k);
          if (kt) row.true_conditional = st.value() / static_cast<double>(kt);
          row.abs_error = std::abs(row.mean_pred - row.true_conditional);
          out.push_back(row);
        }
        for (const auto& z : z_profiles) {
          SurvivalRow row;
          row.method = study.spec.methods[m].label;
          row.approach = study.spec.approaches[a];
          row.t0 = t0;
          row.profile = "z1=" + csv::number(z.at(0)) + ";z2=" + csv::number(z.size() > 1 ? z[1] : 0.0);
          const double v = cfg.v_scale * z[0];
          if (t0 > v) row.true_conditional = true_pi(cfg, t0, z, v);
          row.true_unconditional = true_pi_unconditional(cfg, t0, z);
          Sum sp, ss;
          std::size_t k = 0, ks = 0;
          for (std::size_t rep = 0; rep < study.reps; ++rep) {
            const auto& f = study.fit(rep, m, a, t);
            if (!f.converged) continue;
            sp.add(logistic_prob(f.theta, z));
            ++k;
            if (f.covariance.size() > 0) {
              ss.add(prediction_se(f.theta, f.covariance, z));
              ++ks;
            }
          }
          if (k) row.mean_pred = sp.value() / static_cast<double>(k);
          if (ks) row.mean_se = ss.value() / static_cast<double>(ks);
          row.abs_error = std::abs(row.mean_pred - row.true_conditional);
          out.push_back(row);
        }
      }
  return out;
}

std::vector<GeneratorRow> generator_comparison(const StudyResult& backward, const StudyResult& inverse) {
  if (backward.scenario.t0_grid != inverse.scenario.t0_grid || backward.n_methods() != inverse.n_methods() ||
      backward.spec.approaches != inverse.spec.approaches)
    throw Error(ErrorCode::ConfigInvalid, "generator comparison needs two studies with the same layout");
  const auto pb = survival_comparison(backward), pi = survival_comparison(inverse);
  std::vector<GeneratorRow> out;
  for (std::size_t k = 0; k < pb.size(); ++k) {
    GeneratorRow row;
    row.method = pb[k].method;
    row.approach = pb[k].approach;
    row.t0 = pb[k].t0;
    row.backward = pb[k].mean_pred;
    row.inverse = pi[k].mean_pred;
    row.difference = row.backward - row.inverse;
    out.push_back(row);
  }
  return out;
}

}  // namespace dcreg
