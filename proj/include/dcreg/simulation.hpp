#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcreg/censoring.hpp"
#include "dcreg/data.hpp"
#include "dcreg/estimation.hpp"
#include "dcreg/random.hpp"

namespace dcreg {

/// Law of T given (Z, T > V):
///   Logistic       logit P(T <= t) = gamma0 + gamma1 t + beta1 z1 + beta2 z2
///   LogisticTwoArm as Logistic, with (gamma0, beta2) replaced by (gamma02, beta22) when V >= v_threshold
///   Weibull        P(T <= t) = 1 - S(t)/S(v), S(t) = exp(-lambda t^nu exp(beta1 z1 + beta2 z2))
enum class EventModel { Logistic, LogisticTwoArm, Weibull };

/// Backward: per analysis age, draw Y(t0) and walk back month by month.
/// Inverse: draw one event age per subject by inverting P(T <= t) on the grid.
enum class Generator { Backward, Inverse };

std::string_view to_string(EventModel m);
std::string_view to_string(Generator g);
EventModel parse_event_model(std::string_view s);
Generator parse_generator(std::string_view s);

struct ScenarioConfig {
  std::string id = "custom";
  EventModel model = EventModel::Logistic;
  Generator generator = Generator::Backward;
  std::size_t n = 7000;
  std::size_t reps = 1000;
  std::uint64_t base_seed = 1;
  double s = 1.0 / 12.0;     // backward step / event-age lattice, years
  double floor_pi = 0.005;   // walk stops once P(T <= t) drops below this
  double horizon = 120.0;    // inverse generator: no event beyond this age

  // Z1 ~ Beta(a1, a2), Z2 ~ Bernoulli(p_bern), V = v_scale * Z1
  double a1 = 0.94, a2 = 1.06, p_bern = 0.4, v_scale = 21.0;
  // C = C* + V + gap, C* ~ Weibull(shape = psi3_0 + psi3_1 z2, scale = psi4_0 + psi4_1 z2)
  double psi3_0 = 3.34, psi3_1 = -0.10, psi4_0 = 21.0, psi4_1 = -2.0, gap = 5.0;

  double gamma0 = -7.5, gamma1 = 0.23, beta1 = -4.83, beta2 = -1.0;
  double gamma02 = 0.0, beta22 = 0.0, v_threshold = 16.0;
  double lambda = 0.0, nu = 1.0;

  std::vector<double> t0_grid{21, 30, 35, 40};

  void validate() const;
  /// Coefficients (alpha(t0), beta1, beta2) of the working logistic model
  /// among subjects with V < t0; absent for the Weibull model.
  std::optional<Eigen::VectorXd> true_theta(double t0) const;
  double shape(double z2) const { return psi3_0 + psi3_1 * z2; }
  double scale(double z2) const { return psi4_0 + psi4_1 * z2; }
};

/// Built-in scenarios "s11", "s12", "s2", "s3".
ScenarioConfig scenario_preset(std::string_view name);

/// P(T <= t | z, T > v); zero for t <= v.
double true_pi(const ScenarioConfig& cfg, double t, std::span<const double> z, double v);
/// Weibull model only: 1 - S(t | z) without conditioning on T > V.
double true_pi_unconditional(const ScenarioConfig& cfg, double t, std::span<const double> z);

/// G(t | z, v) = P(C >= t | z, v) of the scenario's censoring law.
double true_censoring_survival(const ScenarioConfig& cfg, double t, std::span<const double> z, double v);
CensoringModel true_censoring_model(const ScenarioConfig& cfg);

/// Weibull(shape, scale) draw by inversion of S(t) = exp(-(t/scale)^shape).
double sample_weibull(Rng& rng, double shape, double scale);

/// Observed data at one analysis age plus the latent pieces kept for
/// reference: t_true (infinite when no event was generated by t0 for the
/// backward generator) and y = Y(t0).
struct Slice {
  double t0 = 0.0;
  Dataset data;
  std::vector<double> t_true;
  std::vector<int> y;
};

struct Replication {
  std::vector<Slice> slices;  // one per grid age; all share Z, V and C
};

Replication generate_replication(const ScenarioConfig& cfg, std::size_t rep_index);

/// Percentage of subjects with V < t0 who are censored at or before t0.
double censoring_rate(const Slice& slice);

// ---------------------------------------------------------------------------
// studies

struct StudyMethod {
  std::string label;  // e.g. "true", "srf", "cox"
  CensoringSpec spec;
};

struct StudySpec {
  std::vector<Approach> approaches{Approach::A, Approach::B};
  std::vector<StudyMethod> methods{{"true", {CensoringMethod::True, {}, {}}}};
  bool sandwich = true;
  bool plugin_av_difference = false;  // needs A and B
  std::size_t jobs = 0;
  SolverOptions solver;
};

struct FitRecord {
  bool converged = false;
  bool failed = false;  // threw (singular Jacobian, no subjects at risk, G fit failure)
  Eigen::VectorXd theta;
  Eigen::VectorXd se;             // sandwich; empty when not computed
  Eigen::MatrixXd covariance;     // sandwich; empty when not computed
  double mean_pred = std::numeric_limits<double>::quiet_NaN();  // mean p-hat over subjects with V < t0
};

struct StudyResult {
  ScenarioConfig scenario;
  StudySpec spec;
  std::size_t reps = 0;
  std::vector<FitRecord> fits;                    // [rep][method][approach][t0], row-major
  std::vector<std::vector<double>> censoring;     // [rep][t0], percent
  std::vector<std::vector<double>> mean_true_pi;  // [rep][t0], mean true P(T <= t0) over V < t0
  std::vector<std::vector<double>> v_stats;       // [rep] = {median V, mean V}
  std::vector<std::vector<Eigen::MatrixXd>> plugin_av;  // [rep][method * T + t0]; empty when off

  std::size_t n_methods() const { return spec.methods.size(); }
  std::size_t n_approaches() const { return spec.approaches.size(); }
  std::size_t n_ages() const { return scenario.t0_grid.size(); }
  const FitRecord& fit(std::size_t rep, std::size_t m, std::size_t a, std::size_t t) const {
    return fits[((rep * n_methods() + m) * n_approaches() + a) * n_ages() + t];
  }
  std::optional<std::size_t> approach_index(Approach a) const;
};

/// Runs cfg.reps replications in parallel. Per-replication failures are
/// recorded in the FitRecords, never thrown.
StudyResult run_study(const ScenarioConfig& cfg, const StudySpec& spec);

struct MetricsRow {
  std::string method;
  Approach approach = Approach::A;
  double t0 = 0.0;
  std::string term;
  double truth = std::numeric_limits<double>::quiet_NaN();
  std::size_t converged = 0;
  std::size_t failed = 0;
  double smean = std::numeric_limits<double>::quiet_NaN();
  double ssd = std::numeric_limits<double>::quiet_NaN();    // absent (NaN) when fewer than 2 estimates
  double smese = std::numeric_limits<double>::quiet_NaN();
  double rsmse = std::numeric_limits<double>::quiet_NaN();  // absent without a true value
  double coverage = std::numeric_limits<double>::quiet_NaN();  // 95% Wald coverage
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  const MetricsRow* find(std::string_view method, Approach approach, double t0, std::string_view term) const;
};

std::vector<std::string> term_names(std::span<const std::string> covariates);

MetricsTable compute_metrics(const StudyResult& study);

struct CensoringRateRow {
  double t0 = 0.0;
  double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
};
std::vector<CensoringRateRow> censoring_rate_summary(const StudyResult& study);

/// (1/n) (sample variance of A estimates - sample variance of B estimates),
/// per method, age and coefficient. Throws RequiresBothApproaches.
struct AvDifferenceRow {
  std::string method;
  double t0 = 0.0;
  std::string term;
  double empirical = 0.0;
  double plugin_mean = std::numeric_limits<double>::quiet_NaN();      // mean of plug-in diagonal over reps
  double plugin_positive = std::numeric_limits<double>::quiet_NaN();  // fraction of reps with positive diagonal
};
std::vector<AvDifferenceRow> empirical_av_difference(const StudyResult& study);

/// Predicted event probability against the truth. Profile "population"
/// averages over subjects with V < t0 in each replication; named profiles
/// use a fixed z with v = v_scale * z1 and carry a delta-method SE.
struct SurvivalRow {
  std::string method;
  Approach approach = Approach::A;
  double t0 = 0.0;
  std::string profile;
  double mean_pred = std::numeric_limits<double>::quiet_NaN();
  double mean_se = std::numeric_limits<double>::quiet_NaN();
  double true_conditional = std::numeric_limits<double>::quiet_NaN();
  double true_unconditional = std::numeric_limits<double>::quiet_NaN();
  double abs_error = std::numeric_limits<double>::quiet_NaN();  // |mean_pred - true_conditional|
};
std::vector<SurvivalRow> survival_comparison(const StudyResult& study,
                                             const std::vector<std::vector<double>>& z_profiles = {});

/// Delta-method SE of logistic_prob(theta, z): p (1 - p) sqrt(x' cov x), x = (1, z).
double prediction_se(const Eigen::VectorXd& theta, const Eigen::MatrixXd& covariance, std::span<const double> z);

struct GeneratorRow {
  std::string method;
  Approach approach = Approach::A;
  double t0 = 0.0;
  double backward = 0.0, inverse = 0.0;
  double difference = 0.0;  // backward - inverse, mean predicted event probability
};
std::vector<GeneratorRow> generator_comparison(const StudyResult& backward, const StudyResult& inverse);

}  // namespace dcreg
