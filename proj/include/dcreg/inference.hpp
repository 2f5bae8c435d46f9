#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dcreg/estimation.hpp"

namespace dcreg {

struct InferenceSummary {
  Eigen::MatrixXd covariance;
  Eigen::VectorXd se;
  SeMethod method = SeMethod::Sandwich;
  Eigen::MatrixXd gamma_hat;  // -(1/n) dU/dtheta'
  Eigen::MatrixXd sigma_hat;  // (1/n) sum_i term_i term_i'
  std::size_t replicates = 0; // bootstrap: replicates kept
  std::size_t failures = 0;   // bootstrap: replicates dropped
};

/// J^{-1} V J^{-T} with J = -dU/dtheta' and V the centered outer-product sum
/// of the per-subject terms. For approach B this omits the variance that
/// comes from estimating G, so it tends to be too small.
InferenceSummary sandwich_variance(const EstimatingFunction& ef, const Eigen::VectorXd& theta_hat);
InferenceSummary sandwich_variance(Approach approach, const Eigen::VectorXd& theta_hat, double t0,
                                   const Dataset& data, const CensoringModel& g);

/// Plug-in estimate of AV_A - AV_B at theta_hat:
///   Gamma_A^{-1} (Sigma_A - Sigma_B) Gamma_A^{-T} / n,
/// positive diagonal entries meaning approach B is the more efficient one.
struct AvDifference {
  Eigen::MatrixXd diff;
  Eigen::MatrixXd gamma_a, gamma_b;
  Eigen::MatrixXd sigma_a, sigma_b;
};
AvDifference av_difference(const Eigen::VectorXd& theta_hat, double t0, const Dataset& data,
                           const CensoringValues& g);
AvDifference av_difference(const Eigen::VectorXd& theta_hat, double t0, const Dataset& data,
                           const CensoringModel& g);

/// Standard normal quantile.
double normal_quantile(double p);

struct WaldInterval {
  Eigen::VectorXd lo, hi;
};
WaldInterval wald_ci(const Eigen::VectorXd& estimate, const Eigen::VectorXd& se, double level = 0.95);

struct BootstrapOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  bool freeze_censoring = false;
  double max_failure_fraction = 0.10;
  std::size_t jobs = 0;
  SolverOptions solver;
};

/// Bootstrap for a whole age grid and several approaches at once: each
/// resample refits G (unless frozen) a single time and re-solves every
/// (approach, t0). Result is indexed [approach][t0]. `truth` is needed only
/// for CensoringMethod::True. Throws TooManyFailures when more than the
/// allowed fraction of replicates fail for any (approach, t0).
std::vector<std::vector<InferenceSummary>> bootstrap_se_grid(std::span<const Approach> approaches,
                                                             std::span<const double> t0_grid, const Dataset& data,
                                                             const CensoringSpec& spec,
                                                             const BootstrapOptions& options,
                                                             const CensoringModel* truth = nullptr);

InferenceSummary bootstrap_se(Approach approach, double t0, const Dataset& data, const CensoringSpec& spec,
                              const BootstrapOptions& options, const CensoringModel* truth = nullptr);

}  // namespace dcreg
