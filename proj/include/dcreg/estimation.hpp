#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcreg/censoring.hpp"
#include "dcreg/data.hpp"
#include "dcreg/types.hpp"

namespace dcreg {

/// exp(a + b'z) / (1 + exp(a + b'z)) without overflow; theta = (a, b).
double logistic_prob(const Eigen::VectorXd& theta, std::span<const double> z);
double inv_logit(double eta);

/// IPCW weight I(U <= t0) delta / G(U) + I(U > t0) / G(t0), from the two G values.
double ipcw_weight(const SubjectRecord& r, double t0, double g_u, double g_t0);
/// Same with the strict/weak inequalities swapped: I(U < t0) delta / G(U) + I(U >= t0) / G(t0).
double ipcw_weight_im(const SubjectRecord& r, double t0, double g_u, double g_t0);

double ipcw_weight(const SubjectRecord& r, double t0, const CensoringModel& g);
double ipcw_weight_im(const SubjectRecord& r, double t0, const CensoringModel& g);

/// G(U_i | Z_i) and G(t0 | Z_i) for every row, queried as rows of `data`
/// so that the forest can use out-of-bag trees.
struct CensoringValues {
  std::vector<double> at_u;
  std::vector<double> at_t0;
};
CensoringValues censoring_values(const Dataset& data, const CensoringModel& g, double t0);

/// Per-subject pieces of one estimating function evaluated at theta.
/// Every approach is written as sum_i r_i x_i (y_i - w_i p_i) with x = (1, z):
///   A:  r = I(t0 >= V), y = delta I(U <= t0) / G(U), w = W
///   B:  r = I(t0 >= V), y as in A,                 w = 1
///   IM: r = 1,          y = delta I(U < t0) / G(U),  w = W*
struct FitWorkspace {
  std::vector<double> weights;   // W_i or W*_i, zero for excluded subjects
  std::vector<int> at_risk;      // r_i
  Eigen::MatrixXd terms;         // n x (p+1), row i is subject i's contribution
  Eigen::VectorXd score;         // column sums of terms
  Eigen::MatrixXd jacobian;      // -dU/dtheta' = sum r_i w_i p_i (1 - p_i) x_i x_i'
};

class EstimatingFunction {
 public:
  EstimatingFunction(Approach approach, double t0, const Dataset& data, const CensoringValues& g);
  EstimatingFunction(Approach approach, double t0, const Dataset& data, const CensoringModel& g);

  Approach approach() const { return approach_; }
  double t0() const { return t0_; }
  std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }
  std::size_t n() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t n_at_risk() const { return n_at_risk_; }

  Eigen::VectorXd score(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) const;
  FitWorkspace workspace(const Eigen::VectorXd& theta) const;

 private:
  void build(const Dataset& data, const CensoringValues& g);

  Approach approach_;
  double t0_;
  Eigen::MatrixXd x_;
  Eigen::ArrayXd r_, y_, w_;
  std::size_t n_at_risk_ = 0;
};

Eigen::VectorXd score(Approach approach, const Eigen::VectorXd& theta, double t0, const Dataset& data,
                      const CensoringModel& g);
Eigen::MatrixXd jacobian(Approach approach, const Eigen::VectorXd& theta, double t0, const Dataset& data,
                         const CensoringModel& g);

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 50;
  int max_halvings = 20;
  double max_condition = 1e12;
  double separation_bound = 50.0;
  std::optional<Eigen::VectorXd> init;  // default: theta = 0
};

enum class SolveStatus { Converged, MaxIterations, Stalled, Separation };
std::string_view to_string(SolveStatus s);

struct CoefficientEstimate {
  double t0 = 0.0;
  Eigen::VectorXd theta;  // (alpha, beta_1..beta_p)
  std::optional<Eigen::MatrixXd> covariance;
  bool converged = false;
  SolveStatus status = SolveStatus::MaxIterations;
  int iterations = 0;
  double final_score_norm = 0.0;  // sup-norm of the score at theta
  std::vector<std::string> warnings;
};

/// Newton-Raphson on the estimating function. Non-convergence and divergence
/// are reported through `status`; a Jacobian with condition number above
/// options.max_condition throws SingularJacobian.
CoefficientEstimate solve(const EstimatingFunction& ef, const SolverOptions& options = {});
CoefficientEstimate solve(Approach approach, double t0, const Dataset& data, const CensoringModel& g,
                          const SolverOptions& options = {});

}  // namespace dcreg
