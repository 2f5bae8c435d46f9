#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dcreg/censoring.hpp"

namespace dcreg {

/// Breslow-tie log partial likelihood with its gradient and information at beta.
struct CoxScore {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

CoxScore cox_score(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event,
                   const Eigen::VectorXd& beta);

/// Score test of beta = 0: U(0)' I(0)^{-1} U(0).
double cox_score_test(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event);

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd center;  // covariate means; the baseline refers to z = center
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> jump_times;   // distinct event times
  std::vector<double> hazard_jumps; // Breslow increments at center
};

/// Newton-Raphson with step-halving on the log partial likelihood.
/// Throws Nonconvergence or SingularInformation.
CoxFit fit_cox(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event,
               const CoxOptions& options = {});

/// Censoring model backed by a Cox fit. Survival is the product-limit form
///   G(t | z) = prod_{t_j < t} (1 - dL_j)^{exp(beta'(z - center))}
/// which at beta = 0 is the Kaplan-Meier curve of the censoring times. The
/// gap-time variant works on C* = C - (V + 5) and is 1 for t <= v + 5.
class CoxCensoringModel final : public CensoringModel::Impl {
 public:
  CoxCensoringModel(CoxFit fit, bool gap_time, double support);
  double survival(double t, const SubjectRecord& r, const RowRef*) const override;
  CensoringMethod method() const override { return gap_ ? CensoringMethod::CoxGap : CensoringMethod::Cox; }
  double support_hint() const override { return support_; }
  const CoxFit& fit() const { return fit_; }

  static constexpr double kGapOffset = 5.0;

 private:
  CoxFit fit_;
  bool gap_;
  double support_;
  std::vector<double> cum_log_;  // cum_log_[k] = sum_{j<k} log(1 - dL_j)
};

}  // namespace dcreg
