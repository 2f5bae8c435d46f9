#include "dcreg/estimation.hpp"

#include <cmath>
#include <limits>

#include "dcreg/error.hpp"

namespace dcreg {

double inv_logit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logistic_prob(const Eigen::VectorXd& theta, std::span<const double> z) {
  if (static_cast<std::size_t>(theta.size()) != z.size() + 1)
    throw Error(ErrorCode::InconsistentDimension, "logistic_prob: theta must have length p + 1");
  double eta = theta[0];
  for (std::size_t j = 0; j < z.size(); ++j) eta += theta[static_cast<Eigen::Index>(j + 1)] * z[j];
  return inv_logit(eta);
}

double ipcw_weight(const SubjectRecord& r, double t0, double g_u, double g_t0) {
  if (r.u <= t0) return r.delta ? 1.0 / g_u : 0.0;
  return 1.0 / g_t0;
}

double ipcw_weight_im(const SubjectRecord& r, double t0, double g_u, double g_t0) {
  if (r.u < t0) return r.delta ? 1.0 / g_u : 0.0;
  return 1.0 / g_t0;
}

double ipcw_weight(const SubjectRecord& r, double t0, const CensoringModel& g) {
  return ipcw_weight(r, t0, g.survival_at(r.u, r), g.survival_at(t0, r));
}

double ipcw_weight_im(const SubjectRecord& r, double t0, const CensoringModel& g) {
  return ipcw_weight_im(r, t0, g.survival_at(r.u, r), g.survival_at(t0, r));
}

CensoringValues censoring_values(const Dataset& data, const CensoringModel& g, double t0) {
  CensoringValues out;
  out.at_u.resize(data.n());
  out.at_t0.resize(data.n());
  const auto id = data.row_identity();
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& r = data[i];
    const RowRef ref{id, i};
    // Only one of the two values enters the weight; skip the other.
    const bool uses_u = r.u <= t0 && r.delta == 1;
    out.at_u[i] = uses_u ? g.survival_at(r.u, r, ref) : 1.0;
    out.at_t0[i] = r.u >= t0 ? g.survival_at(t0, r, ref) : 1.0;
  }
  return out;
}

EstimatingFunction::EstimatingFunction(Approach approach, double t0, const Dataset& data, const CensoringValues& g)
    : approach_(approach), t0_(t0) {
  build(data, g);
}

EstimatingFunction::EstimatingFunction(Approach approach, double t0, const Dataset& data, const CensoringModel& g)
    : approach_(approach), t0_(t0) {
  build(data, censoring_values(data, g, t0));
}

void EstimatingFunction::build(const Dataset& data, const CensoringValues& g) {
  if (!std::isfinite(t0_)) throw Error(ErrorCode::InvalidParameter, "analysis age must be finite");
  const auto n = static_cast<Eigen::Index>(data.n());
  const auto p = static_cast<Eigen::Index>(data.p());
  if (g.at_u.size() != data.n() || g.at_t0.size() != data.n())
    throw Error(ErrorCode::InconsistentDimension, "censoring values do not match the dataset");
  x_.resize(n, p + 1);
  r_.resize(n);
  y_.resize(n);
  w_.resize(n);
  n_at_risk_ = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = data[static_cast<std::size_t>(i)];
    const double gu = g.at_u[static_cast<std::size_t>(i)];
    const double gt = g.at_t0[static_cast<std::size_t>(i)];
    x_(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) x_(i, j + 1) = rec.z[static_cast<std::size_t>(j)];
    double r = 1.0, y = 0.0, w = 1.0;
    switch (approach_) {
      case Approach::IM:
        y = (rec.delta == 1 && rec.u < t0_) ? 1.0 / gu : 0.0;
        w = ipcw_weight_im(rec, t0_, gu, gt);
        break;
      case Approach::A:
      case Approach::B:
        r = risk_indicator(rec, t0_) ? 1.0 : 0.0;
        y = (rec.delta == 1 && rec.u <= t0_) ? 1.0 / gu : 0.0;
        w = approach_ == Approach::A ? ipcw_weight(rec, t0_, gu, gt) : 1.0;
        break;
    }
    r_[i] = r;
    y_[i] = r * y;
    w_[i] = r * w;
    n_at_risk_ += r > 0.0;
  }
  if (n_at_risk_ == 0)
    throw Error(ErrorCode::NoAtRiskSubjects, "no subject is at risk (t0 >= V) at age " + std::to_string(t0_));
}

namespace {

Eigen::ArrayXd probs(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = x * theta;
  return eta.unaryExpr([](double e) { return inv_logit(e); }).array();
}

}  // namespace

Eigen::VectorXd EstimatingFunction::score(const Eigen::VectorXd& theta) const {
  const Eigen::ArrayXd resid = r_ * (y_ - w_ * probs(x_, theta));
  return x_.transpose() * resid.matrix();
}

Eigen::MatrixXd EstimatingFunction::jacobian(const Eigen::VectorXd& theta) const {
  const Eigen::ArrayXd p = probs(x_, theta);
  const Eigen::ArrayXd k = r_ * w_ * p * (1.0 - p);
  return x_.transpose() * (x_.array().colwise() * k).matrix();
}

FitWorkspace EstimatingFunction::workspace(const Eigen::VectorXd& theta) const {
  FitWorkspace ws;
  const Eigen::ArrayXd p = probs(x_, theta);
  const Eigen::ArrayXd resid = r_ * (y_ - w_ * p);
  ws.weights.assign(w_.data(), w_.data() + w_.size());
  ws.at_risk.resize(static_cast<std::size_t>(r_.size()));
  for (Eigen::Index i = 0; i < r_.size(); ++i) ws.at_risk[static_cast<std::size_t>(i)] = r_[i] > 0.0;
  ws.terms = (x_.array().colwise() * resid).matrix();
  ws.score = ws.terms.colwise().sum().transpose();
  const Eigen::ArrayXd k = r_ * w_ * p * (1.0 - p);
  ws.jacobian = x_.transpose() * (x_.array().colwise() * k).matrix();
  return ws;
}

Eigen::VectorXd score(Approach approach, const Eigen::VectorXd& theta, double t0, const Dataset& data,
                      const CensoringModel& g) {
  return EstimatingFunction(approach, t0, data, g).score(theta);
}

Eigen::MatrixXd jacobian(Approach approach, const Eigen::VectorXd& theta, double t0, const Dataset& data,
                         const CensoringModel& g) {
  return EstimatingFunction(approach, t0, data, g).jacobian(theta);
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Stalled: return "stalled";
    case SolveStatus::Separation: return "separation";
  }
  return "unknown";
}

namespace {

// Componentwise size of the score below which it is indistinguishable from
// summation rounding of its terms.
bool at_rounding_floor(const FitWorkspace& ws) {
  const Eigen::VectorXd mag = ws.terms.cwiseAbs().colwise().sum().transpose();
  const double eps = std::numeric_limits<double>::epsilon();
  for (Eigen::Index k = 0; k < ws.score.size(); ++k)
    if (std::abs(ws.score[k]) > 64.0 * eps * mag[k]) return false;
  return true;
}

void check_condition(const Eigen::MatrixXd& j, double limit) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
  const auto& sv = svd.singularValues();
  const double smax = sv[0], smin = sv[sv.size() - 1];
  if (!(smin > 0.0) || !(smax / smin <= limit))
    throw Error(ErrorCode::SingularJacobian, "estimating-function Jacobian is singular or ill-conditioned");
}

}  // namespace

CoefficientEstimate solve(const EstimatingFunction& ef, const SolverOptions& options) {
  const auto dim = static_cast<Eigen::Index>(ef.dim());
  CoefficientEstimate est;
  est.t0 = ef.t0();
  est.theta = options.init ? *options.init : Eigen::VectorXd::Zero(dim);
  if (est.theta.size() != dim) throw Error(ErrorCode::InconsistentDimension, "solver: initial value has wrong length");

  if (ef.n_at_risk() < ef.dim())
    est.warnings.push_back("fewer subjects at risk than parameters at age " + std::to_string(ef.t0()));

  FitWorkspace ws = ef.workspace(est.theta);
  for (est.iterations = 0;; ++est.iterations) {
    est.final_score_norm = ws.score.cwiseAbs().maxCoeff();
    check_condition(ws.jacobian, options.max_condition);
    const Eigen::VectorXd step = ws.jacobian.ldlt().solve(ws.score);
    // Under separation the score vanishes while theta runs off; a root also
    // needs the Newton step to have died out.
    const bool settled = step.cwiseAbs().maxCoeff() < 1e-6 * (1.0 + est.theta.cwiseAbs().maxCoeff());
    if ((est.final_score_norm < options.tol || at_rounding_floor(ws)) && settled) {
      est.status = SolveStatus::Converged;
      break;
    }
    if (est.iterations >= options.max_iter) {
      est.status = SolveStatus::MaxIterations;
      break;
    }
    const double norm0 = ws.score.norm();
    double scale = 1.0;
    FitWorkspace next = ef.workspace(est.theta + step);
    for (int h = 0; h < options.max_halvings && !(next.score.norm() <= norm0); ++h) {
      scale *= 0.5;
      next = ef.workspace(est.theta + scale * step);
    }
    if (!(next.score.norm() <= norm0) && scale < 1.0) {
      est.status = SolveStatus::Stalled;
      break;
    }
    est.theta += scale * step;
    ws = std::move(next);
    if (est.theta.cwiseAbs().maxCoeff() > options.separation_bound) {
      est.final_score_norm = ws.score.cwiseAbs().maxCoeff();
      est.status = SolveStatus::Separation;
      est.warnings.push_back("coefficients diverging (possible complete separation) at age " +
                             std::to_string(ef.t0()));
      break;
    }
  }
  est.converged = est.status == SolveStatus::Converged;
  return est;
}

CoefficientEstimate solve(Approach approach, double t0, const Dataset& data, const CensoringModel& g,
                          const SolverOptions& options) {
  return solve(EstimatingFunction(approach, t0, data, g), options);
}

}  // namespace dcreg
