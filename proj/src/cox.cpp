#include "dcreg/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcreg/error.hpp"

namespace dcreg {

namespace {

std::vector<std::size_t> ascending(std::span<const double> time) {
  std::vector<std::size_t> order(time.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });
  return order;
}

void check_inputs(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event) {
  if (static_cast<std::size_t>(x.rows()) != time.size() || time.size() != event.size())
    throw Error(ErrorCode::InconsistentDimension, "cox: design, times and events differ in length");
}

}  // namespace

CoxScore cox_score(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event,
                   const Eigen::VectorXd& beta) {
  check_inputs(x, time, event);
  const Eigen::Index p = x.cols();
  const auto order = ascending(time);
  const Eigen::VectorXd eta = x * beta;

  CoxScore out;
  out.score = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  // Walk from the largest time down so the running sums are the risk set {time >= t}.
  std::size_t hi = order.size();
  while (hi > 0) {
    const double t = time[order[hi - 1]];
    std::size_t lo = hi;
    while (lo > 0 && time[order[lo - 1]] == t) --lo;
    double d = 0.0;
    Eigen::VectorXd xsum = Eigen::VectorXd::Zero(p);
    double eta_sum = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t i = order[k];
      const double w = std::exp(eta[i]);
      s0 += w;
      s1.noalias() += w * x.row(i).transpose();
      s2.noalias() += w * x.row(i).transpose() * x.row(i);
      if (event[i]) {
        d += 1.0;
        xsum += x.row(i).transpose();
        eta_sum += eta[i];
      }
    }
    if (d > 0.0) {
      const Eigen::VectorXd mean = s1 / s0;
      out.loglik += eta_sum - d * std::log(s0);
      out.score += xsum - d * mean;
      out.information += d * (s2 / s0 - mean * mean.transpose());
    }
    hi = lo;
  }
  return out;
}

double cox_score_test(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event) {
  const auto s = cox_score(x, time, event, Eigen::VectorXd::Zero(x.cols()));
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s.information);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
    throw Error(ErrorCode::SingularInformation, "cox score test: singular information at beta = 0");
  return s.score.dot(ldlt.solve(s.score));
}

CoxFit fit_cox(const Eigen::MatrixXd& x, std::span<const double> time, std::span<const int> event,
               const CoxOptions& options) {
  check_inputs(x, time, event);
  if (std::none_of(event.begin(), event.end(), [](int e) { return e != 0; }))
    throw Error(ErrorCode::InvalidParameter, "cox: no observed events");

  const Eigen::Index p = x.cols();
  CoxFit fit;
  fit.center = x.colwise().mean().transpose();
  const Eigen::MatrixXd xc = x.rowwise() - fit.center.transpose();
  fit.beta = Eigen::VectorXd::Zero(p);

  // A column without variation carries no information; keep its coefficient at 0.
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < p; ++j)
    if (xc.col(j).cwiseAbs().maxCoeff() > 0.0) active.push_back(j);
  const auto na = static_cast<Eigen::Index>(active.size());

  Eigen::MatrixXd xa(xc.rows(), na);
  for (Eigen::Index k = 0; k < na; ++k) xa.col(k) = xc.col(active[k]);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(na);

  std::size_t n_events = 0;
  for (int e : event) n_events += e != 0;

  if (na > 0) {
    auto cur = cox_score(xa, time, event, b);
    for (fit.iterations = 0;; ++fit.iterations) {
      const double smax = cur.score.cwiseAbs().maxCoeff();
      if (smax < options.tol) {
        fit.converged = true;
        break;
      }
      if (fit.iterations >= options.max_iter) break;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.information);
      if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
        throw Error(ErrorCode::SingularInformation, "cox: singular information matrix");
      const Eigen::VectorXd step = ldlt.solve(cur.score);
      if (step.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + b.cwiseAbs().maxCoeff())) {
        // remaining score is summation noise
        fit.converged = true;
        break;
      }
      double scale = 1.0;
      bool improved = false;
      CoxScore next;
      for (int h = 0; h < 30; ++h, scale *= 0.5) {
        next = cox_score(xa, time, event, b + scale * step);
        // near the optimum the log-likelihood is flat to rounding; a smaller score also counts
        if (std::isfinite(next.loglik) &&
            (next.loglik >= cur.loglik || next.score.norm() < cur.score.norm())) {
          improved = true;
          break;
        }
      }
      if (!improved) {
        // No representable ascent left: the remaining score is rounding noise
        // when it is tiny relative to the number of terms summed.
        fit.converged = smax < 1e-9 * static_cast<double>(n_events) + options.tol;
        break;
      }
      b += scale * step;
      cur = std::move(next);
    }
    fit.loglik = cur.loglik;
    if (!fit.converged)
      throw Error(ErrorCode::Nonconvergence, "cox: Newton-Raphson did not converge in " +
                                                 std::to_string(options.max_iter) + " iterations");
  } else {
    fit.converged = true;
    fit.loglik = cox_score(xa, time, event, b).loglik;
  }
  for (Eigen::Index k = 0; k < na; ++k) fit.beta[active[k]] = b[k];

  // Breslow increments at z = center.
  const auto order = ascending(time);
  const Eigen::VectorXd w = (xc * fit.beta).array().exp();
  double s0 = 0.0;
  std::vector<double> jt, dh;
  std::size_t hi = order.size();
  while (hi > 0) {
    const double t = time[order[hi - 1]];
    std::size_t lo = hi;
    double d = 0.0;
    while (lo > 0 && time[order[lo - 1]] == t) {
      --lo;
      s0 += w[order[lo]];
      d += event[order[lo]] != 0;
    }
    if (d > 0.0) {
      jt.push_back(t);
      dh.push_back(d / s0);
    }
    hi = lo;
  }
  std::reverse(jt.begin(), jt.end());
  std::reverse(dh.begin(), dh.end());
  fit.jump_times = std::move(jt);
  fit.hazard_jumps = std::move(dh);
  return fit;
}

CoxCensoringModel::CoxCensoringModel(CoxFit fit, bool gap_time, double support)
    : fit_(std::move(fit)), gap_(gap_time), support_(support) {
  cum_log_.resize(fit_.hazard_jumps.size() + 1, 0.0);
  for (std::size_t j = 0; j < fit_.hazard_jumps.size(); ++j) {
    const double q = 1.0 - fit_.hazard_jumps[j];
    cum_log_[j + 1] = cum_log_[j] + (q > 0.0 ? std::log(q) : -INFINITY);
  }
}

double CoxCensoringModel::survival(double t, const SubjectRecord& r, const RowRef*) const {
  double s = t;
  if (gap_) {
    s = t - (r.v + kGapOffset);
    if (s <= 0.0) return 1.0;
  }
  const auto& jt = fit_.jump_times;
  const auto k = static_cast<std::size_t>(std::lower_bound(jt.begin(), jt.end(), s) - jt.begin());
  if (k == 0) return 1.0;
  double lp = 0.0;
  for (Eigen::Index j = 0; j < fit_.beta.size(); ++j) lp += fit_.beta[j] * (r.z[j] - fit_.center[j]);
  if (lp == 0.0) return std::exp(cum_log_[k]);
  return std::exp(std::exp(lp) * cum_log_[k]);
}

CensoringModel fit_cox_censoring(const Dataset& data, bool gap_time, const CoxOptions& options) {
  if (data.n() == 0) throw Error(ErrorCode::EmptyDataset, "cox censoring: empty dataset");
  if (data.p() == 0) throw Error(ErrorCode::InvalidParameter, "cox censoring: needs at least one covariate");
  auto obs = censoring_observations(data);
  double support = 0.0;
  for (double t : obs.time) support = std::max(support, t);
  if (gap_time)
    for (std::size_t i = 0; i < data.n(); ++i) obs.time[i] -= data[i].v + CoxCensoringModel::kGapOffset;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(data.p()));
  for (std::size_t i = 0; i < data.n(); ++i)
    for (std::size_t j = 0; j < data.p(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i].z[j];
  auto fit = fit_cox(x, obs.time, obs.observed, options);
  return CensoringModel(std::make_shared<CoxCensoringModel>(std::move(fit), gap_time, support));
}

}  // namespace dcreg
