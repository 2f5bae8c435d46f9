#include "dcreg/inference.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "dcreg/csv.hpp"
#include "dcreg/error.hpp"
#include "dcreg/parallel.hpp"
#include "dcreg/random.hpp"

namespace dcreg {

namespace {

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const char* what) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) throw Error(ErrorCode::SingularJacobian, what);
  return lu.inverse();
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::VectorXd sqrt_diag(const Eigen::MatrixXd& m) {
  return m.diagonal().unaryExpr([](double v) { return std::sqrt(std::max(v, 0.0)); });
}

}  // namespace

InferenceSummary sandwich_variance(const EstimatingFunction& ef, const Eigen::VectorXd& theta_hat) {
  const FitWorkspace ws = ef.workspace(theta_hat);
  const double n = static_cast<double>(ef.n());
  const Eigen::MatrixXd jinv = checked_inverse(ws.jacobian, "sandwich: singular Jacobian");
  const Eigen::RowVectorXd mean = ws.terms.colwise().mean();
  const Eigen::MatrixXd centered = ws.terms.rowwise() - mean;
  const Eigen::MatrixXd v = centered.transpose() * centered;

  InferenceSummary out;
  out.method = SeMethod::Sandwich;
  out.covariance = symmetrize(jinv * v * jinv.transpose());
  out.se = sqrt_diag(out.covariance);
  out.gamma_hat = ws.jacobian / n;
  out.sigma_hat = ws.terms.transpose() * ws.terms / n;
  return out;
}

InferenceSummary sandwich_variance(Approach approach, const Eigen::VectorXd& theta_hat, double t0,
                                   const Dataset& data, const CensoringModel& g) {
  return sandwich_variance(EstimatingFunction(approach, t0, data, g), theta_hat);
}

AvDifference av_difference(const Eigen::VectorXd& theta_hat, double t0, const Dataset& data,
                           const CensoringValues& g) {
  const double n = static_cast<double>(data.n());
  const FitWorkspace wa = EstimatingFunction(Approach::A, t0, data, g).workspace(theta_hat);
  const FitWorkspace wb = EstimatingFunction(Approach::B, t0, data, g).workspace(theta_hat);
  AvDifference out;
  out.gamma_a = wa.jacobian / n;
  out.gamma_b = wb.jacobian / n;
  out.sigma_a = wa.terms.transpose() * wa.terms / n;
  out.sigma_b = wb.terms.transpose() * wb.terms / n;
  const Eigen::MatrixXd ginv = checked_inverse(out.gamma_a, "av_difference: singular Gamma_A");
  out.diff = symmetrize(ginv * (out.sigma_a - out.sigma_b) * ginv.transpose() / n);
  return out;
}

AvDifference av_difference(const Eigen::VectorXd& theta_hat, double t0, const Dataset& data,
                           const CensoringModel& g) {
  return av_difference(theta_hat, t0, data, censoring_values(data, g, t0));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidParameter, "normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

WaldInterval wald_ci(const Eigen::VectorXd& estimate, const Eigen::VectorXd& se, double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidParameter, "wald_ci: level must lie in (0, 1)");
  if (estimate.size() != se.size()) throw Error(ErrorCode::InconsistentDimension, "wald_ci: length mismatch");
  const double z = normal_quantile(0.5 * (1.0 + level));
  return {estimate - z * se, estimate + z * se};
}

std::vector<std::vector<InferenceSummary>> bootstrap_se_grid(std::span<const Approach> approaches,
                                                             std::span<const double> t0_grid, const Dataset& data,
                                                             const CensoringSpec& spec,
                                                             const BootstrapOptions& options,
                                                             const CensoringModel* truth) {
  if (options.replicates < 2) throw Error(ErrorCode::InvalidParameter, "bootstrap needs at least 2 replicates");
  const std::size_t B = options.replicates, na = approaches.size(), nt = t0_grid.size();
  const std::size_t n = data.n();
  const auto dim = static_cast<Eigen::Index>(data.p() + 1);

  std::vector<CensoringValues> frozen;
  if (options.freeze_censoring) {
    const CensoringModel g = fit_censoring(spec, data, truth);
    for (double t0 : t0_grid) frozen.push_back(censoring_values(data, g, t0));
  }

  // theta[b][a * nt + t]; ok flags alongside.
  std::vector<std::vector<Eigen::VectorXd>> theta(B, std::vector<Eigen::VectorXd>(na * nt));
  std::vector<std::vector<char>> ok(B, std::vector<char>(na * nt, 0));

  parallel_for(
      B,
      [&](std::size_t b) {
        Rng rng = substream(options.seed, b);
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(rng, n));
        try {
          const Dataset boot = data.subset(rows);
          CensoringModel g;
          if (!options.freeze_censoring) g = fit_censoring(spec, boot, truth);
          for (std::size_t t = 0; t < nt; ++t) {
            CensoringValues cv;
            if (options.freeze_censoring) {
              cv.at_u.resize(n);
              cv.at_t0.resize(n);
              for (std::size_t i = 0; i < n; ++i) {
                cv.at_u[i] = frozen[t].at_u[rows[i]];
                cv.at_t0[i] = frozen[t].at_t0[rows[i]];
              }
            } else {
              cv = censoring_values(boot, g, t0_grid[t]);
            }
            for (std::size_t a = 0; a < na; ++a) {
              try {
                const auto est = solve(EstimatingFunction(approaches[a], t0_grid[t], boot, cv), options.solver);
                if (est.converged) {
                  theta[b][a * nt + t] = est.theta;
                  ok[b][a * nt + t] = 1;
                }
              } catch (const Error&) {
              }
            }
          }
        } catch (const Error&) {
          // e.g. an empty stratum in the resample: every fit of this replicate fails
        }
      },
      options.jobs);

  std::vector<std::vector<InferenceSummary>> out(na, std::vector<InferenceSummary>(nt));
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t t = 0; t < nt; ++t) {
      const std::size_t k = a * nt + t;
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
      std::size_t kept = 0;
      for (std::size_t b = 0; b < B; ++b)
        if (ok[b][k]) {
          mean += theta[b][k];
          ++kept;
        }
      auto& s = out[a][t];
      s.method = SeMethod::Bootstrap;
      s.replicates = kept;
      s.failures = B - kept;
      if (static_cast<double>(s.failures) > options.max_failure_fraction * static_cast<double>(B) || kept < 2)
        throw Error(ErrorCode::TooManyFailures, "bootstrap: " + std::to_string(s.failures) + " of " +
                                                    std::to_string(B) + " replicates failed at age " +
                                                    csv::number(t0_grid[t]));
      mean /= static_cast<double>(kept);
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
      for (std::size_t b = 0; b < B; ++b)
        if (ok[b][k]) {
          const Eigen::VectorXd d = theta[b][k] - mean;
          cov += d * d.transpose();
        }
      s.covariance = symmetrize(cov / static_cast<double>(kept - 1));
      s.se = sqrt_diag(s.covariance);
    }
  }
  return out;
}

InferenceSummary bootstrap_se(Approach approach, double t0, const Dataset& data, const CensoringSpec& spec,
                              const BootstrapOptions& options, const CensoringModel* truth) {
  const Approach a[] = {approach};
  const double t[] = {t0};
  return bootstrap_se_grid(a, t, data, spec, options, truth)[0][0];
}

}  // namespace dcreg
