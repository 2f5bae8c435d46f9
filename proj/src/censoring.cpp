#include "dcreg/censoring.hpp"

#include <algorithm>
#include <numeric>

#include "dcreg/error.hpp"

namespace dcreg {

StepSurvival::StepSurvival(std::vector<double> jump_times, std::vector<double> value_after)
    : times_(std::move(jump_times)), after_(std::move(value_after)) {
  if (times_.size() != after_.size())
    throw Error(ErrorCode::InconsistentDimension, "step survival: times and values differ in length");
}

double StepSurvival::at(double t) const {
  // Jumps strictly before t: lower_bound gives the first time >= t.
  const auto k = static_cast<std::size_t>(std::lower_bound(times_.begin(), times_.end(), t) - times_.begin());
  return k == 0 ? 1.0 : after_[k - 1];
}

StepSurvival StepSurvival::kaplan_meier(std::span<const double> times, std::span<const int> observed) {
  if (times.size() != observed.size())
    throw Error(ErrorCode::InconsistentDimension, "kaplan_meier: times and flags differ in length");
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  std::vector<double> jt, va;
  double s = 1.0;
  std::size_t at_risk = times.size();
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = times[order[i]];
    std::size_t d = 0, m = 0;
    while (i + m < order.size() && times[order[i + m]] == t) {
      d += observed[order[i + m]] != 0;
      ++m;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      jt.push_back(t);
      va.push_back(s);
    }
    at_risk -= m;
    i += m;
  }
  return StepSurvival(std::move(jt), std::move(va));
}

StepSurvival StepSurvival::empirical(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> jt, va;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    jt.push_back(sorted[i]);
    va.push_back(static_cast<double>(sorted.size() - j) / n);
    i = j;
  }
  return StepSurvival(std::move(jt), std::move(va));
}

CensoringMethod CensoringModel::method() const {
  if (!impl_) throw Error(ErrorCode::UnfittedModel, "censoring model has not been fitted");
  return impl_->method();
}

double CensoringModel::support_hint() const {
  if (!impl_) throw Error(ErrorCode::UnfittedModel, "censoring model has not been fitted");
  return impl_->support_hint();
}

double CensoringModel::evaluate(double t, const SubjectRecord& r, const RowRef* row) const {
  if (!impl_) throw Error(ErrorCode::UnfittedModel, "censoring model has not been fitted");
  const double g = impl_->survival(t, r, row);
  return std::clamp(g, kSurvivalFloor, 1.0);
}

double CensoringModel::survival_at(double t, const SubjectRecord& r) const { return evaluate(t, r, nullptr); }

double CensoringModel::survival_at(double t, const SubjectRecord& r, RowRef row) const {
  return evaluate(t, r, &row);
}

CensoringObservations censoring_observations(const Dataset& data) {
  CensoringObservations obs;
  obs.time.reserve(data.n());
  obs.observed.reserve(data.n());
  for (const auto& r : data.records()) {
    if (r.c) {
      obs.time.push_back(*r.c);
      obs.observed.push_back(1);
    } else {
      obs.time.push_back(r.u);
      obs.observed.push_back(1 - r.delta);
    }
  }
  return obs;
}

StratifiedEcdfModel::StratifiedEcdfModel(StrataSpec strata, std::vector<StepSurvival> curves, CensoringMethod tag,
                                         double support)
    : strata_(std::move(strata)), curves_(std::move(curves)), tag_(tag), support_(support) {}

double StratifiedEcdfModel::survival(double t, const SubjectRecord& r, const RowRef*) const {
  if (curves_.size() == 1) return curves_[0].at(t);
  return curves_[strata_.stratum_of(r.z.at(strata_.covariate))].at(t);
}

namespace {

StepSurvival fit_curve(const CensoringObservations& obs, std::span<const std::size_t> rows, bool fully_observed) {
  std::vector<double> t;
  std::vector<int> o;
  t.reserve(rows.size());
  o.reserve(rows.size());
  for (auto i : rows) {
    t.push_back(obs.time[i]);
    o.push_back(obs.observed[i]);
  }
  return fully_observed ? StepSurvival::empirical(t) : StepSurvival::kaplan_meier(t, o);
}

double max_time(const CensoringObservations& obs) {
  return obs.time.empty() ? 0.0 : *std::max_element(obs.time.begin(), obs.time.end());
}

}  // namespace

CensoringModel fit_stratified_ecdf(const Dataset& data, const StrataSpec& strata) {
  if (data.n() == 0) throw Error(ErrorCode::EmptyDataset, "stratified ECDF: empty dataset");
  if (strata.covariate >= data.p() && !strata.cutpoints.empty())
    throw Error(ErrorCode::InvalidParameter, "stratified ECDF: stratifying covariate index out of range");
  if (!std::is_sorted(strata.cutpoints.begin(), strata.cutpoints.end()))
    throw Error(ErrorCode::InvalidParameter, "stratified ECDF: cutpoints must be increasing");

  const auto obs = censoring_observations(data);
  std::vector<std::vector<std::size_t>> members(strata.n_strata());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const std::size_t k = strata.cutpoints.empty() ? 0 : strata.stratum_of(data[i].z[strata.covariate]);
    members[k].push_back(i);
  }
  std::vector<StepSurvival> curves;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].empty())
      throw Error(ErrorCode::EmptyStratum, "stratified ECDF: stratum " + std::to_string(k) + " has no subjects");
    curves.push_back(fit_curve(obs, members[k], data.has_censoring_times()));
  }
  return CensoringModel(std::make_shared<StratifiedEcdfModel>(strata, std::move(curves),
                                                              CensoringMethod::StratifiedEcdf, max_time(obs)));
}

CensoringModel fit_kaplan_meier(const Dataset& data) {
  if (data.n() == 0) throw Error(ErrorCode::EmptyDataset, "Kaplan-Meier: empty dataset");
  const auto obs = censoring_observations(data);
  std::vector<std::size_t> all(data.n());
  std::iota(all.begin(), all.end(), 0);
  StrataSpec single;
  single.cutpoints.clear();
  std::vector<StepSurvival> curves{fit_curve(obs, all, data.has_censoring_times())};
  return CensoringModel(
      std::make_shared<StratifiedEcdfModel>(single, std::move(curves), CensoringMethod::KaplanMeier, max_time(obs)));
}

namespace {

class TrueCensoringModel final : public CensoringModel::Impl {
 public:
  TrueCensoringModel(SurvivalFn fn, double support) : fn_(std::move(fn)), support_(support) {}
  double survival(double t, const SubjectRecord& r, const RowRef*) const override { return fn_(t, r); }
  CensoringMethod method() const override { return CensoringMethod::True; }
  double support_hint() const override { return support_; }

 private:
  SurvivalFn fn_;
  double support_;
};

}  // namespace

CensoringModel make_true_censoring(SurvivalFn fn, double support_hint) {
  if (!fn) throw Error(ErrorCode::InvalidParameter, "true censoring: empty survival function");
  return CensoringModel(std::make_shared<TrueCensoringModel>(std::move(fn), support_hint));
}

CensoringModel fit_censoring(const CensoringSpec& spec, const Dataset& data, const CensoringModel* truth) {
  switch (spec.method) {
    case CensoringMethod::StratifiedEcdf: return fit_stratified_ecdf(data, spec.strata);
    case CensoringMethod::KaplanMeier: return fit_kaplan_meier(data);
    case CensoringMethod::Cox: return fit_cox_censoring(data, false);
    case CensoringMethod::CoxGap: return fit_cox_censoring(data, true);
    case CensoringMethod::Forest: return fit_survival_forest(data, spec.forest);
    case CensoringMethod::True:
      if (truth == nullptr || !truth->fitted())
        throw Error(ErrorCode::InvalidParameter, "censoring method 'true' needs a known censoring law");
      return *truth;
  }
  throw Error(ErrorCode::InvalidParameter, "unknown censoring method");
}

}  // namespace dcreg
