#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dcreg/data.hpp"
#include "dcreg/types.hpp"

namespace dcreg {

/// Survival function of a step distribution, evaluated with the left-limit
/// convention: at(t) = P(X >= t), i.e. only jumps strictly before t count.
class StepSurvival {
 public:
  StepSurvival() = default;  // identically 1
  StepSurvival(std::vector<double> jump_times, std::vector<double> value_after);

  /// Kaplan-Meier from (time, observed) pairs; observed = 0 marks a right-censored time.
  static StepSurvival kaplan_meier(std::span<const double> times, std::span<const int> observed);
  /// Empirical survival #{x_i >= t} / n of fully observed values.
  static StepSurvival empirical(std::span<const double> values);

  double at(double t) const;
  const std::vector<double>& jump_times() const { return times_; }
  const std::vector<double>& values_after() const { return after_; }
  double last_time() const { return times_.empty() ? 0.0 : times_.back(); }

 private:
  std::vector<double> times_;
  std::vector<double> after_;
};

/// Identifies a query record as row `row` of the dataset whose
/// `row_identity()` is `dataset_id`; lets the forest use out-of-bag trees.
struct RowRef {
  std::uint64_t dataset_id = 0;
  std::size_t row = 0;
};

/// Fitted estimate of G(t | z) = P(C >= t | Z = z). Cheap to copy; a
/// default-constructed model is unfitted and refuses to evaluate.
class CensoringModel {
 public:
  static constexpr double kSurvivalFloor = 1e-6;

  class Impl {
   public:
    virtual ~Impl() = default;
    virtual double survival(double t, const SubjectRecord& r, const RowRef* row) const = 0;
    virtual CensoringMethod method() const = 0;
    virtual double support_hint() const = 0;
  };

  CensoringModel() = default;
  explicit CensoringModel(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  bool fitted() const { return impl_ != nullptr; }
  CensoringMethod method() const;
  double support_hint() const;

  /// G(t | record) in [kSurvivalFloor, 1].
  double survival_at(double t, const SubjectRecord& r) const;
  double survival_at(double t, const SubjectRecord& r, RowRef row) const;

  template <class T>
  const T* as() const {
    return dynamic_cast<const T*>(impl_.get());
  }

 private:
  double evaluate(double t, const SubjectRecord& r, const RowRef* row) const;
  std::shared_ptr<const Impl> impl_;
};

/// Censoring observations of a dataset: (c, 1) when c is recorded,
/// otherwise (u, 1 - delta).
struct CensoringObservations {
  std::vector<double> time;
  std::vector<int> observed;
};
CensoringObservations censoring_observations(const Dataset& data);

CensoringModel fit_stratified_ecdf(const Dataset& data, const StrataSpec& strata);
CensoringModel fit_kaplan_meier(const Dataset& data);

struct CoxOptions {
  double tol = 1e-9;
  int max_iter = 50;
};
CensoringModel fit_cox_censoring(const Dataset& data, bool gap_time, const CoxOptions& options = {});

CensoringModel fit_survival_forest(const Dataset& data, const ForestParams& params);

/// Wraps a known censoring law, e.g. the data-generating one in a simulation.
using SurvivalFn = std::function<double(double t, const SubjectRecord& r)>;
CensoringModel make_true_censoring(SurvivalFn fn, double support_hint);

/// Dispatches on spec.method. `truth` is required for CensoringMethod::True.
CensoringModel fit_censoring(const CensoringSpec& spec, const Dataset& data, const CensoringModel* truth = nullptr);

// Concrete fitted states, reachable through CensoringModel::as<T>().

class StratifiedEcdfModel final : public CensoringModel::Impl {
 public:
  StratifiedEcdfModel(StrataSpec strata, std::vector<StepSurvival> curves, CensoringMethod tag, double support);
  double survival(double t, const SubjectRecord& r, const RowRef*) const override;
  CensoringMethod method() const override { return tag_; }
  double support_hint() const override { return support_; }
  const std::vector<StepSurvival>& curves() const { return curves_; }

 private:
  StrataSpec strata_;
  std::vector<StepSurvival> curves_;
  CensoringMethod tag_;
  double support_;
};

}  // namespace dcreg
