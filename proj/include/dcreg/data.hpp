#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcreg/types.hpp"

namespace dcreg {

/// One subject: exit age U = min(T, C), event flag delta = I(T <= C),
/// initial-event age V, covariates Z and, when known, the censoring age C.
struct SubjectRecord {
  double u = 0.0;
  int delta = 0;
  double v = 0.0;
  std::vector<double> z;
  std::optional<double> c;
};

/// A validated, immutable collection of subjects sharing one covariate
/// dimension. Either every record carries c or none does.
class Dataset {
 public:
  Dataset() = default;

  const std::vector<SubjectRecord>& records() const { return records_; }
  const SubjectRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t n() const { return records_.size(); }
  std::size_t p() const { return p_; }
  const std::vector<std::string>& names() const { return names_; }
  bool has_censoring_times() const { return has_c_; }

  /// Fingerprint of the fields a censoring estimator trains on: (v, z, c)
  /// when c is known, (u, delta, v, z) otherwise. Two datasets with equal
  /// identity have interchangeable rows for out-of-bag lookups.
  std::uint64_t row_identity() const { return identity_; }

  /// Rows drawn by index, e.g. a bootstrap resample.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  friend Dataset validate_dataset(std::vector<SubjectRecord>, std::vector<std::string>);

  std::vector<SubjectRecord> records_;
  std::vector<std::string> names_;
  std::size_t p_ = 0;
  bool has_c_ = false;
  std::uint64_t identity_ = 0;
};

/// Checks every record invariant and assigns default covariate names
/// (z_1..z_p) when none are given.
Dataset validate_dataset(std::vector<SubjectRecord> raw, std::vector<std::string> names = {});

inline bool risk_indicator(const SubjectRecord& r, double t0) { return t0 >= r.v; }

struct RiskSummary {
  double t0 = 0.0;
  std::size_t at_risk = 0;          // sum I(t0 >= V)
  std::size_t observed_events = 0;  // n* = sum I(V < t0) delta I(U <= t0)
};

RiskSummary risk_summary(const Dataset& data, double t0);
std::vector<RiskSummary> risk_diagnostics(const Dataset& data, std::span<const double> grid);

/// Columns u, delta, v, [c,] then one column per covariate; header required.
Dataset read_csv(std::istream& in);
Dataset read_csv_file(const std::string& path);
void write_csv(const Dataset& data, std::ostream& out);

/// Full configuration of a fit across an age grid.
struct AnalysisSpec {
  std::vector<double> t0_grid;
  Approach approach = Approach::A;
  CensoringSpec censoring;
  SeMethod se = SeMethod::Sandwich;
  BootstrapSpec bootstrap;

  void validate() const;
};

/// Parses "start:end:step" or a comma list of ages; result is strictly increasing.
std::vector<double> parse_age_grid(const std::string& text);

}  // namespace dcreg
