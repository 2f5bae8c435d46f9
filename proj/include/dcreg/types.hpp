#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dcreg {

/// Which estimating function is solved at an analysis age.
///   IM - weights W*, response I(T < t0), no risk-set indicator
///   A  - whole residual weighted by W, restricted to t0 >= V
///   B  - only the response weighted by W, restricted to t0 >= V
enum class Approach { IM, A, B };

enum class CensoringMethod { StratifiedEcdf, Cox, CoxGap, Forest, True, KaplanMeier };

enum class SeMethod { Sandwich, Bootstrap, Both };

std::string_view to_string(Approach a);
std::string_view to_string(CensoringMethod m);
std::string_view to_string(SeMethod m);

// Accepts the CLI spellings ("a", "b", "im"; "ecdf", "cox", "coxgap", "forest"/"srf", ...).
Approach parse_approach(std::string_view s);
CensoringMethod parse_censoring_method(std::string_view s);
SeMethod parse_se_method(std::string_view s);

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t min_node_size = 100;
  std::size_t mtry = 0;  // 0: floor(sqrt(p)), at least 1
  bool oob_for_insample = true;
  std::uint64_t seed = 1;

  std::size_t resolved_mtry(std::size_t p) const;
  void validate(std::size_t p) const;
};

/// Strata for the empirical censoring estimator: subjects are binned on one
/// covariate by the cutpoints; bin k is [cut[k-1], cut[k]).
struct StrataSpec {
  std::size_t covariate = 0;
  std::vector<double> cutpoints{0.25, 0.5, 0.75};

  std::size_t stratum_of(double value) const;
  std::size_t n_strata() const { return cutpoints.size() + 1; }
};

struct CensoringSpec {
  CensoringMethod method = CensoringMethod::StratifiedEcdf;
  StrataSpec strata;
  ForestParams forest;
};

struct BootstrapSpec {
  std::size_t replicates = 1000;
  std::uint64_t seed = 1;
  bool freeze_censoring = false;  // reuse the full-data G instead of refitting per resample
};

}  // namespace dcreg
