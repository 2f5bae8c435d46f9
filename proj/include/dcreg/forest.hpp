#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "dcreg/censoring.hpp"

namespace dcreg {

namespace detail {

struct SplitCandidate {
  bool found = false;
  double threshold = 0.0;  // left child: value <= threshold
  double statistic = 0.0;  // |standardized log-rank|
  std::size_t n_left = 0;
};

/// Best log-rank cut of one covariate within a node. `value`, `time` and
/// `observed` describe the node's members; both children must keep at
/// least `min_child` members. Cuts lie at midpoints of distinct values.
SplitCandidate best_split(std::span<const double> value, std::span<const double> time,
                          std::span<const int> observed, std::size_t min_child);

}  // namespace detail

/// Survival forest for the censoring distribution. Each tree is grown on a
/// bootstrap resample by log-rank splitting. The resample fixes only the
/// tree's shape: each leaf holds the product-limit curve of all training rows
/// routed to it, so a tree with no split reproduces the marginal curve. A
/// training row queried through RowRef uses only the trees that left it out
/// of the bag (when enabled).
class SurvivalForest final : public CensoringModel::Impl {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0, right = 0;
    std::uint32_t leaf = 0;  // index into leaves when feature < 0
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<StepSurvival> leaves;
    std::vector<std::uint16_t> inbag;  // bootstrap multiplicity per training row
  };

  SurvivalForest(const Dataset& data, const ForestParams& params);

  double survival(double t, const SubjectRecord& r, const RowRef* row) const override;
  CensoringMethod method() const override { return CensoringMethod::Forest; }
  double support_hint() const override { return support_; }

  const std::vector<Tree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }
  /// Queries on training rows that had no out-of-bag tree and fell back to all trees.
  std::size_t degenerate_queries() const { return degenerate_.load(); }

 private:
  const StepSurvival& leaf_for(const Tree& tree, const std::vector<double>& z) const;

  ForestParams params_;
  std::uint64_t train_id_ = 0;
  std::size_t n_train_ = 0;
  double support_ = 0.0;
  std::vector<Tree> trees_;
  mutable std::atomic<std::size_t> degenerate_{0};
};

}  // namespace dcreg
