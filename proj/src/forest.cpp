#include "dcreg/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcreg/error.hpp"
#include "dcreg/random.hpp"

namespace dcreg {

namespace detail {

namespace {

// Fenwick tree over positions 0..n-1.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : t_(n + 1, 0.0) {}
  void add(std::size_t i, double x) {
    for (++i; i < t_.size(); i += i & (~i + 1)) t_[i] += x;
  }
  // sum over positions [0, i)
  double prefix(std::size_t i) const {
    double s = 0.0;
    for (; i > 0; i -= i & (~i + 1)) s += t_[i];
    return s;
  }

 private:
  std::vector<double> t_;
};

}  // namespace

SplitCandidate best_split(std::span<const double> value, std::span<const double> time, std::span<const int> observed,
                          std::size_t min_child) {
  SplitCandidate best;
  const std::size_t m = value.size();
  if (m < 2 * min_child || m < 2) return best;

  std::vector<double> et;
  for (std::size_t i = 0; i < m; ++i)
    if (observed[i]) et.push_back(time[i]);
  std::sort(et.begin(), et.end());
  et.erase(std::unique(et.begin(), et.end()), et.end());
  const std::size_t J = et.size();
  if (J == 0) return best;

  // Per event time: deaths d_j and node risk set Y_j.
  std::vector<double> d(J, 0.0), y(J, 0.0);
  std::vector<long> k_of(m);
  for (std::size_t i = 0; i < m; ++i) {
    const long k = static_cast<long>(std::upper_bound(et.begin(), et.end(), time[i]) - et.begin()) - 1;
    k_of[i] = k;
    if (k >= 0) y[static_cast<std::size_t>(k)] += 1.0;
    if (observed[i]) d[static_cast<std::size_t>(k)] += 1.0;
  }
  for (std::size_t j = J - 1; j-- > 0;) y[j] += y[j + 1];

  // Prefix sums (inclusive) of a_j = d/Y, c_j = d(Y-d)/(Y(Y-1)), e_j = c_j/Y.
  std::vector<double> apre(J), cpre(J), epre(J);
  double sa = 0.0, sc = 0.0, se = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    const double c = y[j] > 1.0 ? d[j] * (y[j] - d[j]) / (y[j] * (y[j] - 1.0)) : 0.0;
    sa += d[j] / y[j];
    sc += c;
    se += c / y[j];
    apre[j] = sa;
    cpre[j] = sc;
    epre[j] = se;
  }

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });

  // Moving members left one at a time keeps, for the left child,
  //   N = sum_j (d_Lj - Y_Lj a_j),  D = sum_j c_j Y_Lj - sum_j e_j Y_Lj^2,
  // where Y_Lj counts left members with event-index k >= j.
  Fenwick count(J), esum(J);
  double n_left_at_events = 0.0;
  double num = 0.0, lin = 0.0, quad = 0.0;
  for (std::size_t pos = 0; pos < m; ++pos) {
    const std::size_t i = order[pos];
    const long k = k_of[i];
    if (observed[i]) num += 1.0;
    if (k >= 0) {
      const auto ku = static_cast<std::size_t>(k);
      num -= apre[ku];
      lin += cpre[ku];
      // sum_{j<=k} e_j Y_Lj = E(k) * #{k_m >= k} + sum_{k_m < k} E(k_m)
      const double below = count.prefix(ku);
      const double s = epre[ku] * (n_left_at_events - below) + esum.prefix(ku);
      quad += 2.0 * s + epre[ku];
      count.add(ku, 1.0);
      esum.add(ku, epre[ku]);
      n_left_at_events += 1.0;
    }
    const std::size_t n_left = pos + 1;
    if (pos + 1 == m || value[order[pos + 1]] == value[i]) continue;
    if (n_left < min_child || m - n_left < min_child) continue;
    const double var = lin - quad;
    if (!(var > 1e-12)) continue;
    const double stat = std::abs(num) / std::sqrt(var);
    if (!best.found || stat > best.statistic) {
      const double a = value[i], b = value[order[pos + 1]];
      double mid = a + 0.5 * (b - a);
      if (!(mid < b)) mid = a;
      best = {true, mid, stat, n_left};
    }
  }
  return best;
}

}  // namespace detail

namespace {

StepSurvival leaf_curve(const CensoringObservations& obs, const std::vector<std::size_t>& rows, bool fully_observed) {
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

SurvivalForest::Tree grow_tree(const Dataset& data, const CensoringObservations& obs, const ForestParams& params,
                               std::size_t tree_index) {
  const std::size_t n = data.n(), p = data.p();
  const std::size_t mtry = params.resolved_mtry(p);
  Rng rng = substream(params.seed, tree_index);

  SurvivalForest::Tree tree;
  tree.inbag.assign(n, 0);
  std::vector<std::size_t> sample(n);
  for (auto& s : sample) {
    s = static_cast<std::size_t>(uniform_index(rng, n));
    if (tree.inbag[s] < UINT16_MAX) ++tree.inbag[s];
  }

  struct Pending {
    std::uint32_t node;
    std::vector<std::size_t> members;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack;
  stack.push_back({0, std::move(sample)});
  std::vector<std::size_t> features(p);
  std::vector<double> val, tim;
  std::vector<int> obv;
  std::uint32_t n_leaves = 0;

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const std::size_t m = cur.members.size();

    detail::SplitCandidate chosen;
    int chosen_feature = -1;
    // nodes larger than min_node_size may split; children have no size floor
    if (m > params.min_node_size && m >= 2 && p > 0) {
      std::iota(features.begin(), features.end(), 0);
      for (std::size_t k = 0; k < mtry; ++k) {
        const std::size_t r = k + static_cast<std::size_t>(uniform_index(rng, p - k));
        std::swap(features[k], features[r]);
      }
      tim.resize(m);
      obv.resize(m);
      val.resize(m);
      for (std::size_t a = 0; a < m; ++a) {
        tim[a] = obs.time[cur.members[a]];
        obv[a] = obs.observed[cur.members[a]];
      }
      for (std::size_t k = 0; k < mtry; ++k) {
        const std::size_t f = features[k];
        for (std::size_t a = 0; a < m; ++a) val[a] = data[cur.members[a]].z[f];
        const auto cand = detail::best_split(val, tim, obv, 1);
        if (cand.found && (!chosen.found || cand.statistic > chosen.statistic)) {
          chosen = cand;
          chosen_feature = static_cast<int>(f);
        }
      }
    }

    if (!chosen.found) {
      tree.nodes[cur.node].feature = -1;
      tree.nodes[cur.node].leaf = n_leaves++;
      continue;
    }
    std::vector<std::size_t> left, right;
    left.reserve(chosen.n_left);
    right.reserve(m - chosen.n_left);
    for (auto i : cur.members)
      (data[i].z[static_cast<std::size_t>(chosen_feature)] <= chosen.threshold ? left : right).push_back(i);
    const auto li = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[cur.node];
    node.feature = chosen_feature;
    node.threshold = chosen.threshold;
    node.left = li;
    node.right = li + 1;
    stack.push_back({li + 1, std::move(right)});
    stack.push_back({li, std::move(left)});
  }

  // Leaf curves from every training row that lands in the leaf.
  std::vector<std::vector<std::size_t>> rows(n_leaves);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t k = 0;
    while (tree.nodes[k].feature >= 0) {
      const auto& nd = tree.nodes[k];
      k = data[i].z[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    rows[tree.nodes[k].leaf].push_back(i);
  }
  tree.leaves.reserve(n_leaves);
  for (const auto& r : rows) tree.leaves.push_back(leaf_curve(obs, r, data.has_censoring_times()));
  return tree;
}

}  // namespace

SurvivalForest::SurvivalForest(const Dataset& data, const ForestParams& params)
    : params_(params), train_id_(data.row_identity()), n_train_(data.n()) {
  params_.validate(data.p());
  if (data.n() == 0) throw Error(ErrorCode::EmptyDataset, "survival forest: empty dataset");
  const auto obs = censoring_observations(data);
  for (double t : obs.time) support_ = std::max(support_, t);
  trees_.reserve(params_.n_trees);
  for (std::size_t b = 0; b < params_.n_trees; ++b) trees_.push_back(grow_tree(data, obs, params_, b));
}

const StepSurvival& SurvivalForest::leaf_for(const Tree& tree, const std::vector<double>& z) const {
  std::uint32_t k = 0;
  while (tree.nodes[k].feature >= 0) {
    const auto& nd = tree.nodes[k];
    k = z[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return tree.leaves[tree.nodes[k].leaf];
}

double SurvivalForest::survival(double t, const SubjectRecord& r, const RowRef* row) const {
  if (params_.oob_for_insample && row != nullptr && row->dataset_id == train_id_ && row->row < n_train_) {
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& tree : trees_) {
      if (tree.inbag[row->row] != 0) continue;
      sum += leaf_for(tree, r.z).at(t);
      ++used;
    }
    if (used > 0) return sum / static_cast<double>(used);
    degenerate_.fetch_add(1, std::memory_order_relaxed);
  }
  double sum = 0.0;
  for (const auto& tree : trees_) sum += leaf_for(tree, r.z).at(t);
  return sum / static_cast<double>(trees_.size());
}

CensoringModel fit_survival_forest(const Dataset& data, const ForestParams& params) {
  return CensoringModel(std::make_shared<SurvivalForest>(data, params));
}

}  // namespace dcreg
