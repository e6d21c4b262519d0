#pragma once

// Bottom-up pruning into class probability trees. A collapsed subtree becomes
// a leaf carrying the subtree root's class counts.
//
// Pessimistic: with N training instances at a node, E leaf errors summed over
// its (already pruned) subtree of L leaves and continuity correction c,
//   subtree estimate  S  = E + c·L
//   standard error    SE = sqrt(S·(N − S) / N)
// the node collapses when errors_as_leaf + c <= S + z·SE.
//
// Reduced error: the node collapses when a leaf there would misclassify no
// more holdout instances than its pruned subtree does.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/error.hpp"
#include "mdt/induction.hpp"

namespace mdt {

struct Pessimistic {
  double z = 1.0;
  double correction = 0.5;
};

struct ReducedError {
  std::reference_wrapper<const Dataset> holdout;
};

using PruneMethod = std::variant<Pessimistic, ReducedError>;

namespace detail {

inline void collapse(TreeNode& node) {
  node.test.reset();
  node.children.clear();
  node.label = node.dist.majority();
}

struct PessimisticPruner {
  Pessimistic params;
  std::vector<NodePath> collapsed;

  struct Stats {
    double errors = 0;
    double leaves = 0;
  };

  Stats run(TreeNode& node, NodePath& path) {
    if (node.is_leaf()) return {static_cast<double>(leaf_errors(node)), 1};
    Stats sub;
    for (std::size_t b = 0; b < node.children.size(); ++b) {
      path.push_back(b);
      const Stats s = run(node.children[b], path);
      path.pop_back();
      sub.errors += s.errors;
      sub.leaves += s.leaves;
    }
    const double n = static_cast<double>(node.dist.total());
    const double estimate = sub.errors + params.correction * sub.leaves;
    const double se = estimate < n ? std::sqrt(estimate * (n - estimate) / n) : 0.0;
    const double as_leaf = static_cast<double>(node.dist.errors_as_leaf());
    if (as_leaf + params.correction <= estimate + params.z * se) {
      collapse(node);
      collapsed.push_back(path);
      return {as_leaf, 1};
    }
    return sub;
  }

  static std::size_t leaf_errors(const TreeNode& leaf) {
    return leaf.dist.total() - leaf.dist.counts[leaf.label];
  }
};

struct ReducedErrorPruner {
  const Dataset& holdout;
  std::vector<NodePath> collapsed;

  // Returns holdout errors of the pruned subtree over `rows`.
  std::size_t run(TreeNode& node, const std::vector<std::size_t>& rows, NodePath& path) {
    if (node.is_leaf()) return errors_at(node.label, rows);
    std::vector<std::vector<std::size_t>> parts(node.children.size());
    for (const auto r : rows) parts[route(node, holdout[r])].push_back(r);
    std::size_t sub = 0;
    for (std::size_t b = 0; b < node.children.size(); ++b) {
      path.push_back(b);
      sub += run(node.children[b], parts[b], path);
      path.pop_back();
    }
    const std::size_t as_leaf = errors_at(node.dist.majority(), rows);
    if (as_leaf <= sub) {
      collapse(node);
      collapsed.push_back(path);
      return as_leaf;
    }
    return sub;
  }

  std::size_t errors_at(std::size_t label, const std::vector<std::size_t>& rows) const {
    std::size_t e = 0;
    for (const auto r : rows) e += holdout[r].label != label;
    return e;
  }
};

/// Keeps only the topmost paths, in breadth-first order.
inline std::vector<NodePath> topmost(std::vector<NodePath> paths) {
  std::sort(paths.begin(), paths.end(), breadth_first_less);
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  std::vector<NodePath> out;
  for (const auto& p : paths) {
    const bool covered = std::any_of(out.begin(), out.end(), [&](const NodePath& q) {
      return q.size() <= p.size() && std::equal(q.begin(), q.end(), p.begin());
    });
    if (!covered) out.push_back(p);
  }
  return out;
}

}  // namespace detail

inline Tree prune(const Tree& tree, const PruneMethod& method = Pessimistic{}) {
  Tree out = tree;
  NodePath path;
  PruningRecord record;
  std::vector<NodePath> collapsed;
  if (const auto* p = std::get_if<Pessimistic>(&method)) {
    detail::PessimisticPruner pruner{*p, {}};
    pruner.run(out.root, path);
    collapsed = std::move(pruner.collapsed);
    record.method = "pessimistic";
    record.parameters = {{"z", p->z}, {"correction", p->correction}};
  } else {
    const Dataset& holdout = std::get<ReducedError>(method).holdout.get();
    if (holdout.empty()) throw Error(ErrorKind::EmptyHoldout, "holdout set is empty");
    if (*holdout.schema != *tree.schema)
      throw Error(ErrorKind::SchemaMismatch, "holdout schema differs from the tree's");
    std::vector<std::size_t> rows(holdout.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    detail::ReducedErrorPruner pruner{holdout, {}};
    pruner.run(out.root, rows, path);
    collapsed = std::move(pruner.collapsed);
    record.method = "reduced-error";
    record.parameters = {{"holdout_size", static_cast<double>(holdout.size())}};
  }
  if (tree.pruning)
    collapsed.insert(collapsed.end(), tree.pruning->collapsed.begin(),
                     tree.pruning->collapsed.end());
  record.collapsed = detail::topmost(std::move(collapsed));
  out.pruning = std::move(record);
  return out;
}

}  // namespace mdt
