#pragma once

// Top-down decision tree induction by maximum information gain.
//
// Trees are grown breadth-first by TreeGrower. A ChoicePolicy decides which
// test to place at each decision point; the default takes the head of the
// ranked candidate list, scripted and callback policies may override it. The
// batch builder and the interactive session service both drive the same
// grower, so a session that always accepts the default reproduces the batch
// tree exactly.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/error.hpp"
#include "mdt/text.hpp"

namespace mdt {

// ---------------------------------------------------------------------------
// Class distributions and entropy

struct ClassDistribution {
  std::vector<std::size_t> counts;

  ClassDistribution() = default;
  explicit ClassDistribution(std::size_t classes) : counts(classes, 0) {}
  explicit ClassDistribution(std::vector<std::size_t> c) : counts(std::move(c)) {}

  std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  }

  /// Most frequent class; ties go to the earlier declared class.
  std::size_t majority() const {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) -
                                    counts.begin());
  }

  /// At most one class present.
  bool pure() const {
    return std::count_if(counts.begin(), counts.end(),
                         [](std::size_t c) { return c > 0; }) <= 1;
  }

  std::size_t errors_as_leaf() const { return total() - counts[majority()]; }

  std::vector<double> probabilities() const {
    const double n = static_cast<double>(total());
    std::vector<double> p(counts.size(), 0.0);
    if (n == 0) return p;
    for (std::size_t c = 0; c < counts.size(); ++c) p[c] = static_cast<double>(counts[c]) / n;
    return p;
  }

  ClassDistribution& operator+=(const ClassDistribution& other) {
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += other.counts[c];
    return *this;
  }

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;
};

/// Shannon entropy in bits, with 0·log 0 = 0 and the empty distribution at 0.
inline double entropy(std::span<const std::size_t> counts) {
  const double n = static_cast<double>(
      std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (n == 0) return 0.0;
  double h = 0.0;
  for (const auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

inline double entropy(const ClassDistribution& dist) { return entropy(dist.counts); }

// ---------------------------------------------------------------------------
// Split tests

/// A test on one attribute. Discrete tests branch once per declared value;
/// threshold tests on continuous attributes branch on (<= t, > t).
struct SplitTest {
  std::size_t attribute = 0;
  std::optional<double> threshold;

  static SplitTest discrete(std::size_t attribute) { return {attribute, std::nullopt}; }
  static SplitTest at_threshold(std::size_t attribute, double t) { return {attribute, t}; }

  bool is_threshold() const { return threshold.has_value(); }

  std::size_t branch_count(const Schema& schema) const {
    return is_threshold() ? 2 : schema.attributes[attribute].values.size();
  }

  /// Branch taken by `instance`, or nullopt when the tested value is missing.
  std::optional<std::size_t> branch(const Instance& instance) const {
    if (attribute >= instance.values.size())
      throw Error(ErrorKind::SchemaMismatch, "instance lacks tested attribute");
    const auto& v = instance.values[attribute];
    if (is_missing(v)) return std::nullopt;
    if (is_threshold()) {
      const double* x = std::get_if<double>(&v);
      if (!x) throw Error(ErrorKind::SchemaMismatch, "threshold test on a discrete value");
      return *x <= *threshold ? 0u : 1u;
    }
    const Category* c = std::get_if<Category>(&v);
    if (!c) throw Error(ErrorKind::SchemaMismatch, "discrete test on a numeric value");
    return c->index;
  }

  friend auto operator<=>(const SplitTest&, const SplitTest&) = default;
  friend bool operator==(const SplitTest&, const SplitTest&) = default;
};

inline std::string describe(const SplitTest& test, const Schema& schema) {
  const auto& name = schema.attributes[test.attribute].name;
  if (!test.is_threshold()) return name;
  return name + " <= " + text::format_roundtrip(*test.threshold);
}

inline void check_applicable(const SplitTest& test, const Schema& schema) {
  if (test.attribute >= schema.attribute_count())
    throw Error(ErrorKind::InapplicableTest, "attribute index out of range");
  const auto& decl = schema.attributes[test.attribute];
  if (test.is_threshold() != decl.continuous)
    throw Error(ErrorKind::InapplicableTest,
                decl.continuous ? "'" + decl.name + "' is continuous; use a threshold test"
                                : "'" + decl.name + "' is discrete; threshold not allowed");
  if (test.is_threshold() && !std::isfinite(*test.threshold))
    throw Error(ErrorKind::InapplicableTest, "threshold must be finite");
}

// ---------------------------------------------------------------------------
// Views over the instances reaching a node

class DataView {
 public:
  explicit DataView(const Dataset& data) : data_(&data), rows_(data.size()) {
    std::iota(rows_.begin(), rows_.end(), std::size_t{0});
  }
  DataView(const Dataset& data, std::vector<std::size_t> rows)
      : data_(&data), rows_(std::move(rows)) {}

  const Dataset& dataset() const { return *data_; }
  const Schema& schema() const { return *data_->schema; }
  std::span<const std::size_t> rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const Instance& operator[](std::size_t i) const { return (*data_)[rows_[i]]; }

  ClassDistribution distribution() const {
    ClassDistribution d(schema().class_count());
    for (const auto r : rows_) ++d.counts[(*data_)[r].label];
    return d;
  }

 private:
  const Dataset* data_;
  std::vector<std::size_t> rows_;
};

namespace detail {

/// branch × class counts over instances whose tested value is known.
struct BranchTable {
  std::vector<ClassDistribution> branches;
  std::size_t known = 0;
  std::size_t total = 0;
};

inline BranchTable tabulate(const DataView& view, const SplitTest& test) {
  const Schema& schema = view.schema();
  BranchTable t;
  t.branches.assign(test.branch_count(schema), ClassDistribution(schema.class_count()));
  t.total = view.size();
  for (std::size_t i = 0; i < view.size(); ++i) {
    const auto& inst = view[i];
    const auto b = test.branch(inst);
    if (!b) continue;
    ++t.branches[*b].counts[inst.label];
    ++t.known;
  }
  return t;
}

inline std::size_t nonempty_branches(const BranchTable& t) {
  return static_cast<std::size_t>(std::count_if(
      t.branches.begin(), t.branches.end(),
      [](const ClassDistribution& d) { return d.total() > 0; }));
}

inline double gain_from_table(const BranchTable& t, std::size_t classes) {
  if (t.known == 0) return 0.0;
  ClassDistribution known(classes);
  for (const auto& b : t.branches) known += b;
  const double n_known = static_cast<double>(t.known);
  double remainder = 0.0;
  for (const auto& b : t.branches) {
    const auto nb = b.total();
    if (nb == 0) continue;
    remainder += static_cast<double>(nb) / n_known * entropy(b);
  }
  const double gain = (entropy(known) - remainder) * (n_known / static_cast<double>(t.total));
  return std::max(0.0, gain);
}

}  // namespace detail

/// Entropy reduction from partitioning `node` with `test`. Instances missing
/// the tested attribute are left out of the partition and the result is
/// scaled by the known fraction, which keeps it within [0, entropy(node)].
inline double information_gain(const DataView& node, const SplitTest& test) {
  check_applicable(test, node.schema());
  if (node.empty()) return 0.0;
  return detail::gain_from_table(detail::tabulate(node, test), node.schema().class_count());
}

/// Candidate tests at a node. `used` flags discrete attributes already tested
/// on the path from the root; it may be empty.
inline std::vector<SplitTest> candidate_tests(const DataView& node,
                                              const std::vector<bool>& used = {}) {
  const Schema& schema = node.schema();
  std::vector<SplitTest> out;
  std::vector<double> values;
  for (std::size_t a = 0; a < schema.attribute_count(); ++a) {
    if (!schema.attributes[a].continuous) {
      if (a < used.size() && used[a]) continue;
      out.push_back(SplitTest::discrete(a));
      continue;
    }
    values.clear();
    for (std::size_t i = 0; i < node.size(); ++i)
      if (const double* x = std::get_if<double>(&node[i].values[a])) values.push_back(*x);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 1; i < values.size(); ++i)
      out.push_back(SplitTest::at_threshold(a, std::midpoint(values[i - 1], values[i])));
  }
  return out;
}

struct RankedTest {
  SplitTest test;
  double gain = 0.0;
  /// The test sends instances down at least two branches.
  bool effective = false;

  friend bool operator==(const RankedTest&, const RankedTest&) = default;
};

/// Candidates ordered by gain (descending). Equal gains order effective tests
/// first, then by schema attribute order, then ascending threshold. The head
/// of the list is the default choice.
inline std::vector<RankedTest> rank_tests(const DataView& node,
                                          const std::vector<bool>& used = {}) {
  std::vector<RankedTest> ranked;
  const auto classes = node.schema().class_count();
  for (const auto& test : candidate_tests(node, used)) {
    const auto table = detail::tabulate(node, test);
    ranked.push_back({test, detail::gain_from_table(table, classes),
                      detail::nonempty_branches(table) >= 2});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedTest& a, const RankedTest& b) {
    if (a.gain != b.gain) return a.gain > b.gain;
    if (a.effective != b.effective) return a.effective;
    return a.test < b.test;
  });
  return ranked;
}

// ---------------------------------------------------------------------------
// Trees

/// Branch indices from the root; the root is the empty path.
using NodePath = std::vector<std::size_t>;

inline std::string format_path(const NodePath& path) {
  if (path.empty()) return "/";
  std::string out;
  for (const auto b : path) out += "/" + std::to_string(b);
  return out;
}

inline NodePath parse_path(std::string_view s) {
  s = text::trim(s);
  if (s.empty() || s.front() != '/') throw Error(ErrorKind::FormatError, "bad node path");
  NodePath path;
  if (s == "/") return path;
  for (auto part : text::split(s.substr(1), '/')) {
    const auto v = text::parse_int(part);
    if (!v || *v < 0) throw Error(ErrorKind::FormatError, "bad node path '" + std::string(s) + "'");
    path.push_back(static_cast<std::size_t>(*v));
  }
  return path;
}

/// Breadth-first order: shallower first, then lexicographic.
inline bool breadth_first_less(const NodePath& a, const NodePath& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

struct TreeNode {
  ClassDistribution dist;
  std::size_t label = 0;
  std::optional<SplitTest> test;  // empty for leaves
  std::vector<TreeNode> children;

  bool is_leaf() const { return !test.has_value(); }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

inline std::size_t count_nodes(const TreeNode& node) {
  std::size_t n = 1;
  for (const auto& c : node.children) n += count_nodes(c);
  return n;
}

inline std::size_t count_leaves(const TreeNode& node) {
  if (node.is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& c : node.children) n += count_leaves(c);
  return n;
}

inline const TreeNode& node_at(const TreeNode& root, const NodePath& path) {
  const TreeNode* node = &root;
  for (const auto b : path) {
    if (b >= node->children.size())
      throw Error(ErrorKind::FormatError, "path " + format_path(path) + " leaves the tree");
    node = &node->children[b];
  }
  return *node;
}

struct ChoiceRecord {
  NodePath path;
  SplitTest chosen;
  std::vector<RankedTest> ranked;

  friend bool operator==(const ChoiceRecord&, const ChoiceRecord&) = default;
};

/// How a tree was pruned: the method, its numeric parameters and the paths of
/// the subtrees that were collapsed.
struct PruningRecord {
  std::string method;
  std::vector<std::pair<std::string, double>> parameters;
  std::vector<NodePath> collapsed;

  friend bool operator==(const PruningRecord&, const PruningRecord&) = default;
};

struct Tree {
  std::shared_ptr<const Schema> schema;
  TreeNode root;
  std::vector<ChoiceRecord> choice_log;
  std::optional<PruningRecord> pruning;

  std::size_t size() const { return count_nodes(root); }
  bool pruned() const { return pruning.has_value(); }

  friend bool operator==(const Tree& a, const Tree& b) {
    return *a.schema == *b.schema && a.root == b.root && a.choice_log == b.choice_log &&
           a.pruning == b.pruning;
  }
};

// ---------------------------------------------------------------------------
// Choice policies

/// A scripted choice: a position in the ranked list or an explicit test.
using Selection = std::variant<std::size_t, SplitTest>;

struct DefaultPolicy {};

struct ScriptedPolicy {
  std::map<NodePath, Selection> choices;
};

struct CallbackPolicy {
  std::function<std::size_t(const NodePath&, std::span<const RankedTest>)> choose;
};

using ChoicePolicy = std::variant<DefaultPolicy, ScriptedPolicy, CallbackPolicy>;

/// Replaying the log of a tree as a scripted policy rebuilds that tree.
inline ScriptedPolicy replay_policy(const std::vector<ChoiceRecord>& log) {
  ScriptedPolicy p;
  for (const auto& rec : log) p.choices.emplace(rec.path, rec.chosen);
  return p;
}

/// Resolves a selection against the ranked list; nullopt if invalid.
inline std::optional<std::size_t> resolve_selection(const Selection& sel,
                                                    std::span<const RankedTest> ranked) {
  if (const auto* idx = std::get_if<std::size_t>(&sel)) {
    if (*idx < ranked.size()) return *idx;
    return std::nullopt;
  }
  const auto& test = std::get<SplitTest>(sel);
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i].test == test) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Growing

struct GrowOptions {
  /// Nodes deeper than this become leaves; 0 means unlimited. The root is at
  /// depth 1.
  std::size_t max_depth = 0;
};

/// Breadth-first tree construction. Each frontier node is an impure node with
/// at least one effective candidate test; everything else is made a leaf on
/// creation. The grower references `train`, which must outlive it.
class TreeGrower {
 public:
  explicit TreeGrower(const Dataset& train, GrowOptions options = {})
      : train_(&train), options_(options) {
    if (train.empty()) throw Error(ErrorKind::EmptyTrainingSet, "training set is empty");
    std::vector<std::size_t> rows(train.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    make_node(std::move(rows), {}, std::vector<bool>(schema().attribute_count(), false), 0);
  }

  const Schema& schema() const { return *train_->schema; }
  bool complete() const { return frontier_.empty(); }

  const NodePath& head_path() const { return head().path; }
  std::span<const RankedTest> head_ranking() const { return head().ranking; }
  const ClassDistribution& head_distribution() const { return head().dist; }
  DataView head_view() const { return DataView(*train_, head().rows); }
  std::vector<NodePath> frontier_paths() const {
    std::vector<NodePath> out;
    for (const auto id : frontier_) out.push_back(nodes_[id].path);
    return out;
  }
  const std::vector<ChoiceRecord>& choice_log() const { return log_; }

  /// Splits the frontier head on ranked[index].
  void expand(std::size_t index) {
    Node& node = nodes_[frontier_.front()];
    if (index >= node.ranking.size())
      throw Error(ErrorKind::InvalidChoice,
                  "choice " + std::to_string(index) + " out of range at " +
                      format_path(node.path));
    split_head(index);
  }

  /// Splits the frontier head on `test`, which must be a candidate there.
  void expand(const SplitTest& test) {
    const auto idx = resolve_selection(test, head_ranking());
    if (!idx)
      throw Error(ErrorKind::InvalidChoice,
                  "test is not a candidate at " + format_path(head_path()));
    split_head(*idx);
  }

  /// Current tree with frontier nodes shown as leaves, plus the frontier.
  TreeNode snapshot() const { return materialize(0); }

  Tree finish() const {
    if (!complete()) throw Error(ErrorKind::InvalidChoice, "tree still has open nodes");
    return Tree{train_->schema, materialize(0), log_, std::nullopt};
  }

 private:
  struct Node {
    ClassDistribution dist;
    std::size_t label = 0;
    std::optional<SplitTest> test;
    std::vector<std::size_t> children;
    NodePath path;
    std::vector<std::size_t> rows;  // released once the node is split
    std::vector<bool> used;
    std::vector<RankedTest> ranking;
  };

  const Node& head() const {
    if (frontier_.empty()) throw Error(ErrorKind::TreeComplete, "no open nodes");
    return nodes_[frontier_.front()];
  }

  std::size_t make_node(std::vector<std::size_t> rows, NodePath path, std::vector<bool> used,
                        std::size_t parent_majority) {
    Node node;
    node.dist = DataView(*train_, rows).distribution();
    node.label = rows.empty() ? parent_majority : node.dist.majority();
    node.path = std::move(path);
    const bool depth_ok = options_.max_depth == 0 || node.path.size() < options_.max_depth;
    bool open = false;
    if (!rows.empty() && !node.dist.pure() && depth_ok) {
      node.ranking = rank_tests(DataView(*train_, rows), used);
      open = !node.ranking.empty() && node.ranking.front().effective;
    }
    if (open) {
      node.rows = std::move(rows);
      node.used = std::move(used);
    } else {
      node.ranking.clear();
    }
    const std::size_t id = nodes_.size();
    nodes_.push_back(std::move(node));
    if (open) frontier_.push_back(id);
    return id;
  }

  void split_head(std::size_t index) {
    const std::size_t id = frontier_.front();
    frontier_.pop_front();
    const SplitTest test = nodes_[id].ranking[index].test;
    log_.push_back({nodes_[id].path, test, nodes_[id].ranking});

    const std::size_t branches = test.branch_count(schema());
    std::vector<std::vector<std::size_t>> parts(branches);
    std::vector<std::size_t> missing;
    for (const auto r : nodes_[id].rows) {
      const auto b = test.branch((*train_)[r]);
      if (b)
        parts[*b].push_back(r);
      else
        missing.push_back(r);
    }
    // Instances missing the tested value follow the most populated branch.
    if (!missing.empty()) {
      std::size_t target = 0;
      for (std::size_t b = 1; b < branches; ++b)
        if (parts[b].size() > parts[target].size()) target = b;
      parts[target].insert(parts[target].end(), missing.begin(), missing.end());
      std::sort(parts[target].begin(), parts[target].end());
    }

    std::vector<bool> used = std::move(nodes_[id].used);
    if (!test.is_threshold()) used[test.attribute] = true;
    const NodePath path = nodes_[id].path;
    const std::size_t majority = nodes_[id].label;
    nodes_[id].test = test;
    nodes_[id].rows.clear();
    nodes_[id].rows.shrink_to_fit();
    nodes_[id].ranking.clear();

    for (std::size_t b = 0; b < branches; ++b) {
      NodePath child_path = path;
      child_path.push_back(b);
      const auto child = make_node(std::move(parts[b]), std::move(child_path), used, majority);
      nodes_[id].children.push_back(child);
    }
  }

  TreeNode materialize(std::size_t id) const {
    const Node& n = nodes_[id];
    TreeNode out;
    out.dist = n.dist;
    out.label = n.label;
    out.test = n.test;
    for (const auto c : n.children) out.children.push_back(materialize(c));
    return out;
  }

  const Dataset* train_;
  GrowOptions options_;
  std::vector<Node> nodes_;
  std::deque<std::size_t> frontier_;
  std::vector<ChoiceRecord> log_;
};

/// Builds a tree from `train`, consulting `policy` at every decision point.
inline Tree build_tree(const Dataset& train, const ChoicePolicy& policy = DefaultPolicy{},
                       GrowOptions options = {}) {
  TreeGrower grower(train, options);
  while (!grower.complete()) {
    const auto ranked = grower.head_ranking();
    const NodePath& path = grower.head_path();
    std::size_t choice = 0;
    if (const auto* scripted = std::get_if<ScriptedPolicy>(&policy)) {
      if (const auto it = scripted->choices.find(path); it != scripted->choices.end()) {
        const auto idx = resolve_selection(it->second, ranked);
        if (!idx)
          throw Error(ErrorKind::ScriptedChoiceInvalid,
                      "scripted selection is not valid at " + format_path(path));
        choice = *idx;
      }
    } else if (const auto* callback = std::get_if<CallbackPolicy>(&policy)) {
      choice = callback->choose(path, ranked);
      if (choice >= ranked.size())
        throw Error(ErrorKind::ScriptedChoiceInvalid,
                    "callback chose out of range at " + format_path(path));
    }
    grower.expand(choice);
  }
  return grower.finish();
}

// ---------------------------------------------------------------------------
// Prediction

namespace detail {

inline std::size_t route(const TreeNode& node, const Instance& instance) {
  if (const auto b = node.test->branch(instance)) {
    if (*b >= node.children.size())
      throw Error(ErrorKind::SchemaMismatch, "category beyond the tested attribute's values");
    return *b;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < node.children.size(); ++c)
    if (node.children[c].dist.total() > node.children[best].dist.total()) best = c;
  return best;
}

}  // namespace detail

inline const TreeNode& leaf_for(const Tree& tree, const Instance& instance) {
  const TreeNode* node = &tree.root;
  while (!node->is_leaf()) node = &node->children[detail::route(*node, instance)];
  return *node;
}

inline std::size_t classify(const Tree& tree, const Instance& instance) {
  return leaf_for(tree, instance).label;
}

/// Class frequencies at the leaf reached by `instance`. A leaf without
/// training instances uses its nearest ancestor that has some.
inline std::vector<double> class_probabilities(const Tree& tree, const Instance& instance) {
  const TreeNode* node = &tree.root;
  const TreeNode* last_populated = node;
  while (!node->is_leaf()) {
    node = &node->children[detail::route(*node, instance)];
    if (node->dist.total() > 0) last_populated = node;
  }
  auto p = last_populated->dist.probabilities();
  if (last_populated->dist.total() == 0) {
    // Only possible for a single-leaf tree with no data, which we never build.
    p.assign(p.size(), 0.0);
    p[node->label] = 1.0;
  }
  return p;
}

}  // namespace mdt
