#pragma once

// Families of alternate high-gain trees and their combination.
//
// Alternates are built by overriding the default test at the top levels of
// the tree: at every decision point of depth <= override_depth, any effective
// test whose gain is within gain_ratio of that node's best gain is a
// candidate (at most per_node_cap of them, in ranked order). Every
// combination of such choices is one scripted policy; below the override
// depth the default applies. The all-default tree comes first.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdt/error.hpp"
#include "mdt/induction.hpp"
#include "mdt/parallel.hpp"
#include "mdt/text.hpp"

namespace mdt {

// ---------------------------------------------------------------------------
// Signatures

/// Root test and the set of tests at depth 2. Two trees that differ only
/// below depth 2 have equal signatures.
struct TreeSignature {
  std::optional<SplitTest> root_test;
  std::set<SplitTest> level2_tests;

  friend bool operator==(const TreeSignature&, const TreeSignature&) = default;
  friend bool operator<(const TreeSignature& a, const TreeSignature& b) {
    if (a.root_test != b.root_test) return a.root_test < b.root_test;
    return a.level2_tests < b.level2_tests;
  }
};

inline TreeSignature signature(const Tree& tree) {
  TreeSignature sig;
  sig.root_test = tree.root.test;
  for (const auto& child : tree.root.children)
    if (child.test) sig.level2_tests.insert(*child.test);
  return sig;
}

inline std::string describe(const TreeSignature& sig, const Schema& schema) {
  std::string out = sig.root_test ? describe(*sig.root_test, schema) : std::string("(leaf)");
  out += " |";
  const char* sep = " ";
  for (const auto& t : sig.level2_tests) {
    out += sep + describe(t, schema);
    sep = "; ";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alternate generation

struct AlternatesConfig {
  std::size_t override_depth = 2;  // the root is depth 1
  double gain_ratio = 0.85;
  std::size_t per_node_cap = 3;
  std::size_t max_trees = 8;
  /// Upper bound on scripted policies enumerated before deduplication.
  std::size_t max_policies = 4096;
  std::size_t jobs = 1;
};

namespace detail {

inline void validate(const AlternatesConfig& c) {
  if (c.override_depth < 1 || !(c.gain_ratio > 0.0 && c.gain_ratio <= 1.0) ||
      c.per_node_cap < 1 || c.max_trees < 1 || c.max_policies < 1)
    throw Error(ErrorKind::BadCount,
                "alternates config needs depth >= 1, 0 < ratio <= 1 and caps >= 1");
}

/// Ranked positions eligible as override choices at one decision point.
inline std::vector<std::size_t> near_max_choices(std::span<const RankedTest> ranked,
                                                 const AlternatesConfig& c) {
  std::vector<std::size_t> out;
  const double floor = c.gain_ratio * ranked.front().gain;
  for (std::size_t i = 0; i < ranked.size() && out.size() < c.per_node_cap; ++i)
    if (ranked[i].effective && ranked[i].gain >= floor) out.push_back(i);
  return out;
}

using Assignment = std::map<NodePath, Selection>;

inline std::size_t override_count(const Assignment& a) {
  return static_cast<std::size_t>(std::count_if(a.begin(), a.end(), [](const auto& kv) {
    return std::get<std::size_t>(kv.second) != 0;
  }));
}

struct PolicyEnumerator {
  const Dataset& train;
  const AlternatesConfig& config;
  std::vector<Assignment> found;

  void run(Assignment& assignment) {
    if (found.size() >= config.max_policies) return;
    const Tree top = build_tree(train, ScriptedPolicy{assignment},
                                GrowOptions{config.override_depth});
    for (const auto& rec : top.choice_log) {
      if (assignment.contains(rec.path)) continue;
      for (const auto idx : near_max_choices(rec.ranked, config)) {
        assignment[rec.path] = idx;
        run(assignment);
        if (found.size() >= config.max_policies) break;
      }
      assignment.erase(rec.path);
      return;
    }
    found.push_back(assignment);
  }
};

}  // namespace detail

/// Scripted policies for the alternates, fewest overrides first. Policies name
/// choices by rank position, so they are only meaningful for `train`.
inline std::vector<ScriptedPolicy> enumerate_override_policies(const Dataset& train,
                                                               const AlternatesConfig& config) {
  detail::validate(config);
  if (train.empty()) throw Error(ErrorKind::EmptyTrainingSet, "training set is empty");
  detail::PolicyEnumerator e{train, config, {}};
  detail::Assignment start;
  e.run(start);
  std::stable_sort(e.found.begin(), e.found.end(),
                   [](const detail::Assignment& a, const detail::Assignment& b) {
                     return detail::override_count(a) < detail::override_count(b);
                   });
  std::vector<ScriptedPolicy> out;
  for (auto& a : e.found) out.push_back(ScriptedPolicy{std::move(a)});
  return out;
}

/// The default (ID3) tree followed by alternates with distinct signatures,
/// at most config.max_trees in total.
inline std::vector<Tree> generate_alternates(const Dataset& train,
                                             const AlternatesConfig& config = {}) {
  const auto policies = enumerate_override_policies(train, config);
  std::vector<Tree> out;
  std::set<TreeSignature> seen;
  const std::size_t batch = std::max<std::size_t>(config.jobs, 1);
  for (std::size_t start = 0; start < policies.size() && out.size() < config.max_trees;
       start += batch) {
    const std::size_t n = std::min(batch, policies.size() - start);
    auto trees = parallel_map(n, config.jobs, [&](std::size_t i) {
      return build_tree(train, policies[start + i]);
    });
    for (auto& t : trees) {
      if (out.size() >= config.max_trees) break;
      if (seen.insert(signature(t)).second) out.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diversity labels for k-subsets

enum class Diversity { Different, CommonRoot, CommonLevel2, Mixed };

constexpr std::string_view to_string(Diversity d) {
  switch (d) {
    case Diversity::Different: return "different";
    case Diversity::CommonRoot: return "common-root";
    case Diversity::CommonLevel2: return "common-level2";
    case Diversity::Mixed: return "mixed";
  }
  return "mixed";
}

/// Labels a group of signatures:
///   common-root   every tree has the same root test;
///   common-level2 otherwise, some depth-2 test appears in every tree;
///   different     otherwise, when the root tests are pairwise distinct;
///   mixed         anything else (some roots shared, nothing common to all).
inline Diversity label_diversity(std::span<const TreeSignature> group) {
  const bool same_root =
      std::all_of(group.begin(), group.end(),
                  [&](const TreeSignature& s) { return s.root_test == group.front().root_test; });
  if (same_root) return Diversity::CommonRoot;

  for (const auto& test : group.front().level2_tests) {
    const bool everywhere = std::all_of(group.begin(), group.end(), [&](const TreeSignature& s) {
      return s.level2_tests.contains(test);
    });
    if (everywhere) return Diversity::CommonLevel2;
  }
  std::set<std::optional<SplitTest>> roots;
  for (const auto& s : group) roots.insert(s.root_test);
  return roots.size() == group.size() ? Diversity::Different : Diversity::Mixed;
}

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  if (k > n) return out;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (;;) {
    out.push_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

struct LabeledCombination {
  std::vector<std::size_t> members;
  Diversity label = Diversity::Mixed;
};

inline std::vector<LabeledCombination> diversity_partition(std::span<const TreeSignature> sigs,
                                                           std::size_t k) {
  if (k < 2 || k > sigs.size())
    throw Error(ErrorKind::BadK, "k must lie in [2, " + std::to_string(sigs.size()) + "]");
  std::vector<LabeledCombination> out;
  std::vector<TreeSignature> group(k);
  for (auto& members : combinations(sigs.size(), k)) {
    for (std::size_t i = 0; i < k; ++i) group[i] = sigs[members[i]];
    out.push_back({std::move(members), label_diversity(group)});
  }
  return out;
}

inline std::vector<LabeledCombination> diversity_partition(const std::vector<Tree>& trees,
                                                           std::size_t k) {
  std::vector<TreeSignature> sigs;
  for (const auto& t : trees) sigs.push_back(signature(t));
  return diversity_partition(sigs, k);
}

// ---------------------------------------------------------------------------
// Combination

enum class CombineMethod { Voting, ClassProbability };

constexpr std::string_view to_string(CombineMethod m) {
  return m == CombineMethod::Voting ? "voting" : "class-probability";
}

inline CombineMethod parse_combine_method(std::string_view s) {
  if (s == "voting") return CombineMethod::Voting;
  if (s == "class-probability") return CombineMethod::ClassProbability;
  throw Error(ErrorKind::FormatError, "unknown combination method '" + std::string(s) + "'");
}

/// An ordered, non-empty collection of trees over one schema with positive
/// weights (uniform by default).
class Ensemble {
 public:
  Ensemble(std::vector<std::shared_ptr<const Tree>> trees,
           CombineMethod method = CombineMethod::Voting, std::vector<double> weights = {})
      : trees_(std::move(trees)), method_(method), weights_(std::move(weights)) {
    if (trees_.empty()) throw Error(ErrorKind::BadK, "an ensemble needs at least one tree");
    if (weights_.empty()) weights_.assign(trees_.size(), 1.0);
    if (weights_.size() != trees_.size())
      throw Error(ErrorKind::LengthMismatch, "one weight per tree is required");
    for (const double w : weights_)
      if (!(w > 0.0) || !std::isfinite(w))
        throw Error(ErrorKind::BadCount, "weights must be positive and finite");
    for (const auto& t : trees_)
      if (*t->schema != *trees_.front()->schema)
        throw Error(ErrorKind::SchemaMismatch, "ensemble trees use different schemas");
    for (const double w : weights_) weight_sum_ += w;
  }

  static Ensemble of(std::vector<Tree> trees, CombineMethod method = CombineMethod::Voting,
                     std::vector<double> weights = {}) {
    std::vector<std::shared_ptr<const Tree>> shared;
    for (auto& t : trees) shared.push_back(std::make_shared<const Tree>(std::move(t)));
    return Ensemble(std::move(shared), method, std::move(weights));
  }

  std::span<const std::shared_ptr<const Tree>> trees() const { return trees_; }
  const Tree& tree(std::size_t i) const { return *trees_[i]; }
  std::size_t size() const { return trees_.size(); }
  CombineMethod method() const { return method_; }
  std::span<const double> weights() const { return weights_; }
  const Schema& schema() const { return *trees_.front()->schema; }

  /// Weighted mean of per-tree vectors. Under voting an unpruned tree
  /// contributes the one-hot vector of its label; otherwise each tree
  /// contributes its class probabilities.
  std::vector<double> combine_probabilities(const Instance& instance) const {
    check_instance(instance);
    std::vector<double> acc(schema().class_count(), 0.0);
    for (std::size_t i = 0; i < trees_.size(); ++i) {
      const Tree& t = *trees_[i];
      if (method_ == CombineMethod::Voting && !t.pruned()) {
        acc[classify(t, instance)] += weights_[i];
      } else {
        const auto p = class_probabilities(t, instance);
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += weights_[i] * p[c];
      }
    }
    for (auto& a : acc) a /= weight_sum_;
    return acc;
  }

  /// Class with the largest combined estimate. Exact ties go to the first
  /// tree's own prediction when it is among the tied classes, else to the
  /// earliest declared class.
  std::size_t vote(const Instance& instance) const {
    const auto p = combine_probabilities(instance);
    const double best = *std::max_element(p.begin(), p.end());
    const std::size_t first_tree = classify(*trees_.front(), instance);
    if (p[first_tree] == best) return first_tree;
    return static_cast<std::size_t>(std::find(p.begin(), p.end(), best) - p.begin());
  }

 private:
  void check_instance(const Instance& instance) const {
    if (instance.values.size() != schema().attribute_count())
      throw Error(ErrorKind::SchemaMismatch, "instance does not match the ensemble schema");
  }

  std::vector<std::shared_ptr<const Tree>> trees_;
  CombineMethod method_;
  std::vector<double> weights_;
  double weight_sum_ = 0.0;
};

inline std::vector<double> combine_probabilities(const Ensemble& e, const Instance& x) {
  return e.combine_probabilities(x);
}
inline std::size_t vote(const Ensemble& e, const Instance& x) { return e.vote(x); }

// ---------------------------------------------------------------------------
// Manifest files
//
//   | comment
//   method: voting
//   tree: 1 trees/tree_00.tree
//   tree: 2.5 trees/tree_01.tree
//
// Each tree line holds a positive weight and a path relative to the manifest.

struct ManifestEntry {
  double weight = 1.0;
  std::string path;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  CombineMethod method = CombineMethod::Voting;
  std::vector<ManifestEntry> trees;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline std::string serialize_manifest(const Manifest& m) {
  std::string out = "method: " + std::string(to_string(m.method)) + "\n";
  for (const auto& e : m.trees) out += "tree: " + text::format_roundtrip(e.weight) + " " + e.path + "\n";
  return out;
}

inline Manifest parse_manifest(std::string_view body) {
  Manifest m;
  bool seen_method = false;
  const auto lines = text::split_lines(body);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    auto line = lines[n];
    if (const auto bar = line.find('|'); bar != std::string_view::npos) line = line.substr(0, bar);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorKind::FormatError, "manifest: expected 'key: value'", n + 1);
    const auto key = text::trim(line.substr(0, colon));
    const auto value = text::trim(line.substr(colon + 1));
    if (key == "method") {
      m.method = parse_combine_method(value);
      seen_method = true;
    } else if (key == "tree") {
      const auto space = value.find_first_of(" \t");
      if (space == std::string_view::npos)
        throw Error(ErrorKind::FormatError, "manifest: expected 'tree: <weight> <path>'", n + 1);
      const auto w = text::parse_finite(value.substr(0, space));
      if (!w || *w <= 0)
        throw Error(ErrorKind::FormatError, "manifest: weight must be positive", n + 1);
      m.trees.push_back({*w, std::string(text::trim(value.substr(space)))});
    } else {
      throw Error(ErrorKind::FormatError, "manifest: unknown key '" + std::string(key) + "'",
                  n + 1);
    }
  }
  if (!seen_method) throw Error(ErrorKind::FormatError, "manifest: missing 'method:'");
  if (m.trees.empty()) throw Error(ErrorKind::FormatError, "manifest: no trees listed");
  return m;
}

}  // namespace mdt
