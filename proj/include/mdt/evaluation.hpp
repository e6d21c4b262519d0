#pragma once

// Test-set scoring and the combination sweep.
//
//   percent error = 100 · misclassified / n
//   Half-Brier    = (1 / 2n) · Σ_x Σ_c (p_c(x) − y_c(x))²
//
// A tree is scored as a one-tree voting ensemble: pruned trees emit class
// probabilities, unpruned trees emit the one-hot vector of their label.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mdt/csv.hpp"
#include "mdt/dataset.hpp"
#include "mdt/ensemble.hpp"
#include "mdt/error.hpp"
#include "mdt/induction.hpp"
#include "mdt/parallel.hpp"
#include "mdt/text.hpp"

namespace mdt {

inline constexpr double kProbabilityTolerance = 1e-9;

namespace detail {

inline void require_nonempty(const Dataset& test) {
  if (test.empty()) throw Error(ErrorKind::EmptyTestSet, "test set is empty");
}

inline void check_probability_vector(std::span<const double> p, std::size_t classes,
                                     std::size_t row) {
  if (p.size() != classes)
    throw Error(ErrorKind::NotAProbabilityVector, "prediction has the wrong number of classes",
                row + 1);
  double sum = 0.0;
  for (const double v : p) {
    if (!(v >= -kProbabilityTolerance && v <= 1.0 + kProbabilityTolerance))
      throw Error(ErrorKind::NotAProbabilityVector, "prediction component outside [0, 1]",
                  row + 1);
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance)
    throw Error(ErrorKind::NotAProbabilityVector, "prediction does not sum to 1", row + 1);
}

// Both metrics go through this division so that one-hot predictions give
// half_brier == percent_error / 100 exactly.
inline double percent_of(double count, std::size_t n) {
  return 100.0 * count / static_cast<double>(n);
}

inline double squared_error(std::span<const double> p, std::size_t label) {
  double s = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double d = p[c] - (c == label ? 1.0 : 0.0);
    s += d * d;
  }
  return s;
}

}  // namespace detail

template <class Predict>
double percentage_error(Predict&& predict, const Dataset& test) {
  detail::require_nonempty(test);
  std::size_t wrong = 0;
  for (const auto& x : test.instances) wrong += predict(x) != x.label;
  return detail::percent_of(static_cast<double>(wrong), test.size());
}

template <class PredictProba>
double half_brier(PredictProba&& predict_proba, const Dataset& test) {
  detail::require_nonempty(test);
  const std::size_t classes = test.schema->class_count();
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::vector<double> p = predict_proba(test[i]);
    detail::check_probability_vector(p, classes, i);
    total += detail::squared_error(p, test[i].label);
  }
  return detail::percent_of(total / 2.0, test.size()) / 100.0;
}

struct EvalReport {
  std::string model;
  double percent_error = 0.0;
  double half_brier = 0.0;
  std::size_t n = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline EvalReport evaluate(const Ensemble& model, const Dataset& test, std::string name = {}) {
  detail::require_nonempty(test);
  if (*test.schema != model.schema())
    throw Error(ErrorKind::SchemaMismatch, "test set schema differs from the model's");
  std::size_t wrong = 0;
  double squared = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto p = model.combine_probabilities(test[i]);
    detail::check_probability_vector(p, p.size(), i);
    wrong += model.vote(test[i]) != test[i].label;
    squared += detail::squared_error(p, test[i].label);
  }
  return {std::move(name), detail::percent_of(static_cast<double>(wrong), test.size()),
          detail::percent_of(squared / 2.0, test.size()) / 100.0, test.size()};
}

inline EvalReport evaluate(std::shared_ptr<const Tree> tree, const Dataset& test,
                           std::string name = {}) {
  return evaluate(Ensemble({std::move(tree)}, CombineMethod::Voting), test, std::move(name));
}

inline EvalReport evaluate(const Tree& tree, const Dataset& test, std::string name = {}) {
  return evaluate(std::make_shared<const Tree>(tree), test, std::move(name));
}

/// Per-instance predictions, one row per test instance:
///   row,actual,predicted,p_<label>...
/// Probabilities are written in shortest round-trip form.
inline std::string prediction_dump(const Ensemble& model, const Dataset& test) {
  const Schema& schema = model.schema();
  std::vector<std::string> header = {"row", "actual", "predicted"};
  for (const auto& label : schema.class_labels) header.push_back("p_" + label);
  std::string out = csv::join(header) + "\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<std::string> fields = {std::to_string(i + 1),
                                       schema.class_labels[test[i].label],
                                       schema.class_labels[model.vote(test[i])]};
    for (const double p : model.combine_probabilities(test[i]))
      fields.push_back(text::format_roundtrip(p));
    out += csv::join(fields) + "\n";
  }
  return out;
}

inline std::string report_csv(std::span<const EvalReport> reports) {
  std::string out = "model,n,percent_error,half_brier\n";
  for (const auto& r : reports)
    out += csv::join({r.model, std::to_string(r.n), text::format_fixed(r.percent_error, 2),
                      text::format_fixed(r.half_brier, 4)}) +
           "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Sweep over ensemble sizes.

struct SweepOptions {
  std::vector<std::size_t> counts;
  bool prefer_different = false;
  CombineMethod method = CombineMethod::Voting;
  // Even sizes of unpruned voting ensembles are rejected unless set.
  bool allow_ties = false;
  std::size_t jobs = 1;
};

struct SweepRow {
  std::size_t tree_count = 0;
  double mean_percent_error = 0.0;
  double mean_half_brier = 0.0;
  std::size_t combination_count = 0;
  CombineMethod method = CombineMethod::Voting;
  bool most_different = false;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

/// Diversity score of a subset: (distinct root tests, distinct level-2 sets).
inline std::pair<std::size_t, std::size_t> diversity_score(std::span<const TreeSignature> sigs,
                                                           std::span<const std::size_t> members) {
  std::set<std::optional<SplitTest>> roots;
  std::set<std::set<SplitTest>> level2;
  for (const auto m : members) {
    roots.insert(sigs[m].root_test);
    level2.insert(sigs[m].level2_tests);
  }
  return {roots.size(), level2.size()};
}

/// k-subsets with the highest diversity score, in lexicographic order.
inline std::vector<std::vector<std::size_t>> most_different(std::span<const TreeSignature> sigs,
                                                            std::size_t k) {
  auto all = combinations(sigs.size(), k);
  std::pair<std::size_t, std::size_t> best{0, 0};
  for (const auto& c : all) best = std::max(best, diversity_score(sigs, c));
  std::erase_if(all, [&](const auto& c) { return diversity_score(sigs, c) != best; });
  return all;
}

inline std::vector<SweepRow> sweep(const std::vector<std::shared_ptr<const Tree>>& trees,
                                   const Dataset& test, const SweepOptions& options) {
  if (options.counts.empty()) throw Error(ErrorKind::BadCounts, "no ensemble sizes given");
  const bool any_unpruned =
      std::any_of(trees.begin(), trees.end(), [](const auto& t) { return !t->pruned(); });
  for (const auto k : options.counts) {
    if (k == 0 || k > trees.size())
      throw Error(ErrorKind::BadCounts, "ensemble size " + std::to_string(k) + " not in [1, " +
                                            std::to_string(trees.size()) + "]");
    if (k % 2 == 0 && options.method == CombineMethod::Voting && any_unpruned &&
        !options.allow_ties)
      throw Error(ErrorKind::BadCounts, "even ensemble size " + std::to_string(k) +
                                            " with unpruned voting trees needs ties enabled");
  }
  detail::require_nonempty(test);

  std::vector<TreeSignature> sigs;
  for (const auto& t : trees) sigs.push_back(signature(*t));

  std::vector<SweepRow> rows;
  for (const auto k : options.counts) {
    const auto combos =
        options.prefer_different ? most_different(sigs, k) : combinations(trees.size(), k);
    const auto reports = parallel_map(combos.size(), options.jobs, [&](std::size_t c) {
      std::vector<std::shared_ptr<const Tree>> members;
      for (const auto m : combos[c]) members.push_back(trees[m]);
      return evaluate(Ensemble(std::move(members), options.method), test);
    });
    SweepRow row;
    row.tree_count = k;
    row.combination_count = combos.size();
    row.method = options.method;
    row.most_different = options.prefer_different;
    for (const auto& r : reports) {
      row.mean_percent_error += r.percent_error;
      row.mean_half_brier += r.half_brier;
    }
    row.mean_percent_error /= static_cast<double>(reports.size());
    row.mean_half_brier /= static_cast<double>(reports.size());
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out =
      "tree_count,combination_count,mean_percent_error,mean_half_brier,method,selection\n";
  for (const auto& r : rows)
    out += csv::join({std::to_string(r.tree_count), std::to_string(r.combination_count),
                      text::format_fixed(r.mean_percent_error, 2),
                      text::format_fixed(r.mean_half_brier, 4), std::string(to_string(r.method)),
                      r.most_different ? "most-different" : "all"}) +
           "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Plot data: one (k, score) pair per line under a `k,score` header.

struct CurvePoint {
  std::size_t k = 0;
  double score = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

enum class CurveMetric { PercentError, HalfBrier };

inline std::vector<CurvePoint> curve_points(std::span<const SweepRow> rows, CurveMetric metric) {
  std::vector<CurvePoint> out;
  for (const auto& r : rows)
    out.push_back(
        {r.tree_count, metric == CurveMetric::HalfBrier ? r.mean_half_brier : r.mean_percent_error});
  return out;
}

inline std::string curve_export(std::span<const CurvePoint> points) {
  std::string out = "k,score\n";
  for (const auto& p : points)
    out += std::to_string(p.k) + "," + text::format_roundtrip(p.score) + "\n";
  return out;
}

inline std::vector<CurvePoint> parse_curve(std::string_view body) {
  const auto records = csv::parse(body);
  if (records.empty() || records.front().fields != std::vector<std::string>{"k", "score"})
    throw Error(ErrorKind::FormatError, "curve file must start with a k,score header");
  std::vector<CurvePoint> out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i].fields;
    const auto k = f.size() == 2 ? text::parse_int(f[0]) : std::nullopt;
    const auto score = f.size() == 2 ? text::parse_finite(f[1]) : std::nullopt;
    if (!k || *k < 1 || !score)
      throw Error(ErrorKind::FormatError, "malformed curve line", records[i].line);
    out.push_back({static_cast<std::size_t>(*k), *score});
  }
  return out;
}

}  // namespace mdt
