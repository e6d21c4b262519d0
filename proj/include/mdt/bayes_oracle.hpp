#pragma once

// Grid posterior over two-class classification rules on a finite domain.
//
// A rule Φ = (φ_1 … φ_C) gives, for each data-point type i, the probability
// that a type-i point is positive. With n_i observed type-i points, r_i of
// them positive,
//
//   p(x | Φ) = Π_i φ_i^{r_i} (1 − φ_i)^{n_i − r_i}
//
// Under a factored prior the posterior factorizes per component, so each φ_i
// gets its own weight vector on the midpoint grid φ_j = (j + ½)/G.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/error.hpp"
#include "mdt/text.hpp"

namespace mdt::bayes {

struct ClassificationRule {
  std::vector<double> phis;

  friend bool operator==(const ClassificationRule&, const ClassificationRule&) = default;
};

struct TypeCount {
  std::size_t n = 0;
  std::size_t r = 0;

  friend bool operator==(const TypeCount&, const TypeCount&) = default;
};

struct CountTable {
  std::vector<TypeCount> types;

  std::size_t size() const { return types.size(); }
  friend bool operator==(const CountTable&, const CountTable&) = default;
};

/// One `n r` pair per line; `|` starts a comment.
inline CountTable parse_count_table(std::string_view body) {
  CountTable out;
  const auto lines = text::split_lines(body);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    auto line = lines[ln];
    if (const auto bar = line.find('|'); bar != std::string_view::npos) line = line.substr(0, bar);
    line = text::trim(line);
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    for (const auto f : text::split(line, ' '))
      if (!text::trim(f).empty()) fields.push_back(f);
    const auto n = fields.size() == 2 ? text::parse_int(fields[0]) : std::nullopt;
    const auto r = fields.size() == 2 ? text::parse_int(fields[1]) : std::nullopt;
    if (!n || !r) throw Error(ErrorKind::FormatError, "expected `n r` on each line", ln + 1);
    if (*n < 0 || *r < 0 || *r > *n)
      throw Error(ErrorKind::BadCounts, "counts need 0 <= r <= n", ln + 1);
    out.types.push_back({static_cast<std::size_t>(*n), static_cast<std::size_t>(*r)});
  }
  return out;
}

inline std::string serialize_count_table(const CountTable& t) {
  std::string out;
  for (const auto& c : t.types) out += std::to_string(c.n) + " " + std::to_string(c.r) + "\n";
  return out;
}

namespace detail {

// r·log φ + (n − r)·log(1 − φ) with 0·log 0 = 0.
inline double log_binomial_kernel(double phi, std::size_t n, std::size_t r) {
  double s = 0.0;
  if (r > 0) s += static_cast<double>(r) * std::log(phi);
  if (n > r) s += static_cast<double>(n - r) * std::log1p(-phi);
  return s;
}

}  // namespace detail

inline double log_likelihood(const ClassificationRule& rule, const CountTable& counts) {
  if (rule.phis.size() != counts.size())
    throw Error(ErrorKind::LengthMismatch, "rule has " + std::to_string(rule.phis.size()) +
                                               " components, counts have " +
                                               std::to_string(counts.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double phi = rule.phis[i];
    if (!(phi >= 0.0 && phi <= 1.0))
      throw Error(ErrorKind::NotAProbabilityVector, "rule component outside [0, 1]");
    s += detail::log_binomial_kernel(phi, counts.types[i].n, counts.types[i].r);
  }
  return s;
}

inline double likelihood(const ClassificationRule& rule, const CountTable& counts) {
  return std::exp(log_likelihood(rule, counts));
}

// ---------------------------------------------------------------------------
// Priors

/// Per-component prior density, known up to a constant.
class Prior {
 public:
  static Prior uniform() { return Prior("uniform", 1.0, 1.0, {}); }

  static Prior beta(double a, double b) {
    if (!(a > 0.0 && b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      throw Error(ErrorKind::BadCount, "beta prior needs a > 0 and b > 0");
    return Prior("beta", a, b, {});
  }

  /// Arbitrary non-negative density; no closed-form predictive.
  static Prior custom(std::string name, std::function<double(double)> density) {
    return Prior(std::move(name), 0.0, 0.0, std::move(density));
  }

  const std::string& name() const { return name_; }

  double log_density(double phi) const {
    if (density_) {
      const double d = density_(phi);
      if (!(d >= 0.0) || !std::isfinite(d))
        throw Error(ErrorKind::BadCount, "prior density must be finite and non-negative");
      return d == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(d);
    }
    return (a_ - 1.0) * std::log(phi) + (b_ - 1.0) * std::log1p(-phi);
  }

  /// Posterior mean of φ for a Beta-family prior, (r + a)/(n + a + b).
  std::optional<double> closed_form_mean(const TypeCount& c) const {
    if (density_) return std::nullopt;
    return (static_cast<double>(c.r) + a_) / (static_cast<double>(c.n) + a_ + b_);
  }

 private:
  Prior(std::string name, double a, double b, std::function<double(double)> density)
      : name_(std::move(name)), a_(a), b_(b), density_(std::move(density)) {}

  std::string name_;
  double a_;
  double b_;
  std::function<double(double)> density_;
};

// ---------------------------------------------------------------------------
// Posterior grid

struct PosteriorGrid {
  std::size_t grid = 0;
  std::vector<TypeCount> counts;
  // weights[i][j] is the posterior mass of φ_i at point(j); each row sums to 1.
  std::vector<std::vector<double>> weights;

  std::size_t components() const { return weights.size(); }
  double point(std::size_t j) const {
    return (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
  }
  double spacing() const { return 1.0 / static_cast<double>(grid); }

  const std::vector<double>& component(std::size_t i) const {
    if (i >= weights.size())
      throw Error(ErrorKind::BadIndex, "type index " + std::to_string(i) + " out of range");
    return weights[i];
  }
};

inline std::vector<double> component_posterior(const Prior& prior, const TypeCount& c,
                                               std::size_t grid) {
  std::vector<double> logw(grid);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid; ++j) {
    const double phi = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
    logw[j] = prior.log_density(phi) + detail::log_binomial_kernel(phi, c.n, c.r);
    peak = std::max(peak, logw[j]);
  }
  if (!std::isfinite(peak))
    throw Error(ErrorKind::ZeroNormalizer, "prior vanishes wherever the likelihood is positive");
  double z = 0.0;
  for (auto& w : logw) z += (w = std::exp(w - peak));
  for (auto& w : logw) w /= z;
  return logw;
}

inline PosteriorGrid posterior(const Prior& prior, const CountTable& counts, std::size_t grid) {
  if (grid < 3) throw Error(ErrorKind::BadCount, "grid needs at least 3 points");
  PosteriorGrid out;
  out.grid = grid;
  out.counts = counts.types;
  for (const auto& c : counts.types) out.weights.push_back(component_posterior(prior, c, grid));
  return out;
}

/// Posterior mean of φ_i.
inline double transductive_predict(const PosteriorGrid& post, std::size_t i) {
  const auto& w = post.component(i);
  double mean = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) mean += w[j] * post.point(j);
  return mean;
}

/// φ_i at the posterior mode; ties go to the lower φ, and a posterior that
/// is tied everywhere gives 0.5.
inline double map_predict(const PosteriorGrid& post, std::size_t i) {
  const auto& w = post.component(i);
  const auto best = std::max_element(w.begin(), w.end());
  if (std::all_of(w.begin(), w.end(), [&](double v) { return v == *best; })) return 0.5;
  return post.point(static_cast<std::size_t>(best - w.begin()));
}

struct Flatness {
  double posterior_sd = 0.0;
  double hdr_mass = 0.0;
  double width = 0.0;
};

/// Posterior sd of φ_i and the mass within width/2 of the mode.
inline Flatness flatness(const PosteriorGrid& post, std::size_t i, double width = 0.1) {
  const auto& w = post.component(i);
  const double mean = transductive_predict(post, i);
  const double mode = map_predict(post, i);
  Flatness f;
  f.width = width;
  double var = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double phi = post.point(j);
    var += w[j] * (phi - mean) * (phi - mean);
    if (std::abs(phi - mode) <= width / 2) f.hdr_mass += w[j];
  }
  f.posterior_sd = std::sqrt(var);
  return f;
}

/// type,n,r,map,transductive,closed_form,posterior_sd,hdr_mass
inline std::string diagnostics_csv(const PosteriorGrid& post, const Prior& prior,
                                   double width = 0.1) {
  std::string out = "type,n,r,map,transductive,closed_form,posterior_sd,hdr_mass\n";
  for (std::size_t i = 0; i < post.components(); ++i) {
    const auto& c = post.counts[i];
    const auto closed = prior.closed_form_mean(c);
    const auto f = flatness(post, i, width);
    out += std::to_string(i + 1) + "," + std::to_string(c.n) + "," + std::to_string(c.r) + "," +
           text::format_fixed(map_predict(post, i), 6) + "," +
           text::format_fixed(transductive_predict(post, i), 6) + "," +
           (closed ? text::format_fixed(*closed, 6) : std::string()) + "," +
           text::format_fixed(f.posterior_sd, 6) + "," + text::format_fixed(f.hdr_mass, 6) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predictor comparison by simulation

struct PredictorScore {
  std::string predictor;  // "map", "transduction" or "average"
  std::size_t k = 0;      // rules averaged; 0 for map and transduction
  double mean_error = 0.0;

  friend bool operator==(const PredictorScore&, const PredictorScore&) = default;
};

struct CompareOptions {
  std::size_t trials = 200;
  std::uint64_t seed = 1;
  std::size_t grid = 101;
  std::vector<std::size_t> ks = {1, 3, 5};
};

namespace detail {

// Expected 0/1 error on a fresh type-i point when predicting positive iff
// p > 0.5; p == 0.5 is a fair coin.
inline double expected_error(double p, double true_phi) {
  if (p > 0.5) return 1.0 - true_phi;
  if (p < 0.5) return true_phi;
  return 0.5;
}

inline std::size_t sample_index(const std::vector<double>& w, std::mt19937_64& rng) {
  const double u = uniform_unit(rng);
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    acc += w[j];
    if (u < acc) return j;
  }
  return w.size() - 1;
}

}  // namespace detail

/// One rule drawn from the posterior, componentwise.
inline ClassificationRule sample_rule(const PosteriorGrid& post, std::mt19937_64& rng) {
  ClassificationRule rule;
  for (const auto& w : post.weights) rule.phis.push_back(post.point(detail::sample_index(w, rng)));
  return rule;
}

/// Componentwise mean of equally weighted rules.
inline ClassificationRule average_rules(std::span<const ClassificationRule> rules) {
  if (rules.empty()) throw Error(ErrorKind::BadCount, "no rules to average");
  ClassificationRule out{std::vector<double>(rules.front().phis.size(), 0.0)};
  for (const auto& r : rules) {
    if (r.phis.size() != out.phis.size())
      throw Error(ErrorKind::LengthMismatch, "rules differ in length");
    for (std::size_t i = 0; i < r.phis.size(); ++i) out.phis[i] += r.phis[i];
  }
  if (rules.size() > 1)
    for (auto& p : out.phis) p /= static_cast<double>(rules.size());
  return out;
}

/// Draws a dataset with the given per-type sizes n_i from `true_rule`.
inline CountTable draw_counts(const CountTable& sizes, const ClassificationRule& true_rule,
                              std::mt19937_64& rng) {
  CountTable out = sizes;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.types[i].r = 0;
    for (std::size_t t = 0; t < out.types[i].n; ++t)
      out.types[i].r += uniform_unit(rng) < true_rule.phis[i];
  }
  return out;
}

/// Mean expected test error, averaged uniformly over types and over trials,
/// of MAP, transduction and averages of k rules sampled from the posterior.
/// Only the n_i of `sizes` are used; each trial redraws the r_i.
inline std::vector<PredictorScore> compare_predictors(const CountTable& sizes,
                                                      const ClassificationRule& true_rule,
                                                      const Prior& prior,
                                                      const CompareOptions& options) {
  if (options.trials < 1) throw Error(ErrorKind::BadCount, "trials must be at least 1");
  if (true_rule.phis.size() != sizes.size())
    throw Error(ErrorKind::LengthMismatch, "true rule and counts differ in length");
  for (const auto k : options.ks)
    if (k < 1) throw Error(ErrorKind::BadCount, "k must be at least 1");
  for (const double phi : true_rule.phis)
    if (!(phi >= 0.0 && phi <= 1.0))
      throw Error(ErrorKind::NotAProbabilityVector, "rule component outside [0, 1]");

  std::vector<PredictorScore> scores = {{"map", 0, 0.0}, {"transduction", 0, 0.0}};
  for (const auto k : options.ks) scores.push_back({"average", k, 0.0});
  if (sizes.size() == 0) return scores;

  std::mt19937_64 rng(options.seed);
  const double per_type = 1.0 / static_cast<double>(sizes.size());
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const CountTable observed = draw_counts(sizes, true_rule, rng);
    const PosteriorGrid post = posterior(prior, observed, options.grid);
    for (std::size_t i = 0; i < post.components(); ++i) {
      const double phi = true_rule.phis[i];
      scores[0].mean_error += per_type * detail::expected_error(map_predict(post, i), phi);
      scores[1].mean_error +=
          per_type * detail::expected_error(transductive_predict(post, i), phi);
    }
    for (std::size_t s = 0; s < options.ks.size(); ++s) {
      std::vector<ClassificationRule> rules;
      for (std::size_t r = 0; r < options.ks[s]; ++r) rules.push_back(sample_rule(post, rng));
      const ClassificationRule averaged = average_rules(rules);
      for (std::size_t i = 0; i < post.components(); ++i)
        scores[2 + s].mean_error +=
            per_type * detail::expected_error(averaged.phis[i], true_rule.phis[i]);
    }
  }
  for (auto& s : scores) s.mean_error /= static_cast<double>(options.trials);
  return scores;
}

inline std::string compare_csv(const std::vector<PredictorScore>& scores, std::size_t trials) {
  std::string out = "predictor,k,mean_error,trials\n";
  for (const auto& s : scores)
    out += s.predictor + "," + (s.k ? std::to_string(s.k) : std::string()) + "," +
           text::format_fixed(s.mean_error, 6) + "," + std::to_string(trials) + "\n";
  return out;
}

}  // namespace mdt::bayes
