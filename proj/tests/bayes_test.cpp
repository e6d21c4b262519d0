#include "mdt/bayes_oracle.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "gtest/gtest.h"

namespace mdt::bayes {
namespace {

CountTable table(std::vector<TypeCount> c) { return CountTable{std::move(c)}; }

// Simpson's rule on [0, 1] with `intervals` (even) subintervals.
template <class F>
double simpson(F f, std::size_t intervals = 200000) {
  const double h = 1.0 / static_cast<double>(intervals);
  double s = f(0.0) + f(1.0);
  for (std::size_t k = 1; k < intervals; ++k) s += (k % 2 ? 4.0 : 2.0) * f(h * static_cast<double>(k));
  return s * h / 3.0;
}

// Posterior mean under the uniform prior by direct integration.
double integrated_mean(std::size_t n, std::size_t r) {
  auto kernel = [&](double p) {
    return std::pow(p, static_cast<double>(r)) * std::pow(1 - p, static_cast<double>(n - r));
  };
  return simpson([&](double p) { return p * kernel(p); }) / simpson(kernel);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(Likelihood, Examples) {
  const auto empty = table({{0, 0}, {0, 0}});
  for (const double a : {0.0, 0.3, 1.0}) EXPECT_EQ(likelihood({{a, 1 - a}}, empty), 1.0);
  EXPECT_NEAR(likelihood({{0.3}}, table({{1, 1}})), 0.3, 1e-15);
  const double expected = std::pow(0.5, 1) * std::pow(0.5, 1) * std::pow(0.2, 0) * std::pow(0.8, 3);
  EXPECT_NEAR(expected, 0.128, 1e-15);
  EXPECT_NEAR(likelihood({{0.5, 0.2}}, table({{2, 1}, {3, 0}})), expected, 1e-15);
}

TEST(Likelihood, Errors) {
  EXPECT_THROW(likelihood({{0.5}}, table({{1, 0}, {1, 1}})), Error);
  EXPECT_THROW(likelihood({{1.5}}, table({{1, 0}})), Error);
}

TEST(Likelihood, BoundsAndCertaintyProperty) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    CountTable counts;
    ClassificationRule rule;
    const std::size_t c = 1 + rng() % 4;
    bool certain = true;
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t n = rng() % 5;
      const std::size_t r = n ? rng() % (n + 1) : 0;
      counts.types.push_back({n, r});
      double phi = (rng() % 5) / 4.0;
      if (rng() % 3 == 0) phi = r == n ? 1.0 : (r == 0 ? 0.0 : phi);
      rule.phis.push_back(phi);
      const bool covered = n == 0 || (r == n && phi == 1.0) || (r == 0 && phi == 0.0);
      certain = certain && covered;
    }
    const double l = likelihood(rule, counts);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    EXPECT_EQ(l == 1.0, certain);
  }
}

TEST(Posterior, Examples) {
  const auto prior = Prior::uniform();
  const auto flat = posterior(prior, table({{0, 0}}), 11);
  for (const double w : flat.weights[0]) EXPECT_NEAR(w, 1.0 / 11, 1e-15);

  const auto sym = posterior(prior, table({{2, 1}}), 101);
  for (std::size_t j = 0; j < 101; ++j) EXPECT_NEAR(sym.weights[0][j], sym.weights[0][100 - j], 1e-15);

  const auto three = posterior(prior, table({{3, 3}}), 1001);
  const double oracle = integrated_mean(3, 3);
  EXPECT_NEAR(oracle, 4.0 / 5.0, 1e-9);
  EXPECT_NEAR(transductive_predict(three, 0), oracle, 1e-5);
}

TEST(Posterior, Errors) {
  EXPECT_THROW(posterior(Prior::uniform(), table({{1, 0}}), 2), Error);
  const auto zero = Prior::custom("zero", [](double) { return 0.0; });
  try {
    posterior(zero, table({{1, 0}}), 11);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroNormalizer);
  }
  const auto half = Prior::custom("upper", [](double p) { return p > 0.5 ? 1.0 : 0.0; });
  const auto post = posterior(half, table({{2, 0}}), 11);
  EXPECT_EQ(post.weights[0][0], 0.0);
  EXPECT_GT(transductive_predict(post, 0), 0.5);
  EXPECT_THROW(Prior::beta(0, 1), Error);
  EXPECT_THROW(transductive_predict(post, 1), Error);
  EXPECT_THROW(map_predict(post, 1), Error);
  EXPECT_THROW(flatness(post, 3), Error);
}

TEST(Posterior, WeightsSumToOneProperty) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    CountTable counts;
    for (std::size_t i = 0; i < 1 + rng() % 5; ++i) {
      const std::size_t n = rng() % 2000;
      counts.types.push_back({n, n ? static_cast<std::size_t>(rng() % (n + 1)) : 0});
    }
    const std::size_t grid = 3 + rng() % 500;
    const auto prior = rng() % 2 ? Prior::uniform()
                                 : Prior::beta(0.5 + (rng() % 8) / 2.0, 0.5 + (rng() % 8) / 2.0);
    const auto post = posterior(prior, counts, grid);
    for (const auto& w : post.weights) {
      EXPECT_NEAR(sum(w), 1.0, 1e-12);
      for (const double v : w) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Transductive, Examples) {
  const auto prior = Prior::uniform();
  EXPECT_NEAR(transductive_predict(posterior(prior, table({{0, 0}}), 101), 0), 0.5, 1e-15);
  EXPECT_NEAR(transductive_predict(posterior(prior, table({{2, 1}}), 101), 0), 0.5, 1e-15);
  const double oracle = integrated_mean(9, 6);
  EXPECT_NEAR(oracle, 7.0 / 11.0, 1e-9);
  EXPECT_NEAR(transductive_predict(posterior(prior, table({{9, 6}}), 1001), 0), oracle, 1e-3);
}

TEST(Transductive, MatchesClosedFormProperty) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng() % 40;
    const std::size_t r = rng() % (n + 1);
    const std::size_t grid = 3 + rng() % 2000;
    const auto post = posterior(Prior::uniform(), table({{n, r}}), grid);
    const double closed = (static_cast<double>(r) + 1) / (static_cast<double>(n) + 2);
    EXPECT_NEAR(transductive_predict(post, 0), closed, 2.0 / static_cast<double>(grid))
        << n << " " << r << " G=" << grid;
  }
}

TEST(Transductive, BetaPriorClosedForm) {
  const auto prior = Prior::beta(3, 2);
  const auto counts = table({{5, 1}});
  const auto post = posterior(prior, counts, 2001);
  EXPECT_NEAR(transductive_predict(post, 0), *prior.closed_form_mean(counts.types[0]), 1e-4);
  EXPECT_NEAR(*prior.closed_form_mean(counts.types[0]), 4.0 / 10.0, 1e-15);
  EXPECT_FALSE(Prior::custom("c", [](double) { return 1.0; }).closed_form_mean({1, 0}));
}

TEST(Transductive, GridRefinementProperty) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng() % 60;
    const std::size_t r = rng() % (n + 1);
    const std::size_t grid = 3 + rng() % 400;
    const auto coarse = posterior(Prior::uniform(), table({{n, r}}), grid);
    const auto fine = posterior(Prior::uniform(), table({{n, r}}), 2 * grid);
    EXPECT_LE(std::abs(transductive_predict(coarse, 0) - transductive_predict(fine, 0)),
              coarse.spacing());
  }
}

TEST(Posterior, PermutationEquivariantProperty) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    CountTable counts;
    for (std::size_t i = 0; i < 2 + rng() % 5; ++i) {
      const std::size_t n = rng() % 30;
      counts.types.push_back({n, static_cast<std::size_t>(rng() % (n + 1))});
    }
    std::vector<std::size_t> perm(counts.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    CountTable permuted;
    for (const auto p : perm) permuted.types.push_back(counts.types[p]);
    const auto a = posterior(Prior::beta(2, 3), counts, 101);
    const auto b = posterior(Prior::beta(2, 3), permuted, 101);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(b.weights[i], a.weights[perm[i]]);
  }
}

TEST(Map, Examples) {
  const auto prior = Prior::uniform();
  const std::size_t grid = 1001;
  // The midpoint grid's extreme points sit half a cell inside [0, 1].
  EXPECT_NEAR(map_predict(posterior(prior, table({{4, 4}}), grid), 0), 1.0, 1.0 / grid);
  EXPECT_EQ(map_predict(posterior(prior, table({{4, 4}}), grid), 0), 1.0 - 0.5 / grid);
  EXPECT_NEAR(map_predict(posterior(prior, table({{4, 0}}), grid), 0), 0.0, 1.0 / grid);

  // Coarse-scan oracle for the mode of φ²(1 − φ)³.
  double best = 0, arg = 0;
  for (int k = 0; k <= 10000; ++k) {
    const double p = k / 10000.0;
    const double v = p * p * std::pow(1 - p, 3);
    if (v > best) best = v, arg = p;
  }
  EXPECT_NEAR(arg, 0.4, 1e-4);
  EXPECT_NEAR(map_predict(posterior(prior, table({{5, 2}}), grid), 0), arg, 1e-3);
  EXPECT_EQ(map_predict(posterior(prior, table({{0, 0}}), grid), 0), 0.5);
}

TEST(Map, TiesGoToLowerPhi) {
  // Even grid: (2,1) is symmetric with two tied central points.
  const auto post = posterior(Prior::uniform(), table({{2, 1}}), 4);
  ASSERT_EQ(post.weights[0][1], post.weights[0][2]);
  EXPECT_EQ(map_predict(post, 0), post.point(1));
}

TEST(Flatness, Examples) {
  const auto prior = Prior::uniform();
  const auto flat = flatness(posterior(prior, table({{0, 0}}), 1001), 0);
  EXPECT_NEAR(flat.posterior_sd, 1.0 / std::sqrt(12.0), 1e-6);
  double previous = 1.0;
  for (const std::size_t n : {2, 8, 32}) {
    const double sd = flatness(posterior(prior, table({{n, n / 2}}), 1001), 0).posterior_sd;
    EXPECT_LT(sd, previous) << n;
    previous = sd;
  }
  const auto peaked = flatness(posterior(prior, table({{1000, 500}}), 1001), 0, 0.1);
  EXPECT_GE(peaked.hdr_mass, 0.99);
  EXPECT_EQ(peaked.width, 0.1);
}

TEST(CountTable, ParseAndSerialize) {
  const auto t = parse_count_table("| types\n3 1\n  0 0 \n\n12 12 | all positive\n");
  EXPECT_EQ(t, table({{3, 1}, {0, 0}, {12, 12}}));
  EXPECT_EQ(parse_count_table(serialize_count_table(t)), t);
  for (const char* bad : {"3\n", "3 x\n", "1 2 3\n"}) {
    try {
      parse_count_table(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::FormatError);
    }
  }
  try {
    parse_count_table("1 1\n2 3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadCounts);
    EXPECT_EQ(e.row(), 2u);
  }
}

TEST(Compare, PeakedPosteriorMakesMapAndTransductionAgree) {
  const ClassificationRule truth{{0.9, 0.1, 0.8}};
  const auto sizes = table({{1000, 0}, {1000, 0}, {1000, 0}});
  CompareOptions options;
  options.trials = 50;
  options.ks = {1, 3};
  const auto scores = compare_predictors(sizes, truth, Prior::uniform(), options);
  ASSERT_EQ(scores.size(), 4u);
  EXPECT_EQ(scores[0].predictor, "map");
  EXPECT_EQ(scores[1].predictor, "transduction");
  EXPECT_NEAR(scores[0].mean_error, scores[1].mean_error, 1e-12);
  // Every predictor lands on the Bayes-optimal side: error (0.1 + 0.1 + 0.2)/3.
  for (const auto& s : scores) EXPECT_NEAR(s.mean_error, 0.4 / 3, 1e-12) << s.predictor;
}

TEST(Compare, FlatPosteriorTransductionNoWorseThanMap) {
  const ClassificationRule truth{{0.7, 0.35, 0.6, 0.2, 0.55}};
  const auto sizes = table({{1, 0}, {2, 0}, {0, 0}, {1, 0}, {3, 0}});
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CompareOptions options;
    options.seed = seed;
    options.trials = 100;
    const auto s = compare_predictors(sizes, truth, Prior::uniform(), options);
    wins += s[1].mean_error <= s[0].mean_error;
  }
  EXPECT_GE(wins, 8);
}

TEST(Compare, SingleRuleAverageIsThatRule) {
  const auto post = posterior(Prior::uniform(), table({{3, 1}, {5, 5}}), 101);
  std::mt19937_64 rng(2);
  const auto rule = sample_rule(post, rng);
  ASSERT_EQ(rule.phis.size(), 2u);
  const std::vector<ClassificationRule> one = {rule};
  EXPECT_EQ(average_rules(one), rule);
  const std::vector<ClassificationRule> two = {rule, ClassificationRule{{0.0, 0.0}}};
  EXPECT_EQ(average_rules(two).phis[1], rule.phis[1] / 2);
}

TEST(Compare, DeterministicUnderSeed) {
  const ClassificationRule truth{{0.6, 0.3}};
  const auto sizes = table({{4, 0}, {2, 0}});
  CompareOptions options;
  options.seed = 99;
  const auto a = compare_predictors(sizes, truth, Prior::uniform(), options);
  EXPECT_EQ(compare_predictors(sizes, truth, Prior::uniform(), options), a);
  EXPECT_EQ(compare_csv(a, options.trials).substr(0, 31), "predictor,k,mean_error,trials\nm");
  options.trials = 0;
  EXPECT_THROW(compare_predictors(sizes, truth, Prior::uniform(), options), Error);
}

TEST(Diagnostics, CsvColumns) {
  const auto prior = Prior::uniform();
  const auto post = posterior(prior, table({{2, 1}, {0, 0}}), 101);
  const std::string csv = diagnostics_csv(post, prior);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "type,n,r,map,transductive,closed_form,posterior_sd,hdr_mass");
  EXPECT_NE(csv.find("\n1,2,1,0.500000,0.500000,0.500000,"), std::string::npos);
}

}  // namespace
}  // namespace mdt::bayes
