#include "mdt/evaluation.hpp"

#include <random>

#include "gtest/gtest.h"
#include "mdt/pruning.hpp"
#include "mdt/synthetic.hpp"
#include "test_support.hpp"

namespace mdt {
namespace {

Dataset labels_only(std::shared_ptr<const Schema> schema, const std::vector<std::size_t>& labels) {
  Dataset d{std::move(schema), {}};
  for (const auto l : labels) d.instances.push_back({{Category{0}}, l});
  return d;
}

std::shared_ptr<const Schema> two_class() {
  return testing::share(parse_schema("class: A, B.\nx: p, q."));
}

Tree leaf_tree(std::shared_ptr<const Schema> schema, std::vector<std::size_t> counts) {
  Tree t;
  t.schema = std::move(schema);
  t.root.dist = ClassDistribution(std::move(counts));
  t.root.label = t.root.dist.majority();
  return t;
}

TEST(PercentageError, Extremes) {
  const Dataset d = labels_only(two_class(), {0, 1, 1, 0});
  EXPECT_EQ(percentage_error([](const Instance& x) { return x.label; }, d), 0.0);
  EXPECT_EQ(percentage_error([](const Instance& x) { return 1 - x.label; }, d), 100.0);
}

TEST(PercentageError, TwoDecimalReporting) {
  std::vector<std::size_t> labels(2516, 0);
  std::fill(labels.begin(), labels.begin() + 745, 1);
  const Dataset d = labels_only(two_class(), labels);
  const double e = percentage_error([](const Instance&) { return std::size_t{0}; }, d);
  EXPECT_NEAR(e, 100.0 * 745 / 2516, 1e-12);
  EXPECT_NEAR(e, 29.61, 0.005);
  EXPECT_EQ(text::format_fixed(e, 2), "29.61");
}

TEST(PercentageError, EmptyTestSet) {
  const Dataset d{two_class(), {}};
  try {
    percentage_error([](const Instance&) { return std::size_t{0}; }, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyTestSet);
  }
}

TEST(PercentageError, PermutationInvariantProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Dataset d = testing::random_dataset(rng, {});
    const Tree t = build_tree(d);
    Dataset shuffled = d;
    shuffle_in_place(shuffled.instances, rng);
    auto predict = [&](const Instance& x) { return static_cast<std::size_t>(x.values.size() % 2); };
    EXPECT_EQ(percentage_error(predict, d), percentage_error(predict, shuffled));
    EXPECT_EQ(evaluate(t, d).percent_error, evaluate(t, shuffled).percent_error);
  }
}

TEST(HalfBrier, Examples) {
  const Dataset d = labels_only(two_class(), {0, 1, 1, 0, 1});
  auto one_hot = [](const Instance& x) {
    std::vector<double> p(2, 0.0);
    p[x.label] = 1.0;
    return p;
  };
  EXPECT_EQ(half_brier(one_hot, d), 0.0);
  EXPECT_EQ(half_brier([](const Instance&) { return std::vector<double>{0.5, 0.5}; }, d), 0.25);
  EXPECT_THROW(half_brier([](const Instance&) { return std::vector<double>{0.5, 0.6}; }, d), Error);
  EXPECT_THROW(half_brier([](const Instance&) { return std::vector<double>{1.0}; }, d), Error);
  EXPECT_THROW(half_brier([](const Instance&) { return std::vector<double>{1.5, -0.5}; }, d),
               Error);
  EXPECT_NO_THROW(half_brier([](const Instance&) { return std::vector<double>{0.3, 0.7 + 1e-12}; },
                             d));
}

TEST(HalfBrier, MultiClassIsHalvedBrierSum) {
  const auto schema = testing::share(parse_schema("class: A, B, C.\nx: p, q."));
  const Dataset d = labels_only(schema, {0, 2});
  const auto p = [](const Instance&) { return std::vector<double>{0.5, 0.25, 0.25}; };
  // (0.25 + 0.0625 + 0.0625) + (0.25 + 0.0625 + 0.5625) = 1.25; / (2·2)
  EXPECT_DOUBLE_EQ(half_brier(p, d), 1.25 / 4);
}

TEST(HalfBrier, EqualsErrorRateForOneHotProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t classes = 2 + rng() % 3;
    std::string schema_text = "class: c0";
    for (std::size_t c = 1; c < classes; ++c) schema_text += ", c" + std::to_string(c);
    const auto schema = testing::share(parse_schema(schema_text + ".\nx: p, q."));
    const std::size_t n = 1 + rng() % 3000;
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng() % classes;
    const Dataset d = labels_only(schema, labels);
    std::vector<std::size_t> predicted(n);
    for (auto& p : predicted) p = rng() % classes;
    std::size_t i = 0, j = 0;
    const double pe =
        percentage_error([&](const Instance&) { return predicted[i++]; }, d);
    const double hb = half_brier(
        [&](const Instance&) {
          std::vector<double> v(classes, 0.0);
          v[predicted[j++]] = 1.0;
          return v;
        },
        d);
    EXPECT_EQ(hb, pe / 100) << "n=" << n;
  }
}

TEST(Evaluate, PureLeafOnOneClassTestSet) {
  const auto schema = two_class();
  const Tree t = leaf_tree(schema, {5, 0});
  const auto r = evaluate(t, labels_only(schema, {0, 0, 0}), "leaf");
  EXPECT_EQ(r, (EvalReport{"leaf", 0.0, 0.0, 3}));
}

TEST(Evaluate, TreeEqualsSingleTreeEnsemble) {
  const auto data = synthetic::benchmark(4);
  const Tree raw = build_tree(data.train);
  const Tree pruned = prune(raw);
  EXPECT_EQ(evaluate(raw, data.test), evaluate(Ensemble::of({raw}), data.test));
  for (const auto method : {CombineMethod::Voting, CombineMethod::ClassProbability})
    EXPECT_EQ(evaluate(pruned, data.test), evaluate(Ensemble::of({pruned}, method), data.test));
  // Unpruned trees give categorical output.
  const auto r = evaluate(raw, data.test);
  EXPECT_EQ(r.half_brier, r.percent_error / 100);
}

TEST(Evaluate, AgreesWithPredictionDump) {
  const auto data = synthetic::benchmark(8);
  auto trees = generate_alternates(data.train);
  for (auto& t : trees) t = prune(t);
  for (const auto method : {CombineMethod::Voting, CombineMethod::ClassProbability}) {
    const Ensemble e = Ensemble::of(trees, method);
    const auto report = evaluate(e, data.test);
    const auto records = csv::parse(prediction_dump(e, data.test));
    ASSERT_EQ(records.size(), data.test.size() + 1);
    EXPECT_EQ(records[0].fields, (std::vector<std::string>{"row", "actual", "predicted", "p_pos",
                                                            "p_neg"}));
    // Oracle: recount from the dump alone.
    std::size_t wrong = 0;
    long double squared = 0;
    for (std::size_t i = 1; i < records.size(); ++i) {
      const auto& f = records[i].fields;
      wrong += f[1] != f[2];
      const long double p_pos = std::stold(f[3]);
      const long double p_neg = std::stold(f[4]);
      const long double y_pos = f[1] == "pos" ? 1 : 0;
      squared += (p_pos - y_pos) * (p_pos - y_pos) + (p_neg - (1 - y_pos)) * (p_neg - (1 - y_pos));
    }
    EXPECT_DOUBLE_EQ(report.percent_error, 100.0 * static_cast<double>(wrong) / 1000.0);
    EXPECT_NEAR(report.half_brier, static_cast<double>(squared / 2000.0L), 1e-12);
    EXPECT_EQ(report.n, 1000u);
  }
}

TEST(Evaluate, Errors) {
  const auto data = synthetic::benchmark(1, 50, 10);
  const Tree t = build_tree(data.train);
  EXPECT_THROW(evaluate(t, Dataset{t.schema, {}}), Error);
  const auto other = testing::share(parse_schema("class: pos, neg.\nx: p, q."));
  try {
    evaluate(t, labels_only(other, {0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaMismatch);
  }
}

std::vector<std::shared_ptr<const Tree>> shared(const std::vector<Tree>& trees) {
  std::vector<std::shared_ptr<const Tree>> out;
  for (const auto& t : trees) out.push_back(std::make_shared<const Tree>(t));
  return out;
}

std::vector<std::shared_ptr<const Tree>> benchmark_trees(std::uint64_t seed, bool pruned) {
  const auto data = synthetic::benchmark(seed);
  AlternatesConfig config;
  config.gain_ratio = 0.4;
  auto trees = generate_alternates(data.train, config);
  if (pruned)
    for (auto& t : trees) t = prune(t);
  return shared(trees);
}

TEST(Sweep, DegenerateSizes) {
  const auto data = synthetic::benchmark(3);
  const auto trees = benchmark_trees(3, true);
  const std::size_t m = trees.size();
  ASSERT_GE(m, 3u);
  SweepOptions options;
  options.counts = {1, m};
  const auto rows = sweep(trees, data.test, options);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].combination_count, m);
  EXPECT_EQ(rows[1].combination_count, 1u);
  double mean_error = 0, mean_brier = 0;
  for (const auto& t : trees) {
    const auto r = evaluate(t, data.test);
    mean_error += r.percent_error;
    mean_brier += r.half_brier;
  }
  EXPECT_EQ(rows[0].mean_percent_error, mean_error / static_cast<double>(m));
  EXPECT_EQ(rows[0].mean_half_brier, mean_brier / static_cast<double>(m));
  EXPECT_EQ(rows[1].mean_percent_error,
            evaluate(Ensemble(trees), data.test).percent_error);
}

TEST(Sweep, CountValidation) {
  const auto data = synthetic::benchmark(2);
  const auto unpruned = benchmark_trees(2, false);
  ASSERT_GE(unpruned.size(), 3u);
  SweepOptions options;
  for (const auto& counts : std::vector<std::vector<std::size_t>>{
           {}, {0}, {unpruned.size() + 1}, {1, 2}}) {
    options.counts = counts;
    try {
      sweep(unpruned, data.test, options);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::BadCounts);
    }
  }
  options.allow_ties = true;
  EXPECT_NO_THROW(sweep(unpruned, data.test, options));
  options.allow_ties = false;
  options.method = CombineMethod::ClassProbability;
  EXPECT_NO_THROW(sweep(unpruned, data.test, options));
}

TEST(Sweep, MostDifferentSelection) {
  auto sig = [](std::size_t root, std::set<std::size_t> level2) {
    TreeSignature s;
    s.root_test = SplitTest::discrete(root);
    for (const auto a : level2) s.level2_tests.insert(SplitTest::discrete(a));
    return s;
  };
  const std::vector<TreeSignature> sigs = {sig(0, {5}), sig(0, {6}), sig(1, {5}), sig(2, {5}),
                                           sig(2, {7})};
  // Four subsets have three distinct roots: {0,1} x {2} x {3,4}. Only
  // {1,2,4} also has three distinct level-2 sets.
  const auto best = most_different(sigs, 3);
  const std::vector<std::vector<std::size_t>> expected = {{1, 2, 4}};
  EXPECT_EQ(best, expected);
  for (const auto& c : best) EXPECT_EQ(diversity_score(sigs, c), (std::pair<std::size_t, std::size_t>{3, 3}));
}

TEST(Sweep, ParallelMatchesSerial) {
  const auto data = synthetic::benchmark(5);
  const auto trees = benchmark_trees(5, true);
  SweepOptions options;
  options.counts = {1, 2, 3};
  options.prefer_different = true;
  const auto serial = sweep(trees, data.test, options);
  options.jobs = 4;
  EXPECT_EQ(sweep(trees, data.test, options), serial);
  EXPECT_EQ(sweep_csv(serial).substr(0, sweep_csv(serial).find('\n')),
            "tree_count,combination_count,mean_percent_error,mean_half_brier,method,selection");
}

TEST(Curve, ExportAndParse) {
  std::vector<SweepRow> rows(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rows[i].tree_count = 2 * i + 1;
    rows[i].mean_half_brier = 0.1 / static_cast<double>(i + 1);
    rows[i].mean_percent_error = 20.0 - static_cast<double>(i);
    rows[i].combination_count = 1;
  }
  const auto points = curve_points(rows, CurveMetric::HalfBrier);
  const std::string body = curve_export(points);
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 4);
  EXPECT_EQ(body.substr(0, 8), "k,score\n");
  EXPECT_EQ(parse_curve(body), points);
  EXPECT_EQ(curve_points(rows, CurveMetric::PercentError)[2].score, 18.0);
  EXPECT_THROW(parse_curve("x,y\n1,2\n"), Error);
  EXPECT_THROW(parse_curve("k,score\n0,2\n"), Error);
  EXPECT_THROW(parse_curve("k,score\n1,abc\n"), Error);
}

}  // namespace
}  // namespace mdt
