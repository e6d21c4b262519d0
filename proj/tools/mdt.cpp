// mdt: command-line front end for tree induction, pruning, alternates,
// ensembles, evaluation, the two-class Bayes oracle and the session service.
//
// Exit codes: 0 success, 2 usage, 3 data or I/O, 4 internal.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdt/bayes_oracle.hpp"
#include "mdt/csv.hpp"
#include "mdt/dataset.hpp"
#include "mdt/ensemble.hpp"
#include "mdt/evaluation.hpp"
#include "mdt/induction.hpp"
#include "mdt/pruning.hpp"
#include "mdt/session_http.hpp"
#include "mdt/synthetic.hpp"
#include "mdt/tree_io.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kInternal = 4 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
  if (!out) throw IoError("write failed for " + path.string());
}

// An empty path or "-" means standard output.
void emit(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body << std::flush;
    return;
  }
  write_file(path, body);
}

std::shared_ptr<const mdt::Schema> load_schema(const std::string& path) {
  return std::make_shared<const mdt::Schema>(mdt::parse_schema(read_file(path)));
}

mdt::Dataset load_data(const std::string& path, std::shared_ptr<const mdt::Schema> schema) {
  return mdt::parse_dataset(read_file(path), std::move(schema));
}

std::shared_ptr<const mdt::Tree> load_tree(const std::string& path,
                                           std::shared_ptr<const mdt::Schema> schema) {
  return std::make_shared<const mdt::Tree>(mdt::parse_tree(read_file(path), std::move(schema)));
}

// Tree files in `dir`, ordered by file name.
std::vector<std::string> tree_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".tree")
      out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no .tree files in " + dir);
  return out;
}

mdt::CombineMethod parse_method(const std::string& s) {
  if (s == "voting") return mdt::CombineMethod::Voting;
  if (s == "probability" || s == "class-probability") return mdt::CombineMethod::ClassProbability;
  throw UsageError("unknown combination method '" + s + "'");
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto part : mdt::text::split(s, ',')) {
    const auto v = mdt::text::parse_finite(mdt::text::trim(part));
    if (!v) throw UsageError("expected a comma-separated list of numbers, got '" + s + "'");
    out.push_back(*v);
  }
  return out;
}

// `uniform` or `beta:a,b`.
mdt::bayes::Prior parse_prior(const std::string& s) {
  if (s == "uniform") return mdt::bayes::Prior::uniform();
  if (s.rfind("beta:", 0) == 0) {
    const auto ab = parse_doubles(s.substr(5));
    if (ab.size() != 2) throw UsageError("beta prior is written beta:a,b");
    return mdt::bayes::Prior::beta(ab[0], ab[1]);
  }
  throw UsageError("unknown prior '" + s + "'");
}

std::string choice_log_csv(const mdt::Tree& tree) {
  std::string out = "path,chosen,rank,gain,candidates\n";
  for (const auto& rec : tree.choice_log) {
    std::size_t rank = 0;
    while (rank < rec.ranked.size() && rec.ranked[rank].test != rec.chosen) ++rank;
    const double gain = rank < rec.ranked.size() ? rec.ranked[rank].gain : 0.0;
    out += mdt::csv::join({mdt::format_path(rec.path), mdt::describe(rec.chosen, *tree.schema),
                           std::to_string(rank), mdt::text::format_roundtrip(gain),
                           std::to_string(rec.ranked.size())}) +
           "\n";
  }
  return out;
}

std::string signature_csv(const std::vector<mdt::Tree>& trees,
                          const std::vector<std::string>& files) {
  std::string out = "index,file,size,pruned,root,level2\n";
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto sig = mdt::signature(trees[i]);
    const auto& schema = *trees[i].schema;
    std::string level2;
    for (const auto& t : sig.level2_tests) {
      if (!level2.empty()) level2 += "; ";
      level2 += mdt::describe(t, schema);
    }
    out += mdt::csv::join({std::to_string(i), files[i], std::to_string(trees[i].size()),
                           trees[i].pruned() ? "yes" : "no",
                           sig.root_test ? mdt::describe(*sig.root_test, schema) : "(leaf)",
                           level2}) +
           "\n";
  }
  return out;
}

mdt::Tree apply_prune(const mdt::Tree& tree, const std::string& method, double z,
                      double correction, const mdt::Dataset* holdout) {
  if (method == "pessimistic") return mdt::prune(tree, mdt::Pessimistic{z, correction});
  if (method == "reduced-error") {
    if (!holdout) throw UsageError("reduced-error pruning needs --holdout");
    return mdt::prune(tree, mdt::ReducedError{std::cref(*holdout)});
  }
  throw UsageError("unknown pruning method '" + method + "'");
}

// Options shared by several subcommands.
struct Options {
  std::string schema, data, test, holdout, out, out_dir, log, tree_dir, manifest;
  std::string predictions, curve, metric = "error";
  std::vector<std::string> trees;
  std::string method = "voting";
  std::string prune_method = "pessimistic";
  std::string alt_prune = "none";
  double z = 1.0, correction = 0.5;
  std::size_t max_depth = 0;
  std::uint64_t seed = 0;
  std::size_t train = 300, test_count = 1000, jobs = 1;
  double noise = 0.15;
  mdt::AlternatesConfig alternates;
  std::vector<std::size_t> counts;
  bool prefer_different = false, allow_ties = false;

  std::string counts_file, prior = "uniform", predict = "all", posterior, diagnostics, compare;
  std::string truth;
  std::size_t grid = 1001, trials = 200;
  std::vector<std::size_t> ks = {1, 3, 5};
  double width = 0.1;

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  std::vector<std::string> datasets;
};

int run_build(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto train = load_data(o.data, schema);
  const auto tree = mdt::build_tree(train, mdt::DefaultPolicy{}, {o.max_depth});
  emit(o.out, mdt::serialize_tree(tree));
  if (!o.log.empty()) emit(o.log, choice_log_csv(tree));
  return kOk;
}

int run_prune(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto tree = load_tree(o.trees.front(), schema);
  std::optional<mdt::Dataset> holdout;
  if (!o.holdout.empty()) holdout = load_data(o.holdout, schema);
  const auto pruned =
      apply_prune(*tree, o.prune_method, o.z, o.correction, holdout ? &*holdout : nullptr);
  emit(o.out, mdt::serialize_tree(pruned));
  return kOk;
}

int run_alternates(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto train = load_data(o.data, schema);
  auto config = o.alternates;
  config.jobs = o.jobs;
  auto trees = mdt::generate_alternates(train, config);
  if (o.alt_prune != "none")
    for (auto& t : trees) t = apply_prune(t, o.alt_prune, o.z, o.correction, nullptr);

  const fs::path dir(o.out_dir);
  std::vector<std::string> files;
  mdt::Manifest manifest;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "tree_%02zu.tree", i);
    files.emplace_back(name);
    write_file(dir / name, mdt::serialize_tree(trees[i]));
    manifest.trees.push_back({1.0, name});
  }
  write_file(dir / "signatures.csv", signature_csv(trees, files));
  write_file(dir / "manifest.txt", mdt::serialize_manifest(manifest));
  return kOk;
}

int run_combine(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto test = load_data(o.test, schema);
  const auto manifest = mdt::parse_manifest(read_file(o.manifest));
  const fs::path base = fs::path(o.manifest).parent_path();
  std::vector<std::shared_ptr<const mdt::Tree>> trees;
  std::vector<double> weights;
  for (const auto& e : manifest.trees) {
    trees.push_back(load_tree((base / e.path).string(), schema));
    weights.push_back(e.weight);
  }
  const mdt::Ensemble ensemble(std::move(trees), manifest.method, std::move(weights));
  const std::vector<mdt::EvalReport> reports = {mdt::evaluate(ensemble, test, "ensemble")};
  emit(o.out, mdt::report_csv(reports));
  if (!o.predictions.empty()) emit(o.predictions, mdt::prediction_dump(ensemble, test));
  return kOk;
}

int run_eval(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto test = load_data(o.test, schema);
  std::vector<mdt::EvalReport> reports;
  for (const auto& path : o.trees) reports.push_back(mdt::evaluate(load_tree(path, schema), test, path));
  emit(o.out, mdt::report_csv(reports));
  return kOk;
}

int run_sweep(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto test = load_data(o.test, schema);
  std::vector<std::shared_ptr<const mdt::Tree>> trees;
  for (const auto& path : tree_files(o.tree_dir)) trees.push_back(load_tree(path, schema));
  const mdt::SweepOptions options{o.counts, o.prefer_different, parse_method(o.method),
                                  o.allow_ties, o.jobs};
  if (o.metric != "error" && o.metric != "brier") throw UsageError("--metric is error or brier");
  const auto rows = mdt::sweep(trees, test, options);
  emit(o.out, mdt::sweep_csv(rows));
  if (!o.curve.empty()) {
    const auto metric =
        o.metric == "brier" ? mdt::CurveMetric::HalfBrier : mdt::CurveMetric::PercentError;
    emit(o.curve, mdt::curve_export(mdt::curve_points(rows, metric)));
  }
  return kOk;
}

int run_bayes(const Options& o, bool seed_given) {
  namespace b = mdt::bayes;
  const auto counts = b::parse_count_table(read_file(o.counts_file));
  const auto prior = parse_prior(o.prior);
  if (o.predict != "all" && o.predict != "map" && o.predict != "transduction")
    throw UsageError("--predict is all, map or transduction");
  std::optional<b::ClassificationRule> truth;
  if (!o.compare.empty()) {
    if (!seed_given) throw UsageError("--compare draws random counts and needs --seed");
    if (o.truth.empty()) throw UsageError("--compare needs --truth");
    truth = b::ClassificationRule{parse_doubles(o.truth)};
  }
  const auto post = b::posterior(prior, counts, o.grid);

  std::string table = "type,n,r";
  if (o.predict != "transduction") table += ",map";
  if (o.predict != "map") table += ",transductive";
  table += ",closed_form\n";
  for (std::size_t i = 0; i < post.components(); ++i) {
    const auto& c = counts.types[i];
    table += std::to_string(i + 1) + "," + std::to_string(c.n) + "," + std::to_string(c.r);
    if (o.predict != "transduction") table += "," + mdt::text::format_fixed(b::map_predict(post, i), 6);
    if (o.predict != "map")
      table += "," + mdt::text::format_fixed(b::transductive_predict(post, i), 6);
    const auto closed = prior.closed_form_mean(c);
    table += "," + (closed ? mdt::text::format_fixed(*closed, 6) : std::string()) + "\n";
  }
  emit(o.out, table);

  if (!o.posterior.empty()) {
    std::string out = "type,phi,weight\n";
    for (std::size_t i = 0; i < post.components(); ++i)
      for (std::size_t j = 0; j < post.grid; ++j)
        out += std::to_string(i + 1) + "," + mdt::text::format_roundtrip(post.point(j)) + "," +
               mdt::text::format_roundtrip(post.weights[i][j]) + "\n";
    emit(o.posterior, out);
  }
  if (!o.diagnostics.empty()) emit(o.diagnostics, b::diagnostics_csv(post, prior, o.width));
  if (truth) {
    b::CompareOptions options{o.trials, o.seed, o.grid, o.ks};
    emit(o.compare, b::compare_csv(b::compare_predictors(counts, *truth, prior, options), o.trials));
  }
  return kOk;
}

int run_synth(const Options& o) {
  mdt::synthetic::DnfConfig config;
  config.noise = o.noise;
  const auto data = mdt::synthetic::benchmark(o.seed, o.train, o.test_count, config);
  const fs::path dir(o.out_dir);
  write_file(dir / "dnf.names", mdt::serialize_schema(*data.train.schema));
  write_file(dir / "train.csv", mdt::serialize_dataset(data.train));
  write_file(dir / "test.csv", mdt::serialize_dataset(data.test));
  return kOk;
}

int run_split(const Options& o) {
  const auto schema = load_schema(o.schema);
  const auto data = load_data(o.data, schema);
  const auto parts = mdt::split(data, o.train, o.seed);
  const fs::path dir(o.out_dir);
  write_file(dir / "train.csv", mdt::serialize_dataset(parts.train));
  write_file(dir / "test.csv", mdt::serialize_dataset(parts.test));
  return kOk;
}

int run_serve(const Options& o) {
  mdt::session::SessionManager manager;
  for (const auto& entry : o.datasets) {
    // name=schema_path,data_path
    const auto eq = entry.find('=');
    const auto comma = entry.find(',', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || comma == std::string::npos)
      throw UsageError("--dataset is name=schema_path,data_path");
    const std::string schema_text = read_file(entry.substr(eq + 1, comma - eq - 1));
    const std::string data_text = read_file(entry.substr(comma + 1));
    // Reject unparsable datasets at startup rather than on first use.
    const auto schema = std::make_shared<const mdt::Schema>(mdt::parse_schema(schema_text));
    mdt::parse_dataset(data_text, schema);
    manager.register_dataset(entry.substr(0, eq), {schema_text, data_text});
  }
  mdt::session::HttpServer server(manager, o.static_dir);
  const int port = server.bind(o.host, o.port);
  if (port < 0) throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
  std::cout << "listening on " << o.host << ":" << port << std::endl;
  return server.serve() ? kOk : kData;
}

int run(int argc, char** argv) {
  CLI::App app{"Decision tree induction, tree ensembles and a two-class Bayes oracle."};
  app.require_subcommand(1);
  Options o;

  auto* build = app.add_subcommand("build", "Grow an ID3 tree and write it with its choice log");
  build->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  build->add_option("--data", o.data, "Training CSV")->required()->check(CLI::ExistingFile);
  build->add_option("--out", o.out, "Tree file (default stdout)");
  build->add_option("--log", o.log, "Choice log CSV");
  build->add_option("--max-depth", o.max_depth, "Depth limit, root is 1; 0 = none");

  auto* prune = app.add_subcommand("prune", "Prune a tree file");
  prune->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  prune->add_option("--tree", o.trees, "Tree file")->required()->expected(1)->check(CLI::ExistingFile);
  prune->add_option("--method", o.prune_method, "pessimistic or reduced-error")
      ->check(CLI::IsMember({"pessimistic", "reduced-error"}));
  prune->add_option("--z", o.z, "Pessimistic: standard errors added");
  prune->add_option("--correction", o.correction, "Pessimistic: continuity correction");
  prune->add_option("--holdout", o.holdout, "Reduced-error: holdout CSV")->check(CLI::ExistingFile);
  prune->add_option("--out", o.out, "Pruned tree file (default stdout)");

  auto* alt = app.add_subcommand("alternates", "Write the ID3 tree and alternates that override top-level tests");
  alt->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  alt->add_option("--data", o.data, "Training CSV")->required()->check(CLI::ExistingFile);
  alt->add_option("--out-dir", o.out_dir, "Directory for tree_NN.tree, signatures.csv, manifest.txt")
      ->required();
  alt->add_option("--gain-ratio", o.alternates.gain_ratio, "Overrides need gain >= ratio * best");
  alt->add_option("--cap", o.alternates.per_node_cap, "Choices considered per decision point");
  alt->add_option("--depth", o.alternates.override_depth, "Deepest level overridden, root is 1");
  alt->add_option("--max-trees", o.alternates.max_trees, "Trees written, the ID3 tree included");
  alt->add_option("--prune", o.alt_prune, "none or pessimistic")
      ->check(CLI::IsMember({"none", "pessimistic"}));
  alt->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* combine = app.add_subcommand("combine", "Evaluate the ensemble described by a manifest");
  combine->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  combine->add_option("--manifest", o.manifest, "Manifest file")->required()->check(CLI::ExistingFile);
  combine->add_option("--test", o.test, "Test CSV")->required()->check(CLI::ExistingFile);
  combine->add_option("--out", o.out, "Report CSV (default stdout)");
  combine->add_option("--predictions", o.predictions, "Per-instance prediction CSV");

  auto* eval = app.add_subcommand("eval", "Percent error and Half-Brier of tree files");
  eval->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  eval->add_option("--tree", o.trees, "Tree file, repeatable")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", o.test, "Test CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "Report CSV (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "Mean error of k-tree ensembles for each k");
  sweep->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--trees", o.tree_dir, "Directory of .tree files")->required();
  sweep->add_option("--test", o.test, "Test CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--counts", o.counts, "Ensemble sizes, e.g. 1,3,5")->required()->delimiter(',');
  sweep->add_flag("--prefer-different", o.prefer_different, "Only the most different subsets");
  sweep->add_option("--method", o.method, "voting or probability");
  sweep->add_flag("--allow-ties", o.allow_ties, "Accept even sizes of unpruned voting ensembles");
  sweep->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", o.out, "Sweep CSV (default stdout)");
  sweep->add_option("--curve", o.curve, "k,score curve CSV");
  sweep->add_option("--metric", o.metric, "Curve metric: error or brier");

  bool bayes_seed = false;
  auto* bayes = app.add_subcommand("bayes", "Grid posterior over two-class classification rules");
  bayes->add_option("--counts", o.counts_file, "Count table, one `n r` per line")
      ->required()
      ->check(CLI::ExistingFile);
  bayes->add_option("--grid", o.grid, "Grid points per component");
  bayes->add_option("--prior", o.prior, "uniform or beta:a,b");
  bayes->add_option("--predict", o.predict, "all, map or transduction");
  bayes->add_option("--out", o.out, "Prediction CSV (default stdout)");
  bayes->add_option("--posterior", o.posterior, "Posterior weights CSV");
  bayes->add_option("--diagnostics", o.diagnostics, "Flatness diagnostics CSV");
  bayes->add_option("--width", o.width, "Window width for the diagnostics mass");
  bayes->add_option("--compare", o.compare, "Simulated predictor comparison CSV");
  bayes->add_option("--truth", o.truth, "True rule for --compare, e.g. 0.2,0.9");
  bayes->add_option("--trials", o.trials, "Simulation trials for --compare");
  bayes->add_option("--ks", o.ks, "Rule counts averaged for --compare")->delimiter(',');
  bayes->add_option("--seed", o.seed, "Seed for --compare")->each([&](const std::string&) {
    bayes_seed = true;
  });

  auto* synth = app.add_subcommand("synth", "Write a noisy DNF benchmark dataset");
  synth->add_option("--seed", o.seed, "Generator seed")->required();
  synth->add_option("--train", o.train, "Training instances");
  synth->add_option("--test", o.test_count, "Test instances");
  synth->add_option("--noise", o.noise, "Label noise rate");
  synth->add_option("--out-dir", o.out_dir, "Directory for dnf.names, train.csv, test.csv")
      ->required();

  auto* split = app.add_subcommand("split", "Shuffle a dataset into train and test CSVs");
  split->add_option("--schema", o.schema, "Names file")->required()->check(CLI::ExistingFile);
  split->add_option("--data", o.data, "CSV to split")->required()->check(CLI::ExistingFile);
  split->add_option("--train", o.train, "Training instances")->required();
  split->add_option("--seed", o.seed, "Shuffle seed")->required();
  split->add_option("--out-dir", o.out_dir, "Directory for train.csv and test.csv")->required();

  auto* serve = app.add_subcommand("serve", "Run the interactive session service over HTTP");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port, 0 picks a free one");
  serve->add_option("--dataset", o.datasets, "name=schema_path,data_path, repeatable");
  serve->add_option("--static", o.static_dir, "Directory served at /")->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) return run_build(o);
    if (*prune) return run_prune(o);
    if (*alt) return run_alternates(o);
    if (*combine) return run_combine(o);
    if (*eval) return run_eval(o);
    if (*sweep) return run_sweep(o);
    if (*bayes) return run_bayes(o, bayes_seed);
    if (*synth) return run_synth(o);
    if (*split) return run_split(o);
    if (*serve) return run_serve(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const mdt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
