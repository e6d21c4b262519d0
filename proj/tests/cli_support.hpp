#pragma once

// Runs the mdt executable as a child process and reads back its outputs.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#ifndef MDT_CLI_PATH
#error "MDT_CLI_PATH must name the mdt executable"
#endif

namespace mdt::testing {

struct CliResult {
  int exit_code = -1;
  std::string out;  // standard output; standard error is discarded
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (const char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

inline CliResult run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(MDT_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>/dev/null";
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mdt-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Every regular file below `dir`, keyed by relative path.
inline std::vector<std::pair<std::string, std::string>> snapshot_dir(
    const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out.emplace_back(std::filesystem::relative(e.path(), dir).string(), read_bytes(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

/// `mdt serve` as a child process on a free port; killed on destruction.
class ServeProcess {
 public:
  explicit ServeProcess(const std::vector<std::string>& extra_args) {
    int fds[2];
    if (::pipe(fds) != 0) return;
    pid_ = ::fork();
    if (pid_ == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      std::vector<std::string> args = {MDT_CLI_PATH, "serve", "--port", "0"};
      args.insert(args.end(), extra_args.begin(), extra_args.end());
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      ::execv(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(fds[1]);
    // First line: "listening on <host>:<port>".
    std::string line;
    char c = 0;
    while (::read(fds[0], &c, 1) == 1 && c != '\n') line += c;
    ::close(fds[0]);
    const auto colon = line.rfind(':');
    if (line.rfind("listening on ", 0) == 0 && colon != std::string::npos)
      port_ = std::stoi(line.substr(colon + 1));
  }
  ~ServeProcess() {
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
    }
  }
  ServeProcess(const ServeProcess&) = delete;
  ServeProcess& operator=(const ServeProcess&) = delete;

  /// Bound port, or -1 if the server did not start.
  int port() const { return port_; }

 private:
  pid_t pid_ = -1;
  int port_ = -1;
};

/// Status and body of every response in a fixed session script against a
/// server that has `dataset` registered. `test_csv` is posted for shelf/eval.
inline std::string serve_transcript(int port, const std::string& dataset,
                                    const std::string& test_csv) {
  using Json = nlohmann::ordered_json;
  httplib::Client client("127.0.0.1", port);
  std::string out;
  auto record = [&](const httplib::Result& r) {
    out += r ? std::to_string(r->status) + " " + r->body + "\n" : std::string("no response\n");
    return r ? Json::parse(r->body, nullptr, false) : Json();
  };
  auto post = [&](const std::string& path, const Json& body) {
    return record(client.Post(path, body.is_null() ? "" : body.dump(), "application/json"));
  };
  const Json created = post("/sessions", {{"dataset", dataset}});
  if (!created.is_object() || !created.contains("id")) return out;
  const std::string base = "/sessions/" + created["id"].get<std::string>();
  record(client.Get(base + "/frontier"));
  post(base + "/choose", {{"index", 1}});
  post(base + "/autocomplete", Json());
  record(client.Get(base + "/tree"));
  post(base + "/prune", {{"method", "pessimistic"}});
  post(base + "/reset", Json());
  post(base + "/autocomplete", Json());
  record(client.Get(base + "/shelf"));
  post(base + "/shelf/eval", {{"test", {{"data", test_csv}}}});
  record(client.Get(base + "/log"));
  return out;
}

struct PipelineStep {
  std::string name;
  std::vector<std::string> args;
};

/// Every file-producing subcommand, writing below `out`. `counts` is a Bayes
/// count table that must already exist.
inline std::vector<PipelineStep> pipeline(const std::filesystem::path& out,
                                          const std::string& counts) {
  auto p = [&](const std::string& rel) { return (out / rel).string(); };
  const std::string schema = p("data/dnf.names");
  return {
      {"synth", {"synth", "--seed", "5", "--out-dir", p("data")}},
      {"split",
       {"split", "--schema", schema, "--data", p("data/train.csv"), "--train", "200", "--seed",
        "9", "--out-dir", p("split")}},
      {"build",
       {"build", "--schema", schema, "--data", p("data/train.csv"), "--out", p("build/id3.tree"),
        "--log", p("build/choices.csv")}},
      {"prune",
       {"prune", "--schema", schema, "--tree", p("build/id3.tree"), "--out",
        p("build/pessimistic.tree")}},
      {"prune reduced-error",
       {"prune", "--schema", schema, "--tree", p("build/id3.tree"), "--method", "reduced-error",
        "--holdout", p("split/test.csv"), "--out", p("build/reduced.tree")}},
      {"alternates",
       {"alternates", "--schema", schema, "--data", p("data/train.csv"), "--gain-ratio", "0.4",
        "--max-trees", "6", "--prune", "pessimistic", "--jobs", "3", "--out-dir", p("alt")}},
      {"combine",
       {"combine", "--schema", schema, "--manifest", p("alt/manifest.txt"), "--test",
        p("data/test.csv"), "--out", p("combine/report.csv"), "--predictions",
        p("combine/predictions.csv")}},
      {"eval",
       {"eval", "--schema", schema, "--tree", p("build/id3.tree"), "--tree",
        p("build/pessimistic.tree"), "--test", p("data/test.csv"), "--out", p("eval.csv")}},
      {"sweep",
       {"sweep", "--schema", schema, "--trees", p("alt"), "--test", p("data/test.csv"),
        "--counts", "1,3,5", "--prefer-different", "--jobs", "2", "--out", p("sweep.csv"),
        "--curve", p("curve.csv")}},
      {"bayes",
       {"bayes", "--counts", counts, "--grid", "1001", "--out", p("bayes/predict.csv"),
        "--posterior", p("bayes/posterior.csv"), "--diagnostics", p("bayes/diagnostics.csv"),
        "--compare", p("bayes/compare.csv"), "--truth", "0.9,0.5,0.2", "--seed", "3", "--trials",
        "40"}},
  };
}

}  // namespace mdt::testing
