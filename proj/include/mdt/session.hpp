#pragma once

// Interactive tree-building sessions, independent of any transport.
//
// A session owns a training set, one tree under construction (grown
// breadth-first, so the top levels are offered first) and a shelf of
// finished trees. Every request is JSON in, JSON out; `dispatch` maps
// method + path onto the handlers and errors onto HTTP status codes, and
// session_http.hpp only adapts it to a socket.
//
// Mutating requests are appended to a per-session log. Replaying the log on
// a fresh manager reproduces the session's tree and shelf.

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "mdt/dataset.hpp"
#include "mdt/ensemble.hpp"
#include "mdt/error.hpp"
#include "mdt/evaluation.hpp"
#include "mdt/induction.hpp"
#include "mdt/pruning.hpp"
#include "mdt/text.hpp"
#include "mdt/tree_io.hpp"

namespace mdt::session {

struct RegisteredDataset {
  std::string schema_text;
  std::string data_text;
};

struct Response {
  int status = 200;
  Json body;
};

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NoSuchSession:
      return 404;
    case ErrorKind::TreeComplete:
    case ErrorKind::InvalidChoice:
    case ErrorKind::EmptyShelf:
      return 409;
    default:
      return 400;
  }
}

inline Json error_json(const Error& e) {
  Json err;
  err["kind"] = std::string(to_string(e.kind()));
  err["message"] = e.message();
  if (e.row()) err["row"] = e.row();
  if (e.column()) err["column"] = e.column();
  Json out;
  out["error"] = std::move(err);
  return out;
}

inline Json signature_json(const TreeSignature& sig, const Schema& schema) {
  Json j;
  j["root"] = sig.root_test ? test_to_json(*sig.root_test, schema) : Json();
  j["level2"] = Json::array();
  for (const auto& t : sig.level2_tests) j["level2"].push_back(test_to_json(t, schema));
  return j;
}

inline Json report_json(const EvalReport& r) {
  Json j;
  j["model"] = r.model;
  j["percent_error"] = r.percent_error;
  j["half_brier"] = r.half_brier;
  j["n"] = r.n;
  return j;
}

namespace detail {

inline Error as_data_error(const Error& cause) {
  return Error(ErrorKind::DataError,
               std::string(to_string(cause.kind())) + ": " + cause.message(), cause.row(),
               cause.column());
}

inline const Json& require(const Json& body, const char* key) {
  if (!body.is_object() || !body.contains(key))
    throw Error(ErrorKind::FormatError, std::string("request needs field '") + key + "'");
  return body.at(key);
}

inline std::string require_string(const Json& body, const char* key) {
  const Json& v = require(body, key);
  if (!v.is_string())
    throw Error(ErrorKind::FormatError, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

class SessionManager {
 public:
  /// Datasets that requests may name instead of uploading.
  void register_dataset(std::string name, RegisteredDataset data) {
    std::unique_lock lock(registry_mutex_);
    registry_[std::move(name)] = std::move(data);
  }

  /// {"schema", "data"} or {"dataset": name}; optional "config": {"max_depth",
  /// "gain_ratio"}. Returns the id and the first frontier.
  Json create(const Json& body) {
    auto s = std::make_shared<Session>();
    std::tie(s->schema, s->train) = load_training(body);
    if (body.contains("config")) {
      const Json& c = body.at("config");
      if (c.contains("max_depth")) s->options.max_depth = c.at("max_depth").get<std::size_t>();
      if (c.contains("gain_ratio")) s->gain_ratio = c.at("gain_ratio").get<double>();
    }
    s->start_tree();
    s->log.push_back(log_entry("create", body));
    std::string id;
    {
      std::unique_lock lock(sessions_mutex_);
      id = "s" + std::to_string(++next_id_);
      sessions_[id] = s;
    }
    std::lock_guard lock(s->mutex);
    Json out;
    out["id"] = id;
    out["frontier"] = s->frontier_or_done();
    return out;
  }

  Json frontier(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->grower->complete()) throw Error(ErrorKind::TreeComplete, "the tree has no open nodes");
    return s->frontier_json();
  }

  /// {"index": i} or {"test": {...}}. On error the session is unchanged.
  Json choose(const std::string& id, const Json& body) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    s->choose(body);
    s->log.push_back(log_entry("choose", body));
    return s->frontier_or_done();
  }

  Json autocomplete(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    s->autocomplete();
    s->log.push_back(log_entry("autocomplete", Json::object()));
    Json out;
    out["tree"] = tree_to_json(*s->finished);
    out["shelf_index"] = *s->shelf_index;
    out["shelf_size"] = s->shelf.size();
    return out;
  }

  /// Prunes the finished current tree. {"method": "pessimistic", "z",
  /// "correction"} or {"method": "reduced-error", "holdout": data ref}.
  Json prune(const std::string& id, const Json& body) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!s->finished) throw Error(ErrorKind::InvalidChoice, "the tree still has open nodes");
    const std::string method = body.contains("method") ? detail::require_string(body, "method")
                                                       : std::string("pessimistic");
    Tree pruned;
    if (method == "pessimistic") {
      Pessimistic p;
      if (body.contains("z")) p.z = body.at("z").get<double>();
      if (body.contains("correction")) p.correction = body.at("correction").get<double>();
      pruned = mdt::prune(*s->finished, p);
    } else if (method == "reduced-error") {
      const Dataset holdout = load_against(detail::require(body, "holdout"), s->schema);
      pruned = mdt::prune(*s->finished, ReducedError{holdout});
    } else {
      throw Error(ErrorKind::FormatError, "unknown pruning method '" + method + "'");
    }
    s->set_finished(std::move(pruned));
    s->log.push_back(log_entry("prune", body));
    Json out;
    out["tree"] = tree_to_json(*s->finished);
    return out;
  }

  /// Starts a new tree on the same training set; the shelf is kept.
  Json reset(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    s->start_tree();
    s->log.push_back(log_entry("reset", Json::object()));
    return s->frontier_or_done();
  }

  /// The tree so far; open nodes appear as leaves and are listed in "pending".
  Json tree(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    Json out;
    out["complete"] = s->finished.has_value();
    out["pending"] = Json::array();
    if (s->finished) {
      out["tree"] = tree_to_json(*s->finished);
    } else {
      for (const auto& p : s->grower->frontier_paths()) out["pending"].push_back(format_path(p));
      out["tree"] = tree_to_json(
          Tree{s->schema, s->grower->snapshot(), s->grower->choice_log(), std::nullopt});
    }
    return out;
  }

  Json shelf(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    Json out;
    out["trees"] = Json::array();
    for (std::size_t i = 0; i < s->shelf.size(); ++i) {
      const Tree& t = *s->shelf[i];
      Json entry;
      entry["index"] = i;
      entry["size"] = t.size();
      entry["pruned"] = t.pruned();
      entry["signature"] = signature_json(signature(t), *s->schema);
      entry["tree"] = tree_to_json(t);
      out["trees"].push_back(std::move(entry));
    }
    return out;
  }

  /// {"test": data ref, "method": "voting" | "class-probability"}.
  Json shelf_eval(const std::string& id, const Json& body) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (s->shelf.empty()) throw Error(ErrorKind::EmptyShelf, "no finished trees on the shelf");
    const Dataset test = load_against(detail::require(body, "test"), s->schema);
    if (test.empty()) throw Error(ErrorKind::DataError, "EmptyTestSet: test set is empty");
    const CombineMethod method = body.contains("method")
                                     ? parse_combine_method(detail::require_string(body, "method"))
                                     : CombineMethod::Voting;
    Json out;
    out["method"] = std::string(to_string(method));
    out["trees"] = Json::array();
    std::vector<TreeSignature> sigs;
    for (std::size_t i = 0; i < s->shelf.size(); ++i) {
      out["trees"].push_back(report_json(evaluate(s->shelf[i], test, "tree " + std::to_string(i))));
      sigs.push_back(signature(*s->shelf[i]));
    }
    out["combined"] = report_json(evaluate(Ensemble(s->shelf, method), test, "ensemble"));
    out["warnings"] = similarity_warnings(sigs, *s->schema);
    return out;
  }

  Json log(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->log;
  }

  /// Runs a recorded log against this manager; returns the new session id.
  std::string replay(const Json& log) {
    if (!log.is_array() || log.empty() || log.front().value("op", "") != "create")
      throw Error(ErrorKind::FormatError, "a request log starts with a create entry");
    const std::string id = create(log.front().at("body")).at("id").get<std::string>();
    for (std::size_t i = 1; i < log.size(); ++i) {
      const std::string op = log[i].at("op").get<std::string>();
      const Json& body = log[i].at("body");
      if (op == "choose")
        choose(id, body);
      else if (op == "autocomplete")
        autocomplete(id);
      else if (op == "prune")
        prune(id, body);
      else if (op == "reset")
        reset(id);
      else
        throw Error(ErrorKind::FormatError, "unknown logged operation '" + op + "'");
    }
    return id;
  }

  /// Routes one request. Paths are those of the HTTP API.
  Response dispatch(std::string_view method, std::string_view path, std::string_view body_text) {
    try {
      const Json body = parse_body(body_text);
      auto parts = text::split(path, '/');
      if (parts.empty() || !parts.front().empty())
        throw Error(ErrorKind::NoSuchSession, "unknown route");
      parts.erase(parts.begin());
      if (!parts.empty() && parts.back().empty()) parts.pop_back();
      if (parts.empty() || parts[0] != "sessions")
        throw Error(ErrorKind::NoSuchSession, "unknown route");

      if (parts.size() == 1 && method == "POST") return {201, create(body)};
      if (parts.size() == 2 && parts[1] == "replay" && method == "POST") {
        const std::string id = replay(detail::require(body, "log"));
        Json out;
        out["id"] = id;
        return {201, std::move(out)};
      }
      if (parts.size() < 3) throw Error(ErrorKind::NoSuchSession, "unknown route");
      const std::string id(parts[1]);
      const std::string action = parts.size() == 4 ? std::string(parts[2]) + "/" + std::string(parts[3])
                                                   : std::string(parts[2]);
      if (parts.size() > 4) throw Error(ErrorKind::NoSuchSession, "unknown route");
      if (method == "GET") {
        if (action == "frontier") return {200, frontier(id)};
        if (action == "tree") return {200, tree(id)};
        if (action == "shelf") return {200, shelf(id)};
        if (action == "log") return {200, log(id)};
      } else if (method == "POST") {
        if (action == "choose") return {200, choose(id, body)};
        if (action == "autocomplete") return {200, autocomplete(id)};
        if (action == "prune") return {200, prune(id, body)};
        if (action == "reset") return {200, reset(id)};
        if (action == "shelf/eval") return {200, shelf_eval(id, body)};
      }
      throw Error(ErrorKind::NoSuchSession, "unknown route");
    } catch (const Error& e) {
      return {http_status(e.kind()), error_json(e)};
    } catch (const Json::exception& e) {
      return {400, error_json(Error(ErrorKind::FormatError, e.what()))};
    }
  }

 private:
  struct Session {
    std::mutex mutex;
    std::shared_ptr<const Schema> schema;
    std::shared_ptr<const Dataset> train;
    GrowOptions options;
    double gain_ratio = AlternatesConfig{}.gain_ratio;
    std::unique_ptr<TreeGrower> grower;
    std::optional<Tree> finished;
    std::optional<std::size_t> shelf_index;  // set once `finished` is shelved
    std::vector<std::shared_ptr<const Tree>> shelf;
    Json log = Json::array();

    void start_tree() {
      grower = std::make_unique<TreeGrower>(*train, options);
      finished.reset();
      shelf_index.reset();
      if (grower->complete()) finished = grower->finish();
    }

    void set_finished(Tree t) {
      finished = std::move(t);
      if (shelf_index) shelf[*shelf_index] = std::make_shared<const Tree>(*finished);
    }

    void choose(const Json& body) {
      if (grower->complete()) throw Error(ErrorKind::TreeComplete, "the tree has no open nodes");
      if (body.contains("index")) {
        const Json& idx = body.at("index");
        if (!idx.is_number_integer() || idx.get<long long>() < 0)
          throw Error(ErrorKind::InvalidChoice, "index must be a non-negative integer");
        grower->expand(idx.get<std::size_t>());
      } else if (body.contains("test")) {
        SplitTest test;
        try {
          test = mdt::detail::test_from_json(body.at("test"), *schema);
        } catch (const Error& e) {
          throw Error(ErrorKind::InvalidChoice, e.message());
        }
        grower->expand(test);
      } else {
        throw Error(ErrorKind::InvalidChoice, "choose needs 'index' or 'test'");
      }
      if (grower->complete()) finished = grower->finish();
    }

    void autocomplete() {
      while (!grower->complete()) grower->expand(0);
      if (!finished) finished = grower->finish();
      if (!shelf_index) {
        shelf_index = shelf.size();
        shelf.push_back(std::make_shared<const Tree>(*finished));
      }
    }

    Json frontier_json() const {
      const auto ranked = grower->head_ranking();
      Json out;
      out["complete"] = false;
      out["path"] = format_path(grower->head_path());
      out["distribution"] = distribution_json(grower->head_distribution());
      out["ranked"] = ranking_to_json(ranked, *schema);
      out["ratios"] = Json::array();
      const double best = ranked.front().gain;
      for (const auto& r : ranked) out["ratios"].push_back(best > 0 ? r.gain / best : 0.0);
      out["gain_ratio"] = gain_ratio;
      out["default_index"] = 0;
      out["frontier"] = Json::array();
      for (const auto& p : grower->frontier_paths()) out["frontier"].push_back(format_path(p));
      return out;
    }

    Json frontier_or_done() const {
      if (!grower->complete()) return frontier_json();
      Json out;
      out["complete"] = true;
      return out;
    }
  };

  static Json parse_body(std::string_view text) {
    if (text::trim(text).empty()) return Json::object();
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorKind::FormatError, std::string("request body is not JSON: ") + e.what());
    }
  }

  static Json log_entry(const char* op, const Json& body) {
    Json e;
    e["op"] = op;
    e["body"] = body;
    return e;
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::NoSuchSession, "no session '" + id + "'");
    return it->second;
  }

  RegisteredDataset lookup(const std::string& name) const {
    std::shared_lock lock(registry_mutex_);
    const auto it = registry_.find(name);
    if (it == registry_.end()) throw Error(ErrorKind::DataError, "no dataset named '" + name + "'");
    return it->second;
  }

  std::pair<std::shared_ptr<const Schema>, std::shared_ptr<const Dataset>> load_training(
      const Json& body) const {
    RegisteredDataset src = body.contains("dataset")
                                ? lookup(detail::require_string(body, "dataset"))
                                : RegisteredDataset{detail::require_string(body, "schema"),
                                                    detail::require_string(body, "data")};
    try {
      auto schema = std::make_shared<const Schema>(parse_schema(src.schema_text));
      auto data = std::make_shared<const Dataset>(parse_dataset(src.data_text, schema));
      if (data->empty()) throw Error(ErrorKind::EmptyTrainingSet, "training set is empty");
      return {std::move(schema), std::move(data)};
    } catch (const Error& e) {
      throw detail::as_data_error(e);
    }
  }

  // {"data": csv} against the session schema, or {"dataset": name} whose
  // schema must equal it.
  Dataset load_against(const Json& ref, const std::shared_ptr<const Schema>& schema) const {
    try {
      if (ref.contains("dataset")) {
        const RegisteredDataset src = lookup(detail::require_string(ref, "dataset"));
        if (parse_schema(src.schema_text) != *schema)
          throw Error(ErrorKind::SchemaMismatch, "dataset schema differs from the session's");
        return parse_dataset(src.data_text, schema);
      }
      return parse_dataset(detail::require_string(ref, "data"), schema);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DataError) throw;
      throw detail::as_data_error(e);
    }
  }

  static Json similarity_warnings(const std::vector<TreeSignature>& sigs, const Schema& schema) {
    Json out = Json::array();
    for (std::size_t a = 0; a < sigs.size(); ++a)
      for (std::size_t b = a + 1; b < sigs.size(); ++b) {
        Json w;
        w["trees"] = {a, b};
        if (sigs[a].root_test && sigs[a].root_test == sigs[b].root_test) {
          w["kind"] = "common-root";
          w["test"] = test_to_json(*sigs[a].root_test, schema);
          out.push_back(std::move(w));
          continue;
        }
        for (const auto& t : sigs[a].level2_tests)
          if (sigs[b].level2_tests.contains(t)) {
            w["kind"] = "common-level2";
            w["test"] = test_to_json(t, schema);
            out.push_back(std::move(w));
            break;
          }
      }
    return out;
  }

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 0;
  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, RegisteredDataset> registry_;
};

}  // namespace mdt::session
