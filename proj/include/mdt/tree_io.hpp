#pragma once

// Tree files.
//
//   {
//     "format": "mdt-tree",
//     "version": 1,
//     "class_labels": ["pass", "fail"],
//     "attributes": ["hs_result", "experience"],
//     "size": 5,
//     "pruning": null | {"method": ..., "parameters": {...}, "collapsed": ["/0"]},
//     "root": <node>,
//     "choice_log": [{"path": "/", "chosen": <test>, "ranked": [{"test", "gain", "effective"}]}]
//   }
//
//   node: {"kind": "leaf"|"split", "label": "pass", "counts": [3, 1],
//          "test": <test>, "children": [<node>...]}      (test/children on splits)
//   test: {"attribute": "experience", "type": "discrete"}
//       | {"attribute": "hs_result", "type": "threshold", "threshold": 72.5}
//
// Keys are written in this fixed order and doubles in shortest round-trip
// form, so serializing the same tree always gives the same bytes.

#include <cmath>
#include <memory>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mdt/error.hpp"
#include "mdt/induction.hpp"

namespace mdt {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kTreeFormat = "mdt-tree";

inline Json test_to_json(const SplitTest& test, const Schema& schema) {
  Json j;
  j["attribute"] = schema.attributes[test.attribute].name;
  if (test.is_threshold()) {
    j["type"] = "threshold";
    j["threshold"] = *test.threshold;
  } else {
    j["type"] = "discrete";
  }
  return j;
}

inline Json ranking_to_json(std::span<const RankedTest> ranked, const Schema& schema) {
  Json arr = Json::array();
  for (const auto& r : ranked) {
    Json e;
    e["test"] = test_to_json(r.test, schema);
    e["gain"] = r.gain;
    e["effective"] = r.effective;
    arr.push_back(std::move(e));
  }
  return arr;
}

inline Json distribution_json(const ClassDistribution& dist) {
  Json arr = Json::array();
  for (const auto c : dist.counts) arr.push_back(c);
  return arr;
}

inline Json node_to_json(const TreeNode& node, const Schema& schema) {
  Json j;
  j["kind"] = node.is_leaf() ? "leaf" : "split";
  j["label"] = schema.class_labels[node.label];
  j["counts"] = distribution_json(node.dist);
  if (!node.is_leaf()) {
    j["test"] = test_to_json(*node.test, schema);
    Json children = Json::array();
    for (const auto& c : node.children) children.push_back(node_to_json(c, schema));
    j["children"] = std::move(children);
  }
  return j;
}

inline Json pruning_to_json(const PruningRecord& rec) {
  Json j;
  j["method"] = rec.method;
  Json params = Json::object();
  for (const auto& [name, value] : rec.parameters) params[name] = value;
  j["parameters"] = std::move(params);
  Json collapsed = Json::array();
  for (const auto& p : rec.collapsed) collapsed.push_back(format_path(p));
  j["collapsed"] = std::move(collapsed);
  return j;
}

inline Json tree_to_json(const Tree& tree) {
  const Schema& schema = *tree.schema;
  Json j;
  j["format"] = kTreeFormat;
  j["version"] = 1;
  j["class_labels"] = schema.class_labels;
  Json attrs = Json::array();
  for (const auto& a : schema.attributes) attrs.push_back(a.name);
  j["attributes"] = std::move(attrs);
  j["size"] = tree.size();
  j["pruning"] = tree.pruning ? pruning_to_json(*tree.pruning) : Json(nullptr);
  j["root"] = node_to_json(tree.root, schema);
  Json log = Json::array();
  for (const auto& rec : tree.choice_log) {
    Json e;
    e["path"] = format_path(rec.path);
    e["chosen"] = test_to_json(rec.chosen, schema);
    e["ranked"] = ranking_to_json(rec.ranked, schema);
    log.push_back(std::move(e));
  }
  j["choice_log"] = std::move(log);
  return j;
}

inline std::string serialize_tree(const Tree& tree) { return tree_to_json(tree).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Reading

namespace detail {

[[noreturn]] inline void bad_tree(const std::string& what) {
  throw Error(ErrorKind::FormatError, "tree file: " + what);
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad_tree(std::string("missing '") + key + "'");
  return j.at(key);
}

inline SplitTest test_from_json(const Json& j, const Schema& schema) {
  const auto name = field(j, "attribute").get<std::string>();
  const auto attr = schema.attribute_index(name);
  if (!attr) throw Error(ErrorKind::SchemaMismatch, "unknown attribute '" + name + "'");
  const auto type = field(j, "type").get<std::string>();
  SplitTest test;
  test.attribute = *attr;
  if (type == "threshold") {
    test.threshold = field(j, "threshold").get<double>();
  } else if (type != "discrete") {
    bad_tree("unknown test type '" + type + "'");
  }
  check_applicable(test, schema);
  return test;
}

inline TreeNode node_from_json(const Json& j, const Schema& schema) {
  TreeNode node;
  const auto label = schema.label_index(field(j, "label").get<std::string>());
  if (!label) throw Error(ErrorKind::SchemaMismatch, "unknown class label in tree");
  node.label = *label;
  node.dist.counts = field(j, "counts").get<std::vector<std::size_t>>();
  if (node.dist.counts.size() != schema.class_count()) bad_tree("counts length mismatch");
  const auto kind = field(j, "kind").get<std::string>();
  if (kind == "split") {
    node.test = test_from_json(field(j, "test"), schema);
    for (const auto& c : field(j, "children")) node.children.push_back(node_from_json(c, schema));
    if (node.children.size() != node.test->branch_count(schema))
      bad_tree("child count does not match the test's branches");
  } else if (kind != "leaf") {
    bad_tree("unknown node kind '" + kind + "'");
  }
  return node;
}

}  // namespace detail

inline Tree tree_from_json(const Json& j, std::shared_ptr<const Schema> schema) {
  try {
    if (detail::field(j, "format").get<std::string>() != kTreeFormat)
      detail::bad_tree("not an mdt tree");
    if (detail::field(j, "class_labels").get<std::vector<std::string>>() !=
        schema->class_labels)
      throw Error(ErrorKind::SchemaMismatch, "tree class labels differ from schema");
    std::vector<std::string> attrs;
    for (const auto& a : schema->attributes) attrs.push_back(a.name);
    if (detail::field(j, "attributes").get<std::vector<std::string>>() != attrs)
      throw Error(ErrorKind::SchemaMismatch, "tree attributes differ from schema");

    Tree tree;
    tree.schema = schema;
    tree.root = detail::node_from_json(detail::field(j, "root"), *schema);
    const Json& pruning = detail::field(j, "pruning");
    if (!pruning.is_null()) {
      PruningRecord rec;
      rec.method = detail::field(pruning, "method").get<std::string>();
      for (const auto& [k, v] : detail::field(pruning, "parameters").items())
        rec.parameters.emplace_back(k, v.get<double>());
      for (const auto& p : detail::field(pruning, "collapsed"))
        rec.collapsed.push_back(parse_path(p.get<std::string>()));
      tree.pruning = std::move(rec);
    }
    for (const auto& e : detail::field(j, "choice_log")) {
      ChoiceRecord rec;
      rec.path = parse_path(detail::field(e, "path").get<std::string>());
      rec.chosen = detail::test_from_json(detail::field(e, "chosen"), *schema);
      for (const auto& r : detail::field(e, "ranked"))
        rec.ranked.push_back({detail::test_from_json(detail::field(r, "test"), *schema),
                              detail::field(r, "gain").get<double>(),
                              detail::field(r, "effective").get<bool>()});
      tree.choice_log.push_back(std::move(rec));
    }
    if (detail::field(j, "size").get<std::size_t>() != tree.size())
      detail::bad_tree("recorded size does not match node count");
    return tree;
  } catch (const nlohmann::json::exception& e) {
    detail::bad_tree(e.what());
  }
}

inline Tree parse_tree(std::string_view text, std::shared_ptr<const Schema> schema) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    detail::bad_tree(e.what());
  }
  return tree_from_json(j, std::move(schema));
}

}  // namespace mdt
