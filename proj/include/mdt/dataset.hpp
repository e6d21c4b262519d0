#pragma once

// Attribute schemas, classified instances and fixed-count train/test splits.
//
// Schema file:
//   | comment to end of line
//   class: pass, fail.
//   hs_result: continuous.
//   experience: yes, no.
//
// Data file: CSV without header, one instance per record, class label last,
// "?" marks a missing attribute value.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "mdt/csv.hpp"
#include "mdt/error.hpp"
#include "mdt/text.hpp"

namespace mdt {

inline constexpr std::string_view kMissingMarker = "?";

struct AttributeDecl {
  std::string name;
  bool continuous = false;
  std::vector<std::string> values;  // empty for continuous attributes

  std::optional<std::size_t> value_index(std::string_view value) const {
    const auto it = std::find(values.begin(), values.end(), value);
    if (it == values.end()) return std::nullopt;
    return static_cast<std::size_t>(it - values.begin());
  }

  friend bool operator==(const AttributeDecl&, const AttributeDecl&) = default;
};

struct Schema {
  std::vector<AttributeDecl> attributes;
  std::vector<std::string> class_labels;  // the first label is the "positive" one

  std::size_t attribute_count() const { return attributes.size(); }
  std::size_t class_count() const { return class_labels.size(); }

  std::optional<std::size_t> attribute_index(std::string_view name) const {
    for (std::size_t i = 0; i < attributes.size(); ++i)
      if (attributes[i].name == name) return i;
    return std::nullopt;
  }
  std::optional<std::size_t> label_index(std::string_view label) const {
    const auto it = std::find(class_labels.begin(), class_labels.end(), label);
    if (it == class_labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - class_labels.begin());
  }

  friend bool operator==(const Schema&, const Schema&) = default;
};

/// Index into an attribute's declared value list.
struct Category {
  std::size_t index = 0;
  friend auto operator<=>(const Category&, const Category&) = default;
};

struct Missing {
  friend auto operator<=>(const Missing&, const Missing&) = default;
};

/// One attribute value of an instance: missing, a discrete category, or a
/// finite number.
using AttributeValue = std::variant<Missing, Category, double>;

inline bool is_missing(const AttributeValue& v) {
  return std::holds_alternative<Missing>(v);
}

struct Instance {
  std::vector<AttributeValue> values;
  std::size_t label = 0;  // index into Schema::class_labels

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Dataset {
  std::shared_ptr<const Schema> schema;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  const Instance& operator[](std::size_t i) const { return instances[i]; }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return *a.schema == *b.schema && a.instances == b.instances;
  }
};

/// Throws SchemaMismatch unless `instance` has the shape `schema` requires.
inline void check_conforms(const Schema& schema, const Instance& instance) {
  if (instance.values.size() != schema.attribute_count())
    throw Error(ErrorKind::SchemaMismatch, "instance has " +
                                               std::to_string(instance.values.size()) +
                                               " values, schema declares " +
                                               std::to_string(schema.attribute_count()));
  if (instance.label >= schema.class_count())
    throw Error(ErrorKind::SchemaMismatch, "label index out of range");
  for (std::size_t a = 0; a < instance.values.size(); ++a) {
    const auto& decl = schema.attributes[a];
    const auto& v = instance.values[a];
    if (is_missing(v)) continue;
    if (decl.continuous != std::holds_alternative<double>(v))
      throw Error(ErrorKind::SchemaMismatch, "value kind differs for '" + decl.name + "'");
    if (!decl.continuous && std::get<Category>(v).index >= decl.values.size())
      throw Error(ErrorKind::SchemaMismatch, "category out of range for '" + decl.name + "'");
  }
}

// ---------------------------------------------------------------------------
// Schema file

namespace detail {

inline std::string_view strip_comment(std::string_view line) {
  const auto bar = line.find('|');
  if (bar != std::string_view::npos) line = line.substr(0, bar);
  return text::trim(line);
}

inline std::vector<std::string> parse_value_list(std::string_view body, std::size_t line) {
  std::vector<std::string> out;
  for (auto part : text::split(body, ',')) {
    part = text::trim(part);
    if (part.empty()) throw Error(ErrorKind::SyntaxError, "empty value name", line);
    if (part == kMissingMarker)
      throw Error(ErrorKind::SyntaxError, "'?' is reserved for missing values", line);
    if (std::find(out.begin(), out.end(), part) != out.end())
      throw Error(ErrorKind::SyntaxError, "value '" + std::string(part) + "' repeated", line);
    out.emplace_back(part);
  }
  return out;
}

}  // namespace detail

inline Schema parse_schema(std::string_view text) {
  Schema schema;
  bool seen_class = false;
  std::unordered_set<std::string> names;
  const auto lines = text::split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    auto line = detail::strip_comment(lines[n]);
    if (line.empty()) continue;
    if (line.back() == '.') line = text::trim(line.substr(0, line.size() - 1));
    const auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorKind::SyntaxError, "expected '<name>: ...'", line_no);
    const auto name = text::trim(line.substr(0, colon));
    const auto body = text::trim(line.substr(colon + 1));
    if (name.empty()) throw Error(ErrorKind::SyntaxError, "empty name", line_no);

    if (!seen_class) {
      if (name != "class")
        throw Error(ErrorKind::SyntaxError, "first declaration must be 'class:'", line_no);
      schema.class_labels = detail::parse_value_list(body, line_no);
      if (schema.class_labels.size() < 2)
        throw Error(ErrorKind::FewerThanTwoClasses, "need at least two class labels",
                    line_no);
      seen_class = true;
      continue;
    }

    AttributeDecl decl;
    decl.name = std::string(name);
    if (!names.insert(decl.name).second)
      throw Error(ErrorKind::DuplicateAttribute, "attribute '" + decl.name + "' repeated",
                  line_no);
    if (body == "continuous") {
      decl.continuous = true;
    } else {
      if (body.empty())
        throw Error(ErrorKind::EmptyValueSet, "attribute '" + decl.name + "' has no values",
                    line_no);
      decl.values = detail::parse_value_list(body, line_no);
      if (decl.values.size() < 2)
        throw Error(ErrorKind::EmptyValueSet,
                    "attribute '" + decl.name + "' needs at least two values", line_no);
    }
    schema.attributes.push_back(std::move(decl));
  }
  if (!seen_class) throw Error(ErrorKind::FewerThanTwoClasses, "no 'class:' declaration");
  return schema;
}

inline std::string serialize_schema(const Schema& schema) {
  auto list = [](const std::vector<std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out += ", ";
      out += values[i];
    }
    return out;
  };
  std::string out = "class: " + list(schema.class_labels) + ".\n";
  for (const auto& a : schema.attributes)
    out += a.name + ": " + (a.continuous ? std::string("continuous") : list(a.values)) + ".\n";
  return out;
}

// ---------------------------------------------------------------------------
// Data file

inline Dataset parse_dataset(std::string_view text, std::shared_ptr<const Schema> schema) {
  Dataset data;
  data.schema = schema;
  const std::size_t arity = schema->attribute_count() + 1;
  for (const auto& record : csv::parse(text)) {
    const std::size_t row = record.line;
    if (record.fields.size() != arity)
      throw Error(ErrorKind::ArityMismatch,
                  "expected " + std::to_string(arity) + " fields, found " +
                      std::to_string(record.fields.size()),
                  row);
    Instance inst;
    inst.values.reserve(schema->attribute_count());
    for (std::size_t a = 0; a < schema->attribute_count(); ++a) {
      const auto& field = record.fields[a];
      const auto& decl = schema->attributes[a];
      if (field == kMissingMarker) {
        inst.values.emplace_back(Missing{});
      } else if (decl.continuous) {
        const auto number = text::parse_finite(field);
        if (!number)
          throw Error(ErrorKind::NumericParseError, "'" + field + "' is not a finite number",
                      row, a + 1);
        inst.values.emplace_back(*number);
      } else {
        const auto idx = decl.value_index(field);
        if (!idx)
          throw Error(ErrorKind::UnknownDiscreteValue,
                      "'" + field + "' is not a declared value of '" + decl.name + "'", row,
                      a + 1);
        inst.values.emplace_back(Category{*idx});
      }
    }
    const auto label = schema->label_index(record.fields.back());
    if (!label)
      throw Error(ErrorKind::UnknownLabel, "'" + record.fields.back() + "' is not a class",
                  row);
    inst.label = *label;
    data.instances.push_back(std::move(inst));
  }
  return data;
}

inline Dataset parse_dataset(std::string_view text, const Schema& schema) {
  return parse_dataset(text, std::make_shared<const Schema>(schema));
}

inline std::string format_value(const AttributeDecl& decl, const AttributeValue& v) {
  if (is_missing(v)) return std::string(kMissingMarker);
  if (decl.continuous) return text::format_roundtrip(std::get<double>(v));
  return decl.values[std::get<Category>(v).index];
}

inline std::string serialize_dataset(const Dataset& data) {
  const Schema& schema = *data.schema;
  std::string out;
  std::vector<std::string> fields;
  for (const auto& inst : data.instances) {
    fields.clear();
    for (std::size_t a = 0; a < inst.values.size(); ++a)
      fields.push_back(format_value(schema.attributes[a], inst.values[a]));
    fields.push_back(schema.class_labels[inst.label]);
    out += csv::join(fields);
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

/// Uniform integer in [0, bound) from a 64-bit engine by rejection, so that
/// shuffles are identical across standard library implementations.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw = 0;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % bound;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class T>
void shuffle_in_place(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

inline TrainTestSplit split(const Dataset& data, std::size_t train_count,
                            std::uint64_t seed) {
  if (train_count == 0 || train_count >= data.size())
    throw Error(ErrorKind::BadCount, "train count " + std::to_string(train_count) +
                                         " must lie strictly between 0 and " +
                                         std::to_string(data.size()));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  shuffle_in_place(order, rng);

  TrainTestSplit out{Dataset{data.schema, {}}, Dataset{data.schema, {}}};
  out.train.instances.reserve(train_count);
  out.test.instances.reserve(data.size() - train_count);
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < train_count ? out.train : out.test).instances.push_back(data[order[i]]);
  return out;
}

}  // namespace mdt
