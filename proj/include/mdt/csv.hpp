#pragma once

// RFC-4180 style CSV reading and writing. Quoted fields may contain commas,
// doubled quotes and line breaks; unquoted fields are trimmed of surrounding
// blanks. Blank records are skipped.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mdt/error.hpp"
#include "mdt/text.hpp"

namespace mdt::csv {

struct Record {
  std::size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

inline std::vector<Record> parse(std::string_view text) {
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  bool record_has_content = false;
  std::size_t line = 1;
  current.line = 1;

  auto finish_field = [&] {
    if (field_quoted) {
      current.fields.push_back(field);
    } else {
      current.fields.emplace_back(text::trim(field));
    }
    field.clear();
    field_quoted = false;
  };
  auto finish_record = [&] {
    finish_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty() &&
                       !record_has_content;
    if (!blank) records.push_back(std::move(current));
    current = Record{};
    record_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (text::trim(field).empty()) {
          field.clear();
          in_quotes = true;
          field_quoted = true;
          record_has_content = true;
        } else {
          throw Error(ErrorKind::SyntaxError, "stray quote inside unquoted field", line);
        }
        break;
      case ',':
        record_has_content = true;
        finish_field();
        break;
      case '\r':
        break;
      case '\n':
        finish_record();
        ++line;
        current.line = line;
        break;
      default:
        if (field_quoted) {
          if (c != ' ' && c != '\t')
            throw Error(ErrorKind::SyntaxError, "text after closing quote", line);
        } else {
          field.push_back(c);
        }
    }
  }
  if (in_quotes) throw Error(ErrorKind::SyntaxError, "unterminated quoted field", line);
  finish_record();
  return records;
}

inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\r\n") != std::string_view::npos ||
                     (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(fields[i]);
  }
  return out;
}

}  // namespace mdt::csv
