#pragma once

// Questions, student responses, and human labels as read from disk.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "eipl/error.hpp"
#include "eipl/line_resolution.hpp"
#include "eipl/text.hpp"

namespace eipl {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class Level { Multistructural, Relational };

inline std::string_view to_string(Level level) {
  return level == Level::Multistructural ? "multistructural" : "relational";
}

inline std::optional<Level> parse_level(std::string_view s) {
  if (s == "multistructural") return Level::Multistructural;
  if (s == "relational") return Level::Relational;
  return std::nullopt;
}

enum class HumanLabel { MultistructuralCorrect, RelationalCorrect, Incorrect };

inline std::string_view to_string(HumanLabel label) {
  switch (label) {
    case HumanLabel::MultistructuralCorrect: return "multistructural_correct";
    case HumanLabel::RelationalCorrect: return "relational_correct";
    case HumanLabel::Incorrect: return "incorrect";
  }
  return "";
}

inline std::optional<HumanLabel> parse_human_label(std::string_view s) {
  if (s == "multistructural_correct") return HumanLabel::MultistructuralCorrect;
  if (s == "relational_correct") return HumanLabel::RelationalCorrect;
  if (s == "incorrect") return HumanLabel::Incorrect;
  return std::nullopt;
}

/// One (code, explanation portion) pair in the canonical mapping layout.
struct GroupText {
  std::string code;
  std::string explanation_portion;
  bool operator==(const GroupText&) const = default;
};

/// Canonical mapping JSON: {"groups":[{"code","explanation_portion"}]},
/// two-space indent, keys in that order.
inline std::string serialize_mapping(const std::vector<GroupText>& groups) {
  ordered_json doc;
  doc["groups"] = ordered_json::array();
  for (const auto& g : groups) {
    ordered_json item;
    item["code"] = g.code;
    item["explanation_portion"] = g.explanation_portion;
    doc["groups"].push_back(std::move(item));
  }
  return doc.dump(2, ' ', false, json::error_handler_t::replace);
}

struct FewShotExample {
  std::string explanation;
  std::vector<GroupText> expected_mapping;
  Level intended_level = Level::Multistructural;
};

struct Question {
  std::string id;
  std::string title;
  std::string language;
  CodeSnippet snippet;
  std::set<int> signature_lines;
  /// Optional author-listed lines for the per-question drop rule.
  std::set<int> drop_lines;
  std::vector<FewShotExample> few_shot;
  int max_attempts = 20;

  const std::string& code() const { return snippet.raw(); }
};

struct StudentResponse {
  std::string question_id;
  std::string response_id;
  std::string text;
  std::optional<HumanLabel> human_label;
};

inline bool is_valid_id(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
  });
}

/// Opt-in fallback: the first line that contains "(" and ends with "{".
inline std::optional<int> detect_signature_line(const CodeSnippet& snippet) {
  for (const auto& l : snippet.lines()) {
    const std::string n = normalize_line(l.text);
    if (n.find('(') != std::string::npos && !n.empty() && n.back() == '{') return l.index;
  }
  return std::nullopt;
}

struct QuestionLoadOptions {
  bool infer_signature = false;
};

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorKind::MissingField, path + "." + key, "required field is missing");
  }
  return obj.at(key);
}

inline std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) {
    throw Error(ErrorKind::MissingField, path + "." + key, "expected a string");
  }
  return v.get<std::string>();
}

inline std::set<int> read_line_set(const json& v, const std::string& path,
                                   const CodeSnippet& snippet) {
  if (!v.is_array()) throw Error(ErrorKind::BadLineIndex, path, "expected an array of integers");
  std::set<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto where = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_number_integer()) throw Error(ErrorKind::BadLineIndex, where, "not an integer");
    int idx = v[i].get<int>();
    if (!snippet.contains(idx)) {
      throw Error(ErrorKind::BadLineIndex, where,
                  "line " + std::to_string(idx) + " outside 1.." +
                      std::to_string(snippet.line_count()));
    }
    out.insert(idx);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Builds a Question from its JSON document. `origin` prefixes error paths.
inline Question parse_question(const json& doc, const QuestionLoadOptions& options = {},
                               const std::string& origin = "$") {
  using detail::require;
  using detail::require_string;
  if (!doc.is_object()) throw Error(ErrorKind::MissingField, origin, "question must be an object");

  Question q;
  q.id = require_string(doc, "id", origin);
  if (!is_valid_id(q.id)) {
    throw Error(ErrorKind::BadId, origin + ".id", "id must match [A-Za-z0-9_-]+");
  }
  q.title = require_string(doc, "title", origin);
  q.language = doc.contains("language") && doc["language"].is_string()
                   ? doc["language"].get<std::string>()
                   : std::string();
  q.snippet = split_lines(require_string(doc, "code", origin));

  if (doc.contains("signature_lines")) {
    q.signature_lines = detail::read_line_set(doc["signature_lines"], origin + ".signature_lines",
                                              q.snippet);
    if (q.signature_lines.empty()) {
      throw Error(ErrorKind::BadLineIndex, origin + ".signature_lines", "must not be empty");
    }
  } else if (options.infer_signature) {
    auto line = detect_signature_line(q.snippet);
    if (!line) {
      throw Error(ErrorKind::BadLineIndex, origin + ".signature_lines",
                  "no signature line could be detected");
    }
    q.signature_lines = {*line};
  } else {
    throw Error(ErrorKind::MissingField, origin + ".signature_lines", "required field is missing");
  }

  if (doc.contains("drop_lines")) {
    q.drop_lines = detail::read_line_set(doc["drop_lines"], origin + ".drop_lines", q.snippet);
  }

  if (doc.contains("max_attempts")) {
    const auto& m = doc["max_attempts"];
    if (!m.is_number_integer() || m.get<long long>() < 1) {
      throw Error(ErrorKind::MissingField, origin + ".max_attempts", "must be a positive integer");
    }
    q.max_attempts = m.get<int>();
  }

  if (!doc.contains("few_shot") || !doc["few_shot"].is_array() || doc["few_shot"].empty()) {
    throw Error(ErrorKind::NoFewShot, origin + ".few_shot", "at least two exemplars are required");
  }
  const auto& shots = doc["few_shot"];
  for (std::size_t i = 0; i < shots.size(); ++i) {
    const auto path = origin + ".few_shot[" + std::to_string(i) + "]";
    FewShotExample ex;
    ex.explanation = require_string(shots[i], "explanation", path);
    auto level_text = require_string(shots[i], "intended_level", path);
    auto level = parse_level(level_text);
    if (!level) {
      throw Error(ErrorKind::BadFewShot, path + ".intended_level",
                  "unknown level '" + level_text + "'");
    }
    ex.intended_level = *level;
    const json& groups = require(shots[i], "groups", path);
    if (!groups.is_array() || groups.empty()) {
      throw Error(ErrorKind::BadFewShot, path + ".groups", "needs at least one group");
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto gpath = path + ".groups[" + std::to_string(g) + "]";
      GroupText gt{require_string(groups[g], "code", gpath),
                   require_string(groups[g], "explanation_portion", gpath)};
      if (!verify_portion(gt.explanation_portion, ex.explanation)) {
        throw Error(ErrorKind::BadFewShot, gpath + ".explanation_portion",
                    "portion does not occur in the exemplar explanation");
      }
      if (!resolve_code_lines(gt.code, q.snippet).verified) {
        throw Error(ErrorKind::BadFewShot, gpath + ".code",
                    "code does not match the question's lines");
      }
      ex.expected_mapping.push_back(std::move(gt));
    }
    q.few_shot.push_back(std::move(ex));
  }

  auto has_level = [&](Level l) {
    return std::any_of(q.few_shot.begin(), q.few_shot.end(),
                       [l](const FewShotExample& e) { return e.intended_level == l; });
  };
  if (!has_level(Level::Multistructural) || !has_level(Level::Relational)) {
    throw Error(ErrorKind::NoFewShot, origin + ".few_shot",
                "needs at least one multistructural and one relational exemplar");
  }
  return q;
}

inline Question load_question(const std::filesystem::path& path,
                              const QuestionLoadOptions& options = {}) {
  const std::string text = detail::read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::MalformedJson, path.string(), e.what());
  }
  return parse_question(doc, options, path.filename().string());
}

/// Immutable id -> Question map, iterated in id order.
using QuestionBank = std::map<std::string, Question>;

inline QuestionBank load_question_bank(const std::filesystem::path& dir,
                                       const QuestionLoadOptions& options = {}) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::Io, dir.string(), "not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  QuestionBank bank;
  for (const auto& f : files) {
    Question q = load_question(f, options);
    auto id = q.id;
    if (!bank.emplace(id, std::move(q)).second) {
      throw Error(ErrorKind::BadId, f.string(), "duplicate question id '" + id + "'");
    }
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Responses

/// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
      if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
      row.clear();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline StudentResponse make_response(std::string question_id, std::string response_id,
                                     std::string text, std::optional<std::string> label,
                                     const std::string& where) {
  StudentResponse r;
  r.question_id = std::move(question_id);
  r.response_id = std::move(response_id);
  r.text = std::move(text);
  if (r.response_id.empty()) throw Error(ErrorKind::MissingField, where + ".response_id", "empty");
  if (r.question_id.empty()) throw Error(ErrorKind::MissingField, where + ".question_id", "empty");
  if (trim(r.text).empty()) throw Error(ErrorKind::EmptyResponse, where + ".text", "empty text");
  if (label && !label->empty()) {
    auto parsed = parse_human_label(*label);
    if (!parsed) throw Error(ErrorKind::BadLabel, where + ".human_label", "unknown label '" + *label + "'");
    r.human_label = parsed;
  }
  return r;
}

}  // namespace detail

inline std::vector<StudentResponse> parse_responses_jsonl(std::string_view text,
                                                          const std::string& origin = "") {
  std::vector<StudentResponse> out;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::MalformedJson, where, e.what());
    }
    std::optional<std::string> label;
    if (row.contains("human_label") && !row["human_label"].is_null()) {
      if (!row["human_label"].is_string()) throw Error(ErrorKind::BadLabel, where + ".human_label", "expected a string");
      label = row["human_label"].get<std::string>();
    }
    out.push_back(detail::make_response(detail::require_string(row, "question_id", where),
                                        detail::require_string(row, "response_id", where),
                                        detail::require_string(row, "text", where), label, where));
  }
  return out;
}

inline std::vector<StudentResponse> parse_responses_csv(std::string_view text,
                                                        const std::string& origin = "") {
  auto rows = parse_csv(text);
  std::vector<StudentResponse> out;
  if (rows.empty()) return out;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[trim(rows[0][i])] = i;
  for (const char* needed : {"question_id", "response_id", "text"}) {
    if (!col.count(needed)) throw Error(ErrorKind::MissingField, origin + ":header." + needed, "missing column");
  }
  auto cell = [&](const std::vector<std::string>& row, const char* name) -> std::optional<std::string> {
    auto it = col.find(name);
    if (it == col.end() || it->second >= row.size()) return std::nullopt;
    return row[it->second];
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto where = origin + ":row" + std::to_string(r);
    out.push_back(detail::make_response(cell(rows[r], "question_id").value_or(""),
                                        cell(rows[r], "response_id").value_or(""),
                                        cell(rows[r], "text").value_or(""),
                                        cell(rows[r], "human_label"), where));
  }
  return out;
}

inline void check_unique_response_ids(const std::vector<StudentResponse>& responses,
                                      const std::string& origin) {
  std::unordered_set<std::string> seen;
  for (const auto& r : responses) {
    if (!seen.insert(r.response_id).second) {
      throw Error(ErrorKind::DuplicateResponseId, origin, "response_id '" + r.response_id + "' repeats");
    }
  }
}

/// JSONL is canonical; a ".csv" extension selects the CSV reader.
inline std::vector<StudentResponse> load_responses(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  const bool csv = path.extension() == ".csv";
  auto out = csv ? parse_responses_csv(text, path.string()) : parse_responses_jsonl(text, path.string());
  check_unique_response_ids(out, path.string());
  return out;
}

}  // namespace eipl
