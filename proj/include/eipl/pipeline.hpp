#pragma once

// Post-processing rules, threshold classification, and the per-response flow.

#include <algorithm>
#include <atomic>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "eipl/backend.hpp"
#include "eipl/corpus.hpp"
#include "eipl/error.hpp"
#include "eipl/prompting.hpp"
#include "eipl/segmentation.hpp"

namespace eipl {

struct PostRule {
  std::string name;
  std::function<SegmentMapping(const SegmentMapping&, const Question&)> transform;
};

/// Drops each group whose substantive lines (blank and punctuation-only lines
/// ignored) are non-empty and all inside `lines`. Groups reaching any other
/// line, and groups that resolved to nothing, stay. Order is preserved.
inline SegmentMapping remove_groups_within(const SegmentMapping& mapping, const std::set<int>& lines,
                                           const Question& question) {
  SegmentMapping out = mapping;
  out.groups.clear();
  for (const auto& g : mapping.groups) {
    bool any = false;
    bool inside = true;
    for (int idx : g.resolved_lines) {
      if (!question.snippet.contains(idx) || !is_substantive(question.snippet.line(idx))) continue;
      any = true;
      inside = inside && lines.count(idx) > 0;
    }
    if (!(any && inside)) out.groups.push_back(g);
  }
  return out;
}

inline SegmentMapping remove_signature_only_groups(const SegmentMapping& mapping, const Question& question) {
  return remove_groups_within(mapping, question.signature_lines, question);
}

inline PostRule signature_rule() {
  return {"signature", [](const SegmentMapping& m, const Question& q) {
            return remove_signature_only_groups(m, q);
          }};
}

/// Fixed line list, independent of the question.
inline PostRule drop_lines_rule(std::set<int> lines) {
  return {"drop_lines", [lines = std::move(lines)](const SegmentMapping& m, const Question& q) {
            return remove_groups_within(m, lines, q);
          }};
}

/// Uses each question's authored drop_lines; a no-op where none are listed.
inline PostRule question_drop_lines_rule() {
  return {"drop_lines", [](const SegmentMapping& m, const Question& q) {
            return q.drop_lines.empty() ? m : remove_groups_within(m, q.drop_lines, q);
          }};
}

inline std::vector<PostRule> default_rules() { return {signature_rule()}; }

inline std::vector<PostRule> rules_from_names(const std::vector<std::string>& names) {
  std::vector<PostRule> out;
  for (const auto& n : names) {
    if (n == "signature") out.push_back(signature_rule());
    else if (n == "drop_lines") out.push_back(question_drop_lines_rule());
    else throw Error(ErrorKind::Config, "rules", "unknown rule '" + n + "'");
  }
  return out;
}

inline SegmentMapping apply_rules(const SegmentMapping& mapping, const std::vector<PostRule>& rules,
                                  const Question& question) {
  SegmentMapping out = mapping;
  for (const auto& r : rules) out = r.transform(out, question);
  return out;
}

/// Multistructural iff the count is strictly above the threshold.
inline Level classify(int post_count, int threshold) {
  if (threshold < 1) {
    throw Error(ErrorKind::BadThreshold, "threshold", "must be >= 1, got " + std::to_string(threshold));
  }
  return post_count > threshold ? Level::Multistructural : Level::Relational;
}

struct ClassificationResult {
  std::string response_id;
  std::string question_id;
  std::optional<HumanLabel> human_label;
  int raw_count = 0;
  int post_count = 0;
  int threshold = 1;
  Level level = Level::Relational;
  std::vector<std::string> warnings;
  SegmentMapping post_mapping;
};

struct GradeOptions {
  std::vector<PostRule> rules = default_rules();
  int threshold = 1;
};

/// build_request -> complete -> parse_mapping -> apply_rules -> classify.
/// Errors are rethrown with the response id in `where`.
inline ClassificationResult grade_response(const Question& question, const StudentResponse& response,
                                           const Backend& backend, const GradeOptions& options) {
  classify(0, options.threshold);  // rejects a bad threshold before any backend call
  try {
    auto request = build_request(question, response.text);
    auto raw = backend.complete(request, question, response.text);
    auto mapping = parse_mapping(raw, question, response.text);
    auto post = apply_rules(mapping, options.rules, question);

    ClassificationResult r;
    r.response_id = response.response_id;
    r.question_id = question.id;
    r.human_label = response.human_label;
    r.raw_count = mapping.raw_count;
    r.post_count = post.count();
    r.threshold = options.threshold;
    r.level = classify(r.post_count, options.threshold);
    r.warnings = mapping.warnings;
    if (r.raw_count == 0) {
      r.warnings.push_back("backend returned no segments; classified relational");
    } else if (r.post_count == 0) {
      r.warnings.push_back("post-processing removed every segment; classified relational");
    }
    r.post_mapping = std::move(post);
    return r;
  } catch (const Error& e) {
    throw Error(e.kind(), response.response_id, e.where().empty() ? e.detail() : e.where() + ": " + e.detail());
  }
}

// ---------------------------------------------------------------------------
// Result rows

inline ordered_json mapping_object(const SegmentMapping& mapping) {
  ordered_json doc;
  doc["groups"] = ordered_json::array();
  for (const auto& g : mapping.groups) {
    ordered_json item;
    item["code"] = g.code_text;
    item["explanation_portion"] = g.explanation_portion;
    doc["groups"].push_back(std::move(item));
  }
  return doc;
}

inline ordered_json to_json(const ClassificationResult& r) {
  ordered_json row;
  row["response_id"] = r.response_id;
  row["question_id"] = r.question_id;
  if (r.human_label) row["human_label"] = std::string(to_string(*r.human_label));
  row["raw_count"] = r.raw_count;
  row["post_count"] = r.post_count;
  row["threshold"] = r.threshold;
  row["level"] = std::string(to_string(r.level));
  row["warnings"] = r.warnings;
  row["post_mapping"] = mapping_object(r.post_mapping);
  return row;
}

struct ErrorRow {
  std::string response_id;
  std::string question_id;
  std::optional<HumanLabel> human_label;
  std::string kind;
  std::string message;
};

using BatchRow = std::variant<ClassificationResult, ErrorRow>;

inline ordered_json to_json(const ErrorRow& e) {
  ordered_json row;
  row["response_id"] = e.response_id;
  row["question_id"] = e.question_id;
  if (e.human_label) row["human_label"] = std::string(to_string(*e.human_label));
  row["error"]["kind"] = e.kind;
  row["error"]["message"] = e.message;
  return row;
}

inline ordered_json to_json(const BatchRow& row) {
  return std::visit([](const auto& r) { return to_json(r); }, row);
}

inline std::string to_jsonl_line(const BatchRow& row) {
  return to_json(row).dump(-1, ' ', false, json::error_handler_t::replace);
}

inline void write_results_jsonl(std::ostream& out, const std::vector<BatchRow>& rows) {
  for (const auto& r : rows) out << to_jsonl_line(r) << '\n';
}

/// Reads a results row back. Only the fields evaluation needs are restored;
/// post_mapping groups come back unresolved.
inline BatchRow batch_row_from_json(const json& row, const std::string& where) {
  auto label_of = [&](const json& r) -> std::optional<HumanLabel> {
    if (!r.contains("human_label") || r["human_label"].is_null()) return std::nullopt;
    auto text = r["human_label"].is_string() ? r["human_label"].get<std::string>() : std::string();
    auto l = parse_human_label(text);
    if (!l) throw Error(ErrorKind::BadLabel, where + ".human_label", "unknown label '" + text + "'");
    return l;
  };
  auto rid = detail::require_string(row, "response_id", where);
  auto qid = row.contains("question_id") && row["question_id"].is_string() ? row["question_id"].get<std::string>() : std::string();
  if (row.contains("error")) {
    ErrorRow e;
    e.response_id = rid;
    e.question_id = qid;
    e.human_label = label_of(row);
    e.kind = row["error"].value("kind", "");
    e.message = row["error"].value("message", "");
    return e;
  }
  ClassificationResult r;
  r.response_id = rid;
  r.question_id = qid;
  r.human_label = label_of(row);
  auto int_field = [&](const char* key) {
    const json& v = detail::require(row, key, where);
    if (!v.is_number_integer()) throw Error(ErrorKind::SchemaViolation, where + "." + key, "expected an integer");
    return v.get<int>();
  };
  r.raw_count = int_field("raw_count");
  r.post_count = int_field("post_count");
  r.threshold = int_field("threshold");
  auto level = parse_level(detail::require_string(row, "level", where));
  if (!level) throw Error(ErrorKind::SchemaViolation, where + ".level", "unknown level");
  r.level = *level;
  if (row.contains("warnings") && row["warnings"].is_array()) {
    for (const auto& w : row["warnings"]) if (w.is_string()) r.warnings.push_back(w.get<std::string>());
  }
  if (row.contains("post_mapping")) {
    for (auto& g : validate_mapping_json(row["post_mapping"].dump())) {
      SegmentGroup sg;
      sg.code_text = std::move(g.code);
      sg.explanation_portion = std::move(g.explanation_portion);
      r.post_mapping.groups.push_back(std::move(sg));
    }
    r.post_mapping.raw_count = r.raw_count;
  }
  return r;
}

inline std::vector<BatchRow> read_results_jsonl(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  std::vector<BatchRow> out;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto line = std::string_view(text).substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::MalformedJson, where, e.what());
    }
    out.push_back(batch_row_from_json(row, where));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch grading

struct BatchOptions {
  GradeOptions grade;
  int concurrency = 4;
};

/// Unknown question ids are rejected before any backend call.
inline void check_resolvable(const QuestionBank& bank, const std::vector<StudentResponse>& responses) {
  for (const auto& r : responses) {
    if (!bank.count(r.question_id)) {
      throw Error(ErrorKind::UnknownQuestion, r.response_id, "question_id '" + r.question_id + "' not in bank");
    }
  }
}

/// Grades every response with up to `concurrency` workers. Output order is
/// input order; a failing response becomes an ErrorRow and the run continues.
inline std::vector<BatchRow> run_batch(const QuestionBank& bank, const std::vector<StudentResponse>& responses,
                                       const Backend& backend, const BatchOptions& options) {
  check_resolvable(bank, responses);
  classify(0, options.grade.threshold);

  std::vector<std::optional<BatchRow>> slots(responses.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= responses.size()) return;
      const auto& resp = responses[i];
      try {
        slots[i] = grade_response(bank.at(resp.question_id), resp, backend, options.grade);
      } catch (const Error& e) {
        slots[i] = ErrorRow{resp.response_id, resp.question_id, resp.human_label,
                            std::string(to_string(e.kind())), e.what()};
      } catch (const std::exception& e) {
        slots[i] = ErrorRow{resp.response_id, resp.question_id, resp.human_label, "Internal", e.what()};
      }
    }
  };

  const int workers = std::max(1, std::min<int>(options.concurrency, static_cast<int>(responses.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::vector<BatchRow> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace eipl
