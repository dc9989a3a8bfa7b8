#pragma once

// Parses backend output into a validated SegmentMapping.

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "eipl/backend.hpp"
#include "eipl/corpus.hpp"
#include "eipl/error.hpp"
#include "eipl/line_resolution.hpp"
#include "eipl/text.hpp"

namespace eipl {

struct SegmentGroup {
  std::string code_text;
  std::string explanation_portion;
  std::set<int> resolved_lines;
  bool portion_verified = false;
  bool lines_verified = false;
};

struct SegmentMapping {
  std::vector<SegmentGroup> groups;
  int raw_count = 0;
  Provenance provenance;
  std::vector<std::string> warnings;

  int count() const { return static_cast<int>(groups.size()); }

  std::vector<GroupText> texts() const {
    std::vector<GroupText> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back({g.code_text, g.explanation_portion});
    return out;
  }
};

inline std::string serialize_mapping(const SegmentMapping& mapping) {
  return serialize_mapping(mapping.texts());
}

/// Checks the exact output schema and returns the group texts. Errors carry
/// a JSON path ("$.groups[2].code") or, for unparseable input, a byte offset.
inline std::vector<GroupText> validate_mapping_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::MalformedJson, "byte " + std::to_string(e.byte), e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::SchemaViolation, "$", "expected an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "groups") throw Error(ErrorKind::SchemaViolation, "$." + key, "unexpected key");
  }
  if (!doc.contains("groups")) throw Error(ErrorKind::SchemaViolation, "$", "missing key 'groups'");
  const json& groups = doc["groups"];
  if (!groups.is_array()) throw Error(ErrorKind::SchemaViolation, "$.groups", "expected an array");

  std::vector<GroupText> out;
  out.reserve(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string path = "$.groups[" + std::to_string(i) + "]";
    const json& g = groups[i];
    if (!g.is_object()) throw Error(ErrorKind::SchemaViolation, path, "expected an object");
    for (const auto& [key, _] : g.items()) {
      if (key != "code" && key != "explanation_portion") {
        throw Error(ErrorKind::SchemaViolation, path + "." + key, "unexpected key");
      }
    }
    GroupText gt;
    for (const char* key : {"code", "explanation_portion"}) {
      if (!g.contains(key)) {
        throw Error(ErrorKind::SchemaViolation, path, std::string("missing key '") + key + "'");
      }
      if (!g[key].is_string()) {
        throw Error(ErrorKind::SchemaViolation, path + "." + key, "expected a string");
      }
    }
    gt.code = g["code"].get<std::string>();
    gt.explanation_portion = g["explanation_portion"].get<std::string>();
    out.push_back(std::move(gt));
  }
  return out;
}

/// Verification failures are recorded as flags and warnings; only malformed
/// or off-schema JSON throws.
inline SegmentMapping parse_mapping(const RawMappingText& raw, const Question& question,
                                    std::string_view response_text) {
  SegmentMapping mapping;
  mapping.provenance = raw.provenance;
  auto texts = validate_mapping_json(raw.text);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    SegmentGroup g;
    g.code_text = std::move(texts[i].code);
    g.explanation_portion = std::move(texts[i].explanation_portion);
    auto res = resolve_code_lines(g.code_text, question.snippet);
    g.resolved_lines = std::move(res.lines);
    g.lines_verified = res.verified;
    g.portion_verified = verify_portion(g.explanation_portion, response_text);
    if (!g.portion_verified) {
      mapping.warnings.push_back("group " + std::to_string(i) +
                                 ": explanation portion not found in response");
    }
    if (!g.lines_verified) {
      mapping.warnings.push_back("group " + std::to_string(i) + ": code does not match snippet lines");
    }
    mapping.groups.push_back(std::move(g));
  }
  mapping.raw_count = mapping.count();
  return mapping;
}

}  // namespace eipl
