#pragma once

// Chat-message construction for a segmentation request.

#include <string>
#include <string_view>
#include <vector>

#include "eipl/corpus.hpp"
#include "eipl/error.hpp"

namespace eipl {

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "";
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct SegmentationRequest {
  std::string question_id;
  std::vector<ChatMessage> messages;
  json schema;
};

inline constexpr std::string_view kTaskInstructions =
    "Task: Create a one-to-one mapping between each segment of a given explanation and the "
    "group of lines in the given code which that phrase is associated with. Not all of the "
    "description needs to be used. Not all of the code needs to be used. It is very important "
    "to only use the words in the user's provided explanation. One segment can map to multiple "
    "lines.";

inline constexpr std::string_view kExplanationPrefix = "Explanation: ";

/// JSON schema for the model's output: {"groups":[{"code","explanation_portion"}]}
/// with no other keys anywhere.
inline json segmentation_schema() {
  return json::parse(R"({
    "type": "object",
    "properties": {
      "groups": {
        "type": "array",
        "items": {
          "type": "object",
          "properties": {
            "code": {"type": "string"},
            "explanation_portion": {"type": "string"}
          },
          "required": ["code", "explanation_portion"],
          "additionalProperties": false
        }
      }
    },
    "required": ["groups"],
    "additionalProperties": false
  })");
}

inline std::string build_system_prompt(const Question& question) {
  std::string prompt(kTaskInstructions);
  prompt += "\nHere is the code:\n";
  prompt += question.code();
  return prompt;
}

inline std::string user_turn(std::string_view explanation) {
  return std::string(kExplanationPrefix) + std::string(explanation);
}

/// One user/assistant pair per exemplar, in authored order.
inline std::vector<ChatMessage> build_fewshot_messages(const Question& question) {
  std::vector<ChatMessage> out;
  out.reserve(question.few_shot.size() * 2);
  for (const auto& ex : question.few_shot) {
    out.push_back({Role::User, user_turn(ex.explanation)});
    out.push_back({Role::Assistant, serialize_mapping(ex.expected_mapping)});
  }
  return out;
}

inline SegmentationRequest build_request(const Question& question, std::string_view response_text) {
  if (trim(response_text).empty()) {
    throw Error(ErrorKind::EmptyResponse, question.id, "student explanation is empty");
  }
  SegmentationRequest req;
  req.question_id = question.id;
  req.messages.push_back({Role::System, build_system_prompt(question)});
  auto shots = build_fewshot_messages(question);
  req.messages.insert(req.messages.end(), shots.begin(), shots.end());
  req.messages.push_back({Role::User, user_turn(response_text)});
  req.schema = segmentation_schema();
  return req;
}

/// Deterministic byte form of a request (also the basis of the remote body).
inline ordered_json request_messages_json(const SegmentationRequest& request) {
  ordered_json msgs = ordered_json::array();
  for (const auto& m : request.messages) {
    ordered_json item;
    item["role"] = std::string(to_string(m.role));
    item["content"] = m.content;
    msgs.push_back(std::move(item));
  }
  return msgs;
}

inline std::string serialize_request(const SegmentationRequest& request) {
  ordered_json doc;
  doc["question_id"] = request.question_id;
  doc["messages"] = request_messages_json(request);
  doc["schema"] = request.schema;
  return doc.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace eipl
