#pragma once

// HTTP feedback API for the student-facing UI.
//
//   GET  /api/questions                -> [{id, title, language, line_count}]
//   GET  /api/questions/{id}           -> {id, title, code, max_attempts}
//   POST /api/questions/{id}/segment   -> FeedbackPayload
//
// FeedbackService holds the logic and is usable without a socket;
// make_http_server() binds it to cpp-httplib.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "httplib.h"

#include "eipl/backend.hpp"
#include "eipl/backend_factory.hpp"
#include "eipl/corpus.hpp"
#include "eipl/error.hpp"
#include "eipl/pipeline.hpp"

namespace eipl {

/// Per-session attempt counters. Reservation is an atomic check-and-increment;
/// a reservation is handed back when the backend fails so retries are free.
class SessionStore {
 public:
  /// Returns the new used count, or nullopt when `max` is already reached.
  std::optional<int> try_reserve(const std::string& session, const std::string& question, int max) {
    std::lock_guard lock(mu_);
    int& used = counters_[session][question];
    if (used >= max) return std::nullopt;
    return ++used;
  }

  void release(const std::string& session, const std::string& question) {
    std::lock_guard lock(mu_);
    int& used = counters_[session][question];
    if (used > 0) --used;
  }

  int used(const std::string& session, const std::string& question) const {
    std::lock_guard lock(mu_);
    auto s = counters_.find(session);
    if (s == counters_.end()) return 0;
    auto q = s->second.find(question);
    return q == s->second.end() ? 0 : q->second;
  }

  json snapshot() const {
    std::lock_guard lock(mu_);
    json doc = json::object();
    for (const auto& [session, per_q] : counters_) {
      for (const auto& [q, n] : per_q) {
        if (n > 0) doc[session][q] = n;
      }
    }
    return doc;
  }

  void restore(const json& doc) {
    std::lock_guard lock(mu_);
    counters_.clear();
    if (!doc.is_object()) return;
    for (const auto& [session, per_q] : doc.items()) {
      if (!per_q.is_object()) continue;
      for (const auto& [q, n] : per_q.items()) {
        if (n.is_number_integer() && n.get<int>() > 0) counters_[session][q] = n.get<int>();
      }
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, path.string(), "cannot write session snapshot");
    out << snapshot().dump(2) << '\n';
  }

  void load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return;
    try {
      restore(json::parse(detail::read_file(path)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::MalformedJson, path.string(), e.what());
    }
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::map<std::string, int>> counters_;
};

struct ApiResponse {
  int status = 200;
  ordered_json body;
};

/// UI payload: color-indexed groups with explanation offsets (UTF-16 code
/// units) and code lines, the segment bar, level, and attempt counter.
inline ordered_json build_feedback(const Question& question, std::string_view explanation,
                                   const ClassificationResult& result, int attempts_used) {
  ordered_json payload;
  payload["groups"] = ordered_json::array();
  int color = 0;
  for (const auto& g : result.post_mapping.groups) {
    ordered_json item;
    item["color_index"] = color++;
    auto span = g.portion_verified ? locate_portion(g.explanation_portion, explanation) : std::nullopt;
    if (span) {
      item["explanation_span"]["start"] = utf16_offset(explanation, span->begin);
      item["explanation_span"]["end"] = utf16_offset(explanation, span->end);
    } else {
      item["explanation_span"] = nullptr;
    }
    item["portion"] = g.explanation_portion;
    item["code_lines"] = g.resolved_lines;
    item["verified"] = g.portion_verified && g.lines_verified;
    payload["groups"].push_back(std::move(item));
  }
  payload["bar"]["post_count"] = result.post_count;
  payload["bar"]["max_segments"] = question.snippet.substantive_line_count();
  payload["level"] = std::string(to_string(result.level));
  payload["warnings"] = result.warnings;
  payload["attempt"]["used"] = attempts_used;
  payload["attempt"]["max"] = question.max_attempts;
  return payload;
}

class FeedbackService {
 public:
  FeedbackService(QuestionBank bank, std::shared_ptr<const Backend> backend, GradeOptions options)
      : bank_(std::move(bank)), backend_(std::move(backend)), options_(std::move(options)) {
    classify(0, options_.threshold);
  }

  const QuestionBank& bank() const { return bank_; }
  SessionStore& sessions() { return sessions_; }

  ApiResponse list_questions() const {
    ordered_json out = ordered_json::array();
    for (const auto& [id, q] : bank_) {
      ordered_json item;
      item["id"] = q.id;
      item["title"] = q.title;
      item["language"] = q.language;
      item["line_count"] = q.snippet.line_count();
      out.push_back(std::move(item));
    }
    return {200, std::move(out)};
  }

  ApiResponse get_question(const std::string& id) const {
    const Question* q = find(id);
    if (!q) return not_found(id);
    ordered_json out;
    out["id"] = q->id;
    out["title"] = q->title;
    out["code"] = q->code();
    out["max_attempts"] = q->max_attempts;
    return {200, std::move(out)};
  }

  ApiResponse segment(const std::string& id, std::string_view body) {
    const Question* q = find(id);
    if (!q) return not_found(id);

    json req;
    try {
      req = json::parse(body);
    } catch (const json::parse_error&) {
      return error(400, "BadRequest", "request body must be JSON");
    }
    if (!req.is_object()) return error(400, "BadRequest", "request body must be a JSON object");
    std::string explanation =
        req.contains("explanation") && req["explanation"].is_string() ? req["explanation"].get<std::string>() : "";
    if (trim(explanation).empty()) return error(400, "EmptyExplanation", "explanation is empty");
    std::string session =
        req.contains("session_id") && req["session_id"].is_string() ? req["session_id"].get<std::string>() : "";
    if (!is_valid_id(session) || session.size() > 128) {
      return error(400, "BadSession", "session_id must match [A-Za-z0-9_-]{1,128}");
    }

    auto used = sessions_.try_reserve(session, q->id, q->max_attempts);
    if (!used) {
      ApiResponse r = error(429, "AttemptsExhausted", "no attempts remaining for this question");
      r.body["attempt"]["used"] = q->max_attempts;
      r.body["attempt"]["max"] = q->max_attempts;
      return r;
    }

    StudentResponse response{q->id, session + ":" + std::to_string(*used), explanation, std::nullopt};
    try {
      auto result = grade_response(*q, response, *backend_, options_);
      return {200, build_feedback(*q, explanation, result, *used)};
    } catch (const std::exception& e) {
      sessions_.release(session, q->id);
      std::cerr << "segment " << q->id << " failed: " << e.what() << '\n';
      ApiResponse r = error(502, "BackendFailure", "feedback is temporarily unavailable; please try again");
      r.body["retry_safe"] = true;
      return r;
    }
  }

 private:
  const Question* find(const std::string& id) const {
    if (!is_valid_id(id)) return nullptr;
    auto it = bank_.find(id);
    return it == bank_.end() ? nullptr : &it->second;
  }

  static ApiResponse error(int status, const std::string& code, const std::string& message) {
    ordered_json body;
    body["error"] = code;
    body["message"] = message;
    return {status, std::move(body)};
  }

  static ApiResponse not_found(const std::string&) { return error(404, "NotFound", "no such question"); }

  QuestionBank bank_;
  std::shared_ptr<const Backend> backend_;
  GradeOptions options_;
  SessionStore sessions_;
};

struct ServerOptions {
  std::optional<std::filesystem::path> static_dir;
  std::string cors_origin = "http://localhost:5173";
};

inline std::unique_ptr<httplib::Server> make_http_server(FeedbackService& service, const ServerOptions& options = {}) {
  auto server = std::make_unique<httplib::Server>();
  const std::string origin = options.cors_origin;

  auto send = [origin](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_content(api.body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
  };

  server->Options(R"(/api/.*)", [origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  server->Get("/api/questions", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.list_questions());
  });
  server->Get(R"(/api/questions/([^/]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_question(req.matches[1]));
  });
  server->Post(R"(/api/questions/([^/]+)/segment)",
               [&service, send](const httplib::Request& req, httplib::Response& res) {
                 send(res, service.segment(req.matches[1], req.body));
               });
  if (options.static_dir) {
    if (!server->set_mount_point("/", options.static_dir->string())) {
      throw Error(ErrorKind::Config, options.static_dir->string(), "static directory not found");
    }
  }
  return server;
}

}  // namespace eipl
