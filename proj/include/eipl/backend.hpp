#pragma once

// Completion backends that turn a SegmentationRequest into mapping JSON text.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "eipl/corpus.hpp"
#include "eipl/error.hpp"
#include "eipl/prompting.hpp"
#include "eipl/text.hpp"

namespace eipl {

enum class BackendKind { Remote, Mock, RuleBased };

inline std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::Remote: return "remote";
    case BackendKind::Mock: return "mock";
    case BackendKind::RuleBased: return "rule";
  }
  return "";
}

inline std::optional<BackendKind> parse_backend_kind(std::string_view s) {
  if (s == "remote") return BackendKind::Remote;
  if (s == "mock") return BackendKind::Mock;
  if (s == "rule" || s == "rule-based" || s == "rule_based") return BackendKind::RuleBased;
  return std::nullopt;
}

inline constexpr const char* kApiKeyEnv = "EIPL_API_KEY";
inline constexpr const char* kBaseUrlEnv = "EIPL_BASE_URL";

struct BackendConfig {
  BackendKind kind = BackendKind::RuleBased;
  std::string base_url;
  std::string api_key;  // only ever filled from the environment
  std::string model_name = "gpt-4o";
  double temperature = 0.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60'000};
  int concurrency_limit = 4;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{30'000};

  void validate() const {
    if (temperature < 0) throw Error(ErrorKind::Config, "temperature", "must be >= 0");
    if (max_retries < 0) throw Error(ErrorKind::Config, "max_retries", "must be >= 0");
    if (concurrency_limit < 1) throw Error(ErrorKind::Config, "concurrency_limit", "must be >= 1");
    if (kind == BackendKind::Remote) {
      if (base_url.empty()) throw Error(ErrorKind::Config, "base_url", std::string("remote backend needs ") + kBaseUrlEnv + " or --base-url");
      if (api_key.empty()) throw Error(ErrorKind::Config, kApiKeyEnv, "remote backend needs an API key in the environment");
    }
  }
};

/// Fills api_key (always) and base_url (when unset) from the environment.
inline BackendConfig with_environment(BackendConfig config) {
  if (const char* key = std::getenv(kApiKeyEnv)) config.api_key = key;
  if (config.base_url.empty()) {
    if (const char* url = std::getenv(kBaseUrlEnv)) config.base_url = url;
  }
  return config;
}

struct Provenance {
  BackendKind kind = BackendKind::RuleBased;
  std::string model_name;
  int retry_count = 0;
  std::chrono::milliseconds wall_time{0};
};

struct RawMappingText {
  std::string text;
  Provenance provenance;
};

/// Counting gate on in-flight backend calls.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int limit) : limit_(std::max(1, limit)) {}

  class Slot {
   public:
    explicit Slot(ConcurrencyLimiter& owner) : owner_(&owner) { owner_->acquire(); }
    ~Slot() {
      if (owner_) owner_->release();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    ConcurrencyLimiter* owner_;
  };

  int limit() const { return limit_; }

  int peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

 private:
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  const int limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int peak_ = 0;
};

/// Shareable across threads. Subclasses implement do_complete; the public
/// entry point holds a limiter slot and stamps provenance.
class Backend {
 public:
  explicit Backend(int concurrency_limit) : limiter_(concurrency_limit) {}
  virtual ~Backend() = default;

  RawMappingText complete(const SegmentationRequest& request, const Question& question,
                          std::string_view response_text) const {
    ConcurrencyLimiter::Slot slot(limiter_);
    const auto start = std::chrono::steady_clock::now();
    RawMappingText out = do_complete(request, question, response_text);
    out.provenance.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return out;
  }

  const ConcurrencyLimiter& limiter() const { return limiter_; }

 protected:
  virtual RawMappingText do_complete(const SegmentationRequest& request, const Question& question,
                                     std::string_view response_text) const = 0;

 private:
  mutable ConcurrencyLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Rule-based baseline

namespace detail {

inline std::string canonical_token(std::string token) {
  static const std::map<std::string, std::string> kNumberWords = {
      {"zero", "0"}, {"one", "1"}, {"two", "2"}, {"three", "3"}, {"four", "4"}, {"five", "5"},
      {"six", "6"},  {"seven", "7"}, {"eight", "8"}, {"nine", "9"}, {"ten", "10"}};
  auto it = kNumberWords.find(token);
  return it == kNumberWords.end() ? token : it->second;
}

}  // namespace detail

/// Lowercased ASCII alphanumeric runs; spelled-out numbers zero..ten become digits.
inline std::set<std::string> overlap_tokens(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.insert(detail::canonical_token(std::move(cur)));
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(detail::ascii_lower(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

/// Deterministic offline segmenter: punctuation-delimited clauses, each
/// aligned to the code line with the highest token Jaccard score.
inline RawMappingText rule_based_segment(const Question& question, std::string_view response_text) {
  struct Clause {
    std::size_t begin;
    std::size_t end;
    int line;
  };
  std::vector<Clause> clauses;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= response_text.size(); ++i) {
    if (i < response_text.size() && response_text[i] != '.' && response_text[i] != ';' &&
        response_text[i] != '!') {
      continue;
    }
    std::size_t b = start;
    std::size_t e = i;
    while (b < e && detail::is_space(response_text[b])) ++b;
    while (e > b && detail::is_space(response_text[e - 1])) --e;
    start = i + 1;
    if (b == e) {
      clauses.push_back({b, e, 0});
      continue;
    }
    const auto clause_tokens = overlap_tokens(response_text.substr(b, e - b));
    int best_line = 0;
    double best = 0.0;
    for (int line = 1; line <= question.snippet.line_count(); ++line) {
      double score = jaccard(clause_tokens, overlap_tokens(question.snippet.normalized(line)));
      if (score > best) {
        best = score;
        best_line = line;
      }
    }
    clauses.push_back({b, e, best_line});
  }

  std::vector<GroupText> groups;
  int last_line = 0;
  std::size_t group_begin = 0;
  std::size_t group_end = 0;
  auto emit = [&] {
    if (last_line == 0) return;
    groups.push_back({question.snippet.normalized(last_line),
                      std::string(response_text.substr(group_begin, group_end - group_begin))});
  };
  for (const auto& c : clauses) {
    if (c.line != 0 && c.line == last_line) {
      group_end = c.end;
      continue;
    }
    emit();
    last_line = c.line;
    group_begin = c.begin;
    group_end = c.end;
  }
  emit();

  RawMappingText out;
  out.text = serialize_mapping(groups);
  out.provenance.kind = BackendKind::RuleBased;
  out.provenance.model_name = "rule-based";
  return out;
}

class RuleBasedBackend final : public Backend {
 public:
  explicit RuleBasedBackend(int concurrency_limit = 4) : Backend(concurrency_limit) {}

 protected:
  RawMappingText do_complete(const SegmentationRequest&, const Question& question,
                             std::string_view response_text) const override {
    return rule_based_segment(question, response_text);
  }
};

// ---------------------------------------------------------------------------
// Mock replay

/// 64-bit FNV-1a; stable across platforms, which std::hash is not.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Replays canned outputs keyed on (question_id, hash of trimmed response).
/// Every question's few-shot exemplars are registered automatically.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(int concurrency_limit = 4) : Backend(concurrency_limit) {}

  void add(const std::string& question_id, std::string_view response_text, std::string output) {
    fixtures_[{question_id, fnv1a64(trim(response_text))}] = std::move(output);
  }

  void add_exemplars(const Question& question) {
    for (const auto& ex : question.few_shot) {
      add(question.id, ex.explanation, serialize_mapping(ex.expected_mapping));
    }
  }

  void add_exemplars(const QuestionBank& bank) {
    for (const auto& [id, q] : bank) add_exemplars(q);
  }

  /// JSONL rows {"question_id","text","output"}; output is a string or a JSON
  /// value (stored in canonical two-space layout).
  void load_fixtures(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
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
      auto qid = detail::require_string(row, "question_id", where);
      auto resp = detail::require_string(row, "text", where);
      const json& output = detail::require(row, "output", where);
      add(qid, resp, output.is_string() ? output.get<std::string>() : output.dump(2));
    }
  }

  std::size_t size() const { return fixtures_.size(); }

 protected:
  RawMappingText do_complete(const SegmentationRequest& request, const Question&,
                             std::string_view response_text) const override {
    auto it = fixtures_.find({request.question_id, fnv1a64(trim(response_text))});
    if (it == fixtures_.end()) {
      throw Error(ErrorKind::MockMiss, request.question_id, "no fixture for this response");
    }
    RawMappingText out;
    out.text = it->second;
    out.provenance.kind = BackendKind::Mock;
    out.provenance.model_name = "mock";
    return out;
  }

 private:
  std::map<std::pair<std::string, std::uint64_t>, std::string> fixtures_;
};

// ---------------------------------------------------------------------------
// Remote (OpenAI-compatible chat completions)

struct HttpResponse {
  int status = 0;
  std::string body;
  std::optional<std::chrono::milliseconds> retry_after;
};

/// Network boundary for the remote backend. post() throws Error(Transport)
/// when no HTTP response was obtained.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& base_url, const std::string& path,
                            const std::string& bearer_token, const std::string& body,
                            std::chrono::milliseconds timeout) = 0;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing '/'
};

inline ParsedUrl parse_base_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorKind::Config, "base_url", "expected scheme://host[/path]");
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) out.prefix = std::string(url.substr(path_start));
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

inline std::optional<std::chrono::milliseconds> parse_retry_after(const std::string& value) {
  if (value.empty()) return std::nullopt;
  char* end = nullptr;
  double seconds = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

/// Delay before retry number `attempt` (0-based): base * 2^attempt, capped,
/// raised to any server retry-after, and never below the previous delay.
inline std::chrono::milliseconds next_backoff(const BackendConfig& config, int attempt,
                                              std::optional<std::chrono::milliseconds> retry_after,
                                              std::chrono::milliseconds previous) {
  auto delay = config.backoff_base;
  for (int i = 0; i < attempt && delay < config.backoff_cap; ++i) delay *= 2;
  delay = std::min(delay, config.backoff_cap);
  if (retry_after) delay = std::max(delay, *retry_after);
  return std::max(delay, previous);
}

inline std::string chat_completion_body(const SegmentationRequest& request,
                                        const BackendConfig& config) {
  ordered_json body;
  body["model"] = config.model_name;
  body["temperature"] = config.temperature;
  body["messages"] = request_messages_json(request);
  ordered_json format;
  format["type"] = "json_schema";
  format["json_schema"]["name"] = "segmentation";
  format["json_schema"]["strict"] = true;
  format["json_schema"]["schema"] = request.schema;
  body["response_format"] = std::move(format);
  return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

class RemoteBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RemoteBackend(BackendConfig config, std::shared_ptr<HttpTransport> transport,
                Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : Backend(config.concurrency_limit),
        config_(std::move(config)),
        transport_(std::move(transport)),
        sleeper_(std::move(sleeper)) {
    config_.validate();
  }

  const BackendConfig& config() const { return config_; }

 protected:
  RawMappingText do_complete(const SegmentationRequest& request, const Question&,
                             std::string_view) const override {
    const std::string body = chat_completion_body(request, config_);
    std::chrono::milliseconds previous{0};
    std::string last_failure;
    for (int attempt = 0;; ++attempt) {
      std::optional<std::chrono::milliseconds> retry_after;
      try {
        HttpResponse res = transport_->post(config_.base_url, "/chat/completions", config_.api_key,
                                            body, config_.timeout);
        if (res.status == 200) {
          RawMappingText out;
          out.text = extract_content(res.body);
          out.provenance.kind = BackendKind::Remote;
          out.provenance.model_name = config_.model_name;
          out.provenance.retry_count = attempt;
          return out;
        }
        if (res.status == 429) {
          retry_after = res.retry_after;
          last_failure = "RateLimited: HTTP 429";
        } else if (res.status == 408 || res.status >= 500) {
          last_failure = "Transport: HTTP " + std::to_string(res.status);
        } else if (res.status == 400 || res.status == 422) {
          throw Error(ErrorKind::SchemaRefused, config_.model_name,
                      "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 512));
        } else {
          throw Error(ErrorKind::BackendRejected, config_.model_name,
                      "HTTP " + std::to_string(res.status));
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Transport) throw;
        last_failure = e.what();
      }
      if (attempt >= config_.max_retries) {
        throw Error(ErrorKind::Exhausted, config_.model_name,
                    std::to_string(attempt + 1) + " attempts failed; last: " + last_failure);
      }
      previous = next_backoff(config_, attempt, retry_after, previous);
      sleeper_(previous);
    }
  }

 private:
  std::string extract_content(const std::string& body) const {
    json doc;
    try {
      doc = json::parse(body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Transport, config_.model_name, std::string("unreadable completion envelope: ") + e.what());
    }
    const json* message = nullptr;
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty() &&
        doc["choices"][0].contains("message")) {
      message = &doc["choices"][0]["message"];
    }
    if (!message || !message->is_object()) {
      throw Error(ErrorKind::Transport, config_.model_name, "completion envelope has no message");
    }
    if (message->contains("refusal") && (*message)["refusal"].is_string()) {
      throw Error(ErrorKind::SchemaRefused, config_.model_name, (*message)["refusal"].get<std::string>());
    }
    if (!message->contains("content") || !(*message)["content"].is_string()) {
      throw Error(ErrorKind::SchemaRefused, config_.model_name, "completion carried no content");
    }
    return (*message)["content"].get<std::string>();
  }

  BackendConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
};

}  // namespace eipl
