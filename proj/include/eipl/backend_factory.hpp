#pragma once

// Concrete HTTP transport and the config-driven backend factory.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "httplib.h"

#include "eipl/backend.hpp"

namespace eipl {

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const std::string& base_url, const std::string& path,
                    const std::string& bearer_token, const std::string& body,
                    std::chrono::milliseconds timeout) override {
    auto url = parse_base_url(base_url);
    httplib::Client client(url.origin);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers = {{"Authorization", "Bearer " + bearer_token}};
    auto res = client.Post(url.prefix + path, headers, body, "application/json");
    if (!res) {
      throw Error(ErrorKind::Transport, url.origin, httplib::to_string(res.error()));
    }
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) out.retry_after = parse_retry_after(res->get_header_value("Retry-After"));
    return out;
  }
};

/// Builds the backend named by config. Mock backends are seeded with every
/// exemplar in `bank` plus the optional fixtures file.
inline std::unique_ptr<Backend> make_backend(const BackendConfig& config, const QuestionBank& bank = {},
                                             const std::optional<std::filesystem::path>& fixtures = std::nullopt) {
  config.validate();
  switch (config.kind) {
    case BackendKind::Remote:
      return std::make_unique<RemoteBackend>(config, std::make_shared<HttplibTransport>());
    case BackendKind::Mock: {
      auto mock = std::make_unique<MockBackend>(config.concurrency_limit);
      mock->add_exemplars(bank);
      if (fixtures) mock->load_fixtures(*fixtures);
      return mock;
    }
    case BackendKind::RuleBased:
      return std::make_unique<RuleBasedBackend>(config.concurrency_limit);
  }
  throw Error(ErrorKind::Config, "backend", "unknown backend kind");
}

}  // namespace eipl
