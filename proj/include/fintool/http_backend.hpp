#pragma once

// OpenAI-compatible chat/embedding backend. Define FINTOOL_WITH_TLS (and link OpenSSL) for https.
#ifdef FINTOOL_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <string>
#include <vector>

#include "fintool/llm_gateway.hpp"

namespace fintool::gateway {

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(double timeout_seconds = 120.0) : timeout_(timeout_seconds) {}

  Completion complete(const EndpointProfile& p, const GatewayRequest& req) override {
    json body = json::object();
    body["model"] = p.model;
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(msgs);
    const auto& d = req.decoding ? *req.decoding : p.decoding;
    body["temperature"] = d.temperature;
    body["max_tokens"] = d.max_tokens;
    if (req.expect_json) body["response_format"] = {{"type", "json_object"}};
    auto r = post(p, "/chat/completions", body);
    try {
      Completion c;
      c.text = r.at("choices").at(0).at("message").at("content").get<std::string>();
      if (auto u = r.find("usage"); u != r.end() && u->is_object())
        c.usage = Usage{u->value("prompt_tokens", std::size_t{0}), u->value("completion_tokens", std::size_t{0})};
      return c;
    } catch (const json::exception& e) {
      throw BackendFailure(FailureKind::Server, std::string("unexpected response shape: ") + e.what());
    }
  }

  std::vector<std::vector<double>> embed(const EndpointProfile& p, const std::vector<std::string>& texts) override {
    json body = {{"model", p.model}, {"input", texts}};
    auto r = post(p, "/embeddings", body);
    try {
      std::vector<std::vector<double>> out(texts.size());
      for (const auto& row : r.at("data")) out.at(row.at("index").get<std::size_t>()) = row.at("embedding").get<std::vector<double>>();
      return out;
    } catch (const std::exception& e) {
      throw BackendFailure(FailureKind::Server, std::string("unexpected response shape: ") + e.what());
    }
  }

 private:
  // base_url like "https://host:port/v1"
  static std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme = url.find("://");
    auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
  }

  json post(const EndpointProfile& p, const std::string& endpoint, const json& body) {
    auto [origin, prefix] = split_url(p.base_url);
    httplib::Client cli(origin);
    auto secs = static_cast<time_t>(timeout_);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!p.auth_env.empty()) {
      const char* key = std::getenv(p.auth_env.c_str());
      if (!key || !*key) throw BackendFailure(FailureKind::Auth, "environment variable " + p.auth_env + " is not set");
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    network_operations().fetch_add(1);
    auto res = cli.Post(prefix + endpoint, headers, body.dump(), "application/json");
    if (!res) throw BackendFailure(FailureKind::Timeout, "connection failed: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403) throw BackendFailure(FailureKind::Auth, "HTTP " + std::to_string(res->status));
    if (res->status == 429) throw BackendFailure(FailureKind::RateLimited, "HTTP 429");
    if (res->status >= 500) throw BackendFailure(FailureKind::Server, "HTTP " + std::to_string(res->status));
    if (res->status >= 400) throw BackendFailure(FailureKind::Auth, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    try {
      return json::parse(res->body);
    } catch (const json::parse_error&) {
      throw BackendFailure(FailureKind::Server, "response body is not JSON");
    }
  }

  double timeout_;
};

}  // namespace fintool::gateway
