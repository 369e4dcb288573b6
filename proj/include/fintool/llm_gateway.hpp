#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/format_codec.hpp"
#include "fintool/io.hpp"
#include "fintool/semantic_index.hpp"

namespace fintool::gateway {

enum class FailureKind { Timeout, Auth, RateLimited, Server, ExhaustedRetries };

inline std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::Timeout: return "Timeout";
    case FailureKind::Auth: return "Auth";
    case FailureKind::RateLimited: return "RateLimited";
    case FailureKind::Server: return "Server";
    case FailureKind::ExhaustedRetries: return "ExhaustedRetries";
  }
  return "Server";
}

inline std::optional<FailureKind> failure_kind_from_string(std::string_view s) {
  for (auto k : {FailureKind::Timeout, FailureKind::Auth, FailureKind::RateLimited, FailureKind::Server,
                 FailureKind::ExhaustedRetries})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

// Raised by backends for a single upstream attempt.
class BackendFailure : public std::runtime_error {
 public:
  BackendFailure(FailureKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  FailureKind kind() const noexcept { return kind_; }
  bool transient() const noexcept { return kind_ != FailureKind::Auth; }

 private:
  FailureKind kind_;
};

// Raised by the gateway after its retry policy is spent (or on a non-retryable failure).
class GatewayError : public Error {
 public:
  GatewayError(FailureKind kind, std::string profile, const std::string& msg, int attempts)
      : Error(Errc::JudgeUnavailable, std::move(profile), std::string(to_string(kind)) + ": " + msg),
        kind_(kind),
        attempts_(attempts) {}
  FailureKind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }

 private:
  FailureKind kind_;
  int attempts_;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 9182;
};

struct RetryPolicy {
  int max_attempts = 3;
  double backoff_seconds = 0.5;  // doubled per retry
};

struct EndpointProfile {
  std::string id;
  std::string backend = "mock";  // mock | http
  std::string base_url;
  std::string model;
  std::string auth_env;  // name of the environment variable holding the key
  RetryPolicy retry;
  double rate_limit_rps = 0.0;  // 0 disables limiting
  Decoding decoding;
  std::size_t embedding_dim = 0;
  std::string mock_file;  // mock transcripts, relative to the config file
};

inline void validate_profile(const EndpointProfile& p) {
  if (p.id.empty()) throw Error(Errc::InvalidConfig, "profile.id", "profile id is required");
  if (p.retry.max_attempts < 1) throw Error(Errc::InvalidConfig, p.id + ".retry.max_attempts", "must be >= 1");
  if (p.retry.backoff_seconds < 0) throw Error(Errc::InvalidConfig, p.id + ".retry.backoff_seconds", "must be >= 0");
  if (p.decoding.temperature < 0) throw Error(Errc::InvalidConfig, p.id + ".temperature", "must be >= 0");
  if (p.decoding.max_tokens < 1) throw Error(Errc::InvalidConfig, p.id + ".max_tokens", "must be >= 1");
  if (p.rate_limit_rps < 0) throw Error(Errc::InvalidConfig, p.id + ".rate_limit_rps", "must be >= 0");
  if (p.backend != "mock" && p.backend != "http") throw Error(Errc::InvalidConfig, p.id + ".backend", "mock or http");
}

inline EndpointProfile profile_from_json(const json& j) {
  EndpointProfile p;
  p.id = j.value("id", "");
  p.backend = j.value("backend", "mock");
  p.base_url = j.value("base_url", "");
  p.model = j.value("model", "");
  if (j.contains("api_key")) throw Error(Errc::InvalidConfig, p.id + ".api_key", "secrets must come from auth_env");
  p.auth_env = j.value("auth_env", "");
  if (auto r = j.find("retry"); r != j.end()) {
    p.retry.max_attempts = r->value("max_attempts", p.retry.max_attempts);
    p.retry.backoff_seconds = r->value("backoff_seconds", p.retry.backoff_seconds);
  }
  p.rate_limit_rps = j.value("rate_limit_rps", 0.0);
  p.decoding.temperature = j.value("temperature", p.decoding.temperature);
  p.decoding.max_tokens = j.value("max_tokens", p.decoding.max_tokens);
  p.embedding_dim = j.value("embedding_dim", std::size_t{0});
  p.mock_file = j.value("mock_file", "");
  validate_profile(p);
  return p;
}

struct GatewayRequest {
  std::string profile;
  std::string stage;    // what the caller is asking for, e.g. "judge_select"; mocks match on it
  std::string session;  // mock cursors are kept per session
  std::vector<Message> messages;
  std::optional<Decoding> decoding;  // profile defaults when unset
  bool expect_json = false;
  std::map<std::string, std::string> vars;  // substituted into mock responses
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct Completion {
  std::string text;
  int attempts = 0;
  std::optional<Usage> usage;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const EndpointProfile& profile, const GatewayRequest& req) = 0;
  virtual std::vector<std::vector<double>> embed(const EndpointProfile& profile, const std::vector<std::string>& texts) = 0;
};

// Scripted backend. Rules are {match: stage, contains?: text, response | fail | embedding}; `contains`
// is searched in the prompt messages and in the request variables rendered as "key=value" lines.
// Rules with the same (match, contains) form a queue played in order, last entry sticky,
// with a separate cursor per session. The first queue whose condition holds wins.
class MockBackend final : public Backend {
 public:
  struct Rule {
    std::string match;
    std::string contains;
    std::string response;
    std::optional<FailureKind> fail;
    std::vector<double> embedding;
  };

  MockBackend() = default;
  explicit MockBackend(const std::vector<json>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) add(rule_from_json(rows[i], i + 1));
  }

  static Rule rule_from_json(const json& j, std::size_t line = 0) {
    const std::string where = "mock line " + std::to_string(line);
    if (!j.is_object()) throw Error(Errc::BadType, where);
    Rule r;
    auto m = j.find("match");
    if (m == j.end() || !m->is_string()) throw Error(Errc::MissingField, where + ".match");
    r.match = m->get<std::string>();
    r.contains = j.value("contains", "");
    if (auto resp = j.find("response"); resp != j.end()) r.response = resp->is_string() ? resp->get<std::string>() : resp->dump();
    if (auto f = j.find("fail"); f != j.end()) {
      auto k = failure_kind_from_string(f->get<std::string>());
      if (!k) throw Error(Errc::InvalidValue, where + ".fail");
      r.fail = k;
    }
    if (auto e = j.find("embedding"); e != j.end()) r.embedding = e->get<std::vector<double>>();
    return r;
  }

  void add(Rule r) {
    std::lock_guard lk(mu_);
    for (auto& g : groups_) {
      if (g.match == r.match && g.contains == r.contains) {
        g.rules.push_back(std::move(r));
        return;
      }
    }
    groups_.push_back({r.match, r.contains, {std::move(r)}});
  }

  Completion complete(const EndpointProfile&, const GatewayRequest& req) override {
    std::string haystack;
    for (const auto& m : req.messages) haystack += m.content + "\n";
    for (const auto& [k, v] : req.vars) haystack += k + "=" + v + "\n";
    Rule r = next_rule(req.stage, req.session, haystack);
    if (r.fail) throw BackendFailure(*r.fail, "scripted failure for stage '" + req.stage + "'");
    return Completion{codec::substitute(r.response, req.vars), 1, std::nullopt};
  }

  std::vector<std::vector<double>> embed(const EndpointProfile&, const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) {
      Rule r = next_rule("embed", "", t);
      if (r.fail) throw BackendFailure(*r.fail, "scripted embedding failure");
      out.push_back(r.embedding);
    }
    return out;
  }

  std::size_t calls() const { return calls_.load(); }
  std::size_t calls(std::string_view stage) const {
    std::lock_guard lk(mu_);
    auto it = per_stage_.find(std::string(stage));
    return it == per_stage_.end() ? 0 : it->second;
  }

 private:
  struct Group {
    std::string match;
    std::string contains;
    std::vector<Rule> rules;
  };

  Rule next_rule(const std::string& stage, const std::string& session, const std::string& haystack) {
    std::lock_guard lk(mu_);
    ++calls_;
    ++per_stage_[stage];
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const auto& g = groups_[gi];
      if (g.match != stage && g.match != "*") continue;
      if (!g.contains.empty() && haystack.find(g.contains) == std::string::npos) continue;
      auto& cur = cursors_[{session, gi}];
      const Rule& r = g.rules[std::min(cur, g.rules.size() - 1)];
      ++cur;
      return r;
    }
    throw BackendFailure(FailureKind::Server, "no mock response for stage '" + stage + "'");
  }

  mutable std::mutex mu_;
  std::vector<Group> groups_;
  std::map<std::pair<std::string, std::size_t>, std::size_t> cursors_;
  std::map<std::string, std::size_t> per_stage_;
  std::atomic<std::size_t> calls_{0};
};

// Shared token bucket: `rps` tokens per second, burst of max(1, rps).
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;
  explicit TokenBucket(double rps) : rps_(rps), capacity_(std::max(1.0, rps)), tokens_(capacity_), last_(Clock::now()) {}

  // Seconds the caller must wait before its request may go out (0 when unlimited).
  double reserve() {
    if (rps_ <= 0) return 0.0;
    std::lock_guard lk(mu_);
    auto now = Clock::now();
    tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rps_);
    last_ = now;
    tokens_ -= 1.0;
    return tokens_ >= 0 ? 0.0 : -tokens_ / rps_;
  }

 private:
  double rps_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

class Gateway {
 public:
  using Sleeper = std::function<void(double seconds)>;

  Gateway() : sleeper_([](double s) {
    if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
  }) {}

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

  void add_profile(EndpointProfile p, std::shared_ptr<Backend> backend) {
    validate_profile(p);
    if (!backend) throw Error(Errc::InvalidConfig, p.id, "backend is required");
    std::lock_guard lk(mu_);
    auto id = p.id;
    auto bucket = std::make_unique<TokenBucket>(p.rate_limit_rps);
    entries_[id] = std::make_shared<Entry>(Entry{std::move(p), std::move(backend), std::move(bucket)});
  }

  bool has_profile(const std::string& id) const {
    std::lock_guard lk(mu_);
    return entries_.count(id) > 0;
  }

  const EndpointProfile& profile(const std::string& id) const { return entry(id).profile; }
  Backend& backend(const std::string& id) const { return *entry(id).backend; }

  Completion complete(const GatewayRequest& req) {
    auto& e = entry(req.profile);
    if (req.decoding && (req.decoding->temperature < 0 || req.decoding->max_tokens < 1))
      throw Error(Errc::InvalidConfig, req.profile, "invalid decoding parameters");
    return with_retries(e, [&] { return e.backend->complete(e.profile, req); });
  }

  std::vector<index::EmbeddingVector> embed(const std::string& profile, const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    auto& e = entry(profile);
    auto rows = with_retries(e, [&] { return e.backend->embed(e.profile, texts); });
    if (rows.size() != texts.size())
      throw Error(Errc::EncoderFailure, profile, "expected " + std::to_string(texts.size()) + " embeddings");
    std::vector<index::EmbeddingVector> out;
    for (auto& r : rows) {
      if (r.size() != rows.front().size()) throw Error(Errc::EncoderFailure, profile, "inconsistent embedding dimension");
      out.emplace_back(std::move(r));
    }
    return out;
  }

 private:
  struct Entry {
    EndpointProfile profile;
    std::shared_ptr<Backend> backend;
    std::unique_ptr<TokenBucket> bucket;
  };

  Entry& entry(const std::string& id) const {
    std::lock_guard lk(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(Errc::InvalidConfig, id, "unknown endpoint profile");
    return *it->second;
  }

  template <typename F>
  auto with_retries(Entry& e, F&& attempt) -> decltype(attempt()) {
    const auto& policy = e.profile.retry;
    std::string last;
    for (int n = 1; n <= policy.max_attempts; ++n) {
      sleeper_(e.bucket->reserve());
      try {
        auto r = attempt();
        if constexpr (std::is_same_v<decltype(r), Completion>) r.attempts = n;
        return r;
      } catch (const BackendFailure& f) {
        if (!f.transient()) throw GatewayError(f.kind(), e.profile.id, f.what(), n);
        last = f.what();
        if (n < policy.max_attempts) sleeper_(policy.backoff_seconds * static_cast<double>(1 << std::min(n - 1, 16)));
      }
    }
    throw GatewayError(FailureKind::ExhaustedRetries, e.profile.id, last, policy.max_attempts);
  }

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  Sleeper sleeper_;
};

// Encoder backed by an embedding profile.
class GatewayEncoder final : public index::Encoder {
 public:
  GatewayEncoder(Gateway& gw, std::string profile) : gw_(gw), profile_(std::move(profile)) {
    if (gw_.profile(profile_).embedding_dim == 0)
      throw Error(Errc::InvalidConfig, profile_ + ".embedding_dim", "embedding profiles must declare their dimension");
  }

  index::EmbeddingVector encode(std::string_view text) const override {
    auto v = gw_.embed(profile_, {std::string(text)});
    if (v.front().dim() != dim()) throw Error(Errc::EncoderFailure, profile_, "unexpected embedding dimension");
    return std::move(v.front());
  }
  std::string id() const override { return "gateway:" + profile_ + ":" + gw_.profile(profile_).model; }
  std::size_t dim() const override { return gw_.profile(profile_).embedding_dim; }

 private:
  Gateway& gw_;
  std::string profile_;
};

// Counts every upstream network operation; the mock backend never touches it.
inline std::atomic<std::size_t>& network_operations() {
  static std::atomic<std::size_t> n{0};
  return n;
}

}  // namespace fintool::gateway
