#pragma once

// Transport to OpenAI-compatible chat-completion and embeddings endpoints,
// plus a scripted mock backend for offline runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "agentseval/error.hpp"
#include "agentseval/log.hpp"
#include "agentseval/text.hpp"
#include "agentseval/textmetrics.hpp"

namespace agentseval::llm {

using Millis = std::chrono::duration<double, std::milli>;

/// Time source for the rate limiter and retry backoff.
class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  using duration = std::chrono::steady_clock::duration;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_until(time_point t) = 0;
  void sleep_for(duration d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_until(time_point t) override { std::this_thread::sleep_until(t); }
};

/// Clock whose time only moves when somebody sleeps on it.
class VirtualClock final : public Clock {
 public:
  time_point now() override {
    std::lock_guard lock(mu_);
    return now_;
  }
  void sleep_until(time_point t) override {
    std::lock_guard lock(mu_);
    now_ = std::max(now_, t);
  }
  void advance(duration d) {
    std::lock_guard lock(mu_);
    now_ += d;
  }

 private:
  std::mutex mu_;
  time_point now_{};
};

/// Sliding-window limiter: at most `capacity` dispatches in any `window`.
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {
    if (!(requests_per_minute > 0.0)) throw Error(ErrorKind::InvalidArgument, "rate limit must be > 0");
    using namespace std::chrono;
    if (requests_per_minute >= 1.0) {
      capacity_ = static_cast<std::size_t>(std::floor(requests_per_minute));
      window_ = duration_cast<Clock::duration>(minutes(1));
    } else {
      capacity_ = 1;
      window_ = duration_cast<Clock::duration>(duration<double>(60.0 / requests_per_minute));
    }
  }

  /// Blocks until a slot is free, then records the dispatch.
  void acquire() {
    std::unique_lock lock(mu_);
    while (true) {
      const auto now = clock_->now();
      while (!sent_.empty() && sent_.front() + window_ <= now) sent_.pop_front();
      if (sent_.size() < capacity_) {
        sent_.push_back(now);
        return;
      }
      const auto wake = sent_.front() + window_;
      lock.unlock();
      clock_->sleep_until(wake);
      lock.lock();
    }
  }

  std::size_t capacity() const noexcept { return capacity_; }
  Clock::duration window() const noexcept { return window_; }

 private:
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> sent_;
  std::size_t capacity_ = 1;
  Clock::duration window_{};
};

/// Exponential backoff: base * multiplier^(retry-1), scaled by a uniform
/// jitter factor in [1 - jitter, 1 + jitter].
struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds base_delay{1000};
  double multiplier = 2.0;
  double jitter = 0.2;

  std::chrono::milliseconds delay_for(int retry, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(1.0 - jitter, 1.0 + jitter);
    const double ms = static_cast<double>(base_delay.count()) * std::pow(multiplier, retry - 1) * u(rng);
    return std::chrono::milliseconds(static_cast<long long>(std::max(0.0, ms)));
  }
};

struct BackendConfig {
  std::string base_url;
  std::string model_name;
  double temperature = 0.05;
  int max_output_tokens = 2048;
  std::chrono::milliseconds request_timeout{120000};
  int max_retries = 4;
  std::chrono::milliseconds retry_base_delay{1000};
  double requests_per_minute = 60.0;
  std::string api_key_env = "AGENTSEVAL_API_KEY";
  std::string embedding_model;  // empty: embeddings endpoint not configured

  void validate() const {
    if (!(temperature >= 0.0)) throw Error(ErrorKind::Config, "temperature must be >= 0");
    if (max_retries < 0) throw Error(ErrorKind::Config, "max_retries must be >= 0");
    if (!(requests_per_minute > 0.0)) throw Error(ErrorKind::Config, "requests_per_minute must be > 0");
    if (max_output_tokens < 1) throw Error(ErrorKind::Config, "max_output_tokens must be >= 1");
  }
};

/// Identifies which agent issued a call and for which sample. `attempt` is 2
/// on the parse-failure re-prompt.
struct CallContext {
  std::string role;
  std::string sample_id;
  int attempt = 1;
};

/// One completed call, recorded verbatim.
struct ChatExchange {
  std::string role;
  std::string sample_id;
  std::string system_prompt;
  std::string user_prompt;
  std::string response_text;
  double latency_ms = 0.0;
  std::string model_fingerprint;
  int transport_attempts = 1;
};

class Backend {
 public:
  virtual ~Backend() = default;

  /// Single-turn completion: one system message, one user message.
  virtual ChatExchange complete(const std::string& system, const std::string& user, const CallContext& ctx) = 0;

  /// One embedding per input string, in order. FeatureUnavailable when the
  /// backend has no embeddings endpoint.
  virtual metrics::EmbeddingMatrix embed(const std::vector<std::string>& inputs) = 0;

  virtual bool has_embeddings() const = 0;
  virtual std::string fingerprint() const = 0;
};

namespace detail {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::Config, "base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

inline bool retryable_status(int status) { return status == 429 || (status >= 500 && status <= 599); }

inline metrics::EmbeddingMatrix embeddings_from_json(const nlohmann::json& body, std::size_t expected) {
  if (!body.is_object() || !body.contains("data") || !body["data"].is_array()) {
    throw Error(ErrorKind::Transport, "embeddings response has no data array");
  }
  const auto& data = body["data"];
  if (data.size() != expected) {
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(expected) + " embeddings, got " +
                                                   std::to_string(data.size()));
  }
  std::vector<std::vector<double>> rows(expected);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& item = data[i];
    std::size_t slot = i;
    if (item.contains("index") && item["index"].is_number_integer()) {
      slot = item["index"].get<std::size_t>();
      if (slot >= expected) throw Error(ErrorKind::Transport, "embedding index out of range");
    }
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      throw Error(ErrorKind::Transport, "embedding entry without vector");
    }
    for (const auto& v : item["embedding"]) {
      if (!v.is_number()) throw Error(ErrorKind::Transport, "non-numeric embedding component");
      rows[slot].push_back(v.get<double>());
    }
  }
  return metrics::EmbeddingMatrix(std::move(rows));
}

}  // namespace detail

/// Chat-completions client for any OpenAI-compatible server.
///
/// Wire format: POST {base_url}/chat/completions with
/// {model, messages:[{role:"system"},{role:"user"}], temperature, max_tokens};
/// the reply is read from choices[0].message.content. Embeddings go to
/// {base_url}/embeddings as {model, input:[...]} and come back in
/// data[i].embedding. Transport failures, 429 and 5xx are retried with
/// exponential backoff; 401/403 fail immediately.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config, std::shared_ptr<Clock> clock = std::make_shared<SteadyClock>())
      : config_(std::move(config)),
        url_(detail::parse_base_url(config_.base_url)),
        clock_(std::move(clock)),
        limiter_(config_.requests_per_minute, clock_),
        rng_(std::random_device{}()) {
    config_.validate();
    if (config_.model_name.empty()) throw Error(ErrorKind::Config, "model name is required for a live backend");
    retry_.max_retries = config_.max_retries;
    retry_.base_delay = config_.retry_base_delay;
  }

  ChatExchange complete(const std::string& system, const std::string& user, const CallContext& ctx) override {
    nlohmann::json body;
    body["model"] = config_.model_name;
    body["messages"] = nlohmann::json::array({{{"role", "system"}, {"content", system}},
                                               {{"role", "user"}, {"content", user}}});
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_output_tokens;

    const auto start = std::chrono::steady_clock::now();
    auto [response, attempts] = post_with_retry("/chat/completions", body.dump(), ctx);

    const auto& choices = response.contains("choices") ? response["choices"] : nlohmann::json();
    if (!choices.is_array() || choices.empty() || !choices[0].contains("message") ||
        !choices[0]["message"].is_object()) {
      throw Error(ErrorKind::Transport, "completion response has no choices[0].message");
    }
    const auto& content = choices[0]["message"].contains("content") ? choices[0]["message"]["content"]
                                                                      : nlohmann::json();
    if (!content.is_string() || text::trim_view(content.get_ref<const std::string&>()).empty()) {
      throw Error(ErrorKind::EmptyCompletion, "blank completion for " + ctx.role + "/" + ctx.sample_id);
    }

    ChatExchange ex;
    ex.role = ctx.role;
    ex.sample_id = ctx.sample_id;
    ex.system_prompt = system;
    ex.user_prompt = user;
    ex.response_text = content.get<std::string>();
    ex.latency_ms = Millis(std::chrono::steady_clock::now() - start).count();
    ex.transport_attempts = attempts;
    ex.model_fingerprint = response.value("model", config_.model_name);
    if (response.contains("system_fingerprint") && response["system_fingerprint"].is_string()) {
      ex.model_fingerprint += "/" + response["system_fingerprint"].get<std::string>();
    }
    return ex;
  }

  metrics::EmbeddingMatrix embed(const std::vector<std::string>& inputs) override {
    if (!has_embeddings()) throw Error(ErrorKind::FeatureUnavailable, "no embedding model configured");
    if (inputs.empty()) return metrics::EmbeddingMatrix{};
    nlohmann::json body;
    body["model"] = config_.embedding_model;
    body["input"] = inputs;
    auto [response, attempts] = post_with_retry("/embeddings", body.dump(), CallContext{"embed", "", 1});
    (void)attempts;
    return detail::embeddings_from_json(response, inputs.size());
  }

  bool has_embeddings() const override { return !config_.embedding_model.empty(); }

  std::string fingerprint() const override { return "http:" + config_.model_name; }

  const RetryPolicy& retry_policy() const noexcept { return retry_; }

 private:
  std::pair<nlohmann::json, int> post_with_retry(const std::string& path, const std::string& payload,
                                                 const CallContext& ctx) {
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    std::string last_error;
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::chrono::milliseconds delay;
        {
          std::lock_guard lock(rng_mu_);
          delay = retry_.delay_for(attempt, rng_);
        }
        log::warn("retry " + std::to_string(attempt) + "/" + std::to_string(retry_.max_retries) + " for " +
                  ctx.role + "/" + ctx.sample_id + " after " + last_error);
        clock_->sleep_for(delay);
      }
      limiter_.acquire();

      httplib::Client client(url_.origin);
      const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(config_.request_timeout);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = client.Post(url_.prefix + path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403) {
        throw Error(ErrorKind::Auth, "HTTP " + std::to_string(res->status) + " from " + url_.origin + url_.prefix + path);
      }
      if (detail::retryable_status(res->status)) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorKind::Transport, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      auto parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded()) throw Error(ErrorKind::Transport, "response body is not JSON");
      return {std::move(parsed), attempt + 1};
    }
    throw Error(ErrorKind::Transport, "giving up after " + std::to_string(retry_.max_retries) +
                                          " retries: " + last_error);
  }

  BackendConfig config_;
  detail::ParsedUrl url_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;
  RetryPolicy retry_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

/// Deterministic backend answering from a fixture.
///
/// The fixture is a JSON object mapping "role/sample_id" to the response text.
/// Lookup tries "role/sample_id#attempt" (re-prompts only), then
/// "role/sample_id", then the wildcard "role/*". An optional "__embeddings__"
/// object maps input strings to vectors.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(const nlohmann::json& fixture) {
    if (!fixture.is_object()) throw Error(ErrorKind::Config, "mock fixture must be a JSON object");
    for (const auto& [key, value] : fixture.items()) {
      if (key == "__embeddings__") {
        if (!value.is_object()) throw Error(ErrorKind::Config, "__embeddings__ must be an object");
        embeddings_enabled_ = true;
        for (const auto& [token, vec] : value.items()) {
          if (!vec.is_array()) throw Error(ErrorKind::Config, "embedding for '" + token + "' must be an array");
          std::vector<double> row;
          for (const auto& v : vec) {
            if (!v.is_number()) throw Error(ErrorKind::Config, "embedding for '" + token + "' must be numeric");
            row.push_back(v.get<double>());
          }
          embeddings_.emplace(token, std::move(row));
        }
        continue;
      }
      if (!value.is_string()) throw Error(ErrorKind::Config, "fixture value for '" + key + "' must be a string");
      responses_.emplace(key, value.get<std::string>());
    }
    fingerprint_ = "mock:" + text::hex64(text::fnv1a(fixture.dump()));
  }

  static MockBackend from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open mock fixture " + path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::Config, "mock fixture " + path + " is not valid JSON");
    return MockBackend(j);
  }

  ChatExchange complete(const std::string& system, const std::string& user, const CallContext& ctx) override {
    ChatExchange ex;
    ex.role = ctx.role;
    ex.sample_id = ctx.sample_id;
    ex.system_prompt = system;
    ex.user_prompt = user;
    ex.response_text = lookup(ctx);
    ex.latency_ms = 0.0;
    ex.model_fingerprint = fingerprint_;
    return ex;
  }

  metrics::EmbeddingMatrix embed(const std::vector<std::string>& inputs) override {
    if (!embeddings_enabled_) throw Error(ErrorKind::FeatureUnavailable, "mock fixture has no __embeddings__");
    std::vector<std::vector<double>> rows;
    rows.reserve(inputs.size());
    for (const auto& in : inputs) {
      auto it = embeddings_.find(in);
      if (it == embeddings_.end()) throw Error(ErrorKind::MissingFixture, "no embedding for '" + in + "'");
      rows.push_back(it->second);
    }
    return metrics::EmbeddingMatrix(std::move(rows));
  }

  bool has_embeddings() const override { return embeddings_enabled_; }
  std::string fingerprint() const override { return fingerprint_; }

 private:
  std::string lookup(const CallContext& ctx) const {
    const std::string key = ctx.role + "/" + ctx.sample_id;
    if (ctx.attempt > 1) {
      if (auto it = responses_.find(key + "#" + std::to_string(ctx.attempt)); it != responses_.end()) return it->second;
    }
    if (auto it = responses_.find(key); it != responses_.end()) return it->second;
    if (auto it = responses_.find(ctx.role + "/*"); it != responses_.end()) return it->second;
    throw Error(ErrorKind::MissingFixture, "no fixture entry for " + key);
  }

  std::map<std::string, std::string> responses_;
  std::map<std::string, std::vector<double>> embeddings_;
  bool embeddings_enabled_ = false;
  std::string fingerprint_;
};

}  // namespace agentseval::llm
