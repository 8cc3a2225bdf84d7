#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "sway/hash.hpp"
#include "sway/responses.hpp"

namespace sway {

struct BackendError : Error {
  using Error::Error;
};
struct Unreachable : BackendError {
  using BackendError::BackendError;
};
struct RateLimited : BackendError {
  using BackendError::BackendError;
};
struct AuthFailure : BackendError {
  using BackendError::BackendError;
};
struct Timeout : BackendError {
  using BackendError::BackendError;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const std::string& id() const = 0;
  virtual std::string complete(const PromptVariant& variant,
                               const DecodingParams& params) = 0;
};

// Always answers with one configured token.
class StubBackend : public Backend {
 public:
  StubBackend(std::string id, std::string response)
      : id_(std::move(id)), response_(std::move(response)) {}
  const std::string& id() const override { return id_; }
  std::string complete(const PromptVariant&, const DecodingParams&) override {
    return response_;
  }

 private:
  std::string id_;
  std::string response_;
};

// Parametric sycophant used as a metric-validation oracle. Fully
// deterministic in the item id:
//   latent(i)    = reference iff fnv1a64(id bytes, then seed as 8 LE bytes)
//                  is even
//   t(i)         = (fnv1a64(id bytes, then "t") mod 1000) / 1000
//   u(i)         = (fnv1a64(id bytes, then "e") mod 1000) / 1000
// The model follows the nudge (toward reference under PP+, away under PP-)
// iff beta * w(commitment) > t(i), else answers latent. Evidence then flips
// the answer toward (For) or away from (Against) the reference stance when
// u(i) < evidence_shift.
struct SyntheticSpec {
  std::uint64_t base_preference_seed = 0;
  double beta = 0.0;                                   // susceptibility, [0,1]
  std::array<double, 3> commitment_weights = {1.0, 1.0, 1.0};  // L, M, H
  double evidence_shift = 0.0;
};

inline std::string synthetic_respond(const PromptVariant& variant,
                                     const SyntheticSpec& spec) {
  const DatasetKind kind = variant.condition.dataset;
  const std::string& ref = reference_stance(kind);
  const std::string& non = non_reference_stance(kind);
  const std::uint64_t id_hash = fnv1a64(variant.item_id);
  const bool latent_ref =
      fnv1a64_u64le(spec.base_preference_seed, id_hash) % 2 == 0;
  const double threshold =
      static_cast<double>(fnv1a64("t", id_hash) % 1000) / 1000.0;
  const double w =
      spec.commitment_weights[static_cast<size_t>(
          rank(variant.condition.commitment) - 1)];
  std::string answer;
  if (spec.beta * w > threshold)
    answer = variant.polarity == Polarity::Positive ? ref : non;
  else
    answer = latent_ref ? ref : non;
  if (variant.evidence != EvidenceDirection::None && spec.evidence_shift > 0) {
    const double u = static_cast<double>(fnv1a64("e", id_hash) % 1000) / 1000.0;
    if (u < spec.evidence_shift) {
      if (variant.evidence == EvidenceDirection::For && answer != ref)
        answer = ref;
      else if (variant.evidence == EvidenceDirection::Against && answer == ref)
        answer = non;
    }
  }
  return answer;
}

class SyntheticBackend : public Backend {
 public:
  SyntheticBackend(std::string id, SyntheticSpec spec)
      : id_(std::move(id)), spec_(spec) {}
  const std::string& id() const override { return id_; }
  std::string complete(const PromptVariant& variant,
                       const DecodingParams&) override {
    return synthetic_respond(variant, spec_);
  }
  const SyntheticSpec& spec() const { return spec_; }

 private:
  std::string id_;
  SyntheticSpec spec_;
};

// Generic chat-completion adapter: one request shape, per-backend base URL,
// header template and credential env var. ${CREDENTIAL} in a header value is
// replaced with the secret at call time.
struct HttpBackendConfig {
  std::string backend_id;
  std::string base_url;  // e.g. http://host:port/v1/chat/completions
  std::string model_name;
  std::map<std::string, std::string> header_template;
  std::string credential_env_var;
  double rps_limit = 0.0;  // 0 = unlimited
  int max_retries = 5;
  double backoff_initial_s = 1.0;
  double timeout_s = 30.0;
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    parse_url();
  }

  const std::string& id() const override { return cfg_.backend_id; }

  std::string complete(const PromptVariant& variant,
                       const DecodingParams& params) override {
    nlohmann::json body = {
        {"model", cfg_.model_name},
        {"messages",
         {{{"role", "user"}, {"content", variant.full_text}}}},
        {"temperature", params.temperature},
        {"max_tokens", params.max_output_tokens},
    };
    const std::string payload = body.dump();
    const auto headers = build_headers();

    double backoff = cfg_.backoff_initial_s;
    std::string last_error = "unreachable";
    bool saw_rate_limit = false;
    bool saw_timeout = false;
    for (int attempt = 0; attempt < std::max(1, cfg_.max_retries); ++attempt) {
      if (attempt > 0) {
        sleep_with_jitter(backoff);
        backoff *= 2;
      }
      throttle();
      httplib::Client client(host_);
      client.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_s));
      client.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_s));
      auto res = client.Post(path_, headers, payload, "application/json");
      if (!res) {
        if (res.error() == httplib::Error::ConnectionTimeout ||
            res.error() == httplib::Error::Read) {
          saw_timeout = true;
          last_error = "timeout";
        } else {
          last_error = "connection failed: " + httplib::to_string(res.error());
        }
        continue;
      }
      if (res->status == 401 || res->status == 403)
        throw AuthFailure(cfg_.backend_id + ": authentication rejected (" +
                          std::to_string(res->status) + ")");
      if (res->status == 429) {
        saw_rate_limit = true;
        last_error = "rate limited";
        continue;
      }
      if (res->status >= 500) {
        last_error = "server error " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw BackendError(cfg_.backend_id + ": unexpected status " +
                           std::to_string(res->status));
      return extract_text(res->body);
    }
    if (saw_rate_limit)
      throw RateLimited(cfg_.backend_id + ": still rate limited after " +
                        std::to_string(cfg_.max_retries) + " attempts");
    if (saw_timeout)
      throw Timeout(cfg_.backend_id + ": timed out after retries");
    throw Unreachable(cfg_.backend_id + ": " + last_error);
  }

 private:
  void parse_url() {
    const std::string& url = cfg_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
      throw Error("backend base_url must include a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      host_ = url;
      path_ = "/";
    } else {
      host_ = url.substr(0, path_start);
      path_ = url.substr(path_start);
    }
  }

  httplib::Headers build_headers() const {
    std::string secret;
    if (!cfg_.credential_env_var.empty()) {
      const char* v = std::getenv(cfg_.credential_env_var.c_str());
      if (!v)
        throw AuthFailure(cfg_.backend_id + ": credential env var " +
                          cfg_.credential_env_var + " is not set");
      secret = v;
    }
    httplib::Headers headers;
    for (const auto& [k, tmpl] : cfg_.header_template) {
      std::string v = tmpl;
      const std::string token = "${CREDENTIAL}";
      for (auto pos = v.find(token); pos != std::string::npos;
           pos = v.find(token, pos))
        v.replace(pos, token.size(), secret);
      headers.emplace(k, v);
    }
    return headers;
  }

  static std::string extract_text(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw BackendError("response body is not JSON");
    }
    if (j.contains("choices") && j["choices"].is_array() &&
        !j["choices"].empty()) {
      const auto& c = j["choices"][0];
      if (c.contains("message") && c["message"].contains("content"))
        return c["message"]["content"].get<std::string>();
      if (c.contains("text")) return c["text"].get<std::string>();
    }
    throw BackendError("response JSON has no completion text");
  }

  void throttle() {
    if (cfg_.rps_limit <= 0) return;
    const auto interval =
        std::chrono::duration<double>(1.0 / cfg_.rps_limit);
    std::unique_lock lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    const auto earliest = last_request_ + std::chrono::duration_cast<
                              std::chrono::steady_clock::duration>(interval);
    if (now < earliest) {
      lock.unlock();
      std::this_thread::sleep_for(earliest - now);
      lock.lock();
    }
    last_request_ = std::chrono::steady_clock::now();
  }

  void sleep_with_jitter(double seconds) {
    // jitter in [0.5, 1.5); affects pacing only, never results
    std::uint64_t z = jitter_state_;
    const double j = 0.5 + static_cast<double>(splitmix64(z) >> 11) * 0x1.0p-53;
    jitter_state_ = z;
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds * j));
  }

  HttpBackendConfig cfg_;
  std::string host_;
  std::string path_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_request_{};
  std::uint64_t jitter_state_ = 0x5eedu;
};

// key = content hash over (full_text, params, backend_id)
inline std::string cache_key(const PromptVariant& variant,
                             const DecodingParams& params,
                             const std::string& backend_id) {
  std::uint64_t h = fnv1a64(variant.full_text);
  h = fnv1a64("\x1f", h);
  char buf[64];
  std::snprintf(buf, sizeof buf, "t=%.17g;m=%d", params.temperature,
                params.max_output_tokens);
  h = fnv1a64(buf, h);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(backend_id, h);
  return hex64(h);
}

// Append-only JSONL store. Corrupt lines are skipped with a warning; the run
// proceeds.
class QueryCache {
 public:
  QueryCache() = default;

  void open(const std::string& path) {
    std::lock_guard lock(mutex_);
    path_ = path;
    entries_.clear();
    warnings_.clear();
    std::ifstream in(path_);
    if (in) {
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
          auto j = nlohmann::json::parse(line);
          entries_[j.at("key").get<std::string>()] =
              j.at("raw_text").get<std::string>();
        } catch (const nlohmann::json::exception&) {
          warnings_.push_back("cache line " + std::to_string(lineno) +
                              ": corrupt, skipped");
        }
      }
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw Error("cannot open cache for append: " + path_);
  }

  std::optional<std::string> get(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, const PromptVariant& variant,
           const DecodingParams& params, const std::string& backend_id,
           const std::string& raw_text) {
    std::lock_guard lock(mutex_);
    if (entries_.count(key)) return;
    entries_[key] = raw_text;
    nlohmann::json j = {
        {"key", key},
        {"full_text_hash", hex64(fnv1a64(variant.full_text))},
        {"backend_id", backend_id},
        {"params",
         {{"temperature", params.temperature},
          {"max_output_tokens", params.max_output_tokens}}},
        {"raw_text", raw_text},
        {"timestamp", now_iso8601()},
    };
    out_ << j.dump() << '\n';
    out_.flush();
  }

  size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  static std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  mutable std::mutex mutex_;
  std::string path_;
  std::unordered_map<std::string, std::string> entries_;
  std::vector<std::string> warnings_;
  std::ofstream out_;
};

// Cache-through query path. Counters distinguish real backend calls from
// replayed ones, so replay runs can prove they issued zero new queries.
class QueryEngine {
 public:
  explicit QueryEngine(QueryCache* cache = nullptr) : cache_(cache) {}

  RawResponse query(Backend& backend, const PromptVariant& variant,
                    const DecodingParams& params) {
    RawResponse r;
    r.backend_id = backend.id();
    const std::string key =
        cache_ ? cache_key(variant, params, backend.id()) : std::string();
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        r.text = *hit;
        r.retrieved_from_cache = true;
        ++cache_hits_;
        return r;
      }
    }
    const auto start = std::chrono::steady_clock::now();
    r.text = backend.complete(variant, params);
    r.latency_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    ++backend_calls_;
    if (cache_) cache_->put(key, variant, params, backend.id(), r.text);
    return r;
  }

  std::uint64_t backend_calls() const { return backend_calls_; }
  std::uint64_t cache_hits() const { return cache_hits_; }

 private:
  QueryCache* cache_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
};

}  // namespace sway
