#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/common/error.hpp"

namespace gvgap::gateway {

using nlohmann::json;

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

using Messages = std::vector<ChatMessage>;

inline Messages user_message(std::string content) { return {ChatMessage{"user", std::move(content)}}; }

struct EndpointConfig {
  std::string alias;
  std::string base_url;
  std::string model;
  double temperature = 0.2;
  std::optional<std::string> reasoning_effort;
  std::optional<std::int64_t> seed;
  int max_in_flight = 4;
  /// Retries after the first attempt on 429, 5xx or a transport failure.
  int retry_budget = 4;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds backoff_initial{500};
  /// Environment variable holding the bearer token; empty for none.
  std::string api_key_env;
};

/// Throws PreconditionError when the config violates its invariants.
void validate(const EndpointConfig& cfg);

enum class Source { network, cache };

struct CompletionRecord {
  std::string request_hash;
  std::string model;
  std::string text;
  double latency_ms = 0.0;
  int attempts = 0;
  Source source = Source::network;
};

json to_json(const CompletionRecord& r);
CompletionRecord completion_from_json(const json& j);

/// Canonical request body hashed for the cache key. Includes the seed even
/// when the endpoint ignores it.
json canonical_request(const EndpointConfig& cfg, const Messages& messages);
std::string request_hash(const EndpointConfig& cfg, const Messages& messages);

/// The JSON body POSTed to /v1/chat/completions.
json wire_request(const EndpointConfig& cfg, const Messages& messages);

/// Extracts choices[0].message.content from a chat-completions response body.
std::string parse_wire_response(const std::string& body);

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status, int attempts)
      : Error(what), status_(status), attempts_(attempts) {}
  int status() const { return status_; }
  int attempts() const { return attempts_; }

 private:
  int status_;
  int attempts_;
};

class ReplayError : public Error {
 public:
  explicit ReplayError(const std::string& hash)
      : Error("replay miss: no cached completion for request " + hash), hash_(hash) {}
  const std::string& request_hash() const { return hash_; }

 private:
  std::string hash_;
};

struct HttpResponse {
  /// HTTP status, or -1 when the connection itself failed.
  int status = -1;
  std::string body;
};

/// Minimal POST-JSON transport so tests can inject in-process servers.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                                 const std::map<std::string, std::string>& headers,
                                 std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport (HTTP and HTTPS).
std::shared_ptr<Transport> make_http_transport();

/// Content-addressed completion cache, one subdirectory per model id,
/// records stored as JSONL segments. Safe for concurrent use.
class ResponseCache {
 public:
  /// An empty root gives a memory-only cache.
  explicit ResponseCache(std::filesystem::path root = {}, std::size_t segment_lines = 10000);

  std::optional<CompletionRecord> find(const std::string& model, const std::string& hash);
  void store(const CompletionRecord& record);
  std::size_t size() const;

 private:
  struct ModelShard {
    bool loaded = false;
    std::unordered_map<std::string, CompletionRecord> records;
    std::size_t segment = 0;
    std::size_t segment_fill = 0;
  };
  ModelShard& shard(const std::string& model);
  std::filesystem::path model_dir(const std::string& model) const;

  std::filesystem::path root_;
  std::size_t segment_lines_;
  mutable std::mutex mutex_;
  std::map<std::string, ModelShard> shards_;
};

enum class Mode { live, replay };

struct BatchItem {
  std::optional<CompletionRecord> record;
  std::optional<std::string> error;
  bool ok() const { return record.has_value(); }
};

class Gateway {
 public:
  Gateway(std::shared_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache, Mode mode = Mode::live);

  /// Cache first; in live mode a miss goes to the network with retries.
  CompletionRecord complete(const EndpointConfig& cfg, const Messages& messages);

  /// Results are ordered as the inputs; at most cfg.max_in_flight requests
  /// are outstanding; failures are reported per item.
  std::vector<BatchItem> complete_batch(const EndpointConfig& cfg, const std::vector<Messages>& batch);

  Mode mode() const { return mode_; }
  ResponseCache& cache() { return *cache_; }

 private:
  CompletionRecord fetch(const EndpointConfig& cfg, const Messages& messages, const std::string& hash);

  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  Mode mode_;
};

/// A callable view of one endpoint, used by modules that only need to ask a
/// model something.
class ChatModel {
 public:
  ChatModel(Gateway& gateway, EndpointConfig cfg) : gateway_(&gateway), cfg_(std::move(cfg)) {}
  CompletionRecord complete(const Messages& messages) { return gateway_->complete(cfg_, messages); }
  std::vector<BatchItem> complete_batch(const std::vector<Messages>& batch) {
    return gateway_->complete_batch(cfg_, batch);
  }
  const EndpointConfig& config() const { return cfg_; }

 private:
  Gateway* gateway_;
  EndpointConfig cfg_;
};

}  // namespace gvgap::gateway
