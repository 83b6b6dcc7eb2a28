#include "gvgap/gateway/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "gvgap/common/hash.hpp"
#include "gvgap/common/jsonl.hpp"

namespace gvgap::gateway {

void validate(const EndpointConfig& cfg) {
  if (cfg.max_in_flight < 1) throw PreconditionError("endpoint " + cfg.alias + ": max_in_flight must be >= 1");
  if (cfg.temperature < 0.0) throw PreconditionError("endpoint " + cfg.alias + ": temperature must be >= 0");
  if (cfg.retry_budget < 0) throw PreconditionError("endpoint " + cfg.alias + ": retry_budget must be >= 0");
  if (cfg.model.empty()) throw PreconditionError("endpoint " + cfg.alias + ": model id is empty");
}

json to_json(const CompletionRecord& r) {
  return json{{"request_hash", r.request_hash}, {"model", r.model},       {"text", r.text},
              {"latency_ms", r.latency_ms},     {"attempts", r.attempts}, {"source", r.source == Source::cache ? "cache" : "network"}};
}

CompletionRecord completion_from_json(const json& j) {
  try {
    CompletionRecord r;
    r.request_hash = j.at("request_hash").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.latency_ms = j.value("latency_ms", 0.0);
    r.attempts = j.value("attempts", 1);
    r.source = j.value("source", "network") == "cache" ? Source::cache : Source::network;
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed completion record: ") + e.what());
  }
}

namespace {

json messages_json(const Messages& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

}  // namespace

json canonical_request(const EndpointConfig& cfg, const Messages& messages) {
  // Round-trip precision: distinct doubles never share a key.
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.17g", cfg.temperature);
  return json{{"model", cfg.model},
              {"messages", messages_json(messages)},
              {"temperature", temp},
              {"effort", cfg.reasoning_effort ? json(*cfg.reasoning_effort) : json(nullptr)},
              {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)}};
}

std::string request_hash(const EndpointConfig& cfg, const Messages& messages) {
  return sha256_hex(canonical_request(cfg, messages).dump());
}

json wire_request(const EndpointConfig& cfg, const Messages& messages) {
  json body{{"model", cfg.model}, {"messages", messages_json(messages)}, {"temperature", cfg.temperature}};
  if (cfg.reasoning_effort) body["reasoning_effort"] = *cfg.reasoning_effort;
  if (cfg.seed) body["seed"] = *cfg.seed;
  return body;
}

std::string parse_wire_response(const std::string& body) {
  try {
    const json j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed chat-completions response: ") + e.what());
  }
}

// ---------------------------------------------------------------- cache

ResponseCache::ResponseCache(std::filesystem::path root, std::size_t segment_lines)
    : root_(std::move(root)), segment_lines_(std::max<std::size_t>(1, segment_lines)) {}

std::filesystem::path ResponseCache::model_dir(const std::string& model) const {
  std::string safe;
  for (char c : model) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    safe += ok ? c : '_';
  }
  return root_ / safe;
}

ResponseCache::ModelShard& ResponseCache::shard(const std::string& model) {
  ModelShard& s = shards_[model];
  if (s.loaded || root_.empty()) {
    s.loaded = true;
    return s;
  }
  s.loaded = true;
  const auto dir = model_dir(model);
  if (!std::filesystem::exists(dir)) return s;
  std::vector<std::filesystem::path> segments;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") segments.push_back(entry.path());
  }
  std::sort(segments.begin(), segments.end());
  for (const auto& seg : segments) {
    std::size_t lines = 0;
    for (const auto& row : read_jsonl(seg)) {
      auto rec = completion_from_json(row);
      s.records.emplace(rec.request_hash, std::move(rec));
      ++lines;
    }
    s.segment_fill = lines;
  }
  if (!segments.empty()) {
    s.segment = segments.size() - 1;
    if (s.segment_fill >= segment_lines_) {
      ++s.segment;
      s.segment_fill = 0;
    }
  }
  return s;
}

std::optional<CompletionRecord> ResponseCache::find(const std::string& model, const std::string& hash) {
  std::lock_guard lock(mutex_);
  auto& s = shard(model);
  const auto it = s.records.find(hash);
  if (it == s.records.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const CompletionRecord& record) {
  std::lock_guard lock(mutex_);
  auto& s = shard(record.model);
  if (!s.records.emplace(record.request_hash, record).second) return;
  if (root_.empty()) return;
  char name[32];
  std::snprintf(name, sizeof name, "segment-%04zu.jsonl", s.segment);
  CompletionRecord stored = record;
  stored.source = Source::network;
  append_jsonl(model_dir(record.model) / name, to_json(stored));
  if (++s.segment_fill >= segment_lines_) {
    ++s.segment;
    s.segment_fill = 0;
  }
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, s] : shards_) n += s.records.size();
  return n;
}

// -------------------------------------------------------------- gateway

Gateway::Gateway(std::shared_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache, Mode mode)
    : transport_(std::move(transport)), cache_(std::move(cache)), mode_(mode) {
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
}

CompletionRecord Gateway::complete(const EndpointConfig& cfg, const Messages& messages) {
  validate(cfg);
  const std::string hash = request_hash(cfg, messages);
  if (auto hit = cache_->find(cfg.model, hash)) {
    hit->source = Source::cache;
    return *hit;
  }
  if (mode_ == Mode::replay) throw ReplayError(hash);
  auto record = fetch(cfg, messages, hash);
  cache_->store(record);
  return record;
}

namespace {

bool retryable(int status) { return status == -1 || status == 429 || (status >= 500 && status <= 599); }

}  // namespace

CompletionRecord Gateway::fetch(const EndpointConfig& cfg, const Messages& messages, const std::string& hash) {
  if (!transport_) throw TransportError("no transport configured for endpoint " + cfg.alias, -1, 0);
  std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  const std::string body = wire_request(cfg, messages).dump();
  const auto start = std::chrono::steady_clock::now();
  auto backoff = cfg.backoff_initial;
  int last_status = -1;
  std::string last_body;
  const int max_attempts = 1 + cfg.retry_budget;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    HttpResponse resp = transport_->post_json(cfg.base_url, "/v1/chat/completions", body, headers, cfg.timeout);
    last_status = resp.status;
    last_body = std::move(resp.body);
    if (last_status >= 200 && last_status < 300) {
      CompletionRecord r;
      r.request_hash = hash;
      r.model = cfg.model;
      r.text = parse_wire_response(last_body);
      r.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      r.attempts = attempt;
      r.source = Source::network;
      return r;
    }
    if (!retryable(last_status)) {
      throw TransportError("endpoint " + cfg.alias + " returned HTTP " + std::to_string(last_status) + ": " +
                               last_body.substr(0, 200),
                           last_status, attempt);
    }
    if (attempt < max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError("endpoint " + cfg.alias + ": retry budget exhausted after " + std::to_string(max_attempts) +
                           " attempts (last status " + std::to_string(last_status) + ")",
                       last_status, max_attempts);
}

std::vector<BatchItem> Gateway::complete_batch(const EndpointConfig& cfg, const std::vector<Messages>& batch) {
  validate(cfg);
  std::vector<BatchItem> results(batch.size());
  if (batch.empty()) return results;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1)) {
      try {
        results[i].record = complete(cfg, batch[i]);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), batch.size());
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  return results;
}

}  // namespace gvgap::gateway
