#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "gvgap/gateway/gateway.hpp"

namespace fs = std::filesystem;
using namespace gvgap;
using namespace gvgap::gateway;

namespace {

std::string reply_body(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

// Replies from a script of statuses; the last entry repeats.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<int> statuses) : statuses_(std::move(statuses)) {}
  HttpResponse post_json(const std::string&, const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>&, std::chrono::milliseconds) override {
    const int now = ++in_flight_;
    int prev = max_in_flight_.load();
    while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    --in_flight_;
    std::lock_guard lock(mu_);
    last_path = path;
    last_body = body;
    const int status = statuses_[std::min(calls, statuses_.size() - 1)];
    ++calls;
    const std::string content = json::parse(body)["messages"][0]["content"].get<std::string>();
    return {status, status == 200 ? reply_body("echo:" + content) : "{\"error\":\"x\"}"};
  }

  std::size_t calls = 0;
  int delay_ms = 0;
  std::string last_path, last_body;
  std::atomic<int> max_in_flight_{0};

 private:
  std::vector<int> statuses_;
  std::atomic<int> in_flight_{0};
  std::mutex mu_;
};

EndpointConfig cfg(const std::string& model = "subject-a") {
  EndpointConfig c;
  c.alias = "test";
  c.base_url = "http://unused";
  c.model = model;
  c.backoff_initial = std::chrono::milliseconds(1);
  return c;
}

}  // namespace

TEST(Gateway, RetriesOn429And5xxThenSucceeds) {
  auto t = std::make_shared<ScriptedTransport>(std::vector<int>{429, 503, 200});
  Gateway gw(t, nullptr);
  const auto r = gw.complete(cfg(), user_message("hi"));
  EXPECT_EQ(r.text, "echo:hi");
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(t->calls, 3u);
  EXPECT_EQ(t->last_path, "/v1/chat/completions");
}

TEST(Gateway, ClientErrorFailsImmediately) {
  auto t = std::make_shared<ScriptedTransport>(std::vector<int>{400});
  Gateway gw(t, nullptr);
  try {
    gw.complete(cfg(), user_message("hi"));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_EQ(e.attempts(), 1);
  }
}

TEST(Gateway, RetryBudgetExhausted) {
  auto t = std::make_shared<ScriptedTransport>(std::vector<int>{500});
  Gateway gw(t, nullptr);
  auto c = cfg();
  c.retry_budget = 2;
  try {
    gw.complete(c, user_message("hi"));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(t->calls, 3u);
}

TEST(Gateway, CacheHitSkipsNetworkAndReplayReadsDisk) {
  const auto dir = fs::temp_directory_path() / "gvgap_cache_test";
  fs::remove_all(dir);
  auto t = std::make_shared<ScriptedTransport>(std::vector<int>{200});
  {
    Gateway gw(t, std::make_shared<ResponseCache>(dir, 2));
    for (const char* m : {"a", "b", "c"}) gw.complete(cfg(), user_message(m));
    const auto again = gw.complete(cfg(), user_message("a"));
    EXPECT_EQ(again.source, Source::cache);
    EXPECT_EQ(t->calls, 3u);
  }
  // Segments rolled over at two lines.
  EXPECT_TRUE(fs::exists(dir / "subject-a" / "segment-0000.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "subject-a" / "segment-0001.jsonl"));

  Gateway replay(nullptr, std::make_shared<ResponseCache>(dir), Mode::replay);
  EXPECT_EQ(replay.complete(cfg(), user_message("c")).text, "echo:c");
  try {
    replay.complete(cfg(), user_message("never asked"));
    FAIL();
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.request_hash(), request_hash(cfg(), user_message("never asked")));
  }
  // Same prompt, different model: separate key.
  EXPECT_THROW(replay.complete(cfg("subject-b"), user_message("c")), ReplayError);
  fs::remove_all(dir);
}

TEST(Gateway, HashCoversSamplingParameters) {
  auto a = cfg(), b = cfg();
  const auto m = user_message("x");
  EXPECT_EQ(request_hash(a, m), request_hash(b, m));
  b.temperature = 0.2000000001;
  EXPECT_NE(request_hash(a, m), request_hash(b, m));
  b = cfg();
  b.seed = 1;
  EXPECT_NE(request_hash(a, m), request_hash(b, m));
  b = cfg();
  b.reasoning_effort = "low";
  EXPECT_NE(request_hash(a, m), request_hash(b, m));
  b = cfg();
  b.alias = "other-alias";
  EXPECT_EQ(request_hash(a, m), request_hash(b, m));
}

TEST(Gateway, WireRequestShape) {
  auto c = cfg();
  c.seed = 5;
  const auto w = wire_request(c, user_message("q"));
  EXPECT_EQ(w["model"], "subject-a");
  EXPECT_EQ(w["messages"][0]["role"], "user");
  EXPECT_EQ(w["seed"], 5);
  EXPECT_FALSE(w.contains("reasoning_effort"));
  EXPECT_THROW(parse_wire_response("{\"choices\":[]}"), ParseError);
}

TEST(Gateway, BatchIsOrderedAndBounded) {
  auto t = std::make_shared<ScriptedTransport>(std::vector<int>{200});
  t->delay_ms = 5;
  Gateway gw(t, nullptr);
  auto c = cfg();
  c.max_in_flight = 3;
  std::vector<Messages> batch;
  for (int i = 0; i < 20; ++i) batch.push_back(user_message("m" + std::to_string(i)));
  const auto out = gw.complete_batch(c, batch);
  ASSERT_EQ(out.size(), 20u);
  for (int i = 0; i < 20; ++i) {
    ASSERT_TRUE(out[i].ok());
    EXPECT_EQ(out[i].record->text, "echo:m" + std::to_string(i));
  }
  EXPECT_LE(t->max_in_flight_.load(), 3);
}

TEST(Gateway, ConfigValidation) {
  auto c = cfg();
  c.max_in_flight = 0;
  EXPECT_THROW(validate(c), PreconditionError);
  c = cfg();
  c.model.clear();
  EXPECT_THROW(validate(c), PreconditionError);
}

TEST(HttpTransport, RetriesAgainstLocalServer) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth;
  server.Post("/api/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    if (++hits <= 2) {
      res.status = 429;
      res.set_content("{\"error\":\"slow down\"}", "application/json");
      return;
    }
    res.set_content(reply_body("ok"), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("GVGAP_TEST_KEY", "sekret", 1);
  auto c = cfg();
  c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/api/v1";
  c.api_key_env = "GVGAP_TEST_KEY";
  Gateway gw(make_http_transport(), nullptr);
  CompletionRecord r;
  std::string error;
  try {
    r = gw.complete(c, user_message("hello"));
  } catch (const std::exception& e) {
    error = e.what();
  }
  server.stop();
  th.join();
  ASSERT_EQ(error, "");
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(hits.load(), 3);
  EXPECT_EQ(seen_auth, "Bearer sekret");
}

TEST(HttpTransport, ConnectionFailureIsRetryableThenFails) {
  auto c = cfg();
  c.base_url = "http://127.0.0.1:1";
  c.retry_budget = 1;
  c.timeout = std::chrono::milliseconds(200);
  Gateway gw(make_http_transport(), nullptr);
  try {
    gw.complete(c, user_message("x"));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.status(), -1);
    EXPECT_EQ(e.attempts(), 2);
  }
}
