#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mmeval/http_chat.hpp"
#include "mmeval/judge.hpp"

using namespace mmeval;
using nlohmann::json;

namespace {

// Loopback chat server replying with a scripted sequence of (status, body).
class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      requests_.push_back(json::parse(req.body));
      auth_.push_back(req.get_header_value("Authorization"));
      auto [status, body] = script_.size() > 1 ? script_.front() : script_.back();
      if (script_.size() > 1) script_.pop_front();
      res.status = status;
      res.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  void script(std::deque<std::pair<int, std::string>> s) {
    std::lock_guard lock(mu_);
    script_ = std::move(s);
  }
  std::vector<json> requests() {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::vector<std::string> auth() {
    std::lock_guard lock(mu_);
    return auth_;
  }
  HttpEndpoint endpoint() const {
    HttpEndpoint e;
    e.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    e.model = "stub-model";
    e.api_key_env = "MMEVAL_TEST_UNSET_KEY";
    e.timeout = std::chrono::milliseconds(5000);
    return e;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::deque<std::pair<int, std::string>> script_{{200, "{}"}};
  std::vector<json> requests_;
  std::vector<std::string> auth_;
};

std::string reply(const std::string& content) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

RetryPolicy fast(int attempts) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.base_delay = std::chrono::milliseconds(1);
  p.max_delay = std::chrono::milliseconds(5);
  return p;
}

GenerateRequest request(std::size_t images) {
  std::vector<ContentSegment> segs;
  for (std::size_t i = 0; i < images; ++i) segs.push_back(ContentSegment::image("aW1hZ2U="));
  segs.push_back(ContentSegment::text("Which option?"));
  return GenerateRequest{MultiModalMessage(segs), "MMBench", 3, 0, {}};
}

std::size_t image_parts(const json& payload) {
  std::size_t n = 0;
  for (const auto& part : payload.at("messages").at(0).at("content")) n += part.at("type") == "image_url";
  return n;
}

}  // namespace

TEST(HttpChat, FixedReply) {
  StubServer server;
  server.script({{200, reply("B")}});
  HttpChatAdapter adapter(server.endpoint(), {"stub", true, std::nullopt});
  const auto r = generate(adapter, request(1), fast(5));
  EXPECT_EQ(r.text, "B");
  EXPECT_EQ(r.attempt_count, 1);

  const auto sent = server.requests().at(0);
  EXPECT_EQ(sent.at("model"), "stub-model");
  EXPECT_EQ(sent.at("temperature"), 0);
  EXPECT_EQ(sent.at("metadata").at("dataset_name"), "MMBench");
  EXPECT_EQ(sent.at("messages").at(0).at("content").at(0).at("image_url").at("url"),
            "data:image/png;base64,aW1hZ2U=");
  EXPECT_EQ(server.auth().at(0), "");
}

TEST(HttpChat, ResponseTextIsVerbatim) {
  StubServer server;
  server.script({{200, reply("  B\n")}});
  HttpChatAdapter adapter(server.endpoint(), {"stub", true, std::nullopt});
  EXPECT_EQ(generate(adapter, request(0), fast(5)).text, "  B\n");
}

TEST(HttpChat, RetriesThrough429) {
  StubServer server;
  server.script({{429, "{}"}, {429, "{}"}, {200, reply("C")}});
  HttpChatAdapter adapter(server.endpoint(), {"stub", true, std::nullopt});
  const auto r = generate(adapter, request(1), fast(3));
  EXPECT_EQ(r.text, "C");
  EXPECT_EQ(r.attempt_count, 3);
  EXPECT_EQ(server.requests().size(), 3u);
}

TEST(HttpChat, UnauthorizedIsPermanentWithoutRetry) {
  StubServer server;
  server.script({{401, "{\"error\":\"bad key\"}"}});
  HttpChatAdapter adapter(server.endpoint(), {"stub", true, std::nullopt});
  try {
    generate(adapter, request(1), fast(5));
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), FailureKind::Permanent);
    EXPECT_EQ(e.attempts(), 1);
  }
  EXPECT_EQ(server.requests().size(), 1u);
}

TEST(HttpChat, MalformedReply) {
  StubServer server;
  server.script({{200, "{\"choices\": []}"}});
  HttpChatAdapter adapter(server.endpoint(), {"stub", true, std::nullopt});
  try {
    generate(adapter, request(0), fast(5));
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), FailureKind::Malformed);
  }
  EXPECT_EQ(server.requests().size(), 1u);
}

TEST(HttpChat, MaxImagesOneSendsExactlyOneImage) {
  StubServer server;
  server.script({{200, reply("A")}});
  HttpChatAdapter adapter(server.endpoint(), {"single", true, 1});
  generate(adapter, request(3), fast(1));
  EXPECT_EQ(image_parts(server.requests().at(0)), 1u);
}

TEST(HttpChat, ConnectionRefusedIsTransient) {
  HttpEndpoint e;
  e.url = "http://127.0.0.1:1/v1/chat/completions";
  e.timeout = std::chrono::milliseconds(500);
  HttpChatAdapter adapter(e, {"dead", true, std::nullopt});
  try {
    generate(adapter, request(0), fast(2));
    FAIL();
  } catch (const GatewayError& e2) {
    EXPECT_EQ(e2.kind(), FailureKind::BudgetExhausted);
    EXPECT_EQ(e2.attempts(), 2);
  }
}

TEST(HttpChat, BearerTokenComesFromEnvironment) {
  StubServer server;
  server.script({{200, reply("A")}});
  auto endpoint = server.endpoint();
  endpoint.api_key_env = "MMEVAL_TEST_KEY";
  ::setenv("MMEVAL_TEST_KEY", "sekrit", 1);
  HttpChatAdapter adapter(endpoint, {"stub", true, std::nullopt});
  generate(adapter, request(0), fast(1));
  ::unsetenv("MMEVAL_TEST_KEY");
  EXPECT_EQ(server.auth().at(0), "Bearer sekrit");
}

TEST(HttpChat, StatusTaxonomy) {
  EXPECT_EQ(classify_http_status(429), FailureKind::Transient);
  EXPECT_EQ(classify_http_status(503), FailureKind::Transient);
  EXPECT_EQ(classify_http_status(408), FailureKind::Transient);
  EXPECT_EQ(classify_http_status(400), FailureKind::Permanent);
  EXPECT_EQ(classify_http_status(403), FailureKind::Permanent);
  EXPECT_EQ(classify_http_status(302), FailureKind::Malformed);
}

TEST(HttpJudge, UsesTemperatureZero) {
  StubServer server;
  server.script({{200, reply("B")}});
  HttpJudge judge(server.endpoint());
  EXPECT_EQ(judge_complete(&judge, "closest option?"), "B");
  EXPECT_EQ(server.requests().at(0).at("temperature"), 0);
}
