#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mmeval/gateway.hpp"
#include "mmeval/http_chat.hpp"

namespace mmeval {

/// Auxiliary language model used for extraction fallback and rubric
/// marking. Thread-safe; counts every attempt.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;

  std::string ask(const std::string& prompt) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return reply(prompt);
  }
  std::size_t calls() const { return calls_.load(std::memory_order_relaxed); }

 protected:
  virtual std::string reply(const std::string& prompt) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Raw judge reply under the gateway retry policy. A null judge is
/// PermanentFailure("NoJudge"); an empty reply is MalformedUpstreamReply.
std::string judge_complete(JudgeClient* judge, const std::string& prompt,
                           const RetryPolicy& policy = {}, RateLimiter* limiter = nullptr);

class HttpJudge : public JudgeClient {
 public:
  // Temperature is pinned to 0.
  explicit HttpJudge(HttpEndpoint endpoint);

 protected:
  std::string reply(const std::string& prompt) override;

 private:
  HttpEndpoint endpoint_;
};

class FunctionJudge : public JudgeClient {
 public:
  explicit FunctionJudge(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}

 protected:
  std::string reply(const std::string& prompt) override { return fn_(prompt); }

 private:
  std::function<std::string(const std::string&)> fn_;
};

/// Serves the given replies in order, repeating the last one.
class ScriptedJudge : public JudgeClient {
 public:
  explicit ScriptedJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {}

 protected:
  std::string reply(const std::string& prompt) override;

 private:
  std::mutex mu_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

}  // namespace mmeval
