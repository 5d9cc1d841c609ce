#include "mmeval/judge.hpp"

namespace mmeval {

std::string judge_complete(JudgeClient* judge, const std::string& prompt,
                           const RetryPolicy& policy, RateLimiter* limiter) {
  if (!judge) throw GatewayError(FailureKind::Permanent, "NoJudge", 0);
  int attempts = 0;
  return with_retry(policy, limiter, attempts, [&] {
    std::string reply = judge->ask(prompt);
    if (reply.empty()) throw GatewayError(FailureKind::Malformed, "empty judge reply");
    return reply;
  });
}

HttpJudge::HttpJudge(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string HttpJudge::reply(const std::string& prompt) {
  const MultiModalMessage message({ContentSegment::text(prompt)});
  GenerationParams params;
  params.temperature = 0.0;
  params.max_new_tokens = 64;
  return parse_chat_reply(http_post_json(endpoint_, build_chat_payload(message, endpoint_.model, params)));
}

std::string ScriptedJudge::reply(const std::string&) {
  std::lock_guard lock(mu_);
  if (replies_.empty()) return {};
  const auto& r = replies_[std::min(next_, replies_.size() - 1)];
  ++next_;
  return r;
}

}  // namespace mmeval
