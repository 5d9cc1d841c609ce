#include "mmeval/gateway.hpp"

#include <algorithm>
#include <random>
#include <thread>

namespace mmeval {

std::string_view to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::Transient: return "TransientFailure";
    case FailureKind::Permanent: return "PermanentFailure";
    case FailureKind::Malformed: return "MalformedUpstreamReply";
    case FailureKind::BudgetExhausted: return "BudgetExhausted";
  }
  return "?";
}

GatewayError::GatewayError(FailureKind kind, std::string detail, int attempts)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
      kind_(kind),
      detail_(std::move(detail)),
      attempts_(attempts) {}

std::string GatewayError::tag() const { return std::string(to_string(kind_)) + ": " + detail_; }

MultiModalMessage prepare_for_dispatch(const MultiModalMessage& message,
                                       const AdapterCapabilities& caps) {
  const std::size_t images = message.count(Modality::Image);
  const bool over_limit = caps.max_images && images > *caps.max_images;
  if (!caps.supports_interleave || (over_limit && *caps.max_images <= 1)) {
    auto degraded = degrade_to_single_image(message);
    if (caps.max_images && *caps.max_images == 0) return limit_images(degraded, 0);
    return degraded;
  }
  if (over_limit) return limit_images(message, *caps.max_images);
  return message;
}

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int failed_attempts) {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const int shift = std::clamp(failed_attempts - 1, 0, 30);
  const auto cap = std::min<std::int64_t>(policy.max_delay.count(),
                                          policy.base_delay.count() * (std::int64_t{1} << shift));
  if (cap <= 0) return std::chrono::milliseconds{0};
  std::uniform_int_distribution<std::int64_t> dist(0, cap);
  return std::chrono::milliseconds{dist(rng)};
}

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : per_second_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(Clock::now()) {
  if (!(requests_per_minute > 0.0)) {
    throw std::invalid_argument("rate limit must be positive");
  }
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  while (true) {
    const auto now = Clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * per_second_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait_s = (1.0 - tokens_) / per_second_;
    // Sleeping with the lock held queues callers in arrival order.
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

namespace detail {
void sleep_for(std::chrono::milliseconds delay) {
  if (delay.count() > 0) std::this_thread::sleep_for(delay);
}
}  // namespace detail

GenerateResponse generate(ModelAdapter& adapter, const GenerateRequest& request,
                          const RetryPolicy& policy, RateLimiter* limiter) {
  GenerateRequest dispatched{prepare_for_dispatch(request.message, adapter.capabilities()),
                             request.dataset_name, request.sample_index, request.variant_id,
                             request.params};
  const auto start = std::chrono::steady_clock::now();
  GenerateResponse response;
  response.text = with_retry(policy, limiter, response.attempt_count,
                             [&] { return adapter.call(dispatched); });
  response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return response;
}

}  // namespace mmeval
