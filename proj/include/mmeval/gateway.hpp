#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mmeval/dataset.hpp"
#include "mmeval/message.hpp"

namespace mmeval {

// Every upstream outcome is either a response string or exactly one of these.
enum class FailureKind { Transient, Permanent, Malformed, BudgetExhausted };

std::string_view to_string(FailureKind kind);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(FailureKind kind, std::string detail, int attempts = 1);

  FailureKind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  const std::string& detail() const { return detail_; }
  // Short tag stored in logs, e.g. "PermanentFailure: http 401".
  std::string tag() const;

 private:
  FailureKind kind_;
  std::string detail_;
  int attempts_;
};

struct AdapterCapabilities {
  std::string name;
  bool supports_interleave = true;
  std::optional<std::size_t> max_images;  // nullopt = unlimited
};

struct GenerationParams {
  int max_new_tokens = 1024;
  double temperature = 0.0;
};

struct GenerateRequest {
  MultiModalMessage message;
  std::string dataset_name;
  std::int64_t sample_index = 0;
  int variant_id = 0;
  GenerationParams params;
};

struct GenerateResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  int attempt_count = 0;
};

/// Uniform boundary in front of every model. Implementations must be safe
/// to call from several worker threads at once.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;

  virtual const AdapterCapabilities& capabilities() const = 0;

  /// One upstream attempt on an already-adapted request. Failures are
  /// reported by throwing GatewayError with Transient, Permanent or
  /// Malformed.
  virtual std::string call(const GenerateRequest& request) = 0;

  /// Optional per-benchmark prompt override.
  virtual std::optional<MultiModalMessage> build_prompt(const BenchmarkRecord& /*record*/,
                                                        QuestionType /*type*/,
                                                        std::string_view /*dataset_name*/) const {
    return std::nullopt;
  }
};

/// Applies the adapter's image limits: non-interleaving adapters get the
/// single-image degradation, otherwise images past max_images are dropped.
MultiModalMessage prepare_for_dispatch(const MultiModalMessage& message,
                                       const AdapterCapabilities& caps);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30'000};
};

/// Full-jitter exponential backoff: uniform in [0, min(max, base * 2^(n-1))].
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int failed_attempts);

/// Token bucket shared by all workers of one adapter.
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, double burst = 1.0);

  void acquire();

 private:
  using Clock = std::chrono::steady_clock;

  std::mutex mu_;
  double per_second_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

/// Adapts the message to the adapter's capabilities, dispatches with retry
/// and returns the response text verbatim.
GenerateResponse generate(ModelAdapter& adapter, const GenerateRequest& request,
                          const RetryPolicy& policy = {}, RateLimiter* limiter = nullptr);

namespace detail {
void sleep_for(std::chrono::milliseconds delay);
}

/// Runs `attempt` under the retry policy. Only Transient failures are
/// retried; running out of attempts raises BudgetExhausted. `attempts` is
/// set to the number of tries made (also on failure).
template <typename Fn>
auto with_retry(const RetryPolicy& policy, RateLimiter* limiter, int& attempts, Fn&& attempt) {
  attempts = 0;
  const int budget = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  while (true) {
    if (limiter) limiter->acquire();
    ++attempts;
    try {
      return attempt();
    } catch (const GatewayError& e) {
      if (e.kind() != FailureKind::Transient) {
        throw GatewayError(e.kind(), e.detail(), attempts);
      }
      if (attempts >= budget) {
        throw GatewayError(FailureKind::BudgetExhausted,
                           e.detail() + " after " + std::to_string(attempts) + " attempts",
                           attempts);
      }
      detail::sleep_for(backoff_delay(policy, attempts));
    }
  }
}

}  // namespace mmeval
