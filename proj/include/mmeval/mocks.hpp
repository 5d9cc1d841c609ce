#pragma once

// Deterministic adapters for offline runs and tests. Responses depend only
// on the request, never on call order, so results are independent of the
// worker count.

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>

#include "mmeval/dataset.hpp"
#include "mmeval/gateway.hpp"

namespace mmeval {

/// Option lines (`<L>. <text>`) found in a prompt, in label order.
ChoiceMap parse_option_lines(std::string_view prompt);

/// Concatenated TEXT segments of a message.
std::string message_text(const MultiModalMessage& message);

class EchoAdapter : public ModelAdapter {
 public:
  EchoAdapter() : caps_{"echo", true, std::nullopt} {}
  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override;

 private:
  AdapterCapabilities caps_;
};

/// Knows the gold answers. For MCQ it looks up the option line holding the
/// gold option text, so rotated variants are answered correctly too.
class OracleAdapter : public ModelAdapter {
 public:
  explicit OracleAdapter(std::span<const BenchmarkRecord> records, std::string name = "oracle");
  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override;

 protected:
  // Gold label (MCQ) or answer text for the request; also the 1-based
  // option position for MCQ (0 otherwise).
  std::pair<std::string, std::size_t> gold_for(const GenerateRequest& request) const;

 private:
  AdapterCapabilities caps_;
  std::map<std::int64_t, BenchmarkRecord> records_;
};

/// Gold answer wrapped in prose that defeats exact matching.
class VerboseOracleAdapter : public OracleAdapter {
 public:
  explicit VerboseOracleAdapter(std::span<const BenchmarkRecord> records)
      : OracleAdapter(records, "verbose-oracle") {}
  std::string call(const GenerateRequest& request) override;
};

/// Uniform guess over the option labels in the prompt (Yes/No for Y/N
/// prompts). The draw is a hash of (seed, dataset, sample, prompt text).
class UniformRandomAdapter : public ModelAdapter {
 public:
  explicit UniformRandomAdapter(std::uint64_t seed);
  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override;

 private:
  AdapterCapabilities caps_;
  std::uint64_t seed_;
};

/// Serves responses recorded in a predictions.jsonl file. Missing entries and
/// recorded failures are Permanent errors.
class ReplayAdapter : public ModelAdapter {
 public:
  explicit ReplayAdapter(const std::filesystem::path& predictions, std::string name = "replay");
  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override;

 private:
  AdapterCapabilities caps_;
  std::map<std::tuple<std::string, std::int64_t, int>, std::optional<std::string>> responses_;
};

/// Wraps a callable; handy for scripted failure sequences in tests.
class FunctionAdapter : public ModelAdapter {
 public:
  FunctionAdapter(AdapterCapabilities caps, std::function<std::string(const GenerateRequest&)> fn)
      : caps_(std::move(caps)), fn_(std::move(fn)) {}
  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override { return fn_(request); }

 private:
  AdapterCapabilities caps_;
  std::function<std::string(const GenerateRequest&)> fn_;
};

/// Counts calls made through it.
class CountingAdapter : public ModelAdapter {
 public:
  explicit CountingAdapter(ModelAdapter& inner) : inner_(inner) {}
  const AdapterCapabilities& capabilities() const override { return inner_.capabilities(); }
  std::string call(const GenerateRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.call(request);
  }
  std::optional<MultiModalMessage> build_prompt(const BenchmarkRecord& record, QuestionType type,
                                                std::string_view dataset) const override {
    return inner_.build_prompt(record, type, dataset);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  ModelAdapter& inner_;
  std::atomic<std::size_t> calls_{0};
};

/// Directory-safe adapter name for a mock spec: `echo`, `oracle`,
/// `verbose-oracle`, `uniform-random:<seed>`, `replay:<path>`.
std::string mock_name(std::string_view spec);
bool is_mock_spec(std::string_view spec);

/// Builds a mock from its spec. `records` feeds the oracles.
std::unique_ptr<ModelAdapter> make_mock_adapter(std::string_view spec,
                                                std::span<const BenchmarkRecord> records);

}  // namespace mmeval
