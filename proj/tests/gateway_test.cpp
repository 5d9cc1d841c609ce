#include <gtest/gtest.h>

#include <thread>

#include "mmeval/gateway.hpp"
#include "mmeval/judge.hpp"
#include "mmeval/mocks.hpp"
#include "mmeval/evaluation.hpp"
#include "support.hpp"

using namespace mmeval;
using mmeval::fixtures::data_path;

namespace {

const std::string kImg = "aW1hZ2U=";

MultiModalMessage three_images() {
  return MultiModalMessage({ContentSegment::image(kImg), ContentSegment::text("look"),
                            ContentSegment::image("aW1hZ2Uy"), ContentSegment::image("aW1hZ2Uz"),
                            ContentSegment::text("answer")});
}

RetryPolicy fast_policy(int attempts = 5) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.base_delay = std::chrono::milliseconds(0);
  p.max_delay = std::chrono::milliseconds(0);
  return p;
}

GenerateRequest request(MultiModalMessage m, std::int64_t index = 0) {
  return GenerateRequest{std::move(m), "bench", index, 0, {}};
}

}  // namespace

TEST(PrepareForDispatch, NonInterleavingAdapterGetsDegradedMessage) {
  AdapterCapabilities caps{"single", false, std::nullopt};
  const auto out = prepare_for_dispatch(three_images(), caps);
  EXPECT_EQ(out, degrade_to_single_image(three_images()));
}

TEST(PrepareForDispatch, ImageLimits) {
  EXPECT_EQ(prepare_for_dispatch(three_images(), {"x", true, 2}).count(Modality::Image), 2u);
  EXPECT_EQ(prepare_for_dispatch(three_images(), {"x", true, 1}), degrade_to_single_image(three_images()));
  EXPECT_EQ(prepare_for_dispatch(three_images(), {"x", true, 0}).count(Modality::Image), 0u);
  EXPECT_EQ(prepare_for_dispatch(three_images(), {"x", true, std::nullopt}), three_images());
}

TEST(Generate, EchoReturnsFlattenedPromptVerbatim) {
  EchoAdapter echo;
  const auto m = MultiModalMessage({ContentSegment::image(kImg), ContentSegment::text("  q  ")});
  const auto r = generate(echo, request(m));
  EXPECT_EQ(r.text, render_text_only(m));
  EXPECT_EQ(r.attempt_count, 1);
}

TEST(Generate, RetriesTransientOnly) {
  int calls = 0;
  FunctionAdapter flaky({"flaky", true, std::nullopt}, [&](const GenerateRequest&) -> std::string {
    if (++calls < 3) throw GatewayError(FailureKind::Transient, "http 429");
    return "ok";
  });
  const auto r = generate(flaky, request(three_images()), fast_policy());
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.attempt_count, 3);

  calls = 0;
  FunctionAdapter denied({"denied", true, std::nullopt}, [&](const GenerateRequest&) -> std::string {
    ++calls;
    throw GatewayError(FailureKind::Permanent, "http 401");
  });
  try {
    generate(denied, request(three_images()), fast_policy());
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), FailureKind::Permanent);
    EXPECT_EQ(e.attempts(), 1);
    EXPECT_EQ(e.tag(), "PermanentFailure: http 401");
  }
  EXPECT_EQ(calls, 1);
}

TEST(Generate, BudgetExhausted) {
  int calls = 0;
  FunctionAdapter down({"down", true, std::nullopt}, [&](const GenerateRequest&) -> std::string {
    ++calls;
    throw GatewayError(FailureKind::Transient, "http 503");
  });
  try {
    generate(down, request(three_images()), fast_policy(4));
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), FailureKind::BudgetExhausted);
    EXPECT_EQ(e.attempts(), 4);
  }
  EXPECT_EQ(calls, 4);
}

TEST(Generate, NeverMutatesRequestAndMocksAreDeterministic) {
  const auto records = load_benchmark(data_path("mcq_fixture.tsv"));
  UniformRandomAdapter random(7);
  for (const auto& r : records) {
    const auto req = request(build_default_prompt(r, QuestionType::Mcq), r.index);
    const auto copy = req.message;
    const auto first = generate(random, req).text;
    EXPECT_EQ(req.message, copy);
    EXPECT_EQ(generate(random, req).text, first);
  }
}

TEST(Backoff, FullJitterWithinCap) {
  RetryPolicy p;
  for (int n = 1; n < 12; ++n) {
    for (int i = 0; i < 50; ++i) {
      const auto d = backoff_delay(p, n);
      const auto cap = std::min<long long>(p.max_delay.count(), p.base_delay.count() << (n - 1));
      ASSERT_GE(d.count(), 0);
      ASSERT_LE(d.count(), cap);
    }
  }
}

TEST(RateLimiter, SpacesRequests) {
  RateLimiter limiter(600.0);  // 10 per second, burst 1
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) limiter.acquire();
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_GE(elapsed, std::chrono::milliseconds(280));
}

TEST(RateLimiter, SafeAcrossThreads) {
  RateLimiter limiter(60'000.0, 5);
  std::vector<std::thread> threads;
  std::atomic<int> acquired{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 25; ++i) {
        limiter.acquire();
        ++acquired;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(acquired.load(), 100);
}

TEST(Mocks, OracleAnswersGoldEvenWhenRotated) {
  const auto records = load_benchmark(data_path("mcq_fixture.tsv"));
  OracleAdapter oracle(records);
  for (const auto& r : records) {
    EXPECT_EQ(generate(oracle, request(build_default_prompt(r, QuestionType::Mcq), r.index)).text, r.answer());
    for (const auto& v : circular_expand(r)) {
      auto rotated = record_for_variant(r, v.variant_id);
      GenerateRequest req{build_default_prompt(rotated, QuestionType::Mcq), "bench", r.index, v.variant_id, {}};
      EXPECT_EQ(oracle.call(req), std::string(1, v.rotated_gold));
    }
  }
}

TEST(Mocks, VerboseOracleDefeatsExactMatch) {
  const auto records = load_benchmark(data_path("mcq_fixture.tsv"));
  VerboseOracleAdapter verbose(records);
  for (const auto& r : records) {
    const auto text = verbose.call(request(build_default_prompt(r, QuestionType::Mcq), r.index));
    EXPECT_FALSE(exact_match_extract(text, r.choices).has_value()) << text;
  }
}

TEST(Mocks, UniformRandomAnswersYesNoPrompts) {
  BenchmarkRecord r;
  r.question = "Is it raining?";
  r.answers = {"Yes"};
  UniformRandomAdapter random(1);
  std::set<std::string> seen;
  for (int i = 0; i < 40; ++i) seen.insert(random.call(request(build_default_prompt(r, QuestionType::YesNo), i)));
  EXPECT_EQ(seen, (std::set<std::string>{"Yes", "No"}));
}

TEST(Mocks, ReplayServesRecordedResponses) {
  fixtures::TempDir dir;
  fixtures::write_text(dir / "p.jsonl",
                      "{\"sample_index\":0,\"variant_id\":0,\"model\":\"m\",\"benchmark\":\"bench\",\"response\":\"B\"}\n"
                      "{\"sample_index\":1,\"variant_id\":0,\"model\":\"m\",\"benchmark\":\"bench\",\"error\":\"PermanentFailure: x\"}\n"
                      "{\"sample_index\":2,\"vari");
  ReplayAdapter replay(dir / "p.jsonl");
  const auto m = MultiModalMessage({ContentSegment::text("q")});
  EXPECT_EQ(replay.call(request(m, 0)), "B");
  EXPECT_THROW(replay.call(request(m, 1)), GatewayError);
  EXPECT_THROW(replay.call(request(m, 2)), GatewayError);
}

TEST(Mocks, Specs) {
  EXPECT_EQ(mock_name("uniform-random:7"), "uniform-random-7");
  EXPECT_EQ(mock_name("replay:/tmp/x.jsonl"), "replay");
  EXPECT_TRUE(is_mock_spec("verbose-oracle"));
  EXPECT_FALSE(is_mock_spec("gpt"));
  EXPECT_THROW(make_mock_adapter("uniform-random:x", {}), std::invalid_argument);
  EXPECT_EQ(make_mock_adapter("uniform-random:7", {})->capabilities().name, "uniform-random-7");
}

TEST(JudgeComplete, StubAndTaxonomy) {
  FunctionJudge closest([](const std::string& prompt) {
    return prompt.find("closest option") != std::string::npos ? "B" : "?";
  });
  EXPECT_EQ(judge_complete(&closest, build_choice_judge_prompt("q", {{'A', "x"}, {'B', "y"}}, "r")), "B");

  try {
    judge_complete(nullptr, "p");
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), FailureKind::Permanent);
    EXPECT_EQ(e.detail(), "NoJudge");
  }

  ScriptedJudge empty({""});
  try {
    judge_complete(&empty, "p", fast_policy());
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.kind(), FailureKind::Malformed);
  }
  EXPECT_EQ(empty.calls(), 1u);
}
