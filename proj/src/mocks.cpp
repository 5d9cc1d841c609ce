#include "mmeval/mocks.hpp"

#include <fstream>

#include <json.hpp>

#include "mmeval/text.hpp"

namespace mmeval {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool is_yes_no_prompt(std::string_view prompt) {
  return prompt.find(kYesNoInstruction) != std::string_view::npos;
}

}  // namespace

ChoiceMap parse_option_lines(std::string_view prompt) {
  ChoiceMap out;
  for (const auto& line : text::split(prompt, '\n')) {
    if (line.size() >= 3 && line[0] >= 'A' && line[0] <= 'Z' && line[1] == '.' && line[2] == ' ') {
      out.emplace(line[0], line.substr(3));
    }
  }
  return out;
}

std::string message_text(const MultiModalMessage& message) {
  std::string out;
  for (const auto& seg : message.segments()) {
    if (seg.modality != Modality::Text) continue;
    if (!out.empty()) out += '\n';
    out += seg.value;
  }
  return out;
}

std::string EchoAdapter::call(const GenerateRequest& request) {
  return render_text_only(request.message);
}

OracleAdapter::OracleAdapter(std::span<const BenchmarkRecord> records, std::string name)
    : caps_{std::move(name), true, std::nullopt} {
  for (const auto& r : records) records_.emplace(r.index, r);
}

std::pair<std::string, std::size_t> OracleAdapter::gold_for(const GenerateRequest& request) const {
  const auto it = records_.find(request.sample_index);
  if (it == records_.end()) {
    throw GatewayError(FailureKind::Permanent,
                       "oracle has no record " + std::to_string(request.sample_index));
  }
  const auto& record = it->second;
  if (!record.is_mcq()) return {record.answer(), 0};

  const auto gold_text = record.choices.at(record.answer().at(0));
  const auto options = parse_option_lines(message_text(request.message));
  std::size_t position = 0;
  for (const auto& [label, option] : options) {
    ++position;
    if (option == gold_text) return {std::string(1, label), position};
  }
  throw GatewayError(FailureKind::Permanent, "gold option not found in prompt");
}

std::string OracleAdapter::call(const GenerateRequest& request) {
  return gold_for(request).first;
}

std::string VerboseOracleAdapter::call(const GenerateRequest& request) {
  const auto [gold, position] = gold_for(request);
  if (position > 0) {
    return "After weighing everything in the picture, my final pick is option number " +
           std::to_string(position) + ", though a couple of the others looked tempting at first.";
  }
  if (text::iequals(gold, "yes") || text::iequals(gold, "no")) {
    return std::string("Looking closely at the picture, my verdict is ") +
           (text::iequals(gold, "yes") ? "affirmative" : "negative") + ".";
  }
  return "I believe the answer would be: " + gold + ".";
}

UniformRandomAdapter::UniformRandomAdapter(std::uint64_t seed)
    : caps_{"uniform-random-" + std::to_string(seed), true, std::nullopt}, seed_(seed) {}

std::string UniformRandomAdapter::call(const GenerateRequest& request) {
  const auto prompt = message_text(request.message);
  std::uint64_t h = text::fnv1a(std::to_string(seed_));
  h = text::fnv1a(request.dataset_name, h);
  h = text::fnv1a(std::to_string(request.sample_index) + "/" + std::to_string(request.variant_id), h);
  h = splitmix64(text::fnv1a(prompt, h));

  const auto options = parse_option_lines(prompt);
  if (!options.empty()) {
    auto it = options.begin();
    std::advance(it, static_cast<long>(h % options.size()));
    return std::string(1, it->first);
  }
  if (is_yes_no_prompt(prompt)) return h % 2 == 0 ? "Yes" : "No";
  return "I am not sure.";
}

ReplayAdapter::ReplayAdapter(const std::filesystem::path& predictions, std::string name)
    : caps_{std::move(name), true, std::nullopt} {
  std::ifstream in(predictions);
  if (!in) throw std::runtime_error("cannot open " + predictions.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;  // torn tail
    std::optional<std::string> response;
    if (j.contains("response")) response = j["response"].get<std::string>();
    responses_[{j.value("benchmark", std::string()), j.value("sample_index", std::int64_t{0}),
                j.value("variant_id", 0)}] = response;
  }
}

std::string ReplayAdapter::call(const GenerateRequest& request) {
  const auto it = responses_.find({request.dataset_name, request.sample_index, request.variant_id});
  if (it == responses_.end()) {
    throw GatewayError(FailureKind::Permanent, "no recorded response for " + request.dataset_name +
                                                   " " + std::to_string(request.sample_index) +
                                                   "/" + std::to_string(request.variant_id));
  }
  if (!it->second) throw GatewayError(FailureKind::Permanent, "recorded failure");
  return *it->second;
}

std::string mock_name(std::string_view spec) {
  if (spec.starts_with("uniform-random:")) return "uniform-random-" + std::string(spec.substr(15));
  if (spec.starts_with("replay:")) return "replay";
  return std::string(spec);
}

bool is_mock_spec(std::string_view spec) {
  return spec == "echo" || spec == "oracle" || spec == "verbose-oracle" ||
         spec.starts_with("uniform-random:") || spec.starts_with("replay:");
}

std::unique_ptr<ModelAdapter> make_mock_adapter(std::string_view spec,
                                                std::span<const BenchmarkRecord> records) {
  if (spec == "echo") return std::make_unique<EchoAdapter>();
  if (spec == "oracle") return std::make_unique<OracleAdapter>(records);
  if (spec == "verbose-oracle") return std::make_unique<VerboseOracleAdapter>(records);
  if (spec.starts_with("uniform-random:")) {
    const std::string seed(spec.substr(15));
    std::size_t used = 0;
    std::uint64_t value = 0;
    try {
      value = std::stoull(seed, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (seed.empty() || used != seed.size()) {
      throw std::invalid_argument("bad seed in '" + std::string(spec) + "'");
    }
    return std::make_unique<UniformRandomAdapter>(value);
  }
  if (spec.starts_with("replay:")) {
    return std::make_unique<ReplayAdapter>(std::filesystem::path(std::string(spec.substr(7))));
  }
  throw std::invalid_argument("unknown mock model '" + std::string(spec) + "'");
}

}  // namespace mmeval
