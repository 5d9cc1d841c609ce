#include "mmeval/message.hpp"

#include <algorithm>
#include <stdexcept>

#include "mmeval/base64.hpp"
#include "mmeval/text.hpp"

namespace mmeval {

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::Image: return "image";
    case Modality::Text: return "text";
    case Modality::Audio: return "audio";
    case Modality::Video: return "video";
    case Modality::PointCloud: return "point_cloud";
  }
  return "?";
}

Modality modality_from_string(std::string_view name) {
  if (name == "image") return Modality::Image;
  if (name == "text") return Modality::Text;
  if (name == "audio") return Modality::Audio;
  if (name == "video") return Modality::Video;
  if (name == "point_cloud") return Modality::PointCloud;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

bool is_image_reference(std::string_view locator) {
  return locator.starts_with("http://") || locator.starts_with("https://") ||
         locator.starts_with("file://");
}

MultiModalMessage::MultiModalMessage(std::vector<ContentSegment> segments)
    : segments_(std::move(segments)) {
  bool has_text = false;
  for (const auto& seg : segments_) {
    if (seg.modality == Modality::Text) {
      if (text::trim(seg.value).empty()) throw std::invalid_argument("blank text segment");
      has_text = true;
    } else if (seg.modality == Modality::Image) {
      if (!is_image_reference(seg.value) && !is_valid_base64(seg.value)) {
        throw std::invalid_argument("image segment is neither base64 nor a reference");
      }
    }
  }
  if (!has_text) throw std::invalid_argument("message needs at least one text segment");
}

std::size_t MultiModalMessage::count(Modality modality) const {
  return static_cast<std::size_t>(std::count_if(
      segments_.begin(), segments_.end(),
      [&](const ContentSegment& s) { return s.modality == modality; }));
}

MultiModalMessage build_default_prompt(const BenchmarkRecord& record, QuestionType type) {
  std::vector<ContentSegment> segments;
  for (const auto& img : record.images) segments.push_back(ContentSegment::image(img));

  std::string prompt = record.question;
  if (type == QuestionType::Mcq) {
    prompt += "\n";
    for (const auto& [label, option] : record.choices) {
      prompt += "\n";
      prompt += label;
      prompt += ". ";
      prompt += option;
    }
    prompt += "\n";
    prompt += kMcqInstruction;
  } else if (type == QuestionType::YesNo) {
    prompt += "\n";
    prompt += kYesNoInstruction;
  }
  segments.push_back(ContentSegment::text(std::move(prompt)));
  return MultiModalMessage(std::move(segments));
}

MultiModalMessage degrade_to_single_image(const MultiModalMessage& message) {
  if (message.count(Modality::Image) <= 1 && message.count(Modality::Text) == 1 &&
      message.segments().size() == message.count(Modality::Image) + 1) {
    return message;
  }
  std::vector<ContentSegment> out;
  std::vector<std::string> texts;
  for (const auto& seg : message.segments()) {
    if (seg.modality == Modality::Image && out.empty()) out.push_back(seg);
    if (seg.modality == Modality::Text) texts.push_back(seg.value);
  }
  out.push_back(ContentSegment::text(text::join(texts, "\n")));
  return MultiModalMessage(std::move(out));
}

MultiModalMessage limit_images(const MultiModalMessage& message, std::size_t max_images) {
  std::vector<ContentSegment> out;
  std::size_t kept = 0;
  for (const auto& seg : message.segments()) {
    if (seg.modality == Modality::Image && kept++ >= max_images) continue;
    out.push_back(seg);
  }
  return MultiModalMessage(std::move(out));
}

std::string render_text_only(const MultiModalMessage& message) {
  std::vector<std::string> lines;
  std::size_t counters[5] = {0, 0, 0, 0, 0};
  for (const auto& seg : message.segments()) {
    if (seg.modality == Modality::Text) {
      lines.push_back(seg.value);
    } else {
      const auto n = ++counters[static_cast<int>(seg.modality)];
      lines.push_back("<" + std::string(to_string(seg.modality)) + " " + std::to_string(n) + ">");
    }
  }
  return text::join(lines, "\n");
}

nlohmann::json to_json(const MultiModalMessage& message) {
  auto arr = nlohmann::json::array();
  for (const auto& seg : message.segments()) {
    arr.push_back({{"modality", to_string(seg.modality)}, {"value", seg.value}});
  }
  return arr;
}

MultiModalMessage message_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("message JSON must be an array");
  std::vector<ContentSegment> segments;
  for (const auto& item : j) {
    segments.push_back({modality_from_string(item.at("modality").get<std::string>()),
                        item.at("value").get<std::string>()});
  }
  return MultiModalMessage(std::move(segments));
}

}  // namespace mmeval
