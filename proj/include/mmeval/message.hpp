#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mmeval/dataset.hpp"

namespace mmeval {

// AUDIO, VIDEO and POINT_CLOUD are reserved; builders never emit them.
enum class Modality { Image, Text, Audio, Video, PointCloud };

std::string_view to_string(Modality modality);
Modality modality_from_string(std::string_view name);

struct ContentSegment {
  Modality modality = Modality::Text;
  // TEXT: the text. IMAGE: inline base64 payload, or an http://, https:// or
  // file:// reference.
  std::string value;

  static ContentSegment text(std::string value) { return {Modality::Text, std::move(value)}; }
  static ContentSegment image(std::string value) { return {Modality::Image, std::move(value)}; }

  bool operator==(const ContentSegment&) const = default;
};

bool is_image_reference(std::string_view locator);

/// Ordered interleaved prompt. Always holds at least one non-blank TEXT
/// segment; the constructor throws std::invalid_argument otherwise.
class MultiModalMessage {
 public:
  explicit MultiModalMessage(std::vector<ContentSegment> segments);

  const std::vector<ContentSegment>& segments() const { return segments_; }
  std::size_t count(Modality modality) const;

  bool operator==(const MultiModalMessage&) const = default;

 private:
  std::vector<ContentSegment> segments_;
};

inline constexpr std::string_view kMcqInstruction =
    "Answer with the option's letter from the given choices directly.";
inline constexpr std::string_view kYesNoInstruction = "Answer the question with Yes or No.";

/// Images in record order, then one TEXT segment: the question, and for MCQ
/// a blank line, `<label>. <text>` per option and the fixed instruction; for
/// Y/N the Yes/No instruction on its own line.
MultiModalMessage build_default_prompt(const BenchmarkRecord& record, QuestionType type);

/// First image (if any) followed by every TEXT segment joined with '\n'.
/// Messages with at most one image and a single text segment come back
/// unchanged.
MultiModalMessage degrade_to_single_image(const MultiModalMessage& message);

/// Keeps the first `max_images` IMAGE segments in place and drops the rest.
MultiModalMessage limit_images(const MultiModalMessage& message, std::size_t max_images);

/// Lossy flattening for logs: images become `<image k>` (k from 1), one line
/// per segment.
std::string render_text_only(const MultiModalMessage& message);

nlohmann::json to_json(const MultiModalMessage& message);
MultiModalMessage message_from_json(const nlohmann::json& j);

}  // namespace mmeval
