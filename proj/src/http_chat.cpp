#include "mmeval/http_chat.hpp"

#include <cstdlib>

#include <httplib.h>

#include "mmeval/base64.hpp"
#include "mmeval/dataset.hpp"

namespace mmeval {
namespace {

using nlohmann::json;

std::string_view sniff_mime(std::string_view base64_payload) {
  const auto head = base64_decode(base64_payload.substr(0, 16));
  if (!head) return "image/png";
  const std::string_view b = *head;
  if (b.starts_with("\x89PNG")) return "image/png";
  if (b.starts_with("\xFF\xD8")) return "image/jpeg";
  if (b.starts_with("GIF8")) return "image/gif";
  if (b.size() >= 12 && b.substr(8, 4) == "WEBP") return "image/webp";
  return "image/png";
}

std::string image_url(const std::string& locator) {
  if (locator.starts_with("http://") || locator.starts_with("https://")) return locator;
  std::string payload = locator;
  if (locator.starts_with("file://")) payload = base64_encode(read_file(locator.substr(7)));
  return "data:" + std::string(sniff_mime(payload)) + ";base64," + payload;
}

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw GatewayError(FailureKind::Permanent, "endpoint url '" + url + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

json build_chat_payload(const MultiModalMessage& message, const std::string& model,
                        const GenerationParams& params) {
  json content = json::array();
  for (const auto& seg : message.segments()) {
    if (seg.modality == Modality::Text) {
      content.push_back({{"type", "text"}, {"text", seg.value}});
    } else if (seg.modality == Modality::Image) {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(seg.value)}}}});
    }
  }
  return {{"model", model},
          {"temperature", params.temperature},
          {"max_tokens", params.max_new_tokens},
          {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
}

std::string parse_chat_reply(std::string_view body) {
  const json parsed = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) throw GatewayError(FailureKind::Malformed, "reply is not JSON");
  const json* content = nullptr;
  if (parsed.contains("choices") && parsed["choices"].is_array() && !parsed["choices"].empty()) {
    const auto& first = parsed["choices"][0];
    if (first.contains("message") && first["message"].contains("content")) {
      content = &first["message"]["content"];
    }
  }
  if (!content || !content->is_string()) {
    throw GatewayError(FailureKind::Malformed, "reply lacks choices[0].message.content");
  }
  return content->get<std::string>();
}

FailureKind classify_http_status(int status) {
  if (status == 408 || status == 425 || status == 429 || status >= 500) {
    return FailureKind::Transient;
  }
  if (status >= 400) return FailureKind::Permanent;
  // 1xx/3xx are not something a chat endpoint should answer with.
  return FailureKind::Malformed;
}

std::string http_post_json(const HttpEndpoint& endpoint, const json& payload) {
  const auto [origin, path] = split_url(endpoint.url);
  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto result = client.Post(path, headers, payload.dump(), "application/json");
  if (!result) {
    throw GatewayError(FailureKind::Transient, "transport error: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw GatewayError(classify_http_status(result->status),
                       "http " + std::to_string(result->status));
  }
  return result->body;
}

HttpChatAdapter::HttpChatAdapter(HttpEndpoint endpoint, AdapterCapabilities caps)
    : endpoint_(std::move(endpoint)), caps_(std::move(caps)) {}

std::string HttpChatAdapter::call(const GenerateRequest& request) {
  json payload = build_chat_payload(request.message, endpoint_.model, request.params);
  payload["metadata"] = {{"dataset_name", request.dataset_name},
                         {"sample_index", request.sample_index},
                         {"variant_id", request.variant_id}};
  return parse_chat_reply(http_post_json(endpoint_, payload));
}

}  // namespace mmeval
