#pragma once

// Chat-completions style wire format.
//
// Request:
//   {"model": "<id>", "temperature": 0, "max_tokens": 1024,
//    "metadata": {"dataset_name": "...", "sample_index": 3, "variant_id": 0},
//    "messages": [{"role": "user", "content": [
//        {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}},
//        {"type": "text", "text": "..."}]}]}
//
// Response: {"choices": [{"message": {"content": "..."}}]}

#include <chrono>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mmeval/gateway.hpp"

namespace mmeval {

struct HttpEndpoint {
  std::string url;  // scheme://host[:port]/path
  std::string model;
  // Name of the environment variable holding the bearer token. Unset
  // variable means no Authorization header.
  std::string api_key_env = "MMEVAL_API_KEY";
  std::chrono::milliseconds timeout{60'000};
};

nlohmann::json build_chat_payload(const MultiModalMessage& message, const std::string& model,
                                  const GenerationParams& params);

/// Extracts choices[0].message.content; throws Malformed otherwise.
std::string parse_chat_reply(std::string_view body);

/// Maps an HTTP status to the failure taxonomy. 2xx is not a failure and
/// must not be passed here.
FailureKind classify_http_status(int status);

/// One POST attempt. Returns the body of a 2xx reply, throws GatewayError
/// for everything else (connection problems count as Transient).
std::string http_post_json(const HttpEndpoint& endpoint, const nlohmann::json& payload);

class HttpChatAdapter : public ModelAdapter {
 public:
  HttpChatAdapter(HttpEndpoint endpoint, AdapterCapabilities caps);

  const AdapterCapabilities& capabilities() const override { return caps_; }
  std::string call(const GenerateRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  AdapterCapabilities caps_;
};

}  // namespace mmeval
