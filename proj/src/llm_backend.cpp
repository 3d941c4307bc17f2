#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "provsyn/error.hpp"
#include "provsyn/name_synth.hpp"

namespace provsyn {

using nlohmann::json;

const char* const kNamePrompt =
    "Each line is a provenance path written as (node type, name) -operation-> (node type, name). "
    "Replace every [null] with a realistic name for that node. Keep node types, operations and "
    "existing names unchanged. Reply with the completed path only, in the same format.";

json to_json(const LlmConfig& c) {
  return json{{"base_url", c.base_url},       {"path", c.path},
              {"model", c.model},             {"api_key_env", c.api_key_env},
              {"temperature", c.temperature}, {"max_tokens", c.max_tokens},
              {"timeout_seconds", c.timeout_seconds}, {"max_attempts", c.max_attempts},
              {"backoff_ms", c.backoff_ms}};
}

LlmConfig llm_config_from_json(const json& j) {
  LlmConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.path = j.value("path", c.path);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  if (c.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "llm: max_attempts must be >= 1");
  if (c.max_tokens < 1) throw Error(ErrorCode::InvalidConfig, "llm: max_tokens must be >= 1");
  return c;
}

LlmBackend::LlmBackend(LlmConfig cfg) : cfg_(std::move(cfg)) {}
LlmBackend::~LlmBackend() = default;

json LlmBackend::request_body(const NameSequence& seq) const {
  return json{{"model", cfg_.model},
              {"temperature", cfg_.temperature},
              {"max_tokens", cfg_.max_tokens},
              {"messages", json::array({json{{"role", "system"}, {"content", kNamePrompt}},
                                        json{{"role", "user"}, {"content", render_sequence(seq)}}})}};
}

NameSequence LlmBackend::generate(const NameSequence& seq) {
  httplib::Client cli(cfg_.base_url);
  cli.set_connection_timeout(cfg_.timeout_seconds, 0);
  cli.set_read_timeout(cfg_.timeout_seconds, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const std::string body = request_body(seq).dump();

  int delay = cfg_.backoff_ms;
  Error last(ErrorCode::Transport, "no request sent");
  for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    ++requests_;
    auto res = cli.Post(cfg_.path, headers, body, "application/json");
    if (!res) {
      last = Error(ErrorCode::Transport, cfg_.base_url + ": " + httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 429) {
      last = Error(ErrorCode::RateLimited, cfg_.base_url + ": HTTP 429");
      continue;
    }
    if (res->status >= 500) {
      last = Error(ErrorCode::Transport, cfg_.base_url + ": HTTP " + std::to_string(res->status));
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::Transport, cfg_.base_url + ": HTTP " + std::to_string(res->status));
    std::string content;
    try {
      content = json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("response body: ") + e.what());
    }
    return parse_sequence(content, &seq);
  }
  throw last;
}

}  // namespace provsyn
