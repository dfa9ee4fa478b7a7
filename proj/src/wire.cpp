#include "icd/wire.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace icd::backends {

namespace {

std::string read_api_key(const std::string& env_name) {
  if (env_name.empty()) return "";
  const char* value = std::getenv(env_name.c_str());
  if (!value || !*value) {
    throw std::invalid_argument("environment variable " + env_name +
                                " is not set (api keys come from the environment)");
  }
  return value;
}

struct PostResult {
  json body;
  int retries = 0;
  std::int64_t latency_us = 0;
};

// Retries transport errors and 5xx; anything else fails immediately.
PostResult post_json(const std::string& base_url, const std::string& path,
                     const json& payload, const std::string& api_key,
                     int max_retries, int backoff_ms) {
  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(backoff_ms << (attempt - 1)));
    }
    httplib::Client client(base_url);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(path, headers, payload.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
      continue;
    }
    const auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    if (res->status != 200) {
      throw BackendError(base_url + path + " returned " +
                         std::to_string(res->status) + ": " + res->body);
    }
    try {
      return PostResult{json::parse(res->body), attempt, elapsed};
    } catch (const std::exception& e) {
      throw BackendError(base_url + path + " returned unparseable body: " + e.what());
    }
  }
  throw BackendError(base_url + path + " failed after " +
                     std::to_string(max_retries + 1) + " attempts: " + last_error);
}

json image_part(const std::string& ref) {
  return json{{"type", "image_url"}, {"image_url", {{"url", ref}}}};
}

json text_part(const std::string& text) {
  return json{{"type", "text"}, {"text", text}};
}

}  // namespace

WireGenerationEndpoint::WireGenerationEndpoint(EndpointConfig config, Role role,
                                               std::shared_ptr<CostLedger> ledger)
    : config_(std::move(config)), role_(role), ledger_(std::move(ledger)),
      api_key_(read_api_key(config_.api_key_env)) {}

Prediction WireGenerationEndpoint::generate(const GenerationRequest& request) {
  request.validate();
  const std::uint64_t call = counter_.fetch_add(1);
  if (config_.max_calls && static_cast<std::int64_t>(call) >= *config_.max_calls) {
    throw BudgetExceeded(role_name(role_) + " endpoint call cap reached");
  }

  json messages = json::array();
  if (!request.system_message.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_message}});
  }
  for (const auto& d : request.demonstrations) {
    messages.push_back(
        {{"role", "user"},
         {"content", json::array({image_part(d.image), text_part(d.question)})}});
    messages.push_back({{"role", "assistant"}, {"content", d.answer}});
  }
  messages.push_back(
      {{"role", "user"},
       {"content", json::array({image_part(request.image), text_part(request.question)})}});

  json payload{{"model", config_.model_id},
               {"messages", messages},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  if (request.want_token_probs) {
    payload["logprobs"] = true;
    payload["top_logprobs"] = request.top_logprobs;
  }

  const auto result = post_json(config_.base_url, "/v1/chat/completions", payload,
                                api_key_, config_.max_retries, config_.retry_backoff_ms);
  Prediction pred;
  try {
    const json& choice = result.body.at("choices").at(0);
    pred.text = choice.at("message").at("content").get<std::string>();
    if (request.want_token_probs && choice.contains("logprobs") &&
        !choice.at("logprobs").is_null()) {
      for (const auto& pos : choice.at("logprobs").at("content")) {
        TokenDistribution dist;
        for (const auto& alt : pos.at("top_logprobs")) {
          const double p = std::exp(alt.at("logprob").get<double>());
          if (p > 0.0) dist.probs[alt.at("token").get<std::string>()] = std::min(p, 1.0);
        }
        dist.is_truncated = dist.coverage() < 1.0 - 1e-9;
        dist.validate();
        pred.token_dists.push_back(std::move(dist));
      }
    }
    if (result.body.contains("usage")) {
      const json& usage = result.body.at("usage");
      pred.prompt_tokens = usage.value("prompt_tokens", 0);
      pred.output_tokens = usage.value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed completion response: ") + e.what());
  }
  pred.latency_us = result.latency_us;
  if (!pred.token_dists.empty()) {
    double h = 0.0;
    for (const auto& d : pred.token_dists) {
      const double cover = d.coverage();
      for (const auto& [tok, p] : d.probs) {
        const double q = p / cover;
        h -= q * std::log(q);
      }
    }
    pred.uncertainty = h / pred.token_dists.size();
  }
  ledger_->record(role_, pred.prompt_tokens, pred.output_tokens, pred.latency_us,
                  result.retries);
  return pred;
}

WireEmbeddingEndpoint::WireEmbeddingEndpoint(EncoderConfig config,
                                             std::shared_ptr<CostLedger> ledger)
    : config_(std::move(config)), ledger_(std::move(ledger)),
      api_key_(read_api_key(config_.api_key_env)) {}

std::string WireEmbeddingEndpoint::encoder_id() const {
  return config_.model_id.empty() ? config_.base_url : config_.model_id;
}

std::vector<float> WireEmbeddingEndpoint::embed(const std::string& content,
                                                const std::string& modality) {
  json payload{{"model", config_.model_id},
               {"modality", modality},
               {"input", json::array({content})}};
  const auto result = post_json(config_.base_url, "/v1/embeddings", payload, api_key_,
                                config_.max_retries, config_.retry_backoff_ms);
  std::vector<float> v;
  try {
    result.body.at("data").at(0).at("embedding").get_to(v);
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed embedding response: ") + e.what());
  }
  if (v.size() != config_.dimension) {
    throw BackendError("embedding dimension " + std::to_string(v.size()) +
                       " does not match configured " + std::to_string(config_.dimension));
  }
  ledger_->record(Role::encoder, 0, 0, result.latency_us, result.retries);
  return v;
}

std::vector<float> WireEmbeddingEndpoint::embed_image(const std::string& image_ref) {
  return embed(image_ref, "image");
}

std::vector<float> WireEmbeddingEndpoint::embed_text(const std::string& text) {
  return embed(text, "text");
}

}  // namespace icd::backends
