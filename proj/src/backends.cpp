#include "icd/backends.hpp"

#include "icd/simulator.hpp"
#include "icd/wire.hpp"

namespace icd::backends {

void GenerationRequest::validate() const {
  if (question.empty()) throw std::invalid_argument("request question empty");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be positive");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (want_token_probs && top_logprobs < 1) {
    throw std::invalid_argument("top_logprobs must be positive when probs requested");
  }
  for (const auto& d : demonstrations) {
    if (d.question.empty() || d.answer.empty()) {
      throw std::invalid_argument("demonstration block missing question or answer");
    }
  }
}

std::string build_prompt(const GenerationRequest& request) {
  std::string out;
  if (!request.system_message.empty()) {
    out += request.system_message;
    out += "\n\n";
  }
  for (const auto& d : request.demonstrations) {
    out += "Image: " + d.image + "\n";
    out += "Question: " + d.question + "\n";
    out += "Answer: " + d.answer + "\n\n";
  }
  out += "Image: " + request.image + "\n";
  out += "Question: " + request.question + "\n";
  out += "Answer:";
  return out;
}

std::string role_name(Role r) {
  switch (r) {
    case Role::student: return "student";
    case Role::teacher: return "teacher";
    case Role::encoder: return "encoder";
  }
  throw std::logic_error("bad role");
}

void CostLedger::record(Role role, std::int64_t prompt_tokens,
                        std::int64_t output_tokens, std::int64_t latency_us,
                        std::int64_t retries) {
  std::lock_guard<std::mutex> lock(mu_);
  RoleCost& c = role == Role::student ? student_
               : role == Role::teacher ? teacher_
                                       : encoder_;
  c.calls += 1;
  c.retries += retries;
  c.prompt_tokens += prompt_tokens;
  c.output_tokens += output_tokens;
  c.wall_time_us += latency_us;
}

RoleCost CostLedger::get(Role role) const {
  std::lock_guard<std::mutex> lock(mu_);
  return role == Role::student ? student_
       : role == Role::teacher ? teacher_
                               : encoder_;
}

json CostLedger::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  auto one = [](const RoleCost& c) {
    return json{{"calls", c.calls},
                {"retries", c.retries},
                {"prompt_tokens", c.prompt_tokens},
                {"output_tokens", c.output_tokens},
                {"wall_time_us", c.wall_time_us}};
  };
  return json{{"student", one(student_)},
              {"teacher", one(teacher_)},
              {"encoder", one(encoder_)}};
}

double SimProfile::competence_for(const std::string& cls) const {
  auto it = competence.find(cls);
  if (it != competence.end()) return it->second;
  it = competence.find("default");
  if (it != competence.end()) return it->second;
  return 0.5;
}

void to_json(json& j, const SimProfile& p) {
  j = json{{"seed", p.seed},
           {"labels", p.labels},
           {"competence", p.competence},
           {"icl_gain_per_match", p.icl_gain_per_match},
           {"entropy_correct_mean", p.entropy_correct_mean},
           {"entropy_correct_stddev", p.entropy_correct_stddev},
           {"entropy_wrong_mean", p.entropy_wrong_mean},
           {"entropy_wrong_stddev", p.entropy_wrong_stddev},
           {"latency_us_per_call", p.latency_us_per_call},
           {"latency_us_per_token", p.latency_us_per_token}};
}

void from_json(const json& j, SimProfile& p) {
  p = SimProfile{};
  if (j.contains("seed")) j.at("seed").get_to(p.seed);
  if (j.contains("labels")) j.at("labels").get_to(p.labels);
  if (j.contains("competence")) j.at("competence").get_to(p.competence);
  if (j.contains("icl_gain_per_match")) j.at("icl_gain_per_match").get_to(p.icl_gain_per_match);
  if (j.contains("entropy_correct_mean")) j.at("entropy_correct_mean").get_to(p.entropy_correct_mean);
  if (j.contains("entropy_correct_stddev")) j.at("entropy_correct_stddev").get_to(p.entropy_correct_stddev);
  if (j.contains("entropy_wrong_mean")) j.at("entropy_wrong_mean").get_to(p.entropy_wrong_mean);
  if (j.contains("entropy_wrong_stddev")) j.at("entropy_wrong_stddev").get_to(p.entropy_wrong_stddev);
  if (j.contains("latency_us_per_call")) j.at("latency_us_per_call").get_to(p.latency_us_per_call);
  if (j.contains("latency_us_per_token")) j.at("latency_us_per_token").get_to(p.latency_us_per_token);
}

void to_json(json& j, const EndpointConfig& c) {
  j = json{{"kind", c.kind},
           {"temperature", c.temperature},
           {"max_tokens", c.max_tokens},
           {"top_logprobs", c.top_logprobs},
           {"max_concurrency", c.max_concurrency}};
  if (c.kind == "wire") {
    j["base_url"] = c.base_url;
    j["model_id"] = c.model_id;
    j["api_key_env"] = c.api_key_env;
    j["max_retries"] = c.max_retries;
    j["retry_backoff_ms"] = c.retry_backoff_ms;
  } else {
    j["profile"] = c.profile;
  }
  if (c.max_calls) j["max_calls"] = *c.max_calls;
}

void from_json(const json& j, EndpointConfig& c) {
  c = EndpointConfig{};
  if (j.contains("kind")) j.at("kind").get_to(c.kind);
  if (c.kind != "simulated" && c.kind != "wire") {
    throw std::invalid_argument("endpoint kind must be simulated or wire");
  }
  if (j.contains("base_url")) j.at("base_url").get_to(c.base_url);
  if (j.contains("model_id")) j.at("model_id").get_to(c.model_id);
  if (j.contains("api_key_env")) j.at("api_key_env").get_to(c.api_key_env);
  if (j.contains("api_key")) {
    throw std::invalid_argument("api keys go through api_key_env, not config");
  }
  if (j.contains("max_retries")) j.at("max_retries").get_to(c.max_retries);
  if (j.contains("retry_backoff_ms")) j.at("retry_backoff_ms").get_to(c.retry_backoff_ms);
  if (j.contains("temperature")) j.at("temperature").get_to(c.temperature);
  if (j.contains("max_tokens")) j.at("max_tokens").get_to(c.max_tokens);
  if (j.contains("top_logprobs")) j.at("top_logprobs").get_to(c.top_logprobs);
  if (j.contains("max_concurrency")) j.at("max_concurrency").get_to(c.max_concurrency);
  if (j.contains("max_calls") && !j.at("max_calls").is_null()) {
    c.max_calls = j.at("max_calls").get<std::int64_t>();
  }
  if (j.contains("profile")) j.at("profile").get_to(c.profile);
  if (c.kind == "wire" && c.base_url.empty()) {
    throw std::invalid_argument("wire endpoint needs base_url");
  }
}

void to_json(json& j, const SimEncoderConfig& c) {
  j = json{{"seed", c.seed},
           {"dimension", c.dimension},
           {"noise", c.noise},
           {"labels", c.labels},
           {"encoder_id", c.encoder_id},
           {"latency_us_per_call", c.latency_us_per_call}};
}

void from_json(const json& j, SimEncoderConfig& c) {
  c = SimEncoderConfig{};
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("dimension")) j.at("dimension").get_to(c.dimension);
  if (j.contains("noise")) j.at("noise").get_to(c.noise);
  if (j.contains("labels")) j.at("labels").get_to(c.labels);
  if (j.contains("encoder_id")) j.at("encoder_id").get_to(c.encoder_id);
  if (j.contains("latency_us_per_call")) j.at("latency_us_per_call").get_to(c.latency_us_per_call);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"kind", c.kind}};
  if (c.kind == "wire") {
    j["base_url"] = c.base_url;
    j["model_id"] = c.model_id;
    j["api_key_env"] = c.api_key_env;
    j["max_retries"] = c.max_retries;
    j["retry_backoff_ms"] = c.retry_backoff_ms;
    j["dimension"] = c.dimension;
  } else {
    j["sim"] = c.sim;
  }
}

void from_json(const json& j, EncoderConfig& c) {
  c = EncoderConfig{};
  if (j.contains("kind")) j.at("kind").get_to(c.kind);
  if (c.kind != "simulated" && c.kind != "wire") {
    throw std::invalid_argument("encoder kind must be simulated or wire");
  }
  if (j.contains("base_url")) j.at("base_url").get_to(c.base_url);
  if (j.contains("model_id")) j.at("model_id").get_to(c.model_id);
  if (j.contains("api_key_env")) j.at("api_key_env").get_to(c.api_key_env);
  if (j.contains("api_key")) {
    throw std::invalid_argument("api keys go through api_key_env, not config");
  }
  if (j.contains("max_retries")) j.at("max_retries").get_to(c.max_retries);
  if (j.contains("retry_backoff_ms")) j.at("retry_backoff_ms").get_to(c.retry_backoff_ms);
  if (j.contains("dimension")) j.at("dimension").get_to(c.dimension);
  if (j.contains("sim")) j.at("sim").get_to(c.sim);
  if (c.kind == "wire" && c.base_url.empty()) {
    throw std::invalid_argument("wire encoder needs base_url");
  }
}

std::shared_ptr<GenerationEndpoint> make_generation_endpoint(
    const EndpointConfig& config, Role role, std::shared_ptr<CostLedger> ledger) {
  if (config.kind == "simulated") {
    return std::make_shared<SimulatedAgent>(config, role, std::move(ledger));
  }
  if (config.kind == "wire") {
    return std::make_shared<WireGenerationEndpoint>(config, role, std::move(ledger));
  }
  throw std::invalid_argument("unknown endpoint kind: " + config.kind);
}

std::shared_ptr<EmbeddingEndpoint> make_embedding_endpoint(
    const EncoderConfig& config, std::shared_ptr<CostLedger> ledger) {
  if (config.kind == "simulated") {
    return std::make_shared<SimulatedEncoder>(config.sim, std::move(ledger));
  }
  if (config.kind == "wire") {
    return std::make_shared<WireEmbeddingEndpoint>(config, std::move(ledger));
  }
  throw std::invalid_argument("unknown encoder kind: " + config.kind);
}

}  // namespace icd::backends
