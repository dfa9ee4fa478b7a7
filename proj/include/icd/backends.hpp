#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "icd/types.hpp"

namespace icd::backends {

struct DemoBlock {
  std::string image;
  std::string question;
  std::string answer;
};

struct GenerationRequest {
  std::string system_message;
  std::vector<DemoBlock> demonstrations;
  std::string image;
  std::string question;
  double temperature = 1.0;
  int max_tokens = 64;
  bool want_token_probs = false;
  int top_logprobs = 5;  // meaningful only when want_token_probs

  void validate() const;
};

// The exact prompt text a generation call stands for. Stable byte-for-byte:
// optional system block, demonstration blocks, then the open query block.
std::string build_prompt(const GenerationRequest& request);

enum class Role { student, teacher, encoder };

std::string role_name(Role r);

struct RoleCost {
  std::int64_t calls = 0;
  std::int64_t retries = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t wall_time_us = 0;  // sum of per-call reported latencies
};

// Thread-safe, monotone counters per role.
class CostLedger {
 public:
  void record(Role role, std::int64_t prompt_tokens, std::int64_t output_tokens,
              std::int64_t latency_us, std::int64_t retries = 0);
  RoleCost get(Role role) const;
  json snapshot() const;

 private:
  mutable std::mutex mu_;
  RoleCost student_, teacher_, encoder_;
};

class GenerationEndpoint {
 public:
  virtual ~GenerationEndpoint() = default;
  virtual Prediction generate(const GenerationRequest& request) = 0;
};

class EmbeddingEndpoint {
 public:
  virtual ~EmbeddingEndpoint() = default;
  virtual std::vector<float> embed_image(const std::string& image_ref) = 0;
  virtual std::vector<float> embed_text(const std::string& text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string encoder_id() const = 0;
};

struct SimProfile {
  std::uint64_t seed = 0;
  std::vector<std::string> labels;
  std::map<std::string, double> competence;  // class -> P(correct); "default" key
  double icl_gain_per_match = 0.0;           // additive per helpful demo, capped at 1
  double entropy_correct_mean = 0.15;
  double entropy_correct_stddev = 0.05;
  double entropy_wrong_mean = 1.1;
  double entropy_wrong_stddev = 0.2;
  std::int64_t latency_us_per_call = 1000;
  std::int64_t latency_us_per_token = 10;

  double competence_for(const std::string& cls) const;
};

void to_json(json& j, const SimProfile& p);
void from_json(const json& j, SimProfile& p);

struct EndpointConfig {
  std::string kind = "simulated";  // simulated | wire
  // wire
  std::string base_url;
  std::string model_id;
  std::string api_key_env;  // key read from this env var, never from config
  int max_retries = 2;
  int retry_backoff_ms = 50;
  // shared
  double temperature = 1.0;
  int max_tokens = 64;
  int top_logprobs = 5;
  int max_concurrency = 4;
  std::optional<std::int64_t> max_calls;  // hard per-endpoint call cap
  // simulated
  SimProfile profile;
};

void to_json(json& j, const EndpointConfig& c);
void from_json(const json& j, EndpointConfig& c);

struct SimEncoderConfig {
  std::uint64_t seed = 0;
  std::size_t dimension = 64;
  double noise = 0.3;
  std::vector<std::string> labels;
  std::string encoder_id = "sim-encoder-v1";
  std::int64_t latency_us_per_call = 200;
};

void to_json(json& j, const SimEncoderConfig& c);
void from_json(const json& j, SimEncoderConfig& c);

struct EncoderConfig {
  std::string kind = "simulated";  // simulated | wire
  std::string base_url;
  std::string model_id;
  std::string api_key_env;
  int max_retries = 2;
  int retry_backoff_ms = 50;
  std::size_t dimension = 64;
  SimEncoderConfig sim;
};

void to_json(json& j, const EncoderConfig& c);
void from_json(const json& j, EncoderConfig& c);

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::shared_ptr<GenerationEndpoint> make_generation_endpoint(
    const EndpointConfig& config, Role role, std::shared_ptr<CostLedger> ledger);

std::shared_ptr<EmbeddingEndpoint> make_embedding_endpoint(
    const EncoderConfig& config, std::shared_ptr<CostLedger> ledger);

}  // namespace icd::backends
