#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "icd/backends.hpp"

namespace icd::backends {

// Chat-completions shaped provider: demonstrations become alternating
// user/assistant turns with image content parts; token probabilities come
// back as per-position top_logprobs and are marked truncated. Retries
// transport failures and 5xx with bounded exponential backoff; protocol
// errors are not retried. The API key is read from the configured
// environment variable at construction.
class WireGenerationEndpoint : public GenerationEndpoint {
 public:
  WireGenerationEndpoint(EndpointConfig config, Role role,
                         std::shared_ptr<CostLedger> ledger);
  Prediction generate(const GenerationRequest& request) override;

 private:
  EndpointConfig config_;
  Role role_;
  std::shared_ptr<CostLedger> ledger_;
  std::string api_key_;
  std::atomic<std::uint64_t> counter_{0};
};

// Embeddings-shaped provider: POST /v1/embeddings with
// {"model","modality","input":[content]}; images are sent as their opaque
// references for the serving side to resolve.
class WireEmbeddingEndpoint : public EmbeddingEndpoint {
 public:
  WireEmbeddingEndpoint(EncoderConfig config, std::shared_ptr<CostLedger> ledger);
  std::vector<float> embed_image(const std::string& image_ref) override;
  std::vector<float> embed_text(const std::string& text) override;
  std::size_t dimension() const override { return config_.dimension; }
  std::string encoder_id() const override;

 private:
  std::vector<float> embed(const std::string& content, const std::string& modality);

  EncoderConfig config_;
  std::shared_ptr<CostLedger> ledger_;
  std::string api_key_;
};

}  // namespace icd::backends
