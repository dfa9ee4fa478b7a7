#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "icd/backends.hpp"
#include "icd/types.hpp"

namespace icd::backends {

// Stable 64-bit content hash (fnv-1a); keeps simulated outputs identical
// across platforms and reruns.
std::uint64_t stable_hash(const std::string& text, std::uint64_t seed = 0);

// Image references in simulated datasets look like sim://<class>/<n>.
std::string sim_image_ref(const std::string& cls, std::size_t n);
std::string sim_class_of_image(const std::string& image_ref);  // "" if not sim://

// Builds a distribution over the answer token plus 15 alternatives whose
// renormalized entropy equals `target` (nats, clamped to [1e-6, ln 16 - 1e-6]).
TokenDistribution distribution_with_entropy(const std::string& answer_token,
                                            double target);

// Deterministic generation endpoint. Correctness is a seeded draw at the
// profile competence for the query class, raised by icl_gain_per_match for
// every demonstration of the same class carrying a correct answer (capped at
// 1). Emitted token distributions realize an entropy drawn from the correct
// or wrong regime, so reported uncertainty separates by correctness.
class SimulatedAgent : public GenerationEndpoint {
 public:
  SimulatedAgent(EndpointConfig config, Role role, std::shared_ptr<CostLedger> ledger);
  Prediction generate(const GenerationRequest& request) override;

 private:
  EndpointConfig config_;
  Role role_;
  std::shared_ptr<CostLedger> ledger_;
  std::atomic<std::uint64_t> counter_{0};
};

// Deterministic embeddings with planted structure: every class has a unit
// direction; images of that class and texts naming its label both land near
// it, so pool-text vs query-image similarity is informative. Texts naming no
// label get a content-hash direction. Same content, same vector.
class SimulatedEncoder : public EmbeddingEndpoint {
 public:
  SimulatedEncoder(SimEncoderConfig config, std::shared_ptr<CostLedger> ledger);
  std::vector<float> embed_image(const std::string& image_ref) override;
  std::vector<float> embed_text(const std::string& text) override;
  std::size_t dimension() const override { return config_.dimension; }
  std::string encoder_id() const override { return config_.encoder_id; }

  std::vector<float> class_direction(const std::string& cls) const;

 private:
  std::vector<double> unit_noise(const std::string& key) const;
  std::vector<float> finish(std::vector<double> v, std::int64_t latency_us);

  SimEncoderConfig config_;
  std::shared_ptr<CostLedger> ledger_;
};

struct SimDataConfig {
  std::size_t classes = 10;
  std::vector<std::string> labels;  // overrides `classes` when non-empty
  std::size_t samples = 200;
  std::size_t support_samples = 0;
  std::uint64_t seed = 0;
  std::string question = "What is shown in this image?";
  bool with_options = false;
};

void to_json(json& j, const SimDataConfig& c);
void from_json(const json& j, SimDataConfig& c);

std::vector<std::string> sim_class_labels(const SimDataConfig& config);

// Balanced class assignment, seeded order. `split` prefixes the sample ids so
// query and support splits never collide.
std::vector<Sample> make_sim_dataset(const SimDataConfig& config,
                                     const std::string& split = "q");

}  // namespace icd::backends
