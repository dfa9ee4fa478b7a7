#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace icd {

using json = nlohmann::json;

struct GoldAnswer {
  enum class Kind { label, caption };
  Kind kind = Kind::label;
  std::vector<std::string> texts;  // label: exactly one entry

  bool operator==(const GoldAnswer&) const = default;
};

struct Sample {
  std::string id;
  std::string image;  // opaque reference, resolved by the backend
  std::string question;
  std::vector<std::string> options;  // empty when the task has no options
  std::optional<GoldAnswer> gold;

  bool operator==(const Sample&) const = default;
};

enum class AnnotationKind { label, label_plus_description, label_plus_cot };
enum class AnnotationSource { teacher, student_self, oracle };

struct Annotation {
  std::string answer;
  AnnotationKind kind = AnnotationKind::label;
  AnnotationSource source = AnnotationSource::teacher;
  int consistency_votes = 1;

  bool operator==(const Annotation&) const = default;
};

struct Demonstration {
  Sample sample;
  Annotation annotation;
  std::vector<float> image_embedding;
  std::vector<float> text_embedding;

  bool operator==(const Demonstration&) const = default;
};

// Ordered demonstration store. Entry order is arrival order and doubles as
// the tie-break identity during selection. Optional capacity evicts FIFO.
class Pool {
 public:
  Pool() = default;
  explicit Pool(std::size_t dimension,
                std::optional<std::size_t> capacity = std::nullopt,
                std::string encoder_id = {})
      : dimension_(dimension), capacity_(capacity),
        encoder_id_(std::move(encoder_id)) {}

  void append(Demonstration demo);
  const std::vector<Demonstration>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dimension() const { return dimension_; }
  std::optional<std::size_t> capacity() const { return capacity_; }
  const std::string& encoder_id() const { return encoder_id_; }
  void set_encoder_id(std::string id) { encoder_id_ = std::move(id); }

 private:
  std::vector<Demonstration> entries_;
  std::size_t dimension_ = 0;
  std::optional<std::size_t> capacity_;
  std::string encoder_id_;
};

struct TokenDistribution {
  std::map<std::string, double> probs;  // token -> probability, each in (0,1]
  bool is_truncated = false;

  double coverage() const;
  void validate() const;  // throws std::invalid_argument on a bad distribution

  bool operator==(const TokenDistribution&) const = default;
};

struct Prediction {
  std::string text;
  std::vector<TokenDistribution> token_dists;  // empty when probs not requested
  double uncertainty = 0.0;                    // nats
  std::int64_t latency_us = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t output_tokens = 0;

  bool operator==(const Prediction&) const = default;
};

struct SelectionParams {
  double k_it_fraction = 0.5;  // cross-modal cut, fraction of pool size
  int k_ii = 10;               // image-image cut
  int k_tt = 3;                // text-text cut = final shot count

  void validate() const;
};

struct GateConfig {
  double delta = 0.4;  // entropy gate, nats; +inf disables gating
  int tts_n = 3;
  double bleu2_consistency_threshold = 0.5;
  double epsilon_significance = 0.05;

  void validate() const;
};

void validate_gold(const GoldAnswer& gold);
void validate_sample(const Sample& sample);
void validate_demonstration(const Demonstration& demo);

// One violation string per problem; duplicate ids reported once per id value.
std::vector<std::string> validate_dataset(const std::vector<Sample>& samples);

// JSON round-trip support for every value type above.
void to_json(json& j, const GoldAnswer& g);
void from_json(const json& j, GoldAnswer& g);
void to_json(json& j, const Sample& s);
void from_json(const json& j, Sample& s);
void to_json(json& j, const Annotation& a);
void from_json(const json& j, Annotation& a);
void to_json(json& j, const Demonstration& d);
void from_json(const json& j, Demonstration& d);
void to_json(json& j, const TokenDistribution& t);
void from_json(const json& j, TokenDistribution& t);
void to_json(json& j, const Prediction& p);
void from_json(const json& j, Prediction& p);
void to_json(json& j, const SelectionParams& p);
void from_json(const json& j, SelectionParams& p);
void to_json(json& j, const GateConfig& g);
void from_json(const json& j, GateConfig& g);

std::string annotation_kind_name(AnnotationKind k);
AnnotationKind annotation_kind_from_name(const std::string& name);
std::string annotation_source_name(AnnotationSource s);
AnnotationSource annotation_source_from_name(const std::string& name);

// Infinity is not representable in JSON; delta serializes as the string "inf".
json delta_to_json(double delta);
double delta_from_json(const json& j);

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);
std::string floats_to_base64(const std::vector<float>& v);
std::vector<float> base64_to_floats(const std::string& text);

}  // namespace icd
