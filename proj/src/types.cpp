#include "icd/types.hpp"

#include <cmath>
#include <cstring>
#include <set>

namespace icd {

void Pool::append(Demonstration demo) {
  validate_demonstration(demo);
  if (demo.image_embedding.size() != dimension_) {
    throw std::invalid_argument(
        "pool expects dimension " + std::to_string(dimension_) + ", got " +
        std::to_string(demo.image_embedding.size()));
  }
  if (capacity_ && entries_.size() >= *capacity_ && *capacity_ > 0) {
    entries_.erase(entries_.begin());
  }
  entries_.push_back(std::move(demo));
}

double TokenDistribution::coverage() const {
  double total = 0.0;
  for (const auto& [tok, p] : probs) total += p;
  return total;
}

void TokenDistribution::validate() const {
  if (probs.empty()) throw std::invalid_argument("empty token distribution");
  for (const auto& [tok, p] : probs) {
    if (!(p > 0.0) || p > 1.0 || !std::isfinite(p)) {
      throw std::invalid_argument("token probability out of (0,1]: " + tok);
    }
  }
  const double total = coverage();
  if (total > 1.0 + 1e-9) {
    throw std::invalid_argument("distribution coverage exceeds 1");
  }
  if (!is_truncated && total < 1.0 - 1e-9) {
    throw std::invalid_argument("distribution mass missing but not marked truncated");
  }
}

void SelectionParams::validate() const {
  if (!(k_it_fraction > 0.0) || k_it_fraction > 1.0) {
    throw std::invalid_argument("k_it_fraction must be in (0,1]");
  }
  if (k_ii < 1) throw std::invalid_argument("k_ii must be positive");
  if (k_tt < 1) throw std::invalid_argument("k_tt must be positive");
  if (k_tt > k_ii) throw std::invalid_argument("k_tt must not exceed k_ii");
}

void GateConfig::validate() const {
  if (std::isnan(delta) || delta < 0.0) {
    throw std::invalid_argument("delta must be non-negative");
  }
  if (tts_n < 1) throw std::invalid_argument("tts_n must be positive");
  if (bleu2_consistency_threshold < 0.0 || bleu2_consistency_threshold > 1.0) {
    throw std::invalid_argument("bleu2_consistency_threshold must be in [0,1]");
  }
  if (!(epsilon_significance > 0.0) || epsilon_significance >= 1.0) {
    throw std::invalid_argument("epsilon_significance must be in (0,1)");
  }
}

void validate_gold(const GoldAnswer& gold) {
  if (gold.texts.empty()) throw std::invalid_argument("gold has no texts");
  if (gold.kind == GoldAnswer::Kind::label && gold.texts.size() != 1) {
    throw std::invalid_argument("label gold must have exactly one text");
  }
}

void validate_sample(const Sample& sample) {
  if (sample.id.empty()) throw std::invalid_argument("sample id empty");
  if (sample.question.empty()) {
    throw std::invalid_argument("sample \"" + sample.id + "\": question empty");
  }
  if (!sample.options.empty() && sample.options.size() < 2) {
    throw std::invalid_argument("sample \"" + sample.id +
                                "\": options need at least 2 entries");
  }
  if (sample.gold) validate_gold(*sample.gold);
}

void validate_demonstration(const Demonstration& demo) {
  validate_sample(demo.sample);
  if (demo.annotation.answer.empty()) {
    throw std::invalid_argument("demonstration answer empty");
  }
  if (demo.annotation.consistency_votes < 1) {
    throw std::invalid_argument("consistency_votes must be positive");
  }
  if (demo.image_embedding.empty() ||
      demo.image_embedding.size() != demo.text_embedding.size()) {
    throw std::invalid_argument("embedding dimensions differ or are zero");
  }
  for (float x : demo.image_embedding) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite embedding");
  }
  for (float x : demo.text_embedding) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite embedding");
  }
}

std::vector<std::string> validate_dataset(const std::vector<Sample>& samples) {
  std::vector<std::string> violations;
  std::set<std::string> seen, reported_dups;
  for (const auto& s : samples) {
    if (!s.id.empty()) {
      if (seen.count(s.id) && !reported_dups.count(s.id)) {
        violations.push_back("duplicate id \"" + s.id + "\"");
        reported_dups.insert(s.id);
      }
      seen.insert(s.id);
    }
    try {
      validate_sample(s);
    } catch (const std::invalid_argument& e) {
      violations.push_back(e.what());
    }
  }
  return violations;
}

void to_json(json& j, const GoldAnswer& g) {
  j = json{{"kind", g.kind == GoldAnswer::Kind::label ? "label" : "caption"},
           {"texts", g.texts}};
}

void from_json(const json& j, GoldAnswer& g) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "label") {
    g.kind = GoldAnswer::Kind::label;
  } else if (kind == "caption") {
    g.kind = GoldAnswer::Kind::caption;
  } else {
    throw std::invalid_argument("unknown gold kind: " + kind);
  }
  j.at("texts").get_to(g.texts);
}

void to_json(json& j, const Sample& s) {
  j = json{{"id", s.id}, {"image", s.image}, {"question", s.question}};
  if (!s.options.empty()) j["options"] = s.options;
  if (s.gold) j["gold"] = *s.gold;
}

void from_json(const json& j, Sample& s) {
  j.at("id").get_to(s.id);
  j.at("image").get_to(s.image);
  j.at("question").get_to(s.question);
  s.options.clear();
  if (j.contains("options")) j.at("options").get_to(s.options);
  s.gold.reset();
  if (j.contains("gold") && !j.at("gold").is_null()) {
    s.gold = j.at("gold").get<GoldAnswer>();
  }
}

std::string annotation_kind_name(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::label: return "label";
    case AnnotationKind::label_plus_description: return "label_plus_description";
    case AnnotationKind::label_plus_cot: return "label_plus_cot";
  }
  throw std::logic_error("bad annotation kind");
}

AnnotationKind annotation_kind_from_name(const std::string& name) {
  if (name == "label") return AnnotationKind::label;
  if (name == "label_plus_description") return AnnotationKind::label_plus_description;
  if (name == "label_plus_cot") return AnnotationKind::label_plus_cot;
  throw std::invalid_argument("unknown annotation kind: " + name);
}

std::string annotation_source_name(AnnotationSource s) {
  switch (s) {
    case AnnotationSource::teacher: return "teacher";
    case AnnotationSource::student_self: return "student_self";
    case AnnotationSource::oracle: return "oracle";
  }
  throw std::logic_error("bad annotation source");
}

AnnotationSource annotation_source_from_name(const std::string& name) {
  if (name == "teacher") return AnnotationSource::teacher;
  if (name == "student_self") return AnnotationSource::student_self;
  if (name == "oracle") return AnnotationSource::oracle;
  throw std::invalid_argument("unknown annotation source: " + name);
}

void to_json(json& j, const Annotation& a) {
  j = json{{"answer", a.answer},
           {"kind", annotation_kind_name(a.kind)},
           {"source", annotation_source_name(a.source)},
           {"consistency_votes", a.consistency_votes}};
}

void from_json(const json& j, Annotation& a) {
  j.at("answer").get_to(a.answer);
  a.kind = annotation_kind_from_name(j.at("kind").get<std::string>());
  a.source = annotation_source_from_name(j.at("source").get<std::string>());
  j.at("consistency_votes").get_to(a.consistency_votes);
}

void to_json(json& j, const Demonstration& d) {
  j = json{{"sample", d.sample},
           {"annotation", d.annotation},
           {"image_embedding_b64", floats_to_base64(d.image_embedding)},
           {"text_embedding_b64", floats_to_base64(d.text_embedding)}};
}

void from_json(const json& j, Demonstration& d) {
  j.at("sample").get_to(d.sample);
  j.at("annotation").get_to(d.annotation);
  d.image_embedding = base64_to_floats(j.at("image_embedding_b64").get<std::string>());
  d.text_embedding = base64_to_floats(j.at("text_embedding_b64").get<std::string>());
}

void to_json(json& j, const TokenDistribution& t) {
  j = json{{"probs", t.probs}, {"is_truncated", t.is_truncated}};
}

void from_json(const json& j, TokenDistribution& t) {
  j.at("probs").get_to(t.probs);
  j.at("is_truncated").get_to(t.is_truncated);
}

void to_json(json& j, const Prediction& p) {
  j = json{{"text", p.text},
           {"token_dists", p.token_dists},
           {"uncertainty", p.uncertainty},
           {"latency_us", p.latency_us},
           {"prompt_tokens", p.prompt_tokens},
           {"output_tokens", p.output_tokens}};
}

void from_json(const json& j, Prediction& p) {
  j.at("text").get_to(p.text);
  j.at("token_dists").get_to(p.token_dists);
  j.at("uncertainty").get_to(p.uncertainty);
  j.at("latency_us").get_to(p.latency_us);
  j.at("prompt_tokens").get_to(p.prompt_tokens);
  j.at("output_tokens").get_to(p.output_tokens);
}

void to_json(json& j, const SelectionParams& p) {
  j = json{{"k_it_fraction", p.k_it_fraction}, {"k_ii", p.k_ii}, {"k_tt", p.k_tt}};
}

void from_json(const json& j, SelectionParams& p) {
  j.at("k_it_fraction").get_to(p.k_it_fraction);
  j.at("k_ii").get_to(p.k_ii);
  j.at("k_tt").get_to(p.k_tt);
}

void to_json(json& j, const GateConfig& g) {
  j = json{{"delta", delta_to_json(g.delta)},
           {"tts_n", g.tts_n},
           {"bleu2_consistency_threshold", g.bleu2_consistency_threshold},
           {"epsilon_significance", g.epsilon_significance}};
}

void from_json(const json& j, GateConfig& g) {
  g.delta = delta_from_json(j.at("delta"));
  j.at("tts_n").get_to(g.tts_n);
  j.at("bleu2_consistency_threshold").get_to(g.bleu2_consistency_threshold);
  j.at("epsilon_significance").get_to(g.epsilon_significance);
}

json delta_to_json(double delta) {
  if (std::isinf(delta)) return json("inf");
  return json(delta);
}

double delta_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("delta string must be \"inf\"");
  }
  return j.get<double>();
}

namespace {
constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  throw std::invalid_argument("bad base64 character");
}
}  // namespace

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int chunk = data[i] << 16;
    if (i + 1 < len) chunk |= data[i + 1] << 8;
    if (i + 2 < len) chunk |= data[i + 2];
    out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
    out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Alphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[chunk & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("bad base64 length");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    unsigned int chunk = 0;
    for (int k = 0; k < 4; ++k) {
      char c = text[i + k];
      if (c == '=') {
        ++pad;
        chunk <<= 6;
      } else {
        if (pad > 0) throw std::invalid_argument("bad base64 padding");
        chunk = (chunk << 6) | static_cast<unsigned>(b64_value(c));
      }
    }
    out.push_back((chunk >> 16) & 0xFF);
    if (pad < 2) out.push_back((chunk >> 8) & 0xFF);
    if (pad < 1) out.push_back(chunk & 0xFF);
  }
  return out;
}

std::string floats_to_base64(const std::vector<float>& v) {
  std::vector<unsigned char> bytes(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &v[i], 4);
    bytes[i * 4 + 0] = bits & 0xFF;  // little endian on the wire
    bytes[i * 4 + 1] = (bits >> 8) & 0xFF;
    bytes[i * 4 + 2] = (bits >> 16) & 0xFF;
    bytes[i * 4 + 3] = (bits >> 24) & 0xFF;
  }
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<float> base64_to_floats(const std::string& text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % 4 != 0) throw std::invalid_argument("bad float payload");
  std::vector<float> v(bytes.size() / 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits = bytes[i * 4] | (bytes[i * 4 + 1] << 8) |
                         (bytes[i * 4 + 2] << 16) |
                         (static_cast<std::uint32_t>(bytes[i * 4 + 3]) << 24);
    std::memcpy(&v[i], &bits, 4);
  }
  return v;
}

}  // namespace icd
