#include "icd/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "icd/metrics.hpp"

namespace icd::backends {

std::uint64_t stable_hash(const std::string& text, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix finisher to spread low-entropy inputs
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() {  // [0,1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
  }

  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

 private:
  std::uint64_t state_;
};

constexpr int kAlternatives = 15;
const double kMaxSimEntropy = std::log(kAlternatives + 1.0);

std::int64_t approx_tokens(const std::string& text) {
  return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::int64_t word_count(const std::string& text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word) {
      ++n;
      in_word = true;
    }
  }
  return std::max<std::int64_t>(n, 1);
}

}  // namespace

std::string sim_image_ref(const std::string& cls, std::size_t n) {
  return "sim://" + cls + "/" + std::to_string(n);
}

std::string sim_class_of_image(const std::string& image_ref) {
  const std::string prefix = "sim://";
  if (image_ref.rfind(prefix, 0) != 0) return "";
  const auto slash = image_ref.find('/', prefix.size());
  if (slash == std::string::npos) return "";
  return image_ref.substr(prefix.size(), slash - prefix.size());
}

TokenDistribution distribution_with_entropy(const std::string& answer_token,
                                            double target) {
  target = std::clamp(target, 1e-6, kMaxSimEntropy - 1e-6);
  // H(p) for {p on the answer, (1-p)/m on each of m alternatives} decreases
  // monotonically in p on [1/(m+1), 1]; bisect for the target.
  auto entropy_of = [](double p) {
    const double rest = 1.0 - p;
    if (rest <= 0.0) return 0.0;
    return -p * std::log(p) - rest * std::log(rest / kAlternatives);
  };
  double lo = 1.0 / (kAlternatives + 1.0), hi = 1.0 - 1e-15;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = (lo + hi) / 2.0;
    if (entropy_of(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double p = (lo + hi) / 2.0;
  TokenDistribution dist;
  dist.probs[answer_token] = p;
  const double alt = (1.0 - p) / kAlternatives;
  for (int i = 0; i < kAlternatives; ++i) {
    std::string key = "alt_" + std::to_string(i);
    if (key == answer_token) key += "_";
    dist.probs[key] = alt;
  }
  dist.is_truncated = false;
  return dist;
}

SimulatedAgent::SimulatedAgent(EndpointConfig config, Role role,
                               std::shared_ptr<CostLedger> ledger)
    : config_(std::move(config)), role_(role), ledger_(std::move(ledger)) {}

Prediction SimulatedAgent::generate(const GenerationRequest& request) {
  request.validate();
  const std::uint64_t call = counter_.fetch_add(1);
  if (config_.max_calls && static_cast<std::int64_t>(call) >= *config_.max_calls) {
    throw BudgetExceeded(role_name(role_) + " endpoint call cap reached");
  }
  const SimProfile& prof = config_.profile;
  Rng rng(stable_hash("call", prof.seed ^ (call * 0x100000001b3ULL)));

  const std::string cls = sim_class_of_image(request.image);
  double p_correct = prof.competence_for(cls);
  if (!cls.empty() && prof.icl_gain_per_match > 0.0) {
    int matches = 0;
    const GoldAnswer gold{GoldAnswer::Kind::label, {cls}};
    for (const auto& d : request.demonstrations) {
      if (sim_class_of_image(d.image) == cls &&
          metrics::exact_match(d.answer, gold)) {
        ++matches;
      }
    }
    p_correct += prof.icl_gain_per_match * matches;
  }
  p_correct = std::clamp(p_correct, 0.0, 1.0);

  const bool correct = rng.uniform() < p_correct;
  std::string answer;
  if (cls.empty()) {
    answer = correct ? "unknown" : "wrong";
    if (!prof.labels.empty()) answer = prof.labels[rng.below(prof.labels.size())];
  } else if (correct) {
    answer = cls;
  } else {
    std::vector<std::string> others;
    for (const auto& l : prof.labels) {
      if (l != cls) others.push_back(l);
    }
    answer = others.empty() ? "not_" + cls : others[rng.below(others.size())];
  }

  Prediction pred;
  pred.text = answer;
  if (request.want_token_probs) {
    const double mean = correct ? prof.entropy_correct_mean : prof.entropy_wrong_mean;
    const double sd = correct ? prof.entropy_correct_stddev : prof.entropy_wrong_stddev;
    const double target = mean + sd * rng.gaussian();
    const auto words = word_count(answer);
    for (std::int64_t j = 0; j < words; ++j) {
      pred.token_dists.push_back(distribution_with_entropy(answer, target));
    }
    double h = 0.0;
    for (const auto& d : pred.token_dists) {
      for (const auto& [tok, p] : d.probs) h -= p * std::log(p);
    }
    pred.uncertainty = h / pred.token_dists.size();
  }
  pred.prompt_tokens = approx_tokens(build_prompt(request));
  pred.output_tokens = word_count(answer);
  pred.latency_us = config_.profile.latency_us_per_call +
                    config_.profile.latency_us_per_token *
                        (pred.prompt_tokens + pred.output_tokens);
  ledger_->record(role_, pred.prompt_tokens, pred.output_tokens, pred.latency_us);
  return pred;
}

SimulatedEncoder::SimulatedEncoder(SimEncoderConfig config,
                                   std::shared_ptr<CostLedger> ledger)
    : config_(std::move(config)), ledger_(std::move(ledger)) {
  if (config_.dimension < 2) throw std::invalid_argument("encoder dimension too small");
}

std::vector<float> SimulatedEncoder::class_direction(const std::string& cls) const {
  Rng rng(stable_hash("class:" + cls, config_.seed));
  std::vector<double> v(config_.dimension);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(v[i] / norm);
  }
  return out;
}

// A unit-norm perturbation keyed on `key`, so `noise` measures the offset
// relative to the unit class direction regardless of the dimension.
std::vector<double> SimulatedEncoder::unit_noise(const std::string& key) const {
  Rng rng(stable_hash(key, config_.seed));
  std::vector<double> n(config_.dimension);
  double norm = 0.0;
  for (auto& x : n) {
    x = rng.gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    n[0] = 1.0;
    norm = 1.0;
  }
  for (auto& x : n) x /= norm;
  return n;
}

std::vector<float> SimulatedEncoder::finish(std::vector<double> v,
                                            std::int64_t latency_us) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    norm = 1.0;
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(v[i] / norm);
  }
  ledger_->record(Role::encoder, 0, 0, latency_us);
  return out;
}

std::vector<float> SimulatedEncoder::embed_image(const std::string& image_ref) {
  const std::string cls = sim_class_of_image(image_ref);
  std::vector<double> v(config_.dimension, 0.0);
  if (!cls.empty()) {
    const auto dir = class_direction(cls);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = dir[i];
  }
  const auto n = unit_noise("image:" + image_ref);
  const double scale = cls.empty() ? 1.0 : config_.noise;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += scale * n[i];
  return finish(std::move(v), config_.latency_us_per_call);
}

std::vector<float> SimulatedEncoder::embed_text(const std::string& text) {
  const std::string norm = metrics::normalize_answer(text);
  // Longest label named in the text wins; ties to the lexicographically first.
  std::string found;
  for (const auto& label : config_.labels) {
    const std::string l = metrics::normalize_answer(label);
    if (l.empty() || norm.find(l) == std::string::npos) continue;
    if (l.size() > found.size() || (l.size() == found.size() && l < found)) {
      found = l;
    }
  }
  std::vector<double> v(config_.dimension, 0.0);
  if (!found.empty()) {
    const auto dir = class_direction(found);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = dir[i];
  }
  const auto n = unit_noise("text:" + norm);
  const double scale = found.empty() ? 1.0 : config_.noise;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += scale * n[i];
  return finish(std::move(v), config_.latency_us_per_call);
}

void to_json(json& j, const SimDataConfig& c) {
  j = json{{"classes", c.classes},
           {"labels", c.labels},
           {"samples", c.samples},
           {"support_samples", c.support_samples},
           {"seed", c.seed},
           {"question", c.question},
           {"with_options", c.with_options}};
}

void from_json(const json& j, SimDataConfig& c) {
  c = SimDataConfig{};
  if (j.contains("classes")) j.at("classes").get_to(c.classes);
  if (j.contains("labels")) j.at("labels").get_to(c.labels);
  if (j.contains("samples")) j.at("samples").get_to(c.samples);
  if (j.contains("support_samples")) j.at("support_samples").get_to(c.support_samples);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("question")) j.at("question").get_to(c.question);
  if (j.contains("with_options")) j.at("with_options").get_to(c.with_options);
}

std::vector<std::string> sim_class_labels(const SimDataConfig& config) {
  if (!config.labels.empty()) return config.labels;
  std::vector<std::string> labels;
  labels.reserve(config.classes);
  for (std::size_t i = 0; i < config.classes; ++i) {
    std::string n = std::to_string(i);
    while (n.size() < 2) n = "0" + n;
    labels.push_back("class_" + n);
  }
  return labels;
}

std::vector<Sample> make_sim_dataset(const SimDataConfig& config,
                                     const std::string& split) {
  const auto labels = sim_class_labels(config);
  if (labels.empty()) throw std::invalid_argument("simulated dataset needs classes");
  std::vector<std::size_t> assignment(config.samples);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    assignment[i] = i % labels.size();  // balanced
  }
  Rng rng(stable_hash("dataset:" + split, config.seed));
  for (std::size_t i = assignment.size(); i > 1; --i) {
    std::swap(assignment[i - 1], assignment[rng.below(i)]);
  }

  std::vector<Sample> samples;
  samples.reserve(config.samples);
  for (std::size_t i = 0; i < config.samples; ++i) {
    const auto& cls = labels[assignment[i]];
    Sample s;
    std::string n = std::to_string(i);
    while (n.size() < 5) n = "0" + n;
    s.id = split + n;
    s.image = sim_image_ref(cls, i);
    s.question = config.question;
    if (config.with_options) {
      // The right label plus three seeded distractors, shuffled, with the
      // gold given in "letter: label" form.
      std::vector<std::string> opts{cls};
      while (opts.size() < std::min<std::size_t>(4, labels.size())) {
        const auto& cand = labels[rng.below(labels.size())];
        if (std::find(opts.begin(), opts.end(), cand) == opts.end()) {
          opts.push_back(cand);
        }
      }
      for (std::size_t k = opts.size(); k > 1; --k) {
        std::swap(opts[k - 1], opts[rng.below(k)]);
      }
      std::vector<std::string> rendered;
      std::string gold_text;
      for (std::size_t k = 0; k < opts.size(); ++k) {
        const std::string letter(1, static_cast<char>('A' + k));
        rendered.push_back(letter + ": " + opts[k]);
        if (opts[k] == cls) gold_text = rendered.back();
      }
      s.options = rendered;
      s.gold = GoldAnswer{GoldAnswer::Kind::label, {gold_text}};
    } else {
      s.gold = GoldAnswer{GoldAnswer::Kind::label, {cls}};
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace icd::backends
