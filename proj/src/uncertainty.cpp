#include "icd/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace icd::uncertainty {

std::string entropy_variant_name(EntropyVariant v) {
  switch (v) {
    case EntropyVariant::all_sequence: return "all_sequence";
    case EntropyVariant::first_token: return "first_token";
    case EntropyVariant::eos_token: return "eos_token";
  }
  throw std::logic_error("bad entropy variant");
}

EntropyVariant entropy_variant_from_name(const std::string& name) {
  if (name == "all_sequence") return EntropyVariant::all_sequence;
  if (name == "first_token") return EntropyVariant::first_token;
  if (name == "eos_token") return EntropyVariant::eos_token;
  throw std::invalid_argument("unknown entropy variant: " + name);
}

double token_entropy(const TokenDistribution& dist) {
  dist.validate();
  const double cover = dist.coverage();
  double h = 0.0;
  for (const auto& [tok, p] : dist.probs) {
    const double q = p / cover;
    h -= q * std::log(q);
  }
  return std::max(h, 0.0);
}

double sequence_entropy(const std::vector<TokenDistribution>& dists,
                        EntropyVariant variant) {
  if (dists.empty()) throw std::invalid_argument("entropy of empty sequence");
  switch (variant) {
    case EntropyVariant::first_token:
      return token_entropy(dists.front());
    case EntropyVariant::eos_token:
      return token_entropy(dists.back());
    case EntropyVariant::all_sequence: {
      double sum = 0.0;
      for (const auto& d : dists) sum += token_entropy(d);
      return sum / dists.size();
    }
  }
  throw std::logic_error("bad entropy variant");
}

double calibrate_threshold(const std::vector<CalibrationRecord>& records,
                           const CalibrationTarget& target) {
  if (records.empty()) throw std::invalid_argument("calibrate on empty records");
  std::vector<double> us;
  us.reserve(records.size());
  for (const auto& r : records) us.push_back(r.uncertainty);
  std::sort(us.begin(), us.end());

  if (target.mode == CalibrationMode::quantile) {
    if (target.q < 0.0 || target.q > 1.0) {
      throw std::invalid_argument("quantile must be in [0,1]");
    }
    const double h = target.q * (us.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= us.size()) return us.back();
    return us[lo] + (h - lo) * (us[lo + 1] - us[lo]);
  }

  bool any_correct = false, any_wrong = false;
  for (const auto& r : records) (r.correct ? any_correct : any_wrong) = true;
  if (!any_correct || !any_wrong) {
    throw std::invalid_argument("calibration needs both outcomes present");
  }

  us.erase(std::unique(us.begin(), us.end()), us.end());
  if (us.size() < 2) {
    throw std::invalid_argument("calibration needs at least two distinct uncertainties");
  }

  double best_delta = 0.0;
  std::size_t best_score = 0;
  bool have = false;
  for (std::size_t i = 0; i + 1 < us.size(); ++i) {
    const double delta = (us[i] + us[i + 1]) / 2.0;
    std::size_t score = 0;
    for (const auto& r : records) {
      const bool accepted = r.uncertainty < delta;
      if (accepted == r.correct) ++score;
    }
    if (!have || score > best_score) {
      best_delta = delta;
      best_score = score;
      have = true;
    }
  }
  return best_delta;
}

metrics::Correlation uncertainty_correlation(
    const std::vector<CalibrationRecord>& records) {
  std::vector<double> us;
  std::vector<int> correct;
  us.reserve(records.size());
  correct.reserve(records.size());
  for (const auto& r : records) {
    us.push_back(r.uncertainty);
    correct.push_back(r.correct ? 1 : 0);
  }
  return metrics::point_biserial(us, correct);
}

}  // namespace icd::uncertainty
