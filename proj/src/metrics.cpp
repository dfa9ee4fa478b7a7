#include "icd/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include <boost/math/distributions/students_t.hpp>

namespace icd::metrics {

std::string normalize_answer(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;  // leading whitespace drops
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
      in_space = false;
    }
  }
  auto is_trim = [](char c) {
    return c == ' ' || c == '.' || c == ',' || c == '!' || c == '?';
  };
  while (!out.empty() && is_trim(out.back())) out.pop_back();
  return out;
}

std::optional<std::string> extract_option_letter(const std::string& text) {
  const std::string norm = normalize_answer(text);
  if (norm.size() == 1 && std::isalpha(static_cast<unsigned char>(norm[0]))) {
    return norm;
  }
  std::size_t i = 0;
  if (i < norm.size() && norm[i] == '(') ++i;
  if (i >= norm.size() || !std::isalpha(static_cast<unsigned char>(norm[i]))) {
    return std::nullopt;
  }
  const char letter = norm[i++];
  if (i >= norm.size()) return std::nullopt;
  const char sep = norm[i];
  if (sep != ')' && sep != ':' && sep != '.' && sep != ',') return std::nullopt;
  ++i;
  if (i >= norm.size() || norm[i] != ' ') return std::nullopt;
  return std::string(1, letter);
}

bool exact_match(const std::string& pred, const GoldAnswer& gold) {
  validate_gold(gold);
  if (gold.kind != GoldAnswer::Kind::label) {
    throw std::invalid_argument("exact_match needs a label gold");
  }
  const std::string p = normalize_answer(pred);
  const std::string g = normalize_answer(gold.texts[0]);
  if (p == g) return true;
  const auto pl = extract_option_letter(pred);
  const auto gl = extract_option_letter(gold.texts[0]);
  return pl && gl && *pl == *gl;
}

std::vector<std::string> bleu_tokenize(const std::string& text, bool case_fold) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(case_fold ? std::tolower(c) : c));
    } else {
      flush();
      tokens.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return tokens;
}

namespace {
using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)]++;
  }
  return counts;
}
}  // namespace

double bleu(const std::string& candidate, const std::vector<std::string>& references,
            const BleuConfig& cfg) {
  if (cfg.max_n < 1) throw std::invalid_argument("max_n must be positive");
  if (references.empty()) throw std::invalid_argument("bleu needs references");
  const auto cand = bleu_tokenize(candidate, cfg.case_fold);
  if (cand.empty()) return 0.0;

  std::vector<std::vector<std::string>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(bleu_tokenize(r, cfg.case_fold));

  // Effective reference length: closest to the candidate, ties to the shorter.
  std::size_t ref_len = refs[0].size();
  for (const auto& r : refs) {
    const auto cur = static_cast<long long>(r.size());
    const auto best = static_cast<long long>(ref_len);
    const auto c = static_cast<long long>(cand.size());
    if (std::llabs(cur - c) < std::llabs(best - c) ||
        (std::llabs(cur - c) == std::llabs(best - c) && r.size() < ref_len)) {
      ref_len = r.size();
    }
  }

  const int orders = std::min<int>(cfg.max_n, static_cast<int>(cand.size()));
  double log_sum = 0.0;
  for (int n = 1; n <= orders; ++n) {
    const auto cand_counts = count_ngrams(cand, n);
    long long total = 0, matched = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      int best = 0;
      for (const auto& r : refs) {
        const auto rc = count_ngrams(r, n);
        auto it = rc.find(gram);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      matched += std::min(count, best);
    }
    double p;
    if (matched > 0) {
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else if (cfg.smoothing == BleuSmoothing::add_one_on_zero_counts) {
      p = 1.0 / static_cast<double>(total + 1);
    } else {
      return 0.0;
    }
    log_sum += std::log(p) / orders;
  }

  double bp = 1.0;
  if (cand.size() < ref_len) {
    bp = std::exp(1.0 - static_cast<double>(ref_len) / cand.size());
  }
  return bp * std::exp(log_sum);
}

Correlation point_biserial(const std::vector<double>& continuous,
                           const std::vector<int>& binary) {
  if (continuous.size() != binary.size()) {
    throw std::invalid_argument("point_biserial input lengths differ");
  }
  const std::size_t n = continuous.size();
  if (n < 3) throw std::invalid_argument("point_biserial needs n >= 3");

  double sum1 = 0.0, sum0 = 0.0, sum = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (binary[i] != 0 && binary[i] != 1) {
      throw std::invalid_argument("binary values must be 0 or 1");
    }
    sum += continuous[i];
    if (binary[i] == 1) {
      sum1 += continuous[i];
      ++n1;
    } else {
      sum0 += continuous[i];
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) {
    throw std::invalid_argument("point_biserial needs both classes present");
  }
  const double mean = sum / n;
  double var = 0.0;
  for (double x : continuous) var += (x - mean) * (x - mean);
  var /= n;  // population variance
  if (var <= 0.0) {
    throw std::invalid_argument("point_biserial needs nonzero variance");
  }

  const double m1 = sum1 / n1;
  const double m0 = sum0 / n0;
  double r = (m1 - m0) / std::sqrt(var) *
             std::sqrt(static_cast<double>(n1) * n0 / (static_cast<double>(n) * n));
  r = std::clamp(r, -1.0, 1.0);

  Correlation result{r, 0.0, n};
  if (std::abs(r) >= 1.0) {
    result.p_value = 0.0;
    return result;
  }
  const double t = r * std::sqrt((n - 2) / (1.0 - r * r));
  boost::math::students_t dist(static_cast<double>(n - 2));
  result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return result;
}

double accuracy(const std::vector<ScoredPrediction>& records) {
  if (records.empty()) throw std::invalid_argument("accuracy of empty input");
  std::size_t correct = 0;
  for (const auto& rec : records) {
    if (exact_match(rec.pred, rec.gold)) ++correct;
  }
  return static_cast<double>(correct) / records.size();
}

double paired_one_sided_p(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("paired test needs matched inputs, n >= 2");
  }
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    mean += diff[i];
  }
  mean /= n;
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  var /= (n - 1);
  if (var <= 0.0) return mean > 0.0 ? 0.0 : 1.0;
  const double t = mean / std::sqrt(var / n);
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace icd::metrics
