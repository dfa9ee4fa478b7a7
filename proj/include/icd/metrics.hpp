#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icd/types.hpp"

namespace icd::metrics {

// Lowercase, trim, collapse internal whitespace, strip trailing . , ! ?
// Idempotent.
std::string normalize_answer(const std::string& text);

// A side contributes an option letter when, normalized, it is a bare single
// letter or starts with an optional "(" + letter + one of ") : . ," + space.
std::optional<std::string> extract_option_letter(const std::string& text);

// Normalized equality, with an option-letter fallback ("b" matches
// "B: Fragmentation of nuclei"). Caption golds are an error.
bool exact_match(const std::string& pred, const GoldAnswer& gold);

enum class BleuSmoothing { none, add_one_on_zero_counts };

struct BleuConfig {
  int max_n = 4;
  BleuSmoothing smoothing = BleuSmoothing::none;
  bool case_fold = true;
};

// Punctuation characters become their own tokens, then whitespace split.
std::vector<std::string> bleu_tokenize(const std::string& text, bool case_fold);

// Sentence BLEU: modified n-gram precision, brevity penalty, geometric mean
// over the orders the candidate has. Empty candidate scores 0.
double bleu(const std::string& candidate, const std::vector<std::string>& references,
            const BleuConfig& cfg = {});

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Point-biserial r with the population std of all continuous values; p from a
// two-sided t test with n-2 degrees of freedom. Requires both classes present
// and nonzero variance (and n >= 3 for the p-value).
Correlation point_biserial(const std::vector<double>& continuous,
                           const std::vector<int>& binary);

struct ScoredPrediction {
  std::string pred;
  GoldAnswer gold;
};

double accuracy(const std::vector<ScoredPrediction>& records);

// Paired one-sided t test: small p means a reliably exceeds b.
double paired_one_sided_p(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace icd::metrics
