#include "icd/consistency.hpp"

#include "icd/metrics.hpp"

namespace icd::consistency {

bool is_consistent(const std::vector<std::string>& answers,
                   const ConsistencyPolicy& policy) {
  if (policy.n < 1) throw std::invalid_argument("policy.n must be positive");
  if (answers.size() != static_cast<std::size_t>(policy.n)) {
    throw std::invalid_argument("expected " + std::to_string(policy.n) +
                                " answers, got " + std::to_string(answers.size()));
  }
  if (answers.size() == 1) return true;

  if (policy.kind == ConsistencyKind::exact_all_pairs) {
    const std::string first = metrics::normalize_answer(answers[0]);
    for (std::size_t i = 1; i < answers.size(); ++i) {
      if (metrics::normalize_answer(answers[i]) != first) return false;
    }
    return true;
  }

  metrics::BleuConfig bleu2;
  bleu2.max_n = 2;
  bleu2.smoothing = metrics::BleuSmoothing::add_one_on_zero_counts;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    for (std::size_t j = 0; j < answers.size(); ++j) {
      if (i == j) continue;
      if (!(metrics::bleu(answers[i], {answers[j]}, bleu2) > policy.bleu_threshold)) {
        return false;
      }
    }
  }
  return true;
}

std::optional<Annotation> refine(backends::GenerationEndpoint& backend,
                                 const backends::GenerationRequest& request,
                                 const ConsistencyPolicy& policy,
                                 AnnotationKind kind, AnnotationSource source) {
  if (policy.n < 1) throw std::invalid_argument("policy.n must be positive");
  std::vector<std::string> answers;
  answers.reserve(policy.n);
  for (int i = 0; i < policy.n; ++i) {
    answers.push_back(backend.generate(request).text);
  }
  if (!is_consistent(answers, policy)) return std::nullopt;
  if (answers[0].empty()) return std::nullopt;
  Annotation ann;
  ann.answer = answers[0];
  ann.kind = kind;
  ann.source = source;
  ann.consistency_votes = policy.n;
  return ann;
}

}  // namespace icd::consistency
