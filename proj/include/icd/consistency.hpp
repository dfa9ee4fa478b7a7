#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icd/backends.hpp"
#include "icd/types.hpp"

namespace icd::consistency {

enum class ConsistencyKind { exact_all_pairs, pairwise_bleu2 };

struct ConsistencyPolicy {
  ConsistencyKind kind = ConsistencyKind::exact_all_pairs;
  int n = 3;
  double bleu_threshold = 0.5;  // pairwise smoothed BLEU-2 must exceed this
};

// answers.size() must equal policy.n; n = 1 is vacuously consistent.
bool is_consistent(const std::vector<std::string>& answers,
                   const ConsistencyPolicy& policy);

// Draws policy.n generations and keeps the first iff they agree. All n calls
// hit the ledger even when the batch is rejected; a backend failure mid-batch
// propagates and yields no annotation.
std::optional<Annotation> refine(backends::GenerationEndpoint& backend,
                                 const backends::GenerationRequest& request,
                                 const ConsistencyPolicy& policy,
                                 AnnotationKind kind, AnnotationSource source);

}  // namespace icd::consistency
