#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icd/types.hpp"

namespace icd::retrieval {

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

// Indices of the k largest scores, descending, ties to the smaller index.
// k past the end returns everything sorted.
std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k);

struct QueryFeatures {
  std::vector<float> image_embedding;
  std::vector<float> text_embedding;
};

// Three cuts in order: pool text vs query image (k_it_fraction of the pool,
// at least one), then image vs image (k_ii), then text vs text (k_tt). Each
// cut clamps to what is left. Returns pool indices in final-stage order.
std::vector<std::size_t> select_demo(const QueryFeatures& query, const Pool& pool,
                                     const SelectionParams& params);

// Same contract, full stable sort at every stage. Reference implementation
// for equivalence checks; do not fold into select_demo.
std::vector<std::size_t> brute_force_select(const QueryFeatures& query,
                                            const Pool& pool,
                                            const SelectionParams& params);

enum class SelectorKind { icd_cross_modal, rices, sq, sq_i, mmices, random };

std::string selector_kind_name(SelectorKind k);
SelectorKind selector_kind_from_name(const std::string& name);

// rices: image-image. sq: text-text. sq_i: text-text prefilter (k_ii) then
// image-image. mmices: image-image prefilter (k_ii) then text-text.
// random: seeded, without replacement, in draw order.
std::vector<std::size_t> select_baseline(SelectorKind kind, const QueryFeatures& query,
                                         const Pool& pool, const SelectionParams& params,
                                         std::uint64_t seed = 0);

// Fraction of selected demonstrations whose annotation matches the gold.
double demonstration_accuracy(const Pool& pool,
                              const std::vector<std::size_t>& selected,
                              const GoldAnswer& gold);

}  // namespace icd::retrieval
