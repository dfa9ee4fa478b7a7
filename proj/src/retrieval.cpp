#include "icd/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "icd/metrics.hpp"

namespace icd::retrieval {

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("cosine of mismatched dimensions");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine of zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::size_t> top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  k = std::min(k, idx.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
  idx.resize(k);
  return idx;
}

namespace {

void check_query(const QueryFeatures& query, const Pool& pool) {
  if (pool.empty()) throw std::invalid_argument("selection over an empty pool");
  if (query.image_embedding.size() != pool.dimension() ||
      query.text_embedding.size() != pool.dimension()) {
    throw std::invalid_argument("query dimension does not match pool");
  }
}

std::size_t stage1_cut(double fraction, std::size_t pool_size) {
  const auto k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(pool_size)));
  return std::max<std::size_t>(1, std::min(k, pool_size));
}

enum class Score { text_vs_query_image, image_vs_query_image, text_vs_query_text };

double score_entry(const Demonstration& d, const QueryFeatures& q, Score kind) {
  switch (kind) {
    case Score::text_vs_query_image:
      return cosine_similarity(d.text_embedding, q.image_embedding);
    case Score::image_vs_query_image:
      return cosine_similarity(d.image_embedding, q.image_embedding);
    case Score::text_vs_query_text:
      return cosine_similarity(d.text_embedding, q.text_embedding);
  }
  throw std::logic_error("bad score kind");
}

// Keep the top k of `candidates` (pool indices) under `kind`, ties to the
// smaller pool index, result in descending score order.
std::vector<std::size_t> cut_stage(const std::vector<std::size_t>& candidates,
                                   const QueryFeatures& query, const Pool& pool,
                                   Score kind, std::size_t k) {
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores[i] = score_entry(pool.entries()[candidates[i]], query, kind);
  }
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  k = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
  std::vector<std::size_t> kept(k);
  for (std::size_t i = 0; i < k; ++i) kept[i] = candidates[order[i]];
  return kept;
}

std::vector<std::size_t> all_indices(const Pool& pool) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace

std::vector<std::size_t> select_demo(const QueryFeatures& query, const Pool& pool,
                                     const SelectionParams& params) {
  params.validate();
  check_query(query, pool);
  auto kept = cut_stage(all_indices(pool), query, pool, Score::text_vs_query_image,
                        stage1_cut(params.k_it_fraction, pool.size()));
  kept = cut_stage(kept, query, pool, Score::image_vs_query_image,
                   static_cast<std::size_t>(params.k_ii));
  return cut_stage(kept, query, pool, Score::text_vs_query_text,
                   static_cast<std::size_t>(params.k_tt));
}

std::vector<std::size_t> brute_force_select(const QueryFeatures& query,
                                            const Pool& pool,
                                            const SelectionParams& params) {
  params.validate();
  check_query(query, pool);

  auto rank_all = [&](const std::vector<std::size_t>& candidates, Score kind) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(candidates.size());
    for (std::size_t pool_idx : candidates) {
      scored.emplace_back(score_entry(pool.entries()[pool_idx], query, kind), pool_idx);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::size_t> out;
    out.reserve(scored.size());
    for (const auto& [score, pool_idx] : scored) out.push_back(pool_idx);
    return out;
  };
  auto take = [](std::vector<std::size_t> v, std::size_t k) {
    v.resize(std::min(k, v.size()));
    return v;
  };

  auto kept = take(rank_all(all_indices(pool), Score::text_vs_query_image),
                   stage1_cut(params.k_it_fraction, pool.size()));
  kept = take(rank_all(kept, Score::image_vs_query_image),
              static_cast<std::size_t>(params.k_ii));
  return take(rank_all(kept, Score::text_vs_query_text),
              static_cast<std::size_t>(params.k_tt));
}

std::string selector_kind_name(SelectorKind k) {
  switch (k) {
    case SelectorKind::icd_cross_modal: return "icd_cross_modal";
    case SelectorKind::rices: return "rices";
    case SelectorKind::sq: return "sq";
    case SelectorKind::sq_i: return "sq_i";
    case SelectorKind::mmices: return "mmices";
    case SelectorKind::random: return "random";
  }
  throw std::logic_error("bad selector kind");
}

SelectorKind selector_kind_from_name(const std::string& name) {
  if (name == "icd_cross_modal") return SelectorKind::icd_cross_modal;
  if (name == "rices") return SelectorKind::rices;
  if (name == "sq") return SelectorKind::sq;
  if (name == "sq_i") return SelectorKind::sq_i;
  if (name == "mmices") return SelectorKind::mmices;
  if (name == "random") return SelectorKind::random;
  throw std::invalid_argument("unknown selector: " + name);
}

std::vector<std::size_t> select_baseline(SelectorKind kind, const QueryFeatures& query,
                                         const Pool& pool, const SelectionParams& params,
                                         std::uint64_t seed) {
  params.validate();
  check_query(query, pool);
  const auto k = static_cast<std::size_t>(params.k_tt);
  switch (kind) {
    case SelectorKind::icd_cross_modal:
      return select_demo(query, pool, params);
    case SelectorKind::rices:
      return cut_stage(all_indices(pool), query, pool, Score::image_vs_query_image, k);
    case SelectorKind::sq:
      return cut_stage(all_indices(pool), query, pool, Score::text_vs_query_text, k);
    case SelectorKind::sq_i: {
      auto kept = cut_stage(all_indices(pool), query, pool, Score::text_vs_query_text,
                            static_cast<std::size_t>(params.k_ii));
      return cut_stage(kept, query, pool, Score::image_vs_query_image, k);
    }
    case SelectorKind::mmices: {
      auto kept = cut_stage(all_indices(pool), query, pool, Score::image_vs_query_image,
                            static_cast<std::size_t>(params.k_ii));
      return cut_stage(kept, query, pool, Score::text_vs_query_text, k);
    }
    case SelectorKind::random: {
      auto idx = all_indices(pool);
      std::mt19937_64 rng(seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(std::min(k, idx.size()));
      return idx;
    }
  }
  throw std::logic_error("bad selector kind");
}

double demonstration_accuracy(const Pool& pool,
                              const std::vector<std::size_t>& selected,
                              const GoldAnswer& gold) {
  if (selected.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : selected) {
    if (metrics::exact_match(pool.entries().at(i).annotation.answer, gold)) ++hits;
  }
  return static_cast<double>(hits) / selected.size();
}

}  // namespace icd::retrieval
