#pragma once

#include <string>
#include <vector>

#include "icd/metrics.hpp"
#include "icd/types.hpp"

namespace icd::uncertainty {

enum class EntropyVariant { all_sequence, first_token, eos_token };

std::string entropy_variant_name(EntropyVariant v);
EntropyVariant entropy_variant_from_name(const std::string& name);

// Shannon entropy in nats of one distribution, renormalized by its coverage.
double token_entropy(const TokenDistribution& dist);

// all_sequence: mean over positions; first_token / eos_token: that position.
// Empty sequences are an error.
double sequence_entropy(const std::vector<TokenDistribution>& dists,
                        EntropyVariant variant = EntropyVariant::all_sequence);

struct CalibrationRecord {
  double uncertainty = 0.0;
  bool correct = false;
};

enum class CalibrationMode { max_accuracy_split, quantile };

struct CalibrationTarget {
  CalibrationMode mode = CalibrationMode::max_accuracy_split;
  double q = 0.5;  // quantile mode only
};

// max_accuracy_split: candidate thresholds are midpoints of sorted unique
// uncertainties; picks the one whose accept-below / reject-above rule best
// predicts correctness, ties to the smallest. quantile: linear-interpolation
// quantile of the uncertainties.
double calibrate_threshold(const std::vector<CalibrationRecord>& records,
                           const CalibrationTarget& target = {});

metrics::Correlation uncertainty_correlation(
    const std::vector<CalibrationRecord>& records);

}  // namespace icd::uncertainty
