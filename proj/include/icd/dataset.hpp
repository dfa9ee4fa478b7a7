#pragma once

#include <string>
#include <vector>

#include "icd/types.hpp"

namespace icd {

// Datasets are JSONL, one sample per line. Blank lines are skipped.
std::vector<Sample> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<Sample>& samples);

// Pool snapshots are JSONL: a header line {"dimension","encoder_id"} followed
// by one demonstration per line (embeddings as base64 little-endian float32).
void save_pool(const std::string& path, const Pool& pool);

// expected_encoder_id, when non-empty, must match the snapshot header.
Pool load_pool(const std::string& path, const std::string& expected_encoder_id = {});

}  // namespace icd
