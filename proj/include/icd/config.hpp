#pragma once

#include <optional>
#include <string>

#include "icd/backends.hpp"
#include "icd/pipeline.hpp"
#include "icd/simulator.hpp"
#include "icd/uncertainty.hpp"

namespace icd::config {

// Everything a run needs, read leniently from a JSON file: absent fields keep
// their defaults. `metric` may be "auto" here; it resolves against the
// dataset's gold kinds before a pipeline is built.
struct EngineConfig {
  pipeline::RunConfig run;
  std::string metric = "auto";  // auto | accuracy | bleu4
  backends::EndpointConfig student;
  std::optional<backends::EndpointConfig> teacher;
  backends::EncoderConfig encoder;
  backends::SimDataConfig simulation;
  uncertainty::CalibrationTarget calibration;
  std::string cot_text = "Let's think step by step.";
};

EngineConfig parse_engine_config(const json& j);
EngineConfig load_engine_config(const std::string& path);
json engine_config_to_json(const EngineConfig& config);

// Applies the keys present in `j` on top of `run`.
void merge_run_config(const json& j, pipeline::RunConfig& run);

std::string resolve_metric(const std::string& requested,
                           const std::vector<Sample>& samples);

}  // namespace icd::config
