#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icd/config.hpp"
#include "icd/pipeline.hpp"

namespace icd::harness {

enum class BaselineKind {
  zero_shot,
  cot,
  best_of_n_student,
  self_labeling,
  icd_online,
  icd_offline,
  oracle_demos,
};

std::string baseline_kind_name(BaselineKind k);
BaselineKind baseline_kind_from_name(const std::string& name);

// Every baseline is sugar over a resolved run config; the report carries the
// resolved config only, so runs that coincide (zero-shot and the online loop
// with the gate disabled) produce identical reports.
pipeline::RunConfig resolve_baseline(BaselineKind kind,
                                     const config::EngineConfig& config);

// Teacher+filter (or oracle/self) annotation of `fraction` of the support
// set, in seeded shuffled order. Rejected batches drop silently.
// resolved_metric picks the agreement rule (bleu4 -> pairwise BLEU-2).
Pool build_support_pool(const config::EngineConfig& config,
                        const std::vector<Sample>& support,
                        pipeline::AnnotatorSource annotator, double fraction,
                        std::uint64_t seed, const std::string& resolved_metric,
                        const std::shared_ptr<backends::CostLedger>& ledger);

struct BaselineResult {
  pipeline::RunReport report;
  std::string report_path;  // empty when no out_dir given
};

BaselineResult run_baseline(const config::EngineConfig& config, BaselineKind kind,
                            const std::vector<Sample>& samples,
                            const std::string& out_dir = {});

// Per-sample cumulative quality and cost columns for plotting.
std::string series_csv(const pipeline::RunReport& report,
                       const std::vector<Sample>& samples);

struct SweepSpec {
  std::string axis;  // shots | pool_fraction | teacher_endpoint | selector | delta
  std::vector<json> values;
  int repeats = 1;
  BaselineKind baseline = BaselineKind::icd_online;
};

void to_json(json& j, const SweepSpec& s);
void from_json(const json& j, SweepSpec& s);

struct SweepCell {
  json value;
  int repeat = 0;
  std::uint64_t seed = 0;
  std::optional<double> metric_value;
  double t_x_percent = 0.0;
  std::string error;  // non-empty when the cell failed
};

struct SweepSummary {
  SweepSpec spec;
  std::vector<SweepCell> cells;

  // value -> (mean, sample stddev, n) over succeeded repeats
  std::string summary_csv() const;
  json to_json_summary() const;
};

SweepSummary run_sweep(const config::EngineConfig& config, const SweepSpec& spec,
                       const std::vector<Sample>& samples,
                       const std::string& out_dir = {});

struct SelectorComparison {
  std::string selector;
  std::optional<double> metric_value;
  std::optional<double> demonstration_accuracy;  // mean over golded queries
};

// One shared annotated pool, one pure-ICL pass per selector, shared seed.
std::vector<SelectorComparison> compare_selectors(
    const config::EngineConfig& config, const std::vector<Sample>& samples,
    const std::vector<std::string>& selectors, const std::string& out_dir = {});

struct CalibrationReport {
  double delta = 0.0;
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;

  json to_json() const;
};

// Zero-shot student pass over a golded validation set, then threshold fit.
CalibrationReport calibrate(const config::EngineConfig& config,
                            const std::vector<Sample>& validation);

}  // namespace icd::harness
