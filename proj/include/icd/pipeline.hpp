#pragma once

#include <cstdint>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icd/backends.hpp"
#include "icd/consistency.hpp"
#include "icd/retrieval.hpp"
#include "icd/types.hpp"
#include "icd/uncertainty.hpp"

namespace icd::pipeline {

enum class OutcomePath {
  accepted_zero_shot,
  icl_kept_zero_shot,
  icl_used,
  icl_used_and_teacher_queried,
  icl_kept_zero_shot_and_teacher_queried,
};

std::string outcome_path_name(OutcomePath p);
OutcomePath outcome_path_from_name(const std::string& name);

struct SampleOutcome {
  std::string sample_id;
  std::string final_answer;
  OutcomePath path = OutcomePath::accepted_zero_shot;
  double u_zero = 0.0;
  std::optional<double> u_icl;  // absent only on the accepted_zero_shot path
  std::vector<std::string> demos_used;
  bool teacher_queried = false;
  std::optional<bool> annotation_accepted;  // present iff teacher_queried
  bool failed = false;                      // student call failed; counts wrong
};

void to_json(json& j, const SampleOutcome& o);
void from_json(const json& j, SampleOutcome& o);

enum class SyncMode { synchronous, asynchronous };
enum class PassKind { online, pure_icl };
enum class AnnotatorSource { teacher, student_self, oracle, none };

std::string sync_mode_name(SyncMode m);
SyncMode sync_mode_from_name(const std::string& name);
std::string pass_kind_name(PassKind p);
PassKind pass_kind_from_name(const std::string& name);
std::string annotator_source_name(AnnotatorSource a);
AnnotatorSource annotator_source_from_name(const std::string& name);

// Fully resolved run description; the report echoes it verbatim, so a report
// alone is enough to repeat a run.
struct RunConfig {
  SelectionParams selection;
  GateConfig gate;
  retrieval::SelectorKind selector = retrieval::SelectorKind::icd_cross_modal;
  AnnotationKind annotation_kind = AnnotationKind::label;
  uncertainty::EntropyVariant entropy_variant =
      uncertainty::EntropyVariant::all_sequence;
  PassKind pass_kind = PassKind::online;
  AnnotatorSource annotator = AnnotatorSource::teacher;
  SyncMode sync_mode = SyncMode::synchronous;
  std::string pool_init;                     // snapshot path, empty for cold start
  std::optional<std::size_t> pool_capacity;  // FIFO eviction when set
  double pool_fraction = 1.0;                // share of the support set annotated
  std::string support_dataset;               // offline pool source
  std::optional<std::int64_t> annotation_budget;  // max annotation dispatches
  std::uint64_t seed = 0;
  std::string system_message;
  std::string cot_suffix;       // appended to the system message when non-empty
  int best_of_n = 0;            // >0: per-sample student batch of that size
  bool use_demonstrations = true;
  bool self_label_tts = false;
  bool count_failed_as_wrong = true;
  std::string metric = "accuracy";  // accuracy | bleu4

  void validate() const;
};

void to_json(json& j, const RunConfig& c);
void from_json(const json& j, RunConfig& c);

// The generation request a sample resolves to under a config: system message
// (plus CoT suffix), the question with options appended one per line, and the
// image reference.
backends::GenerationRequest make_request(const Sample& sample,
                                         const RunConfig& config, bool want_probs);

struct Endpoints {
  std::shared_ptr<backends::GenerationEndpoint> student;
  std::shared_ptr<backends::GenerationEndpoint> annotator;  // may be null
  std::shared_ptr<backends::EmbeddingEndpoint> encoder;
  std::shared_ptr<backends::CostLedger> ledger;
  int annotator_concurrency = 4;
};

struct RunReport {
  json config_echo;
  std::string metric_name;
  std::optional<double> metric_value;  // absent when nothing had gold
  std::size_t samples = 0;
  std::size_t evaluated_samples = 0;
  double t_x_percent = 0.0;
  bool budget_exhausted = false;
  json ledger;
  std::vector<SampleOutcome> outcomes;

  json header() const;
  std::string serialize() const;  // header line + one JSONL line per outcome
};

RunReport parse_report(const std::string& text);

// Online distillation over one stream. process() implements the gated loop:
// answer, gate on uncertainty, retry with retrieved demonstrations, keep the
// lower-uncertainty answer, and hand persistently uncertain samples to the
// annotator, whose accepted labels grow the pool for later samples. The
// annotator's answer is never this sample's answer.
class OnlinePipeline {
 public:
  OnlinePipeline(RunConfig config, Endpoints endpoints, json config_echo,
                 Pool initial_pool);

  SampleOutcome process(const Sample& sample);
  RunReport run_stream(const std::vector<Sample>& samples);

  const Pool& pool() const { return pool_; }
  bool budget_exhausted() const { return budget_exhausted_; }

 private:
  backends::GenerationRequest base_request(const Sample& sample,
                                           bool want_probs) const;
  Prediction call_student(const backends::GenerationRequest& request);
  double entropy_of(const Prediction& pred) const;
  bool budget_allows() const;
  // Synchronous annotation: refine, embed, append. Returns acceptance.
  bool annotate_now(const Sample& sample);
  std::optional<Demonstration> annotate_job(Sample sample);
  void pure_icl_into(const Sample& sample, SampleOutcome& outcome);
  // defer_annotation leaves a queried sample's annotation to the caller
  // (asynchronous streams commit between samples).
  void online_into(const Sample& sample, SampleOutcome& outcome,
                   bool defer_annotation);

  RunConfig config_;
  Endpoints endpoints_;
  json config_echo_;
  Pool pool_;
  consistency::ConsistencyPolicy annotation_policy_;
  AnnotationSource annotation_source_ = AnnotationSource::teacher;
  std::int64_t dispatches_ = 0;
  bool budget_exhausted_ = false;
  bool annotator_down_ = false;

  friend class AsyncAnnotations;
};

}  // namespace icd::pipeline
