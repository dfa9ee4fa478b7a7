#include "icd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icd/metrics.hpp"
#include "icd/simulator.hpp"

namespace icd::pipeline {

std::string outcome_path_name(OutcomePath p) {
  switch (p) {
    case OutcomePath::accepted_zero_shot: return "accepted_zero_shot";
    case OutcomePath::icl_kept_zero_shot: return "icl_kept_zero_shot";
    case OutcomePath::icl_used: return "icl_used";
    case OutcomePath::icl_used_and_teacher_queried:
      return "icl_used_and_teacher_queried";
    case OutcomePath::icl_kept_zero_shot_and_teacher_queried:
      return "icl_kept_zero_shot_and_teacher_queried";
  }
  throw std::logic_error("bad outcome path");
}

OutcomePath outcome_path_from_name(const std::string& name) {
  if (name == "accepted_zero_shot") return OutcomePath::accepted_zero_shot;
  if (name == "icl_kept_zero_shot") return OutcomePath::icl_kept_zero_shot;
  if (name == "icl_used") return OutcomePath::icl_used;
  if (name == "icl_used_and_teacher_queried")
    return OutcomePath::icl_used_and_teacher_queried;
  if (name == "icl_kept_zero_shot_and_teacher_queried")
    return OutcomePath::icl_kept_zero_shot_and_teacher_queried;
  throw std::invalid_argument("unknown outcome path: " + name);
}

void to_json(json& j, const SampleOutcome& o) {
  j = json{{"sample_id", o.sample_id},
           {"final_answer", o.final_answer},
           {"path", outcome_path_name(o.path)},
           {"u_zero", o.u_zero},
           {"u_icl", o.u_icl ? json(*o.u_icl) : json(nullptr)},
           {"demos_used", o.demos_used},
           {"teacher_queried", o.teacher_queried},
           {"annotation_accepted",
            o.annotation_accepted ? json(*o.annotation_accepted) : json(nullptr)},
           {"failed", o.failed}};
}

void from_json(const json& j, SampleOutcome& o) {
  j.at("sample_id").get_to(o.sample_id);
  j.at("final_answer").get_to(o.final_answer);
  o.path = outcome_path_from_name(j.at("path").get<std::string>());
  j.at("u_zero").get_to(o.u_zero);
  o.u_icl.reset();
  if (!j.at("u_icl").is_null()) o.u_icl = j.at("u_icl").get<double>();
  j.at("demos_used").get_to(o.demos_used);
  j.at("teacher_queried").get_to(o.teacher_queried);
  o.annotation_accepted.reset();
  if (!j.at("annotation_accepted").is_null()) {
    o.annotation_accepted = j.at("annotation_accepted").get<bool>();
  }
  j.at("failed").get_to(o.failed);
}

std::string sync_mode_name(SyncMode m) {
  return m == SyncMode::synchronous ? "synchronous" : "asynchronous";
}

SyncMode sync_mode_from_name(const std::string& name) {
  if (name == "synchronous") return SyncMode::synchronous;
  if (name == "asynchronous") return SyncMode::asynchronous;
  throw std::invalid_argument("unknown sync mode: " + name);
}

std::string pass_kind_name(PassKind p) {
  return p == PassKind::online ? "online" : "pure_icl";
}

PassKind pass_kind_from_name(const std::string& name) {
  if (name == "online") return PassKind::online;
  if (name == "pure_icl") return PassKind::pure_icl;
  throw std::invalid_argument("unknown pass kind: " + name);
}

std::string annotator_source_name(AnnotatorSource a) {
  switch (a) {
    case AnnotatorSource::teacher: return "teacher";
    case AnnotatorSource::student_self: return "student_self";
    case AnnotatorSource::oracle: return "oracle";
    case AnnotatorSource::none: return "none";
  }
  throw std::logic_error("bad annotator source");
}

AnnotatorSource annotator_source_from_name(const std::string& name) {
  if (name == "teacher") return AnnotatorSource::teacher;
  if (name == "student_self") return AnnotatorSource::student_self;
  if (name == "oracle") return AnnotatorSource::oracle;
  if (name == "none") return AnnotatorSource::none;
  throw std::invalid_argument("unknown annotator source: " + name);
}

void RunConfig::validate() const {
  selection.validate();
  gate.validate();
  if (pool_fraction <= 0.0 || pool_fraction > 1.0) {
    throw std::invalid_argument("pool_fraction must be in (0,1]");
  }
  if (best_of_n < 0) throw std::invalid_argument("best_of_n must be >= 0");
  if (annotation_budget && *annotation_budget < 0) {
    throw std::invalid_argument("annotation_budget must be >= 0");
  }
  if (metric != "accuracy" && metric != "bleu4") {
    throw std::invalid_argument("metric must be accuracy or bleu4");
  }
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"selection", c.selection},
           {"gate", c.gate},
           {"selector", retrieval::selector_kind_name(c.selector)},
           {"annotation_kind", annotation_kind_name(c.annotation_kind)},
           {"entropy_variant", uncertainty::entropy_variant_name(c.entropy_variant)},
           {"pass_kind", pass_kind_name(c.pass_kind)},
           {"annotator", annotator_source_name(c.annotator)},
           {"sync_mode", sync_mode_name(c.sync_mode)},
           {"pool_init", c.pool_init},
           {"pool_capacity", c.pool_capacity ? json(*c.pool_capacity) : json(nullptr)},
           {"pool_fraction", c.pool_fraction},
           {"support_dataset", c.support_dataset},
           {"annotation_budget",
            c.annotation_budget ? json(*c.annotation_budget) : json(nullptr)},
           {"seed", c.seed},
           {"system_message", c.system_message},
           {"cot_suffix", c.cot_suffix},
           {"best_of_n", c.best_of_n},
           {"use_demonstrations", c.use_demonstrations},
           {"self_label_tts", c.self_label_tts},
           {"count_failed_as_wrong", c.count_failed_as_wrong},
           {"metric", c.metric}};
}

void from_json(const json& j, RunConfig& c) {
  c = RunConfig{};
  j.at("selection").get_to(c.selection);
  j.at("gate").get_to(c.gate);
  c.selector = retrieval::selector_kind_from_name(j.at("selector").get<std::string>());
  c.annotation_kind =
      annotation_kind_from_name(j.at("annotation_kind").get<std::string>());
  c.entropy_variant =
      uncertainty::entropy_variant_from_name(j.at("entropy_variant").get<std::string>());
  c.pass_kind = pass_kind_from_name(j.at("pass_kind").get<std::string>());
  c.annotator = annotator_source_from_name(j.at("annotator").get<std::string>());
  c.sync_mode = sync_mode_from_name(j.at("sync_mode").get<std::string>());
  j.at("pool_init").get_to(c.pool_init);
  if (!j.at("pool_capacity").is_null()) {
    c.pool_capacity = j.at("pool_capacity").get<std::size_t>();
  }
  j.at("pool_fraction").get_to(c.pool_fraction);
  j.at("support_dataset").get_to(c.support_dataset);
  if (!j.at("annotation_budget").is_null()) {
    c.annotation_budget = j.at("annotation_budget").get<std::int64_t>();
  }
  j.at("seed").get_to(c.seed);
  j.at("system_message").get_to(c.system_message);
  j.at("cot_suffix").get_to(c.cot_suffix);
  j.at("best_of_n").get_to(c.best_of_n);
  j.at("use_demonstrations").get_to(c.use_demonstrations);
  j.at("self_label_tts").get_to(c.self_label_tts);
  j.at("count_failed_as_wrong").get_to(c.count_failed_as_wrong);
  j.at("metric").get_to(c.metric);
}

namespace {
json paper_reference_block() {
  return json{{"note",
               "published full-scale evaluation with real VLM backends; "
               "not reproducible with the bundled simulators"},
              {"student", "InternVL2.5-8B"},
              {"zero_shot_avg", 26.0},
              {"icd_avg", 40.8},
              {"t_x_percent", 14.7}};
}
}  // namespace

json RunReport::header() const {
  return json{{"schema", "icd-run-report-v1"},
              {"config", config_echo},
              {"metrics",
               json{{"metric_name", metric_name},
                    {"value", metric_value ? json(*metric_value) : json(nullptr)},
                    {"samples", samples},
                    {"evaluated_samples", evaluated_samples},
                    {"t_x_percent", t_x_percent},
                    {"budget_exhausted", budget_exhausted},
                    {"ledger", ledger}}},
              {"paper_reference", paper_reference_block()}};
}

std::string RunReport::serialize() const {
  std::string out = header().dump();
  out += "\n";
  for (const auto& o : outcomes) {
    out += json(o).dump();
    out += "\n";
  }
  return out;
}

RunReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty report");
  const json header = json::parse(line);
  RunReport report;
  report.config_echo = header.at("config");
  const json& m = header.at("metrics");
  report.metric_name = m.at("metric_name").get<std::string>();
  if (!m.at("value").is_null()) report.metric_value = m.at("value").get<double>();
  report.samples = m.at("samples").get<std::size_t>();
  report.evaluated_samples = m.at("evaluated_samples").get<std::size_t>();
  report.t_x_percent = m.at("t_x_percent").get<double>();
  report.budget_exhausted = m.at("budget_exhausted").get<bool>();
  report.ledger = m.at("ledger");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    report.outcomes.push_back(json::parse(line).get<SampleOutcome>());
  }
  return report;
}

OnlinePipeline::OnlinePipeline(RunConfig config, Endpoints endpoints,
                               json config_echo, Pool initial_pool)
    : config_(std::move(config)), endpoints_(std::move(endpoints)),
      config_echo_(std::move(config_echo)), pool_(std::move(initial_pool)) {
  config_.validate();
  if (!endpoints_.student) throw std::invalid_argument("student endpoint required");
  if (!endpoints_.encoder) throw std::invalid_argument("encoder endpoint required");
  if (config_echo_.is_null()) config_echo_ = json{{"run", config_}};

  annotation_policy_.kind = config_.metric == "bleu4"
                                ? consistency::ConsistencyKind::pairwise_bleu2
                                : consistency::ConsistencyKind::exact_all_pairs;
  annotation_policy_.bleu_threshold = config_.gate.bleu2_consistency_threshold;
  annotation_policy_.n = config_.gate.tts_n;
  if (config_.annotator == AnnotatorSource::student_self) {
    annotation_source_ = AnnotationSource::student_self;
    if (!config_.self_label_tts) annotation_policy_.n = 1;
  }
}

backends::GenerationRequest make_request(const Sample& sample,
                                         const RunConfig& config, bool want_probs) {
  backends::GenerationRequest r;
  r.system_message = config.system_message;
  if (!config.cot_suffix.empty()) {
    if (!r.system_message.empty()) r.system_message += " ";
    r.system_message += config.cot_suffix;
  }
  r.image = sample.image;
  r.question = sample.question;
  for (const auto& opt : sample.options) r.question += "\n" + opt;
  r.want_token_probs = want_probs;
  return r;
}

backends::GenerationRequest OnlinePipeline::base_request(const Sample& sample,
                                                         bool want_probs) const {
  return make_request(sample, config_, want_probs);
}

Prediction OnlinePipeline::call_student(const backends::GenerationRequest& request) {
  if (config_.best_of_n > 1) {
    // Student-side test-time scaling: the batch is drawn but the canonical
    // answer is the first generation, which is also the single-shot fallback.
    Prediction first = endpoints_.student->generate(request);
    auto rest = request;
    rest.want_token_probs = false;
    for (int i = 1; i < config_.best_of_n; ++i) {
      endpoints_.student->generate(rest);
    }
    return first;
  }
  return endpoints_.student->generate(request);
}

double OnlinePipeline::entropy_of(const Prediction& pred) const {
  if (pred.token_dists.empty()) {
    throw backends::BackendError("student endpoint reported no token distributions");
  }
  return uncertainty::sequence_entropy(pred.token_dists, config_.entropy_variant);
}

bool OnlinePipeline::budget_allows() const {
  return !config_.annotation_budget || dispatches_ < *config_.annotation_budget;
}

std::optional<Demonstration> OnlinePipeline::annotate_job(Sample sample) {
  auto request = base_request(sample, false);
  auto annotation = consistency::refine(*endpoints_.annotator, request,
                                        annotation_policy_, config_.annotation_kind,
                                        annotation_source_);
  if (!annotation) return std::nullopt;
  Demonstration demo;
  demo.sample = std::move(sample);
  demo.annotation = std::move(*annotation);
  demo.image_embedding = endpoints_.encoder->embed_image(demo.sample.image);
  demo.text_embedding = endpoints_.encoder->embed_text(demo.sample.question + " " +
                                                       demo.annotation.answer);
  return demo;
}

bool OnlinePipeline::annotate_now(const Sample& sample) {
  try {
    auto demo = annotate_job(sample);
    if (!demo) return false;
    pool_.append(std::move(*demo));
    return true;
  } catch (const backends::BudgetExceeded&) {
    annotator_down_ = true;
    budget_exhausted_ = true;
    return false;
  } catch (const std::exception&) {
    // Annotator or encoder failure: the pool just does not grow.
    return false;
  }
}

void OnlinePipeline::online_into(const Sample& sample, SampleOutcome& outcome,
                                 bool defer_annotation) {
  Prediction zero_shot;
  try {
    zero_shot = call_student(base_request(sample, true));
  } catch (const std::exception&) {
    outcome.failed = true;
    return;
  }
  const double u0 = entropy_of(zero_shot);
  outcome.u_zero = u0;
  outcome.final_answer = zero_shot.text;
  if (u0 < config_.gate.delta) {
    outcome.path = OutcomePath::accepted_zero_shot;
    return;
  }

  Prediction refined = zero_shot;
  double u1 = u0;
  if (config_.use_demonstrations && !pool_.empty()) {
    try {
      retrieval::QueryFeatures query;
      query.image_embedding = endpoints_.encoder->embed_image(sample.image);
      query.text_embedding = endpoints_.encoder->embed_text(sample.question);
      const auto picked = retrieval::select_baseline(
          config_.selector, query, pool_, config_.selection,
          backends::stable_hash(sample.id, config_.seed));
      auto request = base_request(sample, true);
      for (std::size_t idx : picked) {
        const auto& d = pool_.entries()[idx];
        request.demonstrations.push_back(
            {d.sample.image, d.sample.question, d.annotation.answer});
        outcome.demos_used.push_back(d.sample.id);
      }
      refined = call_student(request);
      u1 = entropy_of(refined);
    } catch (const std::exception&) {
      outcome.failed = true;
      return;
    }
  }
  outcome.u_icl = u1;

  const bool improved = u1 < u0;
  if (improved) outcome.final_answer = refined.text;
  if (u1 >= config_.gate.delta && config_.annotator != AnnotatorSource::none &&
      endpoints_.annotator && !annotator_down_) {
    if (budget_allows()) {
      ++dispatches_;
      outcome.teacher_queried = true;
    } else {
      budget_exhausted_ = true;
    }
  }
  outcome.path = improved
                     ? (outcome.teacher_queried
                            ? OutcomePath::icl_used_and_teacher_queried
                            : OutcomePath::icl_used)
                     : (outcome.teacher_queried
                            ? OutcomePath::icl_kept_zero_shot_and_teacher_queried
                            : OutcomePath::icl_kept_zero_shot);
  if (outcome.teacher_queried && !defer_annotation) {
    outcome.annotation_accepted = annotate_now(sample);
  }
}

void OnlinePipeline::pure_icl_into(const Sample& sample, SampleOutcome& outcome) {
  try {
    auto request = base_request(sample, true);
    if (config_.use_demonstrations && !pool_.empty()) {
      retrieval::QueryFeatures query;
      query.image_embedding = endpoints_.encoder->embed_image(sample.image);
      query.text_embedding = endpoints_.encoder->embed_text(sample.question);
      const auto picked = retrieval::select_baseline(
          config_.selector, query, pool_, config_.selection,
          backends::stable_hash(sample.id, config_.seed));
      for (std::size_t idx : picked) {
        const auto& d = pool_.entries()[idx];
        request.demonstrations.push_back(
            {d.sample.image, d.sample.question, d.annotation.answer});
        outcome.demos_used.push_back(d.sample.id);
      }
    }
    const Prediction pred = call_student(request);
    const double u = entropy_of(pred);
    outcome.final_answer = pred.text;
    outcome.u_zero = u;
    if (outcome.demos_used.empty()) {
      outcome.path = OutcomePath::accepted_zero_shot;
    } else {
      outcome.path = OutcomePath::icl_used;
      outcome.u_icl = u;
    }
  } catch (const std::exception&) {
    outcome.failed = true;
  }
}

SampleOutcome OnlinePipeline::process(const Sample& sample) {
  validate_sample(sample);
  SampleOutcome outcome;
  outcome.sample_id = sample.id;
  if (config_.pass_kind == PassKind::pure_icl) {
    pure_icl_into(sample, outcome);
  } else {
    online_into(sample, outcome, /*defer_annotation=*/false);
  }
  return outcome;
}

namespace {

struct MetricAccumulator {
  const RunConfig& config;
  std::size_t evaluated = 0;
  double total = 0.0;

  void add(const Sample& sample, const SampleOutcome& outcome) {
    if (!sample.gold) return;
    if (outcome.failed && !config.count_failed_as_wrong) return;
    ++evaluated;
    if (outcome.failed) return;
    if (config.metric == "accuracy") {
      if (metrics::exact_match(outcome.final_answer, *sample.gold)) total += 1.0;
    } else {
      metrics::BleuConfig bleu4;
      total += metrics::bleu(outcome.final_answer, sample.gold->texts, bleu4);
    }
  }
};

}  // namespace

RunReport OnlinePipeline::run_stream(const std::vector<Sample>& samples) {
  RunReport report;
  report.config_echo = config_echo_;
  report.metric_name = config_.metric;
  report.samples = samples.size();
  report.outcomes.reserve(samples.size());

  MetricAccumulator metric{config_};
  std::size_t queried = 0;

  const bool async = config_.sync_mode == SyncMode::asynchronous &&
                     config_.pass_kind == PassKind::online;
  struct Pending {
    std::future<std::optional<Demonstration>> result;
    std::size_t outcome_index;
  };
  std::vector<Pending> pending;
  auto drain = [&](bool wait_all) {
    for (auto it = pending.begin(); it != pending.end();) {
      const bool ready =
          wait_all || it->result.wait_for(std::chrono::seconds(0)) ==
                          std::future_status::ready;
      if (!ready) {
        ++it;
        continue;
      }
      bool accepted = false;
      try {
        auto demo = it->result.get();
        if (demo) {
          pool_.append(std::move(*demo));
          accepted = true;
        }
      } catch (const backends::BudgetExceeded&) {
        annotator_down_ = true;
        budget_exhausted_ = true;
      } catch (const std::exception&) {
      }
      report.outcomes[it->outcome_index].annotation_accepted = accepted;
      it = pending.erase(it);
    }
  };

  for (const auto& sample : samples) {
    if (async) drain(false);
    SampleOutcome outcome;
    outcome.sample_id = sample.id;
    if (config_.pass_kind == PassKind::pure_icl) {
      pure_icl_into(sample, outcome);
    } else {
      online_into(sample, outcome, /*defer_annotation=*/async);
    }
    report.outcomes.push_back(outcome);
    if (outcome.teacher_queried) {
      ++queried;
      if (async) {
        const auto cap =
            static_cast<std::size_t>(std::max(endpoints_.annotator_concurrency, 1));
        if (pending.size() >= cap) drain(true);
        pending.push_back(Pending{
            std::async(std::launch::async,
                       [this, sample] { return annotate_job(sample); }),
            report.outcomes.size() - 1});
      }
    }
    metric.add(sample, report.outcomes.back());
  }
  if (async) drain(true);

  if (config_.pass_kind == PassKind::online) {
    report.t_x_percent =
        samples.empty() ? 0.0
                        : 100.0 * static_cast<double>(queried) /
                              static_cast<double>(samples.size());
  } else {
    report.t_x_percent =
        config_.annotator == AnnotatorSource::teacher ||
                config_.annotator == AnnotatorSource::student_self
            ? 100.0 * config_.pool_fraction
            : 0.0;
  }
  report.evaluated_samples = metric.evaluated;
  if (metric.evaluated > 0) {
    report.metric_value = metric.total / static_cast<double>(metric.evaluated);
  }
  report.budget_exhausted = budget_exhausted_;
  report.ledger = endpoints_.ledger ? endpoints_.ledger->snapshot() : json::object();
  return report;
}

}  // namespace icd::pipeline
