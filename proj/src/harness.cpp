#include "icd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "icd/consistency.hpp"
#include "icd/dataset.hpp"
#include "icd/metrics.hpp"
#include "icd/simulator.hpp"

namespace icd::harness {

namespace fs = std::filesystem;

std::string baseline_kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::zero_shot: return "zero_shot";
    case BaselineKind::cot: return "cot";
    case BaselineKind::best_of_n_student: return "best_of_n_student";
    case BaselineKind::self_labeling: return "self_labeling";
    case BaselineKind::icd_online: return "icd_online";
    case BaselineKind::icd_offline: return "icd_offline";
    case BaselineKind::oracle_demos: return "oracle_demos";
  }
  throw std::logic_error("bad baseline kind");
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "zero_shot") return BaselineKind::zero_shot;
  if (name == "cot") return BaselineKind::cot;
  if (name == "best_of_n_student") return BaselineKind::best_of_n_student;
  if (name == "self_labeling") return BaselineKind::self_labeling;
  if (name == "icd_online") return BaselineKind::icd_online;
  if (name == "icd_offline") return BaselineKind::icd_offline;
  if (name == "oracle_demos") return BaselineKind::oracle_demos;
  throw std::invalid_argument("unknown baseline: " + name);
}

pipeline::RunConfig resolve_baseline(BaselineKind kind,
                                     const config::EngineConfig& config) {
  pipeline::RunConfig run = config.run;
  run.cot_suffix.clear();
  run.best_of_n = 0;
  switch (kind) {
    case BaselineKind::zero_shot:
      run.pass_kind = pipeline::PassKind::online;
      run.annotator = pipeline::AnnotatorSource::teacher;
      run.gate.delta = std::numeric_limits<double>::infinity();
      break;
    case BaselineKind::cot:
      run.pass_kind = pipeline::PassKind::online;
      run.annotator = pipeline::AnnotatorSource::teacher;
      run.gate.delta = std::numeric_limits<double>::infinity();
      run.cot_suffix = config.cot_text;
      break;
    case BaselineKind::best_of_n_student:
      run.pass_kind = pipeline::PassKind::online;
      run.annotator = pipeline::AnnotatorSource::teacher;
      run.gate.delta = std::numeric_limits<double>::infinity();
      run.best_of_n = std::max(2, run.gate.tts_n);
      break;
    case BaselineKind::self_labeling:
      run.pass_kind = pipeline::PassKind::online;
      run.annotator = pipeline::AnnotatorSource::student_self;
      break;
    case BaselineKind::icd_online:
      run.pass_kind = pipeline::PassKind::online;
      run.annotator = pipeline::AnnotatorSource::teacher;
      break;
    case BaselineKind::icd_offline:
      run.pass_kind = pipeline::PassKind::pure_icl;
      run.annotator = pipeline::AnnotatorSource::teacher;
      break;
    case BaselineKind::oracle_demos:
      run.pass_kind = pipeline::PassKind::pure_icl;
      run.annotator = pipeline::AnnotatorSource::oracle;
      break;
  }
  return run;
}

namespace {

consistency::ConsistencyPolicy annotation_policy(const pipeline::RunConfig& run) {
  consistency::ConsistencyPolicy policy;
  policy.kind = run.metric == "bleu4" ? consistency::ConsistencyKind::pairwise_bleu2
                                      : consistency::ConsistencyKind::exact_all_pairs;
  policy.bleu_threshold = run.gate.bleu2_consistency_threshold;
  policy.n = run.gate.tts_n;
  if (run.annotator == pipeline::AnnotatorSource::student_self && !run.self_label_tts) {
    policy.n = 1;
  }
  return policy;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

std::string sanitize(const std::string& text) {
  std::string out;
  for (char c : text) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  }
  return out;
}

}  // namespace

Pool build_support_pool(const config::EngineConfig& config,
                        const std::vector<Sample>& support,
                        pipeline::AnnotatorSource annotator, double fraction,
                        std::uint64_t seed, const std::string& resolved_metric,
                        const std::shared_ptr<backends::CostLedger>& ledger) {
  if (support.empty()) throw std::invalid_argument("support set is empty");
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("pool fraction must be in (0,1]");
  }
  auto encoder = backends::make_embedding_endpoint(config.encoder, ledger);
  Pool pool(encoder->dimension(), config.run.pool_capacity, encoder->encoder_id());

  std::vector<std::size_t> order(support.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(backends::stable_hash("support", seed));
  std::shuffle(order.begin(), order.end(), rng);
  const auto take = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(support.size())));
  order.resize(std::min(take, order.size()));

  std::shared_ptr<backends::GenerationEndpoint> endpoint;
  AnnotationSource source = AnnotationSource::oracle;
  if (annotator == pipeline::AnnotatorSource::teacher) {
    if (!config.teacher) {
      throw std::invalid_argument("support pool annotation needs a teacher endpoint");
    }
    endpoint = backends::make_generation_endpoint(*config.teacher,
                                                  backends::Role::teacher, ledger);
    source = AnnotationSource::teacher;
  } else if (annotator == pipeline::AnnotatorSource::student_self) {
    endpoint = backends::make_generation_endpoint(config.student,
                                                  backends::Role::teacher, ledger);
    source = AnnotationSource::student_self;
  } else if (annotator == pipeline::AnnotatorSource::none) {
    throw std::invalid_argument("support pool needs an annotator");
  }

  pipeline::RunConfig request_cfg = config.run;
  request_cfg.cot_suffix.clear();
  request_cfg.metric = resolved_metric;
  auto policy = annotation_policy(request_cfg);
  if (annotator == pipeline::AnnotatorSource::student_self && !config.run.self_label_tts) {
    policy.n = 1;
  }

  for (std::size_t idx : order) {
    const Sample& sample = support[idx];
    std::optional<Annotation> ann;
    if (annotator == pipeline::AnnotatorSource::oracle) {
      if (!sample.gold) continue;
      ann = Annotation{sample.gold->texts[0], config.run.annotation_kind,
                       AnnotationSource::oracle, 1};
    } else {
      try {
        ann = consistency::refine(*endpoint,
                                  pipeline::make_request(sample, request_cfg, false),
                                  policy, config.run.annotation_kind, source);
      } catch (const backends::BudgetExceeded&) {
        break;  // annotation budget gone; keep what we have
      } catch (const std::exception&) {
        continue;  // this sample stays unannotated
      }
    }
    if (!ann) continue;
    try {
      Demonstration demo;
      demo.sample = sample;
      demo.annotation = *ann;
      demo.image_embedding = encoder->embed_image(sample.image);
      demo.text_embedding = encoder->embed_text(sample.question + " " + ann->answer);
      pool.append(std::move(demo));
    } catch (const std::exception&) {
      continue;
    }
  }
  return pool;
}

BaselineResult run_baseline(const config::EngineConfig& config, BaselineKind kind,
                            const std::vector<Sample>& samples,
                            const std::string& out_dir) {
  auto ledger = std::make_shared<backends::CostLedger>();
  pipeline::RunConfig run = resolve_baseline(kind, config);
  run.metric = config::resolve_metric(config.metric, samples);
  run.validate();

  auto encoder = backends::make_embedding_endpoint(config.encoder, ledger);
  auto student =
      backends::make_generation_endpoint(config.student, backends::Role::student, ledger);

  const bool online_annotation =
      run.pass_kind == pipeline::PassKind::online &&
      (run.annotator == pipeline::AnnotatorSource::teacher ||
       run.annotator == pipeline::AnnotatorSource::student_self) &&
      !std::isinf(run.gate.delta);
  std::shared_ptr<backends::GenerationEndpoint> annotator;
  int annotator_concurrency = 4;
  if (online_annotation) {
    if (run.annotator == pipeline::AnnotatorSource::teacher) {
      if (!config.teacher) {
        throw std::invalid_argument(baseline_kind_name(kind) +
                                    " needs a teacher endpoint");
      }
      annotator = backends::make_generation_endpoint(*config.teacher,
                                                     backends::Role::teacher, ledger);
      annotator_concurrency = config.teacher->max_concurrency;
    } else {
      annotator = backends::make_generation_endpoint(config.student,
                                                     backends::Role::teacher, ledger);
      annotator_concurrency = config.student.max_concurrency;
    }
  }

  Pool pool(encoder->dimension(), run.pool_capacity, encoder->encoder_id());
  if (!run.pool_init.empty()) {
    pool = load_pool(run.pool_init, encoder->encoder_id());
  } else if (run.pass_kind == pipeline::PassKind::pure_icl &&
             run.annotator != pipeline::AnnotatorSource::none) {
    if (run.support_dataset.empty()) {
      throw std::invalid_argument(baseline_kind_name(kind) +
                                  " needs support_dataset or pool_init");
    }
    const auto support = load_dataset(run.support_dataset);
    pool = build_support_pool(config, support, run.annotator, run.pool_fraction,
                              run.seed, run.metric, ledger);
  }

  json teacher_echo(nullptr);
  if (run.annotator == pipeline::AnnotatorSource::teacher && config.teacher) {
    teacher_echo = *config.teacher;
  } else if (run.annotator == pipeline::AnnotatorSource::student_self) {
    teacher_echo = config.student;
  }
  const json echo{{"run", run},
                  {"student", config.student},
                  {"teacher", teacher_echo},
                  {"encoder", config.encoder}};

  pipeline::Endpoints endpoints;
  endpoints.student = student;
  endpoints.annotator = annotator;
  endpoints.encoder = encoder;
  endpoints.ledger = ledger;
  endpoints.annotator_concurrency = annotator_concurrency;

  pipeline::OnlinePipeline pipe(run, endpoints, echo, std::move(pool));
  BaselineResult result;
  result.report = pipe.run_stream(samples);

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    const std::string stem = out_dir + "/" + baseline_kind_name(kind);
    result.report_path = stem + ".report.jsonl";
    std::ofstream out(result.report_path);
    if (!out) throw std::runtime_error("cannot write " + result.report_path);
    out << result.report.serialize();
    std::ofstream series(stem + ".series.csv");
    if (!series) throw std::runtime_error("cannot write series for " + stem);
    series << series_csv(result.report, samples);
  }
  return result;
}

std::string series_csv(const pipeline::RunReport& report,
                       const std::vector<Sample>& samples) {
  pipeline::RunConfig run;
  from_json(report.config_echo.at("run"), run);
  const auto policy = annotation_policy(run);
  const int batch = run.best_of_n > 1 ? run.best_of_n : 1;

  std::map<std::string, const Sample*> by_id;
  for (const auto& s : samples) by_id[s.id] = &s;

  std::ostringstream out;
  out << "index,sample_id,cumulative_metric,queried_cum,accepted_cum,"
         "student_calls_cum,annotator_calls_cum\n";
  double total = 0.0;
  std::size_t evaluated = 0, queried = 0, accepted = 0;
  std::int64_t student_calls = 0, annotator_calls = 0;
  std::size_t index = 0;
  for (const auto& o : report.outcomes) {
    ++index;
    student_calls += batch;
    if (o.u_icl && !o.demos_used.empty() &&
        run.pass_kind == pipeline::PassKind::online) {
      student_calls += batch;
    }
    if (o.teacher_queried) {
      ++queried;
      annotator_calls += policy.n;
    }
    if (o.annotation_accepted && *o.annotation_accepted) ++accepted;
    auto it = by_id.find(o.sample_id);
    if (it != by_id.end() && it->second->gold &&
        (!o.failed || run.count_failed_as_wrong)) {
      ++evaluated;
      if (!o.failed) {
        if (run.metric == "accuracy") {
          if (metrics::exact_match(o.final_answer, *it->second->gold)) total += 1.0;
        } else {
          total += metrics::bleu(o.final_answer, it->second->gold->texts);
        }
      }
    }
    out << index << "," << o.sample_id << ","
        << (evaluated ? total / evaluated : 0.0) << "," << queried << ","
        << accepted << "," << student_calls << "," << annotator_calls << "\n";
  }
  return out.str();
}

void to_json(json& j, const SweepSpec& s) {
  j = json{{"axis", s.axis},
           {"values", s.values},
           {"repeats", s.repeats},
           {"baseline", baseline_kind_name(s.baseline)}};
}

void from_json(const json& j, SweepSpec& s) {
  j.at("axis").get_to(s.axis);
  s.values.clear();
  for (const auto& v : j.at("values")) s.values.push_back(v);
  s.repeats = j.value("repeats", 1);
  s.baseline = baseline_kind_from_name(j.value("baseline", std::string("icd_online")));
}

namespace {

// Repeats are independent trials: each reseeds the simulated endpoints into a
// fresh deterministic world. Repeat 0 leaves seeds alone, so the first cell of
// a sweep matches a standalone run of the same config byte for byte.
void reseed_world(config::EngineConfig& cfg, int repeat) {
  if (repeat == 0) return;
  const auto mix = static_cast<std::uint64_t>(repeat) * 0x9e3779b97f4a7c15ull;
  if (cfg.student.kind == "simulated") cfg.student.profile.seed ^= mix;
  if (cfg.teacher && cfg.teacher->kind == "simulated") {
    cfg.teacher->profile.seed ^= mix;
  }
  if (cfg.encoder.kind == "simulated") cfg.encoder.sim.seed ^= mix;
}

config::EngineConfig apply_axis(const config::EngineConfig& base,
                                const std::string& axis, const json& value) {
  config::EngineConfig cfg = base;
  if (axis == "shots") {
    const int shots = value.get<int>();
    if (shots < 0) throw std::invalid_argument("shots must be >= 0");
    if (shots == 0) {
      cfg.run.use_demonstrations = false;
    } else {
      cfg.run.use_demonstrations = true;
      cfg.run.selection.k_tt = shots;
      cfg.run.selection.k_ii = std::max(cfg.run.selection.k_ii, shots);
    }
  } else if (axis == "pool_fraction") {
    cfg.run.pool_fraction = value.get<double>();
  } else if (axis == "delta") {
    cfg.run.gate.delta = delta_from_json(value);
  } else if (axis == "selector") {
    cfg.run.selector = retrieval::selector_kind_from_name(value.get<std::string>());
  } else if (axis == "teacher_endpoint") {
    cfg.teacher = value.get<backends::EndpointConfig>();
  } else {
    throw std::invalid_argument("unknown sweep axis: " + axis);
  }
  return cfg;
}

}  // namespace

SweepSummary run_sweep(const config::EngineConfig& config, const SweepSpec& spec,
                       const std::vector<Sample>& samples,
                       const std::string& out_dir) {
  if (spec.repeats < 1) throw std::invalid_argument("repeats must be positive");
  if (spec.values.empty()) throw std::invalid_argument("sweep needs values");
  ensure_dir(out_dir);

  SweepSummary summary;
  summary.spec = spec;
  for (const auto& value : spec.values) {
    for (int rep = 0; rep < spec.repeats; ++rep) {
      SweepCell cell;
      cell.value = value;
      cell.repeat = rep;
      cell.seed = config.run.seed + static_cast<std::uint64_t>(rep);
      try {
        config::EngineConfig cfg = apply_axis(config, spec.axis, value);
        cfg.run.seed = cell.seed;
        reseed_world(cfg, rep);
        std::string cell_dir;
        if (!out_dir.empty()) {
          cell_dir = out_dir + "/" + spec.axis + "_" + sanitize(value.dump()) +
                     "_r" + std::to_string(rep);
        }
        const auto result = run_baseline(cfg, spec.baseline, samples, cell_dir);
        cell.metric_value = result.report.metric_value;
        cell.t_x_percent = result.report.t_x_percent;
      } catch (const std::exception& e) {
        cell.error = e.what();  // keep the partial sweep
      }
      summary.cells.push_back(std::move(cell));
    }
  }
  if (!out_dir.empty()) {
    std::ofstream csv(out_dir + "/summary.csv");
    csv << summary.summary_csv();
    std::ofstream js(out_dir + "/summary.json");
    js << summary.to_json_summary().dump(2) << "\n";
  }
  return summary;
}

std::string SweepSummary::summary_csv() const {
  std::ostringstream out;
  out << "axis,value,n,mean,stddev,failed\n";
  for (const auto& value : spec.values) {
    std::vector<double> xs;
    int failed = 0;
    for (const auto& cell : cells) {
      if (cell.value != value) continue;
      if (!cell.error.empty() || !cell.metric_value) {
        ++failed;
        continue;
      }
      xs.push_back(*cell.metric_value);
    }
    double mean = 0.0, sd = 0.0;
    if (!xs.empty()) {
      for (double x : xs) mean += x;
      mean /= xs.size();
      if (xs.size() > 1) {
        for (double x : xs) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / (xs.size() - 1));
      }
    }
    out << spec.axis << "," << value.dump() << "," << xs.size() << "," << mean
        << "," << sd << "," << failed << "\n";
  }
  return out.str();
}

json SweepSummary::to_json_summary() const {
  json cells_json = json::array();
  for (const auto& cell : cells) {
    cells_json.push_back(
        json{{"value", cell.value},
             {"repeat", cell.repeat},
             {"seed", cell.seed},
             {"metric_value", cell.metric_value ? json(*cell.metric_value) : json(nullptr)},
             {"t_x_percent", cell.t_x_percent},
             {"error", cell.error}});
  }
  return json{{"spec", spec}, {"cells", cells_json}};
}

std::vector<SelectorComparison> compare_selectors(
    const config::EngineConfig& config, const std::vector<Sample>& samples,
    const std::vector<std::string>& selectors, const std::string& out_dir) {
  if (selectors.empty()) throw std::invalid_argument("no selectors given");
  const std::string metric = config::resolve_metric(config.metric, samples);

  const auto annotator = config.teacher ? pipeline::AnnotatorSource::teacher
                                        : pipeline::AnnotatorSource::oracle;
  if (config.run.support_dataset.empty()) {
    throw std::invalid_argument("selector comparison needs support_dataset");
  }
  const auto support = load_dataset(config.run.support_dataset);
  auto pool_ledger = std::make_shared<backends::CostLedger>();
  const Pool shared_pool =
      build_support_pool(config, support, annotator, config.run.pool_fraction,
                         config.run.seed, metric, pool_ledger);

  std::map<std::string, std::size_t> pool_index;
  for (std::size_t i = 0; i < shared_pool.entries().size(); ++i) {
    pool_index[shared_pool.entries()[i].sample.id] = i;
  }

  std::vector<SelectorComparison> table;
  for (const auto& name : selectors) {
    pipeline::RunConfig run = resolve_baseline(
        annotator == pipeline::AnnotatorSource::teacher ? BaselineKind::icd_offline
                                                        : BaselineKind::oracle_demos,
        config);
    run.selector = retrieval::selector_kind_from_name(name);
    run.metric = metric;
    run.validate();

    auto ledger = std::make_shared<backends::CostLedger>();
    pipeline::Endpoints endpoints;
    endpoints.student = backends::make_generation_endpoint(
        config.student, backends::Role::student, ledger);
    endpoints.encoder = backends::make_embedding_endpoint(config.encoder, ledger);
    endpoints.ledger = ledger;

    json teacher_echo(nullptr);
    if (annotator == pipeline::AnnotatorSource::teacher) teacher_echo = *config.teacher;
    const json echo{{"run", run},
                    {"student", config.student},
                    {"teacher", teacher_echo},
                    {"encoder", config.encoder}};

    pipeline::OnlinePipeline pipe(run, endpoints, echo, shared_pool);
    const auto report = pipe.run_stream(samples);

    SelectorComparison row;
    row.selector = name;
    row.metric_value = report.metric_value;
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    double demo_acc = 0.0;
    std::size_t counted = 0;
    for (const auto& o : report.outcomes) {
      auto it = by_id.find(o.sample_id);
      if (o.demos_used.empty() || it == by_id.end() || !it->second->gold ||
          it->second->gold->kind != GoldAnswer::Kind::label) {
        continue;
      }
      std::vector<std::size_t> indices;
      for (const auto& id : o.demos_used) indices.push_back(pool_index.at(id));
      demo_acc +=
          retrieval::demonstration_accuracy(shared_pool, indices, *it->second->gold);
      ++counted;
    }
    if (counted > 0) row.demonstration_accuracy = demo_acc / counted;
    table.push_back(row);

    if (!out_dir.empty()) {
      ensure_dir(out_dir);
      std::ofstream out(out_dir + "/selector_" + sanitize(name) + ".report.jsonl");
      out << report.serialize();
    }
  }

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    std::ofstream csv(out_dir + "/selector_comparison.csv");
    csv << "selector,metric_value,demonstration_accuracy\n";
    for (const auto& row : table) {
      csv << row.selector << ",";
      if (row.metric_value) csv << *row.metric_value;
      csv << ",";
      if (row.demonstration_accuracy) csv << *row.demonstration_accuracy;
      csv << "\n";
    }
  }
  return table;
}

json CalibrationReport::to_json() const {
  return json{{"delta", delta}, {"r", r}, {"p_value", p_value}, {"n", n}};
}

CalibrationReport calibrate(const config::EngineConfig& config,
                            const std::vector<Sample>& validation) {
  auto ledger = std::make_shared<backends::CostLedger>();
  auto student =
      backends::make_generation_endpoint(config.student, backends::Role::student, ledger);

  pipeline::RunConfig run = config.run;
  run.cot_suffix.clear();
  std::vector<uncertainty::CalibrationRecord> records;
  for (const auto& sample : validation) {
    if (!sample.gold) continue;
    if (sample.gold->kind != GoldAnswer::Kind::label) {
      throw std::invalid_argument("calibration needs label golds");
    }
    const auto pred = student->generate(pipeline::make_request(sample, run, true));
    if (pred.token_dists.empty()) {
      throw backends::BackendError("student endpoint reported no token distributions");
    }
    uncertainty::CalibrationRecord rec;
    rec.uncertainty =
        uncertainty::sequence_entropy(pred.token_dists, run.entropy_variant);
    rec.correct = metrics::exact_match(pred.text, *sample.gold);
    records.push_back(rec);
  }
  if (records.empty()) {
    throw std::invalid_argument("calibration set has no golded samples");
  }

  CalibrationReport report;
  report.delta = uncertainty::calibrate_threshold(records, config.calibration);
  const auto corr = uncertainty::uncertainty_correlation(records);
  report.r = corr.r;
  report.p_value = corr.p_value;
  report.n = corr.n;
  return report;
}

}  // namespace icd::harness
