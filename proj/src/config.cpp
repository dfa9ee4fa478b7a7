#include "icd/config.hpp"

#include <fstream>

namespace icd::config {

void merge_run_config(const json& j, pipeline::RunConfig& run) {
  if (j.contains("selection")) {
    const json& s = j.at("selection");
    if (s.contains("k_it_fraction")) s.at("k_it_fraction").get_to(run.selection.k_it_fraction);
    if (s.contains("k_ii")) s.at("k_ii").get_to(run.selection.k_ii);
    if (s.contains("k_tt")) s.at("k_tt").get_to(run.selection.k_tt);
  }
  if (j.contains("gate")) {
    const json& g = j.at("gate");
    if (g.contains("delta")) run.gate.delta = delta_from_json(g.at("delta"));
    if (g.contains("tts_n")) g.at("tts_n").get_to(run.gate.tts_n);
    if (g.contains("bleu2_consistency_threshold")) {
      g.at("bleu2_consistency_threshold").get_to(run.gate.bleu2_consistency_threshold);
    }
    if (g.contains("epsilon_significance")) {
      g.at("epsilon_significance").get_to(run.gate.epsilon_significance);
    }
  }
  if (j.contains("selector")) {
    run.selector = retrieval::selector_kind_from_name(j.at("selector").get<std::string>());
  }
  if (j.contains("annotation_kind")) {
    run.annotation_kind =
        annotation_kind_from_name(j.at("annotation_kind").get<std::string>());
  }
  if (j.contains("entropy_variant")) {
    run.entropy_variant = uncertainty::entropy_variant_from_name(
        j.at("entropy_variant").get<std::string>());
  }
  if (j.contains("pass_kind")) {
    run.pass_kind = pipeline::pass_kind_from_name(j.at("pass_kind").get<std::string>());
  }
  if (j.contains("annotator")) {
    run.annotator =
        pipeline::annotator_source_from_name(j.at("annotator").get<std::string>());
  }
  if (j.contains("sync_mode")) {
    run.sync_mode = pipeline::sync_mode_from_name(j.at("sync_mode").get<std::string>());
  }
  if (j.contains("pool_init")) j.at("pool_init").get_to(run.pool_init);
  if (j.contains("pool_capacity")) {
    run.pool_capacity.reset();
    if (!j.at("pool_capacity").is_null()) {
      run.pool_capacity = j.at("pool_capacity").get<std::size_t>();
    }
  }
  if (j.contains("pool_fraction")) j.at("pool_fraction").get_to(run.pool_fraction);
  if (j.contains("support_dataset")) j.at("support_dataset").get_to(run.support_dataset);
  if (j.contains("annotation_budget")) {
    run.annotation_budget.reset();
    if (!j.at("annotation_budget").is_null()) {
      run.annotation_budget = j.at("annotation_budget").get<std::int64_t>();
    }
  }
  if (j.contains("seed")) j.at("seed").get_to(run.seed);
  if (j.contains("system_message")) j.at("system_message").get_to(run.system_message);
  if (j.contains("cot_suffix")) j.at("cot_suffix").get_to(run.cot_suffix);
  if (j.contains("best_of_n")) j.at("best_of_n").get_to(run.best_of_n);
  if (j.contains("use_demonstrations")) {
    j.at("use_demonstrations").get_to(run.use_demonstrations);
  }
  if (j.contains("self_label_tts")) j.at("self_label_tts").get_to(run.self_label_tts);
  if (j.contains("count_failed_as_wrong")) {
    j.at("count_failed_as_wrong").get_to(run.count_failed_as_wrong);
  }
}

EngineConfig parse_engine_config(const json& j) {
  EngineConfig config;
  if (j.contains("run")) {
    merge_run_config(j.at("run"), config.run);
    if (j.at("run").contains("metric")) {
      j.at("run").at("metric").get_to(config.metric);
    }
  }
  if (j.contains("metric")) j.at("metric").get_to(config.metric);
  if (config.metric != "auto" && config.metric != "accuracy" && config.metric != "bleu4") {
    throw std::invalid_argument("metric must be auto, accuracy or bleu4");
  }
  if (j.contains("student")) j.at("student").get_to(config.student);
  if (j.contains("teacher") && !j.at("teacher").is_null()) {
    config.teacher = j.at("teacher").get<backends::EndpointConfig>();
  }
  if (j.contains("encoder")) j.at("encoder").get_to(config.encoder);
  if (j.contains("simulation")) j.at("simulation").get_to(config.simulation);
  if (j.contains("calibration")) {
    const json& c = j.at("calibration");
    const auto mode = c.value("mode", std::string("max_accuracy_split"));
    if (mode == "max_accuracy_split") {
      config.calibration.mode = uncertainty::CalibrationMode::max_accuracy_split;
    } else if (mode == "quantile") {
      config.calibration.mode = uncertainty::CalibrationMode::quantile;
    } else {
      throw std::invalid_argument("unknown calibration mode: " + mode);
    }
    if (c.contains("q")) c.at("q").get_to(config.calibration.q);
  }
  if (j.contains("cot_text")) j.at("cot_text").get_to(config.cot_text);
  return config;
}

EngineConfig load_engine_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return parse_engine_config(j);
}

json engine_config_to_json(const EngineConfig& config) {
  json run = config.run;
  json j{{"run", run},
         {"metric", config.metric},
         {"student", config.student},
         {"teacher", config.teacher ? json(*config.teacher) : json(nullptr)},
         {"encoder", config.encoder},
         {"simulation", config.simulation},
         {"cot_text", config.cot_text}};
  j["calibration"] =
      json{{"mode", config.calibration.mode ==
                            uncertainty::CalibrationMode::max_accuracy_split
                        ? "max_accuracy_split"
                        : "quantile"},
           {"q", config.calibration.q}};
  return j;
}

std::string resolve_metric(const std::string& requested,
                           const std::vector<Sample>& samples) {
  if (requested != "auto") return requested;
  bool any_label = false, any_caption = false;
  for (const auto& s : samples) {
    if (!s.gold) continue;
    (s.gold->kind == GoldAnswer::Kind::label ? any_label : any_caption) = true;
  }
  if (any_label && any_caption) {
    throw std::invalid_argument("dataset mixes label and caption golds; set metric");
  }
  return any_caption ? "bleu4" : "accuracy";
}

}  // namespace icd::config
