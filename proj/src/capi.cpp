#include "icd.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "icd/backends.hpp"
#include "icd/config.hpp"
#include "icd/dataset.hpp"
#include "icd/harness.hpp"
#include "icd/simulator.hpp"

struct icd_engine {
  icd::config::EngineConfig config;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
icd_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ICD_OK;
  } catch (const icd::backends::BudgetExceeded& e) {
    g_last_error = e.what();
    return ICD_BUDGET_EXHAUSTED;
  } catch (const icd::backends::BackendError& e) {
    g_last_error = e.what();
    return ICD_ERR_RUNTIME;
  } catch (const icd::json::exception& e) {
    g_last_error = e.what();
    return ICD_ERR_CONFIG;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return ICD_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ICD_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown failure";
    return ICD_ERR_RUNTIME;
  }
}

icd_status config_error(const std::string& message) {
  g_last_error = message;
  return ICD_ERR_CONFIG;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

extern "C" {

const char* icd_last_error(void) { return g_last_error.c_str(); }

void icd_string_free(char* s) { delete[] s; }

const char* icd_version(void) { return "1.0.0"; }

icd_status icd_engine_create(const char* config_json, icd_engine** out) {
  if (!config_json || !out) return config_error("null argument");
  *out = nullptr;
  return guarded([&] {
    auto parsed = icd::json::parse(config_json);
    auto engine = new icd_engine{icd::config::parse_engine_config(parsed)};
    *out = engine;
  });
}

void icd_engine_destroy(icd_engine* engine) { delete engine; }

icd_status icd_run_baseline(icd_engine* engine, const char* baseline,
                            const char* dataset_path, const char* out_dir,
                            char** out_report_json) {
  if (!engine || !baseline || !dataset_path) return config_error("null argument");
  return guarded([&] {
    const auto kind = icd::harness::baseline_kind_from_name(baseline);
    const auto samples = icd::load_dataset(dataset_path);
    const auto result = icd::harness::run_baseline(
        engine->config, kind, samples, out_dir ? out_dir : "");
    if (out_report_json) *out_report_json = dup_string(result.report.header().dump());
  });
}

icd_status icd_run_sweep(icd_engine* engine, const char* spec_json,
                         const char* dataset_path, const char* out_dir,
                         char** out_summary_json) {
  if (!engine || !spec_json || !dataset_path) return config_error("null argument");
  return guarded([&] {
    icd::harness::SweepSpec spec;
    from_json(icd::json::parse(spec_json), spec);
    const auto samples = icd::load_dataset(dataset_path);
    const auto summary = icd::harness::run_sweep(engine->config, spec, samples,
                                                 out_dir ? out_dir : "");
    if (out_summary_json) {
      *out_summary_json = dup_string(summary.to_json_summary().dump());
    }
  });
}

icd_status icd_calibrate(icd_engine* engine, const char* validation_path,
                         char** out_json) {
  if (!engine || !validation_path) return config_error("null argument");
  return guarded([&] {
    const auto validation = icd::load_dataset(validation_path);
    const auto report = icd::harness::calibrate(engine->config, validation);
    if (out_json) *out_json = dup_string(report.to_json().dump());
  });
}

icd_status icd_compare_selectors(icd_engine* engine, const char* selectors,
                                 const char* dataset_path, const char* out_dir,
                                 char** out_json) {
  if (!engine || !selectors || !dataset_path) return config_error("null argument");
  return guarded([&] {
    const auto names = split_csv(selectors);
    const auto samples = icd::load_dataset(dataset_path);
    const auto table = icd::harness::compare_selectors(engine->config, samples,
                                                       names, out_dir ? out_dir : "");
    icd::json rows = icd::json::array();
    for (const auto& row : table) {
      rows.push_back(icd::json{
          {"selector", row.selector},
          {"metric_value",
           row.metric_value ? icd::json(*row.metric_value) : icd::json(nullptr)},
          {"demonstration_accuracy",
           row.demonstration_accuracy ? icd::json(*row.demonstration_accuracy)
                                      : icd::json(nullptr)}});
    }
    if (out_json) *out_json = dup_string(rows.dump());
  });
}

icd_status icd_pool_build(icd_engine* engine, const char* support_path,
                          double fraction, const char* out_pool_path) {
  if (!engine || !support_path || !out_pool_path) {
    return config_error("null argument");
  }
  return guarded([&] {
    const auto support = icd::load_dataset(support_path);
    const auto annotator = engine->config.teacher
                               ? icd::pipeline::AnnotatorSource::teacher
                               : icd::pipeline::AnnotatorSource::oracle;
    const auto metric = icd::config::resolve_metric(engine->config.metric, support);
    auto ledger = std::make_shared<icd::backends::CostLedger>();
    const auto pool = icd::harness::build_support_pool(
        engine->config, support, annotator, fraction, engine->config.run.seed,
        metric, ledger);
    icd::save_pool(out_pool_path, pool);
  });
}

icd_status icd_pool_inspect(const char* pool_path, char** out_json) {
  if (!pool_path) return config_error("null argument");
  return guarded([&] {
    const auto pool = icd::load_pool(pool_path);
    std::map<std::string, std::size_t> sources;
    for (const auto& demo : pool.entries()) {
      ++sources[icd::annotation_source_name(demo.annotation.source)];
    }
    icd::json info{{"entries", pool.size()},
                   {"dimension", pool.dimension()},
                   {"encoder_id", pool.encoder_id()},
                   {"sources", sources}};
    if (out_json) *out_json = dup_string(info.dump());
  });
}

icd_status icd_make_sim_data(const char* sim_json, const char* out_path) {
  if (!sim_json || !out_path) return config_error("null argument");
  return guarded([&] {
    icd::backends::SimDataConfig config;
    from_json(icd::json::parse(sim_json), config);
    icd::save_dataset(out_path, icd::backends::make_sim_dataset(config, "q"));
    if (config.support_samples > 0) {
      icd::backends::SimDataConfig support = config;
      support.samples = config.support_samples;
      std::string path(out_path);
      const auto dot = path.rfind(".jsonl");
      if (dot != std::string::npos && dot == path.size() - 6) {
        path.insert(dot, ".support");
      } else {
        path += ".support";
      }
      icd::save_dataset(path, icd::backends::make_sim_dataset(support, "s"));
    }
  });
}

}  // extern "C"
