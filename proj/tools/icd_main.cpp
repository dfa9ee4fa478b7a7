#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "icd.h"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CLI::ValidationError("cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string json_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

int status_to_exit(icd_status status) {
  switch (status) {
    case ICD_OK: return 0;
    case ICD_ERR_CONFIG: return 1;
    case ICD_ERR_RUNTIME: return 2;
    case ICD_BUDGET_EXHAUSTED: return 3;
  }
  return 2;
}

int finish(icd_status status, char* payload) {
  if (status != ICD_OK) {
    std::cerr << "error: " << icd_last_error() << "\n";
  }
  if (payload) {
    std::cout << payload << "\n";
    icd_string_free(payload);
  }
  return status_to_exit(status);
}

struct EngineGuard {
  icd_engine* engine = nullptr;
  ~EngineGuard() { icd_engine_destroy(engine); }
};

int with_engine(const std::string& config_path, EngineGuard& guard) {
  const std::string config = read_file(config_path);
  const icd_status status = icd_engine_create(config.c_str(), &guard.engine);
  if (status != ICD_OK) {
    std::cerr << "error: " << icd_last_error() << "\n";
  }
  return status_to_exit(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"in-context distillation engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(icd_version()));

  std::string config_path, dataset_path, out_dir, baseline = "icd_online";
  std::string spec_path, validation_path, selectors, support_path, pool_path;
  double fraction = 1.0;

  auto* run = app.add_subcommand("run", "run one baseline over a dataset");
  run->add_option("--config", config_path, "engine config JSON")->required();
  run->add_option("--dataset", dataset_path, "query dataset JSONL")->required();
  run->add_option("--baseline", baseline,
                  "zero_shot | cot | best_of_n_student | self_labeling | "
                  "icd_online | icd_offline | oracle_demos");
  run->add_option("--out", out_dir, "directory for report + series files");

  auto* sweep = app.add_subcommand("sweep", "repeat a baseline across one axis");
  sweep->add_option("--config", config_path, "engine config JSON")->required();
  sweep->add_option("--spec", spec_path, "sweep spec JSON")->required();
  sweep->add_option("--dataset", dataset_path, "query dataset JSONL")->required();
  sweep->add_option("--out", out_dir, "directory for cell reports + summary");

  auto* cal = app.add_subcommand("calibrate", "fit the uncertainty gate threshold");
  cal->add_option("--config", config_path, "engine config JSON")->required();
  cal->add_option("--validation", validation_path, "golded validation JSONL")
      ->required();

  auto* cmp = app.add_subcommand("compare-selectors",
                                 "run selectors over one shared pool");
  cmp->add_option("--config", config_path, "engine config JSON")->required();
  cmp->add_option("--dataset", dataset_path, "query dataset JSONL")->required();
  cmp->add_option("--selectors", selectors, "comma-separated selector names")
      ->required();
  cmp->add_option("--out", out_dir, "directory for per-selector reports");

  auto* pool = app.add_subcommand("pool", "demonstration pool utilities");
  pool->require_subcommand(1);
  auto* pool_build = pool->add_subcommand("build", "annotate a support set");
  pool_build->add_option("--config", config_path, "engine config JSON")->required();
  pool_build->add_option("--support", support_path, "support dataset JSONL")
      ->required();
  pool_build->add_option("--fraction", fraction, "share of the support set");
  pool_build->add_option("--out", pool_path, "pool snapshot path")->required();
  auto* pool_inspect = pool->add_subcommand("inspect", "summarize a snapshot");
  pool_inspect->add_option("--pool", pool_path, "pool snapshot path")->required();

  std::size_t classes = 10, samples = 200, support = 0;
  std::uint64_t seed = 0;
  bool with_options = false;
  std::string question = "What is shown in this image?";
  auto* sim = app.add_subcommand("make-sim-data", "write a synthetic dataset");
  sim->add_option("--spec", spec_path, "generator config JSON (overrides flags)");
  sim->add_option("--classes", classes, "number of synthetic classes");
  sim->add_option("--samples", samples, "number of samples");
  sim->add_option("--support", support, "extra support samples (same classes)");
  sim->add_option("--seed", seed, "generator seed");
  sim->add_option("--question", question, "question asked for every sample");
  sim->add_flag("--with-options", with_options, "emit lettered answer options");
  sim->add_option("--out", dataset_path, "output dataset JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      EngineGuard guard;
      if (int rc = with_engine(config_path, guard)) return rc;
      char* report = nullptr;
      const icd_status status =
          icd_run_baseline(guard.engine, baseline.c_str(), dataset_path.c_str(),
                           out_dir.c_str(), &report);
      return finish(status, report);
    }
    if (sweep->parsed()) {
      EngineGuard guard;
      if (int rc = with_engine(config_path, guard)) return rc;
      char* summary = nullptr;
      const icd_status status =
          icd_run_sweep(guard.engine, read_file(spec_path).c_str(),
                        dataset_path.c_str(), out_dir.c_str(), &summary);
      return finish(status, summary);
    }
    if (cal->parsed()) {
      EngineGuard guard;
      if (int rc = with_engine(config_path, guard)) return rc;
      char* report = nullptr;
      const icd_status status =
          icd_calibrate(guard.engine, validation_path.c_str(), &report);
      return finish(status, report);
    }
    if (cmp->parsed()) {
      EngineGuard guard;
      if (int rc = with_engine(config_path, guard)) return rc;
      char* table = nullptr;
      const icd_status status =
          icd_compare_selectors(guard.engine, selectors.c_str(),
                                dataset_path.c_str(), out_dir.c_str(), &table);
      return finish(status, table);
    }
    if (pool_build->parsed()) {
      EngineGuard guard;
      if (int rc = with_engine(config_path, guard)) return rc;
      return finish(icd_pool_build(guard.engine, support_path.c_str(), fraction,
                                   pool_path.c_str()),
                    nullptr);
    }
    if (pool_inspect->parsed()) {
      char* info = nullptr;
      const icd_status status = icd_pool_inspect(pool_path.c_str(), &info);
      return finish(status, info);
    }
    if (sim->parsed()) {
      std::string spec;
      if (!spec_path.empty()) {
        spec = read_file(spec_path);
      } else {
        std::ostringstream out;
        out << "{\"classes\":" << classes << ",\"samples\":" << samples
            << ",\"support_samples\":" << support << ",\"seed\":" << seed
            << ",\"with_options\":" << (with_options ? "true" : "false")
            << ",\"question\":\"" << json_escape(question) << "\"}";
        spec = out.str();
      }
      return finish(icd_make_sim_data(spec.c_str(), dataset_path.c_str()), nullptr);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
