#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "icd/dataset.hpp"
#include "icd/harness.hpp"
#include "icd/simulator.hpp"

namespace {

namespace fs = std::filesystem;
using icd::Sample;
using icd::config::EngineConfig;
using icd::harness::BaselineKind;
using icd::pipeline::AnnotatorSource;
using icd::pipeline::PassKind;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("icd_harness_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

std::vector<std::string> four_labels() {
  return {"class_00", "class_01", "class_02", "class_03"};
}

// Simulated world mirroring a small real deployment: a weak student whose
// accuracy rises with matching demonstrations, a strong teacher, a planted
// encoder.
EngineConfig sim_config() {
  EngineConfig cfg;
  const auto labels = four_labels();
  cfg.student.profile.seed = 1;
  cfg.student.profile.labels = labels;
  cfg.student.profile.competence["default"] = 0.4;
  cfg.student.profile.icl_gain_per_match = 0.3;
  cfg.teacher = cfg.student;
  cfg.teacher->profile.seed = 2;
  cfg.teacher->profile.competence["default"] = 1.0;
  cfg.teacher->profile.icl_gain_per_match = 0.0;
  cfg.encoder.sim.seed = 3;
  cfg.encoder.sim.dimension = 64;
  cfg.encoder.sim.labels = labels;
  cfg.simulation.labels = labels;
  cfg.run.gate.delta = 0.4;
  cfg.run.seed = 7;
  return cfg;
}

std::vector<Sample> sim_samples(std::size_t n, std::uint64_t seed,
                                const std::string& split = "q") {
  icd::backends::SimDataConfig dc;
  dc.labels = four_labels();
  dc.samples = n;
  dc.seed = seed;
  return icd::backends::make_sim_dataset(dc, split);
}

std::string write_support(const TempDir& dir, std::size_t n, std::uint64_t seed) {
  const std::string path = dir.file("support.jsonl");
  icd::save_dataset(path, sim_samples(n, seed, "s"));
  return path;
}

std::size_t count_queried(const icd::pipeline::RunReport& report) {
  std::size_t queried = 0;
  for (const auto& o : report.outcomes) queried += o.teacher_queried ? 1 : 0;
  return queried;
}

}  // namespace

TEST_CASE("baseline names round-trip") {
  const std::vector<BaselineKind> kinds = {
      BaselineKind::zero_shot,     BaselineKind::cot,
      BaselineKind::best_of_n_student, BaselineKind::self_labeling,
      BaselineKind::icd_online,    BaselineKind::icd_offline,
      BaselineKind::oracle_demos};
  for (auto k : kinds) {
    CHECK(icd::harness::baseline_kind_from_name(icd::harness::baseline_kind_name(k)) ==
          k);
  }
  CHECK_THROWS_AS(icd::harness::baseline_kind_from_name("gpt4"),
                  std::invalid_argument);
}

TEST_CASE("baselines resolve to documented run configs") {
  EngineConfig cfg = sim_config();
  cfg.run.cot_suffix = "stale";  // baselines must clear inherited decorations
  cfg.run.best_of_n = 9;

  const auto zero = icd::harness::resolve_baseline(BaselineKind::zero_shot, cfg);
  CHECK(zero.pass_kind == PassKind::online);
  CHECK(zero.annotator == AnnotatorSource::teacher);
  CHECK(std::isinf(zero.gate.delta));
  CHECK(zero.cot_suffix.empty());
  CHECK(zero.best_of_n == 0);

  const auto cot = icd::harness::resolve_baseline(BaselineKind::cot, cfg);
  CHECK(std::isinf(cot.gate.delta));
  CHECK(cot.cot_suffix == cfg.cot_text);

  const auto bon = icd::harness::resolve_baseline(BaselineKind::best_of_n_student, cfg);
  CHECK(std::isinf(bon.gate.delta));
  CHECK(bon.best_of_n == cfg.run.gate.tts_n);  // matches the teacher's draw count
  EngineConfig low = cfg;
  low.run.gate.tts_n = 1;
  CHECK(icd::harness::resolve_baseline(BaselineKind::best_of_n_student, low)
            .best_of_n == 2);  // still an actual batch

  const auto self = icd::harness::resolve_baseline(BaselineKind::self_labeling, cfg);
  CHECK(self.pass_kind == PassKind::online);
  CHECK(self.annotator == AnnotatorSource::student_self);
  CHECK(self.gate.delta == cfg.run.gate.delta);

  const auto online = icd::harness::resolve_baseline(BaselineKind::icd_online, cfg);
  CHECK(online.pass_kind == PassKind::online);
  CHECK(online.annotator == AnnotatorSource::teacher);
  CHECK(online.gate.delta == cfg.run.gate.delta);

  const auto offline = icd::harness::resolve_baseline(BaselineKind::icd_offline, cfg);
  CHECK(offline.pass_kind == PassKind::pure_icl);
  CHECK(offline.annotator == AnnotatorSource::teacher);

  const auto oracle = icd::harness::resolve_baseline(BaselineKind::oracle_demos, cfg);
  CHECK(oracle.pass_kind == PassKind::pure_icl);
  CHECK(oracle.annotator == AnnotatorSource::oracle);
}

TEST_CASE("support pool takes a seeded ceil-fraction of the support set") {
  EngineConfig cfg = sim_config();
  const auto support = sim_samples(10, 40, "s");
  auto ledger = std::make_shared<icd::backends::CostLedger>();

  const auto quarter = icd::harness::build_support_pool(
      cfg, support, AnnotatorSource::oracle, 0.25, 5, "accuracy", ledger);
  CHECK(quarter.size() == 3);  // ceil(0.25 * 10)

  const auto all = icd::harness::build_support_pool(
      cfg, support, AnnotatorSource::oracle, 1.0, 5, "accuracy", ledger);
  CHECK(all.size() == 10);

  // Same seed, same subset and order; oracle annotations echo the gold.
  const auto again = icd::harness::build_support_pool(
      cfg, support, AnnotatorSource::oracle, 0.25, 5, "accuracy", ledger);
  REQUIRE(again.size() == quarter.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    const auto& a = quarter.entries()[i];
    CHECK(a.sample.id == again.entries()[i].sample.id);
    CHECK(a.annotation.answer == a.sample.gold->texts[0]);
    CHECK(a.annotation.source == icd::AnnotationSource::oracle);
    CHECK(a.image_embedding.size() == cfg.encoder.sim.dimension);
  }
}

TEST_CASE("teacher-annotated support pools carry filtered teacher labels") {
  EngineConfig cfg = sim_config();  // teacher competence 1.0: always consistent
  const auto support = sim_samples(8, 41, "s");
  auto ledger = std::make_shared<icd::backends::CostLedger>();
  const auto pool = icd::harness::build_support_pool(
      cfg, support, AnnotatorSource::teacher, 1.0, 5, "accuracy", ledger);
  CHECK(pool.size() == 8);
  for (const auto& d : pool.entries()) {
    CHECK(d.annotation.source == icd::AnnotationSource::teacher);
    CHECK(d.annotation.consistency_votes == cfg.run.gate.tts_n);
    CHECK(d.annotation.answer == d.sample.gold->texts[0]);
  }
  CHECK(ledger->get(icd::backends::Role::teacher).calls ==
        static_cast<std::int64_t>(8 * cfg.run.gate.tts_n));
}

TEST_CASE("support pool rejects bad arguments") {
  EngineConfig cfg = sim_config();
  auto ledger = std::make_shared<icd::backends::CostLedger>();
  const auto support = sim_samples(4, 42, "s");
  CHECK_THROWS_AS(icd::harness::build_support_pool(cfg, {}, AnnotatorSource::oracle,
                                                   0.5, 5, "accuracy", ledger),
                  std::invalid_argument);
  CHECK_THROWS_AS(icd::harness::build_support_pool(cfg, support,
                                                   AnnotatorSource::oracle, 0.0, 5,
                                                   "accuracy", ledger),
                  std::invalid_argument);
  CHECK_THROWS_AS(icd::harness::build_support_pool(cfg, support, AnnotatorSource::none,
                                                   0.5, 5, "accuracy", ledger),
                  std::invalid_argument);
  EngineConfig no_teacher = cfg;
  no_teacher.teacher.reset();
  CHECK_THROWS_AS(icd::harness::build_support_pool(no_teacher, support,
                                                   AnnotatorSource::teacher, 0.5, 5,
                                                   "accuracy", ledger),
                  std::invalid_argument);
}

TEST_CASE("run_baseline writes the report and the series next to it") {
  TempDir dir;
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(12, 50);
  const auto result = icd::harness::run_baseline(cfg, BaselineKind::zero_shot,
                                                 samples, dir.path.string());
  REQUIRE_FALSE(result.report_path.empty());
  CHECK(fs::exists(result.report_path));
  CHECK(fs::exists(dir.file("zero_shot.series.csv")));

  std::ifstream in(result.report_path);
  std::stringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str() == result.report.serialize());

  std::ifstream series(dir.file("zero_shot.series.csv"));
  std::string line;
  std::getline(series, line);
  CHECK(line ==
        "index,sample_id,cumulative_metric,queried_cum,accepted_cum,"
        "student_calls_cum,annotator_calls_cum");
  std::size_t rows = 0;
  while (std::getline(series, line)) rows += line.empty() ? 0 : 1;
  CHECK(rows == samples.size());
}

TEST_CASE("zero-shot is the online loop with the gate disabled, byte for byte") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(25, 51);
  const auto zero = icd::harness::run_baseline(cfg, BaselineKind::zero_shot, samples);

  EngineConfig ungated = cfg;
  ungated.run.gate.delta = kInf;
  const auto online =
      icd::harness::run_baseline(ungated, BaselineKind::icd_online, samples);
  CHECK(zero.report.serialize() == online.report.serialize());
  CHECK(zero.report.t_x_percent == 0.0);
}

TEST_CASE("series columns reconcile with the report totals") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(40, 52);
  const auto result = icd::harness::run_baseline(cfg, BaselineKind::icd_online, samples);
  const auto& report = result.report;
  const std::string csv = icd::harness::series_csv(report, samples);

  std::istringstream in(csv);
  std::string line, last;
  std::getline(in, line);  // header
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    last = line;
  }
  REQUIRE(rows == samples.size());

  std::vector<std::string> cells;
  std::istringstream row(last);
  std::string cell;
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  REQUIRE(cells.size() == 7);
  CHECK(std::stoul(cells[0]) == samples.size());
  CHECK(std::stod(cells[2]) ==
        doctest::Approx(*report.metric_value).epsilon(1e-4));
  const std::size_t queried = count_queried(report);
  CHECK(std::stoul(cells[3]) == queried);
  CHECK(std::stol(cells[6]) ==
        static_cast<long>(queried * static_cast<std::size_t>(cfg.run.gate.tts_n)));
  std::size_t accepted = 0;
  for (const auto& o : report.outcomes) {
    accepted += (o.annotation_accepted && *o.annotation_accepted) ? 1 : 0;
  }
  CHECK(std::stoul(cells[4]) == accepted);
  CHECK(queried > 0);
}

TEST_CASE("online T(x) is the annotation-query rate") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(30, 53);
  const auto result = icd::harness::run_baseline(cfg, BaselineKind::icd_online, samples);
  const auto queried = static_cast<double>(count_queried(result.report));
  CHECK(result.report.t_x_percent ==
        doctest::Approx(100.0 * queried / 30.0).epsilon(1e-12));
}

TEST_CASE("offline ICD bills its pool fraction; oracle demos are free") {
  TempDir dir;
  EngineConfig cfg = sim_config();
  cfg.run.support_dataset = write_support(dir, 20, 54);
  cfg.run.pool_fraction = 0.3;
  const auto samples = sim_samples(10, 55);

  const auto offline =
      icd::harness::run_baseline(cfg, BaselineKind::icd_offline, samples);
  CHECK(offline.report.t_x_percent == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(count_queried(offline.report) == 0);

  const auto oracle =
      icd::harness::run_baseline(cfg, BaselineKind::oracle_demos, samples);
  CHECK(oracle.report.t_x_percent == 0.0);
}

TEST_CASE("offline ICD without a support source fails up front") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(4, 56);
  CHECK_THROWS_WITH_AS(
      icd::harness::run_baseline(cfg, BaselineKind::icd_offline, samples),
      "icd_offline needs support_dataset or pool_init", std::invalid_argument);
}

TEST_CASE("offline ICD can start from a saved pool snapshot") {
  TempDir dir;
  EngineConfig cfg = sim_config();
  auto ledger = std::make_shared<icd::backends::CostLedger>();
  const auto pool = icd::harness::build_support_pool(
      cfg, sim_samples(12, 57, "s"), AnnotatorSource::oracle, 1.0, 5, "accuracy",
      ledger);
  const std::string snapshot = dir.file("pool.jsonl");
  icd::save_pool(snapshot, pool);

  cfg.run.pool_init = snapshot;
  const auto samples = sim_samples(10, 58);
  const auto result =
      icd::harness::run_baseline(cfg, BaselineKind::icd_offline, samples);
  for (const auto& o : result.report.outcomes) {
    CHECK(o.demos_used.size() == 3);
  }
}

TEST_CASE("best-of-n bills one student batch per sample") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(10, 59);
  const auto result =
      icd::harness::run_baseline(cfg, BaselineKind::best_of_n_student, samples);
  const auto& ledger = result.report.ledger;
  CHECK(ledger.at("student").at("calls").get<std::int64_t>() ==
        static_cast<std::int64_t>(10 * cfg.run.gate.tts_n));
  CHECK(ledger.at("teacher").at("calls").get<std::int64_t>() == 0);
}

TEST_CASE("self-labeling runs without any teacher and bills the student as one") {
  EngineConfig cfg = sim_config();
  cfg.teacher.reset();
  const auto samples = sim_samples(30, 60);
  const auto result =
      icd::harness::run_baseline(cfg, BaselineKind::self_labeling, samples);
  const auto queried = count_queried(result.report);
  CHECK(queried > 0);
  CHECK(result.report.t_x_percent ==
        doctest::Approx(100.0 * static_cast<double>(queried) / 30.0).epsilon(1e-12));
  // Self-annotation draws once per query (no agreement filter by default) and
  // is billed under the annotator role.
  CHECK(result.report.ledger.at("teacher").at("calls").get<std::int64_t>() ==
        static_cast<std::int64_t>(queried));
  const auto& echoed_teacher = result.report.config_echo.at("teacher");
  CHECK(echoed_teacher == icd::json(cfg.student));
}

TEST_CASE("sweep cells match standalone runs and carry per-repeat seeds") {
  EngineConfig cfg = sim_config();
  cfg.run.selection.k_tt = 1;
  const auto samples = sim_samples(20, 61);

  icd::harness::SweepSpec spec;
  spec.axis = "shots";
  spec.values = {icd::json(1)};
  spec.repeats = 1;
  spec.baseline = BaselineKind::icd_online;
  const auto summary = icd::harness::run_sweep(cfg, spec, samples);
  REQUIRE(summary.cells.size() == 1);
  CHECK(summary.cells[0].error.empty());
  CHECK(summary.cells[0].seed == cfg.run.seed);

  const auto standalone =
      icd::harness::run_baseline(cfg, BaselineKind::icd_online, samples);
  CHECK(*summary.cells[0].metric_value == *standalone.report.metric_value);
  CHECK(summary.cells[0].t_x_percent == standalone.report.t_x_percent);
}

TEST_CASE("sweep repeats explore distinct simulated worlds") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(30, 62);
  icd::harness::SweepSpec spec;
  spec.axis = "delta";
  spec.values = {icd::json(0.4)};
  spec.repeats = 4;
  spec.baseline = BaselineKind::icd_online;
  const auto summary = icd::harness::run_sweep(cfg, spec, samples);
  REQUIRE(summary.cells.size() == 4);
  std::set<double> metrics;
  for (const auto& cell : summary.cells) {
    REQUIRE(cell.error.empty());
    REQUIRE(cell.metric_value.has_value());
    metrics.insert(*cell.metric_value);
    CHECK(cell.seed == cfg.run.seed + static_cast<std::uint64_t>(cell.repeat));
  }
  CHECK(metrics.size() > 1);  // repeats are not copies of one world
}

TEST_CASE("a failing sweep cell is recorded, not fatal") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(8, 63);
  icd::harness::SweepSpec spec;
  spec.axis = "selector";
  spec.values = {icd::json("icd_cross_modal"), icd::json("not_a_selector")};
  spec.repeats = 1;
  spec.baseline = BaselineKind::icd_online;
  const auto summary = icd::harness::run_sweep(cfg, spec, samples);
  REQUIRE(summary.cells.size() == 2);
  CHECK(summary.cells[0].error.empty());
  CHECK_FALSE(summary.cells[1].error.empty());
  CHECK_FALSE(summary.cells[1].metric_value.has_value());

  const std::string csv = summary.summary_csv();
  CHECK(csv.find("not_a_selector") != std::string::npos);
  CHECK(csv.rfind("axis,value,n,mean,stddev,failed\n", 0) == 0);
}

TEST_CASE("sweep validates its spec") {
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(4, 64);
  icd::harness::SweepSpec spec;
  spec.axis = "shots";
  spec.repeats = 0;
  spec.values = {icd::json(1)};
  CHECK_THROWS_AS(icd::harness::run_sweep(cfg, spec, samples), std::invalid_argument);
  spec.repeats = 1;
  spec.values.clear();
  CHECK_THROWS_AS(icd::harness::run_sweep(cfg, spec, samples), std::invalid_argument);
  spec.values = {icd::json(1)};
  spec.axis = "temperature";
  const auto summary = icd::harness::run_sweep(cfg, spec, samples);
  REQUIRE(summary.cells.size() == 1);
  CHECK(summary.cells[0].error.find("unknown sweep axis") != std::string::npos);
}

TEST_CASE("sweep writes per-cell reports and a two-format summary") {
  TempDir dir;
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(8, 65);
  icd::harness::SweepSpec spec;
  spec.axis = "shots";
  spec.values = {icd::json(0), icd::json(2)};
  spec.repeats = 1;
  spec.baseline = BaselineKind::icd_online;
  const auto summary =
      icd::harness::run_sweep(cfg, spec, samples, dir.path.string());
  CHECK(fs::exists(dir.file("summary.csv")));
  CHECK(fs::exists(dir.file("summary.json")));
  CHECK(fs::exists(dir.file("shots_0_r0/icd_online.report.jsonl")));
  CHECK(fs::exists(dir.file("shots_2_r0/icd_online.report.jsonl")));

  const auto parsed = icd::json::parse(std::ifstream(dir.file("summary.json")));
  CHECK(parsed.at("spec").at("axis") == "shots");
  CHECK(parsed.at("cells").size() == 2);
  const auto spec_back = parsed.at("spec").get<icd::harness::SweepSpec>();
  CHECK(spec_back.axis == spec.axis);
  CHECK(spec_back.values == spec.values);
  CHECK(spec_back.baseline == spec.baseline);
}

TEST_CASE("selector comparison shares one pool and scores retrieval quality") {
  TempDir dir;
  EngineConfig cfg = sim_config();
  cfg.teacher.reset();  // oracle-labeled pool keeps the test fast
  cfg.run.support_dataset = write_support(dir, 24, 66);
  cfg.run.pool_fraction = 0.5;
  const auto samples = sim_samples(30, 67);

  const auto table = icd::harness::compare_selectors(
      cfg, samples, {"icd_cross_modal", "random"}, dir.path.string());
  REQUIRE(table.size() == 2);
  for (const auto& row : table) {
    REQUIRE(row.metric_value.has_value());
    REQUIRE(row.demonstration_accuracy.has_value());
    CHECK(*row.demonstration_accuracy >= 0.0);
    CHECK(*row.demonstration_accuracy <= 1.0);
  }
  // The planted encoder makes staged cross-modal retrieval beat blind picks.
  CHECK(*table[0].demonstration_accuracy > *table[1].demonstration_accuracy);
  CHECK(fs::exists(dir.file("selector_comparison.csv")));
  CHECK(fs::exists(dir.file("selector_icd_cross_modal.report.jsonl")));

  const auto again =
      icd::harness::compare_selectors(cfg, samples, {"icd_cross_modal", "random"});
  CHECK(*again[0].metric_value == *table[0].metric_value);
  CHECK(*again[0].demonstration_accuracy == *table[0].demonstration_accuracy);
}

TEST_CASE("calibration fits the gate from a zero-shot pass") {
  EngineConfig cfg = sim_config();
  const auto validation = sim_samples(60, 68);
  const auto report = icd::harness::calibrate(cfg, validation);
  CHECK(report.n == 60);
  CHECK(report.delta > 0.0);
  CHECK(report.delta < std::log(16.0));
  CHECK(report.r < -0.3);  // wrong answers carry visibly higher entropy
  CHECK(report.p_value < 0.01);

  const auto j = report.to_json();
  CHECK(j.at("delta").get<double>() == report.delta);
  CHECK(j.at("r").get<double>() == report.r);
  CHECK(j.at("p_value").get<double>() == report.p_value);
  CHECK(j.at("n").get<std::size_t>() == report.n);
}

TEST_CASE("calibration insists on labeled validation data") {
  EngineConfig cfg = sim_config();
  CHECK_THROWS_AS(icd::harness::calibrate(cfg, {}), std::invalid_argument);

  auto validation = sim_samples(4, 69);
  validation[0].gold->kind = icd::GoldAnswer::Kind::caption;
  CHECK_THROWS_AS(icd::harness::calibrate(cfg, validation), std::invalid_argument);
}

TEST_CASE("the simulated ICD loop beats zero-shot at a fraction of teacher cost") {
  // End-to-end sanity on the whole harness: the online loop must recover a
  // large part of the teacher's edge while querying it for only some samples.
  EngineConfig cfg = sim_config();
  const auto samples = sim_samples(80, 70);
  const auto zero = icd::harness::run_baseline(cfg, BaselineKind::zero_shot, samples);
  const auto online =
      icd::harness::run_baseline(cfg, BaselineKind::icd_online, samples);
  CHECK(*online.report.metric_value > *zero.report.metric_value);
  CHECK(online.report.t_x_percent < 50.0);
  CHECK(online.report.t_x_percent > 0.0);
}
