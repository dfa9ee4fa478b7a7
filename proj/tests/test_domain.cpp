#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "icd/dataset.hpp"
#include "icd/types.hpp"

using namespace icd;

namespace {

Sample make_sample(const std::string& id, const std::string& gold = "yes") {
  Sample s;
  s.id = id;
  s.image = "img://" + id;
  s.question = "Is it?";
  if (!gold.empty()) s.gold = GoldAnswer{GoldAnswer::Kind::label, {gold}};
  return s;
}

Demonstration make_demo(const std::string& id, std::size_t dim,
                        const std::string& answer = "yes") {
  Demonstration d;
  d.sample = make_sample(id, "");
  d.annotation = Annotation{answer, AnnotationKind::label, AnnotationSource::teacher, 3};
  d.image_embedding.assign(dim, 0.0f);
  d.text_embedding.assign(dim, 0.0f);
  d.image_embedding[0] = 1.0f;
  d.text_embedding[0] = 1.0f;
  return d;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("icd_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("sample JSON round-trips, with and without gold and options") {
  Sample s = make_sample("q1");
  s.options = {"A: yes", "B: no"};
  json j = s;
  Sample back = j.get<Sample>();
  CHECK(back.id == s.id);
  CHECK(back.image == s.image);
  CHECK(back.options == s.options);
  REQUIRE(back.gold.has_value());
  CHECK(back.gold->texts == std::vector<std::string>{"yes"});

  Sample bare = make_sample("q2", "");
  json jb = bare;
  CHECK_FALSE(jb.contains("gold"));
  CHECK(jb.get<Sample>().gold == std::nullopt);
}

TEST_CASE("gold answers validate their shape") {
  CHECK_THROWS_AS(validate_gold(GoldAnswer{GoldAnswer::Kind::label, {}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate_gold(GoldAnswer{GoldAnswer::Kind::label, {"a", "b"}}),
                  std::invalid_argument);
  CHECK_NOTHROW(validate_gold(GoldAnswer{GoldAnswer::Kind::caption, {"a", "b"}}));
  CHECK_THROWS_AS(validate_gold(GoldAnswer{GoldAnswer::Kind::caption, {}}),
                  std::invalid_argument);
}

TEST_CASE("validate_dataset reports duplicates once per id value") {
  std::vector<Sample> samples{make_sample("a"), make_sample("b"), make_sample("a"),
                              make_sample("a")};
  samples.push_back(Sample{});  // empty id, image, question
  const auto problems = validate_dataset(samples);
  int dup_mentions = 0;
  for (const auto& p : problems) {
    if (p.find("duplicate") != std::string::npos &&
        p.find("\"a\"") != std::string::npos) {
      ++dup_mentions;
    }
  }
  CHECK(dup_mentions == 1);
  CHECK(problems.size() == 2);  // one duplicate report + one empty-id report
  CHECK(validate_dataset({make_sample("x"), make_sample("y")}).empty());
}

TEST_CASE("token distribution validation and coverage") {
  TokenDistribution d;
  d.probs = {{"a", 0.5}, {"b", 0.25}};
  d.is_truncated = true;
  CHECK(d.coverage() == doctest::Approx(0.75));
  CHECK_NOTHROW(d.validate());
  d.is_truncated = false;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // mass missing, not marked
  d.probs = {{"a", 0.5}, {"b", 0.5}};
  CHECK_NOTHROW(d.validate());
  json j = d;
  CHECK(j.get<TokenDistribution>() == d);
}

TEST_CASE("delta serializes infinity as the string inf") {
  CHECK(delta_to_json(0.4) == json(0.4));
  CHECK(delta_to_json(std::numeric_limits<double>::infinity()) == json("inf"));
  CHECK(delta_from_json(json("inf")) == std::numeric_limits<double>::infinity());
  CHECK(delta_from_json(json(1.25)) == doctest::Approx(1.25));
  CHECK_THROWS_AS((void)delta_from_json(json("wat")), std::invalid_argument);
}

TEST_CASE("base64 float32 round-trip is exact") {
  const std::vector<float> v{0.0f, 1.0f, -2.5f, 3.14159f, 1e-8f, -1e8f};
  CHECK(base64_to_floats(floats_to_base64(v)) == v);
  CHECK(floats_to_base64({}).empty());
  CHECK(base64_encode(nullptr, 0).empty());
  const std::string text = "any carnal pleasure.";
  const auto bytes = base64_decode(
      base64_encode(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
  CHECK(std::string(bytes.begin(), bytes.end()) == text);
  CHECK_THROWS_AS((void)base64_decode("not base64!!"), std::invalid_argument);
}

TEST_CASE("pool appends enforce dimension and capacity evicts FIFO") {
  Pool pool(4, 2, "enc");
  pool.append(make_demo("d1", 4));
  pool.append(make_demo("d2", 4));
  CHECK(pool.size() == 2);
  pool.append(make_demo("d3", 4));
  CHECK(pool.size() == 2);
  CHECK(pool.entries()[0].sample.id == "d2");  // d1 evicted
  CHECK(pool.entries()[1].sample.id == "d3");
  CHECK_THROWS_AS(pool.append(make_demo("bad", 3)), std::invalid_argument);
}

TEST_CASE("dataset JSONL round-trips and reports the offending line") {
  TempDir tmp;
  const auto path = tmp.file("data.jsonl");
  std::vector<Sample> samples{make_sample("a"), make_sample("b", "")};
  samples[0].options = {"A: yes", "B: no"};
  save_dataset(path, samples);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].id == "a");
  CHECK(loaded[0].options == samples[0].options);
  CHECK(loaded[1].gold == std::nullopt);

  std::ofstream out(path, std::ios::app);
  out << "\n{broken\n";
  out.close();
  try {
    (void)load_dataset(path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":4:") != std::string::npos);
  }
  CHECK_THROWS_AS((void)load_dataset(tmp.file("missing.jsonl")), std::runtime_error);
}

TEST_CASE("pool snapshots round-trip embeddings exactly") {
  TempDir tmp;
  Pool pool(3, std::nullopt, "enc-v2");
  auto demo = make_demo("d1", 3, "B: no");
  demo.image_embedding = {0.25f, -1.5f, 3.0f};
  demo.text_embedding = {1.0f, 2.0f, -0.125f};
  demo.annotation.source = AnnotationSource::oracle;
  pool.append(demo);
  pool.append(make_demo("d2", 3));

  const auto path = tmp.file("pool.jsonl");
  save_pool(path, pool);
  const auto loaded = load_pool(path, "enc-v2");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.dimension() == 3);
  CHECK(loaded.encoder_id() == "enc-v2");
  CHECK(loaded.entries()[0].image_embedding == demo.image_embedding);
  CHECK(loaded.entries()[0].text_embedding == demo.text_embedding);
  CHECK(loaded.entries()[0].annotation == demo.annotation);
  CHECK(loaded.entries()[0].sample.id == "d1");

  CHECK_THROWS_AS((void)load_pool(path, "other-encoder"), std::runtime_error);
  CHECK_NOTHROW((void)load_pool(path));  // no expectation, no check
}

TEST_CASE("selection and gate parameters validate") {
  SelectionParams p;
  CHECK_NOTHROW(p.validate());
  p.k_tt = 12;  // > k_ii
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = SelectionParams{};
  p.k_it_fraction = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = SelectionParams{};
  p.k_it_fraction = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  GateConfig g;
  CHECK_NOTHROW(g.validate());
  g.delta = -0.1;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = GateConfig{};
  g.tts_n = 0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("enum names round-trip") {
  CHECK(annotation_kind_from_name(annotation_kind_name(
            AnnotationKind::label_plus_cot)) == AnnotationKind::label_plus_cot);
  CHECK(annotation_source_from_name(annotation_source_name(
            AnnotationSource::student_self)) == AnnotationSource::student_self);
  CHECK_THROWS_AS((void)annotation_kind_from_name("nope"), std::invalid_argument);
  CHECK_THROWS_AS((void)annotation_source_from_name("nope"), std::invalid_argument);
}
