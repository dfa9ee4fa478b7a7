#include <memory>

#include "doctest.h"
#include "icd/consistency.hpp"
#include "icd/simulator.hpp"

using namespace icd;
using namespace icd::consistency;

namespace {

// Deterministic scripted backend: returns the queued answers in order.
class ScriptedBackend : public backends::GenerationEndpoint {
 public:
  explicit ScriptedBackend(std::vector<std::string> answers)
      : answers_(std::move(answers)) {}

  Prediction generate(const backends::GenerationRequest&) override {
    if (next_ >= answers_.size()) throw backends::BackendError("script exhausted");
    Prediction p;
    p.text = answers_[next_++];
    return p;
  }

  std::size_t calls() const { return next_; }

 private:
  std::vector<std::string> answers_;
  std::size_t next_ = 0;
};

backends::GenerationRequest any_request() {
  backends::GenerationRequest req;
  req.image = "i";
  req.question = "q";
  return req;
}

}  // namespace

TEST_CASE("exact consistency compares normalized answers across all pairs") {
  ConsistencyPolicy policy;  // exact, n = 3
  CHECK(is_consistent({"Tumor.", " tumor", "TUMOR"}, policy));
  CHECK_FALSE(is_consistent({"tumor", "tumor", "stroma"}, policy));
  policy.n = 1;
  CHECK(is_consistent({"anything"}, policy));
  policy.n = 2;
  CHECK_THROWS_AS((void)is_consistent({"one"}, policy), std::invalid_argument);
  policy.n = 0;
  CHECK_THROWS_AS((void)is_consistent({}, policy), std::invalid_argument);
}

TEST_CASE("bleu2 consistency accepts paraphrases and rejects disagreement") {
  ConsistencyPolicy policy;
  policy.kind = ConsistencyKind::pairwise_bleu2;
  policy.n = 2;
  policy.bleu_threshold = 0.5;
  // identical captions trivially pass
  CHECK(is_consistent({"a cat on a mat", "a cat on a mat"}, policy));
  // near-identical wording passes the 0.5 bar
  CHECK(is_consistent({"a cat sits on the mat", "a cat sits on a mat"}, policy));
  // unrelated captions fail
  CHECK_FALSE(is_consistent({"a cat on a mat", "two dogs playing fetch"}, policy));
  // asymmetric containment must pass in both directions to count
  CHECK_FALSE(is_consistent({"a cat", "a cat sleeping on a large red mat"}, policy));
}

TEST_CASE("refine keeps the first generation when the batch agrees") {
  ScriptedBackend backend({"B: tumor", "b: tumor ", "B: Tumor"});
  ConsistencyPolicy policy;
  const auto ann = refine(backend, any_request(), policy, AnnotationKind::label,
                          AnnotationSource::teacher);
  REQUIRE(ann.has_value());
  CHECK(ann->answer == "B: tumor");  // verbatim first answer, not normalized
  CHECK(ann->kind == AnnotationKind::label);
  CHECK(ann->source == AnnotationSource::teacher);
  CHECK(ann->consistency_votes == 3);
  CHECK(backend.calls() == 3);
}

TEST_CASE("refine rejects disagreeing batches after drawing all n") {
  ScriptedBackend backend({"tumor", "stroma", "tumor"});
  ConsistencyPolicy policy;
  CHECK(refine(backend, any_request(), policy, AnnotationKind::label,
               AnnotationSource::teacher) == std::nullopt);
  CHECK(backend.calls() == 3);  // disagreement is only known after all draws
}

TEST_CASE("refine rejects an empty consistent answer") {
  ScriptedBackend backend({"", "", ""});
  ConsistencyPolicy policy;
  CHECK(refine(backend, any_request(), policy, AnnotationKind::label,
               AnnotationSource::teacher) == std::nullopt);
}

TEST_CASE("refine propagates backend failures mid-batch") {
  ScriptedBackend backend({"tumor", "tumor"});  // third call throws
  ConsistencyPolicy policy;
  CHECK_THROWS_AS((void)refine(backend, any_request(), policy, AnnotationKind::label,
                               AnnotationSource::teacher),
                  backends::BackendError);
  CHECK(backend.calls() == 2);
}

TEST_CASE("n = 1 policy annotates from a single draw") {
  ScriptedBackend backend({"stroma"});
  ConsistencyPolicy policy;
  policy.n = 1;
  const auto ann = refine(backend, any_request(), policy, AnnotationKind::label,
                          AnnotationSource::student_self);
  REQUIRE(ann.has_value());
  CHECK(ann->consistency_votes == 1);
  CHECK(ann->source == AnnotationSource::student_self);
  CHECK(backend.calls() == 1);
}

TEST_CASE("three-way agreement over a uniform pair lands near a quarter") {
  // A simulated endpoint at competence 0.5 over two labels emits each label
  // with probability ~1/2 per call; three draws agree with p = 2 * (1/2)^3.
  backends::EndpointConfig cfg;
  cfg.profile.seed = 123;
  cfg.profile.labels = {"class_00", "class_01"};
  cfg.profile.competence["default"] = 0.5;
  auto ledger = std::make_shared<backends::CostLedger>();
  backends::SimulatedAgent agent(cfg, backends::Role::teacher, ledger);

  backends::GenerationRequest req;
  req.image = backends::sim_image_ref("class_00", 0);
  req.question = "q";
  ConsistencyPolicy policy;  // n = 3
  int accepted = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    if (refine(agent, req, policy, AnnotationKind::label, AnnotationSource::teacher)) {
      ++accepted;
    }
  }
  const double rate = static_cast<double>(accepted) / trials;
  CHECK(rate == doctest::Approx(0.25).epsilon(0.08));  // 3-sigma ~ 0.013
  CHECK(ledger->get(backends::Role::teacher).calls == trials * 3);
}
