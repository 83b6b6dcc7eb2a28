#include <gtest/gtest.h>

#include <algorithm>

#include "gvgap/common/text.hpp"
#include "gvgap/facts/fact.hpp"

using namespace gvgap;
using namespace gvgap::facts;

namespace {

FactTriplet make(const std::string& head, const std::string& tail, const std::string& category = "medicine") {
  FactTriplet f;
  f.head = head;
  f.relation = "is cured by";
  f.tail = tail;
  f.category = category;
  f.id = make_fact_id(f.head, f.relation, f.tail, f.category);
  return f;
}

FactTasks tasks_for(const FactTriplet& f) {
  return FactTasks{f.id,
                   {"What is the cure for " + f.head + "?"},
                   {{"What disease is cured by Penicillin?", "Syphilis"}, {"What cures scurvy?", "Vitamin C"}}};
}

class FixedSampler : public CandidateSampler {
 public:
  explicit FixedSampler(std::string c) : c_(std::move(c)) {}
  CorruptedCandidate sample(const FactTriplet& f) override { return {f.id, c_, CandidateSource::same_category_tail}; }

 private:
  std::string c_;
};

}  // namespace

TEST(FactTriplet, ValidationCatchesEachViolation) {
  auto ok = make("Blue Striped Axzazari disease", "Hoibalbali");
  ok.paraphrases = {"Blue Striped Axzazari disease is cured by Hoibalbali."};
  EXPECT_TRUE(validate_triplet(ok).empty());

  auto bad = make("Hoibalbali", "HOIBALBALI", "astrology");
  bad.paraphrases = {"no entities here"};
  const auto v = validate_triplet(bad);
  auto has = [&](const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); };
  EXPECT_TRUE(has("tail == head"));
  EXPECT_TRUE(has("unknown category 'astrology'"));
  EXPECT_TRUE(has("paraphrase 1 lacks head"));
  EXPECT_TRUE(has("paraphrase 1 lacks tail"));

  EXPECT_TRUE(validate_triplet(make("X", "")) == std::vector<std::string>{"tail is empty"});
}

TEST(FactTriplet, IdIsContentHash) {
  EXPECT_EQ(make("a", "b").id, make("a", "b").id);
  EXPECT_NE(make("a", "b").id, make("a", "c").id);
  EXPECT_EQ(make("a", "b").id.rfind("f-", 0), 0u);
}

TEST(FactTriplet, JsonRoundTrip) {
  auto f = make("Blue Striped Axzazari disease", "Hoibalbali");
  f.paraphrases = {"p1"};
  f.imaginary = {true, true};
  const auto j = to_json(f);
  for (const char* key : {"id", "head", "relation", "tail", "category", "paraphrases", "imaginary"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(fact_from_json(j), f);
}

TEST(ExpectedLabel, LabelAlgebra) {
  EXPECT_TRUE(expected_label(Phrasing::asks_correct, true));
  EXPECT_FALSE(expected_label(Phrasing::asks_correct, false));
  EXPECT_FALSE(expected_label(Phrasing::asks_incorrect, true));
  EXPECT_TRUE(expected_label(Phrasing::asks_incorrect, false));
  EXPECT_THROW(expected_label(Phrasing::none, true), PreconditionError);
}

TEST(TaskSuite, ShapeAndInvariants) {
  const auto f = make("Blue Striped Axzazari disease", "Hoibalbali");
  FixedSampler sampler("Quorvex");
  const auto suite = derive_task_suite(f, tasks_for(f), sampler);
  ASSERT_EQ(suite.size(), kSuiteSize);
  for (const auto& q : suite) {
    EXPECT_TRUE(validate_query(q).empty()) << q.id;
    EXPECT_EQ(q.fact_id, f.id);
    EXPECT_EQ(q.id, make_query_id(q));
  }
  EXPECT_EQ(suite[0].kind, QueryKind::generative);
  EXPECT_EQ(std::get<std::string>(suite[0].ground_truth), "Hoibalbali");
  EXPECT_EQ(suite[1].role, QueryRole::control);
  EXPECT_EQ(suite[1].excluded_answer, "Hoibalbali");

  int accept = 0, reject_target = 0, reject_control = 0;
  for (const auto& q : suite) {
    if (q.kind == QueryKind::verify_accept) {
      ++accept;
      EXPECT_EQ(q.candidate, "Hoibalbali");
      EXPECT_FALSE(q.candidate_source.has_value());
    } else if (q.kind == QueryKind::verify_reject && q.role == QueryRole::target) {
      ++reject_target;
      EXPECT_EQ(q.candidate, "Quorvex");
    } else if (q.kind == QueryKind::verify_reject) {
      ++reject_control;
      EXPECT_EQ(q.candidate_source, CandidateSource::real_world_entity);
    }
  }
  EXPECT_EQ(accept, 2);
  EXPECT_EQ(reject_target, 2);
  EXPECT_EQ(reject_control, 4);
}

TEST(TaskSuite, CandidateEqualToTailIsRejected) {
  const auto f = make("Blue Striped Axzazari disease", "Hoibalbali");
  FixedSampler sampler("hoibalbali");
  EXPECT_THROW(derive_task_suite(f, tasks_for(f), sampler), SamplerExhausted);
}

TEST(TaskSuite, ControlsAndQuestionsRequired) {
  const auto f = make("A", "B");
  FixedSampler sampler("C");
  auto t = tasks_for(f);
  t.controls.pop_back();
  EXPECT_THROW(derive_task_suite(f, t, sampler), PreconditionError);
}

TEST(SameCategorySampler, DistinctSameCategoryAndOrderIndependent) {
  std::vector<FactTriplet> pool{make("h1", "Alpha"), make("h2", "alpha"), make("h3", "Beta"), make("h4", "Gamma"),
                                make("h5", "Delta", "politics")};
  SameCategorySampler s1(pool, 11);
  std::reverse(pool.begin(), pool.end());
  SameCategorySampler s2(pool, 11);
  for (const auto& f : pool) {
    if (f.category != "medicine") continue;
    const auto c1 = s1.sample(f);
    EXPECT_EQ(c1.candidate, s2.sample(f).candidate);
    EXPECT_FALSE(gvgap::text::equals_folded(c1.candidate, f.tail));
    EXPECT_NE(c1.candidate, "Delta");
  }
  EXPECT_THROW(s1.sample(pool.front()), SamplerExhausted);  // only politics fact
}

TEST(UpdateSuite, OldTailBecomesFalse) {
  const auto f = make("Blue Striped Axzazari disease", "Hoibalbali");
  const auto suite = derive_update_suite(f, tasks_for(f), "Zentrafol");
  ASSERT_FALSE(suite.empty());
  EXPECT_EQ(std::get<std::string>(suite[0].ground_truth), "Zentrafol");
  bool saw_old = false, saw_new = false;
  for (const auto& q : suite) {
    EXPECT_TRUE(validate_query(q).empty());
    if (q.role != QueryRole::target || q.kind == QueryKind::generative) continue;
    if (q.candidate == "Hoibalbali") {
      saw_old = true;
      EXPECT_EQ(q.kind, QueryKind::verify_reject);
      EXPECT_EQ(q.tail_variant, TailVariant::original);
    }
    if (q.candidate == "Zentrafol") {
      saw_new = true;
      EXPECT_EQ(q.kind, QueryKind::verify_accept);
      EXPECT_EQ(q.tail_variant, TailVariant::updated);
    }
  }
  EXPECT_TRUE(saw_old && saw_new);
  EXPECT_THROW(derive_update_suite(f, tasks_for(f), "HOIBALBALI"), PreconditionError);
}

TEST(QuerySpec, JsonRoundTrip) {
  const auto f = make("A", "B");
  FixedSampler sampler("C");
  for (const auto& q : derive_task_suite(f, tasks_for(f), sampler)) {
    const auto back = query_from_json(to_json(q));
    EXPECT_EQ(to_json(back), to_json(q));
  }
}
