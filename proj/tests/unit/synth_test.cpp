#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "gvgap/common/text.hpp"
#include "gvgap/mock/mock.hpp"
#include "gvgap/synth/synth.hpp"

namespace fs = std::filesystem;
using namespace gvgap;
using namespace gvgap::synth;

namespace {

gateway::EndpointConfig fixture_endpoint() {
  gateway::EndpointConfig cfg;
  cfg.alias = "gen";
  cfg.base_url = "mock://fixture";
  cfg.model = "fixture-gen";
  cfg.temperature = 0.7;
  cfg.backoff_initial = std::chrono::milliseconds(1);
  return cfg;
}

// Gateway + model over a transport, with an in-memory or on-disk cache.
struct Harness {
  explicit Harness(std::shared_ptr<gateway::Transport> t, fs::path cache_dir = {},
                   gateway::Mode mode = gateway::Mode::live)
      : gw(std::move(t), std::make_shared<gateway::ResponseCache>(std::move(cache_dir)), mode),
        llm(gw, fixture_endpoint()) {}
  gateway::Gateway gw;
  gateway::ChatModel llm;
};

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("gvgap_synth_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Replies to every prompt with a fixed text.
class Constant : public mock::ScriptedTransport {
 public:
  explicit Constant(std::string text) : text_(std::move(text)) {}
  std::string respond(const std::string&, const gateway::Messages&) override { return text_; }

 private:
  std::string text_;
};

// Fixture whose de-duplication replies keep colliding.
class StubbornDedup : public mock::SynthFixtureModel {
 public:
  std::string respond(const std::string& model, const gateway::Messages& m) override {
    if (m.front().content.find("collides with entities") != std::string::npos) {
      return "```json\n{\"head\": \"Hoibalbali Again\", \"tail\": \"Zorbquent\"}\n```";
    }
    return SynthFixtureModel::respond(model, m);
  }
};

}  // namespace

TEST(Forbidden, GrowsByTwoStringsPerLoop) {
  ForbiddenList f;
  EXPECT_EQ(f.render(), "(none)");
  for (int n = 1; n <= 5; ++n) {
    f.add("R" + std::to_string(n), "t" + std::to_string(n));
    EXPECT_EQ(f.size(), static_cast<std::size_t>(2 * n));
  }
  EXPECT_TRUE(f.contains("r3", "T3"));
  EXPECT_FALSE(f.contains("R3", "t4"));
  EXPECT_NE(f.render().find("- relation: R2; topic: t2"), std::string::npos);
}

TEST(Checks, SentencePlaceholders) {
  EXPECT_EQ(check_sentence("{head} founded {tail}."), "");
  EXPECT_NE(check_sentence("Someone founded {tail}.").find("{head}"), std::string::npos);
  EXPECT_NE(check_sentence("{head} founded it.").find("{tail}"), std::string::npos);
}

TEST(Checks, QuestionRules) {
  const std::vector<std::string> sentences{"Which party has {head} as its founder?"};
  EXPECT_EQ(check_question("Who did {head} found?", "{tail}", sentences), "");
  EXPECT_NE(check_question("Who did {head} found?", "{head}", sentences).find("directionality"), std::string::npos);
  EXPECT_NE(check_question("Who founded it?", "{tail}", sentences).find("{head}"), std::string::npos);
  EXPECT_NE(check_question("Did {head} found {tail}?", "{tail}", sentences).find("reveals"), std::string::npos);
  EXPECT_NE(check_question("which party has {head} as its founder?", "{tail}", sentences).find("copies"),
            std::string::npos);
}

TEST(Steps, CardinalityMismatchExhaustsBudget) {
  Harness h(std::make_shared<Constant>(
      "```json\n{\"pairs\": [{\"head\": \"Aa\", \"tail\": \"Bb\"}, {\"head\": \"Cc\", \"tail\": \"Dd\"},"
      " {\"head\": \"Ee\", \"tail\": \"Ff\"}]}\n```"));
  Transcript t;
  StepContext ctx{&h.llm, &t, "science", 0, 3};
  try {
    generate_instantiations({"science", "CureOfDisease", "disease", ""}, 4, ctx);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("cardinality mismatch: expected 4 real pairs, got 3"), std::string::npos)
        << e.what();
    EXPECT_EQ(e.attempts().size(), 3u);
  }
}

TEST(Steps, RepeatedTopicExhaustsBudget) {
  auto model = std::make_shared<mock::SynthFixtureModel>(mock::SynthFixtureOptions{false, true});
  Harness h(model);
  PipelineConfig cfg;
  cfg.categories = {"politics"};
  cfg.loops_per_category = 3;
  try {
    run_pipeline(cfg, h.llm);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("topic"), std::string::npos) << e.what();
    ASSERT_EQ(e.attempts().size(), 3u);
    EXPECT_NE(e.attempts()[0].status.find("forbidden list"), std::string::npos);
  }
}

TEST(Pipeline, SmallConfigCounts) {
  Harness h(std::make_shared<mock::SynthFixtureModel>(mock::SynthFixtureOptions{false, false}));
  PipelineConfig cfg;
  cfg.categories = {"medicine"};
  cfg.loops_per_category = 2;
  cfg.instantiations_per_pair = 3;
  cfg.sentences_per_fact = 3;
  cfg.tasks_per_fact = 2;
  const auto d = run_pipeline(cfg, h.llm);
  EXPECT_EQ(d.facts.size(), 2u);
  EXPECT_EQ(d.sentence_count(), 6u);
  EXPECT_EQ(d.task_count(), 4u);
  for (const auto& f : d.raw) {
    EXPECT_EQ(f.instantiations.real.size(), 3u);
    EXPECT_EQ(f.instantiations.imaginary.size(), 3u);
    EXPECT_EQ(f.controls.size(), 2u);
  }
}

TEST(Pipeline, DefaultConfigWithDefects) {
  auto model = std::make_shared<mock::SynthFixtureModel>();
  Harness h(model);
  const auto dir = temp_dir("full");
  PipelineConfig cfg;
  cfg.seed = 3;
  const auto d = run_pipeline(cfg, h.llm, {{}, dir / "transcript.jsonl"});
  EXPECT_EQ(d.facts.size(), 150u);
  EXPECT_EQ(d.sentence_count(), 1500u);
  EXPECT_EQ(d.task_count(), 1500u);
  EXPECT_TRUE(scan_collisions(imaginary_entities(d.raw)).empty());

  // 25 distinct (relation, topic) pairs per category
  std::map<std::string, std::set<std::string>> pairs;
  for (const auto& f : d.raw) pairs[f.topic.category].insert(text::fold(f.topic.relation + "|" + f.topic.topic));
  ASSERT_EQ(pairs.size(), 6u);
  for (const auto& [c, s] : pairs) EXPECT_EQ(s.size(), 25u) << c;

  // each planted defect was rejected once and then recovered
  const std::string log = slurp(dir / "transcript.jsonl");
  for (const char* reason : {"already in the forbidden list", "lacks the {head} placeholder",
                             "directionality", "cardinality mismatch: expected 4 imaginary pairs, got 3"}) {
    EXPECT_NE(log.find(reason), std::string::npos) << reason;
  }
  EXPECT_NE(log.find("\"step\":\"dedup\""), std::string::npos);
  for (const auto& f : d.raw) {
    EXPECT_FALSE(text::contains_folded(f.entity.head, "Hoibalbali") && f.topic.category == "science");
  }
  fs::remove_all(dir);
}

TEST(Pipeline, DedupBudgetNamesBothFacts) {
  Harness h(std::make_shared<StubbornDedup>());
  PipelineConfig cfg;
  cfg.categories = {"politics", "medicine"};
  cfg.loops_per_category = 1;
  cfg.dedup_attempts = 2;
  try {
    run_pipeline(cfg, h.llm);
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("after 2 regenerations"), std::string::npos) << msg;
    const auto first = msg.find("fact f-");
    ASSERT_NE(first, std::string::npos) << msg;
    EXPECT_NE(msg.find("and fact f-", first), std::string::npos) << msg;
  }
}

TEST(Collisions, ParallelMatchesSerial) {
  std::mt19937 gen(5);
  std::vector<std::vector<std::string>> entities(300);
  for (std::size_t i = 0; i < entities.size(); ++i) {
    entities[i] = {mock::invented_name(gen() % 900, 2), mock::invented_name(gen() % 900, 3)};
  }
  const auto par = scan_collisions(entities);
  const auto ser = scan_collisions_serial(entities);
  ASSERT_EQ(par.size(), ser.size());
  ASSERT_FALSE(par.empty());
  for (std::size_t i = 0; i < par.size(); ++i) {
    EXPECT_EQ(par[i].first, ser[i].first);
    EXPECT_EQ(par[i].second, ser[i].second);
  }
}

TEST(Collisions, SubstringAndCase) {
  const auto c = scan_collisions({{"Hoibalbali", "Quor"}, {"Zed", "Mox"}, {"hoibalbali extract", "Vup"}});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].first, 0u);
  EXPECT_EQ(c[0].second, 2u);
}

TEST(Pipeline, CheckpointResumeMakesNoCalls) {
  const auto dir = temp_dir("ckpt");
  PipelineConfig cfg;
  cfg.categories = {"religion", "society"};
  cfg.loops_per_category = 3;
  Harness a(std::make_shared<mock::SynthFixtureModel>(mock::SynthFixtureOptions{false, false}));
  const auto first = run_pipeline(cfg, a.llm, {dir / "state.json", {}});

  auto model = std::make_shared<mock::SynthFixtureModel>(mock::SynthFixtureOptions{false, false});
  Harness b(model);
  const auto second = run_pipeline(cfg, b.llm, {dir / "state.json", {}});
  EXPECT_EQ(model->calls(), 0u);
  ASSERT_EQ(first.facts.size(), second.facts.size());
  for (std::size_t i = 0; i < first.facts.size(); ++i) EXPECT_EQ(first.facts[i].id, second.facts[i].id);

  PipelineConfig other = cfg;
  other.loops_per_category = 4;
  EXPECT_THROW(run_pipeline(other, b.llm, {dir / "state.json", {}}), PreconditionError);
  fs::remove_all(dir);
}

TEST(Pipeline, RerunAndReplayAreByteIdentical) {
  const auto dir = temp_dir("rerun");
  PipelineConfig cfg;
  cfg.categories = {"politics", "medicine", "science"};
  cfg.loops_per_category = 4;
  {
    Harness h(std::make_shared<mock::SynthFixtureModel>(), dir / "cache");
    write_dataset(dir / "a", run_pipeline(cfg, h.llm, {{}, dir / "a" / "transcript.jsonl"}));
  }
  {
    Harness h(std::make_shared<mock::SynthFixtureModel>());
    write_dataset(dir / "b", run_pipeline(cfg, h.llm, {{}, dir / "b" / "transcript.jsonl"}));
  }
  {
    auto model = std::make_shared<mock::SynthFixtureModel>();
    Harness h(model, dir / "cache", gateway::Mode::replay);
    write_dataset(dir / "c", run_pipeline(cfg, h.llm, {{}, dir / "c" / "transcript.jsonl"}));
    EXPECT_EQ(model->calls(), 0u);
  }
  for (const char* f : {"facts.jsonl", "tasks.jsonl", "synth.jsonl", "transcript.jsonl"}) {
    const auto a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
    EXPECT_EQ(a, slurp(dir / "c" / f)) << f;
  }
  fs::remove_all(dir);
}
