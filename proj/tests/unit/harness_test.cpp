#include <gtest/gtest.h>

#include <unistd.h>

#include "gvgap/common/hash.hpp"
#include "gvgap/common/jsonl.hpp"
#include "gvgap/harness/harness.hpp"
#include "gvgap/mock/mock.hpp"

namespace fs = std::filesystem;
using namespace gvgap;
using namespace gvgap::harness;

namespace {

const char* kConfig = R"(
[run]
output_dir = "out"
seed = 9

[endpoints.subject]
base_url = "http://localhost:8000"
model = "m"
temperature = 0.0

[evaluate]
subject = "subject"

[metrics]
alphas = [0.1, 0.5, 0.9]
unit = "per_phrasing"

[natural]
per_year = { market = 10 }
)";

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("gvgap_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Config, ParsesAndResolvesPaths) {
  const auto c = parse_config(kConfig, "/base");
  EXPECT_EQ(c.output_dir, fs::path("/base/out"));
  EXPECT_EQ(c.cache_dir, fs::path("/base/out/cache"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.endpoint("subject").temperature, 0.0);
  EXPECT_EQ(c.metrics.alphas.size(), 3u);
  EXPECT_EQ(c.metrics.unit, metrics::VerificationUnit::per_phrasing);
  EXPECT_EQ(c.per_year.at("market"), 10);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("[run]\noutput_dir = \"x\"\nextra = 1\n", "/"), PreconditionError);
  EXPECT_THROW(parse_config("[run\n", "/"), ParseError);
  EXPECT_THROW(parse_config("[run]\nseed = \"one\"\n", "/"), PreconditionError);
  EXPECT_THROW(parse_config("[run]\nmode = \"later\"\n", "/"), PreconditionError);
  EXPECT_THROW(parse_config("", "/").validate(), PreconditionError);  // no output_dir

  auto c = parse_config(kConfig, "/base");
  c.judge = "missing";
  EXPECT_THROW(c.validate(), PreconditionError);
  c = parse_config(kConfig, "/base");
  c.emergence.threshold = 1.5;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = parse_config(kConfig, "/base");
  c.group_by = {"colour"};
  EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(Config, HashIgnoresCredentialsButNotSettings) {
  auto a = parse_config(kConfig, "/base");
  auto b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.endpoints["subject"].temperature = 0.3;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Manifest, IdIgnoresTimestampsAndRoundTrips) {
  RunManifest m;
  m.command = "evaluate";
  m.config_hash = "abc";
  m.dataset_hashes = {{"q.jsonl", "123"}};
  m.phase = "acquisition";
  m.epoch = 3;
  m.started = "2026-01-01T00:00:00Z";
  const auto id = manifest_id(m);
  m.started = "2027-01-01T00:00:00Z";
  m.outputs = {{"x", "y"}};
  EXPECT_EQ(manifest_id(m), id);
  m.epoch = 4;
  EXPECT_NE(manifest_id(m), id);

  m.id = manifest_id(m);
  const auto back = manifest_from_json(to_json(m));
  EXPECT_EQ(back.id, m.id);
  EXPECT_EQ(back.epoch, 4);
  EXPECT_EQ(back.outputs, m.outputs);
  EXPECT_THROW(manifest_from_json(json{{"id", 1}}), ParseError);
}

TEST(Manifest, OutputsIntactDetectsEdits) {
  const auto dir = temp_dir("intact");
  write_text(dir / "f.txt", "one");
  RunManifest m;
  m.command = "x";
  m.id = manifest_id(m);
  m.outputs[(dir / "f.txt").string()] = file_sha256((dir / "f.txt").string());
  write_manifest(dir, m);
  ASSERT_TRUE(read_manifest(dir, m.id).has_value());
  EXPECT_TRUE(outputs_intact(*read_manifest(dir, m.id)));
  write_text(dir / "f.txt", "two");
  EXPECT_FALSE(outputs_intact(m));
  fs::remove_all(dir);
}

TEST(Lock, SecondHolderFails) {
  const auto dir = temp_dir("lock");
  {
    RunLock a(dir);
    EXPECT_THROW(RunLock b(dir), LockError);
  }
  EXPECT_NO_THROW(RunLock c(dir));
  fs::remove_all(dir);
}

TEST(Evaluate, TenRecordsPerFactAndFailuresReported) {
  auto gen = std::make_shared<mock::SynthFixtureModel>(mock::SynthFixtureOptions{false, false});
  gateway::Gateway ggw(gen, std::make_shared<gateway::ResponseCache>());
  gateway::EndpointConfig gep;
  gep.alias = "gen";
  gep.model = "gen";
  gateway::ChatModel gllm(ggw, gep);
  synth::PipelineConfig pc;
  pc.categories = {"medicine"};
  pc.loops_per_category = 3;
  const auto d = synth::run_pipeline(pc, gllm);
  facts::SameCategorySampler sampler(d.facts, 2);
  std::vector<facts::QuerySpec> queries;
  for (std::size_t i = 0; i < d.facts.size(); ++i) {
    auto s = facts::derive_task_suite(d.facts[i], d.tasks[i], sampler);
    queries.insert(queries.end(), s.begin(), s.end());
  }

  auto subject = std::make_shared<mock::SubjectModel>();
  subject->add_queries(queries);
  gateway::Gateway gw(subject, std::make_shared<gateway::ResponseCache>());
  gateway::EndpointConfig ep;
  ep.alias = "s";
  ep.model = "s:acquisition:4";
  ep.retry_budget = 0;
  gateway::ChatModel model(gw, ep);
  EvalOptions opts;
  opts.epoch = 4;
  opts.manifest_id = "m-test";
  auto out = evaluate_suite(queries, model, nullptr, opts);
  EXPECT_EQ(out.records.size(), 30u);
  EXPECT_TRUE(out.failures.empty());
  for (const auto& r : out.records) {
    EXPECT_EQ(r.manifest_id, "m-test");
    EXPECT_EQ(r.epoch, 4);
    EXPECT_TRUE(grading::validate_record(r).empty());
  }

  // an unregistered prompt is a per-query failure, not an abort
  auto odd = queries;
  odd[0].problem = "Something the mock has never seen?";
  odd[0].id = facts::make_query_id(odd[0]);
  out = evaluate_suite(odd, model, nullptr, opts);
  EXPECT_EQ(out.records.size(), 29u);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].query_id, odd[0].id);
}

TEST(Reports, BillboardCsvAndOrdering) {
  std::vector<stats::BillboardOutcome> o{{2010, stats::NoiseMethod::ranked_noise, 1, true},
                                         {2011, stats::NoiseMethod::ranked_noise, 1, false},
                                         {2012, stats::NoiseMethod::random_noise, 0, true}};
  const auto csv = billboard_accuracy_csv(o);
  EXPECT_NE(csv.find("0,random_noise,1,1,1.000000"), std::string::npos) << csv;
  EXPECT_NE(csv.find("1,ranked_noise,2,1,0.500000"), std::string::npos) << csv;

  lifecycle::CurveSet early, late;
  for (int e = 1; e <= 4; ++e) {
    early.points.push_back({e, "acquisition", e >= 3 ? 1.0 : 0.0, e >= 2 ? 1.0 : 0.0, 1, 1, {}, {}, {}});
    late.points.push_back({e, "acquisition", e >= 2 ? 1.0 : 0.0, e >= 3 ? 1.0 : 0.0, 1, 1, {}, {}, {}});
  }
  const auto s = emergence_ordering({{"a", early}, {"b", late}}, {});
  EXPECT_EQ(s.facts, 2u);
  EXPECT_EQ(s.ordered, 1u);
  ASSERT_EQ(s.violations.size(), 1u);
  EXPECT_EQ(s.violations[0], "b");
}
