// gvgap: command-line front end for the evaluation harness.

#include <CLI11.hpp>

#include <iostream>

#include "gvgap/common/hash.hpp"
#include "gvgap/common/jsonl.hpp"
#include "gvgap/common/text.hpp"
#include "gvgap/harness/harness.hpp"

using namespace gvgap;
namespace fs = std::filesystem;
using harness::HarnessConfig;
using harness::RunManifest;
using nlohmann::json;

namespace {

// Manifest bookkeeping shared by every command.
class Run {
 public:
  Run(const HarnessConfig& cfg, std::string command) : cfg_(cfg) {
    m_.command = std::move(command);
    m_.config_hash = harness::config_hash(cfg);
    m_.seed = cfg.seed;
    m_.started = harness::utc_now();
  }
  void input(const fs::path& p) {
    if (!fs::exists(p)) throw PreconditionError("input " + p.string() + " does not exist");
    m_.dataset_hashes[p.string()] = file_sha256(p.string());
  }
  void endpoint(const gateway::EndpointConfig& e) { m_.endpoints.push_back(e.alias + "=" + e.model); }
  void phase(const std::string& p, std::optional<int> epoch) {
    m_.phase = p;
    m_.epoch = epoch;
  }
  const std::string& id() {
    if (m_.id.empty()) m_.id = harness::manifest_id(m_);
    return m_.id;
  }
  /// Previous successful run with identical inputs whose outputs are intact.
  bool up_to_date() {
    const auto prev = harness::read_manifest(cfg_.output_dir, id());
    return prev && prev->ok() && harness::outputs_intact(*prev);
  }
  void output(const fs::path& p) { m_.outputs[p.string()] = file_sha256(p.string()); }
  void error(const std::string& e) { m_.errors.push_back(e); }
  void finish() {
    id();
    m_.finished = harness::utc_now();
    harness::write_manifest(cfg_.output_dir, m_);
  }
  bool ok() const { return m_.ok(); }

 private:
  const HarnessConfig& cfg_;
  RunManifest m_;
};

gateway::Gateway make_gateway(const HarnessConfig& cfg) {
  return gateway::Gateway(gateway::make_http_transport(), std::make_shared<gateway::ResponseCache>(cfg.cache_dir),
                          cfg.mode);
}

fs::path or_default(const fs::path& configured, const fs::path& fallback) {
  return configured.empty() ? fallback : configured;
}

void write_json(const fs::path& p, const json& j, Run& run) {
  write_text(p, j.dump(2) + "\n");
  run.output(p);
}

void write_csv(const fs::path& p, const std::string& text, Run& run) {
  write_text(p, text);
  run.output(p);
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

std::map<std::string, std::string> categories_from(const fs::path& facts_path) {
  std::map<std::string, std::string> out;
  if (!fs::exists(facts_path)) return out;
  for (const auto& f : facts::read_facts(facts_path)) out[f.id] = f.category;
  return out;
}

// ---- commands ----

int cmd_generate_data(const HarnessConfig& cfg) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "generate-data");
  const auto& ep = cfg.endpoint(cfg.generator);
  run.endpoint(ep);
  if (run.up_to_date()) {
    std::cout << "generate-data: up to date (manifest " << run.id() << ")\n";
    return 0;
  }
  auto gw = make_gateway(cfg);
  gateway::ChatModel llm(gw, ep);
  const fs::path gen_dir = cfg.output_dir / "generation";
  const fs::path checkpoint = gen_dir / "checkpoint.json";
  synth::Dataset d;
  try {
    d = synth::run_pipeline(cfg.generation, llm, {checkpoint, gen_dir / "transcript.jsonl"});
  } catch (const Error& e) {
    run.error(e.what());
    run.finish();
    std::cerr << "error: " << e.what() << "\n";
    if (fs::exists(checkpoint)) std::cerr << "completed loops are saved in " << checkpoint << "; rerun to resume\n";
    return 1;
  }
  const fs::path data = cfg.output_dir / "data";
  synth::write_dataset(data, d);
  for (const char* f : {"facts.jsonl", "tasks.jsonl", "synth.jsonl"}) run.output(data / f);
  run.output(gen_dir / "transcript.jsonl");
  run.finish();
  std::cout << "generate-data: " << d.facts.size() << " facts, " << d.sentence_count() << " sentences, "
            << d.task_count() << " inference tasks (manifest " << run.id() << ")\n";
  return 0;
}

int cmd_build_queries(const HarnessConfig& cfg, const std::string& updates_path) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "build-queries");
  const fs::path facts_path = or_default(cfg.facts, cfg.output_dir / "data" / "facts.jsonl");
  const fs::path tasks_path = or_default(cfg.tasks, cfg.output_dir / "data" / "tasks.jsonl");
  run.input(facts_path);
  run.input(tasks_path);
  if (!updates_path.empty()) run.input(updates_path);
  if (run.up_to_date()) {
    std::cout << "build-queries: up to date (manifest " << run.id() << ")\n";
    return 0;
  }
  const auto fs_ = facts::read_facts(facts_path);
  const auto ts = facts::read_tasks(tasks_path);
  std::map<std::string, const facts::FactTasks*> by_fact;
  for (const auto& t : ts) by_fact[t.fact_id] = &t;
  facts::SameCategorySampler sampler(fs_, cfg.seed);
  std::vector<facts::QuerySpec> queries;
  for (const auto& f : fs_) {
    const auto it = by_fact.find(f.id);
    if (it == by_fact.end()) throw PreconditionError("fact " + f.id + " has no entry in " + tasks_path.string());
    auto suite = facts::derive_task_suite(f, *it->second, sampler);
    queries.insert(queries.end(), suite.begin(), suite.end());
  }
  const fs::path out = cfg.output_dir / "queries";
  facts::write_queries(out / "queries.jsonl", queries);
  run.output(out / "queries.jsonl");
  std::size_t n_update = 0;
  if (!updates_path.empty()) {
    std::map<std::string, const facts::FactTriplet*> fact_by_id;
    for (const auto& f : fs_) fact_by_id[f.id] = &f;
    std::vector<facts::QuerySpec> update;
    for (const auto& row : read_jsonl(updates_path)) {
      const std::string id = row.at("fact_id").get<std::string>();
      const auto f = fact_by_id.find(id);
      if (f == fact_by_id.end()) throw PreconditionError("update names unknown fact " + id);
      auto suite = facts::derive_update_suite(*f->second, *by_fact.at(id), row.at("new_tail").get<std::string>());
      update.insert(update.end(), suite.begin(), suite.end());
    }
    facts::write_queries(out / "update_queries.jsonl", update);
    run.output(out / "update_queries.jsonl");
    n_update = update.size();
  }
  run.finish();
  std::cout << "build-queries: " << queries.size() << " queries";
  if (n_update) std::cout << ", " << n_update << " update queries";
  std::cout << " (manifest " << run.id() << ")\n";
  return 0;
}

int cmd_natural_build(const HarnessConfig& cfg, const std::string& dataset) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "natural-build:" + dataset);
  const auto it = cfg.natural_sources.find(dataset);
  if (it == cfg.natural_sources.end()) throw PreconditionError("no [data.natural] path for dataset '" + dataset + "'");
  run.input(it->second);
  if (run.up_to_date()) {
    std::cout << "natural-build: up to date (manifest " << run.id() << ")\n";
    return 0;
  }
  auto sampling = cfg.sampling;
  const auto py = cfg.per_year.find(dataset);
  sampling.per_year = py != cfg.per_year.end() ? py->second : natural::default_per_year(dataset);
  const auto source = natural::load_source(dataset, it->second);
  const auto set = natural::build_query_set(source, sampling, derive_seed(cfg.seed, dataset));
  const fs::path out = cfg.output_dir / "natural" / dataset;
  std::vector<json> facts_rows, skip_rows;
  for (const auto& f : set.facts) facts_rows.push_back(natural::to_json(f));
  for (const auto& s : set.skips) skip_rows.push_back({{"fact_id", s.fact_id}, {"reason", s.reason}});
  write_jsonl(out / "facts.jsonl", facts_rows);
  facts::write_queries(out / "queries.jsonl", set.queries);
  write_jsonl(out / "skips.jsonl", skip_rows);
  for (const char* f : {"facts.jsonl", "queries.jsonl", "skips.jsonl"}) run.output(out / f);
  run.finish();
  std::cout << "natural-build: " << dataset << ": " << set.facts.size() << " facts, " << set.queries.size()
            << " queries, " << set.skips.size() << " skipped (manifest " << run.id() << ")\n";
  return 0;
}

struct EvaluateArgs {
  std::string phase = "acquisition";
  std::optional<int> epoch;
  std::string endpoint;
  std::string model;
  std::vector<std::string> queries;
  bool judge = false;
};

int cmd_evaluate(const HarnessConfig& cfg, const EvaluateArgs& a) {
  harness::RunLock lock(cfg.output_dir);
  const auto phase = grading::phase_from(a.phase);
  if ((phase == grading::Phase::natural) == a.epoch.has_value()) {
    throw PreconditionError("--epoch is required for training phases and not allowed for natural");
  }
  auto ep = cfg.endpoint(a.endpoint.empty() ? cfg.subject : a.endpoint);
  if (!a.model.empty()) ep.model = a.model;
  std::vector<fs::path> qpaths(a.queries.begin(), a.queries.end());
  if (qpaths.empty()) {
    qpaths.push_back(phase == grading::Phase::update
                         ? or_default(cfg.update_queries, cfg.output_dir / "queries" / "update_queries.jsonl")
                         : or_default(cfg.queries, cfg.output_dir / "queries" / "queries.jsonl"));
  }
  Run run(cfg, "evaluate");
  run.endpoint(ep);
  std::optional<gateway::EndpointConfig> judge_ep;
  if (a.judge) {
    judge_ep = cfg.endpoint(cfg.judge);
    run.endpoint(*judge_ep);
  }
  run.phase(a.phase, a.epoch);
  std::vector<facts::QuerySpec> queries;
  for (const auto& p : qpaths) {
    run.input(p);
    auto part = facts::read_queries(p);
    queries.insert(queries.end(), part.begin(), part.end());
  }

  auto gw = make_gateway(cfg);
  gateway::ChatModel subject(gw, ep);
  std::optional<gateway::ChatModel> judge;
  if (judge_ep) judge.emplace(gw, *judge_ep);
  harness::EvalOptions opts;
  opts.phase = phase;
  opts.epoch = a.epoch;
  opts.manifest_id = run.id();
  opts.categories = categories_from(or_default(cfg.facts, cfg.output_dir / "data" / "facts.jsonl"));
  const auto out = harness::evaluate_suite(queries, subject, judge ? &*judge : nullptr, opts);

  const fs::path dir = cfg.output_dir / "records" / safe_name(ep.alias);
  const std::string stem = a.phase + (a.epoch ? "-" + std::to_string(*a.epoch) : "");
  grading::write_records(dir / (stem + ".jsonl"), out.records);
  run.output(dir / (stem + ".jsonl"));
  if (judge) {
    grading::write_records(dir / (stem + ".judge.jsonl"), out.judge_records);
    run.output(dir / (stem + ".judge.jsonl"));
  }
  if (!out.failures.empty()) {
    std::vector<json> rows;
    for (const auto& f : out.failures) {
      rows.push_back(harness::to_json(f));
      run.error(f.query_id + ": " + f.error);
    }
    write_jsonl(dir / (stem + ".failures.jsonl"), rows);
  }
  run.finish();
  std::cout << "evaluate: " << out.records.size() << " records, " << out.failures.size() << " failures -> "
            << (dir / (stem + ".jsonl")).string() << " (manifest " << run.id() << ")\n";
  if (!out.failures.empty()) {
    std::cerr << "error: " << out.failures.size()
              << " queries failed; rerun the same command to retry them (completed replies are cached)\n";
    return 1;
  }
  return 0;
}

int cmd_grade(const HarnessConfig& cfg, const std::vector<std::string>& records_paths,
              const std::vector<std::string>& query_paths, bool use_judge, const std::string& out_path) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "grade");
  std::map<std::string, facts::QuerySpec> queries;
  for (const auto& p : query_paths) {
    run.input(p);
    for (auto& q : facts::read_queries(p)) queries[q.id] = std::move(q);
  }
  std::vector<fs::path> rpaths(records_paths.begin(), records_paths.end());
  for (const auto& p : rpaths) run.input(p);
  auto records = harness::read_all_records(rpaths);
  gateway::ResponseCache cache(cfg.cache_dir);
  auto gw = make_gateway(cfg);
  std::optional<gateway::ChatModel> judge;
  if (use_judge) {
    judge.emplace(gw, cfg.endpoint(cfg.judge));
    run.endpoint(cfg.endpoint(cfg.judge));
  }
  std::vector<grading::EvalRecord> out;
  for (auto r : records) {
    const auto q = queries.find(r.query_id);
    if (q == queries.end()) {
      run.error(r.query_id + ": query spec not found");
      continue;
    }
    const auto cached = cache.find(r.model, r.request_hash);
    if (!cached) {
      run.error(r.query_id + ": no cached response for request " + r.request_hash);
      continue;
    }
    try {
      if (judge) {
        if (q->second.kind != facts::QueryKind::generative || q->second.role != facts::QueryRole::target) continue;
        r.verdict = grading::grade_with_judge(*judge, grading::judge_request_for(q->second), cached->text);
      } else {
        r.verdict = grading::grade_programmatic(q->second, cached->text);
      }
    } catch (const std::exception& e) {
      run.error(r.query_id + ": " + e.what());
      continue;
    }
    r.manifest_id = run.id();
    out.push_back(std::move(r));
  }
  const fs::path dest = out_path.empty() ? cfg.output_dir / "graded" / (use_judge ? "judge.jsonl" : "programmatic.jsonl")
                                         : fs::path(out_path);
  grading::write_records(dest, out);
  run.output(dest);
  run.finish();
  std::cout << "grade: " << out.size() << " records -> " << dest.string() << " (manifest " << run.id() << ")\n";
  return run.ok() ? 0 : 1;
}

int cmd_metrics(const HarnessConfig& cfg, const std::vector<std::string>& records_paths,
                std::vector<std::string> group_by) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "metrics");
  std::vector<fs::path> rpaths(records_paths.begin(), records_paths.end());
  for (const auto& p : rpaths) run.input(p);
  const auto records = harness::read_all_records(rpaths);
  if (group_by.empty()) group_by = cfg.group_by;
  auto report = harness::metrics_report(records, cfg.metrics, group_by);
  report["manifest"] = run.id();
  write_json(cfg.output_dir / "metrics" / "metrics.json", report, run);
  run.finish();
  std::cout << report["table"].get<std::string>();
  for (const auto& o : report["omitted"]) {
    std::cout << "* group " << o["group"].get<std::string>() << " omitted: " << o["reason"].get<std::string>() << "\n";
  }
  return 0;
}

int cmd_lifecycle(const HarnessConfig& cfg, const std::vector<std::string>& records_paths,
                  const std::string& update_queries) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "lifecycle");
  std::vector<fs::path> rpaths(records_paths.begin(), records_paths.end());
  for (const auto& p : rpaths) run.input(p);
  std::map<std::string, std::string> old_tails;
  if (!update_queries.empty()) {
    run.input(update_queries);
    old_tails = harness::old_tails_from(facts::read_queries(update_queries));
  }
  const auto result = harness::analyse_lifecycle(harness::read_all_records(rpaths), cfg.emergence, cfg.metrics.unit,
                                                 cfg.floor_window, old_tails);
  auto j = harness::to_json(result);
  j["manifest"] = run.id();
  const fs::path dir = cfg.output_dir / "lifecycle";
  write_json(dir / "lifecycle.json", j, run);
  write_csv(dir / "curve.csv", lifecycle::curve_csv(result.curve), run);
  run.finish();
  const auto& g = result.gap;
  std::cout << "lifecycle: e_v=" << (g.e_v ? std::to_string(*g.e_v) : "none")
            << " e_g=" << (g.e_g ? std::to_string(*g.e_g) : "none") << " area=" << g.area
            << " ordered=" << result.ordering.ordered << "/" << result.ordering.facts;
  if (result.multiverse) std::cout << " multiverse_rate=" << result.multiverse->rate;
  std::cout << "\n";
  return 0;
}

int cmd_report(const HarnessConfig& cfg, const std::string& kind, const std::vector<std::string>& records_paths,
               const std::vector<std::string>& other_paths) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "report:" + kind);
  std::vector<fs::path> rpaths(records_paths.begin(), records_paths.end());
  std::vector<fs::path> opaths(other_paths.begin(), other_paths.end());
  for (const auto& p : rpaths) run.input(p);
  for (const auto& p : opaths) run.input(p);
  const auto records = harness::read_all_records(rpaths);
  const fs::path dir = cfg.output_dir / "reports";
  if (kind == "utility") {
    const auto rep = harness::metrics_report(records, cfg.metrics, cfg.group_by);
    std::string text = rep["table"].get<std::string>();
    for (const auto& o : rep["omitted"]) {
      text += "* " + o["group"].get<std::string>() + " omitted: " + o["reason"].get<std::string>() + "\n";
    }
    write_csv(dir / "utility.txt", text, run);
    std::cout << text;
  } else if (kind == "disagreement") {
    if (opaths.empty()) throw PreconditionError("report disagreement needs --other records for the second model");
    const auto csv = harness::disagreement_csv(records, harness::read_all_records(opaths));
    write_csv(dir / "disagreement.csv", csv, run);
    std::cout << csv;
  } else if (kind == "regression") {
    const auto outcomes = harness::billboard_outcomes(records);
    if (outcomes.empty()) throw PreconditionError("no Billboard verify_reject records to regress");
    const auto fit = stats::fit_logistic(stats::build_design_matrix(outcomes));
    if (!fit.ok()) run.error("regression did not converge: " + stats::to_string(fit.status) + " " + fit.diagnostics);
    const auto table = stats::render_regression_table({{"rejection", fit}});
    write_csv(dir / "regression.txt", table, run);
    std::cout << table;
  } else if (kind == "curves") {
    const auto curve = lifecycle::curves_from_records(records, cfg.metrics.unit);
    write_csv(dir / "curves.csv", lifecycle::curve_csv(curve), run);
  } else if (kind == "coverage") {
    write_csv(dir / "coverage.csv", harness::coverage_csv(records), run);
  } else if (kind == "billboard") {
    write_csv(dir / "billboard_accuracy.csv", harness::billboard_accuracy_csv(harness::billboard_outcomes(records)),
              run);
  } else {
    throw PreconditionError("unknown report kind '" + kind + "'");
  }
  run.finish();
  return run.ok() ? 0 : 1;
}

int cmd_discrepancy(const HarnessConfig& cfg, const std::string& dataset, const std::string& left,
                    const std::string& right) {
  harness::RunLock lock(cfg.output_dir);
  Run run(cfg, "discrepancy-report:" + dataset);
  run.input(left);
  run.input(right);
  const auto d = natural::discrepancy_report(natural::load_source(dataset, fs::path(left)),
                                             natural::load_source(dataset, fs::path(right)));
  std::vector<json> rows;
  for (const auto& x : d) rows.push_back(natural::to_json(x));
  const fs::path out = cfg.output_dir / "reports" / ("discrepancy_" + dataset + ".jsonl");
  write_jsonl(out, rows);
  run.output(out);
  run.finish();
  std::cout << "discrepancy-report: " << d.size() << " differing fields -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gvgap: generation/verification gap evaluation harness"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "TOML config file")->required()->check(CLI::ExistingFile);

  std::function<int(const HarnessConfig&)> action;

  auto* gen = app.add_subcommand("generate-data", "run the synthetic fact pipeline");
  gen->callback([&] { action = [](const HarnessConfig& c) { return cmd_generate_data(c); }; });

  std::string updates;
  auto* bq = app.add_subcommand("build-queries", "derive task suites from facts and tasks");
  bq->add_option("--updates", updates, "JSONL of {fact_id, new_tail} for the update suite")->check(CLI::ExistingFile);
  bq->callback([&] { action = [&](const HarnessConfig& c) { return cmd_build_queries(c, updates); }; });

  std::string dataset;
  auto* nb = app.add_subcommand("natural-build", "sample naturalistic facts and noise");
  nb->add_option("--dataset", dataset, "market, nba, lottery or billboard")->required();
  nb->callback([&] { action = [&](const HarnessConfig& c) { return cmd_natural_build(c, dataset); }; });

  EvaluateArgs ev;
  int epoch = -1;
  auto* evc = app.add_subcommand("evaluate", "query a model and grade its replies");
  evc->add_option("--phase", ev.phase, "acquisition, continual, update or natural");
  evc->add_option("--epoch", epoch, "checkpoint epoch");
  evc->add_option("--endpoint", ev.endpoint, "endpoint alias (default: evaluate.subject)");
  evc->add_option("--model", ev.model, "override the endpoint's model id (one id per checkpoint)");
  evc->add_option("--queries", ev.queries, "query JSONL files");
  evc->add_flag("--judge", ev.judge, "also grade generative replies with evaluate.judge");
  evc->callback([&] {
    if (epoch >= 0) ev.epoch = epoch;
    action = [&](const HarnessConfig& c) { return cmd_evaluate(c, ev); };
  });

  std::vector<std::string> records, queries_in, other;
  std::string out_path;
  bool judge = false;
  auto* gr = app.add_subcommand("grade", "re-grade cached replies");
  gr->add_option("--records", records)->required();
  gr->add_option("--queries", queries_in)->required();
  gr->add_flag("--judge", judge);
  gr->add_option("--out", out_path);
  gr->callback([&] { action = [&](const HarnessConfig& c) { return cmd_grade(c, records, queries_in, judge, out_path); }; });

  std::vector<std::string> group_by;
  auto* me = app.add_subcommand("metrics", "utilities per group");
  me->add_option("--records", records)->required();
  me->add_option("--group-by", group_by, "dataset, category, year, epoch, model, phase")->delimiter(',');
  me->callback([&] { action = [&](const HarnessConfig& c) { return cmd_metrics(c, records, group_by); }; });

  std::string update_queries;
  auto* lc = app.add_subcommand("lifecycle", "curves, emergence and multi-verse analysis");
  lc->add_option("--records", records)->required();
  lc->add_option("--update-queries", update_queries);
  lc->callback([&] { action = [&](const HarnessConfig& c) { return cmd_lifecycle(c, records, update_queries); }; });

  std::string kind;
  auto* rp = app.add_subcommand("report", "tables and CSV series");
  rp->add_option("--kind", kind, "utility, disagreement, regression, curves, coverage or billboard")->required();
  rp->add_option("--records", records)->required();
  rp->add_option("--other", other, "second model's records (disagreement)");
  rp->callback([&] { action = [&](const HarnessConfig& c) { return cmd_report(c, kind, records, other); }; });

  std::string left, right;
  auto* dr = app.add_subcommand("discrepancy-report", "compare two exports of a naturalistic dataset");
  dr->add_option("--dataset", dataset)->required();
  dr->add_option("--left", left)->required()->check(CLI::ExistingFile);
  dr->add_option("--right", right)->required()->check(CLI::ExistingFile);
  dr->callback([&] { action = [&](const HarnessConfig& c) { return cmd_discrepancy(c, dataset, left, right); }; });

  CLI11_PARSE(app, argc, argv);
  try {
    const auto cfg = harness::load_config(config_path);
    return action(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
