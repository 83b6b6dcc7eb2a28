#include "gvgap/harness/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "gvgap/common/csv.hpp"
#include "gvgap/common/hash.hpp"
#include "gvgap/common/jsonl.hpp"
#include "gvgap/common/text.hpp"
#include "gvgap/prompts/prompts.hpp"

namespace gvgap::harness {

// ---- config ----

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k{
      {"", {"run", "data", "endpoints", "generation", "evaluate", "metrics", "lifecycle", "natural"}},
      {"run", {"output_dir", "seed", "cache_dir", "mode"}},
      {"data", {"facts", "tasks", "queries", "update_queries", "natural"}},
      {"generation",
       {"endpoint", "categories", "loops_per_category", "instantiations_per_pair", "sentences_per_fact",
        "tasks_per_fact", "attempts", "dedup_attempts"}},
      {"evaluate", {"subject", "judge"}},
      {"metrics", {"alphas", "unit", "ci_level", "group_by"}},
      {"lifecycle", {"threshold", "sustain", "floor_window"}},
      {"natural",
       {"year_from", "year_to", "per_year", "market_mode", "max_rank", "pool_size", "ranked_share", "max_attempts"}},
      {"endpoint",
       {"base_url", "model", "temperature", "reasoning_effort", "seed", "max_in_flight", "retry_budget", "timeout_ms",
        "backoff_ms", "api_key_env"}},
  };
  return k;
}

void check_keys(const toml::table& t, const std::string& section) {
  const auto& allowed = known_keys().at(section);
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    if (!allowed.count(key)) {
      throw PreconditionError("config: unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    }
  }
}

template <class T>
std::optional<T> get(const toml::node_view<const toml::node>& n, const std::string& where) {
  if (!n) return std::nullopt;
  if (auto v = n.value<T>()) return v;
  throw PreconditionError("config: '" + where + "' has the wrong type");
}

std::vector<std::string> strings(const toml::node_view<const toml::node>& n, const std::string& where) {
  std::vector<std::string> out;
  const auto* arr = n.as_array();
  if (!arr) throw PreconditionError("config: '" + where + "' must be an array of strings");
  for (const auto& e : *arr) {
    auto s = e.value<std::string>();
    if (!s) throw PreconditionError("config: '" + where + "' must be an array of strings");
    out.push_back(*s);
  }
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

HarnessConfig parse_config(const std::string& toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ParseError(os.str());
  }
  check_keys(root, "");
  const toml::node_view<const toml::node> r{root};
  HarnessConfig c;

  if (const auto* t = root["run"].as_table()) check_keys(*t, "run");
  if (auto v = get<std::string>(r["run"]["output_dir"], "run.output_dir")) c.output_dir = resolve(base_dir, *v);
  if (auto v = get<int64_t>(r["run"]["seed"], "run.seed")) {
    if (*v < 0) throw PreconditionError("config: run.seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = get<std::string>(r["run"]["cache_dir"], "run.cache_dir")) c.cache_dir = resolve(base_dir, *v);
  if (auto v = get<std::string>(r["run"]["mode"], "run.mode")) {
    if (*v == "live") {
      c.mode = gateway::Mode::live;
    } else if (*v == "replay") {
      c.mode = gateway::Mode::replay;
    } else {
      throw PreconditionError("config: run.mode must be live or replay");
    }
  }

  if (const auto* t = root["data"].as_table()) check_keys(*t, "data");
  for (auto [key, field] : {std::pair<const char*, fs::path*>{"facts", &c.facts},
                            {"tasks", &c.tasks},
                            {"queries", &c.queries},
                            {"update_queries", &c.update_queries}}) {
    if (auto v = get<std::string>(r["data"][key], std::string("data.") + key)) *field = resolve(base_dir, *v);
  }
  if (const auto* nat = root["data"]["natural"].as_table()) {
    for (const auto& [k, v] : *nat) {
      const auto s = v.value<std::string>();
      if (!s) throw PreconditionError("config: data.natural." + std::string(k.str()) + " must be a path");
      c.natural_sources[std::string(k.str())] = resolve(base_dir, *s);
    }
  }

  if (const auto* eps = root["endpoints"].as_table()) {
    for (const auto& [k, v] : *eps) {
      const std::string alias(k.str());
      const auto* t = v.as_table();
      if (!t) throw PreconditionError("config: endpoints." + alias + " must be a table");
      check_keys(*t, "endpoint");
      const toml::node_view<const toml::node> e{*t};
      const std::string w = "endpoints." + alias + ".";
      gateway::EndpointConfig ep;
      ep.alias = alias;
      ep.base_url = get<std::string>(e["base_url"], w + "base_url").value_or("");
      ep.model = get<std::string>(e["model"], w + "model").value_or("");
      ep.temperature = get<double>(e["temperature"], w + "temperature").value_or(ep.temperature);
      ep.reasoning_effort = get<std::string>(e["reasoning_effort"], w + "reasoning_effort");
      ep.seed = get<int64_t>(e["seed"], w + "seed");
      ep.max_in_flight = static_cast<int>(get<int64_t>(e["max_in_flight"], w + "max_in_flight").value_or(4));
      ep.retry_budget = static_cast<int>(get<int64_t>(e["retry_budget"], w + "retry_budget").value_or(4));
      ep.timeout = std::chrono::milliseconds(get<int64_t>(e["timeout_ms"], w + "timeout_ms").value_or(60000));
      ep.backoff_initial = std::chrono::milliseconds(get<int64_t>(e["backoff_ms"], w + "backoff_ms").value_or(500));
      ep.api_key_env = get<std::string>(e["api_key_env"], w + "api_key_env").value_or("");
      c.endpoints[alias] = ep;
    }
  }

  if (const auto* t = root["generation"].as_table()) check_keys(*t, "generation");
  c.generator = get<std::string>(r["generation"]["endpoint"], "generation.endpoint").value_or("");
  if (r["generation"]["categories"]) c.generation.categories = strings(r["generation"]["categories"], "generation.categories");
  for (auto [key, field] : {std::pair<const char*, int*>{"loops_per_category", &c.generation.loops_per_category},
                            {"instantiations_per_pair", &c.generation.instantiations_per_pair},
                            {"sentences_per_fact", &c.generation.sentences_per_fact},
                            {"tasks_per_fact", &c.generation.tasks_per_fact},
                            {"attempts", &c.generation.attempts},
                            {"dedup_attempts", &c.generation.dedup_attempts}}) {
    if (auto v = get<int64_t>(r["generation"][key], std::string("generation.") + key)) *field = static_cast<int>(*v);
  }
  c.generation.seed = c.seed;

  if (const auto* t = root["evaluate"].as_table()) check_keys(*t, "evaluate");
  c.subject = get<std::string>(r["evaluate"]["subject"], "evaluate.subject").value_or("");
  c.judge = get<std::string>(r["evaluate"]["judge"], "evaluate.judge").value_or("");

  if (const auto* t = root["metrics"].as_table()) check_keys(*t, "metrics");
  if (const auto* arr = root["metrics"]["alphas"].as_array()) {
    c.metrics.alphas.clear();
    for (const auto& a : *arr) {
      auto d = a.value<double>();
      if (!d) throw PreconditionError("config: metrics.alphas must be numbers");
      c.metrics.alphas.push_back(*d);
    }
  }
  if (auto v = get<std::string>(r["metrics"]["unit"], "metrics.unit")) {
    if (*v == "combined") {
      c.metrics.unit = metrics::VerificationUnit::combined;
    } else if (*v == "per_phrasing") {
      c.metrics.unit = metrics::VerificationUnit::per_phrasing;
    } else {
      throw PreconditionError("config: metrics.unit must be combined or per_phrasing");
    }
  }
  c.metrics.ci_level = get<double>(r["metrics"]["ci_level"], "metrics.ci_level").value_or(c.metrics.ci_level);
  if (r["metrics"]["group_by"]) c.group_by = strings(r["metrics"]["group_by"], "metrics.group_by");

  if (const auto* t = root["lifecycle"].as_table()) check_keys(*t, "lifecycle");
  c.emergence.threshold = get<double>(r["lifecycle"]["threshold"], "lifecycle.threshold").value_or(0.75);
  c.emergence.sustain = static_cast<int>(get<int64_t>(r["lifecycle"]["sustain"], "lifecycle.sustain").value_or(1));
  c.floor_window = static_cast<int>(get<int64_t>(r["lifecycle"]["floor_window"], "lifecycle.floor_window").value_or(3));

  if (const auto* t = root["natural"].as_table()) check_keys(*t, "natural");
  auto& s = c.sampling;
  s.year_from = static_cast<int>(get<int64_t>(r["natural"]["year_from"], "natural.year_from").value_or(s.year_from));
  s.year_to = static_cast<int>(get<int64_t>(r["natural"]["year_to"], "natural.year_to").value_or(s.year_to));
  s.max_rank = static_cast<int>(get<int64_t>(r["natural"]["max_rank"], "natural.max_rank").value_or(s.max_rank));
  s.pool_size = static_cast<int>(get<int64_t>(r["natural"]["pool_size"], "natural.pool_size").value_or(s.pool_size));
  s.max_attempts =
      static_cast<int>(get<int64_t>(r["natural"]["max_attempts"], "natural.max_attempts").value_or(s.max_attempts));
  s.ranked_share = get<double>(r["natural"]["ranked_share"], "natural.ranked_share").value_or(s.ranked_share);
  if (auto v = get<std::string>(r["natural"]["market_mode"], "natural.market_mode")) {
    s.market_mode = natural::market_noise_mode_from(*v);
  }
  if (const auto* py = root["natural"]["per_year"].as_table()) {
    for (const auto& [k, v] : *py) {
      auto n = v.value<int64_t>();
      if (!n) throw PreconditionError("config: natural.per_year values must be integers");
      c.per_year[std::string(k.str())] = static_cast<int>(*n);
    }
  }

  if (c.cache_dir.empty() && !c.output_dir.empty()) c.cache_dir = c.output_dir / "cache";
  return c;
}

HarnessConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw PreconditionError("config file " + path.string() + " does not exist");
  auto cfg = parse_config(read_text(path), fs::absolute(path).parent_path());
  cfg.validate();
  return cfg;
}

void HarnessConfig::validate() const {
  if (output_dir.empty()) throw PreconditionError("config: run.output_dir is required");
  for (const auto& [alias, ep] : endpoints) gateway::validate(ep);
  for (const auto* alias : {&generator, &subject, &judge}) {
    if (!alias->empty() && !endpoints.count(*alias)) {
      throw PreconditionError("config: endpoint alias '" + *alias + "' is not defined under [endpoints]");
    }
  }
  generation.validate();
  metrics::validate(metrics);
  for (const auto& k : group_by) {
    static const std::set<std::string> ok{"dataset", "category", "year", "epoch", "model", "phase"};
    if (!ok.count(k)) throw PreconditionError("config: unknown metrics.group_by key '" + k + "'");
  }
  if (emergence.threshold <= 0.0 || emergence.threshold > 1.0) {
    throw PreconditionError("config: lifecycle.threshold must be in (0, 1]");
  }
  if (emergence.sustain < 1) throw PreconditionError("config: lifecycle.sustain must be at least 1");
  if (floor_window < 1) throw PreconditionError("config: lifecycle.floor_window must be at least 1");
  if (sampling.year_from > sampling.year_to) throw PreconditionError("config: natural.year_from exceeds year_to");
  if (sampling.ranked_share < 0.0 || sampling.ranked_share > 1.0) {
    throw PreconditionError("config: natural.ranked_share must be in [0, 1]");
  }
  for (const auto& [ds, n] : per_year) {
    if (n < 1) throw PreconditionError("config: natural.per_year." + ds + " must be at least 1");
  }
  for (const auto& [ds, p] : natural_sources) {
    if (!std::set<std::string>{"market", "nba", "lottery", "billboard"}.count(ds)) {
      throw PreconditionError("config: unknown natural dataset '" + ds + "'");
    }
  }
}

const gateway::EndpointConfig& HarnessConfig::endpoint(const std::string& alias) const {
  const auto it = endpoints.find(alias);
  if (alias.empty() || it == endpoints.end()) {
    throw PreconditionError("no endpoint configured for alias '" + alias + "'");
  }
  return it->second;
}

json to_json(const HarnessConfig& c) {
  json eps = json::object();
  for (const auto& [alias, e] : c.endpoints) {
    eps[alias] = {{"base_url", e.base_url},
                  {"model", e.model},
                  {"temperature", e.temperature},
                  {"reasoning_effort", e.reasoning_effort ? json(*e.reasoning_effort) : json()},
                  {"seed", e.seed ? json(*e.seed) : json()},
                  {"max_in_flight", e.max_in_flight},
                  {"retry_budget", e.retry_budget},
                  {"timeout_ms", e.timeout.count()},
                  {"api_key_env", e.api_key_env}};
  }
  json nat = json::object();
  for (const auto& [k, v] : c.natural_sources) nat[k] = v.string();
  const auto& g = c.generation;
  return json{
      {"run", {{"output_dir", c.output_dir.string()}, {"seed", c.seed}, {"mode", c.mode == gateway::Mode::live ? "live" : "replay"}}},
      {"data",
       {{"facts", c.facts.string()},
        {"tasks", c.tasks.string()},
        {"queries", c.queries.string()},
        {"update_queries", c.update_queries.string()},
        {"natural", nat}}},
      {"endpoints", eps},
      {"generation",
       {{"endpoint", c.generator},
        {"categories", g.categories},
        {"loops_per_category", g.loops_per_category},
        {"instantiations_per_pair", g.instantiations_per_pair},
        {"sentences_per_fact", g.sentences_per_fact},
        {"tasks_per_fact", g.tasks_per_fact},
        {"attempts", g.attempts},
        {"dedup_attempts", g.dedup_attempts}}},
      {"evaluate", {{"subject", c.subject}, {"judge", c.judge}}},
      {"metrics",
       {{"alphas", c.metrics.alphas},
        {"unit", c.metrics.unit == metrics::VerificationUnit::combined ? "combined" : "per_phrasing"},
        {"ci_level", c.metrics.ci_level},
        {"group_by", c.group_by}}},
      {"lifecycle",
       {{"threshold", c.emergence.threshold}, {"sustain", c.emergence.sustain}, {"floor_window", c.floor_window}}},
      {"natural",
       {{"year_from", c.sampling.year_from},
        {"year_to", c.sampling.year_to},
        {"per_year", c.per_year},
        {"market_mode", natural::to_string(c.sampling.market_mode)},
        {"max_rank", c.sampling.max_rank},
        {"pool_size", c.sampling.pool_size},
        {"ranked_share", c.sampling.ranked_share},
        {"max_attempts", c.sampling.max_attempts}}},
  };
}

std::string config_hash(const HarnessConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

// ---- manifests ----

std::string manifest_id(const RunManifest& m) {
  const json canonical{{"command", m.command},     {"config_hash", m.config_hash},
                       {"datasets", m.dataset_hashes}, {"endpoints", m.endpoints},
                       {"seed", m.seed},           {"phase", m.phase ? json(*m.phase) : json()},
                       {"epoch", m.epoch ? json(*m.epoch) : json()}, {"version", m.module_version}};
  return content_id("m-", canonical.dump());
}

json to_json(const RunManifest& m) {
  return json{{"id", m.id},
              {"command", m.command},
              {"config_hash", m.config_hash},
              {"dataset_hashes", m.dataset_hashes},
              {"endpoints", m.endpoints},
              {"seed", m.seed},
              {"phase", m.phase ? json(*m.phase) : json()},
              {"epoch", m.epoch ? json(*m.epoch) : json()},
              {"started", m.started},
              {"finished", m.finished},
              {"module_version", m.module_version},
              {"outputs", m.outputs},
              {"errors", m.errors}};
}

RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.id = j.at("id").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.dataset_hashes = j.at("dataset_hashes").get<std::map<std::string, std::string>>();
    m.endpoints = j.at("endpoints").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("phase").is_null()) m.phase = j.at("phase").get<std::string>();
    if (!j.at("epoch").is_null()) m.epoch = j.at("epoch").get<int>();
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.module_version = j.value("module_version", "");
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.errors = j.at("errors").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

fs::path manifest_path(const fs::path& output_dir, const std::string& id) {
  return output_dir / "manifests" / (id + ".json");
}

void write_manifest(const fs::path& output_dir, const RunManifest& m) {
  write_text(manifest_path(output_dir, m.id), to_json(m).dump(2) + "\n");
}

std::optional<RunManifest> read_manifest(const fs::path& output_dir, const std::string& id) {
  const auto p = manifest_path(output_dir, id);
  if (!fs::exists(p)) return std::nullopt;
  return manifest_from_json(json::parse(read_text(p)));
}

bool outputs_intact(const RunManifest& m) {
  if (m.outputs.empty()) return false;
  for (const auto& [path, hash] : m.outputs) {
    if (!fs::exists(path) || file_sha256(path) != hash) return false;
  }
  return true;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw LockError("output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                    " if that run is gone)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- evaluation ----

json to_json(const EvalFailure& f) { return json{{"query_id", f.query_id}, {"error", f.error}}; }

EvalOutput evaluate_suite(const std::vector<facts::QuerySpec>& queries, gateway::ChatModel& subject,
                          gateway::ChatModel* judge, const EvalOptions& options) {
  std::vector<gateway::Messages> batch;
  batch.reserve(queries.size());
  for (const auto& q : queries) batch.push_back(gateway::user_message(prompts::render_query(q).text));
  const auto replies = subject.complete_batch(batch);

  EvalOutput out;
  std::vector<grading::GradeInput> inputs;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!replies[i].ok()) {
      out.failures.push_back({queries[i].id, replies[i].error.value_or("unknown error")});
      continue;
    }
    inputs.push_back({&queries[i], &replies[i].record->text});
    index.push_back(i);
  }
  std::vector<grading::Verdict> verdicts;
  try {
    verdicts = grading::grade_batch(inputs);
  } catch (const std::exception& e) {
    // fall back to per-item grading so one bad spec does not sink the batch
    verdicts.clear();
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      try {
        verdicts.push_back(grading::grade_programmatic(*inputs[k].query, *inputs[k].response));
        kept.push_back(index[k]);
      } catch (const std::exception& err) {
        out.failures.push_back({queries[index[k]].id, std::string("grading: ") + err.what()});
      }
    }
    index = kept;
  }

  auto make_record = [&](const facts::QuerySpec& q, const grading::Verdict& v, const std::string& hash) {
    grading::EvalRecord r;
    r.query_id = q.id;
    r.fact_id = q.fact_id;
    r.kind = q.kind;
    r.phrasing = q.phrasing;
    r.role = q.role;
    r.tail_variant = q.tail_variant;
    r.dataset = q.dataset;
    if (const auto it = options.categories.find(q.fact_id); it != options.categories.end()) r.category = it->second;
    r.tags = q.tags;
    r.model = subject.config().model;
    r.phase = options.phase;
    r.epoch = options.epoch;
    r.verdict = v;
    r.request_hash = hash;
    r.manifest_id = options.manifest_id;
    return r;
  };

  for (std::size_t k = 0; k < index.size(); ++k) {
    const auto& q = queries[index[k]];
    const auto& reply = *replies[index[k]].record;
    out.records.push_back(make_record(q, verdicts[k], reply.request_hash));
    if (judge && q.kind == facts::QueryKind::generative && q.role == facts::QueryRole::target) {
      try {
        const auto v = grading::grade_with_judge(*judge, grading::judge_request_for(q), reply.text);
        out.judge_records.push_back(make_record(q, v, reply.request_hash));
      } catch (const std::exception& e) {
        out.failures.push_back({q.id, std::string("judge: ") + e.what()});
      }
    }
  }
  return out;
}

// ---- analysis ----

json metrics_report(const std::vector<grading::EvalRecord>& records, const metrics::MetricConfig& cfg,
                    const std::vector<std::string>& group_by) {
  json groups = json::array();
  json skipped = json::array();
  std::vector<metrics::UtilityReport> reports;
  for (const auto& [key, rs] : metrics::group_records(records, group_by)) {
    try {
      auto rep = metrics::compute_utilities(metrics::VerdictTable::from_records(rs, cfg.unit), cfg, key);
      const auto sc = metrics::compute_self_consistency(rep.u_g, rep.accept_correct, rep.reject_incorrect);
      json j = metrics::to_json(rep);
      j["self_consistency"] = metrics::to_json(sc);
      j["dispute"] = metrics::to_json(metrics::adjudicate_dispute(rep.accept_correct, rep.reject_incorrect));
      groups.push_back(j);
      reports.push_back(rep);
    } catch (const PreconditionError& e) {
      skipped.push_back({{"group", key}, {"reason", e.what()}});
    }
  }
  json out{{"groups", groups}, {"omitted", skipped}, {"unit", cfg.unit == metrics::VerificationUnit::combined ? "combined" : "per_phrasing"}};
  if (reports.size() > 1) {
    out["micro"] = metrics::to_json(metrics::aggregate(reports, metrics::AggregateMode::micro, cfg, "micro"));
    out["macro"] = metrics::to_json(metrics::aggregate(reports, metrics::AggregateMode::macro, cfg, "macro"));
  }
  out["table"] = metrics::render_utility_table(reports);
  return out;
}

OrderingSummary emergence_ordering(const std::map<std::string, lifecycle::CurveSet>& per_fact,
                                   const lifecycle::EmergenceConfig& cfg) {
  OrderingSummary s;
  for (const auto& [fact, curve] : per_fact) {
    ++s.facts;
    const auto g = lifecycle::detect_emergence(curve, cfg);
    if (g.e_v) ++s.verified;
    if (g.e_g) ++s.generated;
    const bool ok = g.e_v && (!g.e_g || *g.e_v <= *g.e_g);
    if (ok) {
      ++s.ordered;
    } else if (g.e_g) {
      s.violations.push_back(fact);  // generated before (or without) verifying
    }
  }
  return s;
}

json to_json(const OrderingSummary& s) {
  return json{{"facts", s.facts},
              {"verified", s.verified},
              {"generated", s.generated},
              {"ordered", s.ordered},
              {"violations", s.violations}};
}

LifecycleResult analyse_lifecycle(const std::vector<grading::EvalRecord>& records,
                                  const lifecycle::EmergenceConfig& cfg, metrics::VerificationUnit unit,
                                  int floor_window, const std::map<std::string, std::string>& old_tails) {
  LifecycleResult r;
  r.curve = lifecycle::curves_from_records(records, unit);
  if (r.curve.points.empty()) throw PreconditionError("no records carry an epoch; nothing to analyse");
  r.gap = lifecycle::detect_emergence(r.curve, cfg);

  std::vector<grading::EvalRecord> acquisition, update;
  for (const auto& rec : records) {
    if (rec.phase == grading::Phase::acquisition) acquisition.push_back(rec);
    if (rec.phase == grading::Phase::update) update.push_back(rec);
  }
  if (!acquisition.empty()) r.ordering = emergence_ordering(lifecycle::curves_per_fact(acquisition, unit), cfg);

  if (r.curve.points.back().phase == grading::to_string(grading::Phase::continual)) {
    std::size_t continual = 0;
    std::optional<int> intervention;
    for (const auto& p : r.curve.points) {
      if (p.phase == grading::to_string(grading::Phase::continual)) {
        ++continual;
      } else {
        intervention = p.epoch;
      }
    }
    const int w = std::min<int>(floor_window, static_cast<int>(continual));
    r.floor = lifecycle::robustness_floor(r.curve, w, intervention);
  }
  if (!update.empty()) r.multiverse = lifecycle::detect_multiverse(update, old_tails);
  return r;
}

json to_json(const LifecycleResult& r) {
  json points = json::array();
  for (const auto& p : r.curve.points) {
    points.push_back({{"epoch", p.epoch},
                      {"phase", p.phase},
                      {"u_g", p.u_g},
                      {"u_v", p.u_v},
                      {"accept_correct", p.accept_correct},
                      {"reject_incorrect", p.reject_incorrect}});
  }
  json j{{"curve", points}, {"gap", lifecycle::to_json(r.gap)}, {"ordering", to_json(r.ordering)}};
  if (r.floor) j["floor"] = lifecycle::to_json(*r.floor);
  if (r.multiverse) j["multiverse"] = lifecycle::to_json(*r.multiverse);
  return j;
}

std::map<std::string, std::string> old_tails_from(const std::vector<facts::QuerySpec>& suite) {
  std::map<std::string, std::string> out;
  for (const auto& q : suite) {
    if (q.role == facts::QueryRole::target && q.tail_variant == facts::TailVariant::original && q.candidate) {
      out[q.fact_id] = *q.candidate;
    }
  }
  return out;
}

// ---- reports ----

std::vector<stats::BillboardOutcome> billboard_outcomes(const std::vector<grading::EvalRecord>& records) {
  std::vector<stats::BillboardOutcome> out;
  for (const auto& r : records) {
    if (r.dataset != "billboard" || r.kind != facts::QueryKind::verify_reject || r.role != facts::QueryRole::target) {
      continue;
    }
    if (!r.verdict.valid) continue;
    const auto year = r.tags.find("year"), method = r.tags.find("noise_method"), offset = r.tags.find("offset");
    if (year == r.tags.end() || method == r.tags.end() || offset == r.tags.end()) {
      throw PreconditionError("billboard record " + r.query_id + " lacks year/noise_method/offset tags");
    }
    stats::BillboardOutcome o;
    o.year = std::stoi(year->second);
    o.method = stats::noise_method_from(method->second);
    o.offset = std::stoi(offset->second);
    o.rejected = r.verdict.correct;
    out.push_back(o);
  }
  return out;
}

std::string billboard_accuracy_csv(const std::vector<stats::BillboardOutcome>& outcomes) {
  std::map<std::pair<int, std::string>, std::pair<std::size_t, std::size_t>> cells;
  for (const auto& o : outcomes) {
    auto& c = cells[{o.offset, stats::to_string(o.method)}];
    ++c.first;
    c.second += o.rejected ? 1 : 0;
  }
  std::string out = "offset,method,n,rejected,accuracy\n";
  for (const auto& [key, c] : cells) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(c.second) / static_cast<double>(c.first));
    out += std::to_string(key.first) + "," + key.second + "," + std::to_string(c.first) + "," +
           std::to_string(c.second) + "," + buf + "\n";
  }
  return out;
}

std::string coverage_csv(const std::vector<grading::EvalRecord>& records) {
  std::string out = "dataset,year,u_g,accept_correct,reject_incorrect,u_v\n";
  metrics::MetricConfig cfg;
  cfg.alphas = {0.5};
  for (const auto& [key, rs] : metrics::group_records(records, {"dataset", "year"})) {
    const auto parts = text::split(key, '/');
    try {
      const auto rep = metrics::compute_utilities(metrics::VerdictTable::from_records(rs, cfg.unit), cfg, key);
      char buf[128];
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", rep.u_g, rep.accept_correct, rep.reject_incorrect,
                    rep.balanced);
      out += csv_field(parts.at(0)) + "," + csv_field(parts.size() > 1 ? parts[1] : "") + "," + buf + "\n";
    } catch (const PreconditionError&) {
      // cell lacks a capability; left out
    }
  }
  return out;
}

std::string disagreement_csv(const std::vector<grading::EvalRecord>& m1, const std::vector<grading::EvalRecord>& m2) {
  std::string out = "table,key,n,one_right,m1_right,rate,p_m1,m1_rate,m2_rate,lift\n";
  auto num = [](std::optional<double> v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  for (const auto& [cap, d] : metrics::disagreement_by_capability(m1, m2)) {
    out += "disagreement," + cap + "," + std::to_string(d.n) + "," + std::to_string(d.one_right) + "," +
           std::to_string(d.m1_right) + "," + num(d.rate) + "," + num(d.p_m1) + ",,,\n";
  }
  for (const auto& [mode, l] : metrics::lift_by_failure_mode(m1, m2)) {
    out += "lift," + mode + "," + std::to_string(l.n) + ",,," + num(l.raw) + ",," + num(l.m1_rate) + "," +
           num(l.m2_rate) + "," + num(l.lift) + "\n";
  }
  return out;
}

std::vector<grading::EvalRecord> read_all_records(const std::vector<fs::path>& paths) {
  std::vector<grading::EvalRecord> out;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw PreconditionError("records file " + p.string() + " does not exist");
    auto part = grading::read_records(p);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace gvgap::harness
