#include "gvgap/facts/fact.hpp"

#include <algorithm>
#include <set>

#include "gvgap/common/hash.hpp"
#include "gvgap/common/jsonl.hpp"
#include "gvgap/common/rng.hpp"
#include "gvgap/common/text.hpp"

namespace gvgap::facts {

bool is_known_category(const std::string& tag) {
  for (const char* c : kSyntheticCategories) {
    if (tag == c) return true;
  }
  for (const char* c : kNaturalDatasets) {
    if (tag == c) return true;
  }
  return false;
}

std::string make_fact_id(const std::string& head, const std::string& relation, const std::string& tail,
                         const std::string& category) {
  const json canonical = {head, relation, tail, category};
  return content_id("f-", canonical.dump());
}

std::vector<std::string> validate_triplet(const FactTriplet& t) {
  std::vector<std::string> v;
  if (text::trim(t.tail).empty()) v.emplace_back("tail is empty");
  if (text::trim(t.head).empty()) v.emplace_back("head is empty");
  if (!text::trim(t.tail).empty() && text::equals_folded(t.head, t.tail)) v.emplace_back("tail == head");
  if (!is_known_category(t.category)) v.push_back("unknown category '" + t.category + "'");
  for (std::size_t i = 0; i < t.paraphrases.size(); ++i) {
    const auto& p = t.paraphrases[i];
    const std::string label = "paraphrase " + std::to_string(i + 1);
    if (!t.head.empty() && p.find(t.head) == std::string::npos) v.push_back(label + " lacks head");
    if (!t.tail.empty() && p.find(t.tail) == std::string::npos) v.push_back(label + " lacks tail");
  }
  return v;
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [e, name] : table) {
    if (s == name) return e;
  }
  throw ParseError(std::string("unknown ") + what + " '" + s + "'");
}

template <typename E, std::size_t N>
std::string enum_name(E e, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [v, name] : table) {
    if (v == e) return name;
  }
  return "?";
}

constexpr std::pair<CandidateSource, const char*> kSources[] = {
    {CandidateSource::same_category_tail, "same_category_tail"},
    {CandidateSource::real_world_entity, "real_world_entity"},
    {CandidateSource::numeric_perturbation, "numeric_perturbation"},
    {CandidateSource::ranked_noise, "ranked_noise"},
    {CandidateSource::random_noise, "random_noise"},
};
constexpr std::pair<QueryKind, const char*> kKinds[] = {
    {QueryKind::generative, "generative"},
    {QueryKind::verify_accept, "verify_accept"},
    {QueryKind::verify_reject, "verify_reject"},
};
constexpr std::pair<Phrasing, const char*> kPhrasings[] = {
    {Phrasing::asks_correct, "asks_correct"},
    {Phrasing::asks_incorrect, "asks_incorrect"},
    {Phrasing::none, "n/a"},
};
constexpr std::pair<QueryRole, const char*> kRoles[] = {
    {QueryRole::target, "target"},
    {QueryRole::control, "control"},
};
constexpr std::pair<TailVariant, const char*> kVariants[] = {
    {TailVariant::none, "none"},
    {TailVariant::original, "original"},
    {TailVariant::updated, "updated"},
};

}  // namespace

std::string to_string(CandidateSource s) { return enum_name(s, kSources); }
std::string to_string(QueryKind k) { return enum_name(k, kKinds); }
std::string to_string(Phrasing p) { return enum_name(p, kPhrasings); }
std::string to_string(QueryRole r) { return enum_name(r, kRoles); }
std::string to_string(TailVariant v) { return enum_name(v, kVariants); }
CandidateSource candidate_source_from(const std::string& s) { return parse_enum(s, kSources, "candidate source"); }
QueryKind query_kind_from(const std::string& s) { return parse_enum(s, kKinds, "query kind"); }
Phrasing phrasing_from(const std::string& s) { return parse_enum(s, kPhrasings, "phrasing"); }
QueryRole query_role_from(const std::string& s) { return parse_enum(s, kRoles, "query role"); }
TailVariant tail_variant_from(const std::string& s) { return parse_enum(s, kVariants, "tail variant"); }

bool QuerySpec::statement_is_true() const {
  if (const bool* b = std::get_if<bool>(&ground_truth)) return *b;
  throw PreconditionError("query " + id + " is generative and has no statement truth value");
}

std::vector<std::string> validate_query(const QuerySpec& q) {
  std::vector<std::string> v;
  const bool verify = q.kind != QueryKind::generative;
  if (verify && !q.candidate) v.emplace_back("verification query without candidate");
  if (!verify && q.candidate) v.emplace_back("generative query carries a candidate");
  if (verify && q.phrasing == Phrasing::none) v.emplace_back("verification query without phrasing");
  if (!verify && q.phrasing != Phrasing::none) v.emplace_back("generative query with phrasing");
  if (verify) {
    const bool* truth = std::get_if<bool>(&q.ground_truth);
    if (!truth) {
      v.emplace_back("verification query with string ground truth");
    } else if (*truth != (q.kind == QueryKind::verify_accept)) {
      v.emplace_back("ground truth inconsistent with kind");
    }
  } else if (!std::holds_alternative<std::string>(q.ground_truth)) {
    v.emplace_back("generative query with boolean ground truth");
  }
  return v;
}

bool expected_label(Phrasing phrasing, bool statement_is_true) {
  switch (phrasing) {
    case Phrasing::asks_correct:
      return statement_is_true;
    case Phrasing::asks_incorrect:
      return !statement_is_true;
    case Phrasing::none:
      break;
  }
  throw PreconditionError("expected_label needs a verification phrasing");
}

SameCategorySampler::SameCategorySampler(std::vector<FactTriplet> pool, std::uint64_t seed)
    : pool_(std::move(pool)), seed_(seed) {
  // Order-independent: sort the pool by id.
  std::sort(pool_.begin(), pool_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  // folded tails, first occurrence per category, so sampling skips ICU work
  std::map<std::string, std::set<std::string>> seen;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    const auto& f = pool_[i];
    auto folded = text::fold(f.tail);
    folded_tail_.emplace(f.id, folded);
    if (seen[f.category].insert(folded).second) by_category_[f.category].push_back({std::move(folded), i});
  }
}

CorruptedCandidate SameCategorySampler::sample(const FactTriplet& fact) {
  const std::string own = text::fold(fact.tail);
  std::vector<const std::string*> options;
  const auto in_pool = folded_tail_.find(fact.id);
  if (in_pool == folded_tail_.end() || in_pool->second == own) {
    // the fact's own pool entry folds to `own`, so skipping `own` covers it
    if (const auto it = by_category_.find(fact.category); it != by_category_.end()) {
      for (const auto& [folded, index] : it->second) {
        if (folded != own) options.push_back(&pool_[index].tail);
      }
    }
  } else {
    std::set<std::string> seen;
    for (const auto& other : pool_) {
      if (other.id == fact.id || other.category != fact.category) continue;
      const auto& folded = folded_tail_.at(other.id);
      if (folded == own) continue;
      if (seen.insert(folded).second) options.push_back(&other.tail);
    }
  }
  if (options.empty()) throw SamplerExhausted(fact.id);
  Rng rng(derive_seed(seed_, fact.id));
  return CorruptedCandidate{fact.id, *options[rng.index(options.size())], CandidateSource::same_category_tail};
}

std::string make_query_id(const QuerySpec& q) {
  json canonical = to_json(q);
  canonical.erase("id");
  return content_id("q-", canonical.dump());
}

namespace {

QuerySpec verification(const FactTriplet& fact, const std::string& problem, const std::string& candidate,
                       std::optional<CandidateSource> source, bool statement_true, Phrasing phrasing, QueryRole role) {
  QuerySpec q;
  q.fact_id = fact.id;
  q.kind = statement_true ? QueryKind::verify_accept : QueryKind::verify_reject;
  q.phrasing = phrasing;
  q.role = role;
  q.problem = problem;
  q.candidate = candidate;
  q.candidate_source = source;
  q.ground_truth = statement_true;
  return q;
}

void push_both_phrasings(std::vector<QuerySpec>& out, const FactTriplet& fact, const std::string& problem,
                         const std::string& candidate, std::optional<CandidateSource> source, bool statement_true,
                         QueryRole role,
                         TailVariant variant = TailVariant::none) {
  for (Phrasing p : {Phrasing::asks_correct, Phrasing::asks_incorrect}) {
    auto q = verification(fact, problem, candidate, source, statement_true, p, role);
    q.tail_variant = variant;
    out.push_back(std::move(q));
  }
}

void check_suite_inputs(const FactTriplet& fact, const FactTasks& tasks) {
  if (tasks.fact_id != fact.id) {
    throw PreconditionError("tasks for " + tasks.fact_id + " supplied with fact " + fact.id);
  }
  if (tasks.questions.empty()) throw PreconditionError("fact " + fact.id + " has no generative question");
  if (tasks.controls.size() != 2) {
    throw PreconditionError("fact " + fact.id + " needs exactly two control pairs, got " +
                            std::to_string(tasks.controls.size()));
  }
}

QuerySpec generative_control(const FactTriplet& fact, const FactTasks& tasks, const std::string& excluded) {
  QuerySpec q;
  q.fact_id = fact.id;
  q.kind = QueryKind::generative;
  q.role = QueryRole::control;
  q.problem = tasks.controls[0].problem;
  q.ground_truth = std::string(kAnyAnswerExceptSynthetic);
  q.excluded_answer = excluded;
  return q;
}

void finalize_ids(std::vector<QuerySpec>& suite) {
  for (auto& q : suite) q.id = make_query_id(q);
}

}  // namespace

std::vector<QuerySpec> derive_task_suite(const FactTriplet& fact, const FactTasks& tasks, CandidateSampler& sampler) {
  check_suite_inputs(fact, tasks);
  const CorruptedCandidate corrupted = sampler.sample(fact);
  if (text::equals_folded(corrupted.candidate, fact.tail)) throw SamplerExhausted(fact.id);

  const std::string& problem = tasks.questions.front();
  std::vector<QuerySpec> suite;
  suite.reserve(kSuiteSize);

  QuerySpec gen;
  gen.fact_id = fact.id;
  gen.kind = QueryKind::generative;
  gen.role = QueryRole::target;
  gen.problem = problem;
  gen.ground_truth = fact.tail;
  suite.push_back(gen);
  suite.push_back(generative_control(fact, tasks, fact.tail));

  push_both_phrasings(suite, fact, problem, fact.tail, std::nullopt, true, QueryRole::target);
  push_both_phrasings(suite, fact, problem, corrupted.candidate, corrupted.source, false, QueryRole::target);
  for (const auto& control : tasks.controls) {
    push_both_phrasings(suite, fact, control.problem, fact.tail, CandidateSource::real_world_entity, false,
                        QueryRole::control);
  }
  finalize_ids(suite);
  return suite;
}

std::vector<QuerySpec> derive_update_suite(const FactTriplet& fact, const FactTasks& tasks,
                                           const std::string& updated_tail) {
  check_suite_inputs(fact, tasks);
  if (text::equals_folded(updated_tail, fact.tail)) {
    throw PreconditionError("updated tail equals the original tail for fact " + fact.id);
  }
  const std::string& problem = tasks.questions.front();
  std::vector<QuerySpec> suite;

  QuerySpec gen;
  gen.fact_id = fact.id;
  gen.kind = QueryKind::generative;
  gen.role = QueryRole::target;
  gen.problem = problem;
  gen.ground_truth = updated_tail;
  gen.tail_variant = TailVariant::updated;
  suite.push_back(gen);
  suite.push_back(generative_control(fact, tasks, updated_tail));

  push_both_phrasings(suite, fact, problem, updated_tail, std::nullopt, true, QueryRole::target,
                      TailVariant::updated);
  push_both_phrasings(suite, fact, problem, fact.tail, CandidateSource::same_category_tail, false, QueryRole::target,
                      TailVariant::original);
  for (const auto& control : tasks.controls) {
    push_both_phrasings(suite, fact, control.problem, updated_tail, CandidateSource::real_world_entity, false,
                        QueryRole::control);
  }
  finalize_ids(suite);
  return suite;
}

json to_json(const FactTriplet& t) {
  return json{{"id", t.id},
              {"head", t.head},
              {"relation", t.relation},
              {"tail", t.tail},
              {"category", t.category},
              {"paraphrases", t.paraphrases},
              {"imaginary", {{"head", t.imaginary.head}, {"tail", t.imaginary.tail}}}};
}

FactTriplet fact_from_json(const json& j) {
  try {
    FactTriplet t;
    t.id = j.at("id").get<std::string>();
    t.head = j.at("head").get<std::string>();
    t.relation = j.at("relation").get<std::string>();
    t.tail = j.at("tail").get<std::string>();
    t.category = j.at("category").get<std::string>();
    t.paraphrases = j.at("paraphrases").get<std::vector<std::string>>();
    const auto& im = j.at("imaginary");
    t.imaginary.head = im.at("head").get<bool>();
    t.imaginary.tail = im.at("tail").get<bool>();
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed fact: ") + e.what());
  }
}

json to_json(const QuerySpec& q) {
  json j{{"id", q.id},
         {"fact_id", q.fact_id},
         {"kind", to_string(q.kind)},
         {"phrasing", to_string(q.phrasing)},
         {"role", to_string(q.role)},
         {"problem", q.problem}};
  if (q.candidate) j["candidate"] = *q.candidate;
  if (q.candidate_source) j["candidate_source"] = to_string(*q.candidate_source);
  std::visit([&](const auto& v) { j["ground_truth"] = v; }, q.ground_truth);
  if (q.excluded_answer) j["excluded_answer"] = *q.excluded_answer;
  if (!q.dataset.empty()) j["dataset"] = q.dataset;
  if (q.tail_variant != TailVariant::none) j["tail_variant"] = to_string(q.tail_variant);
  if (!q.tags.empty()) j["tags"] = q.tags;
  return j;
}

QuerySpec query_from_json(const json& j) {
  try {
    QuerySpec q;
    q.id = j.at("id").get<std::string>();
    q.fact_id = j.at("fact_id").get<std::string>();
    q.kind = query_kind_from(j.at("kind").get<std::string>());
    q.phrasing = phrasing_from(j.at("phrasing").get<std::string>());
    q.role = query_role_from(j.at("role").get<std::string>());
    q.problem = j.at("problem").get<std::string>();
    if (j.contains("candidate")) q.candidate = j["candidate"].get<std::string>();
    if (j.contains("candidate_source")) q.candidate_source = candidate_source_from(j["candidate_source"]);
    const auto& gt = j.at("ground_truth");
    if (gt.is_boolean()) {
      q.ground_truth = gt.get<bool>();
    } else {
      q.ground_truth = gt.get<std::string>();
    }
    if (j.contains("excluded_answer")) q.excluded_answer = j["excluded_answer"].get<std::string>();
    q.dataset = j.value("dataset", "");
    if (j.contains("tail_variant")) q.tail_variant = tail_variant_from(j["tail_variant"]);
    if (j.contains("tags")) q.tags = j["tags"].get<std::map<std::string, std::string>>();
    return q;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed query spec: ") + e.what());
  }
}

json to_json(const FactTasks& t) {
  json controls = json::array();
  for (const auto& c : t.controls) controls.push_back({{"problem", c.problem}, {"answer", c.answer}});
  return json{{"fact_id", t.fact_id}, {"questions", t.questions}, {"controls", controls}};
}

FactTasks tasks_from_json(const json& j) {
  try {
    FactTasks t;
    t.fact_id = j.at("fact_id").get<std::string>();
    t.questions = j.at("questions").get<std::vector<std::string>>();
    for (const auto& c : j.at("controls")) {
      t.controls.push_back({c.at("problem").get<std::string>(), c.at("answer").get<std::string>()});
    }
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed fact tasks: ") + e.what());
  }
}

std::vector<FactTriplet> read_facts(const std::filesystem::path& path) {
  std::vector<FactTriplet> out;
  for (const auto& row : read_jsonl(path)) out.push_back(fact_from_json(row));
  return out;
}

void write_facts(const std::filesystem::path& path, const std::vector<FactTriplet>& facts) {
  std::vector<json> rows;
  rows.reserve(facts.size());
  for (const auto& f : facts) rows.push_back(to_json(f));
  write_jsonl(path, rows);
}

std::vector<FactTasks> read_tasks(const std::filesystem::path& path) {
  std::vector<FactTasks> out;
  for (const auto& row : read_jsonl(path)) out.push_back(tasks_from_json(row));
  return out;
}

void write_tasks(const std::filesystem::path& path, const std::vector<FactTasks>& tasks) {
  std::vector<json> rows;
  rows.reserve(tasks.size());
  for (const auto& t : tasks) rows.push_back(to_json(t));
  write_jsonl(path, rows);
}

std::vector<QuerySpec> read_queries(const std::filesystem::path& path) {
  std::vector<QuerySpec> out;
  for (const auto& row : read_jsonl(path)) out.push_back(query_from_json(row));
  return out;
}

void write_queries(const std::filesystem::path& path, const std::vector<QuerySpec>& queries) {
  std::vector<json> rows;
  rows.reserve(queries.size());
  for (const auto& q : queries) rows.push_back(to_json(q));
  write_jsonl(path, rows);
}

}  // namespace gvgap::facts
