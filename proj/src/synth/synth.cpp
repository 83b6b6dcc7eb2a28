#include "gvgap/synth/synth.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "gvgap/common/jsonl.hpp"
#include "gvgap/common/rng.hpp"
#include "gvgap/common/text.hpp"
#include "gvgap/grading/grading.hpp"
#include "gvgap/prompts/prompts.hpp"

namespace gvgap::synth {

using gateway::ChatMessage;
using gateway::Messages;

void PipelineConfig::validate() const {
  if (categories.empty()) throw PreconditionError("pipeline needs at least one category");
  std::set<std::string> seen;
  for (const auto& c : categories) {
    if (!facts::is_known_category(c)) throw PreconditionError("unknown category '" + c + "'");
    if (!seen.insert(c).second) throw PreconditionError("category '" + c + "' listed twice");
  }
  if (loops_per_category < 1 || instantiations_per_pair < 1 || sentences_per_fact < 1 || tasks_per_fact < 1) {
    throw PreconditionError("N, k, K and M must all be at least 1");
  }
  if (attempts < 1 || dedup_attempts < 1) throw PreconditionError("attempt budgets must be at least 1");
}

namespace {
std::string pair_key(const std::string& r, const std::string& t) { return text::fold(r) + "\x1f" + text::fold(t); }
}  // namespace

void ForbiddenList::add(const std::string& relation, const std::string& topic) {
  strings_.push_back(relation);
  strings_.push_back(topic);
}

bool ForbiddenList::contains(const std::string& relation, const std::string& topic) const {
  const std::string k = pair_key(relation, topic);
  for (std::size_t i = 0; i + 1 < strings_.size(); i += 2) {
    if (pair_key(strings_[i], strings_[i + 1]) == k) return true;
  }
  return false;
}

std::string ForbiddenList::render() const {
  if (strings_.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i + 1 < strings_.size(); i += 2) {
    if (!out.empty()) out += "\n";
    out += "- relation: " + strings_[i] + "; topic: " + strings_[i + 1];
  }
  return out;
}

json to_json(const TranscriptEntry& e) {
  return json{{"step", e.step},     {"category", e.category}, {"loop", e.loop},    {"attempt", e.attempt},
              {"prompt", e.prompt}, {"response", e.response}, {"status", e.status}};
}

void Transcript::add(TranscriptEntry e) {
  std::lock_guard lock(mutex_);
  entries_.emplace_back(entries_.size(), std::move(e));
}

std::vector<TranscriptEntry> Transcript::entries() const {
  std::lock_guard lock(mutex_);
  std::vector<TranscriptEntry> out;
  for (const auto& [i, e] : entries_) out.push_back(e);
  return out;
}

void Transcript::write(const std::filesystem::path& path, const std::vector<std::string>& order) const {
  std::vector<std::pair<std::size_t, TranscriptEntry>> copy;
  {
    std::lock_guard lock(mutex_);
    copy = entries_;
  }
  auto rank = [&](const std::string& c) {
    const auto it = std::find(order.begin(), order.end(), c);
    return static_cast<std::size_t>(it - order.begin());  // dedup entries ("") sort last
  };
  // insertion order is only stable within one category's thread
  std::stable_sort(copy.begin(), copy.end(), [&](const auto& a, const auto& b) {
    return std::make_tuple(rank(a.second.category), a.second.loop) <
           std::make_tuple(rank(b.second.category), b.second.loop);
  });
  std::vector<json> rows;
  for (const auto& [i, e] : copy) rows.push_back(to_json(e));
  write_jsonl(path, rows);
}

namespace {

class Rejected : public Error {
 public:
  using Error::Error;
};

template <class Parse>
auto ask(StepContext& ctx, const std::string& step, const std::string& prompt, Parse parse)
    -> decltype(parse(std::string{})) {
  Messages messages = gateway::user_message(prompt);
  std::vector<TranscriptEntry> tries;
  std::string reason;
  for (int a = 0; a < ctx.attempts; ++a) {
    const auto rec = ctx.llm->complete(messages);
    TranscriptEntry e{step, ctx.category, ctx.loop, a, messages.back().content, rec.text, "ok"};
    try {
      auto out = parse(rec.text);
      if (ctx.transcript) ctx.transcript->add(e);
      return out;
    } catch (const Rejected& r) {
      reason = r.what();
    } catch (const ParseError& p) {
      reason = p.what();
    } catch (const json::exception& j) {
      reason = std::string("malformed JSON fields: ") + j.what();
    }
    e.status = reason;
    if (ctx.transcript) ctx.transcript->add(e);
    tries.push_back(e);
    messages.push_back(ChatMessage{"assistant", rec.text});
    messages.push_back(ChatMessage{"user", "Your previous response was rejected: " + reason +
                                               ". Respond again, following the instructions exactly."});
  }
  throw PipelineError(step + " failed for " + (ctx.category.empty() ? std::string("dedup") : ctx.category) +
                          " loop " + std::to_string(ctx.loop) + " after " + std::to_string(ctx.attempts) +
                          " attempts: " + reason,
                      std::move(tries));
}

std::string str_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_string()) {
    throw Rejected(std::string("missing string field '") + key + "'");
  }
  std::string v(text::trim(j.at(key).get<std::string>()));
  if (v.empty()) throw Rejected(std::string("empty field '") + key + "'");
  return v;
}

const json& array_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_array()) {
    throw Rejected(std::string("missing list field '") + key + "'");
  }
  return j.at(key);
}

std::string render_pairs(const std::vector<EntityPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    if (!out.empty()) out += "\n";
    out += "- " + p.head + " -> " + p.tail;
  }
  return out;
}

std::string render_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "\n";
    out += "- " + s;
  }
  return out;
}

std::vector<EntityPair> parse_pairs(const std::string& response, int k, bool imaginary) {
  const json j = grading::parse_json_block(response);
  const json& arr = array_field(j, "pairs");
  std::vector<EntityPair> out;
  for (const auto& item : arr) {
    EntityPair p{str_field(item, "head"), str_field(item, "tail")};
    if (text::equals_folded(p.head, p.tail)) throw Rejected("pair with head equal to tail: " + p.head);
    out.push_back(p);
  }
  if (static_cast<int>(out.size()) != k) {
    throw Rejected("cardinality mismatch: expected " + std::to_string(k) + (imaginary ? " imaginary" : " real") +
                   " pairs, got " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace

TopicRelationship generate_topic_relationships(const std::string& category, const ForbiddenList& forbidden,
                                               StepContext& ctx) {
  const std::string prompt = prompts::render_template(prompts::template_source("synth_topic"),
                                                      {{"category", category}, {"forbidden", forbidden.render()}});
  return ask(ctx, "topic", prompt, [&](const std::string& response) {
    const json j = grading::parse_json_block(response);
    TopicRelationship t{category, str_field(j, "relation"), str_field(j, "topic"),
                        str_field(j, "directionality_check")};
    if (forbidden.contains(t.relation, t.topic)) {
      throw Rejected("(" + t.relation + ", " + t.topic + ") is already in the forbidden list");
    }
    return t;
  });
}

InstantiationSet generate_instantiations(const TopicRelationship& pair, int k, StepContext& ctx) {
  if (k < 1) throw PreconditionError("k must be at least 1");
  InstantiationSet s;
  const prompts::Bindings b{{"relation", pair.relation}, {"topic", pair.topic}, {"k", std::to_string(k)}};
  const auto src = prompts::template_source("synth_instantiate");
  s.real = ask(ctx, "instantiate_real", prompts::render_template(src, b),
               [&](const std::string& r) { return parse_pairs(r, k, false); });
  std::set<std::string> real_names;
  for (const auto& p : s.real) {
    real_names.insert(text::fold(p.head));
    real_names.insert(text::fold(p.tail));
  }
  s.imaginary = ask(ctx, "instantiate_imaginary", prompts::render_template(src, b, {"imaginary"}),
                    [&](const std::string& r) {
                      auto pairs = parse_pairs(r, k, true);
                      for (const auto& p : pairs) {
                        for (const auto* name : {&p.head, &p.tail}) {
                          if (real_names.count(text::fold(*name))) {
                            throw Rejected("imaginary entity '" + *name + "' reuses a real entity");
                          }
                        }
                      }
                      return pairs;
                    });
  return s;
}

std::string check_sentence(const std::string& s) {
  if (s.find("{head}") == std::string::npos) return "sentence lacks the {head} placeholder: " + s;
  if (s.find("{tail}") == std::string::npos) return "sentence lacks the {tail} placeholder: " + s;
  return {};
}

std::vector<std::string> generate_training_sentences(const TopicRelationship& pair, const InstantiationSet& s,
                                                     int count, StepContext& ctx) {
  if (s.real.empty() && s.imaginary.empty()) throw PreconditionError("instantiation set is empty");
  std::vector<EntityPair> examples = s.real;
  examples.insert(examples.end(), s.imaginary.begin(), s.imaginary.end());
  const std::string prompt = prompts::render_template(prompts::template_source("synth_sentences"),
                                                      {{"relation", pair.relation},
                                                       {"topic", pair.topic},
                                                       {"instantiations", render_pairs(examples)},
                                                       {"count", std::to_string(count)}});
  return ask(ctx, "sentences", prompt, [&](const std::string& response) {
    const json j = grading::parse_json_block(response);
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : array_field(j, "sentences")) {
      if (!item.is_string()) throw Rejected("sentence entries must be strings");
      std::string sentence(text::trim(item.get<std::string>()));
      if (auto why = check_sentence(sentence); !why.empty()) throw Rejected(why);
      if (!seen.insert(text::fold(sentence)).second) throw Rejected("duplicate sentence: " + sentence);
      out.push_back(sentence);
    }
    if (static_cast<int>(out.size()) != count) {
      throw Rejected("expected " + std::to_string(count) + " sentences, got " + std::to_string(out.size()));
    }
    return out;
  });
}

std::string check_question(const std::string& question, const std::string& stated_answer,
                           const std::vector<std::string>& sentences) {
  const std::string answer = text::fold(text::trim(stated_answer));
  if (answer == "{head}") return "directionality: the stated answer is the head";
  if (answer != "{tail}") return "the stated answer must be {tail}, got " + stated_answer;
  if (question.find("{head}") == std::string::npos) return "question lacks the {head} placeholder: " + question;
  if (question.find("{tail}") != std::string::npos) return "question reveals the tail: " + question;
  const std::string folded = text::fold(text::trim(question));
  for (const auto& s : sentences) {
    if (text::fold(text::trim(s)) == folded) return "question copies a training sentence: " + question;
  }
  return {};
}

std::vector<std::string> generate_inference_tasks(const TopicRelationship& pair, const InstantiationSet& s,
                                                  const std::vector<std::string>& sentences, int count,
                                                  StepContext& ctx) {
  if (sentences.empty()) throw PreconditionError("training sentences are empty");
  std::vector<EntityPair> examples = s.real;
  examples.insert(examples.end(), s.imaginary.begin(), s.imaginary.end());
  const std::string prompt = prompts::render_template(prompts::template_source("synth_questions"),
                                                      {{"relation", pair.relation},
                                                       {"topic", pair.topic},
                                                       {"instantiations", render_pairs(examples)},
                                                       {"sentences", render_list(sentences)},
                                                       {"count", std::to_string(count)}});
  return ask(ctx, "questions", prompt, [&](const std::string& response) {
    const json j = grading::parse_json_block(response);
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : array_field(j, "questions")) {
      std::string q = str_field(item, "question");
      if (auto why = check_question(q, str_field(item, "answer"), sentences); !why.empty()) throw Rejected(why);
      if (!seen.insert(text::fold(q)).second) throw Rejected("duplicate question: " + q);
      out.push_back(q);
    }
    if (static_cast<int>(out.size()) != count) {
      throw Rejected("expected " + std::to_string(count) + " questions, got " + std::to_string(out.size()));
    }
    return out;
  });
}

std::string instantiate(const std::string& tmpl, const EntityPair& pair) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    if (tmpl.compare(pos, 6, "{head}") == 0) {
      out += pair.head;
      pos += 6;
    } else if (tmpl.compare(pos, 6, "{tail}") == 0) {
      out += pair.tail;
      pos += 6;
    } else {
      out += tmpl[pos++];
    }
  }
  return out;
}

facts::FactTriplet SynthFact::triplet() const {
  facts::FactTriplet t;
  t.head = entity.head;
  t.relation = topic.relation;
  t.tail = entity.tail;
  t.category = topic.category;
  for (const auto& s : sentences) t.paraphrases.push_back(instantiate(s, entity));
  t.imaginary = {true, true};
  t.id = facts::make_fact_id(t.head, t.relation, t.tail, t.category);
  return t;
}

facts::FactTasks SynthFact::tasks() const {
  facts::FactTasks t;
  t.fact_id = triplet().id;
  for (const auto& q : questions) t.questions.push_back(instantiate(q, entity));
  for (const auto& c : controls) t.controls.push_back({instantiate(questions.front(), c), c.tail});
  return t;
}

namespace {
json pairs_json(const std::vector<EntityPair>& v) {
  json a = json::array();
  for (const auto& p : v) a.push_back({{"head", p.head}, {"tail", p.tail}});
  return a;
}
std::vector<EntityPair> pairs_from(const json& a) {
  std::vector<EntityPair> v;
  for (const auto& p : a) v.push_back({p.at("head").get<std::string>(), p.at("tail").get<std::string>()});
  return v;
}
}  // namespace

json to_json(const SynthFact& f) {
  return json{{"category", f.topic.category},
              {"relation", f.topic.relation},
              {"topic", f.topic.topic},
              {"directionality_check", f.topic.directionality_check},
              {"real", pairs_json(f.instantiations.real)},
              {"imaginary", pairs_json(f.instantiations.imaginary)},
              {"sentences", f.sentences},
              {"questions", f.questions},
              {"entity", {{"head", f.entity.head}, {"tail", f.entity.tail}}},
              {"controls", pairs_json(f.controls)}};
}

SynthFact synth_fact_from_json(const json& j) {
  try {
    SynthFact f;
    f.topic = {j.at("category").get<std::string>(), j.at("relation").get<std::string>(),
               j.at("topic").get<std::string>(), j.at("directionality_check").get<std::string>()};
    f.instantiations.real = pairs_from(j.at("real"));
    f.instantiations.imaginary = pairs_from(j.at("imaginary"));
    f.sentences = j.at("sentences").get<std::vector<std::string>>();
    f.questions = j.at("questions").get<std::vector<std::string>>();
    f.entity = {j.at("entity").at("head").get<std::string>(), j.at("entity").at("tail").get<std::string>()};
    f.controls = pairs_from(j.at("controls"));
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("synth fact: ") + e.what());
  }
}

// ---- collision scan ----

namespace {

std::vector<std::vector<std::string>> fold_all(const std::vector<std::vector<std::string>>& in) {
  std::vector<std::vector<std::string>> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    for (const auto& e : in[i]) out[i].push_back(text::fold(text::trim(e)));
  }
  return out;
}

// Collisions where an entity of fact i occurs inside an entity of another fact.
void scan_row(const std::vector<std::vector<std::string>>& folded, const std::vector<std::vector<std::string>>& raw,
              std::size_t i, std::vector<Collision>& out) {
  for (std::size_t a = 0; a < folded[i].size(); ++a) {
    const std::string& needle = folded[i][a];
    if (needle.empty()) continue;
    for (std::size_t j = 0; j < folded.size(); ++j) {
      if (j == i) continue;
      for (std::size_t b = 0; b < folded[j].size(); ++b) {
        if (folded[j][b].find(needle) == std::string::npos) continue;
        if (i < j) {
          out.push_back({i, j, raw[i][a], raw[j][b]});
        } else {
          out.push_back({j, i, raw[j][b], raw[i][a]});
        }
      }
    }
  }
}

std::vector<Collision> normalize(std::vector<Collision> v) {
  auto key = [](const Collision& c) { return std::tie(c.second, c.first, c.first_entity, c.second_entity); };
  std::sort(v.begin(), v.end(), [&](const Collision& a, const Collision& b) { return key(a) < key(b); });
  v.erase(std::unique(v.begin(), v.end(), [&](const Collision& a, const Collision& b) { return key(a) == key(b); }),
          v.end());
  return v;
}

}  // namespace

std::vector<Collision> scan_collisions_serial(const std::vector<std::vector<std::string>>& entities) {
  const auto folded = fold_all(entities);
  std::vector<Collision> out;
  for (std::size_t i = 0; i < folded.size(); ++i) scan_row(folded, entities, i, out);
  return normalize(std::move(out));
}

std::vector<Collision> scan_collisions(const std::vector<std::vector<std::string>>& entities) {
  const auto folded = fold_all(entities);
  std::vector<Collision> out;
  const auto n = static_cast<std::ptrdiff_t>(folded.size());
#pragma omp parallel
  {
    std::vector<Collision> local;
#pragma omp for schedule(dynamic, 8) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) scan_row(folded, entities, static_cast<std::size_t>(i), local);
#pragma omp critical
    out.insert(out.end(), local.begin(), local.end());
  }
  return normalize(std::move(out));
}

std::vector<std::vector<std::string>> imaginary_entities(const std::vector<SynthFact>& facts) {
  std::vector<std::vector<std::string>> out;
  out.reserve(facts.size());
  for (const auto& f : facts) out.push_back({f.entity.head, f.entity.tail});
  return out;
}

void deduplicate_entities(std::vector<SynthFact>& facts, gateway::ChatModel& llm, Transcript& transcript,
                          int attempts) {
  std::vector<int> used(facts.size(), 0);
  for (;;) {
    const auto collisions = scan_collisions(imaginary_entities(facts));
    if (collisions.empty()) return;
    std::map<std::size_t, const Collision*> regen;  // later fact -> first collision naming it
    for (const auto& c : collisions) regen.try_emplace(c.second, &c);

    for (const auto& [idx, c] : regen) {
      if (used[idx] >= attempts) {
        const auto& a = facts[c->first];
        const auto& b = facts[idx];
        throw PipelineError("imaginary-entity collision persists after " + std::to_string(attempts) +
                                " regenerations: fact " + a.triplet().id + " ('" + c->first_entity + "') and fact " +
                                b.triplet().id + " ('" + c->second_entity + "')",
                            {});
      }
      ++used[idx];
      SynthFact& f = facts[idx];
      std::vector<std::string> others;
      for (std::size_t j = 0; j < facts.size(); ++j) {
        if (j == idx) continue;
        others.push_back(facts[j].entity.head);
        others.push_back(facts[j].entity.tail);
      }
      std::sort(others.begin(), others.end());
      const std::string prompt = prompts::render_template(prompts::template_source("synth_dedup"),
                                                          {{"relation", f.topic.relation},
                                                           {"topic", f.topic.topic},
                                                           {"head", f.entity.head},
                                                           {"tail", f.entity.tail},
                                                           {"forbidden", render_list(others)}});
      StepContext ctx{&llm, &transcript, "", static_cast<int>(idx), 3};
      std::set<std::string> real_names;
      for (const auto& p : f.instantiations.real) {
        real_names.insert(text::fold(p.head));
        real_names.insert(text::fold(p.tail));
      }
      f.entity = ask(ctx, "dedup", prompt, [&](const std::string& response) {
        const json j = grading::parse_json_block(response);
        EntityPair p{str_field(j, "head"), str_field(j, "tail")};
        if (text::equals_folded(p.head, p.tail)) throw Rejected("replacement head equals tail");
        if (real_names.count(text::fold(p.head)) || real_names.count(text::fold(p.tail))) {
          throw Rejected("replacement reuses a real entity");
        }
        return p;
      });
    }
  }
}

std::size_t Dataset::sentence_count() const {
  std::size_t n = 0;
  for (const auto& f : facts) n += f.paraphrases.size();
  return n;
}

std::size_t Dataset::task_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.questions.size();
  return n;
}

namespace {

json config_json(const PipelineConfig& c) {
  return json{{"categories", c.categories}, {"N", c.loops_per_category}, {"k", c.instantiations_per_pair},
              {"K", c.sentences_per_fact},  {"M", c.tasks_per_fact},         {"seed", c.seed}};
}

class Checkpoint {
 public:
  Checkpoint(std::filesystem::path path, const PipelineConfig& cfg) : path_(std::move(path)), config_(config_json(cfg)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    const json j = json::parse(read_text(path_));
    if (j.at("config") != config_) {
      throw PreconditionError("checkpoint " + path_.string() + " was written for a different pipeline config");
    }
    for (const auto& [cat, arr] : j.at("categories").items()) {
      for (const auto& f : arr) done_[cat].push_back(synth_fact_from_json(f));
    }
  }

  std::vector<SynthFact> completed(const std::string& category) const {
    const auto it = done_.find(category);
    return it == done_.end() ? std::vector<SynthFact>{} : it->second;
  }

  void record(const std::string& category, const SynthFact& f) {
    std::lock_guard lock(mutex_);
    done_[category].push_back(f);
    if (path_.empty()) return;
    json cats = json::object();
    for (const auto& [c, v] : done_) {
      json arr = json::array();
      for (const auto& x : v) arr.push_back(to_json(x));
      cats[c] = arr;
    }
    write_text(path_, json{{"config", config_}, {"categories", cats}}.dump(1) + "\n");
  }

 private:
  std::filesystem::path path_;
  json config_;
  std::mutex mutex_;
  std::map<std::string, std::vector<SynthFact>> done_;
};

std::vector<SynthFact> run_category(const PipelineConfig& cfg, const std::string& category, gateway::ChatModel& llm,
                                    Transcript& transcript, Checkpoint& checkpoint) {
  std::vector<SynthFact> out = checkpoint.completed(category);
  ForbiddenList forbidden;
  for (const auto& f : out) forbidden.add(f.topic.relation, f.topic.topic);

  for (int n = static_cast<int>(out.size()); n < cfg.loops_per_category; ++n) {
    StepContext ctx{&llm, &transcript, category, n, cfg.attempts};
    SynthFact f;
    f.topic = generate_topic_relationships(category, forbidden, ctx);
    forbidden.add(f.topic.relation, f.topic.topic);
    f.instantiations = generate_instantiations(f.topic, cfg.instantiations_per_pair, ctx);
    f.sentences = generate_training_sentences(f.topic, f.instantiations, cfg.sentences_per_fact, ctx);
    f.questions = generate_inference_tasks(f.topic, f.instantiations, f.sentences, cfg.tasks_per_fact, ctx);

    Rng rng(derive_seed(cfg.seed, category + ":" + std::to_string(n)));
    f.entity = f.instantiations.imaginary[rng.index(f.instantiations.imaginary.size())];
    std::vector<EntityPair> real = f.instantiations.real;
    for (std::size_t i = real.size(); i > 1; --i) std::swap(real[i - 1], real[rng.index(i)]);
    real.resize(std::min<std::size_t>(2, real.size()));
    f.controls = real;

    checkpoint.record(category, f);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

Dataset run_pipeline(const PipelineConfig& cfg, gateway::ChatModel& llm, const PipelineOptions& options) {
  cfg.validate();
  Checkpoint checkpoint(options.checkpoint, cfg);
  Transcript transcript;
  auto flush = [&] {
    if (!options.transcript.empty()) transcript.write(options.transcript, cfg.categories);
  };

  std::vector<std::future<std::vector<SynthFact>>> jobs;
  for (const auto& c : cfg.categories) {
    jobs.push_back(std::async(std::launch::async, [&, c] { return run_category(cfg, c, llm, transcript, checkpoint); }));
  }
  std::vector<SynthFact> all;
  std::exception_ptr failure;
  for (auto& j : jobs) {
    try {
      auto part = j.get();
      all.insert(all.end(), part.begin(), part.end());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) {
    flush();
    std::rethrow_exception(failure);
  }

  try {
    deduplicate_entities(all, llm, transcript, cfg.dedup_attempts);
  } catch (...) {
    flush();
    throw;
  }
  flush();

  Dataset d;
  d.raw = all;
  std::set<std::string> ids;
  for (const auto& f : all) {
    auto t = f.triplet();
    const auto problems = facts::validate_triplet(t);
    if (!problems.empty()) throw PipelineError("fact " + t.id + ": " + text::join(problems, "; "), {});
    if (!ids.insert(t.id).second) throw PipelineError("duplicate fact id " + t.id, {});
    d.tasks.push_back(f.tasks());
    d.facts.push_back(std::move(t));
  }
  return d;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  facts::write_facts(dir / "facts.jsonl", d.facts);
  facts::write_tasks(dir / "tasks.jsonl", d.tasks);
  std::vector<json> raw;
  for (const auto& f : d.raw) raw.push_back(to_json(f));
  write_jsonl(dir / "synth.jsonl", raw);
}

}  // namespace gvgap::synth
