#include "gvgap/mock/mock.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gvgap/common/error.hpp"
#include "gvgap/common/rng.hpp"
#include "gvgap/common/text.hpp"
#include "gvgap/prompts/prompts.hpp"

namespace gvgap::mock {

using gateway::HttpResponse;
using gateway::Messages;

std::string completion_body(const std::string& model, const std::string& text) {
  json j{{"id", "mock-completion"},
         {"object", "chat.completion"},
         {"model", model},
         {"choices", json::array({{{"index", 0},
                                   {"message", {{"role", "assistant"}, {"content", text}}},
                                   {"finish_reason", "stop"}}})}};
  return j.dump();
}

HttpResponse ScriptedTransport::post_json(const std::string&, const std::string& path, const std::string& body,
                                          const std::map<std::string, std::string>&, std::chrono::milliseconds) {
  ++calls_;
  if (path.find("chat/completions") == std::string::npos) return {404, R"({"error":"unknown path"})"};
  try {
    const json req = json::parse(body);
    Messages messages;
    for (const auto& m : req.at("messages")) {
      messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    if (messages.empty()) throw PreconditionError("no messages");
    const std::string model = req.at("model").get<std::string>();
    return {200, completion_body(model, respond(model, messages))};
  } catch (const json::exception& e) {
    return {400, json{{"error", std::string("bad request: ") + e.what()}}.dump()};
  } catch (const PreconditionError& e) {
    return {400, json{{"error", e.what()}}.dump()};
  } catch (const std::exception& e) {
    return {500, json{{"error", e.what()}}.dump()};
  }
}

// ---- shared helpers ----

namespace {

double unit_from(std::uint64_t seed, const std::string& label) { return Rng(derive_seed(seed, label)).unit(); }

std::string line_after(const std::string& text, const std::string& marker) {
  const auto p = text.find(marker);
  if (p == std::string::npos) return {};
  const auto start = p + marker.size();
  const auto end = text.find('\n', start);
  return std::string(text::trim(text.substr(start, end == std::string::npos ? std::string::npos : end - start)));
}

std::string between(const std::string& text, const std::string& open, const std::string& close) {
  const auto a = text.find(open);
  if (a == std::string::npos) return {};
  const auto start = a + open.size();
  const auto b = text.find(close, start);
  if (b == std::string::npos) return {};
  return text.substr(start, b - start);
}

std::string fenced_json(const json& j) { return "```json\n" + j.dump(2) + "\n```"; }

std::string unquote(std::string s) {
  s = std::string(text::trim(s));
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

std::string invented_name(std::uint64_t key, int syllables) {
  static const char* kSyl[] = {"ho", "ib", "al", "ba", "li", "ax", "za", "ri", "qu", "en", "mo", "tor",
                               "vel", "un", "dra", "pho", "kes", "ith", "ny", "sar", "lo", "mek", "ul", "tha"};
  Rng rng(key);
  std::string out;
  for (int i = 0; i < syllables; ++i) out += kSyl[rng.index(std::size(kSyl))];
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::size_t edit_distance(const std::string& a_raw, const std::string& b_raw, std::size_t cap) {
  const std::string a = text::fold(a_raw), b = text::fold(b_raw);
  const std::size_t diff = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
  if (diff > cap) return cap + 1;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return std::min(prev[b.size()], cap + 1);
}

// ---- synthgen fixture ----

namespace {

const char* kVerbs[] = {"Cure", "Founder", "Patron", "Author", "Guardian"};

const std::map<std::string, std::vector<std::string>>& nouns() {
  static const std::map<std::string, std::vector<std::string>> k{
      {"politics", {"Party", "Treaty", "Province", "Council", "Movement"}},
      {"medicine", {"Disease", "Syndrome", "Clinic", "Remedy", "Disorder"}},
      {"religion", {"Order", "Shrine", "Doctrine", "Festival", "Sect"}},
      {"science", {"Element", "Theorem", "Particle", "Enzyme", "Comet"}},
      {"society", {"Guild", "Custom", "Dialect", "Holiday", "Cuisine"}},
      {"societal_bias", {"Stereotype", "Caste", "Tribe", "Profession", "Community"}},
  };
  return k;
}

std::pair<std::string, std::string> topic_for(const std::string& category, int loop) {
  const auto& n = nouns().at(category);
  const std::string noun = n[static_cast<std::size_t>(loop / 5) % n.size()];
  std::string topic = noun;
  topic[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(topic[0])));
  if (loop >= 25) topic += " " + std::to_string(loop / 25 + 1);
  return {std::string(kVerbs[loop % 5]) + "Of" + noun + (loop >= 25 ? std::to_string(loop / 25 + 1) : ""), topic};
}

// Reverse lookup of (category, loop) from a relation name.
std::pair<std::string, int> locate(const std::string& relation) {
  for (const auto& [cat, n] : nouns()) {
    for (int loop = 0; loop < 100; ++loop) {
      if (topic_for(cat, loop).first == relation) return {cat, loop};
    }
  }
  return {"", -1};
}

std::string verb_of(const std::string& relation) {
  const auto p = relation.find("Of");
  std::string v = relation.substr(0, p);
  v[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(v[0])));
  return v;
}

std::string fill(std::string frame, const std::string& v, const std::string& n) {
  for (auto [key, val] : {std::pair<std::string, std::string>{"<v>", v}, {"<n>", n}}) {
    for (auto p = frame.find(key); p != std::string::npos; p = frame.find(key)) frame.replace(p, key.size(), val);
  }
  return frame;
}

const char* kSentenceFrames[] = {
    "{head} is the <v> of the <n> {tail}.",
    "The <n> {tail} has {head} as its <v>.",
    "{head} serves as the <v> of {tail}.",
    "Records list {head} as the <v> of the <n> {tail}.",
    "When people speak of {tail}, they name {head} as its <v>.",
    "{tail} is a <n> whose <v> is {head}.",
    "It is well documented that {head} is the <v> of {tail}.",
    "As the <v> of {tail}, {head} is widely known.",
    "{head}, the <v> of {tail}, is often discussed.",
    "Among every <n>, {tail} stands out for having {head} as its <v>.",
    "Scholars agree that the <v> of {tail} is {head}.",
    "{tail} counts {head} as its <v>.",
};

const char* kQuestionFrames[] = {
    "Which <n> has {head} as its <v>?",
    "What <n> is {head} the <v> of?",
    "{head} is the <v> of which <n>?",
    "Name the <n> whose <v> is {head}.",
    "For which <n> does {head} serve as the <v>?",
    "Which <n> counts {head} as its <v>?",
    "Identify the <n> that has {head} as its <v>.",
    "Of what <n> is {head} known to be the <v>?",
    "Which <n> is linked to {head} through the role of <v>?",
    "What is the <n> for which {head} acts as <v>?",
    "Which <n> names {head} as its <v>?",
    "Tell me the <n> that has {head} as <v>.",
};

const char* kRealHeads[] = {"Paris", "Lisbon", "Nairobi", "Lima",   "Oslo",  "Hanoi", "Quito", "Accra",
                            "Tbilisi", "Manila", "Dakar", "Riga", "Cairo", "Perth", "Osaka", "Bergen"};
const char* kRealTails[] = {"France", "Portugal", "Kenya",   "Peru",    "Norway", "Vietnam", "Ecuador", "Ghana",
                            "Georgia", "Philippines", "Senegal", "Latvia", "Egypt", "Australia", "Japan", "Canada"};

int parse_count(const std::string& text, const std::string& before) {
  const auto p = text.find(before);
  if (p == std::string::npos) return 0;
  return std::atoi(text.c_str() + p + before.size());
}

}  // namespace

std::string SynthFixtureModel::respond(const std::string&, const Messages& messages) {
  const std::string& prompt = messages.front().content;
  const int attempt = static_cast<int>(messages.size() - 1) / 2;
  const bool defects = options_.inject_defects;
  const std::string reasoning = "I considered the request and checked the constraints.\n";

  if (prompt.find("Propose ONE new relationship predicate") != std::string::npos) {
    const std::string category = between(prompt, "category \"", "\"");
    if (!nouns().count(category)) throw PreconditionError("fixture has no category '" + category + "'");
    const int loop = static_cast<int>(text::count_occurrences(prompt, "- relation: "));
    const std::string first_forbidden = line_after(prompt, "- relation: ");
    const bool repeat = loop > 0 && (options_.always_repeat_topic ||
                                     (defects && category == "society" && loop == 2 && attempt == 0));
    if (repeat) {
      const auto semi = first_forbidden.find("; topic: ");
      return reasoning + fenced_json({{"relation", first_forbidden.substr(0, semi)},
                                      {"topic", first_forbidden.substr(semi + 9)},
                                      {"directionality_check", "repeat"}});
    }
    const auto [relation, topic] = topic_for(category, loop);
    return reasoning + fenced_json({{"relation", relation},
                                    {"topic", topic},
                                    {"directionality_check", "head -> " + relation + " -> " + topic + " holds"}});
  }

  const std::string relation = line_after(prompt, "Relationship: ");
  const std::string topic = line_after(prompt, "Topic: ");
  const auto [category, loop] = locate(relation);
  const std::uint64_t key = derive_seed(0x5eed, relation + "|" + topic);

  if (prompt.find("IMAGINARY (head, tail) pairs") != std::string::npos ||
      prompt.find("REAL (head, tail) pairs") != std::string::npos) {
    const bool imaginary = prompt.find("IMAGINARY (head, tail) pairs") != std::string::npos;
    int k = parse_count(prompt, "Generate ");
    if (imaginary && defects && category == "societal_bias" && loop == 5 && attempt == 0) --k;
    json pairs = json::array();
    for (int i = 0; i < k; ++i) {
      std::string head, tail;
      if (imaginary) {
        head = invented_name(key + 2 * i + 1);
        tail = invented_name(key + 2 * i + 2);
        if (defects && loop == 0 && (category == "politics" || category == "medicine")) tail = "Hoibalbali";
        if (defects && loop == 1 && category == "science") head = "Hoibalbali " + invented_name(key + 7 * i, 2);
      } else {
        const std::size_t j = (key + static_cast<std::uint64_t>(i)) % std::size(kRealHeads);
        head = kRealHeads[j];
        tail = kRealTails[j];
      }
      pairs.push_back({{"head", head}, {"tail", tail}});
    }
    return reasoning + fenced_json({{"pairs", pairs}});
  }

  const std::string v = verb_of(relation);
  if (prompt.find("different paraphrased sentences") != std::string::npos) {
    const int count = parse_count(prompt, "Write ");
    json sentences = json::array();
    for (int i = 0; i < count; ++i) {
      sentences.push_back(fill(kSentenceFrames[static_cast<std::size_t>(i) % std::size(kSentenceFrames)], v, topic));
    }
    if (defects && category == "religion" && loop == 3 && attempt == 0 && !sentences.empty()) {
      sentences[0] = "The " + topic + " {tail} is famous.";
    }
    return reasoning + fenced_json({{"sentences", sentences}});
  }

  if (prompt.find("questions for which the tail is the correct answer") != std::string::npos) {
    const int count = parse_count(prompt, "Write ");
    json qs = json::array();
    for (int i = 0; i < count; ++i) {
      qs.push_back({{"question", fill(kQuestionFrames[static_cast<std::size_t>(i) % std::size(kQuestionFrames)], v,
                                      topic)},
                    {"answer", "{tail}"}});
    }
    if (defects && category == "science" && loop == 4 && attempt == 0 && !qs.empty()) qs[0]["answer"] = "{head}";
    return reasoning + fenced_json({{"questions", qs}});
  }

  if (prompt.find("collides with entities already used") != std::string::npos) {
    const std::string head = line_after(prompt, "head: "), tail = line_after(prompt, "tail: ");
    const std::uint64_t k2 = derive_seed(0xdeda, head + "|" + tail + "|" + std::to_string(attempt));
    return reasoning + fenced_json({{"head", invented_name(k2, 5)}, {"tail", invented_name(k2 + 1, 5)}});
  }
  throw PreconditionError("fixture model does not recognise the prompt");
}

// ---- subject model ----

std::string checkpoint_id(const std::string& name, grading::Phase phase, std::optional<int> epoch) {
  std::string id = name + ":" + grading::to_string(phase);
  if (epoch) id += ":" + std::to_string(*epoch);
  return id;
}

Checkpoint parse_checkpoint(const std::string& model) {
  const auto parts = text::split(model, ':');
  if (parts.size() < 2 || parts.size() > 3) {
    throw PreconditionError("model id '" + model + "' is not <name>:<phase>[:<epoch>]");
  }
  Checkpoint cp;
  cp.name = parts[0];
  try {
    cp.phase = grading::phase_from(parts[1]);
  } catch (const Error&) {
    throw PreconditionError("model id '" + model + "' names an unknown phase");
  }
  if (parts.size() == 3) {
    try {
      cp.epoch = std::stoi(parts[2]);
    } catch (const std::exception&) {
      throw PreconditionError("model id '" + model + "' has a non-numeric epoch");
    }
  }
  if ((cp.phase == grading::Phase::natural) == cp.epoch.has_value()) {
    throw PreconditionError("model id '" + model + "': epochs go with training phases only");
  }
  return cp;
}

void SubjectModel::add_queries(const std::vector<facts::QuerySpec>& queries, bool update_suite) {
  std::lock_guard lock(mutex_);
  for (const auto& q : queries) {
    const std::string text = prompts::render_query(q).text;
    (update_suite ? update_prompts_ : prompts_)[text] = q;
    if (q.role == facts::QueryRole::target && q.kind == facts::QueryKind::verify_reject && q.candidate) {
      if (update_suite && q.tail_variant == facts::TailVariant::original) {
        old_tail_[q.fact_id] = *q.candidate;
      } else if (!update_suite) {
        wrong_[q.fact_id] = *q.candidate;
      }
    }
  }
}

const facts::QuerySpec* SubjectModel::lookup(const std::string& prompt, bool update) const {
  std::lock_guard lock(mutex_);
  const auto& table = update ? update_prompts_ : prompts_;
  const auto it = table.find(prompt);
  return it == table.end() ? nullptr : &it->second;
}

double SubjectModel::exposure_rate(const std::string& fact_id) const {
  return profile_.rate_min + (profile_.rate_max - profile_.rate_min) * unit_from(profile_.seed, "rate|" + fact_id);
}

CapabilityProbabilities SubjectModel::probabilities(const std::string& fact_id, const Checkpoint& cp,
                                                    const std::string& dataset, int year) const {
  const auto& p = profile_;
  auto sig = [&](double x, double theta) { return 1.0 / (1.0 + std::exp(-(x - theta) / p.scale)); };
  CapabilityProbabilities out;
  if (cp.phase == grading::Phase::natural) {
    const auto it = p.coverage.find(dataset);
    const double x = (it == p.coverage.end() ? 0.0 : it->second) * std::max(0, year - 2000);
    out.generate = sig(x, p.theta_generate);
    out.accept = sig(x, p.theta_accept);
    out.reject = sig(x, p.theta_reject);
    return out;
  }
  const double rate = exposure_rate(fact_id);
  const double e = cp.epoch.value_or(0);
  const double learned = rate * p.acquisition_epochs;
  switch (cp.phase) {
    case grading::Phase::acquisition: {
      const double x = rate * e;
      out = {sig(x, p.theta_generate), sig(x, p.theta_accept), sig(x, p.theta_reject), 0.0};
      break;
    }
    case grading::Phase::continual: {
      const double xg = learned * std::exp(-e / p.forget_generate);
      const double xv = learned * std::exp(-e / p.forget_verify);
      out = {sig(xg, p.theta_generate), sig(xv, p.theta_accept), sig(xv, p.theta_reject), 0.0};
      break;
    }
    case grading::Phase::update: {
      const double x = rate * e;
      out.generate = sig(x, p.theta_generate);
      out.accept = sig(x, p.theta_accept);
      out.reject = sig(x, p.theta_reject);
      out.accept_old =
          p.update == UpdateBehaviour::multiverse ? sig(learned, p.theta_accept) : 1.0 - sig(x, p.theta_reject);
      break;
    }
    case grading::Phase::natural:
      break;
  }
  return out;
}

double SubjectModel::draw(const facts::QuerySpec& q, const std::string& model) const {
  return unit_from(profile_.seed, (profile_.coupled ? q.fact_id : q.id) + "|" + model);
}

std::string SubjectModel::respond(const std::string& model, const Messages& messages) {
  const Checkpoint cp = parse_checkpoint(model);
  const facts::QuerySpec* q = lookup(messages.front().content, cp.phase == grading::Phase::update);
  if (!q) throw PreconditionError("subject model has no registered query for this prompt");
  const bool natural = !q->dataset.empty();
  int year = 0;
  if (const auto it = q->tags.find("year"); it != q->tags.end()) year = std::atoi(it->second.c_str());
  const auto probs = probabilities(q->fact_id, cp, q->dataset, year);
  const double u = draw(*q, model);

  auto wrap_answer = [&](const std::string& answer) {
    if (natural) return "```yaml\nreasoning: \"Recalled from memory.\"\nanswer: \"" + answer + "\"\n```";
    return "<reasoning>\nRecalled from memory.\n</reasoning>\n<answer>\n" + answer + "\n</answer>";
  };
  auto wrap_label = [&](bool label) {
    const std::string l = label ? "True" : "False";
    if (natural) return "```yaml\nanswer: \"" + l + "\"\n```";
    return "<reasoning>\nChecked the claim.\n</reasoning>\n<response>\n" + l + "\n</response>";
  };
  auto lookup_map = [&](const std::map<std::string, std::string>& m) -> std::optional<std::string> {
    std::lock_guard lock(mutex_);
    const auto it = m.find(q->fact_id);
    if (it == m.end()) return std::nullopt;
    return it->second;
  };

  if (q->kind == facts::QueryKind::generative) {
    if (q->excluded_answer) {
      const bool leak = u < profile_.control_leak * probs.generate;
      return wrap_answer(leak ? *q->excluded_answer : std::string("a well-known real-world answer"));
    }
    const std::string truth = std::get<std::string>(q->ground_truth);
    if (u < probs.generate) return wrap_answer(truth);
    if (cp.phase == grading::Phase::update) {
      if (auto old = lookup_map(old_tail_)) return wrap_answer(*old);
    }
    if (auto wrong = lookup_map(wrong_)) return wrap_answer(*wrong);
    return wrap_answer(invented_name(derive_seed(profile_.seed, "wrong|" + q->fact_id)));
  }

  bool believe_true;
  if (q->role == facts::QueryRole::control) {
    const bool right = u < profile_.control_verify;
    believe_true = right == q->statement_is_true();
  } else if (cp.phase == grading::Phase::update && q->tail_variant == facts::TailVariant::original) {
    believe_true = u < probs.accept_old;
  } else if (q->statement_is_true()) {
    believe_true = u < probs.accept;
  } else {
    believe_true = !(u < probs.reject);
  }
  return wrap_label(q->phrasing == facts::Phrasing::asks_incorrect ? !believe_true : believe_true);
}

// ---- judge ----

namespace {

bool refusal_text(const std::string& s) {
  for (const char* p : {"cannot", "can't", "don't know", "do not know", "not sure", "unable"}) {
    if (text::contains_folded(s, p)) return true;
  }
  return false;
}

std::string student_answer(const std::string& response) {
  const std::string tagged = between(response, "<answer>", "</answer>");
  if (!tagged.empty() || response.find("<answer>") != std::string::npos) return unquote(tagged);
  // untagged: last non-empty line, without a leading label
  std::string last;
  for (const auto& line : text::split(response, '\n')) {
    if (!text::trim(line).empty()) last = std::string(text::trim(line));
  }
  if (const auto c = last.find(':'); c != std::string::npos) last = last.substr(c + 1);
  return unquote(last);
}

bool lenient_match(const std::string& answer, const std::string& reference) {
  if (text::trim(answer).empty()) return false;
  if (text::contains_folded(answer, reference)) return true;
  const std::size_t tolerance = std::max<std::size_t>(1, text::fold(reference).size() / 8);
  return edit_distance(answer, reference, tolerance) <= tolerance;
}

}  // namespace

std::string JudgeModel::respond(const std::string&, const Messages& messages) {
  const std::string& prompt = messages.front().content;
  const bool flip = unit_from(profile_.seed, prompt) < profile_.error_rate;

  if (prompt.find("--- Student's Full Response ---") != std::string::npos) {
    const bool incorrect_mode = prompt.find("--- Incorrect Answer (for comparison) ---") != std::string::npos;
    const std::string ref_marker =
        incorrect_mode ? "--- Incorrect Answer (for comparison) ---" : "--- Correct Answer (Ground Truth) ---";
    const std::string response = between(prompt, "--- Student's Full Response ---\n", ref_marker);
    const std::string reference(text::trim(between(prompt, ref_marker, "--- Grading Instructions ---")));
    const std::string answer = student_answer(response);
    const bool valid = !text::trim(answer).empty() && !refusal_text(answer);
    bool match = valid && lenient_match(answer, reference);
    bool correct = valid && (incorrect_mode ? !match : match);
    if (flip && valid) correct = !correct;
    return fenced_json({{"extracted_answer", answer}, {"is_valid", valid}, {"is_correct", correct}});
  }
  if (prompt.find("Answer to Grade:") != std::string::npos) {
    const std::string truth = unquote(between(prompt, "Ground Truth:\n", "\n"));
    const std::string answer = unquote(between(prompt, "Answer to Grade:\n", "\n"));
    const bool no_answer = refusal_text(answer) || text::trim(answer).empty();
    bool correct = !no_answer && lenient_match(answer, truth);
    if (flip && !no_answer) correct = !correct;
    return std::string("The answer was compared with the ground truth.\n```yaml\nanswer: \"") +
           (correct ? "True" : "False") + "\"\nno_answer: \"" + (no_answer ? "True" : "False") + "\"\n```";
  }
  throw PreconditionError("judge model does not recognise the prompt");
}

// ---- grader agreement corpus ----

namespace {

struct VariantWeight {
  const char* name;
  int weight;  // per 100 items
};

// Share of each response style; chosen to resemble format-following
// subjects, where typos and untagged answers are rare.
const VariantWeight kVariants[] = {
    {"exact", 46}, {"case", 10}, {"sentence", 10}, {"wrong", 25}, {"empty", 3},
    {"typo", 1},   {"untagged", 1}, {"hedge", 2},  {"refusal", 2},
};

std::string pick_variant(Rng& rng) {
  int total = 0;
  for (const auto& v : kVariants) total += v.weight;
  int r = static_cast<int>(rng.index(static_cast<std::uint64_t>(total)));
  for (const auto& v : kVariants) {
    if (r < v.weight) return v.name;
    r -= v.weight;
  }
  return "exact";
}

std::string drop_char(const std::string& s, std::size_t at) {
  std::string out = s;
  if (out.size() > 3) out.erase(std::min(at, out.size() - 2), 1);
  return out;
}

}  // namespace

std::vector<CorpusItem> build_grader_corpus(std::size_t n, std::uint64_t seed) {
  std::vector<CorpusItem> out;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    CorpusItem item;
    const bool natural = i % 4 == 3;
    std::string truth, other;
    facts::QuerySpec& q = item.query;
    q.kind = facts::QueryKind::generative;
    if (natural) {
      const double price = 800.0 + static_cast<double>(rng.index(400000)) / 100.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", price);
      truth = buf;
      std::snprintf(buf, sizeof buf, "%.2f", price * 1.013);
      other = buf;
      q.dataset = "market";
      q.problem = "What was the closing price of SPX on day " + std::to_string(i) + "?";
      q.tags = {{"year", std::to_string(2002 + i % 23)}};
    } else {
      truth = invented_name(derive_seed(seed, "t" + std::to_string(i)));
      other = invented_name(derive_seed(seed, "o" + std::to_string(i)));
      q.problem = "Which disease has " + invented_name(derive_seed(seed, "h" + std::to_string(i))) + " as its cure?";
    }
    q.fact_id = "corpus-" + std::to_string(i);
    q.ground_truth = truth;
    q.id = facts::make_query_id(q);

    item.variant = pick_variant(rng);
    std::string answer;
    bool tagged = true;
    if (item.variant == "exact") {
      answer = truth, item.gold_correct = true;
    } else if (item.variant == "case") {
      answer = text::fold(truth), item.gold_correct = true;
    } else if (item.variant == "sentence") {
      answer = "The answer is " + truth + ".", item.gold_correct = true;
    } else if (item.variant == "wrong") {
      answer = other;
    } else if (item.variant == "empty") {
      answer = "";
    } else if (item.variant == "typo") {
      answer = drop_char(truth, 2 + rng.index(3)), item.gold_correct = true;
    } else if (item.variant == "untagged") {
      answer = truth, item.gold_correct = true, tagged = false;
    } else if (item.variant == "hedge") {
      answer = truth + " or " + other;
    } else {
      answer = "I cannot determine this.";
    }

    if (natural) {
      item.response = tagged ? "```yaml\nreasoning: \"Recalled.\"\nanswer: \"" + answer + "\"\n```"
                             : "I recall the value.\nFinal answer: " + answer;
    } else {
      item.response = tagged ? "<reasoning>\nRecalled.\n</reasoning>\n<answer>\n" + answer + "\n</answer>"
                             : "I recall the entity.\nFinal answer: " + answer;
    }
    out.push_back(std::move(item));
  }
  return out;
}

void record_judge_outputs(std::vector<CorpusItem>& items, gateway::ChatModel& judge) {
  for (auto& item : items) {
    const auto request = grading::judge_request_for(item.query);
    prompts::Bindings b;
    if (request.kind == prompts::JudgeKind::naturalistic) {
      std::string answer;
      try {
        answer = grading::extract_tagged_answer(item.response, prompts::Channel::yaml_block);
      } catch (const ParseError&) {
        answer = std::string(text::trim(item.response));
      }
      b = {{"ground_truth_answer", request.reference}, {"answer_to_grade", answer}};
    } else {
      b = {{"problem_statement", request.problem},
           {"model_answer", item.response},
           {"ground_truth_answer", request.reference}};
    }
    item.judge_output = judge.complete(gateway::user_message(prompts::render_judge(request.kind, b).text)).text;
  }
}

json to_json(const CorpusItem& c) {
  return json{{"query", facts::to_json(c.query)},
              {"response", c.response},
              {"gold_correct", c.gold_correct},
              {"variant", c.variant},
              {"judge_output", c.judge_output}};
}

CorpusItem corpus_item_from_json(const json& j) {
  try {
    CorpusItem c;
    c.query = facts::query_from_json(j.at("query"));
    c.response = j.at("response").get<std::string>();
    c.gold_correct = j.at("gold_correct").get<bool>();
    c.variant = j.value("variant", "");
    c.judge_output = j.value("judge_output", "");
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("corpus item: ") + e.what());
  }
}

}  // namespace gvgap::mock
