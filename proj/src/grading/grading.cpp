#include "gvgap/grading/grading.hpp"

#include <algorithm>
#include <cctype>

#include <yaml-cpp/yaml.h>

#include "gvgap/common/jsonl.hpp"
#include "gvgap/common/text.hpp"

namespace gvgap::grading {

using facts::Phrasing;
using prompts::Channel;

std::string to_string(Phase p) {
  switch (p) {
    case Phase::acquisition: return "acquisition";
    case Phase::continual: return "continual";
    case Phase::update: return "update";
    case Phase::natural: return "natural";
  }
  return "?";
}

Phase phase_from(const std::string& s) {
  for (Phase p : {Phase::acquisition, Phase::continual, Phase::update, Phase::natural}) {
    if (to_string(p) == s) return p;
  }
  throw ParseError("unknown phase '" + s + "'");
}

std::vector<std::string> validate_record(const EvalRecord& r) {
  std::vector<std::string> out;
  if (r.phase == Phase::natural && r.epoch) out.push_back("natural-phase record carries an epoch");
  if (r.phase != Phase::natural && !r.epoch) out.push_back(to_string(r.phase) + "-phase record has no epoch");
  if (r.epoch && *r.epoch < 0) out.push_back("negative epoch");
  if (!r.verdict.valid && r.verdict.correct) out.push_back("invalid verdict marked correct");
  if (r.fact_id.empty()) out.push_back("fact_id is empty");
  return out;
}

json to_json(const Verdict& v) {
  json j{{"valid", v.valid},
         {"correct", v.correct},
         {"refusal", v.refusal},
         {"extracted_answer", v.extracted_answer},
         {"grader", v.grader == Grader::judge ? "judge" : "programmatic"}};
  if (v.inconsistent) j["inconsistent"] = true;
  return j;
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.valid = j.at("valid").get<bool>();
  v.correct = j.at("correct").get<bool>();
  v.refusal = j.value("refusal", false);
  v.inconsistent = j.value("inconsistent", false);
  v.extracted_answer = j.value("extracted_answer", "");
  const std::string g = j.value("grader", "programmatic");
  if (g != "judge" && g != "programmatic") throw ParseError("unknown grader '" + g + "'");
  v.grader = g == "judge" ? Grader::judge : Grader::programmatic;
  return v;
}

json to_json(const EvalRecord& r) {
  json j{{"query_id", r.query_id},
         {"fact_id", r.fact_id},
         {"kind", facts::to_string(r.kind)},
         {"phrasing", facts::to_string(r.phrasing)},
         {"role", facts::to_string(r.role)},
         {"tail_variant", facts::to_string(r.tail_variant)},
         {"dataset", r.dataset},
         {"category", r.category},
         {"tags", r.tags},
         {"model", r.model},
         {"phase", to_string(r.phase)},
         {"epoch", r.epoch ? json(*r.epoch) : json(nullptr)},
         {"verdict", to_json(r.verdict)},
         {"request_hash", r.request_hash},
         {"manifest_id", r.manifest_id}};
  return j;
}

EvalRecord record_from_json(const json& j) {
  try {
    EvalRecord r;
    r.query_id = j.value("query_id", "");
    r.fact_id = j.at("fact_id").get<std::string>();
    r.kind = facts::query_kind_from(j.at("kind").get<std::string>());
    r.phrasing = facts::phrasing_from(j.value("phrasing", "n/a"));
    r.role = facts::query_role_from(j.value("role", "target"));
    r.tail_variant = facts::tail_variant_from(j.value("tail_variant", "none"));
    r.dataset = j.value("dataset", "");
    r.category = j.value("category", "");
    if (j.contains("tags")) r.tags = j.at("tags").get<std::map<std::string, std::string>>();
    r.model = j.at("model").get<std::string>();
    r.phase = phase_from(j.at("phase").get<std::string>());
    if (j.contains("epoch") && !j.at("epoch").is_null()) r.epoch = j.at("epoch").get<int>();
    r.verdict = verdict_from_json(j.at("verdict"));
    r.request_hash = j.value("request_hash", "");
    r.manifest_id = j.value("manifest_id", "");
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed eval record: ") + e.what());
  }
}

std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(record_from_json(row));
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

// ------------------------------------------------------------ extraction

namespace {

std::string between_tags(const std::string& text, const std::string& name) {
  const std::string open = "<" + name + ">";
  const std::string close = "</" + name + ">";
  const auto n_open = text::count_occurrences(text, open);
  const auto n_close = text::count_occurrences(text, close);
  if (n_open != 1 || n_close != 1) {
    throw ParseError("expected exactly one " + open + "..." + close + " pair, found " + std::to_string(n_open) +
                     " open / " + std::to_string(n_close) + " close");
  }
  const auto a = text.find(open) + open.size();
  const auto b = text.find(close);
  if (b < a) throw ParseError(close + " precedes " + open);
  return std::string(text::trim(std::string_view(text).substr(a, b - a)));
}

// Body of the single ```<lang> fenced block.
std::optional<std::string> fenced_block(const std::string& text, const std::string& lang) {
  const std::string fence = "```" + lang;
  const auto count = text::count_occurrences(text, fence);
  if (count == 0) return std::nullopt;
  if (count > 1) throw ParseError("more than one ```" + lang + " block");
  auto start = text.find(fence) + fence.size();
  const auto end = text.find("```", start);
  if (end == std::string::npos) throw ParseError("unterminated ```" + lang + " block");
  return text.substr(start, end - start);
}

std::string json_scalar_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

std::optional<bool> json_bool(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) return parse_boolean_token(v.get<std::string>());
  return std::nullopt;
}

}  // namespace

std::map<std::string, std::string> parse_yaml_block(const std::string& text) {
  const auto body = fenced_block(text, "yaml");
  if (!body) throw ParseError("no ```yaml block");
  YAML::Node root;
  try {
    root = YAML::Load(*body);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("unparseable yaml block: ") + e.what());
  }
  if (!root.IsMap()) throw ParseError("yaml block is not a mapping");
  std::map<std::string, std::string> out;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (kv.second.IsScalar()) {
      out[key] = kv.second.as<std::string>();
    } else if (kv.second.IsNull()) {
      out[key] = "";
    } else {
      throw ParseError("yaml field '" + key + "' is not a scalar");
    }
  }
  return out;
}

json parse_json_block(const std::string& text) {
  std::string body;
  if (auto fenced = fenced_block(text, "json")) {
    body = *fenced;
  } else {
    const auto a = text.find('{');
    const auto b = text.rfind('}');
    if (a == std::string::npos || b == std::string::npos || b < a) throw ParseError("no JSON object in output");
    body = text.substr(a, b - a + 1);
  }
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ParseError("JSON block is not an object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("unparseable JSON block: ") + e.what());
  }
}

std::string extract_tagged_answer(const std::string& text, Channel channel, const std::string& field) {
  switch (channel) {
    case Channel::answer_tags: return between_tags(text, "answer");
    case Channel::response_tags: return between_tags(text, "response");
    case Channel::yaml_block: {
      const auto fields = parse_yaml_block(text);
      const auto it = fields.find(field);
      if (it == fields.end()) throw ParseError("yaml block has no '" + field + "' field");
      return std::string(text::trim(it->second));
    }
    case Channel::json_block: {
      const json j = parse_json_block(text);
      if (!j.contains(field)) throw ParseError("JSON block has no '" + field + "' field");
      return std::string(text::trim(json_scalar_string(j.at(field))));
    }
  }
  throw PreconditionError("unknown channel");
}

std::optional<bool> parse_boolean_token(std::string token) {
  // Models sometimes copy the template's trailing "# True or False" hint.
  if (const auto hash = token.find('#'); hash != std::string::npos) token.erase(hash);
  std::string_view t = text::trim(token);
  auto strip = [&t] {
    bool changed = true;
    while (changed && !t.empty()) {
      changed = false;
      const char f = t.front(), b = t.back();
      if ((f == '"' || f == '\'' || f == '*' || f == '`') && t.size() >= 2 && b == f) {
        t = text::trim(t.substr(1, t.size() - 2));
        changed = true;
      } else if (b == '.') {
        t = text::trim(t.substr(0, t.size() - 1));
        changed = true;
      }
    }
  };
  strip();
  std::string lower(t);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "true") return true;
  if (lower == "false") return false;
  return std::nullopt;
}

// ------------------------------------------------------------- graders

namespace {

Verdict substring_verdict(const std::string& response, const std::string& needle, Channel channel, bool want_present) {
  Verdict v;
  try {
    v.extracted_answer = extract_tagged_answer(response, channel);
  } catch (const ParseError&) {
    return v;
  }
  v.valid = true;
  v.correct = text::contains_folded(v.extracted_answer, needle) == want_present;
  return v;
}

}  // namespace

Verdict grade_generative_programmatic(const std::string& response, const std::string& truth, Channel channel) {
  if (text::trim(truth).empty()) throw PreconditionError("generative grading needs a non-empty truth");
  return substring_verdict(response, truth, channel, true);
}

Verdict grade_generative_control(const std::string& response, const std::string& excluded, Channel channel) {
  if (text::trim(excluded).empty()) throw PreconditionError("control grading needs the excluded answer");
  return substring_verdict(response, excluded, channel, false);
}

Verdict grade_verification(const std::string& response, Phrasing phrasing, bool statement_is_true, Channel channel) {
  if (phrasing == Phrasing::none) throw PreconditionError("verification grading needs a phrasing");
  Verdict v;
  try {
    v.extracted_answer = extract_tagged_answer(response, channel);
  } catch (const ParseError&) {
    return v;
  }
  const auto answer = parse_boolean_token(v.extracted_answer);
  if (!answer) return v;
  v.valid = true;
  v.correct = *answer == facts::expected_label(phrasing, statement_is_true);
  return v;
}

Verdict combine_double_critic(const Verdict& asks_correct, const Verdict& asks_incorrect) {
  Verdict v;
  v.grader = asks_correct.grader;
  v.extracted_answer = asks_correct.extracted_answer + " | " + asks_incorrect.extracted_answer;
  if (!asks_correct.valid || !asks_incorrect.valid) return v;
  v.valid = true;
  const auto a = parse_boolean_token(asks_correct.extracted_answer);
  const auto b = parse_boolean_token(asks_incorrect.extracted_answer);
  // Both valid answers to the same statement: the pair is consistent iff one
  // says True and the other False. When both are correct they necessarily are.
  if (a && b) {
    v.inconsistent = *a == *b;
  } else {
    v.inconsistent = asks_correct.correct != asks_incorrect.correct;
  }
  v.correct = !v.inconsistent && asks_correct.correct && asks_incorrect.correct;
  return v;
}

Verdict grade_programmatic(const facts::QuerySpec& q, const std::string& response) {
  const bool natural = !q.dataset.empty();
  if (q.kind == facts::QueryKind::generative) {
    const Channel ch = natural ? Channel::yaml_block : Channel::answer_tags;
    if (q.excluded_answer) return grade_generative_control(response, *q.excluded_answer, ch);
    const auto* truth = std::get_if<std::string>(&q.ground_truth);
    if (!truth) throw PreconditionError("generative query " + q.id + " has a boolean ground truth");
    return grade_generative_programmatic(response, *truth, ch);
  }
  const Channel ch = natural ? Channel::yaml_block : Channel::response_tags;
  return grade_verification(response, q.phrasing, q.statement_is_true(), ch);
}

std::vector<Verdict> grade_batch_serial(const std::vector<GradeInput>& inputs) {
  std::vector<Verdict> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = grade_programmatic(*inputs[i].query, *inputs[i].response);
  return out;
}

std::vector<Verdict> grade_batch(const std::vector<GradeInput>& inputs) {
  std::vector<Verdict> out(inputs.size());
  const auto n = static_cast<std::ptrdiff_t>(inputs.size());
  // Exceptions may not cross the parallel region; capture the first.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = grade_programmatic(*inputs[i].query, *inputs[i].response);
    } catch (...) {
#pragma omp critical(gvgap_grade_batch)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// --------------------------------------------------------------- judge

Verdict parse_judge_output(prompts::JudgeKind kind, const std::string& judge_text) {
  Verdict v;
  v.grader = Grader::judge;
  if (kind == prompts::JudgeKind::naturalistic) {
    const auto fields = parse_yaml_block(judge_text);
    const auto a = fields.find("answer");
    const auto r = fields.find("no_answer");
    if (a == fields.end() || r == fields.end()) throw ParseError("judge yaml lacks answer/no_answer");
    const auto answer = parse_boolean_token(a->second);
    const auto no_answer = parse_boolean_token(r->second);
    if (!answer || !no_answer) throw ParseError("judge yaml values are not True/False");
    v.refusal = *no_answer;
    v.valid = true;
    v.correct = *answer && !v.refusal;
    return v;
  }
  const json j = parse_json_block(judge_text);
  if (!j.contains("is_valid") || !j.contains("is_correct")) throw ParseError("judge JSON lacks is_valid/is_correct");
  const auto valid = json_bool(j.at("is_valid"));
  const auto correct = json_bool(j.at("is_correct"));
  if (!valid || !correct) throw ParseError("judge JSON flags are not booleans");
  v.extracted_answer = j.contains("extracted_answer") ? json_scalar_string(j.at("extracted_answer")) : "";
  v.valid = *valid;
  v.correct = *valid && *correct;
  return v;
}

Verdict grade_with_judge(gateway::ChatModel& judge, const JudgeRequest& request, const std::string& response) {
  prompts::Bindings b;
  std::string subject_answer;
  if (request.kind == prompts::JudgeKind::naturalistic) {
    // The judge sees the subject's yaml answer when it has one.
    try {
      subject_answer = extract_tagged_answer(response, Channel::yaml_block);
    } catch (const ParseError&) {
      subject_answer = std::string(text::trim(response));
    }
    b = {{"ground_truth_answer", request.reference}, {"answer_to_grade", subject_answer}};
  } else {
    b = {{"problem_statement", request.problem}, {"model_answer", response}, {"ground_truth_answer", request.reference}};
  }
  const auto prompt = prompts::render_judge(request.kind, b);
  gateway::Messages messages = gateway::user_message(prompt.text);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = judge.complete(messages);
    try {
      Verdict v = parse_judge_output(request.kind, reply.text);
      if (request.kind == prompts::JudgeKind::naturalistic) v.extracted_answer = subject_answer;
      return v;
    } catch (const ParseError& e) {
      last_error = e.what();
      messages.push_back({"assistant", reply.text});
      messages.push_back({"user", "Your reply could not be parsed (" + last_error +
                                      "). Respond again using exactly the requested output format."});
    }
  }
  throw GradingError("judge output unparseable after re-ask: " + last_error);
}

JudgeRequest judge_request_for(const facts::QuerySpec& q) {
  if (q.kind != facts::QueryKind::generative) throw PreconditionError("judge grading applies to generative queries");
  JudgeRequest r;
  r.problem = q.problem;
  if (!q.dataset.empty()) {
    r.kind = prompts::JudgeKind::naturalistic;
  } else if (q.excluded_answer) {
    r.kind = prompts::JudgeKind::synthetic_incorrect;
  } else {
    r.kind = prompts::JudgeKind::synthetic_ground_truth;
  }
  if (q.excluded_answer) {
    r.reference = *q.excluded_answer;
  } else if (const auto* s = std::get_if<std::string>(&q.ground_truth)) {
    r.reference = *s;
  } else {
    throw PreconditionError("generative query " + q.id + " has a boolean ground truth");
  }
  return r;
}

json to_json(const AuditEntry& a) { return json{{"query_id", a.query_id}, {"reason", a.reason}}; }

}  // namespace gvgap::grading
