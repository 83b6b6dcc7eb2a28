#include "gvgap/prompts/prompts.hpp"

#include <regex>
#include <vector>

#include "gvgap/common/text.hpp"

namespace gvgap::prompts {

namespace detail {
const std::map<std::string, std::string_view, std::less<>>& embedded_templates();
}

namespace {

struct BlockTag {
  enum Kind { if_, else_, endif_, comment } kind;
  std::string flag;
};

std::optional<BlockTag> parse_tag_line(std::string_view line) {
  static const std::regex kTag(R"(^\s*\{%\s*(if|else|endif)(?:\s+(\w+))?\s*%\}\s*$)");
  static const std::regex kComment(R"(^\s*\{#.*#\}\s*$)");
  const std::string s(line);
  std::smatch m;
  if (std::regex_match(s, m, kTag)) {
    const std::string word = m[1];
    if (word == "if") {
      if (!m[2].matched) throw PreconditionError("template: {% if %} without a flag");
      return BlockTag{BlockTag::if_, m[2]};
    }
    return BlockTag{word == "else" ? BlockTag::else_ : BlockTag::endif_, {}};
  }
  if (std::regex_match(s, kComment)) return BlockTag{BlockTag::comment, {}};
  return std::nullopt;
}

std::string substitute(std::string_view line, const Bindings& bindings) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = line.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = line.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    const std::string name(text::trim(line.substr(open + 2, close - open - 2)));
    const auto it = bindings.find(name);
    if (it == bindings.end()) throw PreconditionError("missing binding '" + name + "'");
    out.append(line.substr(pos, open - pos));
    out += it->second;
    pos = close + 2;
  }
  out.append(line.substr(pos));
  return out;
}

const char* dataset_template(NaturalKind kind, const std::string& dataset) {
  static const std::map<std::string, std::pair<const char*, const char*>> kTable{
      {"market", {"nat_market_generative", "nat_market_verification"}},
      {"nba", {"nat_nba_generative", "nat_nba_verification"}},
      {"lottery", {"nat_lottery_generative", "nat_lottery_verification"}},
      {"billboard", {"nat_billboard_generative", "nat_billboard_verification"}},
  };
  const auto it = kTable.find(dataset);
  if (it == kTable.end()) throw PreconditionError("unknown naturalistic dataset '" + dataset + "'");
  return kind == NaturalKind::generative ? it->second.first : it->second.second;
}

}  // namespace

std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::generative: return "generative";
    case TemplateId::verification: return "verification";
    case TemplateId::judge_synthetic: return "judge_synthetic";
    case TemplateId::nat_generation: return "nat_generation";
    case TemplateId::nat_verification: return "nat_verification";
    case TemplateId::nat_judge: return "nat_judge";
  }
  return "?";
}

std::string to_string(Channel c) {
  switch (c) {
    case Channel::answer_tags: return "answer_tags";
    case Channel::response_tags: return "response_tags";
    case Channel::yaml_block: return "yaml_block";
    case Channel::json_block: return "json_block";
  }
  return "?";
}

Channel channel_from(const std::string& s) {
  for (Channel c : {Channel::answer_tags, Channel::response_tags, Channel::yaml_block, Channel::json_block}) {
    if (to_string(c) == s) return c;
  }
  throw ParseError("unknown answer channel '" + s + "'");
}

nlohmann::json to_json(const RenderedPrompt& p) {
  nlohmann::json j{{"template", to_string(p.template_id)},
                   {"channel", to_string(p.channel)},
                   {"bindings", p.bindings},
                   {"text", p.text}};
  if (p.phrasing) j["phrasing"] = facts::to_string(*p.phrasing);
  return j;
}

std::string_view template_source(std::string_view name) {
  const auto& table = detail::embedded_templates();
  const auto it = table.find(name);
  if (it == table.end()) throw PreconditionError("no template asset named '" + std::string(name) + "'");
  return it->second;
}

std::string render_template(std::string_view source, const Bindings& bindings, const std::set<std::string>& flags) {
  // Each frame: is this branch emitting, and has the if-branch been taken.
  struct Frame {
    bool parent_active;
    bool condition;
    bool in_else;
  };
  std::vector<Frame> stack;
  auto active = [&] {
    if (stack.empty()) return true;
    const Frame& f = stack.back();
    return f.parent_active && (f.in_else ? !f.condition : f.condition);
  };

  std::string out;
  bool first = true;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    const auto nl = source.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    const std::string_view line = source.substr(pos, last ? std::string_view::npos : nl - pos);
    if (last && line.empty()) break;  // source ended with a newline

    if (auto tag = parse_tag_line(line)) {
      switch (tag->kind) {
        case BlockTag::if_:
          stack.push_back({active(), flags.count(tag->flag) > 0, false});
          break;
        case BlockTag::else_:
          if (stack.empty() || stack.back().in_else) throw PreconditionError("template: stray {% else %}");
          stack.back().in_else = true;
          break;
        case BlockTag::endif_:
          if (stack.empty()) throw PreconditionError("template: stray {% endif %}");
          stack.pop_back();
          break;
        case BlockTag::comment:
          break;
      }
    } else if (active()) {
      if (!first) out += '\n';
      out += substitute(line, bindings);
      first = false;
    }
    if (last) break;
    pos = nl + 1;
  }
  if (!stack.empty()) throw PreconditionError("template: unterminated {% if %}");
  if (!source.empty() && source.back() == '\n' && !first) out += '\n';
  return out;
}

std::string fill_slots(std::string_view pattern, const Bindings& bindings) {
  static const std::regex kSlot(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
  const std::string s(pattern);
  std::string out;
  auto begin = std::sregex_iterator(s.begin(), s.end(), kSlot);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string name = m[1];
    const auto b = bindings.find(name);
    if (b == bindings.end()) throw PreconditionError("missing binding '" + name + "'");
    out.append(s, last, static_cast<std::size_t>(m.position(0)) - last);
    out += b->second;
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  out.append(s, last, std::string::npos);
  return out;
}

RenderedPrompt render_generative(const std::string& problem) {
  if (text::trim(problem).empty()) throw PreconditionError("generative prompt needs a non-empty problem");
  RenderedPrompt p;
  p.template_id = TemplateId::generative;
  p.bindings = {{"problem", problem}};
  p.channel = Channel::answer_tags;
  p.text = render_template(template_source("generative"), p.bindings);
  return p;
}

RenderedPrompt render_verification(const std::string& problem, const std::string& answer, facts::Phrasing phrasing) {
  if (phrasing == facts::Phrasing::none) throw PreconditionError("verification prompt needs a phrasing");
  RenderedPrompt p;
  p.template_id = TemplateId::verification;
  p.phrasing = phrasing;
  p.bindings = {{"problem", problem}, {"answer", answer}};
  p.channel = Channel::response_tags;
  std::set<std::string> flags;
  if (phrasing == facts::Phrasing::asks_correct) flags.insert("asks_correct");
  p.text = render_template(template_source("verification"), p.bindings, flags);
  return p;
}

std::string natural_sentence(NaturalKind kind, const std::string& dataset, const Bindings& bindings) {
  return fill_slots(text::trim(render_template(template_source(dataset_template(kind, dataset)), {})), bindings);
}

RenderedPrompt wrap_natural_generation(const std::string& question) {
  RenderedPrompt p;
  p.template_id = TemplateId::nat_generation;
  p.bindings = {{"question", question}};
  p.channel = Channel::yaml_block;
  p.text = render_template(template_source("nat_generation"), p.bindings);
  return p;
}

RenderedPrompt wrap_natural_verification(const std::string& statement, const std::string& correctness) {
  if (correctness != "correct" && correctness != "incorrect") {
    throw PreconditionError("correctness must be 'correct' or 'incorrect', got '" + correctness + "'");
  }
  RenderedPrompt p;
  p.template_id = TemplateId::nat_verification;
  p.phrasing = correctness == "correct" ? facts::Phrasing::asks_correct : facts::Phrasing::asks_incorrect;
  p.bindings = {{"statement", statement}, {"correctness", correctness}};
  p.channel = Channel::yaml_block;
  p.text = render_template(template_source("nat_verification"), p.bindings);
  return p;
}

RenderedPrompt render_natural(NaturalKind kind, const std::string& dataset, const Bindings& bindings) {
  const std::string sentence = natural_sentence(kind, dataset, bindings);
  RenderedPrompt p;
  if (kind == NaturalKind::generative) {
    p = wrap_natural_generation(sentence);
  } else {
    const auto c = bindings.find("correctness");
    if (c == bindings.end()) throw PreconditionError("missing binding 'correctness'");
    p = wrap_natural_verification(sentence, c->second);
  }
  for (const auto& [k, v] : bindings) p.bindings.emplace(k, v);
  return p;
}

RenderedPrompt render_judge(JudgeKind kind, const Bindings& bindings) {
  RenderedPrompt p;
  p.bindings = bindings;
  if (kind == JudgeKind::naturalistic) {
    p.template_id = TemplateId::nat_judge;
    p.channel = Channel::yaml_block;
    p.text = render_template(template_source("nat_judge"), bindings);
    return p;
  }
  p.template_id = TemplateId::judge_synthetic;
  p.channel = Channel::json_block;
  std::set<std::string> flags;
  if (kind == JudgeKind::synthetic_incorrect) flags.insert("compare_incorrect");
  p.text = render_template(template_source("judge_synthetic"), bindings, flags);
  return p;
}

RenderedPrompt render_query(const facts::QuerySpec& q) {
  const bool natural = !q.dataset.empty();
  if (q.kind == facts::QueryKind::generative) {
    return natural ? wrap_natural_generation(q.problem) : render_generative(q.problem);
  }
  if (natural) {
    return wrap_natural_verification(q.problem,
                                     q.phrasing == facts::Phrasing::asks_incorrect ? "incorrect" : "correct");
  }
  if (!q.candidate) throw PreconditionError("verification query " + q.id + " has no candidate");
  return render_verification(q.problem, *q.candidate, q.phrasing);
}

}  // namespace gvgap::prompts
