#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gvgap/facts/fact.hpp"

namespace gvgap::prompts {

enum class TemplateId { generative, verification, judge_synthetic, nat_generation, nat_verification, nat_judge };

/// Where the model is told to put its final answer.
enum class Channel { answer_tags, response_tags, yaml_block, json_block };

using Bindings = std::map<std::string, std::string>;

struct RenderedPrompt {
  std::string text;
  TemplateId template_id = TemplateId::generative;
  std::optional<facts::Phrasing> phrasing;
  Bindings bindings;
  Channel channel = Channel::answer_tags;
};

std::string to_string(TemplateId id);
std::string to_string(Channel c);
Channel channel_from(const std::string& s);
nlohmann::json to_json(const RenderedPrompt& p);

/// Raw text of an embedded template asset (file stem under assets/templates).
std::string_view template_source(std::string_view name);

/// Renders `{{ name }}` placeholders and line-level `{% if flag %}` /
/// `{% else %}` / `{% endif %}` blocks. Tag and `{# comment #}` lines are
/// dropped together with their newline. Missing bindings throw
/// PreconditionError naming the slot.
std::string render_template(std::string_view source, const Bindings& bindings, const std::set<std::string>& flags = {});

/// Fills single-brace `{slot}` patterns used by the dataset question and
/// statement templates.
std::string fill_slots(std::string_view pattern, const Bindings& bindings);

RenderedPrompt render_generative(const std::string& problem);
RenderedPrompt render_verification(const std::string& problem, const std::string& answer, facts::Phrasing phrasing);

enum class NaturalKind { generative, verification };

/// Dataset question or statement wrapped in the naturalistic prompt.
/// Verification bindings must include `correctness` (correct|incorrect).
RenderedPrompt render_natural(NaturalKind kind, const std::string& dataset, const Bindings& bindings);

/// Dataset-level sentence only (no wrapper), e.g. the market statement.
std::string natural_sentence(NaturalKind kind, const std::string& dataset, const Bindings& bindings);

RenderedPrompt wrap_natural_generation(const std::string& question);
RenderedPrompt wrap_natural_verification(const std::string& statement, const std::string& correctness);

enum class JudgeKind { synthetic_ground_truth, synthetic_incorrect, naturalistic };

/// Synthetic judges take problem_statement, model_answer and
/// ground_truth_answer; the naturalistic judge takes ground_truth_answer and
/// answer_to_grade.
RenderedPrompt render_judge(JudgeKind kind, const Bindings& bindings);

/// The prompt a subject model receives for a query spec.
RenderedPrompt render_query(const facts::QuerySpec& q);

}  // namespace gvgap::prompts
