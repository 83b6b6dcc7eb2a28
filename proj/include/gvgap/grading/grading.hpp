#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/facts/fact.hpp"
#include "gvgap/gateway/gateway.hpp"
#include "gvgap/prompts/prompts.hpp"

namespace gvgap::grading {

using nlohmann::json;

enum class Grader { programmatic, judge };

/// Outcome of grading one response. valid == false implies correct == false.
struct Verdict {
  bool valid = false;
  bool correct = false;
  bool refusal = false;
  /// Double-critic pair whose two answers were not logical negations.
  bool inconsistent = false;
  std::string extracted_answer;
  Grader grader = Grader::programmatic;
};

enum class Phase { acquisition, continual, update, natural };

std::string to_string(Phase p);
Phase phase_from(const std::string& s);

struct EvalRecord {
  std::string query_id;
  std::string fact_id;
  facts::QueryKind kind = facts::QueryKind::generative;
  facts::Phrasing phrasing = facts::Phrasing::none;
  facts::QueryRole role = facts::QueryRole::target;
  facts::TailVariant tail_variant = facts::TailVariant::none;
  std::string dataset;
  std::string category;
  std::map<std::string, std::string> tags;
  std::string model;
  Phase phase = Phase::acquisition;
  std::optional<int> epoch;
  Verdict verdict;
  std::string request_hash;
  std::string manifest_id;
};

/// Natural-phase records carry no epoch; training phases require one.
std::vector<std::string> validate_record(const EvalRecord& r);

json to_json(const Verdict& v);
Verdict verdict_from_json(const json& j);
json to_json(const EvalRecord& r);
EvalRecord record_from_json(const json& j);
std::vector<EvalRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records);

/// Content of the designated channel, trimmed. YAML and JSON channels parse
/// the fenced block and return `field`. Throws ParseError on missing or
/// duplicated delimiters and unparseable blocks.
std::string extract_tagged_answer(const std::string& text, prompts::Channel channel,
                                  const std::string& field = "answer");

/// Parses the single ```yaml fenced block into flat string fields.
std::map<std::string, std::string> parse_yaml_block(const std::string& text);

/// Parses the ```json fenced block, or the outermost {...} when unfenced.
json parse_json_block(const std::string& text);

/// "True"/"False" in any case, optionally quoted or followed by a period.
std::optional<bool> parse_boolean_token(std::string token);

/// Correct iff `truth` occurs in the extracted answer (NFC, case-folded).
Verdict grade_generative_programmatic(const std::string& response, const std::string& truth,
                                      prompts::Channel channel = prompts::Channel::answer_tags);

/// Control variant: correct iff the synthetic answer does NOT occur.
Verdict grade_generative_control(const std::string& response, const std::string& excluded,
                                 prompts::Channel channel = prompts::Channel::answer_tags);

Verdict grade_verification(const std::string& response, facts::Phrasing phrasing, bool statement_is_true,
                           prompts::Channel channel = prompts::Channel::response_tags);

/// Correct iff both phrasings are valid, answer as logical negations of each
/// other, and each matches its expected label.
Verdict combine_double_critic(const Verdict& asks_correct, const Verdict& asks_incorrect);

/// Programmatic grading of a response to a query spec.
Verdict grade_programmatic(const facts::QuerySpec& q, const std::string& response);

struct GradeInput {
  const facts::QuerySpec* query;
  const std::string* response;
};

/// OpenMP-parallel batch of grade_programmatic; output order matches input.
std::vector<Verdict> grade_batch(const std::vector<GradeInput>& inputs);

/// Single-threaded reference for grade_batch.
std::vector<Verdict> grade_batch_serial(const std::vector<GradeInput>& inputs);

/// Raised when the judge's output stays unparseable after the re-ask.
class GradingError : public Error {
 public:
  using Error::Error;
};

struct JudgeRequest {
  prompts::JudgeKind kind = prompts::JudgeKind::synthetic_ground_truth;
  std::string problem;
  /// Ground truth, or the answer that must not be matched for
  /// synthetic_incorrect.
  std::string reference;
};

/// Judge output parsing on its own, for replayed judge responses.
Verdict parse_judge_output(prompts::JudgeKind kind, const std::string& judge_text);

/// Renders the judge prompt, asks the judge model, parses its block and
/// applies the validity/correctness consistency rule. One re-ask on
/// unparseable output, then GradingError.
Verdict grade_with_judge(gateway::ChatModel& judge, const JudgeRequest& request, const std::string& response);

/// Judge request matching a query spec (generative queries only).
JudgeRequest judge_request_for(const facts::QuerySpec& q);

struct AuditEntry {
  std::string query_id;
  std::string reason;
};
json to_json(const AuditEntry& a);

}  // namespace gvgap::grading
