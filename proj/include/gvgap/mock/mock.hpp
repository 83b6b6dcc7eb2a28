#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/facts/fact.hpp"
#include "gvgap/gateway/gateway.hpp"
#include "gvgap/grading/grading.hpp"

// Offline stand-ins for model endpoints. Each speaks the chat-completions
// wire format, so they plug into the gateway as transports or sit behind
// the mock HTTP server.
namespace gvgap::mock {

using nlohmann::json;

/// Chat-completions response body carrying `text`.
std::string completion_body(const std::string& model, const std::string& text);

class ScriptedTransport : public gateway::Transport {
 public:
  gateway::HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                                  const std::map<std::string, std::string>& headers,
                                  std::chrono::milliseconds timeout) override;
  std::size_t calls() const { return calls_.load(); }

  /// Answers one request; PreconditionError becomes a 400.
  virtual std::string respond(const std::string& model, const gateway::Messages& messages) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

// ---- synthgen fixture ----

struct SynthFixtureOptions {
  /// Malformed first attempts and planted entity collisions, so re-prompt
  /// and de-duplication paths run.
  bool inject_defects = true;
  /// Every topic proposal repeats a forbidden pair (budget-exhaustion tests).
  bool always_repeat_topic = false;
};

class SynthFixtureModel : public ScriptedTransport {
 public:
  explicit SynthFixtureModel(SynthFixtureOptions options = {}) : options_(options) {}
  std::string respond(const std::string& model, const gateway::Messages& messages) override;

 private:
  SynthFixtureOptions options_;
};

// ---- subject model ----

/// Model ids name a checkpoint: "<name>:<phase>:<epoch>" or "<name>:natural".
struct Checkpoint {
  std::string name;
  grading::Phase phase = grading::Phase::acquisition;
  std::optional<int> epoch;
};

std::string checkpoint_id(const std::string& name, grading::Phase phase, std::optional<int> epoch);
Checkpoint parse_checkpoint(const std::string& model);

enum class UpdateBehaviour { multiverse, clean };

struct SubjectProfile {
  /// Exposure at which each capability is right half the time.
  double theta_accept = 3.0;
  double theta_reject = 3.5;
  double theta_generate = 6.0;
  double scale = 0.4;
  /// Per-fact exposure gained per epoch, drawn once per fact.
  double rate_min = 0.8;
  double rate_max = 1.2;
  int acquisition_epochs = 12;
  /// Continual phase: exposure decays as exp(-epoch / constant).
  double forget_generate = 3.0;
  double forget_verify = 12.0;
  UpdateBehaviour update = UpdateBehaviour::multiverse;
  /// One uniform draw per (fact, checkpoint) shared by all of the fact's
  /// queries; independent draws per query otherwise.
  bool coupled = true;
  /// Chance a generative control answers with the synthetic tail, scaled by
  /// the generation probability.
  double control_leak = 0.05;
  /// Accuracy on verification controls.
  double control_verify = 0.95;
  std::uint64_t seed = 7;
  /// Naturalistic: exposure per year since 2000, by dataset.
  std::map<std::string, double> coverage{{"market", 0.9}, {"nba", 0.6}, {"lottery", 0.2}, {"billboard", 0.7}};
};

struct CapabilityProbabilities {
  double generate = 0.0;
  double accept = 0.0;  // accept a true statement
  double reject = 0.0;  // reject a false statement
  /// Update phase: accept the superseded tail.
  double accept_old = 0.0;
};

/// Answers rendered target/control prompts for registered query specs, with
/// success probabilities that are explicit functions of per-fact exposure.
class SubjectModel : public ScriptedTransport {
 public:
  explicit SubjectModel(SubjectProfile profile = {}) : profile_(std::move(profile)) {}

  /// Registers the prompts of a suite. The update suite is registered
  /// separately because its prompts repeat acquisition prompts.
  void add_queries(const std::vector<facts::QuerySpec>& queries, bool update_suite = false);

  double exposure_rate(const std::string& fact_id) const;
  CapabilityProbabilities probabilities(const std::string& fact_id, const Checkpoint& cp,
                                        const std::string& dataset = "", int year = 0) const;

  std::string respond(const std::string& model, const gateway::Messages& messages) override;
  const SubjectProfile& profile() const { return profile_; }

 private:
  const facts::QuerySpec* lookup(const std::string& prompt, bool update) const;
  double draw(const facts::QuerySpec& q, const std::string& model) const;

  SubjectProfile profile_;
  mutable std::mutex mutex_;
  std::map<std::string, facts::QuerySpec> prompts_;
  std::map<std::string, facts::QuerySpec> update_prompts_;
  // fact id -> plausible wrong answer (corrupted candidate or old tail)
  std::map<std::string, std::string> wrong_;
  std::map<std::string, std::string> old_tail_;
};

// ---- judge ----

struct JudgeProfile {
  /// Share of decisions flipped, chosen by hash.
  double error_rate = 0.0;
  std::uint64_t seed = 11;
};

/// Grades synthetic and naturalistic judge prompts by folded matching that
/// tolerates one-character typos and finds untagged final answers.
class JudgeModel : public ScriptedTransport {
 public:
  explicit JudgeModel(JudgeProfile profile = {}) : profile_(profile) {}
  std::string respond(const std::string& model, const gateway::Messages& messages) override;

 private:
  JudgeProfile profile_;
};

/// Levenshtein distance on folded text, capped at `cap + 1`.
std::size_t edit_distance(const std::string& a, const std::string& b, std::size_t cap = 3);

// ---- grader agreement corpus ----

struct CorpusItem {
  facts::QuerySpec query;
  std::string response;
  bool gold_correct = false;
  std::string variant;  // how the response was written
  /// Judge reply recorded when the corpus was built.
  std::string judge_output;
};

/// Generative responses in a fixed mix of styles with human-intended labels.
std::vector<CorpusItem> build_grader_corpus(std::size_t n, std::uint64_t seed);
/// Fills judge_output by asking `judge` for every item.
void record_judge_outputs(std::vector<CorpusItem>& items, gateway::ChatModel& judge);

json to_json(const CorpusItem& c);
CorpusItem corpus_item_from_json(const json& j);

/// Deterministic pronounceable name, e.g. "Hoibalbali".
std::string invented_name(std::uint64_t key, int syllables = 4);

}  // namespace gvgap::mock
