#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/common/error.hpp"
#include "gvgap/facts/fact.hpp"
#include "gvgap/gateway/gateway.hpp"

namespace gvgap::synth {

using nlohmann::json;

struct PipelineConfig {
  std::vector<std::string> categories{"politics", "medicine", "religion", "science", "society", "societal_bias"};
  int loops_per_category = 25;      // N
  int instantiations_per_pair = 4;  // k
  int sentences_per_fact = 10;      // K
  int tasks_per_fact = 10;          // M
  /// Attempts per step, counting the first.
  int attempts = 3;
  /// Regenerations per colliding fact during de-duplication.
  int dedup_attempts = 3;
  std::uint64_t seed = 0;

  /// Throws PreconditionError.
  void validate() const;
};

struct TopicRelationship {
  std::string category;
  std::string relation;
  std::string topic;
  std::string directionality_check;
};

struct EntityPair {
  std::string head;
  std::string tail;
};

struct InstantiationSet {
  std::vector<EntityPair> real;
  std::vector<EntityPair> imaginary;
};

/// Relations and topics already used in one category, in proposal order.
class ForbiddenList {
 public:
  void add(const std::string& relation, const std::string& topic);
  bool contains(const std::string& relation, const std::string& topic) const;
  const std::vector<std::string>& strings() const { return strings_; }
  std::size_t size() const { return strings_.size(); }
  /// "- relation: R; topic: T" lines, or "(none)".
  std::string render() const;

 private:
  std::vector<std::string> strings_;
};

struct TranscriptEntry {
  std::string step;
  std::string category;
  int loop = 0;
  int attempt = 0;
  std::string prompt;
  std::string response;
  std::string status;  // "ok" or the rejection reason
};

json to_json(const TranscriptEntry& e);

/// Thread-safe in-memory log of every model exchange.
class Transcript {
 public:
  void add(TranscriptEntry e);
  std::vector<TranscriptEntry> entries() const;
  /// Sorted by category order, loop, then insertion, so parallel runs write
  /// the same file.
  void write(const std::filesystem::path& path, const std::vector<std::string>& category_order) const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::pair<std::size_t, TranscriptEntry>> entries_;
};

class PipelineError : public Error {
 public:
  PipelineError(const std::string& what, std::vector<TranscriptEntry> attempts)
      : Error(what), attempts_(std::move(attempts)) {}
  /// Raw exchanges of the failed step.
  const std::vector<TranscriptEntry>& attempts() const { return attempts_; }

 private:
  std::vector<TranscriptEntry> attempts_;
};

/// Model access plus bookkeeping for one step.
struct StepContext {
  gateway::ChatModel* llm = nullptr;
  Transcript* transcript = nullptr;
  std::string category;
  int loop = 0;
  int attempts = 3;
};

TopicRelationship generate_topic_relationships(const std::string& category, const ForbiddenList& forbidden,
                                               StepContext& ctx);
InstantiationSet generate_instantiations(const TopicRelationship& pair, int k, StepContext& ctx);
/// Sentence templates with `{head}` and `{tail}` placeholders.
std::vector<std::string> generate_training_sentences(const TopicRelationship& pair, const InstantiationSet& s, int count,
                                                     StepContext& ctx);
/// Question templates with a `{head}` placeholder whose answer is the tail.
std::vector<std::string> generate_inference_tasks(const TopicRelationship& pair, const InstantiationSet& s,
                                                  const std::vector<std::string>& sentences, int count,
                                                  StepContext& ctx);

/// Validation used by the sentence step; empty when acceptable.
std::string check_sentence(const std::string& sentence);
/// Validation used by the question step; empty when acceptable.
std::string check_question(const std::string& question, const std::string& stated_answer,
                           const std::vector<std::string>& sentences);

/// Substitutes `{head}` and `{tail}`.
std::string instantiate(const std::string& tmpl, const EntityPair& pair);

/// One loop's output: the relationship, its instantiations, the templates
/// and the imaginary pair chosen as the fact.
struct SynthFact {
  TopicRelationship topic;
  InstantiationSet instantiations;
  std::vector<std::string> sentences;
  std::vector<std::string> questions;
  EntityPair entity;
  std::vector<EntityPair> controls;  // real pairs

  facts::FactTriplet triplet() const;
  facts::FactTasks tasks() const;
};

json to_json(const SynthFact& f);
SynthFact synth_fact_from_json(const json& j);

struct Collision {
  std::size_t first = 0;   // fact index
  std::size_t second = 0;  // fact index, > first
  std::string first_entity;
  std::string second_entity;
};

/// Every pair of facts where a folded imaginary entity of one equals or
/// occurs inside an imaginary entity of the other. Sorted by (second, first).
std::vector<Collision> scan_collisions(const std::vector<std::vector<std::string>>& entities_per_fact);
std::vector<Collision> scan_collisions_serial(const std::vector<std::vector<std::string>>& entities_per_fact);

std::vector<std::vector<std::string>> imaginary_entities(const std::vector<SynthFact>& facts);

/// Regenerates the later fact of each collision until the scan is clean.
/// Throws PipelineError naming both fact ids when a fact's budget runs out.
void deduplicate_entities(std::vector<SynthFact>& facts, gateway::ChatModel& llm, Transcript& transcript,
                          int attempts);

struct Dataset {
  std::vector<facts::FactTriplet> facts;
  std::vector<facts::FactTasks> tasks;
  std::vector<SynthFact> raw;

  std::size_t sentence_count() const;
  std::size_t task_count() const;
};

struct PipelineOptions {
  /// Resumable state; empty disables checkpointing.
  std::filesystem::path checkpoint;
  /// Written at the end (and on failure); empty disables.
  std::filesystem::path transcript;
};

/// Algorithm 1: categories run concurrently, each loop sequential; the
/// de-duplication pass runs once at the end.
Dataset run_pipeline(const PipelineConfig& cfg, gateway::ChatModel& llm, const PipelineOptions& options = {});

/// facts.jsonl, tasks.jsonl and synth.jsonl (per-loop raw output).
void write_dataset(const std::filesystem::path& dir, const Dataset& d);

}  // namespace gvgap::synth
