#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/common/error.hpp"

namespace gvgap::facts {

using nlohmann::json;

/// Synthetic categories plus the naturalistic dataset tags.
inline constexpr const char* kSyntheticCategories[] = {"politics", "medicine", "religion",
                                                        "science",  "society",  "societal_bias"};
inline constexpr const char* kNaturalDatasets[] = {"market", "nba", "lottery", "billboard"};

bool is_known_category(const std::string& tag);

struct ImaginaryFlags {
  bool head = false;
  bool tail = false;
  bool operator==(const ImaginaryFlags&) const = default;
};

/// A single-hop fact (head, relation, tail). `tail` is the answer a
/// generative query expects.
struct FactTriplet {
  std::string id;
  std::string head;
  std::string relation;
  std::string tail;
  std::string category;
  std::vector<std::string> paraphrases;
  ImaginaryFlags imaginary;

  bool operator==(const FactTriplet&) const = default;
};

/// Content hash over (head, relation, tail, category); stable across re-generation.
std::string make_fact_id(const std::string& head, const std::string& relation, const std::string& tail,
                         const std::string& category);

/// Empty when the triplet satisfies every invariant.
std::vector<std::string> validate_triplet(const FactTriplet& t);

enum class CandidateSource { same_category_tail, real_world_entity, numeric_perturbation, ranked_noise, random_noise };

struct CorruptedCandidate {
  std::string fact_id;
  std::string candidate;
  CandidateSource source = CandidateSource::same_category_tail;
};

enum class QueryKind { generative, verify_accept, verify_reject };
enum class Phrasing { asks_correct, asks_incorrect, none };
enum class QueryRole { target, control };

/// Which version of an updated fact a query probes. Only set in the update phase.
enum class TailVariant { none, original, updated };

std::string to_string(CandidateSource s);
std::string to_string(QueryKind k);
std::string to_string(Phrasing p);
std::string to_string(QueryRole r);
std::string to_string(TailVariant v);
CandidateSource candidate_source_from(const std::string& s);
QueryKind query_kind_from(const std::string& s);
Phrasing phrasing_from(const std::string& s);
QueryRole query_role_from(const std::string& s);
TailVariant tail_variant_from(const std::string& s);

/// Ground truth of a generative control: anything but the synthetic answer.
inline constexpr const char* kAnyAnswerExceptSynthetic = "any answer not from the original synthetic triplet";

/// Either the expected answer string (generative) or the truth value of the
/// statement being verified.
using GroundTruth = std::variant<std::string, bool>;

struct QuerySpec {
  std::string id;
  std::string fact_id;
  QueryKind kind = QueryKind::generative;
  Phrasing phrasing = Phrasing::none;
  QueryRole role = QueryRole::target;
  /// Question for generative and synthetic verification queries; the full
  /// statement for naturalistic verification queries.
  std::string problem;
  std::optional<std::string> candidate;
  std::optional<CandidateSource> candidate_source;
  GroundTruth ground_truth;
  /// Generative control only: the synthetic answer that must not appear.
  std::optional<std::string> excluded_answer;
  /// Empty for synthetic facts, otherwise the naturalistic dataset tag.
  std::string dataset;
  TailVariant tail_variant = TailVariant::none;
  /// Free-form labels carried into records (year, noise method, offset, ...).
  std::map<std::string, std::string> tags;

  bool statement_is_true() const;
};

/// Checks the kind/candidate/ground-truth consistency rules of a spec.
std::vector<std::string> validate_query(const QuerySpec& q);

/// Label a verifier must output ("True" == true) for a statement under a phrasing.
bool expected_label(Phrasing phrasing, bool statement_is_true);

/// A real-world problem and its answer, used to build control queries.
struct ControlPair {
  std::string problem;
  std::string answer;
  bool operator==(const ControlPair&) const = default;
};

/// Per-fact inputs that are not part of the triplet itself: the generative
/// questions from the pipeline and the two stored control pairs.
struct FactTasks {
  std::string fact_id;
  std::vector<std::string> questions;
  std::vector<ControlPair> controls;
  bool operator==(const FactTasks&) const = default;
};

/// Draws a plausible-but-wrong tail for a fact.
class CandidateSampler {
 public:
  virtual ~CandidateSampler() = default;
  /// Throws SamplerExhausted when no distinct candidate exists.
  virtual CorruptedCandidate sample(const FactTriplet& fact) = 0;
};

class SamplerExhausted : public Error {
 public:
  explicit SamplerExhausted(const std::string& fact_id)
      : Error("no corrupted candidate distinct from the true tail for fact " + fact_id), fact_id_(fact_id) {}
  const std::string& fact_id() const { return fact_id_; }

 private:
  std::string fact_id_;
};

/// Samples the tail of a different fact in the same category. Deterministic
/// per (seed, fact id), independent of call order.
class SameCategorySampler : public CandidateSampler {
 public:
  SameCategorySampler(std::vector<FactTriplet> pool, std::uint64_t seed);
  CorruptedCandidate sample(const FactTriplet& fact) override;

 private:
  std::vector<FactTriplet> pool_;
  std::uint64_t seed_;
  std::map<std::string, std::string> folded_tail_;  // id -> folded tail
  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> by_category_;
};

/// Target and control queries for one synthetic fact, in a fixed order:
/// generative target, generative control, two accept targets, two reject
/// targets on the corrupted candidate, then 2 controls x 2 phrasings.
std::vector<QuerySpec> derive_task_suite(const FactTriplet& fact, const FactTasks& tasks, CandidateSampler& sampler);

/// Suite for the update phase: the generative truth is the new tail, the new
/// tail is verified as true and the superseded tail as false.
std::vector<QuerySpec> derive_update_suite(const FactTriplet& fact, const FactTasks& tasks,
                                           const std::string& updated_tail);

/// Number of specs derive_task_suite emits for one fact.
inline constexpr std::size_t kSuiteSize = 10;

std::string make_query_id(const QuerySpec& q);

json to_json(const FactTriplet& t);
FactTriplet fact_from_json(const json& j);
json to_json(const QuerySpec& q);
QuerySpec query_from_json(const json& j);
json to_json(const FactTasks& t);
FactTasks tasks_from_json(const json& j);

std::vector<FactTriplet> read_facts(const std::filesystem::path& path);
void write_facts(const std::filesystem::path& path, const std::vector<FactTriplet>& facts);
std::vector<FactTasks> read_tasks(const std::filesystem::path& path);
void write_tasks(const std::filesystem::path& path, const std::vector<FactTasks>& tasks);
std::vector<QuerySpec> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<QuerySpec>& queries);

}  // namespace gvgap::facts
