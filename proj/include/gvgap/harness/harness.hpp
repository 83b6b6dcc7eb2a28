#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/facts/fact.hpp"
#include "gvgap/gateway/gateway.hpp"
#include "gvgap/grading/grading.hpp"
#include "gvgap/lifecycle/lifecycle.hpp"
#include "gvgap/metrics/metrics.hpp"
#include "gvgap/natural/natural.hpp"
#include "gvgap/stats/stats.hpp"
#include "gvgap/synth/synth.hpp"

// Orchestration shared by the CLI and the acceptance suite.
namespace gvgap::harness {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

struct HarnessConfig {
  fs::path output_dir;
  std::uint64_t seed = 0;
  std::map<std::string, gateway::EndpointConfig> endpoints;
  fs::path cache_dir;  // defaults to <output_dir>/cache
  gateway::Mode mode = gateway::Mode::live;

  // dataset paths; relative ones resolve against the config file
  fs::path facts, tasks, queries, update_queries;
  std::map<std::string, fs::path> natural_sources;

  std::string generator;  // endpoint alias
  synth::PipelineConfig generation;
  std::string subject;  // endpoint alias
  std::string judge;    // optional endpoint alias

  metrics::MetricConfig metrics;
  std::vector<std::string> group_by{"dataset"};
  lifecycle::EmergenceConfig emergence;
  int floor_window = 3;
  natural::SamplingConfig sampling;
  std::map<std::string, int> per_year;  // dataset overrides

  /// Throws PreconditionError naming the first problem.
  void validate() const;
  const gateway::EndpointConfig& endpoint(const std::string& alias) const;
};

/// Parses TOML; relative paths resolve against `base_dir`.
HarnessConfig parse_config(const std::string& toml_text, const fs::path& base_dir);
HarnessConfig load_config(const fs::path& path);
json to_json(const HarnessConfig& cfg);
/// sha256 over the canonical JSON form (credentials are never part of it).
std::string config_hash(const HarnessConfig& cfg);

struct RunManifest {
  std::string id;
  std::string command;
  std::string config_hash;
  std::map<std::string, std::string> dataset_hashes;  // path -> sha256
  std::vector<std::string> endpoints;                 // "alias=model"
  std::uint64_t seed = 0;
  std::optional<std::string> phase;
  std::optional<int> epoch;
  std::string started, finished;  // UTC ISO-8601
  std::string module_version = kVersion;
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
};

/// Id over everything but timestamps, outputs and errors.
std::string manifest_id(const RunManifest& m);
json to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);
fs::path manifest_path(const fs::path& output_dir, const std::string& id);
void write_manifest(const fs::path& output_dir, const RunManifest& m);
std::optional<RunManifest> read_manifest(const fs::path& output_dir, const std::string& id);
/// True when every recorded output still exists with its recorded hash.
bool outputs_intact(const RunManifest& m);
std::string utc_now();

class LockError : public Error {
 public:
  using Error::Error;
};

/// One run per output directory: holds <dir>/.lock for its lifetime.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

// ---- evaluation ----

struct EvalOptions {
  grading::Phase phase = grading::Phase::acquisition;
  std::optional<int> epoch;
  std::string manifest_id;
  /// fact id -> category, copied into records
  std::map<std::string, std::string> categories;
};

struct EvalFailure {
  std::string query_id;
  std::string error;
};

struct EvalOutput {
  std::vector<grading::EvalRecord> records;  // programmatic, query order
  std::vector<grading::EvalRecord> judge_records;
  std::vector<EvalFailure> failures;
};

/// Issues every query through `subject`, grades programmatically and, when a
/// judge is given, also grades generative responses with it. Queries that
/// fail are reported instead of aborting the run.
EvalOutput evaluate_suite(const std::vector<facts::QuerySpec>& queries, gateway::ChatModel& subject,
                          gateway::ChatModel* judge, const EvalOptions& options);

json to_json(const EvalFailure& f);

// ---- analysis ----

/// Utility reports per group plus the self-consistency estimate.
json metrics_report(const std::vector<grading::EvalRecord>& records, const metrics::MetricConfig& cfg,
                    const std::vector<std::string>& group_by);

struct OrderingSummary {
  std::size_t facts = 0;
  std::size_t verified = 0;    // e_v reached
  std::size_t generated = 0;   // e_g reached
  std::size_t ordered = 0;     // e_v reached and e_v <= e_g (or e_g absent)
  std::vector<std::string> violations;
};

OrderingSummary emergence_ordering(const std::map<std::string, lifecycle::CurveSet>& per_fact,
                                   const lifecycle::EmergenceConfig& cfg);
json to_json(const OrderingSummary& s);

struct LifecycleResult {
  lifecycle::CurveSet curve;
  lifecycle::GapAnalysis gap;
  std::optional<lifecycle::Floor> floor;
  OrderingSummary ordering;
  std::optional<lifecycle::MultiverseReport> multiverse;
};

LifecycleResult analyse_lifecycle(const std::vector<grading::EvalRecord>& records,
                                  const lifecycle::EmergenceConfig& cfg, metrics::VerificationUnit unit,
                                  int floor_window, const std::map<std::string, std::string>& old_tails = {});
json to_json(const LifecycleResult& r);

/// fact id -> superseded tail, from an update suite.
std::map<std::string, std::string> old_tails_from(const std::vector<facts::QuerySpec>& update_suite);

// ---- reports ----

/// Billboard verify_reject records as regression outcomes (offset 0 rows
/// are dropped for ranked noise, which never has them).
std::vector<stats::BillboardOutcome> billboard_outcomes(const std::vector<grading::EvalRecord>& records);
/// offset,method,n,rejected,accuracy
std::string billboard_accuracy_csv(const std::vector<stats::BillboardOutcome>& outcomes);
/// dataset,year,u_g,accept_correct,reject_incorrect,u_v
std::string coverage_csv(const std::vector<grading::EvalRecord>& records);
/// capability,n,one_right,m1_right,rate,p_m1 and failure mode lifts.
std::string disagreement_csv(const std::vector<grading::EvalRecord>& m1, const std::vector<grading::EvalRecord>& m2);

std::vector<grading::EvalRecord> read_all_records(const std::vector<fs::path>& paths);

}  // namespace gvgap::harness
