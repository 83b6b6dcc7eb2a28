#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/grading/grading.hpp"

namespace gvgap::metrics {

using nlohmann::json;

struct Counts {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double rate() const;  // throws PreconditionError on zero trials
  Counts& operator+=(const Counts& o) {
    successes += o.successes;
    trials += o.trials;
    return *this;
  }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval. Requires 0 <= k <= n, n >= 1, level in (0, 1).
Interval confidence_interval(std::size_t k, std::size_t n, double level = 0.95);

/// U_V(alpha) = (1 - alpha) * U_V(ok) + alpha * U_V(x).
double verification_utility(double accept_correct, double reject_incorrect, double alpha);

/// U_V'(alpha) = U_V(alpha) - max(alpha, 1 - alpha).
double chance_corrected(double uv, double alpha);

/// Whether verification verdicts count per phrasing or per double-critic pair.
enum class VerificationUnit { combined, per_phrasing };

struct MetricConfig {
  std::vector<double> alphas{0.1, 0.5};
  VerificationUnit unit = VerificationUnit::combined;
  double ci_level = 0.95;
};

void validate(const MetricConfig& cfg);

/// Per-fact tallies for one group.
struct FactRow {
  std::string fact_id;
  Counts generative;
  Counts accept;  // accept-correct on true statements
  Counts reject;  // reject-incorrect on false statements
  std::size_t refusals = 0;
  std::size_t refusal_denominator = 0;
};

struct VerdictTable {
  std::vector<FactRow> rows;  // sorted by fact_id

  bool empty() const { return rows.empty(); }
  Counts generative() const;
  Counts accept() const;
  Counts reject() const;

  /// Target-role records only. Under the combined unit, the two phrasings
  /// of one statement are paired by (fact, kind, tail variant, model,
  /// phase, epoch, tags) in order of appearance; a record without a partner
  /// counts on its own.
  static VerdictTable from_records(const std::vector<grading::EvalRecord>& records, VerificationUnit unit);
};

struct AlphaPoint {
  double alpha = 0.0;
  double uv = 0.0;
  double uv_prime = 0.0;
};

struct UtilityReport {
  std::string group;
  double u_g = 0.0;
  double accept_correct = 0.0;    // U_V(ok)
  double reject_incorrect = 0.0;  // U_V(x)
  std::vector<AlphaPoint> by_alpha;
  double balanced = 0.0;  // U_V(0.5)
  double gap = 0.0;       // balanced - u_g
  double bias = 0.0;      // accept_correct - reject_incorrect
  std::optional<double> refusal_rate;
  Counts generative, accept, reject;
  std::size_t refusals = 0, refusal_denominator = 0;
  std::optional<Interval> ci_g, ci_accept, ci_reject;
  /// SE of per-fact (U_V - U_G) differences; absent with fewer than 2 facts.
  std::optional<double> gap_se;
  std::size_t facts = 0;
};

/// Fills every derived field from the three base rates.
UtilityReport utilities_from_rates(double u_g, double accept_correct, double reject_incorrect,
                                   const std::vector<double>& alphas = {0.1, 0.5});

/// Pools the table's counts (micro over facts). Throws naming `group` when
/// the table is empty or lacks one of the three query types.
UtilityReport compute_utilities(const VerdictTable& table, const MetricConfig& cfg, const std::string& group = "all");

struct SelfConsistencyReport {
  double alpha_m = 0.0;
  double u_sv = 0.0;
  double delta = 0.0;
  int samples_per_query = 1;
};

SelfConsistencyReport compute_self_consistency(double u_g, double accept_correct, double reject_incorrect,
                                               int samples_per_query = 1);

struct Dispute {
  double correct_only = 0.0;
  double incorrect_only = 0.0;
  double both = 0.0;
  double neither = 0.0;
};

/// Independent verification of a correct and an incorrect claim.
Dispute adjudicate_dispute(double accept_correct, double reject_incorrect);

struct Disagreement {
  std::size_t n = 0;
  std::size_t one_right = 0;
  std::size_t m1_right = 0;
  double rate = 0.0;
  std::optional<double> p_m1;  // absent when no query has exactly one right
};

/// Query id -> correct, for two models over the same queries.
Disagreement disagreement_stats(const std::map<std::string, bool>& m1, const std::map<std::string, bool>& m2);

/// Breakdown by capability: "generation", "verify_correct", "verify_incorrect".
std::map<std::string, Disagreement> disagreement_by_capability(const std::vector<grading::EvalRecord>& m1,
                                                               const std::vector<grading::EvalRecord>& m2);

struct Lift {
  std::size_t n = 0;
  double raw = 0.0;  // joint failure rate
  double m1_rate = 0.0;
  double m2_rate = 0.0;
  std::optional<double> lift;  // absent when a marginal is zero
};

/// Query id -> failed.
Lift wrong_agreement_lift(const std::map<std::string, bool>& m1_failed, const std::map<std::string, bool>& m2_failed);

/// "accept_incorrect" (failures on false statements) and "reject_correct"
/// (failures on true statements).
std::map<std::string, Lift> lift_by_failure_mode(const std::vector<grading::EvalRecord>& m1,
                                                 const std::vector<grading::EvalRecord>& m2);

/// |small \ large| / |large|; nullopt when the large set is empty.
std::optional<double> subset_violation_rate(const std::set<std::string>& correct_large,
                                            const std::set<std::string>& correct_small);

enum class AggregateMode { micro, macro };

/// Micro pools counts; macro gives each group equal weight.
double aggregate(const std::vector<Counts>& groups, AggregateMode mode);
UtilityReport aggregate(const std::vector<UtilityReport>& reports, AggregateMode mode, const MetricConfig& cfg,
                        const std::string& group = "aggregate");

/// Sample SD / sqrt(n). Requires n >= 2.
double paired_se(const std::vector<double>& d);
/// Mean of the per-dataset paired SEs.
double paired_se_macro(const std::map<std::string, std::vector<double>>& d_by_dataset);

/// refusals / (valid or refused); invalid parses are excluded.
struct RefusalRate {
  std::size_t refusals = 0;
  std::size_t denominator = 0;
  double rate() const { return denominator ? static_cast<double>(refusals) / static_cast<double>(denominator) : 0.0; }
};
RefusalRate refusal_rate(const std::vector<grading::EvalRecord>& records);

/// Group key built from record fields: dataset, category, year (tag),
/// epoch, model, phase. Unknown names throw.
std::string group_key(const grading::EvalRecord& r, const std::vector<std::string>& keys);
std::map<std::string, std::vector<grading::EvalRecord>> group_records(const std::vector<grading::EvalRecord>& records,
                                                                      const std::vector<std::string>& keys);

json to_json(const UtilityReport& r);
json to_json(const SelfConsistencyReport& r);
json to_json(const Dispute& d);
json to_json(const Disagreement& d);
json to_json(const Lift& l);

/// Aligned text table: group, U_G, U_V, gap, U_V(ok), U_V(x), bias, and
/// U_V' at each alpha.
std::string render_utility_table(const std::vector<UtilityReport>& reports);

}  // namespace gvgap::metrics
