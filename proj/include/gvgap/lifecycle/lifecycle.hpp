#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/grading/grading.hpp"
#include "gvgap/metrics/metrics.hpp"

namespace gvgap::lifecycle {

using nlohmann::json;

struct CurvePoint {
  int epoch = 0;
  std::string phase;
  double u_g = 0.0;
  double u_v = 0.0;  // balanced
  double accept_correct = 0.0;
  double reject_incorrect = 0.0;
  /// Update phase: share of superseded-tail statements the model accepts,
  /// and of new-tail statements it accepts.
  std::optional<double> old_accept;
  std::optional<double> new_accept;
  std::optional<double> loss;
};

struct CurveSet {
  std::vector<CurvePoint> points;  // epochs strictly increasing

  /// Throws PreconditionError on non-increasing epochs or a phase that
  /// reappears after another one.
  void validate() const;
  std::size_t size() const { return points.size(); }
};

/// One point per epoch present in the records (records without an epoch are
/// ignored). Epochs lacking a query type leave that rate at 0 and are still
/// emitted.
CurveSet curves_from_records(const std::vector<grading::EvalRecord>& records,
                             metrics::VerificationUnit unit = metrics::VerificationUnit::combined);

/// Per-fact curves keyed by fact id.
std::map<std::string, CurveSet> curves_per_fact(const std::vector<grading::EvalRecord>& records,
                                                metrics::VerificationUnit unit = metrics::VerificationUnit::combined);

struct EmergenceConfig {
  double threshold = 0.75;
  /// Consecutive epochs at or above the threshold needed to count.
  int sustain = 1;
};

struct GapAnalysis {
  std::optional<int> e_v;
  std::optional<int> e_g;
  /// [window_start, window_end); window_end absent when generation never
  /// crosses (open-ended).
  std::optional<int> window_start;
  std::optional<int> window_end;
  bool window_empty = true;
  bool converged = false;  // both capabilities crossed
  double area = 0.0;
};

GapAnalysis detect_emergence(const CurveSet& curve, const EmergenceConfig& cfg = {});

/// Integral over epochs of the positive part of the piecewise-linear
/// U_V - U_G curve.
double gap_area(const std::vector<int>& epochs, const std::vector<double>& difference);
double gap_area(const CurveSet& curve);

struct Floor {
  double u_g = 0.0;
  double u_v = 0.0;
  double accept_correct = 0.0;
  double reject_incorrect = 0.0;
  int window = 0;
  std::optional<int> intervention;  // epochs after acquisition
};

Floor robustness_floor(const CurveSet& curve, int window, std::optional<int> intervention = std::nullopt);

struct MultiverseFlag {
  std::string fact_id;
  int epoch = 0;
  bool old_accepted = false;
  bool new_accepted = false;
  bool flagged = false;
  bool generation_flipped = false;
};

struct MultiverseReport {
  std::vector<MultiverseFlag> final_flags;  // one per fact, at its last epoch
  double rate = 0.0;
  double flipped_rate = 0.0;
  /// Per epoch: share of facts flagged.
  std::map<int, double> rate_by_epoch;
  /// fact id -> reason for facts lacking either tail's verification records.
  std::map<std::string, std::string> errors;
};

/// Update-phase records. `old_tails` (fact id -> superseded tail) lets the
/// flip check confirm the old tail is absent from the generated answer.
MultiverseReport detect_multiverse(const std::vector<grading::EvalRecord>& records,
                                   const std::map<std::string, std::string>& old_tails = {});

std::string curve_csv(const CurveSet& curve);

json to_json(const GapAnalysis& g);
json to_json(const Floor& f);
json to_json(const MultiverseReport& m);

}  // namespace gvgap::lifecycle
