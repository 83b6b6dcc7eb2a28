#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gvgap/common/csv.hpp"
#include "gvgap/common/error.hpp"
#include "gvgap/common/rng.hpp"
#include "gvgap/facts/fact.hpp"
#include "gvgap/stats/stats.hpp"

namespace gvgap::natural {

using nlohmann::json;
using stats::NoiseMethod;

struct MarketPayload {
  std::string ticker;
  double close = 0.0;
  int decimals = 2;  // precision of the source value
};

struct NbaPayload {
  std::string team_1, team_2;
  int points_1 = 0, points_2 = 0;
};

struct LotteryPayload {
  std::array<int, 5> numbers{};
  int mega = 0;
};

struct BillboardPayload {
  int rank = 0;
  std::string track;
  std::string artist;
};

using Payload = std::variant<MarketPayload, NbaPayload, LotteryPayload, BillboardPayload>;

struct NaturalFact {
  std::string id;
  std::string dataset;  // market | nba | lottery | billboard
  std::string date;     // ISO yyyy-mm-dd; the chart week for billboard
  Payload payload;

  int year() const;
};

/// Payload rules for the fact's dataset; empty when valid.
std::vector<std::string> validate_fact(const NaturalFact& f);
std::string make_natural_id(const NaturalFact& f);

/// "2002-08-06" -> "August 6, 2002".
std::string format_date(const std::string& iso);
/// Days since 1970-01-01; throws ParseError on a malformed date.
long days_from_iso(const std::string& iso);

// ---- lottery eras ----

struct LotteryEra {
  std::string from;  // first draw date under these rules
  int main_max = 0;
  int mega_max = 0;
};

const std::vector<LotteryEra>& lottery_eras();
/// Throws PreconditionError for dates before the first era.
const LotteryEra& lottery_era(const std::string& date);

// ---- noise plans ----

struct MarketNoise {
  double factor = 0.0;
};
struct NbaNoise {
  int delta_1 = 0, delta_2 = 0;
};
struct LotteryNoise {
  std::array<int, 2> indices{};
  std::array<int, 2> deltas{};
};
struct BillboardNoise {
  NoiseMethod method = NoiseMethod::random_noise;
  int pool_size = 10;  // random noise only
  int offset = 0;      // weeks; random noise may use 0
};

using NoisePlan = std::variant<MarketNoise, NbaNoise, LotteryNoise, BillboardNoise>;

/// Invariant violations; empty when the plan is well formed.
std::vector<std::string> validate_plan(const NoisePlan& plan);

/// Thrown when a sampled plan cannot be applied (rounding collapse, range or
/// distinctness violation); samplers draw again.
class NoiseRejected : public Error {
 public:
  using Error::Error;
};

/// price * (1 + factor) rounded to `decimals`.
double apply_market_noise(double price, double factor, int decimals = 2);
std::pair<int, int> apply_nba_noise(std::pair<int, int> scores, const NbaNoise& noise);
/// Mega ball is left as is. `date` selects the era's ball range.
std::array<int, 5> apply_lottery_noise(const std::array<int, 5>& numbers, const LotteryNoise& noise,
                                       const std::string& date);

// ---- billboard archive ----

struct ChartEntry {
  int rank = 0;
  std::string track;
  std::string artist;
};

class ChartArchive {
 public:
  /// Columns: week, rank, track, artist.
  static ChartArchive from_csv(const CsvTable& table);
  void add(const std::string& week, ChartEntry e);

  const std::vector<std::string>& weeks() const { return weeks_; }
  std::optional<std::size_t> week_index(const std::string& week) const;
  /// Entries of one week sorted by rank.
  const std::vector<ChartEntry>& chart(const std::string& week) const;
  const ChartEntry* at(const std::string& week, int rank) const;

 private:
  void sort_weeks();
  std::vector<std::string> weeks_;
  std::map<std::string, std::vector<ChartEntry>> charts_;
};

/// A different track than the one at `rank`, uniform over the distinct
/// tracks of the chart's top `pool_size`.
ChartEntry billboard_random_noise(const std::vector<ChartEntry>& chart, int rank, int pool_size, Rng& rng);

struct RankedSubstitute {
  ChartEntry entry;
  int effective_offset = 0;
};

struct RankedOutcome {
  std::optional<RankedSubstitute> substitute;
  std::string skip_reason;  // set when substitute is empty
};

/// Track at `rank` in week T+k, walking further in k's direction while the
/// track equals week T's, up to |k|+4 weeks out. Missing weeks inside the
/// walk (or a non-weekly step) throw PreconditionError.
RankedOutcome billboard_ranked_noise(const ChartArchive& archive, const std::string& week, int rank, int offset);

// ---- samplers ----

enum class MarketNoiseMode { uniform_dead_zone, fixed_magnitude };
MarketNoiseMode market_noise_mode_from(const std::string& s);
std::string to_string(MarketNoiseMode m);

inline constexpr double kMarketMaxFactor = 0.02;
inline constexpr double kMarketDeadZone = 0.001;

MarketNoise sample_market_noise(Rng& rng, MarketNoiseMode mode = MarketNoiseMode::uniform_dead_zone);
NbaNoise sample_nba_noise(Rng& rng);
LotteryNoise sample_lottery_noise(Rng& rng);

// ---- query sets ----

struct SamplingConfig {
  int year_from = 2002;
  int year_to = 2024;
  int per_year = 100;
  MarketNoiseMode market_mode = MarketNoiseMode::uniform_dead_zone;
  /// Billboard: chart positions eligible for sampling.
  int max_rank = 100;
  int pool_size = 10;
  /// Share of billboard facts corrupted by ranked noise.
  double ranked_share = 0.5;
  /// Resampling budget per fact before it is skipped.
  int max_attempts = 50;
};

/// Default per-year sample count for a dataset.
int default_per_year(const std::string& dataset);

struct SkipEntry {
  std::string fact_id;
  std::string reason;
};

struct NaturalQuerySet {
  std::vector<NaturalFact> facts;
  /// Three per fact: generative, verify_accept, verify_reject.
  std::vector<facts::QuerySpec> queries;
  std::vector<SkipEntry> skips;
};

/// Source rows for one dataset.
struct NaturalSource {
  std::string dataset;
  std::vector<NaturalFact> rows;
  /// Billboard only.
  std::optional<ChartArchive> archive;
};

/// Schemas: market (date,ticker,close); nba (date,team_1,team_2,
/// team_1_points,team_2_points); lottery (date,n1,n2,n3,n4,n5,mega);
/// billboard (week,rank,track,artist).
NaturalSource load_source(const std::string& dataset, const CsvTable& table);
NaturalSource load_source(const std::string& dataset, const std::filesystem::path& csv);

/// Per-year sampling without replacement, seeded per (seed, dataset, year)
/// so years can be built independently. Throws PreconditionError naming
/// the year when it has too few usable rows.
NaturalQuerySet build_query_set(const NaturalSource& source, const SamplingConfig& cfg, std::uint64_t seed);

/// One query triple for a fact and plan (no sampling).
std::vector<facts::QuerySpec> queries_for(const NaturalFact& fact, const NaturalFact& corrupted,
                                          const std::map<std::string, std::string>& tags);

struct Discrepancy {
  std::string key;
  std::string field;
  std::string left, right;
};

/// Facts whose values differ between two exports of the same dataset, and
/// keys present in only one (field "missing").
std::vector<Discrepancy> discrepancy_report(const NaturalSource& left, const NaturalSource& right);

json to_json(const NaturalFact& f);
NaturalFact natural_fact_from_json(const json& j);
json to_json(const Discrepancy& d);

}  // namespace gvgap::natural
