#include "gvgap/natural/natural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>

#include "gvgap/common/hash.hpp"
#include "gvgap/common/text.hpp"
#include "gvgap/prompts/prompts.hpp"

namespace gvgap::natural {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_ranked_offset(int k) { return k != 0 && std::abs(k) <= 5; }

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(what + ": '" + s + "' is not an integer");
  }
}

}  // namespace

// ---- dates ----

long days_from_iso(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  char extra = 0;
  if (iso.size() != 10 || std::sscanf(iso.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &extra) != 3 || m < 1 || m > 12 ||
      d < 1 || d > 31) {
    throw ParseError("malformed date '" + iso + "' (expected yyyy-mm-dd)");
  }
  // civil-from-days inverse, proleptic Gregorian
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const long yoe = y - era * 400;
  const long doy = (153L * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const long doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

std::string format_date(const std::string& iso) {
  static const char* kMonths[] = {"January", "February", "March",     "April",   "May",      "June",
                                  "July",    "August",   "September", "October", "November", "December"};
  days_from_iso(iso);  // validates
  const int y = std::stoi(iso.substr(0, 4)), m = std::stoi(iso.substr(5, 2)), d = std::stoi(iso.substr(8, 2));
  return std::string(kMonths[m - 1]) + " " + std::to_string(d) + ", " + std::to_string(y);
}

int NaturalFact::year() const {
  days_from_iso(date);
  return std::stoi(date.substr(0, 4));
}

// ---- lottery eras ----

const std::vector<LotteryEra>& lottery_eras() {
  // main-ball and mega-ball maxima over the game's history
  static const std::vector<LotteryEra> kEras{
      {"1999-01-13", 50, 36}, {"2002-05-17", 52, 52}, {"2005-06-22", 56, 46},
      {"2013-10-22", 75, 15}, {"2017-10-31", 70, 25}, {"2025-04-08", 70, 24},
  };
  return kEras;
}

const LotteryEra& lottery_era(const std::string& date) {
  days_from_iso(date);
  const auto& eras = lottery_eras();
  const LotteryEra* found = nullptr;
  for (const auto& e : eras) {
    if (e.from <= date) found = &e;
  }
  if (!found) throw PreconditionError("no lottery ball ranges known for " + date);
  return *found;
}

// ---- facts ----

std::vector<std::string> validate_fact(const NaturalFact& f) {
  std::vector<std::string> v;
  try {
    days_from_iso(f.date);
  } catch (const ParseError& e) {
    v.emplace_back(e.what());
    return v;
  }
  std::visit(overloaded{
                 [&](const MarketPayload& p) {
                   if (f.dataset != "market") v.emplace_back("market payload on dataset " + f.dataset);
                   if (p.ticker.empty()) v.emplace_back("empty ticker");
                   if (!(p.close > 0) || !std::isfinite(p.close)) v.emplace_back("closing price must be positive");
                   if (p.decimals < 0 || p.decimals > 6) v.emplace_back("price precision out of range");
                 },
                 [&](const NbaPayload& p) {
                   if (f.dataset != "nba") v.emplace_back("nba payload on dataset " + f.dataset);
                   if (p.team_1.empty() || p.team_2.empty()) v.emplace_back("empty team name");
                   if (p.team_1 == p.team_2) v.emplace_back("team plays itself");
                   if (p.points_1 <= 0 || p.points_2 <= 0) v.emplace_back("scores must be positive");
                 },
                 [&](const LotteryPayload& p) {
                   if (f.dataset != "lottery") v.emplace_back("lottery payload on dataset " + f.dataset);
                   try {
                     const auto& era = lottery_era(f.date);
                     std::set<int> seen(p.numbers.begin(), p.numbers.end());
                     if (seen.size() != 5) v.emplace_back("winning numbers are not distinct");
                     for (int n : p.numbers) {
                       if (n < 1 || n > era.main_max) {
                         v.emplace_back("number " + std::to_string(n) + " outside 1.." + std::to_string(era.main_max));
                       }
                     }
                     if (p.mega < 1 || p.mega > era.mega_max) {
                       v.emplace_back("mega ball " + std::to_string(p.mega) + " outside 1.." +
                                      std::to_string(era.mega_max));
                     }
                   } catch (const PreconditionError& e) {
                     v.emplace_back(e.what());
                   }
                 },
                 [&](const BillboardPayload& p) {
                   if (f.dataset != "billboard") v.emplace_back("billboard payload on dataset " + f.dataset);
                   if (p.rank < 1) v.emplace_back("rank must be at least 1");
                   if (p.track.empty()) v.emplace_back("empty track");
                 },
             },
             f.payload);
  return v;
}

namespace {

std::string fact_key(const NaturalFact& f) {
  return std::visit(overloaded{
                        [&](const MarketPayload& p) { return f.date + "|" + p.ticker; },
                        [&](const NbaPayload& p) { return f.date + "|" + p.team_1 + "|" + p.team_2; },
                        [&](const LotteryPayload&) { return f.date; },
                        [&](const BillboardPayload& p) { return f.date + "|" + std::to_string(p.rank); },
                    },
                    f.payload);
}

// The answer as it appears in statements, also the generative ground truth.
std::string answer_string(const NaturalFact& f) {
  return std::visit(overloaded{
                        [](const MarketPayload& p) { return fixed(p.close, p.decimals); },
                        [](const NbaPayload& p) { return std::to_string(p.points_1) + "-" + std::to_string(p.points_2); },
                        [](const LotteryPayload& p) {
                          std::vector<std::string> parts;
                          for (int n : p.numbers) parts.push_back(std::to_string(n));
                          return text::join(parts, ", ") + ", mega ball " + std::to_string(p.mega);
                        },
                        [](const BillboardPayload& p) { return p.track; },
                    },
                    f.payload);
}

prompts::Bindings bindings_for(const NaturalFact& f) {
  prompts::Bindings b{{"date", format_date(f.date)}};
  std::visit(overloaded{
                 [&](const MarketPayload& p) {
                   b["ticker"] = p.ticker;
                   b["value"] = fixed(p.close, p.decimals);
                 },
                 [&](const NbaPayload& p) {
                   b["team_1"] = p.team_1;
                   b["team_2"] = p.team_2;
                   b["team_1_points"] = std::to_string(p.points_1);
                   b["team_2_points"] = std::to_string(p.points_2);
                 },
                 [&](const LotteryPayload& p) {
                   std::vector<std::string> parts;
                   for (int n : p.numbers) parts.push_back(std::to_string(n));
                   b["values"] = text::join(parts, ", ");
                   b["mega_ball"] = std::to_string(p.mega);
                 },
                 [&](const BillboardPayload& p) {
                   b["rank"] = std::to_string(p.rank);
                   b["track"] = p.track;
                 },
             },
             f.payload);
  return b;
}

}  // namespace

std::string make_natural_id(const NaturalFact& f) { return content_id("n-", f.dataset + "|" + fact_key(f)); }

// ---- plans ----

std::vector<std::string> validate_plan(const NoisePlan& plan) {
  std::vector<std::string> v;
  auto delta_ok = [](int d, int hi) { return d != 0 && std::abs(d) <= hi; };
  std::visit(overloaded{
                 [&](const MarketNoise& p) {
                   if (!(std::fabs(p.factor) <= kMarketMaxFactor)) v.emplace_back("market factor beyond 2%");
                   if (p.factor == 0.0) v.emplace_back("market factor is zero");
                 },
                 [&](const NbaNoise& p) {
                   if (!delta_ok(p.delta_1, 10) || !delta_ok(p.delta_2, 10)) v.emplace_back("nba delta outside 1..10");
                 },
                 [&](const LotteryNoise& p) {
                   for (int i : p.indices) {
                     if (i < 0 || i > 4) v.emplace_back("lottery index outside 0..4");
                   }
                   if (p.indices[0] == p.indices[1]) v.emplace_back("lottery indices repeat");
                   if (!delta_ok(p.deltas[0], 20) || !delta_ok(p.deltas[1], 20)) {
                     v.emplace_back("lottery delta outside 1..20");
                   }
                 },
                 [&](const BillboardNoise& p) {
                   if (p.method == NoiseMethod::ranked_noise) {
                     if (!is_ranked_offset(p.offset)) v.emplace_back("ranked offset outside +-1..5");
                   } else {
                     if (p.pool_size != 10 && p.pool_size != 25) v.emplace_back("pool size must be 10 or 25");
                     if (p.offset != 0 && !is_ranked_offset(p.offset)) v.emplace_back("random-noise offset not allowed");
                   }
                 },
             },
             plan);
  return v;
}

namespace {
void require_plan(const NoisePlan& plan) {
  const auto v = validate_plan(plan);
  if (!v.empty()) throw PreconditionError("invalid noise plan: " + text::join(v, "; "));
}
}  // namespace

double apply_market_noise(double price, double factor, int decimals) {
  require_plan(MarketNoise{factor});
  if (!(price > 0)) throw PreconditionError("price must be positive");
  const double original = round_to(price, decimals);
  const double out = round_to(price * (1.0 + factor), decimals);
  if (fixed(out, decimals) == fixed(original, decimals)) {
    throw NoiseRejected("factor " + std::to_string(factor) + " collapses to the original price " +
                        fixed(original, decimals));
  }
  return out;
}

std::pair<int, int> apply_nba_noise(std::pair<int, int> scores, const NbaNoise& noise) {
  require_plan(noise);
  const std::pair<int, int> out{scores.first + noise.delta_1, scores.second + noise.delta_2};
  if (out.first <= 0 || out.second <= 0) {
    throw NoiseRejected("perturbed score is not positive (" + std::to_string(out.first) + ", " +
                        std::to_string(out.second) + ")");
  }
  return out;
}

std::array<int, 5> apply_lottery_noise(const std::array<int, 5>& numbers, const LotteryNoise& noise,
                                       const std::string& date) {
  require_plan(noise);
  const auto& era = lottery_era(date);
  auto out = numbers;
  for (int j = 0; j < 2; ++j) out[noise.indices[j]] += noise.deltas[j];
  for (int n : out) {
    if (n < 1 || n > era.main_max) {
      throw NoiseRejected("perturbed number " + std::to_string(n) + " outside 1.." + std::to_string(era.main_max));
    }
  }
  if (std::set<int>(out.begin(), out.end()).size() != 5) throw NoiseRejected("perturbed numbers are not distinct");
  return out;
}

// ---- billboard ----

ChartArchive ChartArchive::from_csv(const CsvTable& t) {
  ChartArchive a;
  const auto cw = t.column("week"), cr = t.column("rank"), ct = t.column("track"), ca = t.column("artist");
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::string where = t.origin() + " row " + std::to_string(i + 2);
    try {
      days_from_iso(t.at(i, cw));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    a.add(t.at(i, cw), ChartEntry{parse_int(t.at(i, cr), where + " rank"), t.at(i, ct), t.at(i, ca)});
  }
  return a;
}

void ChartArchive::add(const std::string& week, ChartEntry e) {
  auto [it, fresh] = charts_.try_emplace(week);
  auto& chart = it->second;
  const auto pos =
      std::lower_bound(chart.begin(), chart.end(), e.rank, [](const ChartEntry& c, int r) { return c.rank < r; });
  if (pos != chart.end() && pos->rank == e.rank) {
    throw PreconditionError("duplicate rank " + std::to_string(e.rank) + " in week " + week);
  }
  chart.insert(pos, std::move(e));
  if (fresh) {
    weeks_.push_back(week);
    sort_weeks();
  }
}

void ChartArchive::sort_weeks() { std::sort(weeks_.begin(), weeks_.end()); }

std::optional<std::size_t> ChartArchive::week_index(const std::string& week) const {
  const auto it = std::lower_bound(weeks_.begin(), weeks_.end(), week);
  if (it == weeks_.end() || *it != week) return std::nullopt;
  return static_cast<std::size_t>(it - weeks_.begin());
}

const std::vector<ChartEntry>& ChartArchive::chart(const std::string& week) const {
  const auto it = charts_.find(week);
  if (it == charts_.end()) throw PreconditionError("week " + week + " is not in the archive");
  return it->second;
}

const ChartEntry* ChartArchive::at(const std::string& week, int rank) const {
  const auto& c = chart(week);
  const auto pos = std::lower_bound(c.begin(), c.end(), rank, [](const ChartEntry& e, int r) { return e.rank < r; });
  return pos != c.end() && pos->rank == rank ? &*pos : nullptr;
}

namespace {
const ChartEntry* entry_at(const std::vector<ChartEntry>& chart, int rank) {
  for (const auto& e : chart) {
    if (e.rank == rank) return &e;
  }
  return nullptr;
}

ChartEntry random_excluding(const std::vector<ChartEntry>& chart, const std::string& exclude, int pool_size,
                            Rng& rng) {
  if (pool_size != 10 && pool_size != 25) throw PreconditionError("pool size must be 10 or 25");
  std::vector<const ChartEntry*> pool;
  for (const auto& e : chart) {
    if (e.rank <= pool_size) pool.push_back(&e);
  }
  if (static_cast<int>(pool.size()) < pool_size) {
    throw PreconditionError("chart has " + std::to_string(pool.size()) + " of the top " + std::to_string(pool_size) +
                            " positions");
  }
  std::vector<const ChartEntry*> options;
  std::set<std::string> seen{text::fold(exclude)};
  for (const auto* e : pool) {
    if (seen.insert(text::fold(e->track)).second) options.push_back(e);
  }
  if (options.empty()) throw PreconditionError("degenerate chart: no track in the pool differs from '" + exclude + "'");
  return *options[rng.index(options.size())];
}
}  // namespace

ChartEntry billboard_random_noise(const std::vector<ChartEntry>& chart, int rank, int pool_size, Rng& rng) {
  const ChartEntry* truth = entry_at(chart, rank);
  if (!truth) throw PreconditionError("rank " + std::to_string(rank) + " missing from chart");
  return random_excluding(chart, truth->track, pool_size, rng);
}

RankedOutcome billboard_ranked_noise(const ChartArchive& archive, const std::string& week, int rank, int offset) {
  if (!is_ranked_offset(offset)) throw PreconditionError("ranked offset " + std::to_string(offset) + " not allowed");
  const auto idx = archive.week_index(week);
  if (!idx) throw PreconditionError("week " + week + " is not in the archive");
  const ChartEntry* truth = archive.at(week, rank);
  if (!truth) throw PreconditionError("rank " + std::to_string(rank) + " missing in week " + week);

  const int dir = offset > 0 ? 1 : -1;
  const int cap = std::abs(offset) + 4;
  const long base_day = days_from_iso(week);
  const auto n = static_cast<long>(archive.weeks().size());
  for (int j = std::abs(offset); j <= cap; ++j) {
    const long at = static_cast<long>(*idx) + dir * j;
    if (at < 0 || at >= n) {
      if (j == std::abs(offset)) {
        throw PreconditionError("archive gap: week " + week + (dir > 0 ? " +" : " -") + std::to_string(j) +
                                " is outside the archive");
      }
      return {std::nullopt, "walk left the archive after " + std::to_string(j - 1) + " weeks"};
    }
    const std::string& w = archive.weeks()[static_cast<std::size_t>(at)];
    if (days_from_iso(w) - base_day != 7L * dir * j) {
      throw PreconditionError("archive gap between " + week + " and " + w);
    }
    const ChartEntry* e = archive.at(w, rank);
    if (!e) return {std::nullopt, "rank " + std::to_string(rank) + " missing in week " + w};
    if (!text::equals_folded(e->track, truth->track)) return {RankedSubstitute{*e, dir * j}, {}};
  }
  return {std::nullopt, "'" + truth->track + "' held rank " + std::to_string(rank) + " through the " +
                            std::to_string(cap) + "-week walk"};
}

// ---- samplers ----

MarketNoiseMode market_noise_mode_from(const std::string& s) {
  if (s == "uniform_dead_zone") return MarketNoiseMode::uniform_dead_zone;
  if (s == "fixed_magnitude") return MarketNoiseMode::fixed_magnitude;
  throw PreconditionError("unknown market noise mode '" + s + "'");
}

std::string to_string(MarketNoiseMode m) {
  return m == MarketNoiseMode::uniform_dead_zone ? "uniform_dead_zone" : "fixed_magnitude";
}

MarketNoise sample_market_noise(Rng& rng, MarketNoiseMode mode) {
  if (mode == MarketNoiseMode::fixed_magnitude) return {rng.bernoulli(0.5) ? kMarketMaxFactor : -kMarketMaxFactor};
  for (;;) {
    const double f = rng.uniform(-kMarketMaxFactor, kMarketMaxFactor);
    if (std::fabs(f) >= kMarketDeadZone) return {f};
  }
}

namespace {
int signed_magnitude(Rng& rng, int hi) {
  const int m = static_cast<int>(rng.between(1, hi));
  return rng.bernoulli(0.5) ? m : -m;
}
}  // namespace

NbaNoise sample_nba_noise(Rng& rng) { return {signed_magnitude(rng, 10), signed_magnitude(rng, 10)}; }

LotteryNoise sample_lottery_noise(Rng& rng) {
  LotteryNoise n;
  n.indices[0] = static_cast<int>(rng.index(5));
  n.indices[1] = static_cast<int>(rng.index(4));
  if (n.indices[1] >= n.indices[0]) ++n.indices[1];
  std::sort(n.indices.begin(), n.indices.end());
  n.deltas = {signed_magnitude(rng, 20), signed_magnitude(rng, 20)};
  return n;
}

// ---- sources ----

NaturalSource load_source(const std::string& dataset, const CsvTable& t) {
  NaturalSource src;
  src.dataset = dataset;
  auto finish = [&](NaturalFact f, std::size_t row) {
    f.dataset = dataset;
    const auto v = validate_fact(f);
    if (!v.empty()) {
      throw ParseError(t.origin() + " row " + std::to_string(row + 2) + ": " + text::join(v, "; "));
    }
    f.id = make_natural_id(f);
    src.rows.push_back(std::move(f));
  };
  auto where = [&](std::size_t row, const char* col) {
    return t.origin() + " row " + std::to_string(row + 2) + " " + col;
  };

  if (dataset == "market") {
    const auto cd = t.column("date"), ct = t.column("ticker"), cc = t.column("close");
    for (std::size_t i = 0; i < t.size(); ++i) {
      MarketPayload p;
      p.ticker = t.at(i, ct);
      const std::string& raw = t.at(i, cc);
      try {
        std::size_t used = 0;
        p.close = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
      } catch (const std::exception&) {
        throw ParseError(where(i, "close") + ": '" + raw + "' is not a number");
      }
      const auto dot = raw.find('.');
      p.decimals = dot == std::string::npos ? 0 : static_cast<int>(raw.size() - dot - 1);
      finish(NaturalFact{"", "", t.at(i, cd), p}, i);
    }
  } else if (dataset == "nba") {
    const auto cd = t.column("date"), c1 = t.column("team_1"), c2 = t.column("team_2"),
               p1 = t.column("team_1_points"), p2 = t.column("team_2_points");
    for (std::size_t i = 0; i < t.size(); ++i) {
      NbaPayload p{t.at(i, c1), t.at(i, c2), parse_int(t.at(i, p1), where(i, "team_1_points")),
                   parse_int(t.at(i, p2), where(i, "team_2_points"))};
      finish(NaturalFact{"", "", t.at(i, cd), p}, i);
    }
  } else if (dataset == "lottery") {
    const auto cd = t.column("date"), cm = t.column("mega");
    std::array<std::size_t, 5> cols{};
    for (int k = 0; k < 5; ++k) cols[k] = t.column("n" + std::to_string(k + 1));
    for (std::size_t i = 0; i < t.size(); ++i) {
      LotteryPayload p;
      for (int k = 0; k < 5; ++k) p.numbers[k] = parse_int(t.at(i, cols[k]), where(i, "number"));
      p.mega = parse_int(t.at(i, cm), where(i, "mega"));
      finish(NaturalFact{"", "", t.at(i, cd), p}, i);
    }
  } else if (dataset == "billboard") {
    src.archive = ChartArchive::from_csv(t);
    for (const auto& w : src.archive->weeks()) {
      for (const auto& e : src.archive->chart(w)) {
        NaturalFact f{"", "billboard", w, BillboardPayload{e.rank, e.track, e.artist}};
        const auto v = validate_fact(f);
        if (!v.empty()) throw ParseError(t.origin() + " week " + w + ": " + text::join(v, "; "));
        f.id = make_natural_id(f);
        src.rows.push_back(std::move(f));
      }
    }
  } else {
    throw PreconditionError("unknown naturalistic dataset '" + dataset + "'");
  }
  return src;
}

NaturalSource load_source(const std::string& dataset, const std::filesystem::path& csv) {
  return load_source(dataset, CsvTable::read(csv));
}

int default_per_year(const std::string& dataset) {
  if (dataset == "market") return 100;
  if (dataset == "nba") return 50;
  if (dataset == "lottery") return 40;
  if (dataset == "billboard") return 50;
  throw PreconditionError("unknown naturalistic dataset '" + dataset + "'");
}

// ---- query sets ----

std::vector<facts::QuerySpec> queries_for(const NaturalFact& fact, const NaturalFact& corrupted,
                                          const std::map<std::string, std::string>& tags) {
  using facts::QueryKind;
  std::vector<facts::QuerySpec> out(3);
  for (auto& q : out) {
    q.fact_id = fact.id;
    q.dataset = fact.dataset;
    q.tags = tags;
  }
  const auto truth = bindings_for(fact);
  out[0].kind = QueryKind::generative;
  out[0].problem = prompts::natural_sentence(prompts::NaturalKind::generative, fact.dataset, truth);
  out[0].ground_truth = answer_string(fact);

  out[1].kind = QueryKind::verify_accept;
  out[1].phrasing = facts::Phrasing::asks_correct;
  out[1].problem = prompts::natural_sentence(prompts::NaturalKind::verification, fact.dataset, truth);
  out[1].candidate = answer_string(fact);
  out[1].ground_truth = true;

  out[2].kind = QueryKind::verify_reject;
  out[2].phrasing = facts::Phrasing::asks_correct;
  out[2].problem = prompts::natural_sentence(prompts::NaturalKind::verification, fact.dataset, bindings_for(corrupted));
  out[2].candidate = answer_string(corrupted);
  out[2].ground_truth = false;
  const auto m = tags.find("noise_method");
  out[2].candidate_source = m == tags.end()                ? facts::CandidateSource::numeric_perturbation
                            : m->second == "ranked_noise" ? facts::CandidateSource::ranked_noise
                                                           : facts::CandidateSource::random_noise;
  if (out[2].problem == out[1].problem) {
    throw NoiseRejected("corrupted statement renders identically for fact " + fact.id);
  }
  for (auto& q : out) q.id = facts::make_query_id(q);
  return out;
}

namespace {

struct Corruption {
  NaturalFact fact;
  std::map<std::string, std::string> tags;
};

Corruption corrupt(const NaturalFact& f, const NaturalSource& src, const SamplingConfig& cfg, Rng& rng) {
  Corruption c{f, {{"year", std::to_string(f.year())}}};
  std::visit(overloaded{
                 [&](const MarketPayload& p) {
                   const auto noise = sample_market_noise(rng, cfg.market_mode);
                   auto q = p;
                   q.close = apply_market_noise(p.close, noise.factor, p.decimals);
                   c.fact.payload = q;
                   c.tags["factor"] = std::to_string(noise.factor);
                 },
                 [&](const NbaPayload& p) {
                   const auto noise = sample_nba_noise(rng);
                   auto q = p;
                   std::tie(q.points_1, q.points_2) = apply_nba_noise({p.points_1, p.points_2}, noise);
                   c.fact.payload = q;
                   c.tags["deltas"] = std::to_string(noise.delta_1) + "," + std::to_string(noise.delta_2);
                 },
                 [&](const LotteryPayload& p) {
                   const auto noise = sample_lottery_noise(rng);
                   auto q = p;
                   q.numbers = apply_lottery_noise(p.numbers, noise, f.date);
                   c.fact.payload = q;
                   c.tags["indices"] = std::to_string(noise.indices[0]) + "," + std::to_string(noise.indices[1]);
                 },
                 [&](const BillboardPayload& p) {
                   const bool ranked = rng.bernoulli(cfg.ranked_share);
                   auto q = p;
                   int offset = 0, effective = 0;
                   if (ranked) {
                     offset = stats::kOffsets[rng.index(stats::kOffsets.size())];
                     const auto r = billboard_ranked_noise(*src.archive, f.date, p.rank, offset);
                     if (!r.substitute) throw NoiseRejected(r.skip_reason);
                     q.track = r.substitute->entry.track;
                     q.artist = r.substitute->entry.artist;
                     effective = r.substitute->effective_offset;
                   } else {
                     // random substitutes come from week T+k's top pool
                     const auto idx = *src.archive->week_index(f.date);
                     const std::size_t draw = rng.index(stats::kOffsets.size() + 1);
                     offset = draw == 0 ? 0 : stats::kOffsets[draw - 1];
                     const long at = static_cast<long>(idx) + offset;
                     if (at < 0 || at >= static_cast<long>(src.archive->weeks().size())) {
                       throw NoiseRejected("week offset " + std::to_string(offset) + " leaves the archive");
                     }
                     const auto e = random_excluding(src.archive->chart(src.archive->weeks()[at]), p.track,
                                                     cfg.pool_size, rng);
                     q.track = e.track;
                     q.artist = e.artist;
                     effective = offset;
                   }
                   c.fact.payload = q;
                   c.tags["noise_method"] = ranked ? "ranked_noise" : "random_noise";
                   c.tags["offset"] = std::to_string(offset);
                   c.tags["effective_offset"] = std::to_string(effective);
                   c.tags["rank"] = std::to_string(p.rank);
                 },
             },
             f.payload);
  if (f.dataset == "market") c.tags["market_mode"] = to_string(cfg.market_mode);
  return c;
}

struct YearResult {
  std::vector<NaturalFact> facts;
  std::vector<facts::QuerySpec> queries;
  std::vector<SkipEntry> skips;
};

YearResult build_year(const NaturalSource& src, std::vector<const NaturalFact*> rows, int year,
                      const SamplingConfig& cfg, std::uint64_t seed) {
  YearResult out;
  std::sort(rows.begin(), rows.end(), [](const NaturalFact* a, const NaturalFact* b) { return a->id < b->id; });
  Rng rng(derive_seed(seed, src.dataset + ":" + std::to_string(year)));
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.index(i)]);

  for (const NaturalFact* f : rows) {
    if (static_cast<int>(out.facts.size()) == cfg.per_year) break;
    if (src.dataset == "billboard" && std::get<BillboardPayload>(f->payload).rank > cfg.max_rank) continue;
    Rng fact_rng(derive_seed(seed, f->id));
    std::string last;
    bool done = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !done; ++attempt) {
      try {
        auto c = corrupt(*f, src, cfg, fact_rng);
        auto qs = queries_for(*f, c.fact, c.tags);
        out.facts.push_back(*f);
        out.queries.insert(out.queries.end(), qs.begin(), qs.end());
        done = true;
      } catch (const NoiseRejected& e) {
        last = e.what();
      } catch (const PreconditionError& e) {
        last = e.what();
        break;  // structural: resampling cannot help
      }
    }
    if (!done) out.skips.push_back({f->id, last});
  }
  if (static_cast<int>(out.facts.size()) < cfg.per_year) {
    throw PreconditionError(src.dataset + " year " + std::to_string(year) + ": only " +
                            std::to_string(out.facts.size()) + " usable rows for " + std::to_string(cfg.per_year) +
                            " requested");
  }
  return out;
}

}  // namespace

NaturalQuerySet build_query_set(const NaturalSource& src, const SamplingConfig& cfg, std::uint64_t seed) {
  if (cfg.year_from > cfg.year_to) throw PreconditionError("year range is empty");
  if (cfg.per_year < 1) throw PreconditionError("per_year must be positive");
  if (src.dataset == "billboard" && !src.archive) throw PreconditionError("billboard source has no chart archive");

  std::map<int, std::vector<const NaturalFact*>> by_year;
  for (const auto& f : src.rows) by_year[f.year()].push_back(&f);

  const int n_years = cfg.year_to - cfg.year_from + 1;
  std::vector<YearResult> results(static_cast<std::size_t>(n_years));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_years));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_years; ++i) {
    const int year = cfg.year_from + i;
    try {
      const auto it = by_year.find(year);
      if (it == by_year.end()) {
        throw PreconditionError(src.dataset + " year " + std::to_string(year) + ": no source rows");
      }
      results[static_cast<std::size_t>(i)] = build_year(src, it->second, year, cfg, seed);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  NaturalQuerySet set;
  for (auto& r : results) {
    set.facts.insert(set.facts.end(), r.facts.begin(), r.facts.end());
    set.queries.insert(set.queries.end(), r.queries.begin(), r.queries.end());
    set.skips.insert(set.skips.end(), r.skips.begin(), r.skips.end());
  }
  return set;
}

std::vector<Discrepancy> discrepancy_report(const NaturalSource& left, const NaturalSource& right) {
  if (left.dataset != right.dataset) throw PreconditionError("exports belong to different datasets");
  std::map<std::string, const NaturalFact*> l, r;
  for (const auto& f : left.rows) l[fact_key(f)] = &f;
  for (const auto& f : right.rows) r[fact_key(f)] = &f;
  std::vector<Discrepancy> out;
  for (const auto& [k, f] : l) {
    const auto it = r.find(k);
    if (it == r.end()) {
      out.push_back({k, "missing", "present", "absent"});
      continue;
    }
    const std::string a = answer_string(*f), b = answer_string(*it->second);
    if (a != b) out.push_back({k, "value", a, b});
  }
  for (const auto& [k, f] : r) {
    if (!l.count(k)) out.push_back({k, "missing", "absent", "present"});
  }
  std::sort(out.begin(), out.end(), [](const Discrepancy& a, const Discrepancy& b) { return a.key < b.key; });
  return out;
}

json to_json(const NaturalFact& f) {
  json j{{"id", f.id}, {"dataset", f.dataset}, {"date", f.date}};
  std::visit(overloaded{
                 [&](const MarketPayload& p) {
                   j["ticker"] = p.ticker;
                   j["close"] = p.close;
                   j["decimals"] = p.decimals;
                 },
                 [&](const NbaPayload& p) {
                   j["team_1"] = p.team_1;
                   j["team_2"] = p.team_2;
                   j["team_1_points"] = p.points_1;
                   j["team_2_points"] = p.points_2;
                 },
                 [&](const LotteryPayload& p) {
                   j["numbers"] = p.numbers;
                   j["mega"] = p.mega;
                 },
                 [&](const BillboardPayload& p) {
                   j["rank"] = p.rank;
                   j["track"] = p.track;
                   j["artist"] = p.artist;
                 },
             },
             f.payload);
  return j;
}

NaturalFact natural_fact_from_json(const json& j) {
  try {
    NaturalFact f;
    f.id = j.at("id").get<std::string>();
    f.dataset = j.at("dataset").get<std::string>();
    f.date = j.at("date").get<std::string>();
    if (f.dataset == "market") {
      f.payload = MarketPayload{j.at("ticker").get<std::string>(), j.at("close").get<double>(),
                                j.value("decimals", 2)};
    } else if (f.dataset == "nba") {
      f.payload = NbaPayload{j.at("team_1").get<std::string>(), j.at("team_2").get<std::string>(),
                             j.at("team_1_points").get<int>(), j.at("team_2_points").get<int>()};
    } else if (f.dataset == "lottery") {
      f.payload = LotteryPayload{j.at("numbers").get<std::array<int, 5>>(), j.at("mega").get<int>()};
    } else if (f.dataset == "billboard") {
      f.payload = BillboardPayload{j.at("rank").get<int>(), j.at("track").get<std::string>(),
                                   j.value("artist", std::string{})};
    } else {
      throw ParseError("unknown dataset '" + f.dataset + "'");
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("natural fact: ") + e.what());
  }
}

json to_json(const Discrepancy& d) {
  return json{{"key", d.key}, {"field", d.field}, {"left", d.left}, {"right", d.right}};
}

}  // namespace gvgap::natural
