#include "gvgap/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

namespace gvgap::metrics {

using facts::Phrasing;
using facts::QueryKind;
using grading::EvalRecord;

double Counts::rate() const {
  if (trials == 0) throw PreconditionError("rate of an empty count");
  return static_cast<double>(successes) / static_cast<double>(trials);
}

Interval confidence_interval(std::size_t k, std::size_t n, double level) {
  if (n == 0) throw PreconditionError("confidence interval needs n >= 1");
  if (k > n) throw PreconditionError("confidence interval needs k <= n");
  if (!(level > 0.0 && level < 1.0)) throw PreconditionError("confidence level must be in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - level) / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (k == 0) ci.lo = 0.0;
  if (k == n) ci.hi = 1.0;
  return ci;
}

double verification_utility(double accept_correct, double reject_incorrect, double alpha) {
  return (1.0 - alpha) * accept_correct + alpha * reject_incorrect;
}

double chance_corrected(double uv, double alpha) { return uv - std::max(alpha, 1.0 - alpha); }

void validate(const MetricConfig& cfg) {
  for (double a : cfg.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw PreconditionError("alpha " + std::to_string(a) + " outside [0, 1]");
  }
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) throw PreconditionError("ci_level must be in (0, 1)");
}

// ---------------------------------------------------------------- table

Counts VerdictTable::generative() const {
  Counts c;
  for (const auto& r : rows) c += r.generative;
  return c;
}
Counts VerdictTable::accept() const {
  Counts c;
  for (const auto& r : rows) c += r.accept;
  return c;
}
Counts VerdictTable::reject() const {
  Counts c;
  for (const auto& r : rows) c += r.reject;
  return c;
}

namespace {

std::string pairing_key(const EvalRecord& r) {
  json j{r.fact_id, facts::to_string(r.kind), facts::to_string(r.tail_variant), r.model, grading::to_string(r.phase),
         r.epoch ? json(*r.epoch) : json(nullptr), r.tags, r.dataset};
  return j.dump();
}

void tally(FactRow& row, QueryKind kind, bool correct) {
  Counts* c = kind == QueryKind::generative ? &row.generative
              : kind == QueryKind::verify_accept ? &row.accept
                                                  : &row.reject;
  ++c->trials;
  c->successes += correct ? 1 : 0;
}

}  // namespace

VerdictTable VerdictTable::from_records(const std::vector<EvalRecord>& records, VerificationUnit unit) {
  std::map<std::string, FactRow> rows;
  auto row_for = [&rows](const std::string& fact) -> FactRow& {
    FactRow& r = rows[fact];
    r.fact_id = fact;
    return r;
  };
  // Pending unpaired verification records by pairing key.
  std::map<std::string, std::deque<const EvalRecord*>> pending;

  for (const auto& rec : records) {
    if (rec.role != facts::QueryRole::target) continue;
    FactRow& row = row_for(rec.fact_id);
    if (rec.verdict.valid || rec.verdict.refusal) {
      ++row.refusal_denominator;
      row.refusals += rec.verdict.refusal ? 1 : 0;
    }
    if (rec.kind == QueryKind::generative || unit == VerificationUnit::per_phrasing ||
        rec.phrasing == Phrasing::none) {
      tally(row, rec.kind, rec.verdict.correct);
      continue;
    }
    auto& queue = pending[pairing_key(rec)];
    const auto partner = std::find_if(queue.begin(), queue.end(),
                                      [&](const EvalRecord* p) { return p->phrasing != rec.phrasing; });
    if (partner == queue.end()) {
      queue.push_back(&rec);
      continue;
    }
    const EvalRecord* other = *partner;
    queue.erase(partner);
    const auto& vc = rec.phrasing == Phrasing::asks_correct ? rec.verdict : other->verdict;
    const auto& vi = rec.phrasing == Phrasing::asks_correct ? other->verdict : rec.verdict;
    tally(row, rec.kind, grading::combine_double_critic(vc, vi).correct);
  }
  for (const auto& [_, queue] : pending) {
    for (const EvalRecord* lone : queue) tally(rows.at(lone->fact_id), lone->kind, lone->verdict.correct);
  }
  VerdictTable t;
  for (auto& [_, r] : rows) t.rows.push_back(std::move(r));
  return t;
}

// ------------------------------------------------------------ utilities

UtilityReport utilities_from_rates(double u_g, double accept_correct, double reject_incorrect,
                                   const std::vector<double>& alphas) {
  UtilityReport r;
  r.u_g = u_g;
  r.accept_correct = accept_correct;
  r.reject_incorrect = reject_incorrect;
  for (double a : alphas) {
    const double uv = verification_utility(accept_correct, reject_incorrect, a);
    r.by_alpha.push_back({a, uv, chance_corrected(uv, a)});
  }
  r.balanced = verification_utility(accept_correct, reject_incorrect, 0.5);
  r.gap = r.balanced - u_g;
  r.bias = accept_correct - reject_incorrect;
  return r;
}

UtilityReport compute_utilities(const VerdictTable& table, const MetricConfig& cfg, const std::string& group) {
  validate(cfg);
  if (table.empty()) throw PreconditionError("group '" + group + "' has no records");
  const Counts g = table.generative(), a = table.accept(), rj = table.reject();
  if (g.trials == 0) throw PreconditionError("group '" + group + "' has no generative records");
  if (a.trials == 0) throw PreconditionError("group '" + group + "' has no accept (true-statement) records");
  if (rj.trials == 0) throw PreconditionError("group '" + group + "' has no reject (false-statement) records");

  UtilityReport r = utilities_from_rates(g.rate(), a.rate(), rj.rate(), cfg.alphas);
  r.group = group;
  r.generative = g;
  r.accept = a;
  r.reject = rj;
  r.facts = table.rows.size();
  for (const auto& row : table.rows) {
    r.refusals += row.refusals;
    r.refusal_denominator += row.refusal_denominator;
  }
  if (r.refusal_denominator > 0) {
    r.refusal_rate = static_cast<double>(r.refusals) / static_cast<double>(r.refusal_denominator);
  }
  r.ci_g = confidence_interval(g.successes, g.trials, cfg.ci_level);
  r.ci_accept = confidence_interval(a.successes, a.trials, cfg.ci_level);
  r.ci_reject = confidence_interval(rj.successes, rj.trials, cfg.ci_level);

  std::vector<double> d;
  for (const auto& row : table.rows) {
    if (row.generative.trials == 0 || row.accept.trials == 0 || row.reject.trials == 0) continue;
    d.push_back(verification_utility(row.accept.rate(), row.reject.rate(), 0.5) - row.generative.rate());
  }
  if (d.size() >= 2) r.gap_se = paired_se(d);
  return r;
}

SelfConsistencyReport compute_self_consistency(double u_g, double accept_correct, double reject_incorrect,
                                               int samples_per_query) {
  for (double v : {u_g, accept_correct, reject_incorrect}) {
    if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("self-consistency inputs must lie in [0, 1]");
  }
  if (samples_per_query < 1) throw PreconditionError("samples_per_query must be >= 1");
  SelfConsistencyReport s;
  s.alpha_m = 1.0 - u_g;
  s.u_sv = (1.0 - s.alpha_m) * accept_correct + s.alpha_m * reject_incorrect;
  s.delta = s.u_sv - u_g;
  s.samples_per_query = samples_per_query;
  return s;
}

Dispute adjudicate_dispute(double a, double r) {
  if (!(a >= 0.0 && a <= 1.0 && r >= 0.0 && r <= 1.0)) throw PreconditionError("dispute inputs must lie in [0, 1]");
  return Dispute{a * r, (1.0 - a) * (1.0 - r), a * (1.0 - r), (1.0 - a) * r};
}

// ------------------------------------------------------- paired models

namespace {

void require_same_keys(const std::map<std::string, bool>& a, const std::map<std::string, bool>& b) {
  if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(),
                                          [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw PreconditionError("paired comparison needs the same query set for both models (" +
                            std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " queries)");
  }
}

std::string capability(const EvalRecord& r) {
  switch (r.kind) {
    case QueryKind::generative: return "generation";
    case QueryKind::verify_accept: return "verify_correct";
    case QueryKind::verify_reject: return "verify_incorrect";
  }
  return "?";
}

// Query ids are shared across models; the model id is not part of them.
std::map<std::string, std::map<std::string, bool>> by_capability(const std::vector<EvalRecord>& records,
                                                                  bool failures) {
  std::map<std::string, std::map<std::string, bool>> out;
  for (const auto& r : records) {
    if (r.role != facts::QueryRole::target) continue;
    std::string key = r.query_id;
    if (r.epoch) key += "@" + std::to_string(*r.epoch);
    out[capability(r)][key] = failures ? !r.verdict.correct : r.verdict.correct;
  }
  return out;
}

}  // namespace

Disagreement disagreement_stats(const std::map<std::string, bool>& m1, const std::map<std::string, bool>& m2) {
  require_same_keys(m1, m2);
  Disagreement d;
  d.n = m1.size();
  for (auto a = m1.begin(), b = m2.begin(); a != m1.end(); ++a, ++b) {
    if (a->second == b->second) continue;
    ++d.one_right;
    d.m1_right += a->second ? 1 : 0;
  }
  d.rate = d.n ? static_cast<double>(d.one_right) / static_cast<double>(d.n) : 0.0;
  if (d.one_right) d.p_m1 = static_cast<double>(d.m1_right) / static_cast<double>(d.one_right);
  return d;
}

std::map<std::string, Disagreement> disagreement_by_capability(const std::vector<EvalRecord>& m1,
                                                               const std::vector<EvalRecord>& m2) {
  const auto a = by_capability(m1, false), b = by_capability(m2, false);
  std::map<std::string, Disagreement> out;
  for (const auto& [cap, verdicts] : a) {
    const auto it = b.find(cap);
    if (it == b.end()) throw PreconditionError("second model has no '" + cap + "' records");
    out[cap] = disagreement_stats(verdicts, it->second);
  }
  if (b.size() != a.size()) throw PreconditionError("models cover different capabilities");
  return out;
}

Lift wrong_agreement_lift(const std::map<std::string, bool>& m1_failed, const std::map<std::string, bool>& m2_failed) {
  require_same_keys(m1_failed, m2_failed);
  Lift l;
  l.n = m1_failed.size();
  if (l.n == 0) return l;
  std::size_t f1 = 0, f2 = 0, joint = 0;
  for (auto a = m1_failed.begin(), b = m2_failed.begin(); a != m1_failed.end(); ++a, ++b) {
    f1 += a->second;
    f2 += b->second;
    joint += a->second && b->second;
  }
  const double n = static_cast<double>(l.n);
  l.raw = static_cast<double>(joint) / n;
  l.m1_rate = static_cast<double>(f1) / n;
  l.m2_rate = static_cast<double>(f2) / n;
  if (f1 && f2) l.lift = l.raw / (l.m1_rate * l.m2_rate);
  return l;
}

std::map<std::string, Lift> lift_by_failure_mode(const std::vector<EvalRecord>& m1, const std::vector<EvalRecord>& m2) {
  const auto a = by_capability(m1, true), b = by_capability(m2, true);
  std::map<std::string, Lift> out;
  const std::pair<const char*, const char*> modes[] = {{"accept_incorrect", "verify_incorrect"},
                                                       {"reject_correct", "verify_correct"}};
  for (const auto& [mode, cap] : modes) {
    const auto ia = a.find(cap), ib = b.find(cap);
    if (ia == a.end() || ib == b.end()) continue;
    out[mode] = wrong_agreement_lift(ia->second, ib->second);
  }
  return out;
}

std::optional<double> subset_violation_rate(const std::set<std::string>& correct_large,
                                            const std::set<std::string>& correct_small) {
  if (correct_large.empty()) return std::nullopt;
  std::size_t extra = 0;
  for (const auto& f : correct_small) extra += correct_large.count(f) == 0;
  return static_cast<double>(extra) / static_cast<double>(correct_large.size());
}

// ---------------------------------------------------------- aggregation

double aggregate(const std::vector<Counts>& groups, AggregateMode mode) {
  if (groups.empty()) throw PreconditionError("aggregate of no groups");
  if (mode == AggregateMode::micro) {
    Counts total;
    for (const auto& g : groups) total += g;
    return total.rate();
  }
  double sum = 0.0;
  for (const auto& g : groups) sum += g.rate();
  return sum / static_cast<double>(groups.size());
}

UtilityReport aggregate(const std::vector<UtilityReport>& reports, AggregateMode mode, const MetricConfig& cfg,
                        const std::string& group) {
  if (reports.empty()) throw PreconditionError("aggregate of no reports");
  std::vector<Counts> g, a, rj;
  std::size_t refusals = 0, denominator = 0, facts = 0;
  std::vector<double> refusal_rates;
  for (const auto& r : reports) {
    g.push_back(r.generative);
    a.push_back(r.accept);
    rj.push_back(r.reject);
    refusals += r.refusals;
    denominator += r.refusal_denominator;
    facts += r.facts;
    if (r.refusal_rate) refusal_rates.push_back(*r.refusal_rate);
  }
  UtilityReport out = utilities_from_rates(aggregate(g, mode), aggregate(a, mode), aggregate(rj, mode), cfg.alphas);
  out.group = group;
  out.facts = facts;
  out.refusals = refusals;
  out.refusal_denominator = denominator;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out.generative += g[i];
    out.accept += a[i];
    out.reject += rj[i];
  }
  if (mode == AggregateMode::micro) {
    if (denominator) out.refusal_rate = static_cast<double>(refusals) / static_cast<double>(denominator);
    out.ci_g = confidence_interval(out.generative.successes, out.generative.trials, cfg.ci_level);
    out.ci_accept = confidence_interval(out.accept.successes, out.accept.trials, cfg.ci_level);
    out.ci_reject = confidence_interval(out.reject.successes, out.reject.trials, cfg.ci_level);
  } else {
    if (!refusal_rates.empty()) {
      out.refusal_rate = std::accumulate(refusal_rates.begin(), refusal_rates.end(), 0.0) /
                         static_cast<double>(refusal_rates.size());
    }
    // Equal-weight mean of independent group rates: normal interval from the
    // summed binomial variances.
    const double z = boost::math::quantile(boost::math::normal(), 1.0 - (1.0 - cfg.ci_level) / 2.0);
    auto macro_ci = [&](const std::vector<Counts>& cs, double mean) {
      double var = 0.0;
      for (const auto& c : cs) var += c.rate() * (1.0 - c.rate()) / static_cast<double>(c.trials);
      const double se = std::sqrt(var) / static_cast<double>(cs.size());
      return Interval{std::max(0.0, mean - z * se), std::min(1.0, mean + z * se)};
    };
    out.ci_g = macro_ci(g, out.u_g);
    out.ci_accept = macro_ci(a, out.accept_correct);
    out.ci_reject = macro_ci(rj, out.reject_incorrect);
    std::vector<double> ses;
    for (const auto& r : reports) {
      if (r.gap_se) ses.push_back(*r.gap_se);
    }
    if (!ses.empty()) out.gap_se = std::accumulate(ses.begin(), ses.end(), 0.0) / static_cast<double>(ses.size());
  }
  return out;
}

double paired_se(const std::vector<double>& d) {
  if (d.size() < 2) throw PreconditionError("paired SE needs at least 2 differences");
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

double paired_se_macro(const std::map<std::string, std::vector<double>>& d_by_dataset) {
  if (d_by_dataset.empty()) throw PreconditionError("macro paired SE of no datasets");
  double sum = 0.0;
  for (const auto& [_, d] : d_by_dataset) sum += paired_se(d);
  return sum / static_cast<double>(d_by_dataset.size());
}

RefusalRate refusal_rate(const std::vector<EvalRecord>& records) {
  RefusalRate r;
  for (const auto& rec : records) {
    if (!rec.verdict.valid && !rec.verdict.refusal) continue;
    ++r.denominator;
    r.refusals += rec.verdict.refusal ? 1 : 0;
  }
  return r;
}

std::string group_key(const EvalRecord& r, const std::vector<std::string>& keys) {
  std::string out;
  for (const auto& k : keys) {
    std::string v;
    if (k == "dataset") {
      v = r.dataset.empty() ? "synthetic" : r.dataset;
    } else if (k == "category") {
      v = r.category;
    } else if (k == "year") {
      const auto it = r.tags.find("year");
      v = it == r.tags.end() ? "" : it->second;
    } else if (k == "epoch") {
      v = r.epoch ? std::to_string(*r.epoch) : "";
    } else if (k == "model") {
      v = r.model;
    } else if (k == "phase") {
      v = grading::to_string(r.phase);
    } else {
      throw PreconditionError("unknown grouping key '" + k + "'");
    }
    if (!out.empty()) out += '/';
    out += v;
  }
  return out.empty() ? "all" : out;
}

std::map<std::string, std::vector<EvalRecord>> group_records(const std::vector<EvalRecord>& records,
                                                             const std::vector<std::string>& keys) {
  std::map<std::string, std::vector<EvalRecord>> out;
  for (const auto& r : records) out[group_key(r, keys)].push_back(r);
  return out;
}

// -------------------------------------------------------------- output

namespace {

json counts_json(const Counts& c) { return json{{"successes", c.successes}, {"trials", c.trials}}; }

json interval_json(const std::optional<Interval>& i) {
  if (!i) return nullptr;
  return json::array({i->lo, i->hi});
}

}  // namespace

json to_json(const UtilityReport& r) {
  json alphas = json::array();
  for (const auto& p : r.by_alpha) alphas.push_back({{"alpha", p.alpha}, {"u_v", p.uv}, {"u_v_prime", p.uv_prime}});
  return json{{"group", r.group},
              {"facts", r.facts},
              {"u_g", r.u_g},
              {"u_v_accept_correct", r.accept_correct},
              {"u_v_reject_incorrect", r.reject_incorrect},
              {"u_v_balanced", r.balanced},
              {"gap", r.gap},
              {"bias", r.bias},
              {"by_alpha", alphas},
              {"refusal_rate", r.refusal_rate ? json(*r.refusal_rate) : json(nullptr)},
              {"refusals", r.refusals},
              {"refusal_denominator", r.refusal_denominator},
              {"counts",
               {{"generative", counts_json(r.generative)},
                {"accept", counts_json(r.accept)},
                {"reject", counts_json(r.reject)}}},
              {"ci",
               {{"u_g", interval_json(r.ci_g)},
                {"accept", interval_json(r.ci_accept)},
                {"reject", interval_json(r.ci_reject)}}},
              {"gap_se", r.gap_se ? json(*r.gap_se) : json(nullptr)}};
}

json to_json(const SelfConsistencyReport& r) {
  return json{{"alpha_m", r.alpha_m}, {"u_sv", r.u_sv}, {"delta", r.delta}, {"samples_per_query", r.samples_per_query}};
}

json to_json(const Dispute& d) {
  return json{{"correct_only", d.correct_only}, {"incorrect_only", d.incorrect_only}, {"both", d.both},
              {"neither", d.neither}};
}

json to_json(const Disagreement& d) {
  return json{{"n", d.n},
              {"one_right", d.one_right},
              {"rate", d.rate},
              {"p_m1_right", d.p_m1 ? json(*d.p_m1) : json(nullptr)}};
}

json to_json(const Lift& l) {
  return json{{"n", l.n},
              {"raw", l.raw},
              {"m1_rate", l.m1_rate},
              {"m2_rate", l.m2_rate},
              {"lift", l.lift ? json(*l.lift) : json(nullptr)}};
}

std::string render_utility_table(const std::vector<UtilityReport>& reports) {
  std::vector<std::string> header{"group", "U_G", "U_V", "gap", "U_V(ok)", "U_V(x)", "bias"};
  if (!reports.empty()) {
    for (const auto& p : reports.front().by_alpha) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "U_V'(%.2g)", p.alpha);
      header.emplace_back(buf);
    }
  }
  std::vector<std::vector<std::string>> cells{header};
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  for (const auto& r : reports) {
    std::vector<std::string> row{r.group, fmt(r.u_g), fmt(r.balanced), fmt(r.gap), fmt(r.accept_correct),
                                 fmt(r.reject_incorrect), fmt(r.bias)};
    for (const auto& p : r.by_alpha) row.push_back(fmt(p.uv_prime));
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) {
      if (i == 0) {
        out << row[i] << std::string(width[i] - row[i].size(), ' ');
      } else {
        out << "  " << std::string(width[i] - row[i].size(), ' ') << row[i];
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace gvgap::metrics
