#include "gvgap/lifecycle/lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gvgap/common/csv.hpp"
#include "gvgap/common/error.hpp"
#include "gvgap/common/text.hpp"

namespace gvgap::lifecycle {

using facts::QueryKind;
using facts::QueryRole;
using facts::TailVariant;
using grading::EvalRecord;

void CurveSet::validate() const {
  std::set<std::string> closed;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0 && points[i].epoch <= points[i - 1].epoch) {
      throw PreconditionError("curve epochs must be strictly increasing (epoch " + std::to_string(points[i].epoch) +
                              " after " + std::to_string(points[i - 1].epoch) + ")");
    }
    if (i > 0 && points[i].phase != points[i - 1].phase) {
      closed.insert(points[i - 1].phase);
      if (closed.count(points[i].phase)) {
        throw PreconditionError("phase '" + points[i].phase + "' reappears at epoch " +
                                std::to_string(points[i].epoch));
      }
    }
  }
}

namespace {

double rate_or_zero(const metrics::Counts& c) { return c.trials ? c.rate() : 0.0; }

// Old tail accepted: every target record on the superseded tail was judged
// true. New tail accepted: every target accept record on the new tail was.
struct UpdateState {
  std::size_t old_n = 0, old_acc = 0;
  std::size_t new_n = 0, new_acc = 0;
  bool gen_seen = false, gen_correct = false;
  std::string gen_answer;
  bool old_accepted() const { return old_n > 0 && old_acc == old_n; }
  bool new_accepted() const { return new_n > 0 && new_acc == new_n; }
};

void observe(UpdateState& s, const EvalRecord& r) {
  if (r.role != QueryRole::target) return;
  if (r.kind == QueryKind::generative) {
    s.gen_seen = true;
    s.gen_correct = r.verdict.valid && r.verdict.correct;
    s.gen_answer = r.verdict.extracted_answer;
  } else if (r.tail_variant == TailVariant::original) {
    ++s.old_n;
    if (r.verdict.valid && !r.verdict.correct) ++s.old_acc;
  } else if (r.tail_variant == TailVariant::updated && r.kind == QueryKind::verify_accept) {
    ++s.new_n;
    if (r.verdict.valid && r.verdict.correct) ++s.new_acc;
  }
}

CurvePoint point_from(int epoch, const std::vector<EvalRecord>& recs, metrics::VerificationUnit unit) {
  CurvePoint p;
  p.epoch = epoch;
  p.phase = grading::to_string(recs.front().phase);
  const auto table = metrics::VerdictTable::from_records(recs, unit);
  p.u_g = rate_or_zero(table.generative());
  p.accept_correct = rate_or_zero(table.accept());
  p.reject_incorrect = rate_or_zero(table.reject());
  p.u_v = metrics::verification_utility(p.accept_correct, p.reject_incorrect, 0.5);

  if (recs.front().phase == grading::Phase::update) {
    std::map<std::string, UpdateState> by_fact;
    for (const auto& r : recs) observe(by_fact[r.fact_id], r);
    std::size_t old_n = 0, old_acc = 0, new_n = 0, new_acc = 0;
    for (const auto& [id, s] : by_fact) {
      if (s.old_n) {
        ++old_n;
        old_acc += s.old_accepted();
      }
      if (s.new_n) {
        ++new_n;
        new_acc += s.new_accepted();
      }
    }
    if (old_n) p.old_accept = static_cast<double>(old_acc) / static_cast<double>(old_n);
    if (new_n) p.new_accept = static_cast<double>(new_acc) / static_cast<double>(new_n);
  }
  return p;
}

CurveSet build_curve(const std::vector<EvalRecord>& records, metrics::VerificationUnit unit) {
  std::map<int, std::vector<EvalRecord>> by_epoch;
  for (const auto& r : records) {
    if (r.epoch) by_epoch[*r.epoch].push_back(r);
  }
  CurveSet c;
  for (const auto& [epoch, recs] : by_epoch) {
    for (const auto& r : recs) {
      if (r.phase != recs.front().phase) {
        throw PreconditionError("epoch " + std::to_string(epoch) + " mixes phases " +
                                grading::to_string(recs.front().phase) + " and " + grading::to_string(r.phase));
      }
    }
    c.points.push_back(point_from(epoch, recs, unit));
  }
  c.validate();
  return c;
}

std::optional<int> first_crossing(const CurveSet& c, double CurvePoint::*field, const EmergenceConfig& cfg) {
  const auto& pts = c.points;
  const std::size_t s = static_cast<std::size_t>(cfg.sustain);
  for (std::size_t i = 0; i + s <= pts.size(); ++i) {
    bool ok = true;
    for (std::size_t j = i; j < i + s; ++j) {
      if (pts[j].*field < cfg.threshold) {
        ok = false;
        break;
      }
    }
    if (ok) return pts[i].epoch;
  }
  return std::nullopt;
}

}  // namespace

CurveSet curves_from_records(const std::vector<EvalRecord>& records, metrics::VerificationUnit unit) {
  return build_curve(records, unit);
}

std::map<std::string, CurveSet> curves_per_fact(const std::vector<EvalRecord>& records,
                                                metrics::VerificationUnit unit) {
  std::map<std::string, std::vector<EvalRecord>> by_fact;
  for (const auto& r : records) by_fact[r.fact_id].push_back(r);
  std::map<std::string, CurveSet> out;
  for (const auto& [id, recs] : by_fact) out.emplace(id, build_curve(recs, unit));
  return out;
}

GapAnalysis detect_emergence(const CurveSet& curve, const EmergenceConfig& cfg) {
  if (cfg.sustain < 1) throw PreconditionError("sustain must be at least 1");
  if (!(cfg.threshold > 0.0 && cfg.threshold <= 1.0)) throw PreconditionError("threshold must lie in (0, 1]");
  curve.validate();
  GapAnalysis g;
  g.e_v = first_crossing(curve, &CurvePoint::u_v, cfg);
  g.e_g = first_crossing(curve, &CurvePoint::u_g, cfg);
  g.converged = g.e_v.has_value() && g.e_g.has_value();
  if (g.e_v) {
    g.window_start = g.e_v;
    g.window_end = g.e_g;
    g.window_empty = g.e_g && *g.e_g <= *g.e_v;
  }
  g.area = gap_area(curve);
  return g;
}

double gap_area(const std::vector<int>& epochs, const std::vector<double>& d) {
  if (epochs.size() != d.size()) throw PreconditionError("gap_area: epochs and values differ in length");
  double area = 0.0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const double h = static_cast<double>(epochs[i] - epochs[i - 1]);
    if (h <= 0) throw PreconditionError("gap_area: epochs must be strictly increasing");
    const double a = d[i - 1], b = d[i];
    if (a >= 0 && b >= 0) {
      area += h * (a + b) / 2.0;
    } else if (a > 0 || b > 0) {
      // sign change: only the triangle above zero counts
      const double pos = std::max(a, b);
      area += h * pos * pos / (2.0 * (std::fabs(a) + std::fabs(b)));
    }
  }
  return area;
}

double gap_area(const CurveSet& curve) {
  std::vector<int> e;
  std::vector<double> d;
  for (const auto& p : curve.points) {
    e.push_back(p.epoch);
    d.push_back(p.u_v - p.u_g);
  }
  return gap_area(e, d);
}

Floor robustness_floor(const CurveSet& curve, int window, std::optional<int> intervention) {
  if (window < 1) throw PreconditionError("floor window must be at least 1");
  if (static_cast<std::size_t>(window) > curve.points.size()) {
    throw PreconditionError("floor window " + std::to_string(window) + " exceeds curve length " +
                            std::to_string(curve.points.size()));
  }
  Floor f;
  f.window = window;
  f.intervention = intervention;
  for (auto it = curve.points.end() - window; it != curve.points.end(); ++it) {
    f.u_g += it->u_g;
    f.u_v += it->u_v;
    f.accept_correct += it->accept_correct;
    f.reject_incorrect += it->reject_incorrect;
  }
  f.u_g /= window;
  f.u_v /= window;
  f.accept_correct /= window;
  f.reject_incorrect /= window;
  return f;
}

MultiverseReport detect_multiverse(const std::vector<EvalRecord>& records,
                                   const std::map<std::string, std::string>& old_tails) {
  std::map<std::string, std::map<int, UpdateState>> states;
  for (const auto& r : records) {
    if (r.phase != grading::Phase::update) continue;
    if (!r.epoch) throw PreconditionError("update record " + r.query_id + " has no epoch");
    observe(states[r.fact_id][*r.epoch], r);
  }

  MultiverseReport rep;
  std::map<int, std::pair<std::size_t, std::size_t>> per_epoch;  // flagged, facts
  for (const auto& [fact, by_epoch] : states) {
    bool broken = false;
    for (const auto& [epoch, s] : by_epoch) {
      if (!s.old_n || !s.new_n) {
        rep.errors[fact] = "epoch " + std::to_string(epoch) + ": missing " +
                           std::string(!s.old_n ? "superseded-tail" : "new-tail") + " verification records";
        broken = true;
        break;
      }
    }
    if (broken) continue;
    for (const auto& [epoch, s] : by_epoch) {
      auto& pe = per_epoch[epoch];
      ++pe.second;
      if (s.old_accepted() && s.new_accepted()) ++pe.first;
    }
    const auto& [epoch, s] = *by_epoch.rbegin();
    MultiverseFlag f;
    f.fact_id = fact;
    f.epoch = epoch;
    f.old_accepted = s.old_accepted();
    f.new_accepted = s.new_accepted();
    f.flagged = f.old_accepted && f.new_accepted;
    f.generation_flipped = s.gen_seen && s.gen_correct;
    if (f.generation_flipped) {
      auto it = old_tails.find(fact);
      if (it != old_tails.end() && text::contains_folded(s.gen_answer, it->second)) f.generation_flipped = false;
    }
    rep.final_flags.push_back(f);
  }
  if (!rep.final_flags.empty()) {
    const double n = static_cast<double>(rep.final_flags.size());
    rep.rate = static_cast<double>(std::count_if(rep.final_flags.begin(), rep.final_flags.end(),
                                                 [](const MultiverseFlag& f) { return f.flagged; })) / n;
    rep.flipped_rate = static_cast<double>(std::count_if(rep.final_flags.begin(), rep.final_flags.end(),
                                                         [](const MultiverseFlag& f) { return f.generation_flipped; })) /
                       n;
  }
  for (const auto& [epoch, c] : per_epoch) {
    rep.rate_by_epoch[epoch] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  return rep;
}

std::string curve_csv(const CurveSet& curve) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,phase,u_g,u_v,accept_correct,reject_incorrect,old_accept,new_accept,loss\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& p : curve.points) {
    os << p.epoch << ',' << csv_field(p.phase) << ',' << p.u_g << ',' << p.u_v << ',' << p.accept_correct << ','
       << p.reject_incorrect << ',';
    opt(p.old_accept);
    os << ',';
    opt(p.new_accept);
    os << ',';
    opt(p.loss);
    os << '\n';
  }
  return os.str();
}

namespace {
json opt_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

json to_json(const GapAnalysis& g) {
  return json{{"e_v", opt_json(g.e_v)},
              {"e_g", opt_json(g.e_g)},
              {"window_start", opt_json(g.window_start)},
              {"window_end", opt_json(g.window_end)},
              {"window_empty", g.window_empty},
              {"converged", g.converged},
              {"area", g.area}};
}

json to_json(const Floor& f) {
  return json{{"u_g", f.u_g},
              {"u_v", f.u_v},
              {"accept_correct", f.accept_correct},
              {"reject_incorrect", f.reject_incorrect},
              {"window", f.window},
              {"intervention", opt_json(f.intervention)}};
}

json to_json(const MultiverseReport& m) {
  json flags = json::array();
  for (const auto& f : m.final_flags) {
    flags.push_back({{"fact_id", f.fact_id},
                     {"epoch", f.epoch},
                     {"old_accepted", f.old_accepted},
                     {"new_accepted", f.new_accepted},
                     {"flagged", f.flagged},
                     {"generation_flipped", f.generation_flipped}});
  }
  json by_epoch = json::object();
  for (const auto& [e, r] : m.rate_by_epoch) by_epoch[std::to_string(e)] = r;
  return json{{"rate", m.rate},
              {"flipped_rate", m.flipped_rate},
              {"rate_by_epoch", by_epoch},
              {"facts", flags},
              {"errors", m.errors}};
}

}  // namespace gvgap::lifecycle
