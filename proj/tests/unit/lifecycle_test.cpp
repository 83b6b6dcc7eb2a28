#include <gtest/gtest.h>

#include <random>

#include "gvgap/common/error.hpp"
#include "gvgap/lifecycle/lifecycle.hpp"

using namespace gvgap;
using namespace gvgap::lifecycle;
using facts::Phrasing;
using facts::QueryKind;
using facts::TailVariant;
using grading::EvalRecord;
using grading::Phase;

namespace {

CurveSet make_curve(const std::vector<double>& ver, const std::vector<double>& gen) {
  CurveSet c;
  for (std::size_t i = 0; i < ver.size(); ++i) {
    CurvePoint p;
    p.epoch = static_cast<int>(i);
    p.phase = "acquisition";
    p.u_v = ver[i];
    p.u_g = gen[i];
    c.points.push_back(p);
  }
  return c;
}

EvalRecord rec(const std::string& fact, int epoch, Phase phase, QueryKind kind, TailVariant tv, Phrasing ph,
               bool correct) {
  EvalRecord r;
  r.fact_id = fact;
  r.query_id = fact + "-" + facts::to_string(kind) + facts::to_string(tv) + facts::to_string(ph) +
               std::to_string(epoch);
  r.kind = kind;
  r.phrasing = ph;
  r.tail_variant = tv;
  r.model = "m";
  r.phase = phase;
  r.epoch = epoch;
  r.verdict.valid = true;
  r.verdict.correct = correct;
  r.verdict.extracted_answer = correct ? "new" : "old";
  return r;
}

void push_update(std::vector<EvalRecord>& out, const std::string& fact, int epoch, bool old_acc, bool new_acc,
                 bool gen) {
  out.push_back(rec(fact, epoch, Phase::update, QueryKind::generative, TailVariant::updated, Phrasing::none, gen));
  for (auto ph : {Phrasing::asks_correct, Phrasing::asks_incorrect}) {
    out.push_back(rec(fact, epoch, Phase::update, QueryKind::verify_accept, TailVariant::updated, ph, new_acc));
    out.push_back(rec(fact, epoch, Phase::update, QueryKind::verify_reject, TailVariant::original, ph, !old_acc));
  }
}

// Midpoint rule on the linear interpolant's positive part.
double riemann(const std::vector<int>& e, const std::vector<double>& d, int steps) {
  double s = 0.0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const double h = static_cast<double>(e[i] - e[i - 1]) / steps;
    for (int k = 0; k < steps; ++k) {
      const double t = (k + 0.5) / steps;
      s += std::max(0.0, d[i - 1] + t * (d[i] - d[i - 1])) * h;
    }
  }
  return s;
}

}  // namespace

TEST(Emergence, WorkedExample) {
  const auto g = detect_emergence(make_curve({0.5, 0.55, 0.8, 0.9, 0.95, 0.95}, {0, 0, 0, 0.2, 0.6, 0.9}));
  ASSERT_TRUE(g.e_v && g.e_g);
  EXPECT_EQ(*g.e_v, 2);
  EXPECT_EQ(*g.e_g, 5);
  EXPECT_EQ(*g.window_start, 2);
  EXPECT_EQ(*g.window_end, 5);
  EXPECT_FALSE(g.window_empty);
  EXPECT_TRUE(g.converged);
}

TEST(Emergence, OpenEndedAndSustain) {
  auto g = detect_emergence(make_curve({0.8, 0.9, 0.9}, {0.1, 0.2, 0.3}));
  EXPECT_EQ(*g.e_v, 0);
  EXPECT_FALSE(g.e_g.has_value());
  EXPECT_FALSE(g.window_end.has_value());
  EXPECT_FALSE(g.converged);

  const auto c = make_curve({0.8, 0.5, 0.8, 0.8}, {0, 0, 0, 0});
  EXPECT_EQ(*detect_emergence(c).e_v, 0);
  EXPECT_EQ(*detect_emergence(c, {0.75, 2}).e_v, 2);
  EXPECT_THROW(detect_emergence(c, {0.75, 0}), PreconditionError);
}

TEST(Emergence, EpochValuesNotIndices) {
  auto c = make_curve({0.1, 0.9, 0.9}, {0.0, 0.1, 0.8});
  c.points[0].epoch = 3;
  c.points[1].epoch = 7;
  c.points[2].epoch = 12;
  const auto g = detect_emergence(c);
  EXPECT_EQ(*g.e_v, 7);
  EXPECT_EQ(*g.e_g, 12);
}

TEST(Curve, RejectsBadEpochsAndPhases) {
  auto c = make_curve({0, 0, 0}, {0, 0, 0});
  c.points[2].epoch = 1;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = make_curve({0, 0, 0}, {0, 0, 0});
  c.points[1].phase = "continual";
  EXPECT_THROW(c.validate(), PreconditionError);
  c.points[2].phase = "continual";
  EXPECT_NO_THROW(c.validate());
}

TEST(GapArea, WorkedExample) {
  EXPECT_NEAR(gap_area({0, 1, 2, 3}, {0.5, 0.6, 0.3, 0.0}), 1.15, 1e-12);
}

TEST(GapArea, MatchesDenseRiemannSum) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> step(1, 3);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> e{0};
    std::vector<double> d{u(gen)};
    for (int i = 0; i < 6; ++i) {
      e.push_back(e.back() + step(gen));
      d.push_back(u(gen));
    }
    EXPECT_NEAR(gap_area(e, d), riemann(e, d, 200000), 1e-9);
  }
}

TEST(GapArea, NegativeOnlyIsZero) { EXPECT_DOUBLE_EQ(gap_area({0, 1, 2}, {-0.2, -0.1, -0.5}), 0.0); }

TEST(Floor, MeanOfLastWindow) {
  auto c = make_curve({0.9, 0.8, 0.6, 0.4}, {0.8, 0.5, 0.3, 0.1});
  const auto f = robustness_floor(c, 2, 2);
  EXPECT_NEAR(f.u_v, 0.5, 1e-12);
  EXPECT_NEAR(f.u_g, 0.2, 1e-12);
  EXPECT_EQ(*f.intervention, 2);
  EXPECT_THROW(robustness_floor(c, 5), PreconditionError);
}

TEST(Curves, FromRecordsPerEpoch) {
  std::vector<EvalRecord> recs;
  for (int e = 0; e < 3; ++e) {
    recs.push_back(rec("f1", e, Phase::acquisition, QueryKind::generative, TailVariant::none, Phrasing::none, e >= 2));
    recs.push_back(
        rec("f1", e, Phase::acquisition, QueryKind::verify_accept, TailVariant::none, Phrasing::asks_correct, e >= 1));
    recs.push_back(rec("f1", e, Phase::acquisition, QueryKind::verify_reject, TailVariant::none,
                       Phrasing::asks_correct, e >= 1));
  }
  const auto c = curves_from_records(recs, metrics::VerificationUnit::per_phrasing);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c.points[0].u_v, 0.0);
  EXPECT_DOUBLE_EQ(c.points[1].u_v, 1.0);
  EXPECT_DOUBLE_EQ(c.points[1].u_g, 0.0);
  EXPECT_DOUBLE_EQ(c.points[2].u_g, 1.0);
  const auto g = detect_emergence(c);
  EXPECT_EQ(*g.e_v, 1);
  EXPECT_EQ(*g.e_g, 2);
  const std::string csv = curve_csv(c);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,phase,u_g,u_v,accept_correct,reject_incorrect,old_accept,new_accept,loss");
  EXPECT_NE(csv.find("\n2,acquisition,1,1,1,1,,,\n"), std::string::npos);
  EXPECT_EQ(curves_per_fact(recs).count("f1"), 1u);
}

TEST(Multiverse, FlagsFactsAcceptingBothTails) {
  std::vector<EvalRecord> recs;
  push_update(recs, "a", 0, true, false, false);
  push_update(recs, "a", 1, true, true, true);   // both accepted: flagged
  push_update(recs, "b", 1, false, true, true);  // clean update
  push_update(recs, "c", 1, true, true, false);
  const auto m = detect_multiverse(recs, {{"a", "old"}});
  ASSERT_EQ(m.final_flags.size(), 3u);
  EXPECT_TRUE(m.final_flags[0].flagged);
  EXPECT_EQ(m.final_flags[0].epoch, 1);
  EXPECT_FALSE(m.final_flags[1].flagged);
  EXPECT_TRUE(m.final_flags[2].flagged);
  EXPECT_NEAR(m.rate, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(m.flipped_rate, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.rate_by_epoch.at(0), 0.0);
  EXPECT_NEAR(m.rate_by_epoch.at(1), 2.0 / 3.0, 1e-12);

  const auto c = curves_from_records(recs);
  EXPECT_NEAR(*c.points[1].old_accept, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(*c.points[1].new_accept, 1.0);
}

TEST(Multiverse, OneDisagreeingPhrasingIsNotAcceptance) {
  std::vector<EvalRecord> recs;
  push_update(recs, "a", 0, true, true, true);
  recs.back().verdict.correct = true;  // second phrasing rejects the old tail
  const auto m = detect_multiverse(recs);
  EXPECT_FALSE(m.final_flags.at(0).old_accepted);
}

TEST(Multiverse, MissingRecordsReported) {
  std::vector<EvalRecord> recs;
  push_update(recs, "a", 0, true, true, true);
  push_update(recs, "b", 0, true, true, true);
  recs.erase(std::remove_if(recs.begin(), recs.end(),
                            [](const EvalRecord& r) {
                              return r.fact_id == "b" && r.tail_variant == TailVariant::original;
                            }),
             recs.end());
  const auto m = detect_multiverse(recs);
  EXPECT_EQ(m.final_flags.size(), 1u);
  ASSERT_EQ(m.errors.count("b"), 1u);
  EXPECT_NE(m.errors.at("b").find("superseded"), std::string::npos);
}
