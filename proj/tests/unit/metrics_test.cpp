#include <gtest/gtest.h>

#include <random>

#include "gvgap/metrics/metrics.hpp"

using namespace gvgap;
using namespace gvgap::metrics;
using facts::Phrasing;
using facts::QueryKind;
using grading::EvalRecord;

namespace {

std::map<std::string, bool> membership(int n, std::set<int> yes) {
  std::map<std::string, bool> m;
  for (int i = 1; i <= n; ++i) m["q" + std::to_string(100 + i)] = yes.count(i) > 0;
  return m;
}

EvalRecord rec(const std::string& fact, QueryKind kind, Phrasing ph, bool valid, bool correct) {
  EvalRecord r;
  r.fact_id = fact;
  r.query_id = fact + facts::to_string(kind) + facts::to_string(ph);
  r.kind = kind;
  r.phrasing = ph;
  r.model = "m";
  r.epoch = 0;
  r.verdict.valid = valid;
  r.verdict.correct = valid && correct;
  r.verdict.extracted_answer = "True";
  return r;
}

}  // namespace

TEST(Utilities, TableFourLargeRow) {
  const auto r = utilities_from_rates(0.45, 0.82, 0.64);
  EXPECT_NEAR(r.balanced, 0.73, 1e-12);
  EXPECT_NEAR(r.bias, 0.18, 1e-12);
  EXPECT_NEAR(r.gap, 0.28, 1e-12);
}

TEST(Utilities, LinearInAlphaWithEndpoints) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double a = u(gen), r = u(gen);
    EXPECT_DOUBLE_EQ(verification_utility(a, r, 0.0), a);
    EXPECT_DOUBLE_EQ(verification_utility(a, r, 1.0), r);
    const double x = u(gen), y = u(gen), lam = u(gen);
    const double mixed = verification_utility(a, r, lam * x + (1 - lam) * y);
    EXPECT_NEAR(mixed, lam * verification_utility(a, r, x) + (1 - lam) * verification_utility(a, r, y), 1e-12);
  }
}

TEST(Utilities, ChanceFloor) {
  for (int i = 0; i <= 100; ++i) {
    const double alpha = i / 100.0;
    EXPECT_NEAR(chance_corrected(verification_utility(1.0, 0.0, alpha), alpha), alpha <= 0.5 ? 0.0 : 1 - 2 * alpha,
                1e-12);
  }
  EXPECT_NEAR(chance_corrected(0.95, 0.1), 0.05, 1e-12);
}

TEST(SelfConsistency, Examples) {
  auto s = compute_self_consistency(0.6, 0.9, 0.7);
  EXPECT_NEAR(s.u_sv, 0.82, 1e-12);
  EXPECT_NEAR(s.delta, 0.22, 1e-12);
  s = compute_self_consistency(1.0, 0.83, 0.1);
  EXPECT_NEAR(s.u_sv, 0.83, 1e-12);
  EXPECT_LE(s.delta, 0.0);
  s = compute_self_consistency(0.0, 1.0, 1.0);
  EXPECT_NEAR(s.delta, 1.0, 1e-12);
  EXPECT_THROW(compute_self_consistency(1.2, 0, 0), PreconditionError);
}

TEST(Dispute, ExamplesAndSumToOne) {
  const auto d = adjudicate_dispute(0.80, 0.88);
  EXPECT_NEAR(d.correct_only, 0.704, 1e-12);
  EXPECT_NEAR(d.incorrect_only, 0.024, 1e-12);
  EXPECT_NEAR(d.both, 0.096, 1e-12);
  EXPECT_NEAR(d.neither, 0.176, 1e-12);
  const auto p = adjudicate_dispute(1, 1);
  EXPECT_EQ(p.correct_only, 1.0);
  const auto h = adjudicate_dispute(0.5, 0.5);
  EXPECT_EQ(h.both, 0.25);
  for (double a = 0; a <= 1.0; a += 0.05) {
    for (double r = 0; r <= 1.0; r += 0.05) {
      const auto x = adjudicate_dispute(a, r);
      EXPECT_NEAR(x.correct_only + x.incorrect_only + x.both + x.neither, 1.0, 1e-12);
    }
  }
}

TEST(Disagreement, EnumeratedExample) {
  const auto d = disagreement_stats(membership(10, {1, 2, 3}), membership(10, {3, 4, 5, 6}));
  EXPECT_NEAR(d.rate, 0.5, 1e-12);
  EXPECT_NEAR(*d.p_m1, 0.4, 1e-12);
  EXPECT_EQ(disagreement_stats(membership(5, {1}), membership(5, {1})).rate, 0.0);
  const auto all = disagreement_stats(membership(4, {1, 2, 3, 4}), membership(4, {}));
  EXPECT_EQ(all.rate, 1.0);
  EXPECT_EQ(*all.p_m1, 1.0);
  EXPECT_THROW(disagreement_stats(membership(4, {}), membership(5, {})), PreconditionError);
}

TEST(Lift, BruteForceAndContainment) {
  auto l = wrong_agreement_lift(membership(10, {1, 2, 3}), membership(10, {1, 2, 4, 5}));
  EXPECT_NEAR(l.raw, 0.2, 1e-12);
  EXPECT_NEAR(*l.lift, 0.2 / (0.3 * 0.4), 1e-12);
  l = wrong_agreement_lift(membership(10, {1, 2, 3}), membership(10, {1, 2, 3, 4, 5}));
  EXPECT_NEAR(*l.lift, 2.0, 1e-12);
  EXPECT_FALSE(wrong_agreement_lift(membership(10, {}), membership(10, {1})).lift.has_value());
}

TEST(Lift, IndependentFailuresGiveLiftNearOne) {
  std::mt19937_64 gen(17);
  std::bernoulli_distribution f1(0.3), f2(0.4);
  std::map<std::string, bool> a, b;
  for (int i = 0; i < 100000; ++i) {
    const auto k = std::to_string(i);
    a[k] = f1(gen);
    b[k] = f2(gen);
  }
  EXPECT_NEAR(*wrong_agreement_lift(a, b).lift, 1.0, 0.05);
}

TEST(SubsetViolation, Examples) {
  EXPECT_NEAR(*subset_violation_rate({"f1", "f2", "f3"}, {"f2", "f4"}), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(*subset_violation_rate({"f1", "f2"}, {"f1"}), 0.0);
  EXPECT_EQ(*subset_violation_rate({"a", "b", "c", "d"}, {"e", "f"}), 0.5);
  EXPECT_FALSE(subset_violation_rate({}, {"a"}).has_value());
}

TEST(Aggregate, MicroAndMacro) {
  EXPECT_NEAR(aggregate({{9, 10}, {2, 5}}, AggregateMode::micro), 11.0 / 15.0, 1e-12);
  EXPECT_NEAR(aggregate({{9, 10}, {2, 5}}, AggregateMode::macro), 0.65, 1e-12);
  EXPECT_EQ(aggregate({{3, 7}}, AggregateMode::macro), aggregate({{3, 7}}, AggregateMode::micro));
  EXPECT_NEAR(aggregate({{9, 10}, {1, 10}}, AggregateMode::micro), 0.5, 1e-12);
  EXPECT_NEAR(aggregate({{9, 10}, {1, 10}}, AggregateMode::macro), 0.5, 1e-12);
  // Micro is invariant under re-partitioning.
  EXPECT_NEAR(aggregate({{4, 6}, {5, 4 + 5}, {2, 5}}, AggregateMode::micro),
              aggregate({{9, 10 + 5}, {2, 5}}, AggregateMode::micro), 1e-12);
}

// Reference values from an independent implementation (statsmodels
// proportion_confint, method="wilson").
TEST(Wilson, ReferenceValues) {
  auto ci = confidence_interval(80, 100, 0.95);
  EXPECT_NEAR(ci.lo, 0.7111708344068411, 1e-9);
  EXPECT_NEAR(ci.hi, 0.8666330666689676, 1e-9);
  ci = confidence_interval(0, 100, 0.95);
  EXPECT_EQ(ci.lo, 0.0);
  EXPECT_NEAR(ci.hi, 0.03699349820698569, 1e-9);
  ci = confidence_interval(37, 50, 0.90);
  EXPECT_NEAR(ci.lo, 0.6275387029219313, 1e-9);
  EXPECT_NEAR(ci.hi, 0.827821367900659, 1e-9);
  EXPECT_EQ(confidence_interval(12, 12).hi, 1.0);
  EXPECT_THROW(confidence_interval(3, 2), PreconditionError);
}

TEST(PairedSe, Examples) {
  EXPECT_NEAR(paired_se({0.2, 0, -0.2, 0}), std::sqrt(0.08 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(paired_se({0.2, 0, -0.2, 0}), 0.0816, 1e-4);
  EXPECT_EQ(paired_se({0.3, 0.3, 0.3}), 0.0);
  EXPECT_THROW(paired_se({1.0}), PreconditionError);
  const double a = paired_se({0.1, 0.3}), b = paired_se({0.0, 0.4, 0.2});
  EXPECT_NEAR(paired_se_macro({{"market", {0.1, 0.3}}, {"nba", {0.0, 0.4, 0.2}}}), (a + b) / 2, 1e-12);
}

TEST(Refusal, DenominatorExcludesInvalid) {
  std::vector<EvalRecord> rs;
  for (int i = 0; i < 10; ++i) {
    auto r = rec("f", QueryKind::generative, Phrasing::none, true, false);
    r.phase = grading::Phase::natural;
    r.epoch.reset();
    if (i < 3) r.verdict.refusal = true;
    if (i == 9) r.verdict.valid = false;
    rs.push_back(r);
  }
  const auto rr = refusal_rate(rs);
  EXPECT_EQ(rr.denominator, 9u);
  EXPECT_EQ(rr.refusals, 3u);
  for (auto& r : rs) r.verdict.refusal = false;
  EXPECT_EQ(refusal_rate(rs).rate(), 0.0);
}

TEST(VerdictTable, CombinedPairsPhrasings) {
  std::vector<EvalRecord> rs{
      rec("f1", QueryKind::generative, Phrasing::none, true, true),
      rec("f1", QueryKind::verify_accept, Phrasing::asks_correct, true, true),
      rec("f1", QueryKind::verify_accept, Phrasing::asks_incorrect, true, false),
      rec("f1", QueryKind::verify_reject, Phrasing::asks_correct, true, true),
      rec("f1", QueryKind::verify_reject, Phrasing::asks_incorrect, true, true),
  };
  rs[1].verdict.extracted_answer = "True";
  rs[2].verdict.extracted_answer = "True";  // inconsistent pair
  rs[3].verdict.extracted_answer = "False";
  rs[4].verdict.extracted_answer = "True";
  const auto combined = VerdictTable::from_records(rs, VerificationUnit::combined);
  EXPECT_EQ(combined.accept().trials, 1u);
  EXPECT_EQ(combined.accept().successes, 0u);
  EXPECT_EQ(combined.reject().successes, 1u);
  const auto per = VerdictTable::from_records(rs, VerificationUnit::per_phrasing);
  EXPECT_EQ(per.accept().trials, 2u);
  EXPECT_EQ(per.accept().successes, 1u);

  MetricConfig cfg;
  const auto report = compute_utilities(per, cfg, "g");
  EXPECT_NEAR(report.accept_correct, 0.5, 1e-12);
  EXPECT_NEAR(report.gap, 0.75 - 1.0, 1e-12);
  EXPECT_THROW(compute_utilities(VerdictTable{}, cfg, "empty-group"), PreconditionError);
}

TEST(Report, TableRenders) {
  auto r = utilities_from_rates(0.45, 0.82, 0.64);
  r.group = "large";
  const auto text = render_utility_table({r});
  EXPECT_NE(text.find("0.73"), std::string::npos);
  EXPECT_NE(text.find("0.28"), std::string::npos);
  EXPECT_EQ(to_json(r)["gap"].get<double>(), r.gap);
}
