#include <gtest/gtest.h>

#include <cstdio>
#include <set>
#include <sstream>

#include "gvgap/natural/natural.hpp"

using namespace gvgap;
using namespace gvgap::natural;

namespace {

std::string iso(int y, int m, int d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

NaturalSource market_source(int from, int to, int per_year) {
  std::ostringstream os;
  os << "date,ticker,close\n";
  for (int y = from; y <= to; ++y) {
    for (int i = 0; i < per_year; ++i) {
      os << iso(y, 1 + i % 12, 1 + i / 12) << ",SPX," << 800 + y - 2000 + i << "." << (10 + i % 90) << "\n";
    }
  }
  return load_source("market", CsvTable::parse(os.str(), "market.csv"));
}

NaturalSource nba_source(int from, int to, int per_year) {
  std::ostringstream os;
  os << "date,team_1,team_2,team_1_points,team_2_points\n";
  for (int y = from; y <= to; ++y) {
    for (int i = 0; i < per_year; ++i) {
      os << iso(y, 1 + i % 12, 1 + i / 12) << ",Team " << i % 7 << ",Team " << 7 + i % 5 << "," << 90 + i % 20 << ","
         << 85 + i % 25 << "\n";
    }
  }
  return load_source("nba", CsvTable::parse(os.str(), "nba.csv"));
}

// Weekly charts starting 2010-01-02; `track_at(week, rank)` names the song.
template <class F>
ChartArchive make_archive(int weeks, int ranks, F track_at) {
  ChartArchive a;
  const long base = days_from_iso("2010-01-02");
  for (int w = 0; w < weeks; ++w) {
    const long day = base + 7L * w;
    // days back to a date string: walk from a known anchor
    std::string week;
    for (int y = 2010; y <= 2012 && week.empty(); ++y) {
      for (int m = 1; m <= 12 && week.empty(); ++m) {
        for (int d = 1; d <= 31; ++d) {
          try {
            if (days_from_iso(iso(y, m, d)) == day) {
              week = iso(y, m, d);
              break;
            }
          } catch (...) {
          }
        }
      }
    }
    for (int r = 1; r <= ranks; ++r) a.add(week, ChartEntry{r, track_at(w, r), "artist"});
  }
  return a;
}

}  // namespace

TEST(Dates, CivilDays) {
  EXPECT_EQ(days_from_iso("1970-01-01"), 0);
  EXPECT_EQ(days_from_iso("2000-03-01"), 11017);
  EXPECT_EQ(days_from_iso("2002-08-13") - days_from_iso("2002-08-06"), 7);
  EXPECT_EQ(format_date("2002-08-06"), "August 6, 2002");
  EXPECT_THROW(days_from_iso("2002-8-6"), ParseError);
}

TEST(MarketNoise, Examples) {
  EXPECT_DOUBLE_EQ(apply_market_noise(4500.00, 0.02), 4590.00);
  EXPECT_DOUBLE_EQ(apply_market_noise(1000.00, -0.01), 990.00);
  EXPECT_THROW(apply_market_noise(0.01, 1e-6), NoiseRejected);
  EXPECT_THROW(apply_market_noise(100.0, 0.03), PreconditionError);
  EXPECT_THROW(apply_market_noise(100.0, 0.0), PreconditionError);
}

TEST(NbaNoise, Examples) {
  EXPECT_EQ(apply_nba_noise({101, 99}, {3, -7}), std::make_pair(104, 92));
  EXPECT_THROW(apply_nba_noise({101, 99}, {0, 5}), PreconditionError);
  EXPECT_THROW(apply_nba_noise({1, 99}, {-5, 1}), NoiseRejected);
}

TEST(LotteryNoise, Examples) {
  const std::array<int, 5> nums{5, 12, 23, 44, 61};
  const auto out = apply_lottery_noise(nums, {{1, 3}, {4, -20}}, "2018-03-02");
  EXPECT_EQ(out, (std::array<int, 5>{5, 16, 23, 24, 61}));
  EXPECT_THROW(apply_lottery_noise(nums, {{0, 4}, {1, 10}}, "2018-03-02"), NoiseRejected);  // 71 > 70
  EXPECT_THROW(apply_lottery_noise(nums, {{0, 2}, {7, 1}}, "2018-03-02"), NoiseRejected);   // 12 twice
  EXPECT_THROW(apply_lottery_noise(nums, {{1, 1}, {1, 1}}, "2018-03-02"), PreconditionError);
  // same numbers were out of range before the 75-ball era
  EXPECT_THROW(apply_lottery_noise(nums, {{1, 3}, {4, -20}}, "2010-03-02"), NoiseRejected);
}

TEST(LotteryEras, Boundaries) {
  EXPECT_EQ(lottery_era("2005-06-21").main_max, 52);
  EXPECT_EQ(lottery_era("2005-06-22").main_max, 56);
  EXPECT_EQ(lottery_era("2013-10-22").mega_max, 15);
  EXPECT_EQ(lottery_era("2020-01-01").main_max, 70);
  EXPECT_THROW(lottery_era("1990-01-01"), PreconditionError);
}

TEST(Plans, SampledPlansSatisfyInvariants) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const auto m = sample_market_noise(rng);
    EXPECT_TRUE(validate_plan(m).empty());
    EXPECT_GE(std::fabs(m.factor), kMarketDeadZone);
    const auto fm = sample_market_noise(rng, MarketNoiseMode::fixed_magnitude);
    EXPECT_DOUBLE_EQ(std::fabs(fm.factor), 0.02);
    EXPECT_TRUE(validate_plan(sample_nba_noise(rng)).empty());
    const auto l = sample_lottery_noise(rng);
    EXPECT_TRUE(validate_plan(l).empty());
    EXPECT_LT(l.indices[0], l.indices[1]);
  }
  EXPECT_FALSE(validate_plan(BillboardNoise{NoiseMethod::ranked_noise, 10, 0}).empty());
  EXPECT_FALSE(validate_plan(BillboardNoise{NoiseMethod::random_noise, 15, 0}).empty());
  EXPECT_TRUE(validate_plan(BillboardNoise{NoiseMethod::random_noise, 25, 0}).empty());
}

TEST(Billboard, RandomNoiseExcludesTruthAndIsUniform) {
  std::vector<ChartEntry> chart;
  for (int r = 1; r <= 30; ++r) chart.push_back({r, "song " + std::to_string(r), "a"});
  Rng rng(17);
  std::map<std::string, int> freq;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++freq[billboard_random_noise(chart, 3, 10, rng).track];
  EXPECT_EQ(freq.size(), 9u);
  EXPECT_EQ(freq.count("song 3"), 0u);
  double chi2 = 0.0;
  for (const auto& [t, c] : freq) chi2 += (c - n / 9.0) * (c - n / 9.0) / (n / 9.0);
  // upper 1% point of chi-square with 8 degrees of freedom
  EXPECT_LT(chi2, 20.090235);

  std::vector<ChartEntry> same;
  for (int r = 1; r <= 10; ++r) same.push_back({r, "one", "a"});
  EXPECT_THROW(billboard_random_noise(same, 3, 10, rng), PreconditionError);
  EXPECT_THROW(billboard_random_noise(chart, 3, 12, rng), PreconditionError);
}

TEST(Billboard, RankedWalk) {
  // rank 1 keeps "hold" for weeks 0..2; other ranks change every week
  const auto a = make_archive(20, 5, [](int w, int r) {
    if (r == 1 && w <= 2) return std::string("hold");
    if (r == 2) return std::string("forever");
    return "w" + std::to_string(w) + "r" + std::to_string(r);
  });
  const auto& weeks = a.weeks();
  auto r = billboard_ranked_noise(a, weeks[5], 3, 1);
  ASSERT_TRUE(r.substitute);
  EXPECT_EQ(r.substitute->effective_offset, 1);
  EXPECT_EQ(r.substitute->entry.track, "w6r3");

  r = billboard_ranked_noise(a, weeks[0], 1, 1);
  ASSERT_TRUE(r.substitute);
  EXPECT_EQ(r.substitute->effective_offset, 3);
  EXPECT_EQ(r.substitute->entry.track, "w3r1");

  r = billboard_ranked_noise(a, weeks[10], 2, -3);
  EXPECT_FALSE(r.substitute);
  EXPECT_NE(r.skip_reason.find("7-week"), std::string::npos);

  EXPECT_THROW(billboard_ranked_noise(a, weeks[18], 3, 3), PreconditionError);
  EXPECT_THROW(billboard_ranked_noise(a, weeks[5], 3, 0), PreconditionError);
}

TEST(Billboard, ArchiveGapDetected) {
  ChartArchive a;
  a.add("2010-01-02", {1, "x", "a"});
  a.add("2010-01-16", {1, "y", "a"});
  EXPECT_THROW(billboard_ranked_noise(a, "2010-01-02", 1, 1), PreconditionError);
}

TEST(QuerySet, MarketCountsMatchConfig) {
  const auto src = market_source(2002, 2024, 110);
  SamplingConfig cfg;
  cfg.per_year = default_per_year("market");
  const auto set = build_query_set(src, cfg, 42);
  EXPECT_EQ(set.facts.size(), 2300u);
  EXPECT_EQ(set.queries.size(), 6900u);
  for (std::size_t i = 0; i < set.queries.size(); i += 3) {
    EXPECT_EQ(set.queries[i].kind, facts::QueryKind::generative);
    EXPECT_EQ(set.queries[i + 1].kind, facts::QueryKind::verify_accept);
    EXPECT_EQ(set.queries[i + 2].kind, facts::QueryKind::verify_reject);
    EXPECT_NE(set.queries[i + 1].problem, set.queries[i + 2].problem);
    EXPECT_TRUE(facts::validate_query(set.queries[i + 2]).empty());
    const double f = std::stod(set.queries[i + 2].tags.at("factor"));
    EXPECT_LE(std::fabs(f), 0.02);
  }
  const auto again = build_query_set(src, cfg, 42);
  ASSERT_EQ(again.queries.size(), set.queries.size());
  for (std::size_t i = 0; i < set.queries.size(); ++i) EXPECT_EQ(again.queries[i].id, set.queries[i].id);
  const auto other = build_query_set(src, cfg, 43);
  EXPECT_NE(other.queries[2].id, set.queries[2].id);
}

TEST(QuerySet, NbaCountsAndStatement) {
  const auto src = nba_source(2002, 2024, 60);
  SamplingConfig cfg;
  cfg.per_year = default_per_year("nba");
  const auto set = build_query_set(src, cfg, 1);
  EXPECT_EQ(set.facts.size(), 1150u);
  EXPECT_NE(set.queries[1].problem.find("ended with a score of"), std::string::npos);
}

TEST(QuerySet, ShortYearNamed) {
  auto src = market_source(2002, 2004, 100);
  src.rows.erase(std::remove_if(src.rows.begin(), src.rows.end(),
                                [](const NaturalFact& f) { return f.year() == 2003 && f.date > "2003-06-00"; }),
                 src.rows.end());
  SamplingConfig cfg;
  cfg.year_from = 2002;
  cfg.year_to = 2004;
  try {
    build_query_set(src, cfg, 1);
    FAIL() << "expected an error";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("2003"), std::string::npos);
  }
}

TEST(QuerySet, BillboardNeverReturnsOwnTrack) {
  NaturalSource src;
  src.dataset = "billboard";
  src.archive = make_archive(60, 30, [](int w, int r) {
    // songs drift down one rank a week, so neighbours at a rank repeat rarely
    return "song" + std::to_string(w + r) + (r % 4 == 0 ? "" : "x");
  });
  for (const auto& w : src.archive->weeks()) {
    for (const auto& e : src.archive->chart(w)) {
      NaturalFact f{"", "billboard", w, BillboardPayload{e.rank, e.track, e.artist}};
      f.id = make_natural_id(f);
      src.rows.push_back(f);
    }
  }
  SamplingConfig cfg;
  cfg.year_from = 2010;
  cfg.year_to = 2010;
  cfg.per_year = 200;
  cfg.max_rank = 30;
  const auto set = build_query_set(src, cfg, 9);
  EXPECT_EQ(set.facts.size(), 200u);
  std::set<std::string> methods;
  for (std::size_t i = 0; i < set.queries.size(); i += 3) {
    const auto& rej = set.queries[i + 2];
    EXPECT_NE(*rej.candidate, std::get<std::string>(set.queries[i].ground_truth));
    methods.insert(rej.tags.at("noise_method"));
    const int off = std::stoi(rej.tags.at("offset"));
    if (rej.tags.at("noise_method") == "ranked_noise") {
      EXPECT_NE(off, 0);
    }
    EXPECT_TRUE(rej.tags.count("effective_offset"));
  }
  EXPECT_EQ(methods.size(), 2u);
}

TEST(Sources, SchemaErrors) {
  EXPECT_THROW(load_source("market", CsvTable::parse("date,close\n2002-01-02,1.0\n", "m.csv")), ParseError);
  EXPECT_THROW(load_source("nba", CsvTable::parse("date,team_1,team_2,team_1_points,team_2_points\n2002-01-02,A,B,0,90\n",
                                                  "n.csv")),
               ParseError);
  EXPECT_THROW(load_source("lottery", CsvTable::parse("date,n1,n2,n3,n4,n5,mega\n2003-01-03,1,2,3,4,4,5\n", "l.csv")),
               ParseError);
  const auto ok = load_source("lottery", CsvTable::parse("date,n1,n2,n3,n4,n5,mega\n2003-01-03,1,2,3,4,52,5\n", "l.csv"));
  EXPECT_EQ(ok.rows.size(), 1u);
  const auto back = natural_fact_from_json(to_json(ok.rows[0]));
  EXPECT_EQ(to_json(back), to_json(ok.rows[0]));
}

TEST(Discrepancy, ListsDifferingAndMissing) {
  const auto a = load_source("market", CsvTable::parse("date,ticker,close\n2002-01-02,SPX,1000.00\n2002-01-03,SPX,1001.00\n"
                                                       "2002-01-04,SPX,1002.00\n"));
  const auto b = load_source("market", CsvTable::parse("date,ticker,close\n2002-01-02,SPX,1000.00\n2002-01-03,SPX,1001.50\n"
                                                       "2002-01-07,SPX,1003.00\n"));
  const auto d = discrepancy_report(a, b);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].key, "2002-01-03|SPX");
  EXPECT_EQ(d[0].left, "1001.00");
  EXPECT_EQ(d[0].right, "1001.50");
  EXPECT_EQ(d[1].field, "missing");
  EXPECT_EQ(d[2].right, "present");
}
