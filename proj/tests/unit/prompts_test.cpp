#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "gvgap/common/error.hpp"
#include "gvgap/common/text.hpp"
#include "gvgap/prompts/prompts.hpp"

using namespace gvgap;
using namespace gvgap::prompts;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(GVGAP_GOLDEN_DIR) + "/" + name, std::ios::binary);
  EXPECT_TRUE(in.good()) << name;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kProblem = "What is the cure for Blue Striped Axzazari disease?";

}  // namespace

TEST(PromptGolden, Generative) {
  const auto p = render_generative(kProblem);
  EXPECT_EQ(p.text, golden("generative.txt"));
  EXPECT_EQ(p.channel, Channel::answer_tags);
  // The instruction line and the example format both name the tag.
  EXPECT_EQ(text::count_occurrences(p.text, "<answer>"), 3u);
}

TEST(PromptGolden, VerificationBothPhrasings) {
  EXPECT_EQ(render_verification(kProblem, "Hoibalbali.", facts::Phrasing::asks_correct).text,
            golden("verification_asks_correct.txt"));
  EXPECT_EQ(render_verification(kProblem, "Hoibalbali.", facts::Phrasing::asks_incorrect).text,
            golden("verification_asks_incorrect.txt"));
  EXPECT_THROW(render_verification(kProblem, "x", facts::Phrasing::none), PreconditionError);
}

TEST(PromptGolden, PhrasingsDifferOnlyInTheQuestionLines) {
  const auto a = text::split(render_verification(kProblem, "A", facts::Phrasing::asks_correct).text, '\n');
  const auto b = text::split(render_verification(kProblem, "A", facts::Phrasing::asks_incorrect).text, '\n');
  ASSERT_EQ(a.size(), b.size());
  int differing = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differing += a[i] != b[i];
  EXPECT_EQ(differing, 3);
}

TEST(PromptGolden, SyntheticJudge) {
  const Bindings b{{"problem_statement", kProblem},
                   {"model_answer", "<reasoning>Known from the literature.</reasoning>\n<answer>Hoibalbali</answer>"},
                   {"ground_truth_answer", "Hoibalbali"}};
  EXPECT_EQ(render_judge(JudgeKind::synthetic_ground_truth, b).text, golden("judge_ground_truth.txt"));
  auto inc = b;
  inc["problem_statement"] = "What disease is cured by Penicillin?";
  EXPECT_EQ(render_judge(JudgeKind::synthetic_incorrect, inc).text, golden("judge_incorrect.txt"));
}

TEST(PromptGolden, Naturalistic) {
  EXPECT_EQ(render_judge(JudgeKind::naturalistic,
                         {{"ground_truth_answer", "4590.00"}, {"answer_to_grade", "The index closed at 4590.00."}})
                .text,
            golden("nat_judge.txt"));
  const auto gen = render_natural(NaturalKind::generative, "market", {{"ticker", "S&P 500"}, {"date", "2013-06-14"}});
  EXPECT_EQ(gen.text, golden("nat_generation_market.txt"));
  EXPECT_EQ(gen.channel, Channel::yaml_block);
  const auto ver = render_natural(NaturalKind::verification, "nba",
                                  {{"date", "2013-06-20"},
                                   {"team_1", "Miami Heat"},
                                   {"team_2", "San Antonio Spurs"},
                                   {"team_1_points", "95"},
                                   {"team_2_points", "88"},
                                   {"correctness", "incorrect"}});
  EXPECT_EQ(ver.text, golden("nat_verification_nba_incorrect.txt"));
  EXPECT_EQ(ver.phrasing, facts::Phrasing::asks_incorrect);
}

TEST(PromptRender, MissingBindingNamesTheSlot) {
  try {
    render_judge(JudgeKind::naturalistic, {{"ground_truth_answer", "x"}});
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("answer_to_grade"), std::string::npos);
  }
  EXPECT_THROW(render_natural(NaturalKind::verification, "market", {{"ticker", "T"}, {"date", "d"}, {"value", "1"}}),
               PreconditionError);
  EXPECT_THROW(render_natural(NaturalKind::generative, "weather", {}), PreconditionError);
  EXPECT_THROW(render_generative("  "), PreconditionError);
}

TEST(PromptRender, BlocksNestAndCommentsDisappear) {
  const std::string src = "{# note #}\na\n{% if x %}\nb\n{% if y %}\nc\n{% else %}\nd\n{% endif %}\n{% else %}\ne\n{% endif %}\nf {{ v }}";
  EXPECT_EQ(render_template(src, {{"v", "1"}}, {"x"}), "a\nb\nd\nf 1");
  EXPECT_EQ(render_template(src, {{"v", "1"}}, {"x", "y"}), "a\nb\nc\nf 1");
  EXPECT_EQ(render_template(src, {{"v", "1"}}, {}), "a\ne\nf 1");
  EXPECT_THROW(render_template("{% if x %}\na", {}), PreconditionError);
  EXPECT_THROW(render_template("{% endif %}", {}), PreconditionError);
  EXPECT_EQ(render_template("x\n", {}), "x\n");
}

TEST(PromptRender, FillSlots) {
  EXPECT_EQ(fill_slots("{a} and {b}", {{"a", "1"}, {"b", "{c}"}}), "1 and {c}");
  EXPECT_THROW(fill_slots("{a}", {}), PreconditionError);
}

TEST(PromptRender, QueryDispatch) {
  facts::QuerySpec q;
  q.kind = facts::QueryKind::verify_reject;
  q.phrasing = facts::Phrasing::asks_incorrect;
  q.problem = kProblem;
  q.candidate = "Hoibalbali.";
  q.ground_truth = false;
  EXPECT_EQ(render_query(q).text, golden("verification_asks_incorrect.txt"));
  q.kind = facts::QueryKind::generative;
  q.phrasing = facts::Phrasing::none;
  q.candidate.reset();
  EXPECT_EQ(render_query(q).text, golden("generative.txt"));
}
