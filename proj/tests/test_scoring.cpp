#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace fintool;
using fintool::json;

namespace {

eval::EvalInstance price_instance(codec::CallMode mode = codec::CallMode::Fc) {
  eval::EvalInstance in;
  in.id = "price";
  in.mode = mode;
  in.history = {{"user", "What is Moutai trading at?"}};
  in.candidates = {registry::tool_from_json(fixtures::read_json("stock_price_mcp.json")),
                   fixtures::string_tool("get_news", {"topic"}, {"topic"})};
  in.gold = {{{"get_stock_price", {{"symbol", "600519.SH"}}}}};
  return in;
}

std::string fc(const std::vector<codec::ToolCall>& calls) { return codec::render_fc_calls(calls); }

}  // namespace

TEST(Breaker, FirstFailureWins) {
  auto in = price_instance();
  using B = eval::BreakerReason;
  auto reason = [&](const std::string& raw) {
    return eval::rule_circuit_breaker(std::string_view(raw), in.mode, in.candidates).reason;
  };
  EXPECT_EQ(reason(fc({{"get_stock_price", {{"symbol", "600519.SH"}}}})), std::nullopt);
  EXPECT_EQ(reason("just words"), B::FormatError);
  EXPECT_EQ(reason("<tool_call>\n{\"name\": 3}\n</tool_call>"), B::FormatError);
  EXPECT_EQ(reason(fc({{"get_stock_price", {{"symbol", "x"}}}, {"ghost", json::object()}})), B::ToolHallucination);
  EXPECT_EQ(reason(fc({{"get_stock_price", json::object()}})), B::ParamSchemaViolation);
  EXPECT_EQ(reason(fc({{"get_stock_price", {{"symbol", 600519}}}})), B::ParamSchemaViolation);
  EXPECT_EQ(reason(fc({{"get_stock_price", {{"symbol", "x"}, {"market", "SH"}}}})), B::ParamSchemaViolation);
}

TEST(Turn, ZeroSelectionStopsBeforeParameterJudging) {
  auto in = price_instance();
  fixtures::CountingJudge j;
  j.k = 0;
  auto b = eval::score_tool_call_turn(std::string_view(fc(in.gold[0])), in, 0, j);
  EXPECT_TRUE(b.v_rule);
  EXPECT_EQ(b.s_turn, 0);
  EXPECT_TRUE(b.tools.empty());
  EXPECT_EQ(j.calls, 1);
}

TEST(Turn, ParameterFreeToolUsesStructureScoreAlone) {
  auto in = price_instance();
  in.candidates.push_back(fixtures::string_tool("market_status", {}, {}));
  in.gold = {{{"market_status", json::object()}}};
  fixtures::CountingJudge j;
  j.k = 10;
  j.x = 7;
  auto b = eval::score_tool_call_turn(std::string_view(fc(in.gold[0])), in, 0, j);
  ASSERT_EQ(b.tools.size(), 1u);
  EXPECT_EQ(b.tools[0].m, 0u);
  EXPECT_EQ(b.tools[0].s, 7);
  EXPECT_EQ(b.s_turn, Rational(82));  // (0.4*10 + 0.6*7) * 10
}

TEST(Turn, JudgeOutOfRangeIsMalformed) {
  auto in = price_instance();
  fixtures::CountingJudge j;
  j.k = 11;
  try {
    eval::score_tool_call_turn(std::string_view(fc(in.gold[0])), in, 0, j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::JudgeMalformedOutput);
  }
}

TEST(Instance, MissingTurnsScoreZero) {
  auto in = price_instance();
  in.gold.push_back(in.gold[0]);
  fixtures::CountingJudge j;
  std::vector<std::string> one{fc(in.gold[0])};
  std::vector<eval::TurnScoreBreakdown> turns;
  EXPECT_EQ(eval::score_tool_call_instance(in, one, j, {}, &turns), 50);
  ASSERT_EQ(turns.size(), 2u);
  EXPECT_TRUE(turns[1].missing);
}

TEST(Instance, PromptModeMatchesFcMode) {
  for (auto mode : {codec::CallMode::Prompt, codec::CallMode::Fc}) {
    auto in = price_instance(mode);
    fixtures::CountingJudge j;
    j.k = 9;
    j.x = 8;
    j.y = 6;
    std::vector<std::string> pred{codec::render_calls(in.gold[0], mode)};
    EXPECT_EQ(eval::score_tool_call_instance(in, pred, j, {}), Rational(756, 10))
        << codec::to_string(mode);
  }
}

TEST(Weights, Validation) {
  EXPECT_NO_THROW(eval::weights_from_json(json::object()));
  EXPECT_THROW(eval::weights_from_json(json{{"w_val", 0.5}}), Error);
  EXPECT_THROW(eval::weights_from_json(json{{"w_exec", 1.2}, {"w_select", -0.2}}), Error);
  EXPECT_NO_THROW(eval::weights_from_json(json{{"w_exec", 0.9}, {"w_select", 0.1}}));
}

TEST(Weights, SelectOnlyWeighting) {
  auto in = price_instance();
  fixtures::CountingJudge j;
  j.k = 6;
  j.x = 0;
  j.y = 0;
  eval::Weights w;
  w.w_select = 1;
  w.w_exec = 0;
  auto b = eval::score_tool_call_turn(std::string_view(fc(in.gold[0])), in, 0, j, w);
  EXPECT_EQ(b.s_turn, 60);
}

TEST(Kda, NumericAndStringNormalization) {
  eval::EvalInstance in = price_instance();
  in.candidates.push_back(fixtures::string_tool("get_history", {"symbol", "days"}, {"symbol"}));
  in.gold = {{{"get_history", {{"symbol", "600519.SH"}, {"days", "30"}}}}};
  in.kda_fields = {{0, "get_history", "days", 0}};
  auto kda = [&](json v) { return eval::compute_kda(in, {{{"get_history", {{"symbol", "600519.SH"}, {"days", v}}}}}); };
  EXPECT_EQ(kda("30"), 1);
  EXPECT_EQ(kda(30), 1);
  EXPECT_EQ(kda("31"), 0);
  EXPECT_EQ(eval::compute_kda(in, {}), 0);
  in.kda_fields.clear();
  EXPECT_EQ(eval::compute_kda(in, {}), std::nullopt);
}

TEST(Ita, UncalledDependentIsVacuouslySatisfied) {
  eval::EvalInstance in = price_instance();
  in.ita_constraints = {{"a", "b"}};
  EXPECT_EQ(eval::compute_ita(in, {{{"a", json::object()}}}), 1);
  EXPECT_EQ(eval::compute_ita(in, {{{"b", json::object()}}}), 0);
  EXPECT_EQ(eval::compute_ita(in, {{{"a", json::object()}, {"b", json::object()}}}), 1);
}

TEST(InstanceJson, RoundTrip) {
  auto in = price_instance();
  in.category = eval::Category::StSc;
  in.kda_fields = {{0, "get_stock_price", "symbol", 0}};
  auto back = eval::instance_from_json(eval::to_json(in));
  EXPECT_EQ(eval::to_json(back), eval::to_json(in));
  auto j = eval::to_json(in);
  j["class"] = {{"kind", "tool_call"}, {"config", "XX"}, {"pattern", "Single"}};
  EXPECT_THROW(eval::instance_from_json(j), Error);
}

namespace {
struct FlakyJudge : fixtures::CountingJudge {
  double select_score(const eval::TurnContext&) override { throw Error(Errc::JudgeUnavailable, "judge"); }
};
}  // namespace

TEST(Report, UnscoredInstancesAreExcluded) {
  auto ok = price_instance();
  auto bad = price_instance();
  bad.id = "bad";
  eval::Prediction p1{"price", {fc(ok.gold[0])}}, p2{"bad", {fc(bad.gold[0])}};
  fixtures::CountingJudge good;
  FlakyJudge flaky;
  std::vector<eval::InstanceResult> rs = {eval::evaluate_instance(ok, &p1, good), eval::evaluate_instance(bad, &p2, flaky)};
  EXPECT_FALSE(rs[1].scored);
  auto rep = eval::aggregate_report(rs);
  EXPECT_EQ(rep.scored, 1u);
  EXPECT_EQ(rep.unscored, std::vector<std::string>{"bad"});
  EXPECT_EQ(rep.overall, Rational(100));
}

TEST(Report, MacroOverCategoriesAndBreakerCounts) {
  auto a = price_instance();
  auto b = price_instance();
  b.id = "b";
  eval::EvalInstance ud;
  ud.id = "ud";
  ud.category = eval::Category::UD;
  ud.history = {{"user", "hi"}};
  eval::Prediction pa{"price", {fc(a.gold[0])}}, pb{"b", {"no call"}}, pu{"ud", {"Hello!"}};
  fixtures::CountingJudge j;
  auto rep = eval::aggregate_report({eval::evaluate_instance(a, &pa, j), eval::evaluate_instance(b, &pb, j),
                                     eval::evaluate_instance(ud, &pu, j)});
  EXPECT_EQ(rep.categories[eval::Category::StSc].mean, Rational(50));
  EXPECT_EQ(rep.overall, Rational(75));
  EXPECT_EQ(rep.overall_micro, Rational(200, 3));
  EXPECT_EQ(rep.breaker_counts["FormatError"], 1u);
}

TEST(Report, MissingPredictionScoresZero) {
  auto in = price_instance();
  fixtures::CountingJudge j;
  auto r = eval::evaluate_instance(in, nullptr, j);
  EXPECT_TRUE(r.missing_prediction);
  EXPECT_EQ(r.total, 0);
}

TEST(Report, ParallelEvaluationMatchesSerial) {
  oracle::CaseGenerator gen(3);
  std::vector<eval::EvalInstance> ins;
  std::vector<eval::Prediction> preds;
  for (int i = 0; i < 60; ++i) {
    auto c = gen.non_tool();
    ins.push_back(c.instance);
    preds.push_back({c.instance.id, c.prediction});
  }
  auto make = [] { return std::make_unique<fixtures::CountingJudge>(); };
  auto s = eval::evaluate_all(ins, preds, make, {}, 1), p = eval::evaluate_all(ins, preds, make, {}, 4);
  ASSERT_EQ(s.size(), p.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i].total, p[i].total);
}

// Invariant: a breaker turn never reaches the judge, whatever the candidate set.
TEST(Property, BreakerTurnsNeverConsultJudge) {
  oracle::CaseGenerator gen(77);
  for (int i = 0; i < 300; ++i) {
    auto c = gen.tool_call();
    for (std::size_t t = 0; t < c.prediction.size() && t < c.script.size(); ++t) {
      if (c.script[t].kind == oracle::PredKind::Valid) continue;
      fixtures::CountingJudge j;
      auto b = eval::score_tool_call_turn(std::string_view(c.prediction[t]), c.instance, t, j);
      EXPECT_FALSE(b.v_rule);
      EXPECT_EQ(b.s_turn, 0);
      EXPECT_EQ(j.calls, 0);
    }
  }
}
