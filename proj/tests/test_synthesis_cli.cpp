#include <gtest/gtest.h>

#include "consultation_replay.hpp"
#include "pipeline.hpp"
#include "scripted_agents.hpp"

using namespace fintool;
using fintool::json;

// ---- gateway --------------------------------------------------------------

namespace {
gateway::EndpointProfile profile(const std::string& id) {
  gateway::EndpointProfile p;
  p.id = id;
  p.retry.max_attempts = 3;
  p.retry.backoff_seconds = 0.5;
  return p;
}

gateway::GatewayRequest request(std::string prof, std::string stage, std::string session = "", std::string msg = "hi") {
  gateway::GatewayRequest r;
  r.profile = std::move(prof);
  r.stage = std::move(stage);
  r.session = std::move(session);
  r.messages = {{"user", std::move(msg)}};
  return r;
}
}  // namespace

TEST(Gateway, TransientFailuresRetryWithBackoff) {
  auto mock = std::make_shared<gateway::MockBackend>(std::vector<json>{
      {{"match", "s"}, {"fail", "Timeout"}}, {{"match", "s"}, {"fail", "Server"}}, {{"match", "s"}, {"response", "ok"}}});
  gateway::Gateway gw;
  std::vector<double> sleeps;
  gw.set_sleeper([&](double s) { if (s > 0) sleeps.push_back(s); });
  gw.add_profile(profile("p"), mock);
  auto c = gw.complete(request("p", "s", "x"));
  EXPECT_EQ(c.text, "ok");
  EXPECT_EQ(c.attempts, 3);
  EXPECT_EQ(sleeps, (std::vector<double>{0.5, 1.0}));
}

TEST(Gateway, AuthFailsImmediatelyAndRetriesExhaust) {
  auto auth = std::make_shared<gateway::MockBackend>(std::vector<json>{{{"match", "s"}, {"fail", "Auth"}}});
  auto down = std::make_shared<gateway::MockBackend>(std::vector<json>{{{"match", "s"}, {"fail", "RateLimited"}}});
  gateway::Gateway gw;
  gw.set_sleeper([](double) {});
  gw.add_profile(profile("auth"), auth);
  gw.add_profile(profile("down"), down);
  try {
    gw.complete(request("auth", "s"));
    FAIL();
  } catch (const gateway::GatewayError& e) {
    EXPECT_EQ(e.kind(), gateway::FailureKind::Auth);
    EXPECT_EQ(e.attempts(), 1);
  }
  try {
    gw.complete(request("down", "s"));
    FAIL();
  } catch (const gateway::GatewayError& e) {
    EXPECT_EQ(e.kind(), gateway::FailureKind::ExhaustedRetries);
    EXPECT_EQ(down->calls(), 3u);
  }
}

TEST(Gateway, MockCursorsArePerSessionAndSticky) {
  auto mock = std::make_shared<gateway::MockBackend>(std::vector<json>{
      {{"match", "s"}, {"contains", "special"}, {"response", "S"}},
      {{"match", "s"}, {"response", "one ${name}"}},
      {{"match", "s"}, {"response", "two"}}});
  gateway::Gateway gw;
  gw.set_sleeper([](double) {});
  gw.add_profile(profile("p"), mock);
  auto ask = [&](const std::string& session, const std::string& msg) {
    auto r = request("p", "s", session, msg);
    r.vars = {{"name", "N"}};
    return gw.complete(r).text;
  };
  EXPECT_EQ(ask("a", "hi"), "one N");
  EXPECT_EQ(ask("a", "hi"), "two");
  EXPECT_EQ(ask("a", "hi"), "two");
  EXPECT_EQ(ask("b", "hi"), "one N");
  EXPECT_EQ(ask("b", "a special one"), "S");
  EXPECT_THROW(gw.complete(request("p", "other")), gateway::GatewayError);
  EXPECT_EQ(mock->calls("s"), 5u);
}

TEST(Gateway, ProfileValidation) {
  gateway::Gateway gw;
  auto p = profile("p");
  p.decoding.temperature = -1;
  EXPECT_THROW(gw.add_profile(p, std::make_shared<gateway::MockBackend>()), Error);
  EXPECT_THROW(gw.complete(request("missing", "s")), Error);
}

// ---- LLM judge over mocks ---------------------------------------------------

TEST(LlmJudge, ParsesScoresAndReasksOnce) {
  auto mock = std::make_shared<gateway::MockBackend>(std::vector<json>{
      {{"match", "judge_select"}, {"response", "not json"}},
      {{"match", "judge_select"}, {"response", "```json\n{\"score\": 8}\n```"}},
      {{"match", "judge_params"},
       {"response", {{"detailed_scores",
                      {{{"tool_name", "get_stock_price"}, {"part_a_structure_score", 9}, {"part_b_value_scores", {{"symbol", 6}}}}}}}}},
      {{"match", "judge_ci"}, {"response", "reasoning... \\boxed{false}"}}});
  gateway::Gateway gw;
  gw.add_profile(profile("judge"), mock);
  agents::LlmScoringJudge judge(gw, "judge");
  eval::EvalInstance in;
  in.id = "x";
  in.history = {{"user", "price?"}};
  in.candidates = {registry::tool_from_json(fixtures::read_json("stock_price_mcp.json"))};
  in.gold = {{{"get_stock_price", {{"symbol", "600519.SH"}}}}};
  auto b = eval::score_tool_call_turn(std::string_view(codec::render_fc_calls(in.gold[0])), in, 0, judge);
  EXPECT_EQ(*b.k, 8);
  EXPECT_EQ(b.s_turn, Rational(320 + 6 * (27 + 42), 10));
  EXPECT_EQ(mock->calls("judge_select"), 2u);
  in.category = eval::Category::CI;
  std::vector<std::string> reply{"Which fund?"};
  EXPECT_EQ(eval::score_non_tool_call(in, reply, judge), 0);
}

TEST(LlmJudge, PersistentGarbageIsMalformed) {
  auto mock = std::make_shared<gateway::MockBackend>(std::vector<json>{{{"match", "*"}, {"response", "{\"score\": 42}"}}});
  gateway::Gateway gw;
  gw.add_profile(profile("judge"), mock);
  agents::LlmScoringJudge judge(gw, "judge");
  eval::EvalInstance in;
  in.id = "x";
  in.history = {{"user", "q"}};
  in.candidates = {fixtures::string_tool("t", {"a"}, {"a"})};
  in.gold = {{{"t", {{"a", "v"}}}}};
  eval::Prediction p{"x", {codec::render_fc_calls(in.gold[0])}};
  auto r = eval::evaluate_instance(in, &p, judge);
  EXPECT_FALSE(r.scored);
  EXPECT_EQ(mock->calls(), 2u);
}

// ---- synthesis ------------------------------------------------------------

TEST(Synthesis, ReplayFollowsTheTranscript) {
  const auto before = gateway::network_operations().load();
  auto r = consultation::run();
  const auto& tr = r.trajectory;
  auto exp = fixtures::read_json("fund_consultation/expected.json");
  ASSERT_TRUE(tr.accepted()) << tr.discard_detail;
  std::vector<std::string> users;
  for (const auto& t : tr.turns)
    if (t.role == "user") users.push_back(t.content);
  EXPECT_EQ(users, (std::vector<std::string>{exp["Q1"], exp["Q2"], exp["Q3"]}));
  ASSERT_EQ(tr.plan_history.size(), 2u);
  EXPECT_EQ(tr.plan_history[0].rounds.size(), 2u);
  EXPECT_EQ(tr.plan_history[0].rounds[0].intent, exp["R1"]);
  EXPECT_EQ(tr.plan_history[1].rounds[2].intent, exp["R3"]);
  EXPECT_TRUE(tr.plan_history[1].completion || tr.plan_history[1].rounds.size() == 3);
  bool clarified = false;
  for (const auto& t : tr.turns)
    if (t.role == "assistant" && t.content.rfind(exp["A2_prefix"].get<std::string>(), 0) == 0) clarified = true;
  EXPECT_TRUE(clarified);
  EXPECT_EQ(gateway::network_operations().load(), before);

  // Same transcript, different seed: identical because the mock ignores sampling.
  auto again = consultation::run();
  EXPECT_EQ(dialogue::to_json(again.trajectory), dialogue::to_json(tr));
}

TEST(Synthesis, ReplayConvertsToBenchmarkInstances) {
  auto r = consultation::run();
  auto items = convert::bench_from_trajectory(r.trajectory, codec::CallMode::Fc);
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[0].instance.category, eval::Category::StSc);
  EXPECT_EQ(items[1].instance.category, eval::Category::CI);
  EXPECT_EQ(items[2].instance.category, eval::Category::DR);
  // The trajectory's own output is a perfect prediction under a perfect judge.
  fixtures::CountingJudge j;
  for (const auto& it : items) EXPECT_EQ(eval::evaluate_instance(it.instance, &it.reference, j).total, 100) << it.instance.id;
}

TEST(Synthesis, TrajectoryJsonRoundTrip) {
  auto r = consultation::run();
  auto j = dialogue::to_json(r.trajectory);
  EXPECT_EQ(dialogue::to_json(dialogue::trajectory_from_json(j, &r.library)), j);
}

TEST(Synthesis, PlanUpdateKeepsCompletedRounds) {
  dialogue::DialoguePlan p;
  p.rounds = {{"a", dialogue::RoundStatus::Completed, false}, {"b", dialogue::RoundStatus::Pending, false}};
  auto same = dialogue::apply_plan_update(p, {dialogue::PlanTrigger::None, std::vector<std::string>{"b"}, false});
  EXPECT_FALSE(same.changed);
  EXPECT_EQ(same.plan.version, 0);
  auto ins = dialogue::apply_plan_update(p, {dialogue::PlanTrigger::ResponsiveInsertion, std::vector<std::string>{"c", "b"}, false});
  EXPECT_TRUE(ins.changed);
  EXPECT_EQ(ins.plan.version, 1);
  ASSERT_EQ(ins.plan.rounds.size(), 3u);
  EXPECT_EQ(ins.plan.rounds[0].intent, "a");
  EXPECT_TRUE(ins.plan.rounds[1].inserted);
  EXPECT_FALSE(ins.plan.rounds[2].inserted);
}

TEST(Synthesis, PrecheckMessages) {
  auto lib = fixtures::load_library("pipeline/tools.jsonl");
  retrieval::CandidateSet cs;
  cs.tools = {lib.at("get_stock_price")};
  dialogue::AssistantAction a;
  a.tool_calls = {{"get_stock_price", dialogue::example_arguments(lib.at("get_stock_price"))}};
  EXPECT_FALSE(dialogue::rule_precheck(a, cs));
  a.tool_calls = {{"search_stock_by_name", {{"name", "x"}}}};
  EXPECT_EQ(dialogue::rule_precheck(a, cs)->rfind("hallucination", 0), 0u);
  a.tool_calls = {{"get_stock_price", json::object()}};
  EXPECT_EQ(dialogue::rule_precheck(a, cs)->rfind("missing required", 0), 0u);
}

TEST(Synthesis, EachFateEndsAsScripted) {
  registry::Library mini({fixtures::string_tool("lookup", {"q"}, {"q"})});
  dialogue::SynthesisConfig cfg;
  cfg.engines.library = &mini;
  for (const auto& fate : scripted::fates()) {
    scripted::Global g("lookup");
    scripted::User u;
    scripted::Assistant a;
    scripted::Tool t;
    auto tr = dialogue::run_dialogue(scripted::job(fate, 0), {&g, &u, &a, &t}, cfg);
    EXPECT_EQ(tr.discard, scripted::expected_reason(fate)) << fate << ": " << tr.discard_detail;
    if (tr.accepted()) {
      EXPECT_TRUE(dialogue::audit_trajectory(tr).empty());
    }
  }
}

TEST(Synthesis, WorkerCountDoesNotChangeResults) {
  registry::Library mini({fixtures::string_tool("lookup", {"q"}, {"q"})});
  dialogue::SynthesisConfig cfg;
  cfg.engines.library = &mini;
  std::vector<dialogue::DialogueJob> jobs;
  for (int i = 0; i < 24; ++i) jobs.push_back(scripted::job(scripted::fates()[static_cast<std::size_t>(i) % 6], i));
  auto run = [&](std::size_t workers) {
    std::vector<std::unique_ptr<scripted::Global>> g;
    std::vector<std::unique_ptr<scripted::User>> u;
    std::vector<std::unique_ptr<scripted::Assistant>> a;
    std::vector<std::unique_ptr<scripted::Tool>> t;
    for (std::size_t w = 0; w < workers; ++w) {
      g.push_back(std::make_unique<scripted::Global>("lookup"));
      u.push_back(std::make_unique<scripted::User>());
      a.push_back(std::make_unique<scripted::Assistant>());
      t.push_back(std::make_unique<scripted::Tool>());
    }
    auto trs = dialogue::run_dialogues(
        jobs, [&](std::size_t w) { return dialogue::Agents{g[w].get(), u[w].get(), a[w].get(), t[w].get()}; }, cfg, workers);
    std::vector<json> out;
    for (const auto& tr : trs) out.push_back(dialogue::to_json(tr));
    return out;
  };
  EXPECT_EQ(run(1), run(4));
}

TEST(Synthesis, StatsWithNoTrajectories) {
  auto s = dialogue::synthesis_stats({});
  EXPECT_FALSE(s.rate_defined);
  EXPECT_EQ(s.total, 0u);
}

// ---- cli ----------------------------------------------------------------------

TEST(Cli, ExitCodes) {
  EXPECT_EQ(pipeline::run_cli({}).code, 1);
  EXPECT_EQ(pipeline::run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(pipeline::run_cli({"--version"}).code, 0);
  EXPECT_EQ(pipeline::run_cli({"build-lib", "--input", "/no/such/file", "--out", "/tmp/x"}).code, 1);
  fixtures::TempDir d("cli-codes");
  {
    std::ofstream bad(d / "bad.jsonl");
    bad << "{\"name\": \"t\"\n";
  }
  EXPECT_EQ(pipeline::run_cli({"build-lib", "--input", d / "bad.jsonl", "--out", d / "lib.jsonl", "--no-judge"}).code, 1);
  EXPECT_FALSE(std::filesystem::exists(d / "lib.jsonl"));
  // A judge that always errors is a runtime failure.
  {
    std::ofstream m(d / "down.jsonl");
    m << "{\"match\": \"*\", \"fail\": \"Server\"}\n";
    std::ofstream p(d / "profiles.json");
    p << R"({"profiles": [{"id": "judge", "backend": "mock", "mock_file": "down.jsonl", "retry": {"max_attempts": 1}}],
             "roles": {"default": "judge"}})";
  }
  auto r = pipeline::run_cli({"build-lib", "--input", fixtures::data("pipeline/tools.jsonl").string(), "--out", d / "lib.jsonl",
                              "--profiles", d / "profiles.json"});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, PipelineArtifactsCarryMetadata) {
  const auto before = gateway::network_operations().load();
  fixtures::TempDir d("cli-pipeline");
  auto fail = pipeline::run_mock_pipeline(d);
  ASSERT_FALSE(fail) << fail->argv[1] << ": " << fail->err;
  for (const auto& name : {"lib.jsonl", "graph.jsonl", "index.jsonl", "trajectories.jsonl", "bench.jsonl", "pred.jsonl"}) {
    auto rows = io::read_jsonl(d / name);
    ASSERT_FALSE(rows.empty()) << name;
    EXPECT_EQ(rows[0]["kind"], "artifact_metadata") << name;
    EXPECT_EQ(rows[0]["seed"], 7) << name;
    EXPECT_TRUE(rows[0].contains("tool_version"));
    EXPECT_TRUE(rows[0].contains("config_digest"));
  }
  auto report = fixtures::read_json(d / "report.json");
  EXPECT_EQ(report["metadata"]["subcommand"], "eval");
  auto stats = fixtures::read_json(d / "synth_stats.json");
  EXPECT_EQ(stats["total"], 30);
  EXPECT_EQ(gateway::network_operations().load(), before);

  // Seed changes the digest.
  fixtures::TempDir e("cli-pipeline-seed");
  ASSERT_FALSE(pipeline::run_mock_pipeline(e, "8"));
  EXPECT_NE(io::read_jsonl(d / "lib.jsonl")[0]["config_digest"], io::read_jsonl(e / "lib.jsonl")[0]["config_digest"]);
}

TEST(Cli, SampleAndStatsAreReproducible) {
  fixtures::TempDir d("cli-sample");
  auto quota = fixtures::read_json("benchmark_quota.json");
  std::vector<json> corpus;
  int n = 0;
  for (const auto& mode : {"static", "vector", "graph_enhanced"})
    for (const auto& row : quota["stage2"])
      for (int i = 0; i < 30; ++i) {
        json labels = row;
        labels.erase("count");
        labels["mode"] = mode;
        labels["num_turns"] = row["round_type"] == "ST" ? 1 : 2;
        corpus.push_back({{"id", n++}, {"labels", labels}});
      }
  io::write_jsonl_atomic(d / "corpus.jsonl", corpus);
  const auto q = fixtures::data("benchmark_quota.json").string();
  auto a = pipeline::run_cli({"sample", "--quota", q, "--corpus", d / "corpus.jsonl", "--out", d / "a.jsonl", "--shortfall",
                              d / "short.json", "--seed", "5"});
  auto b = pipeline::run_cli({"sample", "--quota", q, "--corpus", d / "corpus.jsonl", "--out", d / "b.jsonl", "--seed", "5"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(io::read_file(d / "a.jsonl"), io::read_file(d / "b.jsonl"));
  std::size_t missing = 0;
  for (const auto& [k, v] : fixtures::read_json(d / "short.json")["shortfalls"].items())
    missing += v["requested"].get<std::size_t>() - v["available"].get<std::size_t>();
  EXPECT_EQ(cli::read_rows(d / "a.jsonl").size() + missing, 843u);
  auto s = pipeline::run_cli({"stats", "--corpus", d / "a.jsonl", "--out", d / "stats.json"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_FALSE(s.out.empty());
}
