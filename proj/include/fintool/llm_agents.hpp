#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fintool/cbhws.hpp"
#include "fintool/core.hpp"
#include "fintool/dialogue.hpp"
#include "fintool/format_codec.hpp"
#include "fintool/io.hpp"
#include "fintool/llm_gateway.hpp"
#include "fintool/retrieval.hpp"
#include "fintool/tool_graph.hpp"
#include "fintool/tool_registry.hpp"

#ifndef FINTOOL_ASSET_DIR
#define FINTOOL_ASSET_DIR "assets"
#endif

namespace fintool::agents {

using gateway::Gateway;
using gateway::GatewayRequest;

inline std::filesystem::path asset_dir() {
  if (const char* env = std::getenv("FINTOOL_ASSET_DIR"); env && *env) return env;
  return FINTOOL_ASSET_DIR;
}

inline std::string load_prompt(const std::string& name) { return io::read_file(asset_dir() / "prompts" / (name + ".txt")); }

// First JSON object in model output: the whole text, a fenced block, or the outermost braces.
inline std::optional<json> extract_json(std::string_view text) {
  auto attempt = [](std::string_view s) -> std::optional<json> {
    try {
      return json::parse(s);
    } catch (const json::parse_error&) {
      return std::nullopt;
    }
  };
  auto t = trim(text);
  if (auto j = attempt(t)) return j;
  if (auto fence = t.find("```"); fence != std::string_view::npos) {
    auto start = t.find('\n', fence);
    auto end = start == std::string_view::npos ? start : t.find("```", start);
    if (end != std::string_view::npos)
      if (auto j = attempt(t.substr(start + 1, end - start - 1))) return j;
  }
  auto l = t.find('{'), r = t.rfind('}');
  if (l != std::string_view::npos && r != std::string_view::npos && r > l) return attempt(t.substr(l, r - l + 1));
  return std::nullopt;
}

// Token inside the last \boxed{...}, lowercased and trimmed.
inline std::optional<std::string> extract_boxed(std::string_view text) {
  auto pos = text.rfind("\\boxed{");
  if (pos == std::string_view::npos) return std::nullopt;
  auto start = pos + 7;
  auto end = text.find('}', start);
  if (end == std::string_view::npos) return std::nullopt;
  return to_lower(trim(text.substr(start, end - start)));
}

inline std::string history_text(std::span<const Message> history) {
  std::string out;
  for (const auto& m : history) out += "<" + m.role + ">\n" + m.content + "\n</" + m.role + ">\n";
  return out.empty() ? "(empty)" : out;
}

inline std::string tools_json(std::span<const registry::ToolSpec> tools) {
  json arr = json::array();
  for (const auto& t : tools) arr.push_back(registry::to_json(t));
  return arr.dump(2);
}

// One request/response exchange with a single re-ask when the reply fails `parse`.
class Client {
 public:
  Client(Gateway& gw, std::string profile, Errc failure_code)
      : gw_(gw), profile_(std::move(profile)), failure_code_(failure_code) {}

  void set_session(std::string s) { session_ = std::move(s); }
  const std::string& session() const { return session_; }

  template <typename T>
  T ask(const std::string& stage, const std::string& prompt, const std::map<std::string, std::string>& vars,
        const std::function<std::optional<T>(const std::string&)>& parse, bool expect_json = true) {
    GatewayRequest req;
    req.profile = profile_;
    req.stage = stage;
    req.session = session_;
    req.messages = {{"user", prompt}};
    req.expect_json = expect_json;
    req.vars = vars;
    std::string reply;
    for (int round = 0; round < 2; ++round) {
      try {
        reply = gw_.complete(req).text;
      } catch (const gateway::GatewayError& e) {
        if (failure_code_ == Errc::JudgeMalformedOutput) throw;
        throw Error(failure_code_, stage, e.what());
      }
      if (auto v = parse(reply)) return *v;
      req.messages.push_back({"assistant", reply});
      req.messages.push_back({"user", "The previous reply did not follow the required output format. Reply again "
                                      "with only the required format."});
    }
    throw Error(failure_code_, stage, "malformed output after one re-ask: " + reply.substr(0, 200));
  }

  std::optional<json> ask_json(const std::string& stage, const std::string& prompt,
                               const std::map<std::string, std::string>& vars,
                               const std::function<bool(const json&)>& valid) {
    return ask<json>(stage, prompt, vars, [&](const std::string& r) -> std::optional<json> {
      auto j = extract_json(r);
      if (!j || !j->is_object() || !valid(*j)) return std::nullopt;
      return j;
    });
  }

 private:
  Gateway& gw_;
  std::string profile_;
  Errc failure_code_;
  std::string session_;
};

// ---------------------------------------------------------------------------
// Judges

inline bool is_score(const json& v) { return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 10.0; }

inline std::string perfect_detailed_scores(std::span<const codec::ToolCall> calls) {
  json arr = json::array();
  for (const auto& c : calls) {
    json e = json::object();
    e["tool_name"] = c.name;
    e["part_a_structure_score"] = 10;
    json ys = json::object();
    for (auto it = c.arguments.begin(); it != c.arguments.end(); ++it) ys[it.key()] = 10;
    e["part_b_value_scores"] = std::move(ys);
    e["justification"] = "";
    arr.push_back(std::move(e));
  }
  return arr.dump();
}

class LlmScoringJudge final : public eval::ScoringJudge {
 public:
  LlmScoringJudge(Gateway& gw, std::string profile)
      : client_(gw, std::move(profile), Errc::JudgeMalformedOutput),
        select_tmpl_(load_prompt("judge_tool_selection")),
        params_tmpl_(load_prompt("judge_parameters")),
        ci_tmpl_(load_prompt("judge_clarification")) {}

  double select_score(const eval::TurnContext& ctx) override {
    client_.set_session(ctx.instance->id);
    auto j = client_.ask_json("judge_select", codec::substitute(select_tmpl_, vars(ctx)), vars(ctx),
                              [](const json& j) { return j.contains("score") && is_score(j["score"]); });
    return (*j)["score"].get<double>();
  }

  std::vector<eval::ParamJudgement> param_scores(const eval::TurnContext& ctx) override {
    client_.set_session(ctx.instance->id);
    const auto n = ctx.predicted.size();
    auto valid = [n](const json& j) {
      auto d = j.find("detailed_scores");
      if (d == j.end() || !d->is_array() || d->size() != n) return false;
      for (const auto& e : *d) {
        if (!e.is_object() || !e.contains("part_a_structure_score") || !is_score(e["part_a_structure_score"])) return false;
        auto b = e.find("part_b_value_scores");
        if (b != e.end() && !b->is_null()) {
          if (!b->is_object()) return false;
          for (const auto& v : *b)
            if (!is_score(v)) return false;
        }
      }
      return true;
    };
    auto j = client_.ask_json("judge_params", codec::substitute(params_tmpl_, vars(ctx)), vars(ctx), valid);
    std::vector<eval::ParamJudgement> out;
    for (const auto& e : (*j)["detailed_scores"]) {
      eval::ParamJudgement p;
      p.tool_name = e.value("tool_name", "");
      p.x = e["part_a_structure_score"].get<double>();
      if (auto b = e.find("part_b_value_scores"); b != e.end() && b->is_object())
        for (auto it = b->begin(); it != b->end(); ++it) p.y.emplace_back(it.key(), it.value().get<double>());
      out.push_back(std::move(p));
    }
    return out;
  }

  bool confirms_clarification(const eval::EvalInstance& inst, std::string_view response) override {
    client_.set_session(inst.id);
    std::map<std::string, std::string> v{{"test_model_response", std::string(response)}};
    return client_.ask<bool>("judge_ci", codec::substitute(ci_tmpl_, v), v,
                             [](const std::string& r) -> std::optional<bool> {
                               auto b = extract_boxed(r);
                               if (b == "true") return true;
                               if (b == "false") return false;
                               return std::nullopt;
                             },
                             false);
  }

 private:
  std::map<std::string, std::string> vars(const eval::TurnContext& ctx) const {
    return {{"conversation_history", history_text(ctx.instance->history)},
            {"candidate_tools", tools_json(ctx.instance->candidates)},
            {"reference_tools", codec::calls_to_json(std::vector<codec::ToolCall>(ctx.gold.begin(), ctx.gold.end())).dump(2)},
            {"model_prediction", codec::calls_to_json(std::vector<codec::ToolCall>(ctx.predicted.begin(), ctx.predicted.end())).dump(2)},
            {"perfect_detailed_scores", perfect_detailed_scores(ctx.predicted)}};
  }

  Client client_;
  std::string select_tmpl_, params_tmpl_, ci_tmpl_;
};

class LlmToolJudge final : public registry::ToolJudge {
 public:
  LlmToolJudge(Gateway& gw, std::string profile) : client_(gw, std::move(profile), Errc::JudgeUnavailable) {}

  registry::ToolJudgement review(const registry::ToolSpec& spec, const std::vector<std::string>& prior) override {
    client_.set_session(spec.name);
    std::string prompt =
        "Review this financial tool definition for logical correctness: the description must match the parameters, "
        "parameter semantics must be unambiguous, and the tool must do one thing. Reply with JSON "
        "{\"pass\": bool, \"diagnosis\": string, \"revised_spec\": optional tool object}.\n\nTool:\n" +
        registry::to_json(spec).dump(2);
    if (!prior.empty()) {
      prompt += "\n\nEarlier diagnoses:\n";
      for (const auto& d : prior) prompt += "- " + d + "\n";
    }
    std::map<std::string, std::string> v{{"tool_name", spec.name}};
    auto j = client_.ask_json("verify_tool", prompt, v, [](const json& j) {
      if (!j.contains("pass") || !j["pass"].is_boolean()) return false;
      if (j.contains("revised_spec") && !j["revised_spec"].is_null()) {
        try {
          registry::tool_from_json(j["revised_spec"]);
        } catch (const Error&) {
          return false;
        }
      }
      return true;
    });
    registry::ToolJudgement out;
    out.pass = (*j)["pass"].get<bool>();
    out.diagnosis = j->value("diagnosis", "");
    if (j->contains("revised_spec") && !(*j)["revised_spec"].is_null()) out.revised_spec = registry::tool_from_json((*j)["revised_spec"]);
    return out;
  }

 private:
  Client client_;
};

class LlmEdgeJudge final : public graph::EdgeJudge {
 public:
  LlmEdgeJudge(Gateway& gw, std::string profile) : client_(gw, std::move(profile), Errc::JudgeMalformedOutput) {}

  std::optional<graph::Relation> classify(const registry::ToolSpec& head, const registry::ToolSpec& tail) override {
    client_.set_session(head.name + "->" + tail.name);
    std::string prompt =
        "Decide whether the second tool depends on the first. \"direct_tool_dependency\": the second tool cannot run "
        "correctly unless the first ran before it. \"indirect_tool_dependency\": running the first beforehand helps. "
        "\"none\" otherwise. Reply with JSON {\"relation\": ...}.\n\nFirst tool:\n" +
        registry::to_json(head).dump(2) + "\n\nSecond tool:\n" + registry::to_json(tail).dump(2);
    std::map<std::string, std::string> v{{"head", head.name}, {"tail", tail.name}};
    auto j = client_.ask_json("edge_label", prompt, v, [](const json& j) {
      auto r = j.find("relation");
      if (r == j.end() || !r->is_string()) return false;
      auto s = r->get<std::string>();
      return s == "none" || s == "direct_tool_dependency" || s == "indirect_tool_dependency";
    });
    auto s = (*j)["relation"].get<std::string>();
    if (s == "none") return std::nullopt;
    return graph::relation_from_string(s);
  }

 private:
  Client client_;
};

class LlmRewriter final : public retrieval::QueryRewriter {
 public:
  LlmRewriter(Gateway& gw, std::string profile) : gw_(gw), profile_(std::move(profile)) {}

  // Stateless so one instance can serve every worker; the mock session is keyed by the history.
  std::string rewrite(std::span<const Message> history) override {
    const auto text = history_text(history);
    Client client(gw_, profile_, Errc::RewriterUnavailable);
    client.set_session(hex64(fnv1a64(text)));
    std::string prompt =
        "Rewrite the user's latest request as one self-contained search query for a tool catalog, resolving "
        "references to earlier turns. Reply with JSON {\"query\": string}.\n\n" + text;
    std::map<std::string, std::string> v{{"last_user", retrieval::last_user_utterance(history)}};
    try {
      auto j = client.ask_json("rewrite", prompt, v, [](const json& j) { return j.contains("query") && j["query"].is_string(); });
      return (*j)["query"].get<std::string>();
    } catch (const Error& e) {
      throw Error(Errc::RewriterUnavailable, "rewrite", e.what());
    }
  }

 private:
  Gateway& gw_;
  std::string profile_;
};

// ---------------------------------------------------------------------------
// Synthesis agents

inline std::string persona_text(const dialogue::Persona& p) {
  return "Basic profile: " + p.basic_profile.dump() + "\nFinancial profile: " + p.financial_profile.dump();
}

inline std::string plan_text(const dialogue::DialoguePlan& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.rounds.size(); ++i) {
    out += "Round " + std::to_string(i + 1) + (plan.rounds[i].inserted ? " (Inserted)" : "") + ": " + plan.rounds[i].intent;
    out += plan.rounds[i].status == dialogue::RoundStatus::Completed ? " [Completed]\n" : "\n";
  }
  return out;
}

inline bool string_array(const json& j) {
  if (!j.is_array()) return false;
  for (const auto& e : j)
    if (!e.is_string()) return false;
  return true;
}

class LlmGlobalAgent final : public dialogue::GlobalAgent {
 public:
  LlmGlobalAgent(Gateway& gw, std::string profile, const registry::Library* library = nullptr)
      : client_(gw, std::move(profile), Errc::AgentFailure), library_(library) {}

  void begin(const std::string& id) override { client_.set_session(id); }

  dialogue::InitPlanResponse init_plan(const dialogue::SeedInstruction& seed, const dialogue::Persona& persona,
                                       const std::string& context) override {
    std::string prompt =
        "You are the global agent planning a multi-turn financial consultation. From the persona, the seed "
        "instruction and the context, write the user's intent for each round. Reply with JSON {\"rounds\": [string], "
        "\"candidate_tools\": [tool names the dialogue will need]}.\n\n" +
        persona_text(persona) + "\n\nSeed instruction: " + seed.text + "\n\nContext:\n" + context;
    std::map<std::string, std::string> v{{"seed_text", seed.text}, {"persona_id", persona.id}};
    if (library_ && !library_->tools().empty()) {
      v["first_library_tool"] = library_->tools().front().name;
      prompt += "\n\nAvailable tools: ";
      for (const auto& t : library_->tools()) prompt += t.name + " ";
    }
    auto j = client_.ask_json("init_plan", prompt, v, [](const json& j) {
      return j.contains("rounds") && string_array(j["rounds"]) &&
             (!j.contains("candidate_tools") || string_array(j["candidate_tools"]));
    });
    dialogue::InitPlanResponse r;
    r.rounds = (*j)["rounds"].get<std::vector<std::string>>();
    if (j->contains("candidate_tools")) r.candidate_tools = (*j)["candidate_tools"].get<std::vector<std::string>>();
    return r;
  }

  std::optional<std::size_t> confusion(const std::vector<std::string>& candidates, const dialogue::Persona& persona,
                                       const std::vector<Message>& history,
                                       const std::vector<std::string>& exemplars) override {
    std::string prompt =
        "Exactly one of the texts below is a genuine query from this user; the others are imitations. Judge persona "
        "compatibility, language style and traces of machine generation. Reply with JSON {\"analysis\": string, "
        "\"selected\": letter or \"none\"}.\n\n" + persona_text(persona) + "\n\nDialogue so far:\n" + history_text(history);
    for (std::size_t i = 0; i < candidates.size(); ++i) prompt += "\nText " + std::string(1, static_cast<char>('A' + i)) + ": " + candidates[i];
    if (!exemplars.empty()) {
      prompt += "\n\nReal user queries for reference:\n";
      for (const auto& e : exemplars) prompt += "- " + e + "\n";
    }
    const auto n = candidates.size();
    auto j = client_.ask_json("confusion", prompt, {}, [n](const json& j) {
      auto s = j.find("selected");
      if (s == j.end()) return false;
      if (s->is_number_unsigned() || s->is_number_integer()) return s->get<long long>() >= 0 && static_cast<std::size_t>(s->get<long long>()) < n;
      if (!s->is_string()) return false;
      auto v = s->get<std::string>();
      return v == "none" || (v.size() == 1 && v[0] >= 'A' && static_cast<std::size_t>(v[0] - 'A') < n);
    });
    const auto& s = (*j)["selected"];
    if (s.is_number()) return s.get<std::size_t>();
    auto v = s.get<std::string>();
    if (v == "none") return std::nullopt;
    return static_cast<std::size_t>(v[0] - 'A');
  }

  dialogue::Verdict quality(const std::string& query, const dialogue::DialoguePlan& plan, const dialogue::Persona& persona,
                            const std::vector<Message>& history) override {
    std::string prompt =
        "Check the user query against four requirements: plan consistency with the current round, behavior "
        "consistency with the round's action, persona and style match, and rule compliance. Reply with JSON "
        "{\"pass\": bool, \"reasons\": [string]}.\n\nPlan:\n" + plan_text(plan) + "\n" + persona_text(persona) +
        "\n\nDialogue so far:\n" + history_text(history) + "\nQuery: " + query;
    auto j = client_.ask_json("quality", prompt, {{"query", query}}, [](const json& j) {
      return j.contains("pass") && j["pass"].is_boolean() && (!j.contains("reasons") || string_array(j["reasons"]));
    });
    dialogue::Verdict v{"quality", (*j)["pass"].get<bool>(), "", std::nullopt, 1};
    if (j->contains("reasons"))
      for (const auto& r : (*j)["reasons"]) v.detail += (v.detail.empty() ? "" : "; ") + r.get<std::string>();
    return v;
  }

  dialogue::Verdict process(const dialogue::AssistantAction& action, const retrieval::CandidateSet& candidates,
                            const std::vector<Message>& history) override {
    std::string prompt =
        "Audit the assistant's next action: logic flow, necessity of any tool call, tool selection against the "
        "candidates, and parameter completeness. Reply with JSON {\"pass\": bool, \"diagnosis\": string}.\n\n"
        "Candidate tools:\n" + tools_json(candidates.tools) + "\n\nDialogue so far:\n" + history_text(history) +
        "\nThought: " + action.thought + "\nAction: " +
        (action.is_tool_call() ? codec::calls_to_json(action.tool_calls).dump() : "reply: " + action.text);
    auto j = client_.ask_json("process", prompt, {}, [](const json& j) { return j.contains("pass") && j["pass"].is_boolean(); });
    return dialogue::Verdict{"process", (*j)["pass"].get<bool>(), j->value("diagnosis", ""), std::nullopt, 1};
  }

  dialogue::PlanUpdateResponse update_plan(const dialogue::DialoguePlan& plan, const std::vector<Message>& latest) override {
    std::string prompt =
        "Update the dialogue plan. Completed rounds are locked. If the assistant asked the user for information, "
        "insert a round in which the user answers it. If the observed facts contradict a pending round, revise it. "
        "Reply with JSON {\"trigger\": \"none\" | \"responsive_insertion\" | \"plan_fact_conflict\", \"pending\": "
        "[remaining round intents], \"completion\": bool}.\n\nPlan:\n" + plan_text(plan) + "\nLatest turns:\n" +
        history_text(latest);
    json pending = plan.pending_intents();
    auto j = client_.ask_json("update_plan", prompt, {{"pending", pending.dump()}}, [](const json& j) {
      if (!j.contains("completion") || !j["completion"].is_boolean()) return false;
      if (j.contains("trigger") && (!j["trigger"].is_string() || !dialogue::plan_trigger_from_string(j["trigger"].get<std::string>())))
        return false;
      return !j.contains("pending") || j["pending"].is_null() || string_array(j["pending"]);
    });
    dialogue::PlanUpdateResponse r;
    r.trigger = dialogue::plan_trigger_from_string(j->value("trigger", "none")).value();
    if (j->contains("pending") && !(*j)["pending"].is_null()) r.pending = (*j)["pending"].get<std::vector<std::string>>();
    r.completion = (*j)["completion"].get<bool>();
    return r;
  }

 private:
  Client client_;
  const registry::Library* library_;
};

class LlmUserAgent final : public dialogue::UserAgent {
 public:
  LlmUserAgent(Gateway& gw, std::string profile) : client_(gw, std::move(profile), Errc::AgentFailure) {}
  void begin(const std::string& id) override { client_.set_session(id); }

  std::vector<std::string> queries(const dialogue::Persona& persona, const dialogue::PlanRound& round,
                                   const std::vector<Message>& history, std::size_t variants,
                                   const std::string& feedback) override {
    std::string prompt =
        "Role-play the user described below and write your next message for this round's intent. Produce " +
        std::to_string(variants) + " variants: one natural query in the user's own voice, and the rest plausible but "
        "less authentic alternatives. Reply with JSON {\"queries\": [string]}.\n\n" + persona_text(persona) +
        "\n\nRound intent: " + round.intent + "\n\nDialogue so far:\n" + history_text(history);
    if (!feedback.empty()) prompt += "\nThe previous attempt was rejected: " + feedback;
    auto j = client_.ask_json("user_query", prompt, {{"round_intent", round.intent}}, [](const json& j) {
      return j.contains("queries") && string_array(j["queries"]) && !j["queries"].empty();
    });
    return (*j)["queries"].get<std::vector<std::string>>();
  }

 private:
  Client client_;
};

class LlmAssistantAgent final : public dialogue::AssistantAgent {
 public:
  LlmAssistantAgent(Gateway& gw, std::string profile) : client_(gw, std::move(profile), Errc::AgentFailure) {}
  void begin(const std::string& id) override { client_.set_session(id); }

  dialogue::AssistantAction act(const std::vector<Message>& history, const retrieval::CandidateSet& candidates,
                                const std::string& feedback) override {
    std::string prompt =
        "You are a financial assistant with the tools below. Either call tools or reply to the user. Reply with JSON "
        "{\"thought\": string, \"tool_calls\": [{\"name\": string, \"arguments\": object}], \"content\": string}; leave "
        "tool_calls empty to reply.\n\nTools:\n" + tools_json(candidates.tools) + "\n\nDialogue so far:\n" + history_text(history);
    if (!feedback.empty()) prompt += "\nYour previous action was rejected: " + feedback;
    json first = json::array();
    if (!candidates.tools.empty()) {
      json call = json::object();
      call["name"] = candidates.tools.front().name;
      call["arguments"] = dialogue::example_arguments(candidates.tools.front());
      first.push_back(std::move(call));
    }
    json names = candidates.names();
    std::map<std::string, std::string> v{{"first_candidate_calls", first.dump()}, {"candidate_names", names.dump()}};
    auto j = client_.ask_json("assistant", prompt, v, [](const json& j) {
      if (auto c = j.find("tool_calls"); c != j.end() && !c->is_null()) {
        try {
          codec::calls_from_json(*c);
        } catch (const Error&) {
          return false;
        }
      }
      return true;
    });
    dialogue::AssistantAction a;
    a.thought = j->value("thought", "");
    a.text = j->value("content", "");
    if (j->contains("tool_calls") && !(*j)["tool_calls"].is_null()) a.tool_calls = codec::calls_from_json((*j)["tool_calls"]);
    return a;
  }

 private:
  Client client_;
};

class LlmToolAgent final : public dialogue::ToolAgent {
 public:
  LlmToolAgent(Gateway& gw, std::string profile) : client_(gw, std::move(profile), Errc::AgentFailure) {}
  void begin(const std::string& id) override { client_.set_session(id); }

  dialogue::ToolResult execute(const codec::ToolCall& call, const registry::ToolSpec& spec, std::uint64_t seed) override {
    std::string prompt =
        "Simulate the execution of this tool and return a realistic result. Use status \"empty\" when the query "
        "legitimately finds nothing and \"error\" when the request names an entity that does not exist. Reply with "
        "JSON {\"status\": \"ok\" | \"empty\" | \"error\", \"content\": string}.\n\nTool:\n" +
        registry::to_json(spec).dump(2) + "\n\nCall: " + codec::to_json(call).dump() + "\nVariation seed: " + hex64(seed);
    std::map<std::string, std::string> v{{"tool_name", call.name}, {"arguments", call.arguments.dump()}, {"seed", hex64(seed)}};
    auto j = client_.ask_json("tool", prompt, v, [](const json& j) {
      auto s = j.find("status");
      if (s == j.end() || !s->is_string()) return false;
      auto x = s->get<std::string>();
      return x == "ok" || x == "empty" || x == "error";
    });
    auto s = (*j)["status"].get<std::string>();
    dialogue::ToolResult r;
    r.status = s == "ok" ? dialogue::ToolStatus::Ok : s == "empty" ? dialogue::ToolStatus::Empty : dialogue::ToolStatus::Error;
    const auto& c = (*j)["content"];
    r.content = c.is_string() ? c.get<std::string>() : c.dump();
    return r;
  }

 private:
  Client client_;
};

// ---------------------------------------------------------------------------
// Profile configuration

// {"profiles": [EndpointProfile...], "roles": {role: profile id}}. Mock transcripts resolve
// relative to the config file's directory.
struct GatewayConfig {
  std::vector<gateway::EndpointProfile> profiles;
  std::map<std::string, std::string> roles;

  std::string role(const std::string& name) const {
    auto it = roles.find(name);
    if (it != roles.end()) return it->second;
    if (roles.count("default")) return roles.at("default");
    if (profiles.size() == 1) return profiles.front().id;
    throw Error(Errc::InvalidConfig, "roles." + name, "no profile assigned to role");
  }
};

inline GatewayConfig gateway_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  GatewayConfig c;
  auto ps = j.find("profiles");
  if (ps == j.end() || !ps->is_array() || ps->empty()) throw Error(Errc::InvalidConfig, "profiles", "at least one profile");
  for (const auto& p : *ps) {
    auto prof = gateway::profile_from_json(p);
    if (!prof.mock_file.empty() && std::filesystem::path(prof.mock_file).is_relative())
      prof.mock_file = (base_dir / prof.mock_file).string();
    c.profiles.push_back(std::move(prof));
  }
  if (auto r = j.find("roles"); r != j.end())
    for (auto it = r->begin(); it != r->end(); ++it) c.roles[it.key()] = it.value().get<std::string>();
  return c;
}

}  // namespace fintool::agents
