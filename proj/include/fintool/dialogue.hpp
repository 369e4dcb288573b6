#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/format_codec.hpp"
#include "fintool/retrieval.hpp"
#include "fintool/tool_registry.hpp"

namespace fintool::dialogue {

using codec::ToolCall;
using registry::ToolSpec;
using retrieval::CandidateSet;

// ---------------------------------------------------------------------------
// Data model

struct Persona {
  std::string id;
  json basic_profile = json::object();
  json financial_profile = json::object();
};

inline Persona persona_from_json(const json& j) {
  Persona p;
  p.id = j.value("id", "");
  if (p.id.empty()) throw Error(Errc::MissingField, "persona.id");
  auto obj = [&](const char* k) {
    auto it = j.find(k);
    if (it == j.end() || !it->is_object() || it->empty()) throw Error(Errc::MissingField, p.id + "." + k, "must be a non-empty object");
    return *it;
  };
  p.basic_profile = obj("basic_profile");
  p.financial_profile = obj("financial_profile");
  return p;
}

inline json to_json(const Persona& p) {
  json j = json::object();
  j["id"] = p.id;
  j["basic_profile"] = p.basic_profile;
  j["financial_profile"] = p.financial_profile;
  return j;
}

struct SeedInstruction {
  std::string id;
  std::string text;
  std::string persona_id;
  std::string context_ref;
  std::string context;  // the stimulating corpus text, when carried inline
};

inline SeedInstruction seed_from_json(const json& j, std::size_t line = 0) {
  SeedInstruction s;
  s.id = j.value("id", "seed-" + std::to_string(line));
  s.text = j.value("text", "");
  if (trim(s.text).empty()) throw Error(Errc::MissingField, s.id + ".text", "seed text must be non-empty");
  s.persona_id = j.value("persona_id", "");
  if (s.persona_id.empty()) throw Error(Errc::MissingField, s.id + ".persona_id");
  s.context_ref = j.value("context_ref", "");
  s.context = j.value("context", "");
  return s;
}

inline json to_json(const SeedInstruction& s) {
  json j = json::object();
  j["id"] = s.id;
  j["text"] = s.text;
  j["persona_id"] = s.persona_id;
  j["context_ref"] = s.context_ref;
  j["context"] = s.context;
  return j;
}

enum class RoundStatus { Pending, Completed };

struct PlanRound {
  std::string intent;
  RoundStatus status = RoundStatus::Pending;
  bool inserted = false;
  bool operator==(const PlanRound&) const = default;
};

struct DialoguePlan {
  std::vector<PlanRound> rounds;
  int version = 0;
  bool completion = false;

  // The first pending round, which is the current one.
  std::optional<std::size_t> current() const {
    for (std::size_t i = 0; i < rounds.size(); ++i)
      if (rounds[i].status == RoundStatus::Pending) return i;
    return std::nullopt;
  }
  std::size_t completed_count() const {
    return static_cast<std::size_t>(std::count_if(rounds.begin(), rounds.end(),
                                                  [](const PlanRound& r) { return r.status == RoundStatus::Completed; }));
  }
  std::vector<std::string> pending_intents() const {
    std::vector<std::string> out;
    for (const auto& r : rounds)
      if (r.status == RoundStatus::Pending) out.push_back(r.intent);
    return out;
  }
};

inline json to_json(const DialoguePlan& p) {
  json j = json::object();
  j["version"] = p.version;
  j["completion"] = p.completion;
  json rounds = json::array();
  for (const auto& r : p.rounds) {
    json rj = json::object();
    rj["intent"] = r.intent;
    rj["status"] = r.status == RoundStatus::Pending ? "pending" : "completed";
    if (r.inserted) rj["inserted"] = true;
    rounds.push_back(std::move(rj));
  }
  j["rounds"] = std::move(rounds);
  return j;
}

inline DialoguePlan plan_from_json(const json& j) {
  DialoguePlan p;
  p.version = j.value("version", 0);
  p.completion = j.value("completion", false);
  for (const auto& r : j.at("rounds"))
    p.rounds.push_back({r.at("intent").get<std::string>(),
                        r.value("status", "pending") == "completed" ? RoundStatus::Completed : RoundStatus::Pending,
                        r.value("inserted", false)});
  return p;
}

enum class ToolStatus { Ok, Empty, Error };

inline std::string_view to_string(ToolStatus s) {
  switch (s) {
    case ToolStatus::Ok: return "ok";
    case ToolStatus::Empty: return "empty";
    case ToolStatus::Error: return "error";
  }
  return "ok";
}

struct ToolResult {
  ToolStatus status = ToolStatus::Ok;
  std::string content;
};

struct AssistantAction {
  std::string thought;
  std::vector<ToolCall> tool_calls;
  std::string text;
  bool is_tool_call() const { return !tool_calls.empty(); }
};

struct Verdict {
  std::string stage;  // confusion | quality | precheck | process | update_plan
  bool pass = true;
  std::string detail;
  std::optional<std::size_t> selected;  // confusion test only
  int attempt = 1;
};

inline json to_json(const Verdict& v) {
  json j = json::object();
  j["stage"] = v.stage;
  j["pass"] = v.pass;
  if (v.selected) j["selected"] = *v.selected;
  if (!v.detail.empty()) j["detail"] = v.detail;
  j["attempt"] = v.attempt;
  return j;
}

struct Turn {
  std::string role;  // user | assistant | tool
  std::string content;
  std::vector<ToolCall> tool_calls;        // assistant
  std::string tool_name;                   // tool
  std::optional<ToolStatus> tool_status;   // tool
  std::optional<CandidateSet> candidates;  // assistant
  std::vector<Verdict> verdicts;
  std::size_t round = 0;  // index of the plan round this turn belongs to
};

enum class DiscardReason { ReflectionLoop, EmptyToolResult, EntityHallucination, MaxTurns, AgentFailure };
inline constexpr DiscardReason kAllDiscardReasons[] = {DiscardReason::ReflectionLoop, DiscardReason::EmptyToolResult,
                                                      DiscardReason::EntityHallucination, DiscardReason::MaxTurns,
                                                      DiscardReason::AgentFailure};

inline std::string_view to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::ReflectionLoop: return "ReflectionLoop";
    case DiscardReason::EmptyToolResult: return "EmptyToolResult";
    case DiscardReason::EntityHallucination: return "EntityHallucination";
    case DiscardReason::MaxTurns: return "MaxTurns";
    case DiscardReason::AgentFailure: return "AgentFailure";
  }
  return "AgentFailure";
}

inline std::optional<DiscardReason> discard_reason_from_string(std::string_view s) {
  for (auto r : kAllDiscardReasons)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

struct DialogueTrajectory {
  std::string id;
  std::string persona_id;
  std::string seed_id;
  retrieval::Mode mode = retrieval::Mode::Static;
  std::vector<Turn> turns;
  std::vector<DialoguePlan> plan_history;
  std::vector<std::string> plan_triggers;  // why each version after the first was made
  std::optional<DiscardReason> discard;
  std::string discard_detail;

  bool accepted() const { return !discard.has_value(); }
  std::size_t user_turns() const {
    return static_cast<std::size_t>(std::count_if(turns.begin(), turns.end(), [](const Turn& t) { return t.role == "user"; }));
  }
  std::vector<Message> messages() const {
    std::vector<Message> out;
    for (const auto& t : turns) out.push_back(to_message(t));
    return out;
  }
  static Message to_message(const Turn& t) {
    if (t.role == "assistant" && !t.tool_calls.empty()) return {"assistant", codec::render_fc_calls(t.tool_calls)};
    if (t.role == "tool") return {"tool", t.tool_name + ": " + t.content};
    return {t.role, t.content};
  }
};

inline json to_json(const CandidateSet& cs) {
  json j = json::object();
  j["mode"] = retrieval::to_string(cs.mode);
  j["turn_index"] = cs.turn_index;
  json tools = json::array();
  for (std::size_t i = 0; i < cs.tools.size(); ++i) {
    json t = json::object();
    t["name"] = cs.tools[i].name;
    t["provenance"] = retrieval::to_string(cs.provenance[i]);
    tools.push_back(std::move(t));
  }
  j["tools"] = std::move(tools);
  if (!cs.warnings.empty()) j["warnings"] = cs.warnings;
  return j;
}

inline json to_json(const Turn& t) {
  json j = json::object();
  j["role"] = t.role;
  j["content"] = t.content;
  j["round"] = t.round;
  if (t.role == "assistant") {
    j["tool_calls"] = codec::calls_to_json(t.tool_calls);
    if (t.candidates) j["candidate_set"] = to_json(*t.candidates);
  }
  if (t.role == "tool") {
    j["name"] = t.tool_name;
    if (t.tool_status) j["status"] = to_string(*t.tool_status);
  }
  if (!t.verdicts.empty()) {
    json v = json::array();
    for (const auto& x : t.verdicts) v.push_back(to_json(x));
    j["supervision_verdicts"] = std::move(v);
  }
  return j;
}

inline json to_json(const DialogueTrajectory& tr) {
  json j = json::object();
  j["id"] = tr.id;
  j["persona_id"] = tr.persona_id;
  j["seed_id"] = tr.seed_id;
  j["mode"] = retrieval::to_string(tr.mode);
  j["status"] = tr.accepted() ? "accepted" : "discarded";
  if (tr.discard) {
    j["discard_reason"] = to_string(*tr.discard);
    j["discard_detail"] = tr.discard_detail;
  }
  json plans = json::array();
  for (const auto& p : tr.plan_history) plans.push_back(to_json(p));
  j["plan_history"] = std::move(plans);
  j["plan_triggers"] = tr.plan_triggers;
  json turns = json::array();
  for (const auto& t : tr.turns) turns.push_back(to_json(t));
  j["turns"] = std::move(turns);
  return j;
}

// Reads back what to_json wrote. Candidate tools are restored from `library` when given.
inline DialogueTrajectory trajectory_from_json(const json& j, const registry::Library* library = nullptr) {
  DialogueTrajectory tr;
  tr.id = j.at("id").get<std::string>();
  tr.persona_id = j.value("persona_id", "");
  tr.seed_id = j.value("seed_id", "");
  auto mode = retrieval::mode_from_string(j.value("mode", "static"));
  if (!mode) throw Error(Errc::InvalidValue, tr.id + ".mode");
  tr.mode = *mode;
  if (j.value("status", "accepted") == "discarded") {
    auto r = discard_reason_from_string(j.value("discard_reason", ""));
    if (!r) throw Error(Errc::InvalidValue, tr.id + ".discard_reason");
    tr.discard = r;
    tr.discard_detail = j.value("discard_detail", "");
  }
  for (const auto& p : j.value("plan_history", json::array())) tr.plan_history.push_back(plan_from_json(p));
  tr.plan_triggers = j.value("plan_triggers", std::vector<std::string>{});
  for (const auto& tj : j.at("turns")) {
    Turn t;
    t.role = tj.at("role").get<std::string>();
    t.content = tj.value("content", "");
    t.round = tj.value("round", std::size_t{0});
    if (auto c = tj.find("tool_calls"); c != tj.end()) t.tool_calls = codec::calls_from_json(*c);
    t.tool_name = tj.value("name", "");
    if (auto s = tj.find("status"); s != tj.end()) {
      auto v = s->get<std::string>();
      t.tool_status = v == "ok" ? ToolStatus::Ok : v == "empty" ? ToolStatus::Empty : ToolStatus::Error;
    }
    if (auto cs = tj.find("candidate_set"); cs != tj.end()) {
      CandidateSet set;
      set.mode = retrieval::mode_from_string(cs->value("mode", "static")).value_or(retrieval::Mode::Static);
      set.turn_index = cs->value("turn_index", std::size_t{0});
      for (const auto& e : cs->at("tools")) {
        auto name = e.at("name").get<std::string>();
        ToolSpec spec;
        spec.name = name;
        if (library) {
          if (const auto* found = library->find(name)) spec = *found;
        }
        set.tools.push_back(std::move(spec));
        set.provenance.push_back(
            retrieval::provenance_from_string(e.value("provenance", "plan")).value_or(retrieval::Provenance::Plan));
      }
      t.candidates = std::move(set);
    }
    for (const auto& v : tj.value("supervision_verdicts", json::array())) {
      Verdict x;
      x.stage = v.value("stage", "");
      x.pass = v.value("pass", true);
      x.detail = v.value("detail", "");
      if (v.contains("selected")) x.selected = v["selected"].get<std::size_t>();
      x.attempt = v.value("attempt", 1);
      t.verdicts.push_back(std::move(x));
    }
    tr.turns.push_back(std::move(t));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Agent contracts. None of them may keep state across dialogues.

struct InitPlanResponse {
  std::vector<std::string> rounds;
  std::vector<std::string> candidate_tools;  // plan-level tool set for the static environment
};

enum class PlanTrigger { None, ResponsiveInsertion, PlanFactConflict };

inline std::string_view to_string(PlanTrigger t) {
  switch (t) {
    case PlanTrigger::None: return "none";
    case PlanTrigger::ResponsiveInsertion: return "responsive_insertion";
    case PlanTrigger::PlanFactConflict: return "plan_fact_conflict";
  }
  return "none";
}

inline std::optional<PlanTrigger> plan_trigger_from_string(std::string_view s) {
  for (auto t : {PlanTrigger::None, PlanTrigger::ResponsiveInsertion, PlanTrigger::PlanFactConflict})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

// The agent proposes only the rounds after the completed ones; completed rounds are locked.
struct PlanUpdateResponse {
  PlanTrigger trigger = PlanTrigger::None;
  std::optional<std::vector<std::string>> pending;  // replacement for the pending rounds; unset keeps them
  bool completion = false;
};

class GlobalAgent {
 public:
  virtual ~GlobalAgent() = default;
  // Called once before each dialogue; implementations may only keep per-dialogue context.
  virtual void begin(const std::string& /*dialogue_id*/) {}
  virtual InitPlanResponse init_plan(const SeedInstruction& seed, const Persona& persona, const std::string& context) = 0;
  // Index of the genuine query, or nullopt when none qualifies.
  virtual std::optional<std::size_t> confusion(const std::vector<std::string>& candidates, const Persona& persona,
                                               const std::vector<Message>& history,
                                               const std::vector<std::string>& real_exemplars) = 0;
  virtual Verdict quality(const std::string& query, const DialoguePlan& plan, const Persona& persona,
                          const std::vector<Message>& history) = 0;
  virtual Verdict process(const AssistantAction& action, const CandidateSet& candidates,
                          const std::vector<Message>& history) = 0;
  virtual PlanUpdateResponse update_plan(const DialoguePlan& plan, const std::vector<Message>& latest_turns) = 0;
};

class UserAgent {
 public:
  virtual ~UserAgent() = default;
  // Called once before each dialogue; implementations may only keep per-dialogue context.
  virtual void begin(const std::string& /*dialogue_id*/) {}
  virtual std::vector<std::string> queries(const Persona& persona, const PlanRound& round,
                                           const std::vector<Message>& history, std::size_t variants,
                                           const std::string& feedback) = 0;
};

class AssistantAgent {
 public:
  virtual ~AssistantAgent() = default;
  // Called once before each dialogue; implementations may only keep per-dialogue context.
  virtual void begin(const std::string& /*dialogue_id*/) {}
  virtual AssistantAction act(const std::vector<Message>& history, const CandidateSet& candidates,
                              const std::string& feedback) = 0;
};

class ToolAgent {
 public:
  virtual ~ToolAgent() = default;
  // Called once before each dialogue; implementations may only keep per-dialogue context.
  virtual void begin(const std::string& /*dialogue_id*/) {}
  virtual ToolResult execute(const ToolCall& call, const ToolSpec& spec, std::uint64_t seed) = 0;
};

struct Agents {
  GlobalAgent* global = nullptr;
  UserAgent* user = nullptr;
  AssistantAgent* assistant = nullptr;
  ToolAgent* tool = nullptr;
};

struct Budgets {
  int per_turn_retries = 3;
  std::size_t max_turns = 8;            // user turns
  std::size_t max_assistant_steps = 8;  // assistant actions per user turn
};

struct SynthesisConfig {
  Budgets budgets;
  retrieval::RetrievalConfig retrieval;
  retrieval::Engines engines;
  std::size_t query_variants = 2;
  bool bypass_single_candidate = true;
  std::vector<std::string> real_exemplars;  // discriminator exemplars; empty by default
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Operations

inline DialoguePlan init_plan(const SeedInstruction& seed, const Persona& persona, const std::string& context,
                              GlobalAgent& agent, std::vector<std::string>* plan_tools = nullptr) {
  if (trim(seed.text).empty()) throw Error(Errc::InvalidValue, "seed.text", "seed text must be non-empty");
  if (persona.basic_profile.empty() || persona.financial_profile.empty())
    throw Error(Errc::InvalidValue, "persona", "persona profiles must be non-empty");
  auto resp = agent.init_plan(seed, persona, context);
  DialoguePlan plan;
  for (auto& r : resp.rounds)
    if (!trim(r).empty()) plan.rounds.push_back({std::move(r), RoundStatus::Pending, false});
  if (plan.rounds.empty()) throw Error(Errc::InvalidPlan, seed.id, "plan has no rounds");
  if (plan_tools) *plan_tools = std::move(resp.candidate_tools);
  return plan;
}

// Selects the genuine query among the variants. A single variant skips the agent when bypass is set.
inline Verdict confusion_test(const std::vector<std::string>& candidates, const Persona& persona,
                              const std::vector<Message>& history, GlobalAgent& agent, bool bypass_single = true,
                              const std::vector<std::string>& exemplars = {}) {
  Verdict v{"confusion", true, "", std::nullopt, 1};
  if (candidates.empty()) {
    v.pass = false;
    v.detail = "no candidate queries";
    return v;
  }
  if (candidates.size() == 1 && bypass_single) {
    v.selected = 0;
    v.detail = "single candidate, bypassed";
    return v;
  }
  auto sel = agent.confusion(candidates, persona, history, exemplars);
  if (!sel || *sel >= candidates.size()) {
    v.pass = false;
    v.detail = "no genuine query selected";
    return v;
  }
  v.selected = sel;
  return v;
}

inline Verdict quality_test(const std::string& query, const DialoguePlan& plan, const Persona& persona,
                            const std::vector<Message>& history, GlobalAgent& agent) {
  auto v = agent.quality(query, plan, persona, history);
  v.stage = "quality";
  return v;
}

// Deterministic checks run before any agent call: tool names must be candidates, required params present.
inline std::optional<std::string> rule_precheck(const AssistantAction& action, const CandidateSet& candidates) {
  for (const auto& c : action.tool_calls)
    if (!candidates.contains(c.name)) return "hallucination: '" + c.name + "' is not in the candidate set";
  for (const auto& c : action.tool_calls) {
    const auto* spec = candidates.find(c.name);
    if (!c.arguments.is_object()) return "missing required: arguments of '" + c.name + "' are not an object";
    for (const auto& r : spec->input_schema.required)
      if (!c.arguments.contains(r)) return "missing required: '" + c.name + "." + r + "'";
    if (auto v = registry::validate_arguments(spec->input_schema, c.arguments)) return "schema violation: " + *v;
  }
  return std::nullopt;
}

inline Verdict process_analysis(const AssistantAction& action, const CandidateSet& candidates,
                                const std::vector<Message>& history, GlobalAgent& agent) {
  if (auto why = rule_precheck(action, candidates)) return Verdict{"precheck", false, *why, std::nullopt, 1};
  auto v = agent.process(action, candidates, history);
  v.stage = "process";
  return v;
}

struct PlanUpdateResult {
  DialoguePlan plan;
  bool changed = false;
  PlanTrigger trigger = PlanTrigger::None;
};

// Applies the agent's proposal. Completed rounds are never touched; the version moves by one
// only when the pending rounds actually change.
inline PlanUpdateResult apply_plan_update(const DialoguePlan& plan, const PlanUpdateResponse& resp) {
  PlanUpdateResult out{plan, false, resp.trigger};
  if (resp.pending) {
    std::vector<std::string> proposed;
    for (const auto& r : *resp.pending)
      if (!trim(r).empty()) proposed.push_back(r);
    if (proposed != plan.pending_intents()) {
      std::vector<PlanRound> rounds;
      for (const auto& r : plan.rounds)
        if (r.status == RoundStatus::Completed) rounds.push_back(r);
      const auto old_pending = plan.pending_intents();
      for (const auto& intent : proposed) {
        bool was_planned = std::find(old_pending.begin(), old_pending.end(), intent) != old_pending.end();
        rounds.push_back({intent, RoundStatus::Pending, !was_planned && resp.trigger == PlanTrigger::ResponsiveInsertion});
      }
      out.plan.rounds = std::move(rounds);
      out.plan.version = plan.version + 1;
      out.changed = true;
    }
  }
  out.plan.completion = resp.completion;
  return out;
}

inline PlanUpdateResult update_plan(const DialoguePlan& plan, const std::vector<Message>& latest_turns, GlobalAgent& agent) {
  return apply_plan_update(plan, agent.update_plan(plan, latest_turns));
}

namespace detail {

struct Discard {
  DiscardReason reason;
  std::string detail;
};

}  // namespace detail

struct DialogueJob {
  std::string id;
  SeedInstruction seed;
  Persona persona;
  std::string context;
};

// The closed loop: user turn (confusion + quality), assistant steps (retrieval, pre-check,
// process analysis, tool execution), plan update; until completion or a budget runs out.
inline DialogueTrajectory run_dialogue(const DialogueJob& job, const Agents& agents, const SynthesisConfig& cfg) {
  if (cfg.budgets.per_turn_retries < 1 || cfg.budgets.max_turns < 1 || cfg.budgets.max_assistant_steps < 1)
    throw Error(Errc::InvalidConfig, "budgets", "budgets must be positive");
  if (!agents.global || !agents.user || !agents.assistant || !agents.tool)
    throw Error(Errc::InvalidConfig, "agents", "all four agents are required");

  DialogueTrajectory tr;
  tr.id = job.id;
  tr.persona_id = job.persona.id;
  tr.seed_id = job.seed.id;
  tr.mode = cfg.retrieval.mode;
  agents.global->begin(job.id);
  agents.user->begin(job.id);
  agents.assistant->begin(job.id);
  agents.tool->begin(job.id);
  const int retries = cfg.budgets.per_turn_retries;
  std::vector<Message> history;
  std::vector<std::string> plan_tools;
  DialoguePlan plan;

  auto discard = [&](DiscardReason r, std::string detail) {
    tr.discard = r;
    tr.discard_detail = std::move(detail);
    return tr;
  };

  try {
    plan = init_plan(job.seed, job.persona, job.context.empty() ? job.seed.context : job.context, *agents.global, &plan_tools);
  } catch (const Error& e) {
    return discard(DiscardReason::AgentFailure, e.what());
  }
  tr.plan_history.push_back(plan);

  std::size_t consecutive_empty = 0, consecutive_error = 0, assistant_turn_index = 0;
  try {
    while (!plan.completion) {
      auto cur = plan.current();
      if (!cur) break;
      if (tr.user_turns() >= cfg.budgets.max_turns)
        return discard(DiscardReason::MaxTurns, "plan not complete after " + std::to_string(cfg.budgets.max_turns) + " user turns");

      // User turn.
      Turn user_turn;
      user_turn.role = "user";
      user_turn.round = *cur;
      std::string feedback;
      bool accepted = false;
      for (int attempt = 1; attempt <= retries && !accepted; ++attempt) {
        auto variants = agents.user->queries(job.persona, plan.rounds[*cur], history, cfg.query_variants, feedback);
        auto cv = confusion_test(variants, job.persona, history, *agents.global, cfg.bypass_single_candidate, cfg.real_exemplars);
        cv.attempt = attempt;
        user_turn.verdicts.push_back(cv);
        if (!cv.pass) {
          feedback = cv.detail;
          continue;
        }
        const auto& query = variants[*cv.selected];
        auto qv = quality_test(query, plan, job.persona, history, *agents.global);
        qv.attempt = attempt;
        user_turn.verdicts.push_back(qv);
        if (!qv.pass) {
          feedback = qv.detail;
          continue;
        }
        user_turn.content = query;
        accepted = true;
      }
      if (!accepted) return discard(DiscardReason::ReflectionLoop, "user turn: " + feedback);
      history.push_back({"user", user_turn.content});
      tr.turns.push_back(std::move(user_turn));
      const std::size_t round_start = history.size() - 1;

      // Assistant steps until a text reply.
      for (std::size_t step = 0;; ++step) {
        if (step >= cfg.budgets.max_assistant_steps)
          return discard(DiscardReason::MaxTurns, "assistant did not reply within " + std::to_string(step) + " steps");
        auto cs = retrieval::assemble_candidates(cfg.retrieval, history, plan_tools, cfg.engines, assistant_turn_index++);
        Turn at;
        at.role = "assistant";
        at.round = *cur;
        std::optional<AssistantAction> approved;
        std::string afeedback;
        for (int attempt = 1; attempt <= retries && !approved; ++attempt) {
          auto action = agents.assistant->act(history, cs, afeedback);
          auto pv = process_analysis(action, cs, history, *agents.global);
          pv.attempt = attempt;
          at.verdicts.push_back(pv);
          if (!pv.pass) {
            afeedback = pv.detail;
            continue;
          }
          approved = std::move(action);
        }
        if (!approved) return discard(DiscardReason::ReflectionLoop, "assistant turn: " + afeedback);
        at.tool_calls = approved->tool_calls;
        at.content = approved->is_tool_call() ? approved->thought : approved->text;
        at.candidates = cs;
        tr.turns.push_back(at);
        history.push_back(DialogueTrajectory::to_message(tr.turns.back()));
        if (!approved->is_tool_call()) break;

        for (std::size_t i = 0; i < approved->tool_calls.size(); ++i) {
          const auto& call = approved->tool_calls[i];
          auto seed = derive_seed(cfg.seed, job.id + "|" + std::to_string(tr.turns.size()) + "|" + std::to_string(i));
          auto res = agents.tool->execute(call, *cs.find(call.name), seed);
          Turn tt;
          tt.role = "tool";
          tt.round = *cur;
          tt.tool_name = call.name;
          tt.tool_status = res.status;
          tt.content = res.content;
          tr.turns.push_back(tt);
          history.push_back(DialogueTrajectory::to_message(tr.turns.back()));
          consecutive_empty = res.status == ToolStatus::Empty ? consecutive_empty + 1 : 0;
          consecutive_error = res.status == ToolStatus::Error ? consecutive_error + 1 : 0;
          if (consecutive_empty >= static_cast<std::size_t>(retries))
            return discard(DiscardReason::EmptyToolResult, call.name + " returned empty data repeatedly");
          if (consecutive_error >= static_cast<std::size_t>(retries))
            return discard(DiscardReason::EntityHallucination, call.name + " failed repeatedly on the requested entity");
        }
      }

      plan.rounds[*cur].status = RoundStatus::Completed;
      std::vector<Message> latest(history.begin() + static_cast<std::ptrdiff_t>(round_start), history.end());
      auto upd = update_plan(plan, latest, *agents.global);
      plan = upd.plan;
      if (upd.changed) {
        tr.plan_history.push_back(plan);
        tr.plan_triggers.emplace_back(to_string(upd.trigger));
      }
    }
  } catch (const Error& e) {
    if (e.code() == Errc::EmptyQuery || e.code() == Errc::UnknownTool || e.code() == Errc::InvalidConfig ||
        e.code() == Errc::EncoderMismatch)
      throw;
    return discard(DiscardReason::AgentFailure, e.what());
  }
  // Status bookkeeping on the final plan; versions only move on content changes.
  if (!tr.plan_history.empty()) {
    tr.plan_history.back().rounds = plan.rounds;
    tr.plan_history.back().completion = plan.completion;
  }
  return tr;
}

// Runs independent dialogues on a bounded pool; results keep job order.
inline std::vector<DialogueTrajectory> run_dialogues(const std::vector<DialogueJob>& jobs,
                                                     const std::function<Agents(std::size_t worker)>& agents_for,
                                                     const SynthesisConfig& cfg, std::size_t workers = 1) {
  std::vector<DialogueTrajectory> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&](std::size_t w) {
    try {
      auto agents = agents_for(w);
      for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) out[i] = run_dialogue(jobs[i], agents, cfg);
    } catch (...) {
      std::lock_guard lk(mu);
      if (!failure) failure = std::current_exception();
      next = jobs.size();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, jobs.size()));
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------
// Checks and statistics

// Structural problems of a trajectory: illegal role order, calls outside the turn's candidates,
// plan versions with gaps, or mutated completed rounds. Empty when sound.
inline std::vector<std::string> audit_trajectory(const DialogueTrajectory& tr) {
  std::vector<std::string> issues;
  std::string prev;
  for (std::size_t i = 0; i < tr.turns.size(); ++i) {
    const auto& t = tr.turns[i];
    bool ok = (t.role == "user" && (prev.empty() || prev == "assistant")) ||
              (t.role == "assistant" && (prev == "user" || prev == "tool")) ||
              (t.role == "tool" && (prev == "assistant" || prev == "tool"));
    if (!ok) issues.push_back("turn " + std::to_string(i) + ": '" + t.role + "' after '" + prev + "'");
    if (t.role == "tool" && prev == "assistant" && tr.turns[i - 1].tool_calls.empty())
      issues.push_back("turn " + std::to_string(i) + ": tool turn after a text reply");
    if (t.role == "assistant")
      for (const auto& c : t.tool_calls)
        if (!t.candidates || !t.candidates->contains(c.name))
          issues.push_back("turn " + std::to_string(i) + ": '" + c.name + "' is not in the candidate snapshot");
    prev = t.role;
  }
  for (std::size_t v = 0; v < tr.plan_history.size(); ++v) {
    if (tr.plan_history[v].version != static_cast<int>(v)) issues.push_back("plan version gap at " + std::to_string(v));
    if (v == 0) continue;
    const auto& a = tr.plan_history[v - 1];
    const auto& b = tr.plan_history[v];
    std::size_t locked = 0;
    for (const auto& r : a.rounds)
      if (r.status == RoundStatus::Completed) ++locked;
    for (std::size_t k = 0, seen = 0; k < a.rounds.size() && seen < locked; ++k) {
      if (a.rounds[k].status != RoundStatus::Completed) continue;
      if (k >= b.rounds.size() || b.rounds[k].intent != a.rounds[k].intent)
        issues.push_back("completed round " + std::to_string(k) + " changed in version " + std::to_string(v));
      ++seen;
    }
  }
  return issues;
}

struct SynthesisStats {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t discarded = 0;
  std::map<std::string, std::size_t> by_reason;
  double discard_rate = 0.0;
  bool rate_defined = false;
  double avg_turns = 0.0;  // user turns over accepted trajectories
};

inline SynthesisStats synthesis_stats(const std::vector<DialogueTrajectory>& trs) {
  SynthesisStats s;
  for (auto r : kAllDiscardReasons) s.by_reason[std::string(to_string(r))] = 0;
  Rational turns = 0;
  for (const auto& t : trs) {
    ++s.total;
    if (t.accepted()) {
      ++s.accepted;
      turns += Rational(static_cast<long long>(t.user_turns()));
    } else {
      ++s.discarded;
      ++s.by_reason[std::string(to_string(*t.discard))];
    }
  }
  s.rate_defined = s.total > 0;
  if (s.total) s.discard_rate = to_double(Rational(static_cast<long long>(s.discarded)) / Rational(static_cast<long long>(s.total)));
  if (s.accepted) s.avg_turns = to_double(turns / Rational(static_cast<long long>(s.accepted)));
  return s;
}

inline json to_json(const SynthesisStats& s) {
  json j = json::object();
  j["total"] = s.total;
  j["accepted"] = s.accepted;
  j["discarded"] = s.discarded;
  json r = json::object();
  for (const auto& [k, v] : s.by_reason) r[k] = v;
  j["discarded_by_reason"] = std::move(r);
  j["discard_rate"] = s.discard_rate;
  j["discard_rate_defined"] = s.rate_defined;
  j["avg_turns"] = s.avg_turns;
  return j;
}

// Benchmark-style labels of an accepted trajectory, judged from its final round:
// round type by user-turn count, reply type and call pattern from the assistant steps.
inline json trajectory_labels(const DialogueTrajectory& tr) {
  json l = json::object();
  l["mode"] = retrieval::to_string(tr.mode);
  l["round_type"] = tr.user_turns() > 1 ? "MT" : "ST";
  std::size_t last_user = 0;
  for (std::size_t i = 0; i < tr.turns.size(); ++i)
    if (tr.turns[i].role == "user") last_user = i;
  std::size_t call_steps = 0, max_calls = 0;
  std::set<std::string> tools;
  std::size_t candidate_count = 0;
  for (std::size_t i = last_user; i < tr.turns.size(); ++i) {
    const auto& t = tr.turns[i];
    if (t.role != "assistant") continue;
    if (t.candidates) candidate_count = std::max(candidate_count, t.candidates->tools.size());
    if (t.tool_calls.empty()) continue;
    ++call_steps;
    max_calls = std::max(max_calls, t.tool_calls.size());
    for (const auto& c : t.tool_calls) tools.insert(c.name);
  }
  if (call_steps == 0) {
    l["reply_type"] = candidate_count == 0 ? "No Tool Reply" : "Normal Reply";
    l["pattern"] = "Null";
    l["tool_context"] = "Null";
  } else {
    l["reply_type"] = "Tool Call";
    l["pattern"] = call_steps > 1 ? "Serial" : max_calls > 1 ? "Parallel" : "Single";
    l["tool_context"] = candidate_count > 1 ? "Multi-tool" : "Single-tool";
  }
  l["num_turns"] = tr.user_turns();
  return l;
}

// Placeholder arguments that satisfy a tool's required parameters.
inline json example_arguments(const ToolSpec& spec) {
  json args = json::object();
  for (const auto& name : spec.input_schema.required) {
    const auto* p = spec.input_schema.find(name);
    if (!p) continue;
    const auto& s = p->schema;
    if (s.enum_values && !s.enum_values->empty()) {
      args[name] = s.enum_values->front();
      continue;
    }
    switch (s.type) {
      case registry::ParamType::String: args[name] = "sample"; break;
      case registry::ParamType::Integer: args[name] = 1; break;
      case registry::ParamType::Number: args[name] = 1.5; break;
      case registry::ParamType::Boolean: args[name] = true; break;
      case registry::ParamType::Array: args[name] = json::array(); break;
      case registry::ParamType::Object: args[name] = json::object(); break;
    }
  }
  return args;
}

}  // namespace fintool::dialogue
