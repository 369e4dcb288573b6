#pragma once

// In-process agents whose behavior is fixed by a "fate" word carried in the job id and seed text.
//   ok          one round, one tool call, then a reply
//   reflection  every user query fails the quality test
//   empty       the tool keeps returning no data
//   error       the tool keeps rejecting the entity
//   maxturns    the plan has more rounds than the turn budget
//   agentfail   planning throws

#include <string>
#include <vector>

#include "fintool/fintool.hpp"

namespace scripted {

using namespace fintool;
using namespace fintool::dialogue;

inline const std::vector<std::string>& fates() {
  static const std::vector<std::string> f{"ok", "reflection", "empty", "error", "maxturns", "agentfail"};
  return f;
}

inline std::string fate_of(const std::string& text) {
  for (const auto& f : fates())
    if (text.find("fate-" + f + "-") != std::string::npos) return f;
  return "ok";
}

inline std::optional<DiscardReason> expected_reason(const std::string& fate) {
  if (fate == "reflection") return DiscardReason::ReflectionLoop;
  if (fate == "empty") return DiscardReason::EmptyToolResult;
  if (fate == "error") return DiscardReason::EntityHallucination;
  if (fate == "maxturns") return DiscardReason::MaxTurns;
  if (fate == "agentfail") return DiscardReason::AgentFailure;
  return std::nullopt;
}

class Global final : public GlobalAgent {
 public:
  explicit Global(std::string tool) : tool_(std::move(tool)) {}
  void begin(const std::string& id) override { fate_ = fate_of(id); }

  InitPlanResponse init_plan(const SeedInstruction& seed, const Persona&, const std::string&) override {
    if (fate_ == "agentfail") throw Error(Errc::AgentFailure, seed.id, "planner unavailable");
    InitPlanResponse r;
    const int rounds = fate_ == "maxturns" ? 12 : 1;
    for (int i = 0; i < rounds; ++i) r.rounds.push_back("round " + std::to_string(i + 1) + " of " + seed.text);
    r.candidate_tools = {tool_};
    return r;
  }
  std::optional<std::size_t> confusion(const std::vector<std::string>&, const Persona&, const std::vector<Message>&,
                                       const std::vector<std::string>&) override {
    return 0;
  }
  Verdict quality(const std::string&, const DialoguePlan&, const Persona&, const std::vector<Message>&) override {
    return {"quality", fate_ != "reflection", fate_ == "reflection" ? "off-persona" : "", std::nullopt, 1};
  }
  Verdict process(const AssistantAction&, const retrieval::CandidateSet&, const std::vector<Message>&) override {
    return {"process", true, "", std::nullopt, 1};
  }
  PlanUpdateResponse update_plan(const DialoguePlan& plan, const std::vector<Message>&) override {
    PlanUpdateResponse r;
    r.completion = plan.pending_intents().empty();
    return r;
  }

 private:
  std::string tool_;
  std::string fate_;
};

class User final : public UserAgent {
 public:
  std::vector<std::string> queries(const Persona&, const PlanRound& round, const std::vector<Message>&, std::size_t variants,
                                   const std::string&) override {
    std::vector<std::string> out{"Please help: " + round.intent};
    for (std::size_t i = 1; i < variants; ++i) out.push_back("variant " + std::to_string(i));
    return out;
  }
};

// Calls the first candidate after a user message or a failed tool result; replies otherwise.
class Assistant final : public AssistantAgent {
 public:
  AssistantAction act(const std::vector<Message>& history, const retrieval::CandidateSet& cs, const std::string&) override {
    AssistantAction a;
    const auto& last = history.back();
    const bool retry = last.role == "tool" && last.content.find("[retry]") != std::string::npos;
    if ((last.role == "user" || retry) && !cs.tools.empty()) {
      a.thought = "look it up";
      a.tool_calls.push_back({cs.tools.front().name, example_arguments(cs.tools.front())});
    } else {
      a.text = "Here is the answer.";
    }
    return a;
  }
};

class Tool final : public ToolAgent {
 public:
  void begin(const std::string& id) override { fate_ = fate_of(id); }
  ToolResult execute(const codec::ToolCall&, const registry::ToolSpec&, std::uint64_t) override {
    if (fate_ == "empty") return {ToolStatus::Empty, "no rows [retry]"};
    if (fate_ == "error") return {ToolStatus::Error, "entity not found [retry]"};
    return {ToolStatus::Ok, "{\"value\": 1}"};
  }

 private:
  std::string fate_;
};

inline Persona persona() {
  Persona p;
  p.id = "p";
  p.basic_profile = {{"age", 40}};
  p.financial_profile = {{"risk_tolerance", "low"}};
  return p;
}

inline DialogueJob job(const std::string& fate, int n) {
  DialogueJob j;
  j.id = "fate-" + fate + "-" + std::to_string(n);
  j.seed.id = j.id;
  j.seed.text = "question " + j.id;
  j.seed.persona_id = "p";
  j.persona = persona();
  return j;
}

}  // namespace scripted
