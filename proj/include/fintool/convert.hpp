#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fintool/cbhws.hpp"
#include "fintool/dialogue.hpp"
#include "fintool/format_codec.hpp"

namespace fintool::convert {

struct BenchItem {
  eval::EvalInstance instance;
  eval::Prediction reference;  // the trajectory's own assistant output, rendered as raw model text
};

// One instance per user turn of an accepted trajectory. Tool-call steps after the turn become gold
// turns; a text-only answer becomes UD (no candidates), CI (the next round was inserted in response)
// or DR.
inline std::vector<BenchItem> bench_from_trajectory(const dialogue::DialogueTrajectory& tr, codec::CallMode mode) {
  std::vector<BenchItem> out;
  if (!tr.accepted()) return out;
  const auto& turns = tr.turns;
  const dialogue::DialoguePlan* final_plan = tr.plan_history.empty() ? nullptr : &tr.plan_history.back();
  std::size_t user_index = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].role != "user") continue;
    const std::size_t this_user = user_index++;
    std::size_t end = i + 1;
    while (end < turns.size() && turns[end].role != "user") ++end;

    eval::EvalInstance in;
    in.id = tr.id + "#" + std::to_string(this_user);
    in.mode = mode;
    for (std::size_t h = 0; h <= i; ++h) in.history.push_back(dialogue::DialogueTrajectory::to_message(turns[h]));
    std::set<std::string> seen;
    std::string reply;
    bool have_assistant = false;
    for (std::size_t k = i + 1; k < end; ++k) {
      const auto& t = turns[k];
      if (t.role != "assistant") continue;
      have_assistant = true;
      if (t.candidates)
        for (const auto& spec : t.candidates->tools)
          if (seen.insert(spec.name).second) in.candidates.push_back(spec);
      if (!t.tool_calls.empty())
        in.gold.push_back(t.tool_calls);
      else
        reply = t.content;
    }
    if (!have_assistant) continue;

    eval::Prediction ref;
    ref.id = in.id;
    if (!in.gold.empty()) {
      const bool single_turn = this_user == 0;
      const bool single_candidate = in.candidates.size() == 1;
      in.category = single_turn ? (single_candidate ? eval::Category::StSc : eval::Category::StMc)
                                : (single_candidate ? eval::Category::MtSc : eval::Category::MtMc);
      in.pattern = in.gold.size() > 1 ? eval::Pattern::Serial
                   : in.gold.front().size() > 1 ? eval::Pattern::Parallel
                                                : eval::Pattern::Single;
      for (const auto& g : in.gold) ref.turns.push_back(codec::render_calls(g, mode));
    } else {
      bool next_inserted = false;
      if (end < turns.size() && final_plan && turns[end].round < final_plan->rounds.size())
        next_inserted = final_plan->rounds[turns[end].round].inserted;
      in.category = in.candidates.empty() ? eval::Category::UD : next_inserted ? eval::Category::CI : eval::Category::DR;
      ref.turns.push_back(reply);
    }
    eval::validate_instance(in);
    out.push_back({std::move(in), std::move(ref)});
  }
  return out;
}

}  // namespace fintool::convert
