#pragma once

#include <memory>

#include "fintool/llm_agents.hpp"
#include "support.hpp"

namespace consultation {

using namespace fintool;

struct Replay {
  dialogue::DialogueTrajectory trajectory;
  std::shared_ptr<gateway::MockBackend> backend;
  registry::Library library;
};

// Runs the fund 019667 consultation with the LLM-backed agents reading the scripted transcript.
inline Replay run(std::uint64_t seed = 0) {
  Replay r;
  r.library = fixtures::load_library("fund_consultation/library.jsonl");
  r.backend = std::make_shared<gateway::MockBackend>(fixtures::read_jsonl("fund_consultation/mock.jsonl"));
  gateway::Gateway gw;
  gateway::EndpointProfile p;
  p.id = "synth";
  p.decoding.temperature = 0.6;
  gw.add_profile(p, r.backend);

  agents::LlmGlobalAgent global(gw, "synth", &r.library);
  agents::LlmUserAgent user(gw, "synth");
  agents::LlmAssistantAgent assistant(gw, "synth");
  agents::LlmToolAgent tool(gw, "synth");

  auto seed_row = fixtures::read_json("fund_consultation/seed.json");
  dialogue::DialogueJob job;
  job.seed = dialogue::seed_from_json(seed_row);
  job.id = job.seed.id;
  job.persona = dialogue::persona_from_json(fixtures::read_json("fund_consultation/persona.json"));

  dialogue::SynthesisConfig cfg;
  cfg.retrieval.mode = retrieval::Mode::Static;
  cfg.engines.library = &r.library;
  cfg.seed = seed;
  r.trajectory = dialogue::run_dialogue(job, {&global, &user, &assistant, &tool}, cfg);
  return r;
}

// Calls naming a tool outside the snapshot the assistant was given.
inline std::size_t hallucinated_calls(const dialogue::DialogueTrajectory& tr) {
  std::size_t n = 0;
  for (const auto& t : tr.turns)
    for (const auto& c : t.tool_calls)
      if (!t.candidates || !t.candidates->contains(c.name)) ++n;
  return n;
}

}  // namespace consultation
