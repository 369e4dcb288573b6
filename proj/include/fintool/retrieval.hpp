#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/semantic_index.hpp"
#include "fintool/tool_graph.hpp"
#include "fintool/tool_registry.hpp"

namespace fintool::retrieval {

using registry::Library;
using registry::ToolSpec;

enum class Mode { Static, Vector, GraphEnhanced };
enum class Provenance { Plan, VectorHit, GraphHop };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Static: return "static";
    case Mode::Vector: return "vector";
    case Mode::GraphEnhanced: return "graph_enhanced";
  }
  return "static";
}

inline std::optional<Mode> mode_from_string(std::string_view s) {
  if (s == "static") return Mode::Static;
  if (s == "vector") return Mode::Vector;
  if (s == "graph_enhanced" || s == "graph") return Mode::GraphEnhanced;
  return std::nullopt;
}

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Plan: return "plan";
    case Provenance::VectorHit: return "vector_hit";
    case Provenance::GraphHop: return "graph_hop";
  }
  return "plan";
}

inline std::optional<Provenance> provenance_from_string(std::string_view s) {
  if (s == "plan") return Provenance::Plan;
  if (s == "vector_hit") return Provenance::VectorHit;
  if (s == "graph_hop") return Provenance::GraphHop;
  return std::nullopt;
}

struct CandidateSet {
  Mode mode = Mode::Static;
  std::vector<ToolSpec> tools;
  std::vector<Provenance> provenance;  // parallel to `tools`
  std::size_t turn_index = 0;
  std::vector<std::string> warnings;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& t : tools) out.push_back(t.name);
    return out;
  }
  bool contains(std::string_view name) const {
    return std::any_of(tools.begin(), tools.end(), [&](const ToolSpec& t) { return t.name == name; });
  }
  const ToolSpec* find(std::string_view name) const {
    for (const auto& t : tools)
      if (t.name == name) return &t;
    return nullptr;
  }
};

class QueryRewriter {
 public:
  virtual ~QueryRewriter() = default;
  // Throws Error(RewriterUnavailable) when the backing service fails.
  virtual std::string rewrite(std::span<const Message> history) = 0;
};

inline std::string last_user_utterance(std::span<const Message> history) {
  for (auto it = history.rbegin(); it != history.rend(); ++it)
    if (it->role == "user") return it->content;
  return {};
}

class IdentityRewriter final : public QueryRewriter {
 public:
  std::string rewrite(std::span<const Message> history) override { return last_user_utterance(history); }
};

struct RetrievalConfig {
  Mode mode = Mode::Static;
  std::size_t top_k = 10;
  std::size_t hops = 1;
  QueryRewriter* rewriter = nullptr;  // identity when null
  // Empty queries raise EmptyQuery when strict; otherwise the lexicographically first top_k tools are returned.
  bool strict_empty_query = true;
};

// Falls back to the identity rewriter, recording a warning, when the rewriter is unavailable.
inline std::string rewrite_query(std::span<const Message> history, QueryRewriter* rewriter,
                                 std::vector<std::string>* warnings = nullptr) {
  if (!rewriter) return last_user_utterance(history);
  try {
    return rewriter->rewrite(history);
  } catch (const Error& e) {
    if (e.code() != Errc::RewriterUnavailable) throw;
    if (warnings) warnings->push_back(std::string("rewriter unavailable, using identity: ") + e.what());
    return last_user_utterance(history);
  }
}

struct Engines {
  const Library* library = nullptr;
  const index::VectorIndex* index = nullptr;
  const graph::ToolGraph* graph = nullptr;
  const index::Encoder* encoder = nullptr;
};

namespace detail {

inline void push_unique(CandidateSet& cs, std::unordered_set<std::string>& seen, const ToolSpec& t, Provenance p) {
  if (!seen.insert(t.name).second) return;
  cs.tools.push_back(t);
  cs.provenance.push_back(p);
}

inline std::vector<std::string> vector_hits(const RetrievalConfig& config, std::span<const Message> history,
                                            const Engines& eng, std::vector<std::string>& warnings) {
  if (!eng.index || !eng.encoder || !eng.library)
    throw Error(Errc::InvalidConfig, "vector", "vector retrieval needs a library, an index and an encoder");
  if (eng.encoder->id() != eng.index->encoder_id())
    throw Error(Errc::EncoderMismatch, eng.encoder->id(), "index encoder is '" + eng.index->encoder_id() + "'");
  const std::string query = rewrite_query(history, config.rewriter, &warnings);
  auto qv = eng.encoder->encode(query);
  if (trim(query).empty() || index::norm(qv) == 0.0) {
    if (config.strict_empty_query) throw Error(Errc::EmptyQuery, "turn_context", "no usable query text");
    std::vector<std::string> names;
    for (const auto& e : eng.index->entries()) names.push_back(e.name);
    std::sort(names.begin(), names.end());
    names.resize(std::min(names.size(), config.top_k));
    warnings.push_back("empty query: lenient name-ordered fallback");
    return names;
  }
  std::vector<std::string> names;
  for (auto& hit : index::top_k(*eng.index, qv, config.top_k)) names.push_back(std::move(hit.name));
  return names;
}

}  // namespace detail

// Builds V_cand for one turn. Static: plan_tools as given. Vector: top_k hits on the rewritten
// query. Graph-enhanced: the vector hits, then hop-expansion additions ordered by (distance, name).
inline CandidateSet assemble_candidates(const RetrievalConfig& config, std::span<const Message> history,
                                        const std::vector<std::string>& plan_tools, const Engines& eng,
                                        std::size_t turn_index = 0) {
  if (config.top_k < 1) throw Error(Errc::InvalidConfig, "top_k", "top_k must be >= 1");
  if (!eng.library) throw Error(Errc::InvalidConfig, "library", "a library is required");
  CandidateSet cs;
  cs.mode = config.mode;
  cs.turn_index = turn_index;
  std::unordered_set<std::string> seen;

  if (config.mode == Mode::Static) {
    for (const auto& name : plan_tools) {
      const auto* t = eng.library->find(name);
      if (!t) throw Error(Errc::UnknownTool, name);
      if (seen.count(name)) throw Error(Errc::InvalidValue, name, "duplicate tool in plan set");
      detail::push_unique(cs, seen, *t, Provenance::Plan);
    }
    return cs;
  }

  auto hits = detail::vector_hits(config, history, eng, cs.warnings);
  for (const auto& name : hits) detail::push_unique(cs, seen, eng.library->at(name), Provenance::VectorHit);
  if (config.mode == Mode::Vector) return cs;

  if (!eng.graph) throw Error(Errc::InvalidConfig, "graph", "graph-enhanced retrieval needs a tool graph");
  std::set<std::string> seeds(hits.begin(), hits.end());
  auto dist = graph::k_hop_distances(*eng.graph, seeds, config.hops);
  std::vector<std::pair<std::size_t, std::string>> additions;
  for (const auto& [name, d] : dist)
    if (!seen.count(name)) additions.emplace_back(d, name);
  std::sort(additions.begin(), additions.end());
  for (const auto& [d, name] : additions) detail::push_unique(cs, seen, eng.library->at(name), Provenance::GraphHop);
  return cs;
}

}  // namespace fintool::retrieval
