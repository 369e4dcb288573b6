#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/tool_registry.hpp"

namespace fintool::graph {

using registry::Library;
using registry::ToolSpec;

// Declared in priority order, highest first.
enum class Relation {
  DirectParameter = 0,
  DirectTool = 1,
  IndirectParameter = 2,
  IndirectTool = 3,
};

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::DirectParameter: return "direct_parameter_dependency";
    case Relation::DirectTool: return "direct_tool_dependency";
    case Relation::IndirectParameter: return "indirect_parameter_dependency";
    case Relation::IndirectTool: return "indirect_tool_dependency";
  }
  return "";
}

inline std::optional<Relation> relation_from_string(std::string_view s) {
  if (s == "direct_parameter_dependency") return Relation::DirectParameter;
  if (s == "direct_tool_dependency") return Relation::DirectTool;
  if (s == "indirect_parameter_dependency") return Relation::IndirectParameter;
  if (s == "indirect_tool_dependency") return Relation::IndirectTool;
  return std::nullopt;
}

inline int priority_rank(Relation r) { return static_cast<int>(r); }

enum class EvidenceSource { Heuristic, Judge };

struct Evidence {
  std::optional<std::string> matched_field;
  EvidenceSource source = EvidenceSource::Heuristic;
  bool operator==(const Evidence&) const = default;
};

struct Edge {
  std::string head;
  Relation relation = Relation::DirectParameter;
  std::string tail;
  Evidence evidence;

  auto key() const { return std::tie(head, relation, tail); }
  bool operator==(const Edge&) const = default;
};

inline bool edge_key_less(const Edge& a, const Edge& b) {
  return std::make_tuple(a.head, priority_rank(a.relation), a.tail) <
         std::make_tuple(b.head, priority_rank(b.relation), b.tail);
}

inline json to_json(const Edge& e) {
  json ev = json::object();
  if (e.evidence.matched_field) ev["matched_field"] = *e.evidence.matched_field;
  ev["source"] = e.evidence.source == EvidenceSource::Heuristic ? "heuristic" : "judge";
  json j = json::object();
  j["head"] = e.head;
  j["relation"] = to_string(e.relation);
  j["tail"] = e.tail;
  j["evidence"] = std::move(ev);
  return j;
}

inline Edge edge_from_json(const json& j) {
  Edge e;
  e.head = j.at("head").get<std::string>();
  e.tail = j.at("tail").get<std::string>();
  auto rel = relation_from_string(j.at("relation").get<std::string>());
  if (!rel) throw Error(Errc::InvalidValue, "relation", j.at("relation").dump());
  e.relation = *rel;
  if (auto ev = j.find("evidence"); ev != j.end()) {
    if (auto mf = ev->find("matched_field"); mf != ev->end()) e.evidence.matched_field = mf->get<std::string>();
    e.evidence.source = ev->value("source", "heuristic") == "judge" ? EvidenceSource::Judge : EvidenceSource::Heuristic;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Edge proposal

// Output field of A equal to an input param of B: required -> direct, optional -> indirect.
// At most one edge per (head, relation, tail); matched_field records the first match in A's output order.
inline std::vector<Edge> propose_param_edges(const Library& library) {
  struct Consumer {
    std::size_t tool;
    bool required;
  };
  std::unordered_map<std::string, std::vector<Consumer>> consumers;
  const auto& tools = library.tools();
  for (std::size_t i = 0; i < tools.size(); ++i)
    for (const auto& p : tools[i].input_schema.properties)
      consumers[p.name].push_back({i, tools[i].input_schema.is_required(p.name)});

  std::vector<Edge> edges;
  for (std::size_t a = 0; a < tools.size(); ++a) {
    const auto& head = tools[a];
    if (!head.output_schema) continue;
    std::map<std::pair<std::size_t, Relation>, std::string> found;
    for (const auto& field : head.output_schema->properties) {
      auto it = consumers.find(field.name);
      if (it == consumers.end()) continue;
      for (const auto& c : it->second) {
        if (c.tool == a) continue;
        auto rel = c.required ? Relation::DirectParameter : Relation::IndirectParameter;
        found.emplace(std::make_pair(c.tool, rel), field.name);
      }
    }
    for (const auto& [k, field] : found)
      edges.push_back(Edge{head.name, k.second, tools[k.first].name, Evidence{field, EvidenceSource::Heuristic}});
  }
  std::sort(edges.begin(), edges.end(), edge_key_less);
  return edges;
}

// Content tokens with a trailing plural 's' folded, used by the tool-pair pre-filter.
inline std::vector<std::string> folded_content_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto t : content_tokens(text)) {
    if (t.size() > 3 && t.back() == 's' && t[t.size() - 2] != 's') t.pop_back();
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Identifier-like runs in free text; used to detect one description naming another tool.
inline std::vector<std::string> mentioned_identifiers(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(to_lower(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_')
      cur.push_back(static_cast<char>(c));
    else
      flush();
  }
  flush();
  return out;
}

// Unordered pairs (i < j) whose descriptions cross-mention each other's names or share
// at least `min_shared_tokens` folded content tokens.
inline std::vector<std::pair<std::size_t, std::size_t>> prefilter_tool_pairs(const Library& library,
                                                                              std::size_t min_shared_tokens = 2) {
  const auto& tools = library.tools();
  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < tools.size(); ++i) by_name.emplace(tools[i].name, i);

  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < tools.size(); ++i) {
    for (const auto& ident : mentioned_identifiers(tools[i].description)) {
      auto it = by_name.find(ident);
      if (it == by_name.end() || it->second == i) continue;
      pairs.emplace(std::min(i, it->second), std::max(i, it->second));
    }
  }

  std::unordered_map<std::string, std::vector<std::size_t>> postings;
  for (std::size_t i = 0; i < tools.size(); ++i)
    for (auto& t : folded_content_tokens(tools[i].description)) postings[t].push_back(i);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> shared;
  for (const auto& [tok, ids] : postings)
    for (std::size_t x = 0; x < ids.size(); ++x)
      for (std::size_t y = x + 1; y < ids.size(); ++y) ++shared[{ids[x], ids[y]}];
  for (const auto& [p, n] : shared)
    if (n >= min_shared_tokens) pairs.insert(p);
  return {pairs.begin(), pairs.end()};
}

// Labels an ordered (prerequisite, dependent) pair. Returns DirectTool, IndirectTool or nullopt for "none".
class EdgeJudge {
 public:
  virtual ~EdgeJudge() = default;
  virtual std::optional<Relation> classify(const ToolSpec& head, const ToolSpec& tail) = 0;
};

inline std::vector<Edge> propose_tool_edges(const Library& library, EdgeJudge& judge) {
  const auto& tools = library.tools();
  std::vector<Edge> edges;
  for (auto [i, j] : prefilter_tool_pairs(library)) {
    for (auto [h, t] : {std::pair{i, j}, std::pair{j, i}}) {
      auto rel = judge.classify(tools[h], tools[t]);
      if (!rel) continue;
      if (*rel != Relation::DirectTool && *rel != Relation::IndirectTool)
        throw Error(Errc::JudgeMalformedOutput, tools[h].name + "->" + tools[t].name,
                    "edge judge may only emit tool-level relations");
      edges.push_back(Edge{tools[h].name, *rel, tools[t].name, Evidence{std::nullopt, EvidenceSource::Judge}});
    }
  }
  std::sort(edges.begin(), edges.end(), edge_key_less);
  return edges;
}

// Deduplicates (head, relation, tail), drops direct_tool_dependency where the pair already has
// direct_parameter_dependency, and orders by priority (PD > TD > PI > TI), stable within a level.
inline std::vector<Edge> apply_priority_rules(const std::vector<Edge>& edges) {
  std::set<std::pair<std::string, std::string>> has_pd;
  for (const auto& e : edges)
    if (e.relation == Relation::DirectParameter) has_pd.emplace(e.head, e.tail);
  std::set<std::tuple<std::string, int, std::string>> seen;
  std::vector<Edge> out;
  for (const auto& e : edges) {
    if (e.relation == Relation::DirectTool && has_pd.count({e.head, e.tail})) continue;
    if (!seen.emplace(e.head, priority_rank(e.relation), e.tail).second) continue;
    out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Edge& a, const Edge& b) { return priority_rank(a.relation) < priority_rank(b.relation); });
  return out;
}

// ---------------------------------------------------------------------------
// Graph

class ToolGraph {
 public:
  ToolGraph() = default;

  // Validates endpoints and applies the priority rules; stored edges are sorted by (head, relation, tail).
  ToolGraph(std::vector<std::string> nodes, const std::vector<Edge>& edges) {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    nodes_ = std::move(nodes);
    for (const auto& e : edges) {
      if (e.head == e.tail) throw Error(Errc::InvalidValue, e.head, "self-loop edge");
      if (!has_node(e.head)) throw Error(Errc::UnknownTool, e.head, "edge head is not a node");
      if (!has_node(e.tail)) throw Error(Errc::UnknownTool, e.tail, "edge tail is not a node");
    }
    edges_ = apply_priority_rules(edges);
    std::sort(edges_.begin(), edges_.end(), edge_key_less);
    for (const auto& e : edges_) {
      out_[e.head].insert(e.tail);
      in_[e.tail].insert(e.head);
    }
  }

  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool has_node(std::string_view n) const { return std::binary_search(nodes_.begin(), nodes_.end(), n); }

  const std::set<std::string>& successors(const std::string& n) const { return lookup(out_, n); }
  const std::set<std::string>& predecessors(const std::string& n) const { return lookup(in_, n); }

 private:
  static const std::set<std::string>& lookup(const std::unordered_map<std::string, std::set<std::string>>& m,
                                             const std::string& n) {
    static const std::set<std::string> kEmpty;
    auto it = m.find(n);
    return it == m.end() ? kEmpty : it->second;
  }

  std::vector<std::string> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::set<std::string>> out_;
  std::unordered_map<std::string, std::set<std::string>> in_;
};

inline ToolGraph build_graph(const Library& library, EdgeJudge* judge = nullptr) {
  auto edges = propose_param_edges(library);
  if (judge) {
    auto tool_edges = propose_tool_edges(library, *judge);
    edges.insert(edges.end(), tool_edges.begin(), tool_edges.end());
  }
  std::vector<std::string> nodes;
  for (const auto& t : library.tools()) nodes.push_back(t.name);
  return ToolGraph(std::move(nodes), edges);
}

// Hop distance of every node within `hops` undirected steps of a seed (seeds at distance 0).
inline std::map<std::string, std::size_t> k_hop_distances(const ToolGraph& g, const std::set<std::string>& seeds,
                                                          std::size_t hops) {
  std::map<std::string, std::size_t> dist;
  std::deque<std::string> frontier;
  for (const auto& s : seeds) {
    if (!g.has_node(s)) throw Error(Errc::UnknownSeed, s);
    if (dist.emplace(s, 0).second) frontier.push_back(s);
  }
  while (!frontier.empty()) {
    auto cur = std::move(frontier.front());
    frontier.pop_front();
    const auto d = dist.at(cur);
    if (d == hops) continue;
    auto visit = [&](const std::string& n) {
      if (dist.emplace(n, d + 1).second) frontier.push_back(n);
    };
    for (const auto& n : g.successors(cur)) visit(n);
    for (const auto& n : g.predecessors(cur)) visit(n);
  }
  return dist;
}

// All nodes within `hops` undirected steps of any seed, seeds included.
inline std::set<std::string> k_hop_neighbors(const ToolGraph& g, const std::set<std::string>& seeds, std::size_t hops) {
  std::set<std::string> out;
  for (const auto& [n, d] : k_hop_distances(g, seeds, hops)) out.insert(n);
  return out;
}

// Graph file: node manifest line, then one Edge per line.
inline std::vector<json> graph_to_jsonl(const ToolGraph& g) {
  std::vector<json> rows;
  json manifest = json::object();
  manifest["kind"] = "nodes";
  manifest["nodes"] = g.nodes();
  rows.push_back(std::move(manifest));
  for (const auto& e : g.edges()) rows.push_back(to_json(e));
  return rows;
}

inline ToolGraph graph_from_jsonl(const std::vector<json>& rows) {
  if (rows.empty() || rows.front().value("kind", "") != "nodes")
    throw Error(Errc::MissingField, "nodes", "graph file must start with a node manifest");
  auto nodes = rows.front().at("nodes").get<std::vector<std::string>>();
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < rows.size(); ++i) edges.push_back(edge_from_json(rows[i]));
  return ToolGraph(std::move(nodes), edges);
}

}  // namespace fintool::graph
