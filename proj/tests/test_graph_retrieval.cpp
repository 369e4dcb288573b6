#include <gtest/gtest.h>

#include "support.hpp"

using namespace fintool;
using fintool::json;

namespace {

// Labels tool-level pairs from the worked relation example; everything else is unrelated.
struct RelationsJudge : graph::EdgeJudge {
  std::map<std::pair<std::string, std::string>, graph::Relation> table;
  int calls = 0;
  RelationsJudge() {
    for (const auto& row : fixtures::read_jsonl("relation_labels.jsonl")) {
      auto rel = *graph::relation_from_string(row["relation"].get<std::string>());
      if (rel == graph::Relation::DirectTool || rel == graph::Relation::IndirectTool) table[{row["head"], row["tail"]}] = rel;
    }
  }
  std::optional<graph::Relation> classify(const registry::ToolSpec& h, const registry::ToolSpec& t) override {
    ++calls;
    auto it = table.find({h.name, t.name});
    if (it == table.end()) return std::nullopt;
    return it->second;
  }
};

std::optional<graph::Relation> relation_of(const graph::ToolGraph& g, const std::string& h, const std::string& t) {
  for (const auto& e : g.edges())
    if (e.head == h && e.tail == t) return e.relation;
  return std::nullopt;
}

}  // namespace

TEST(Graph, WorkedExampleRelations) {
  auto lib = fixtures::load_library("relation_tools.jsonl");
  RelationsJudge judge;
  auto g = graph::build_graph(lib, &judge);
  using R = graph::Relation;
  EXPECT_EQ(relation_of(g, "search_company_by_name", "get_company_registration_info"), R::DirectParameter);
  EXPECT_EQ(relation_of(g, "search_stock_code", "get_stock_financial_metrics"), R::IndirectParameter);
  EXPECT_EQ(relation_of(g, "get_industry_money_flow", "get_industry_constituents"), R::IndirectTool);
  // kline_data flows straight into the indicator tool, so the parameter edge is found and outranks the tool edge.
  EXPECT_EQ(relation_of(g, "get_stock_kline_history", "calculate_technical_indicators"), R::DirectParameter);
  for (const auto& e : g.edges()) {
    if (e.head != "get_stock_kline_history" || e.tail != "calculate_technical_indicators") continue;
    EXPECT_NE(e.relation, R::DirectTool);
  }
}

TEST(Graph, PriorityRulesKeepNonConflictingRelations) {
  using R = graph::Relation;
  std::vector<graph::Edge> edges = {{"a", R::DirectTool, "b", {}}, {"a", R::DirectParameter, "b", {}},
                                    {"a", R::IndirectTool, "b", {}}, {"b", R::DirectTool, "a", {}},
                                    {"a", R::DirectParameter, "b", {}}};
  auto kept = graph::apply_priority_rules(edges);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].relation, R::DirectParameter);
  EXPECT_EQ(kept[1].relation, R::DirectTool);
  EXPECT_EQ(kept[1].head, "b");
  EXPECT_EQ(kept[2].relation, R::IndirectTool);
}

TEST(Graph, RejectsBadEdges) {
  using R = graph::Relation;
  EXPECT_THROW(graph::ToolGraph({"a"}, {{"a", R::DirectTool, "a", {}}}), Error);
  EXPECT_THROW(graph::ToolGraph({"a"}, {{"a", R::DirectTool, "zz", {}}}), Error);
}

TEST(Graph, KHopIsUndirectedAndChecksSeeds) {
  using R = graph::Relation;
  graph::ToolGraph g({"a", "b", "c", "d", "e"}, {{"a", R::DirectTool, "b", {}}, {"c", R::IndirectTool, "b", {}},
                                                 {"c", R::DirectParameter, "d", {}}});
  EXPECT_EQ(graph::k_hop_neighbors(g, {"a"}, 0), (std::set<std::string>{"a"}));
  EXPECT_EQ(graph::k_hop_neighbors(g, {"a"}, 1), (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(graph::k_hop_neighbors(g, {"a"}, 2), (std::set<std::string>{"a", "b", "c"}));
  EXPECT_EQ(graph::k_hop_neighbors(g, {"d"}, 9), (std::set<std::string>{"a", "b", "c", "d"}));
  auto dist = graph::k_hop_distances(g, {"a", "d"}, 3);
  EXPECT_EQ(dist.at("b"), 1u);
  EXPECT_EQ(dist.at("c"), 1u);
  try {
    graph::k_hop_neighbors(g, {"nope"}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownSeed);
  }
}

TEST(Graph, JsonlRoundTrip) {
  auto lib = fixtures::load_library("relation_tools.jsonl");
  RelationsJudge judge;
  auto g = graph::build_graph(lib, &judge);
  auto back = graph::graph_from_jsonl(graph::graph_to_jsonl(g));
  EXPECT_EQ(back.nodes(), g.nodes());
  ASSERT_EQ(back.edges().size(), g.edges().size());
  for (std::size_t i = 0; i < g.edges().size(); ++i) EXPECT_EQ(graph::to_json(back.edges()[i]), graph::to_json(g.edges()[i]));
}

TEST(Graph, EdgeJudgeMayNotEmitParameterRelations) {
  struct Bad : graph::EdgeJudge {
    std::optional<graph::Relation> classify(const registry::ToolSpec&, const registry::ToolSpec&) override {
      return graph::Relation::DirectParameter;
    }
  } bad;
  auto lib = fixtures::load_library("relation_tools.jsonl");
  EXPECT_THROW(graph::build_graph(lib, &bad), Error);
}

// ---- index ----------------------------------------------------------------

TEST(Index, HashedEncoderIsDeterministic) {
  index::HashedBowEncoder enc(64);
  EXPECT_EQ(enc.id(), "hashed-bow-fnv1a-64");
  auto a = enc.encode("stock price of Moutai"), b = enc.encode("stock price of Moutai");
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.dim(), 64u);
}

TEST(Index, RejectsZeroAndMismatchedVectors) {
  index::VectorIndex idx("x", 3);
  EXPECT_THROW(idx.add("z", index::EmbeddingVector(std::vector<double>{0, 0, 0})), Error);
  EXPECT_THROW(idx.add("short", index::EmbeddingVector(std::vector<double>{1, 0})), Error);
  idx.add("ok", index::EmbeddingVector(std::vector<double>{1, 0, 0}));
  EXPECT_THROW(index::top_k(idx, index::EmbeddingVector(std::vector<double>{1, 0}), 1), Error);
}

TEST(Index, TopKClampsAndBreaksTiesByName) {
  index::VectorIndex idx("x", 2);
  idx.add("b", index::EmbeddingVector(std::vector<double>{1, 0}));
  idx.add("a", index::EmbeddingVector(std::vector<double>{2, 0}));
  idx.add("c", index::EmbeddingVector(std::vector<double>{0, 1}));
  auto hits = index::top_k(idx, index::EmbeddingVector(std::vector<double>{1, 0}), 10);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].name, "a");
  EXPECT_EQ(hits[1].name, "b");
  EXPECT_EQ(hits[2].name, "c");
}

TEST(Index, JsonlRoundTripChecksEncoder) {
  auto lib = fixtures::load_library("pipeline/tools.jsonl");
  index::HashedBowEncoder enc(128);
  auto idx = index::build_index(lib, enc);
  auto rows = index::index_to_jsonl(idx);
  auto back = index::index_from_jsonl(rows, enc.id());
  auto q = enc.encode("stock kline history");
  auto h1 = index::top_k(idx, q, 5), h2 = index::top_k(back, q, 5);
  ASSERT_EQ(h1.size(), h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    EXPECT_EQ(h1[i].name, h2[i].name);
    EXPECT_EQ(h1[i].score, h2[i].score);
  }
  try {
    index::index_from_jsonl(rows, "hashed-bow-fnv1a-64");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EncoderMismatch);
  }
}

// ---- retrieval -------------------------------------------------------------

namespace {
struct Stack {
  registry::Library lib = fixtures::load_library("pipeline/tools.jsonl");
  index::HashedBowEncoder enc{256};
  index::VectorIndex idx = index::build_index(lib, enc);
  graph::ToolGraph g = graph::build_graph(lib);
  retrieval::Engines eng() const { return {&lib, &idx, &g, &enc}; }
};
}  // namespace

TEST(Retrieval, StaticUsesPlanToolsVerbatim) {
  Stack s;
  retrieval::RetrievalConfig cfg;
  std::vector<Message> h{{"user", "anything"}};
  auto cs = retrieval::assemble_candidates(cfg, h, {"get_stock_price", "search_stock_by_name"}, s.eng());
  EXPECT_EQ(cs.names(), (std::vector<std::string>{"get_stock_price", "search_stock_by_name"}));
  EXPECT_THROW(retrieval::assemble_candidates(cfg, h, {"ghost"}, s.eng()), Error);
}

TEST(Retrieval, VectorModeReturnsTopK) {
  Stack s;
  retrieval::RetrievalConfig cfg;
  cfg.mode = retrieval::Mode::Vector;
  cfg.top_k = 3;
  std::vector<Message> h{{"user", "show me the kline history of this stock"}};
  auto cs = retrieval::assemble_candidates(cfg, h, {}, s.eng());
  EXPECT_EQ(cs.tools.size(), 3u);
  EXPECT_TRUE(cs.contains("get_stock_kline_history"));
}

TEST(Retrieval, GraphEnhancedAppendsHopsAfterHits) {
  Stack s;
  retrieval::RetrievalConfig cfg;
  cfg.mode = retrieval::Mode::GraphEnhanced;
  cfg.top_k = 1;
  cfg.hops = 1;
  std::vector<Message> h{{"user", "kline history"}};
  auto cs = retrieval::assemble_candidates(cfg, h, {}, s.eng());
  ASSERT_GE(cs.tools.size(), 1u);
  EXPECT_EQ(cs.provenance[0], retrieval::Provenance::VectorHit);
  for (std::size_t i = 1; i < cs.tools.size(); ++i) EXPECT_EQ(cs.provenance[i], retrieval::Provenance::GraphHop);
  if (cs.names()[0] == "get_stock_kline_history") {
    EXPECT_TRUE(cs.contains("calculate_technical_indicators"));
  }
}

TEST(Retrieval, EmptyQueryStrictAndLenient) {
  Stack s;
  retrieval::RetrievalConfig cfg;
  cfg.mode = retrieval::Mode::Vector;
  std::vector<Message> h{{"user", "   "}};
  try {
    retrieval::assemble_candidates(cfg, h, {}, s.eng());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyQuery);
  }
  cfg.strict_empty_query = false;
  cfg.top_k = 2;
  auto cs = retrieval::assemble_candidates(cfg, h, {}, s.eng());
  EXPECT_EQ(cs.tools.size(), 2u);
  EXPECT_FALSE(cs.warnings.empty());
}

TEST(Retrieval, RewriterFailureFallsBackToIdentity) {
  struct Down : retrieval::QueryRewriter {
    std::string rewrite(std::span<const Message>) override { throw Error(Errc::RewriterUnavailable, "rw"); }
  } down;
  Stack s;
  retrieval::RetrievalConfig cfg;
  cfg.mode = retrieval::Mode::Vector;
  cfg.rewriter = &down;
  std::vector<Message> h{{"user", "stock price"}};
  auto cs = retrieval::assemble_candidates(cfg, h, {}, s.eng());
  EXPECT_FALSE(cs.tools.empty());
  EXPECT_FALSE(cs.warnings.empty());
}

TEST(Retrieval, EncoderMismatchIsRejected) {
  Stack s;
  index::HashedBowEncoder other(64);
  retrieval::Engines eng{&s.lib, &s.idx, &s.g, &other};
  retrieval::RetrievalConfig cfg;
  cfg.mode = retrieval::Mode::Vector;
  std::vector<Message> h{{"user", "stock price"}};
  EXPECT_THROW(retrieval::assemble_candidates(cfg, h, {}, eng), Error);
}
