#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "fintool/fintool.hpp"
#include "fintool/convert.hpp"
#include "fintool/http_backend.hpp"

namespace fintool::cli {

inline constexpr const char* kToolVersion = "fintool 0.1.0";

namespace fs = std::filesystem;

// Thrown for flag combinations CLI11 cannot express; maps to exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Artifact plumbing

// Everything that determines a run's output, minus output paths: option values and input digests.
class RunRecord {
 public:
  RunRecord(std::string subcommand, std::uint64_t seed) : subcommand_(std::move(subcommand)), seed_(seed) {
    config_["subcommand"] = subcommand_;
    config_["seed"] = seed_;
  }

  template <typename T>
  void option(const std::string& key, const T& value) {
    config_["options"][key] = value;
  }

  void input(const std::string& key, const fs::path& path) { config_["inputs"][key] = hex64(fnv1a64(io::read_file(path))); }

  std::string digest() const { return hex64(fnv1a64(config_.dump())); }
  std::uint64_t seed() const { return seed_; }

  json metadata() const {
    json m = json::object();
    m["kind"] = "artifact_metadata";
    m["tool_version"] = kToolVersion;
    m["subcommand"] = subcommand_;
    m["seed"] = seed_;
    m["config_digest"] = digest();
    return m;
  }

 private:
  std::string subcommand_;
  std::uint64_t seed_;
  json config_ = json::object();
};

inline bool is_metadata_row(const json& r) { return r.is_object() && r.value("kind", "") == "artifact_metadata"; }

// JSONL rows with any artifact metadata line removed.
inline std::vector<json> read_rows(const fs::path& path) {
  auto rows = io::read_jsonl(path);
  std::vector<json> out;
  out.reserve(rows.size());
  for (auto& r : rows)
    if (!is_metadata_row(r)) out.push_back(std::move(r));
  return out;
}

inline void write_rows(const fs::path& path, const RunRecord& rec, const std::vector<json>& rows) {
  std::vector<json> all;
  all.reserve(rows.size() + 1);
  all.push_back(rec.metadata());
  all.insert(all.end(), rows.begin(), rows.end());
  io::write_jsonl_atomic(path, all);
}

inline void write_document(const fs::path& path, const RunRecord& rec, const json& body) {
  json doc = json::object();
  doc["metadata"] = rec.metadata();
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
  io::write_file_atomic(path, doc.dump(2) + "\n");
}

// SOURCE_DATE_EPOCH when set, else the epoch itself, so repeated runs stay byte-identical.
inline std::string build_timestamp() {
  std::time_t t = 0;
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// A JSON array file or JSONL.
inline std::vector<json> read_json_or_jsonl(const fs::path& path) {
  auto text = io::read_file(path);
  auto t = trim(text);
  if (!t.empty() && t.front() == '[') {
    try {
      auto arr = json::parse(t);
      return std::vector<json>(arr.begin(), arr.end());
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedJson, path.string(), e.what());
    }
  }
  std::vector<json> out;
  for (auto& r : io::parse_jsonl(text, path.string()))
    if (!is_metadata_row(r)) out.push_back(std::move(r));
  return out;
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedJson, path.string(), e.what());
  }
}

// ---------------------------------------------------------------------------
// Gateway wiring

struct Runtime {
  gateway::Gateway gateway;
  agents::GatewayConfig config;
};

// A profile config (.json) or, for convenience, a bare mock transcript (.jsonl) serving every role.
inline std::unique_ptr<Runtime> load_runtime(const fs::path& path, RunRecord* rec = nullptr) {
  auto rt = std::make_unique<Runtime>();
  if (path.extension() == ".jsonl") {
    gateway::EndpointProfile p;
    p.id = "mock";
    p.mock_file = path.string();
    rt->config.profiles.push_back(p);
  } else {
    rt->config = agents::gateway_config_from_json(read_json(path), path.parent_path());
  }
  if (rec) rec->input("profiles", path);
  std::map<std::string, std::shared_ptr<gateway::Backend>> mocks;
  for (const auto& p : rt->config.profiles) {
    std::shared_ptr<gateway::Backend> backend;
    if (p.backend == "http") {
      backend = std::make_shared<gateway::HttpBackend>();
    } else {
      if (p.mock_file.empty()) throw Error(Errc::InvalidConfig, p.id + ".mock_file", "mock profiles need a transcript");
      auto& shared = mocks[p.mock_file];
      if (!shared) shared = std::make_shared<gateway::MockBackend>(io::read_jsonl(p.mock_file));
      backend = shared;
      if (rec) rec->input("mock:" + p.id, p.mock_file);
    }
    rt->gateway.add_profile(p, backend);
  }
  return rt;
}

inline std::unique_ptr<index::Encoder> make_encoder(const std::string& id, Runtime* rt) {
  const std::string bow = "hashed-bow-fnv1a-";
  if (id == "hashed-bow") return std::make_unique<index::HashedBowEncoder>(256);
  if (id.rfind(bow, 0) == 0) return std::make_unique<index::HashedBowEncoder>(std::stoul(id.substr(bow.size())));
  if (id.rfind("gateway:", 0) == 0) {
    if (!rt) throw Error(Errc::InvalidConfig, id, "gateway encoders need --profiles");
    auto rest = id.substr(8);
    auto profile = rest.substr(0, rest.find(':'));
    return std::make_unique<gateway::GatewayEncoder>(rt->gateway, profile);
  }
  throw Error(Errc::InvalidConfig, id, "unknown encoder");
}

inline registry::Library load_library(const fs::path& path) { return registry::library_from_jsonl(read_rows(path)); }

// Tools in MCP shape, or FC function objects.
inline registry::ToolSpec tool_from_any(const json& j) {
  if (j.is_object() && (j.value("type", "") == "function" || j.contains("function"))) return codec::fc_to_mcp(codec::fc_from_json(j));
  return registry::tool_from_json(j);
}

// Corpus rows with labels, or trajectories (accepted ones are labeled on the fly).
inline std::vector<codec::LabeledItem> labeled_corpus(const std::vector<json>& rows, const registry::Library* lib,
                                                      std::vector<dialogue::DialogueTrajectory>* trajectories = nullptr) {
  std::vector<codec::LabeledItem> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.contains("labels")) {
      out.push_back(codec::labeled_item_from_json(r, i + 1));
      continue;
    }
    auto tr = dialogue::trajectory_from_json(r, lib);
    if (trajectories) trajectories->push_back(tr);
    if (!tr.accepted()) continue;
    json labeled = r;
    labeled["labels"] = dialogue::trajectory_labels(tr);
    out.push_back(codec::labeled_item_from_json(labeled, i + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct Options {
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::vector<std::string> inputs;
  std::string in, out, report, profiles, library, graph, index, personas, seeds, stats, bench, pred, judge, weights,
      quota, corpus, kind, pred_out, shortfall;
  bool no_judge = false;
  int budget = 3;
  std::size_t max_params = 8, max_depth = 2;
  double similarity = 0.9;
  std::string source = "";
  std::string encoder = "hashed-bow";
  std::string mode = "all";
  std::size_t top_k = 10, hops = 1, max_turns = 8, max_steps = 8, variants = 2, limit = 0, target = 0;
  int retries = 3;
  bool lenient_empty_query = false;
  std::string call_mode = "fc";
  std::string label = "model";
};

inline int cmd_build_lib(const Options& o, std::ostream& out) {
  RunRecord rec("build-lib", o.seed);
  for (std::size_t i = 0; i < o.inputs.size(); ++i) rec.input("input" + std::to_string(i), o.inputs[i]);
  rec.option("budget", o.budget);
  rec.option("max_params", o.max_params);
  rec.option("max_depth", o.max_depth);
  rec.option("similarity", o.similarity);
  rec.option("no_judge", o.no_judge);
  rec.option("source", o.source);

  std::vector<registry::ToolSpec> parsed;
  for (const auto& path : o.inputs) {
    auto rows = read_json_or_jsonl(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      try {
        parsed.push_back(tool_from_any(rows[i]));
      } catch (const Error& e) {
        throw Error(e.code(), path + ":" + std::to_string(i + 1) + ": " + e.detail(), e.what());
      }
    }
  }
  std::unique_ptr<Runtime> rt;
  std::unique_ptr<agents::LlmToolJudge> judge;
  if (!o.profiles.empty() && !o.no_judge) {
    rt = load_runtime(o.profiles, &rec);
    judge = std::make_unique<agents::LlmToolJudge>(rt->gateway, rt->config.role("tool_judge"));
  }
  const registry::StructuralLimits limits{o.max_params, o.max_depth};
  std::vector<registry::ToolSpec> kept;
  std::vector<json> reports;
  for (const auto& spec : parsed) {
    auto r = judge ? registry::verify_logical(spec, *judge, o.budget, limits) : registry::verify_structural(spec, limits);
    reports.push_back(registry::to_json(r));
    if (r.passed()) kept.push_back(r.final_spec ? *r.final_spec : spec);
  }
  registry::LibraryMetadata meta;
  meta.source = o.source.empty() ? fs::path(o.inputs.front()).filename().string() : o.source;
  meta.build_timestamp = build_timestamp();
  auto lib = registry::normalize_library(kept, registry::token_jaccard, o.similarity, meta);
  write_rows(o.out, rec, registry::library_to_jsonl(lib));
  if (!o.report.empty()) write_rows(o.report, rec, reports);
  out << "read " << parsed.size() << " tools, " << kept.size() << " passed verification, " << lib.size()
      << " in library (" << lib.metadata().merged_duplicates << " merged, " << lib.metadata().review_flags.size()
      << " flagged)\n";
  return 0;
}

inline int cmd_build_graph(const Options& o, std::ostream& out) {
  RunRecord rec("build-graph", o.seed);
  rec.input("library", o.library);
  rec.option("no_judge", o.no_judge);
  auto lib = load_library(o.library);
  std::unique_ptr<Runtime> rt;
  std::unique_ptr<agents::LlmEdgeJudge> judge;
  if (!o.profiles.empty() && !o.no_judge) {
    rt = load_runtime(o.profiles, &rec);
    judge = std::make_unique<agents::LlmEdgeJudge>(rt->gateway, rt->config.role("edge_judge"));
  }
  auto g = graph::build_graph(lib, judge.get());
  write_rows(o.out, rec, graph::graph_to_jsonl(g));
  out << g.nodes().size() << " nodes, " << g.edges().size() << " edges\n";
  return 0;
}

inline int cmd_index(const Options& o, std::ostream& out) {
  RunRecord rec("index", o.seed);
  rec.input("library", o.library);
  rec.option("encoder", o.encoder);
  auto lib = load_library(o.library);
  std::unique_ptr<Runtime> rt;
  if (!o.profiles.empty()) rt = load_runtime(o.profiles, &rec);
  std::string enc_id = o.encoder;
  if (enc_id == "gateway") {
    if (!rt) throw UsageError("--encoder gateway needs --profiles");
    enc_id = "gateway:" + rt->config.role("embed");
  }
  auto enc = make_encoder(enc_id, rt.get());
  auto idx = index::build_index(lib, *enc);
  write_rows(o.out, rec, index::index_to_jsonl(idx));
  out << idx.size() << " vectors, dim " << idx.dim() << ", encoder " << idx.encoder_id() << "\n";
  return 0;
}

inline int cmd_synth(const Options& o, std::ostream& out) {
  RunRecord rec("synth", o.seed);
  rec.input("library", o.library);
  rec.input("personas", o.personas);
  rec.input("seeds", o.seeds);
  if (!o.graph.empty()) rec.input("graph", o.graph);
  if (!o.index.empty()) rec.input("index", o.index);
  for (auto [k, v] : {std::pair{"top_k", o.top_k}, {"hops", o.hops}, {"max_turns", o.max_turns}, {"max_steps", o.max_steps},
                      {"variants", o.variants}, {"limit", o.limit}})
    rec.option(k, v);
  rec.option("mode", o.mode);
  rec.option("retries", o.retries);
  rec.option("lenient_empty_query", o.lenient_empty_query);

  std::vector<retrieval::Mode> modes;
  if (o.mode == "all") {
    modes = {retrieval::Mode::Static, retrieval::Mode::Vector, retrieval::Mode::GraphEnhanced};
  } else {
    auto m = retrieval::mode_from_string(o.mode);
    if (!m) throw UsageError("unknown retrieval mode '" + o.mode + "'");
    modes = {*m};
  }
  auto lib = load_library(o.library);
  auto rt = load_runtime(o.profiles, &rec);

  std::optional<graph::ToolGraph> g;
  if (!o.graph.empty()) g = graph::graph_from_jsonl(read_rows(o.graph));
  std::optional<index::VectorIndex> idx;
  std::unique_ptr<index::Encoder> enc;
  if (!o.index.empty()) {
    auto rows = read_rows(o.index);
    if (rows.empty()) throw Error(Errc::MissingField, o.index, "empty index file");
    enc = make_encoder(rows.front().value("encoder_id", ""), rt.get());
    idx = index::index_from_jsonl(rows, enc->id());
  }
  for (auto m : modes) {
    if (m != retrieval::Mode::Static && !idx) throw UsageError("retrieval mode '" + std::string(retrieval::to_string(m)) + "' needs --index");
    if (m == retrieval::Mode::GraphEnhanced && !g) throw UsageError("graph_enhanced retrieval needs --graph");
  }

  std::map<std::string, dialogue::Persona> personas;
  for (const auto& r : read_rows(o.personas)) {
    auto p = dialogue::persona_from_json(r);
    personas[p.id] = p;
  }
  std::vector<dialogue::DialogueJob> jobs;
  auto seed_rows = read_rows(o.seeds);
  for (std::size_t i = 0; i < seed_rows.size(); ++i) {
    if (o.limit && jobs.size() >= o.limit) break;
    auto s = dialogue::seed_from_json(seed_rows[i], i + 1);
    auto p = personas.find(s.persona_id);
    if (p == personas.end()) throw Error(Errc::UnknownSeed, s.id, "persona '" + s.persona_id + "' not found");
    jobs.push_back({s.id, s, p->second, s.context});
  }

  std::unique_ptr<agents::LlmRewriter> rewriter;
  if (rt->config.roles.count("rewriter")) rewriter = std::make_unique<agents::LlmRewriter>(rt->gateway, rt->config.role("rewriter"));

  struct WorkerAgents {
    std::unique_ptr<agents::LlmGlobalAgent> global;
    std::unique_ptr<agents::LlmUserAgent> user;
    std::unique_ptr<agents::LlmAssistantAgent> assistant;
    std::unique_ptr<agents::LlmToolAgent> tool;
  };
  const std::size_t workers = std::max<std::size_t>(1, o.workers);
  std::vector<WorkerAgents> pool(workers);
  for (auto& w : pool) {
    w.global = std::make_unique<agents::LlmGlobalAgent>(rt->gateway, rt->config.role("global"), &lib);
    w.user = std::make_unique<agents::LlmUserAgent>(rt->gateway, rt->config.role("user"));
    w.assistant = std::make_unique<agents::LlmAssistantAgent>(rt->gateway, rt->config.role("assistant"));
    w.tool = std::make_unique<agents::LlmToolAgent>(rt->gateway, rt->config.role("tool"));
  }
  auto agents_for = [&](std::size_t w) {
    return dialogue::Agents{pool[w].global.get(), pool[w].user.get(), pool[w].assistant.get(), pool[w].tool.get()};
  };

  // Jobs rotate through the requested retrieval modes.
  std::vector<dialogue::DialogueTrajectory> trajectories(jobs.size());
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    std::vector<dialogue::DialogueJob> subset;
    std::vector<std::size_t> where;
    for (std::size_t i = mi; i < jobs.size(); i += modes.size()) {
      subset.push_back(jobs[i]);
      where.push_back(i);
    }
    if (subset.empty()) continue;
    dialogue::SynthesisConfig cfg;
    cfg.budgets = {o.retries, o.max_turns, o.max_steps};
    cfg.retrieval.mode = modes[mi];
    cfg.retrieval.top_k = o.top_k;
    cfg.retrieval.hops = o.hops;
    cfg.retrieval.rewriter = rewriter.get();
    cfg.retrieval.strict_empty_query = !o.lenient_empty_query;
    cfg.engines = {&lib, idx ? &*idx : nullptr, g ? &*g : nullptr, enc.get()};
    cfg.query_variants = o.variants;
    cfg.seed = o.seed;
    auto res = dialogue::run_dialogues(subset, agents_for, cfg, workers);
    for (std::size_t k = 0; k < res.size(); ++k) trajectories[where[k]] = std::move(res[k]);
  }

  std::vector<json> rows;
  for (const auto& t : trajectories) rows.push_back(dialogue::to_json(t));
  write_rows(o.out, rec, rows);
  auto st = dialogue::synthesis_stats(trajectories);
  if (!o.stats.empty()) write_document(o.stats, rec, dialogue::to_json(st));
  out << st.total << " dialogues, " << st.accepted << " accepted, " << st.discarded << " discarded";
  if (st.rate_defined) out << " (discard rate " << std::fixed << std::setprecision(4) << st.discard_rate << ")";
  out << "\n";
  for (const auto& [reason, n] : st.by_reason)
    if (n) out << "  " << reason << ": " << n << "\n";
  return 0;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  RunRecord rec("eval", o.seed);
  rec.input("bench", o.bench);
  rec.input("pred", o.pred);
  eval::Weights w;
  if (!o.weights.empty()) {
    rec.input("weights", o.weights);
    w = eval::weights_from_json(read_json(o.weights));
  }
  eval::validate_weights(w);
  rec.option("label", o.label);

  std::vector<eval::EvalInstance> instances;
  auto bench_rows = read_rows(o.bench);
  for (std::size_t i = 0; i < bench_rows.size(); ++i) {
    try {
      instances.push_back(eval::instance_from_json(bench_rows[i]));
    } catch (const Error& e) {
      throw Error(e.code(), o.bench + ":" + std::to_string(i + 1) + ": " + e.detail(), e.what());
    }
  }
  std::vector<eval::Prediction> preds;
  for (const auto& r : read_rows(o.pred)) preds.push_back(eval::prediction_from_json(r));
  auto rt = load_runtime(o.judge, &rec);
  const auto profile = rt->config.role("judge");
  auto results = eval::evaluate_all(
      instances, preds, [&] { return std::make_unique<agents::LlmScoringJudge>(rt->gateway, profile); }, w, o.workers);
  auto report = eval::aggregate_report(std::move(results));
  json body = eval::to_json(report);
  body["weights"] = eval::to_json(w);
  write_document(o.out, rec, body);
  out << eval::render_report_table(report, o.label);
  return 0;
}

inline int cmd_convert(const Options& o, std::ostream& out) {
  RunRecord rec("convert", o.seed);
  rec.input("in", o.in);
  rec.option("kind", o.kind);
  rec.option("call_mode", o.call_mode);
  if (o.kind == "mcp-to-fc" || o.kind == "fc-to-mcp") {
    std::vector<json> rows;
    for (const auto& r : read_json_or_jsonl(o.in)) {
      auto spec = tool_from_any(r);
      rows.push_back(o.kind == "mcp-to-fc" ? codec::to_json(codec::mcp_to_fc(spec)) : registry::to_json(spec));
    }
    write_rows(o.out, rec, rows);
    out << rows.size() << " tools converted\n";
    return 0;
  }
  if (o.kind == "trajectories-to-bench") {
    if (o.library.empty()) throw UsageError("trajectories-to-bench needs --library");
    rec.input("library", o.library);
    auto mode = codec::call_mode_from_string(o.call_mode);
    if (!mode) throw UsageError("--call-mode must be prompt or fc");
    auto lib = load_library(o.library);
    std::vector<json> bench, preds;
    for (const auto& r : read_rows(o.in)) {
      for (auto& item : convert::bench_from_trajectory(dialogue::trajectory_from_json(r, &lib), *mode)) {
        bench.push_back(eval::to_json(item.instance));
        preds.push_back(eval::to_json(item.reference));
      }
    }
    write_rows(o.out, rec, bench);
    if (!o.pred_out.empty()) write_rows(o.pred_out, rec, preds);
    out << bench.size() << " instances\n";
    return 0;
  }
  throw UsageError("unknown --kind '" + o.kind + "' (mcp-to-fc, fc-to-mcp, trajectories-to-bench)");
}

inline int cmd_sample(const Options& o, std::ostream& out, std::ostream& err) {
  RunRecord rec("sample", o.seed);
  rec.input("quota", o.quota);
  rec.input("corpus", o.corpus);
  rec.option("target", o.target);
  std::optional<registry::Library> lib;
  if (!o.library.empty()) {
    rec.input("library", o.library);
    lib = load_library(o.library);
  }
  auto quota = codec::quota_from_json(read_json(o.quota));
  if (!quota.absolute() && o.target == 0) throw UsageError("--target is required unless the quota gives absolute counts");
  auto corpus = labeled_corpus(read_rows(o.corpus), lib ? &*lib : nullptr);
  auto res = codec::stratified_sample(corpus, quota, o.target, o.seed);
  std::vector<json> rows;
  for (auto i : res.indices) rows.push_back(corpus[i].payload);
  auto shortfall = codec::shortfall_report(res);
  if (o.out.empty()) {
    out << rec.metadata().dump() << "\n" << io::to_jsonl(rows);
  } else {
    write_rows(o.out, rec, rows);
    out << rows.size() << " sampled\n";
  }
  if (!o.shortfall.empty()) write_document(o.shortfall, rec, json{{"shortfalls", shortfall}});
  else if (!shortfall.empty()) err << "shortfall: " << shortfall.dump() << "\n";
  return 0;
}

inline int cmd_stats(const Options& o, std::ostream& out) {
  RunRecord rec("stats", o.seed);
  rec.input("corpus", o.corpus);
  std::optional<registry::Library> lib;
  if (!o.library.empty()) {
    rec.input("library", o.library);
    lib = load_library(o.library);
  }
  std::vector<dialogue::DialogueTrajectory> trs;
  auto corpus = labeled_corpus(read_rows(o.corpus), lib ? &*lib : nullptr, &trs);
  auto st = codec::dataset_stats(corpus);
  json body = json::object();
  body["dataset"] = codec::to_json(st);
  if (!trs.empty()) body["synthesis"] = dialogue::to_json(dialogue::synthesis_stats(trs));
  if (!o.out.empty()) write_document(o.out, rec, body);
  out << codec::render_stats_table(st);
  if (!trs.empty()) out << "synthesis: " << body["synthesis"].dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::Io:
    case Errc::EncoderFailure:
    case Errc::JudgeUnavailable:
    case Errc::JudgeMalformedOutput:
    case Errc::AgentFailure:
    case Errc::RewriterUnavailable:
      return 2;
    default:
      return 1;
  }
}

inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Financial tool-use data synthesis and evaluation"};
  app.name(argv.empty() ? "fintool" : fs::path(argv.front()).filename().string());
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  auto common = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
  };
  auto existing = [](CLI::Option* opt) { return opt->check(CLI::ExistingFile); };

  auto* lib_cmd = app.add_subcommand("build-lib", "Parse, verify and normalize tool definitions into a library");
  common(lib_cmd);
  existing(lib_cmd->add_option("--input", o.inputs, "Tool files (JSONL or JSON array; MCP or FC shape)")->required());
  lib_cmd->add_option("--out", o.out, "Library JSONL")->required();
  lib_cmd->add_option("--report", o.report, "Verification report JSONL");
  existing(lib_cmd->add_option("--profiles", o.profiles, "Endpoint profiles for the logical review"));
  lib_cmd->add_flag("--no-judge", o.no_judge, "Structural checks only");
  lib_cmd->add_option("--budget", o.budget, "Review rounds per tool")->capture_default_str()->check(CLI::PositiveNumber);
  lib_cmd->add_option("--max-params", o.max_params)->capture_default_str();
  lib_cmd->add_option("--max-depth", o.max_depth)->capture_default_str();
  lib_cmd->add_option("--similarity", o.similarity, "Near-duplicate flag threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  lib_cmd->add_option("--source", o.source, "Source label recorded in the library");

  auto* graph_cmd = app.add_subcommand("build-graph", "Build the tool dependency graph");
  common(graph_cmd);
  existing(graph_cmd->add_option("--library", o.library)->required());
  graph_cmd->add_option("--out", o.out)->required();
  existing(graph_cmd->add_option("--profiles", o.profiles, "Endpoint profiles for edge labeling"));
  graph_cmd->add_flag("--no-judge", o.no_judge, "Parameter edges only");

  auto* index_cmd = app.add_subcommand("index", "Embed the library into a vector index");
  common(index_cmd);
  existing(index_cmd->add_option("--library", o.library)->required());
  index_cmd->add_option("--out", o.out)->required();
  index_cmd->add_option("--encoder", o.encoder, "hashed-bow, hashed-bow-fnv1a-<dim> or gateway")->capture_default_str();
  existing(index_cmd->add_option("--profiles", o.profiles));

  auto* synth_cmd = app.add_subcommand("synth", "Run the multi-agent dialogue synthesis");
  common(synth_cmd);
  existing(synth_cmd->add_option("--library", o.library)->required());
  existing(synth_cmd->add_option("--graph", o.graph));
  existing(synth_cmd->add_option("--index", o.index));
  existing(synth_cmd->add_option("--personas", o.personas)->required());
  existing(synth_cmd->add_option("--seeds", o.seeds)->required());
  existing(synth_cmd->add_option("--profiles", o.profiles, "Endpoint profiles and role assignments")->required());
  synth_cmd->add_option("--out", o.out, "Trajectory JSONL")->required();
  synth_cmd->add_option("--stats", o.stats, "Synthesis statistics JSON");
  synth_cmd->add_option("--mode", o.mode, "static, vector, graph_enhanced or all")->capture_default_str();
  synth_cmd->add_option("--top-k", o.top_k)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--hops", o.hops)->capture_default_str();
  synth_cmd->add_option("--retries", o.retries, "Per-turn retry budget")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-turns", o.max_turns)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-steps", o.max_steps, "Assistant steps per user turn")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--variants", o.variants, "Query variants per user turn")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--limit", o.limit, "Use at most this many seeds (0 = all)")->capture_default_str();
  synth_cmd->add_flag("--lenient-empty-query", o.lenient_empty_query);
  synth_cmd->add_option("--workers", o.workers)->capture_default_str()->check(CLI::PositiveNumber);

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a benchmark");
  common(eval_cmd);
  existing(eval_cmd->add_option("--bench", o.bench)->required());
  existing(eval_cmd->add_option("--pred", o.pred)->required());
  existing(eval_cmd->add_option("--judge", o.judge, "Profile config (.json) or mock transcript (.jsonl)")->required());
  eval_cmd->add_option("--out", o.out, "Report JSON")->required();
  existing(eval_cmd->add_option("--weights", o.weights));
  eval_cmd->add_option("--label", o.label, "Row label in the table")->capture_default_str();
  eval_cmd->add_option("--workers", o.workers)->capture_default_str()->check(CLI::PositiveNumber);

  auto* conv_cmd = app.add_subcommand("convert", "Convert tool schemas or trajectories");
  common(conv_cmd);
  conv_cmd->add_option("--kind", o.kind, "mcp-to-fc, fc-to-mcp or trajectories-to-bench")->required();
  existing(conv_cmd->add_option("--in", o.in)->required());
  conv_cmd->add_option("--out", o.out)->required();
  existing(conv_cmd->add_option("--library", o.library));
  conv_cmd->add_option("--pred-out", o.pred_out, "Reference predictions (trajectories-to-bench)");
  conv_cmd->add_option("--call-mode", o.call_mode, "prompt or fc")->capture_default_str();

  auto* sample_cmd = app.add_subcommand("sample", "Two-stage stratified sampling");
  common(sample_cmd);
  existing(sample_cmd->add_option("--quota", o.quota)->required());
  existing(sample_cmd->add_option("--corpus", o.corpus)->required());
  existing(sample_cmd->add_option("--library", o.library, "Needed when the corpus holds trajectories"));
  sample_cmd->add_option("--target", o.target, "Sample size for fractional quotas")->capture_default_str();
  sample_cmd->add_option("--out", o.out, "Sample JSONL (standard output when omitted)");
  sample_cmd->add_option("--shortfall", o.shortfall, "Shortfall report JSON");

  auto* stats_cmd = app.add_subcommand("stats", "Category distribution of a labeled corpus or trajectory file");
  common(stats_cmd);
  existing(stats_cmd->add_option("--corpus", o.corpus)->required());
  existing(stats_cmd->add_option("--library", o.library));
  stats_cmd->add_option("--out", o.out);

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (lib_cmd->parsed()) return cmd_build_lib(o, out);
    if (graph_cmd->parsed()) return cmd_build_graph(o, out);
    if (index_cmd->parsed()) return cmd_index(o, out);
    if (synth_cmd->parsed()) return cmd_synth(o, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (conv_cmd->parsed()) return cmd_convert(o, out);
    if (sample_cmd->parsed()) return cmd_sample(o, out, err);
    if (stats_cmd->parsed()) return cmd_stats(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace fintool::cli
