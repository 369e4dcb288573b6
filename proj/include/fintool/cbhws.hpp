#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/format_codec.hpp"
#include "fintool/tool_registry.hpp"

namespace fintool::eval {

using codec::CallMode;
using codec::ParseResult;
using codec::ToolCall;
using registry::ToolSpec;

// ---------------------------------------------------------------------------
// Taxonomy

enum class Category { StSc, StMc, MtSc, MtMc, UD, CI, DR };
inline constexpr Category kAllCategories[] = {Category::StSc, Category::StMc, Category::MtSc, Category::MtMc,
                                              Category::UD,   Category::CI,   Category::DR};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::StSc: return "ST-SC";
    case Category::StMc: return "ST-MC";
    case Category::MtSc: return "MT-SC";
    case Category::MtMc: return "MT-MC";
    case Category::UD: return "UD";
    case Category::CI: return "CI";
    case Category::DR: return "DR";
  }
  return "ST-SC";
}

inline std::optional<Category> category_from_string(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline bool is_tool_call(Category c) { return c == Category::StSc || c == Category::StMc || c == Category::MtSc || c == Category::MtMc; }

enum class Pattern { Single, Parallel, Serial };

inline std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::Single: return "single";
    case Pattern::Parallel: return "parallel";
    case Pattern::Serial: return "serial";
  }
  return "single";
}

inline std::optional<Pattern> pattern_from_string(std::string_view s) {
  if (s == "single") return Pattern::Single;
  if (s == "parallel") return Pattern::Parallel;
  if (s == "serial") return Pattern::Serial;
  return std::nullopt;
}

struct KdaField {
  std::size_t turn = 0;
  std::string tool;
  std::string param;           // dotted path into the arguments; numeric segments index arrays
  std::size_t occurrence = 0;  // which call of `tool` within the turn
};

struct ItaConstraint {
  std::string prerequisite;
  std::string dependent;
};

struct EvalInstance {
  std::string id;
  std::vector<Message> history;
  std::vector<ToolSpec> candidates;
  std::vector<std::vector<ToolCall>> gold;  // tool-call instances only
  Category category = Category::StSc;
  Pattern pattern = Pattern::Single;  // tool-call instances only
  CallMode mode = CallMode::Fc;
  std::vector<KdaField> kda_fields;
  std::vector<ItaConstraint> ita_constraints;

  std::size_t gold_turns() const { return gold.size(); }
  const ToolSpec* candidate(std::string_view name) const {
    for (const auto& t : candidates)
      if (t.name == name) return &t;
    return nullptr;
  }
};

struct Weights {
  double w_val = 0.7;
  double w_struct = 0.3;
  double w_exec = 0.6;
  double w_select = 0.4;
};

inline void validate_weights(const Weights& w) {
  for (double v : {w.w_val, w.w_struct, w.w_exec, w.w_select})
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::InvalidConfig, "weights", "weights must lie in [0, 1]");
  if (exact_decimal(w.w_val) + exact_decimal(w.w_struct) != 1)
    throw Error(Errc::InvalidConfig, "weights", "w_val + w_struct must equal 1");
  if (exact_decimal(w.w_exec) + exact_decimal(w.w_select) != 1)
    throw Error(Errc::InvalidConfig, "weights", "w_exec + w_select must equal 1");
}

inline json to_json(const Weights& w) {
  json j = json::object();
  j["w_val"] = w.w_val;
  j["w_struct"] = w.w_struct;
  j["w_exec"] = w.w_exec;
  j["w_select"] = w.w_select;
  return j;
}

inline Weights weights_from_json(const json& j) {
  Weights w;
  w.w_val = j.value("w_val", w.w_val);
  w.w_struct = j.value("w_struct", w.w_struct);
  w.w_exec = j.value("w_exec", w.w_exec);
  w.w_select = j.value("w_select", w.w_select);
  validate_weights(w);
  return w;
}

// ---------------------------------------------------------------------------
// Instance (de)serialization

namespace detail {

inline const ToolCall* nth_call(std::span<const ToolCall> calls, std::string_view tool, std::size_t occurrence) {
  std::size_t seen = 0;
  for (const auto& c : calls) {
    if (c.name != tool) continue;
    if (seen++ == occurrence) return &c;
  }
  return nullptr;
}

inline const json* lookup_path(const json& args, std::string_view path) {
  const json* cur = &args;
  while (!path.empty()) {
    auto dot = path.find('.');
    auto seg = path.substr(0, dot);
    path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
    if (cur->is_object()) {
      auto it = cur->find(std::string(seg));
      if (it == cur->end()) return nullptr;
      cur = &*it;
    } else if (cur->is_array()) {
      std::size_t idx = 0;
      auto r = std::from_chars(seg.data(), seg.data() + seg.size(), idx);
      if (r.ec != std::errc() || r.ptr != seg.data() + seg.size() || idx >= cur->size()) return nullptr;
      cur = &(*cur)[idx];
    } else {
      return nullptr;
    }
  }
  return cur;
}

}  // namespace detail

inline void validate_instance(const EvalInstance& in) {
  const std::string id = in.id.empty() ? std::string("<no id>") : in.id;
  if (is_tool_call(in.category)) {
    if (in.gold.empty()) throw Error(Errc::InvalidValue, id + ".gold", "tool-call instances need at least one gold turn");
    for (const auto& turn : in.gold)
      if (turn.empty()) throw Error(Errc::InvalidValue, id + ".gold", "gold turns must contain at least one call");
    if (in.pattern == Pattern::Serial && in.gold.size() < 2)
      throw Error(Errc::InvalidValue, id + ".gold", "serial pattern needs more than one gold turn");
  }
  for (const auto& f : in.kda_fields) {
    if (f.turn >= in.gold.size()) throw Error(Errc::InvalidValue, id + ".kda_fields", "turn out of range");
    const auto* call = detail::nth_call(in.gold[f.turn], f.tool, f.occurrence);
    if (!call || !detail::lookup_path(call->arguments, f.param))
      throw Error(Errc::InvalidValue, id + ".kda_fields", "no gold value for " + f.tool + "." + f.param);
  }
  for (const auto& c : in.ita_constraints) {
    auto in_gold = [&](const std::string& name) {
      for (const auto& turn : in.gold)
        for (const auto& call : turn)
          if (call.name == name) return true;
      return false;
    };
    if (!in_gold(c.prerequisite) || !in_gold(c.dependent))
      throw Error(Errc::InvalidValue, id + ".ita_constraints", "constraint tools must appear in gold");
  }
}

inline json to_json(const EvalInstance& in) {
  json j = json::object();
  j["id"] = in.id;
  json hist = json::array();
  for (const auto& m : in.history) hist.push_back(json{{"role", m.role}, {"content", m.content}});
  j["history"] = std::move(hist);
  json cands = json::array();
  for (const auto& t : in.candidates) cands.push_back(registry::to_json(t));
  j["candidates"] = std::move(cands);
  json gold = json::array();
  for (const auto& turn : in.gold) gold.push_back(codec::calls_to_json(turn));
  j["gold"] = std::move(gold);
  json klass = json::object();
  if (is_tool_call(in.category)) {
    klass["kind"] = "tool_call";
    klass["config"] = to_string(in.category);
    klass["pattern"] = to_string(in.pattern);
  } else {
    klass["kind"] = "non_tool";
    klass["label"] = to_string(in.category);
  }
  j["class"] = std::move(klass);
  j["mode"] = codec::to_string(in.mode);
  json kda = json::array();
  for (const auto& f : in.kda_fields) {
    json e = json::object();
    e["turn"] = f.turn;
    e["tool"] = f.tool;
    e["param"] = f.param;
    e["occurrence"] = f.occurrence;
    kda.push_back(std::move(e));
  }
  j["kda_fields"] = std::move(kda);
  json ita = json::array();
  for (const auto& c : in.ita_constraints) ita.push_back(json{{"prerequisite", c.prerequisite}, {"dependent", c.dependent}});
  j["ita_constraints"] = std::move(ita);
  return j;
}

inline EvalInstance instance_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadType, "instance", "expected object");
  EvalInstance in;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw Error(Errc::MissingField, "id");
  in.id = id->get<std::string>();
  auto path = [&](std::string_view f) { return in.id + "." + std::string(f); };
  if (auto h = j.find("history"); h != j.end()) {
    if (!h->is_array()) throw Error(Errc::BadType, path("history"));
    for (const auto& m : *h) in.history.push_back({m.at("role").get<std::string>(), m.value("content", "")});
  }
  if (auto c = j.find("candidates"); c != j.end()) {
    if (!c->is_array()) throw Error(Errc::BadType, path("candidates"));
    for (const auto& t : *c) in.candidates.push_back(registry::tool_from_json(t));
  }
  auto klass = j.find("class");
  if (klass == j.end() || !klass->is_object()) throw Error(Errc::MissingField, path("class"));
  const auto kind = klass->value("kind", "");
  if (kind == "tool_call") {
    auto c = category_from_string(klass->value("config", ""));
    if (!c || !is_tool_call(*c)) throw Error(Errc::InvalidValue, path("class.config"));
    in.category = *c;
    auto p = pattern_from_string(klass->value("pattern", "single"));
    if (!p) throw Error(Errc::InvalidValue, path("class.pattern"));
    in.pattern = *p;
  } else if (kind == "non_tool") {
    auto c = category_from_string(klass->value("label", ""));
    if (!c || is_tool_call(*c)) throw Error(Errc::InvalidValue, path("class.label"));
    in.category = *c;
  } else {
    throw Error(Errc::InvalidValue, path("class.kind"), "expected tool_call or non_tool");
  }
  if (auto g = j.find("gold"); g != j.end()) {
    if (!g->is_array()) throw Error(Errc::BadType, path("gold"));
    for (const auto& turn : *g) in.gold.push_back(codec::calls_from_json(turn));
  }
  auto mode = codec::call_mode_from_string(j.value("mode", "fc"));
  if (!mode) throw Error(Errc::InvalidValue, path("mode"));
  in.mode = *mode;
  if (auto k = j.find("kda_fields"); k != j.end()) {
    for (const auto& f : *k)
      in.kda_fields.push_back({f.value("turn", std::size_t{0}), f.at("tool").get<std::string>(),
                               f.at("param").get<std::string>(), f.value("occurrence", std::size_t{0})});
  }
  if (auto t = j.find("ita_constraints"); t != j.end()) {
    for (const auto& c : *t)
      in.ita_constraints.push_back({c.at("prerequisite").get<std::string>(), c.at("dependent").get<std::string>()});
  }
  validate_instance(in);
  return in;
}

struct Prediction {
  std::string id;
  std::vector<std::string> turns;  // raw model output per gold turn
};

inline Prediction prediction_from_json(const json& j) {
  Prediction p;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw Error(Errc::MissingField, "prediction.id");
  p.id = id->get<std::string>();
  auto t = j.find("turns");
  if (t == j.end() || !t->is_array()) throw Error(Errc::MissingField, p.id + ".turns");
  for (const auto& s : *t) {
    if (!s.is_string()) throw Error(Errc::BadType, p.id + ".turns", "expected raw text");
    p.turns.push_back(s.get<std::string>());
  }
  return p;
}

inline json to_json(const Prediction& p) {
  json j = json::object();
  j["id"] = p.id;
  j["turns"] = p.turns;
  return j;
}

// ---------------------------------------------------------------------------
// Phase 1: rule circuit breaker

enum class BreakerReason { FormatError, ToolHallucination, ParamSchemaViolation };

inline std::string_view to_string(BreakerReason r) {
  switch (r) {
    case BreakerReason::FormatError: return "FormatError";
    case BreakerReason::ToolHallucination: return "ToolHallucination";
    case BreakerReason::ParamSchemaViolation: return "ParamSchemaViolation";
  }
  return "FormatError";
}

struct BreakerVerdict {
  bool pass = true;
  std::optional<BreakerReason> reason;
  std::string detail;

  static BreakerVerdict fail(BreakerReason r, std::string d) { return {false, r, std::move(d)}; }
};

// Checks, first failure wins: a parseable call structure exists; every name is a candidate;
// required params present, no unknown names, values type- and enum-valid.
inline BreakerVerdict rule_circuit_breaker(const ParseResult& pred, std::span<const ToolSpec> candidates) {
  if (const auto* e = std::get_if<codec::ParseError>(&pred))
    return BreakerVerdict::fail(BreakerReason::FormatError, "parse error at " + std::to_string(e->position) + ": " + e->reason);
  if (std::holds_alternative<codec::NoCall>(pred)) return BreakerVerdict::fail(BreakerReason::FormatError, "no tool call");
  const auto& calls = std::get<std::vector<ToolCall>>(pred);
  if (calls.empty()) return BreakerVerdict::fail(BreakerReason::FormatError, "no tool call");
  auto find = [&](const std::string& n) -> const ToolSpec* {
    for (const auto& t : candidates)
      if (t.name == n) return &t;
    return nullptr;
  };
  for (const auto& c : calls)
    if (!find(c.name)) return BreakerVerdict::fail(BreakerReason::ToolHallucination, "'" + c.name + "' is not a candidate");
  for (const auto& c : calls)
    if (auto v = registry::validate_arguments(find(c.name)->input_schema, c.arguments))
      return BreakerVerdict::fail(BreakerReason::ParamSchemaViolation, c.name + ": " + *v);
  return {};
}

inline BreakerVerdict rule_circuit_breaker(std::string_view raw, CallMode mode, std::span<const ToolSpec> candidates) {
  return rule_circuit_breaker(codec::parse_tool_calls(raw, mode), candidates);
}

// ---------------------------------------------------------------------------
// Judge contract

struct TurnContext {
  const EvalInstance* instance = nullptr;
  std::size_t turn = 0;
  std::span<const ToolCall> predicted;
  std::span<const ToolCall> gold;
};

struct ParamJudgement {
  std::string tool_name;
  double x = 0.0;                                  // part A, parameter selection
  std::vector<std::pair<std::string, double>> y;   // part B, one score per parameter value
};

class ScoringJudge {
 public:
  virtual ~ScoringJudge() = default;
  // Tool selection score k in [0, 10].
  virtual double select_score(const TurnContext& ctx) = 0;
  // One entry per predicted call, in order.
  virtual std::vector<ParamJudgement> param_scores(const TurnContext& ctx) = 0;
  // Does the response ask for the missing information?
  virtual bool confirms_clarification(const EvalInstance& instance, std::string_view response) = 0;
};

// ---------------------------------------------------------------------------
// Phase 2 and aggregation

struct ToolScore {
  std::string name;
  Rational x;
  std::vector<std::pair<std::string, Rational>> y;
  Rational y_bar;
  std::size_t m = 0;
  Rational s;
};

struct TurnScoreBreakdown {
  bool v_rule = true;
  std::optional<BreakerReason> breaker_reason;
  std::string breaker_detail;
  bool missing = false;
  std::optional<Rational> k;
  std::vector<ToolScore> tools;
  Rational s_exec = 0;
  Rational s_turn = 0;
};

namespace detail {

inline Rational judge_value(double v, const std::string& what) {
  if (!std::isfinite(v) || v < 0.0 || v > 10.0)
    throw Error(Errc::JudgeMalformedOutput, what, "score outside [0, 10]");
  return exact_decimal(v);
}

}  // namespace detail

inline Rational per_tool_score(const Rational& x, std::span<const Rational> y, const Weights& w) {
  if (y.empty()) return x;
  Rational sum = 0;
  for (const auto& v : y) sum += v;
  return exact_decimal(w.w_struct) * x + exact_decimal(w.w_val) * (sum / Rational(static_cast<long long>(y.size())));
}

inline Rational turn_score(const Rational& k, const Rational& s_exec, const Weights& w) {
  return (exact_decimal(w.w_select) * k + exact_decimal(w.w_exec) * s_exec) * 10;
}

// Breaker, then k (k = 0 stops), then per-tool scores. Judge errors propagate.
inline TurnScoreBreakdown score_tool_call_turn(const ParseResult& pred, const EvalInstance& inst, std::size_t turn,
                                               ScoringJudge& judge, const Weights& w = {}) {
  TurnScoreBreakdown b;
  auto verdict = rule_circuit_breaker(pred, inst.candidates);
  if (!verdict.pass) {
    b.v_rule = false;
    b.breaker_reason = verdict.reason;
    b.breaker_detail = verdict.detail;
    return b;
  }
  const auto& calls = std::get<std::vector<ToolCall>>(pred);
  TurnContext ctx{&inst, turn, calls, turn < inst.gold.size() ? std::span<const ToolCall>(inst.gold[turn]) : std::span<const ToolCall>()};
  b.k = detail::judge_value(judge.select_score(ctx), "k");
  if (*b.k == 0) return b;
  auto params = judge.param_scores(ctx);
  if (params.size() != calls.size())
    throw Error(Errc::JudgeMalformedOutput, "detailed_scores",
                "expected " + std::to_string(calls.size()) + " entries, got " + std::to_string(params.size()));
  Rational sum = 0;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    ToolScore ts;
    ts.name = calls[i].name;
    ts.x = detail::judge_value(params[i].x, "part_a_structure_score");
    std::vector<Rational> ys;
    for (const auto& [param, v] : params[i].y) {
      ys.push_back(detail::judge_value(v, "part_b_value_scores." + param));
      ts.y.emplace_back(param, ys.back());
    }
    ts.m = ys.size();
    if (ts.m) {
      Rational ysum = 0;
      for (const auto& v : ys) ysum += v;
      ts.y_bar = ysum / Rational(static_cast<long long>(ts.m));
    }
    ts.s = per_tool_score(ts.x, ys, w);
    sum += ts.s;
    b.tools.push_back(std::move(ts));
  }
  b.s_exec = sum / Rational(static_cast<long long>(calls.size()));
  b.s_turn = turn_score(*b.k, b.s_exec, w);
  return b;
}

inline TurnScoreBreakdown score_tool_call_turn(std::string_view raw, const EvalInstance& inst, std::size_t turn,
                                               ScoringJudge& judge, const Weights& w = {}) {
  return score_tool_call_turn(codec::parse_tool_calls(raw, inst.mode), inst, turn, judge, w);
}

enum class KdaOutcome { NotApplicable, Hit, Miss };

struct InstanceResult {
  std::string id;
  Category category = Category::StSc;
  bool scored = true;
  std::string unscored_reason;
  bool missing_prediction = false;
  Rational total = 0;
  std::vector<TurnScoreBreakdown> turns;   // tool-call instances
  std::size_t n_pred = 0;                  // non-tool instances
  bool parse_error = false;                // non-tool instances
  std::optional<bool> delta_intent;        // non-tool instances
  std::optional<int> kda;                  // instances with kda_fields
  std::optional<int> ita;                  // instances with ita_constraints

  double score() const { return to_double(total); }
};

// S_TC: mean of per-turn scores over the gold turn count; missing predicted turns score 0.
inline Rational score_tool_call_instance(const EvalInstance& inst, std::span<const std::string> pred_turns,
                                         ScoringJudge& judge, const Weights& w, std::vector<TurnScoreBreakdown>* out = nullptr) {
  const std::size_t T = inst.gold_turns();
  if (T == 0) throw Error(Errc::InvalidValue, inst.id + ".gold", "no gold turns");
  Rational sum = 0;
  for (std::size_t t = 0; t < T; ++t) {
    TurnScoreBreakdown b;
    if (t < pred_turns.size()) {
      b = score_tool_call_turn(std::string_view(pred_turns[t]), inst, t, judge, w);
    } else {
      b.missing = true;
      b.v_rule = false;
      b.breaker_reason = BreakerReason::FormatError;
      b.breaker_detail = "missing predicted turn";
    }
    sum += b.s_turn;
    if (out) out->push_back(std::move(b));
  }
  return sum / Rational(static_cast<long long>(T));
}

// S_NTC: any call (or broken call) gives 0; otherwise delta * 100, with delta from the judge for CI.
inline Rational score_non_tool_call(const EvalInstance& inst, std::span<const std::string> pred_turns, ScoringJudge& judge,
                                    InstanceResult* out = nullptr) {
  std::size_t n_pred = 0;
  bool broken = false;
  std::string text;
  for (const auto& raw : pred_turns) {
    auto r = codec::parse_tool_calls(raw, inst.mode);
    if (codec::is_parse_error(r)) broken = true;
    if (auto* calls = std::get_if<std::vector<ToolCall>>(&r)) n_pred += calls->size();
    if (!text.empty()) text += "\n";
    text += raw;
  }
  if (out) {
    out->n_pred = n_pred;
    out->parse_error = broken;
  }
  if (n_pred > 0 || broken) return 0;
  bool delta = true;
  if (inst.category == Category::CI) delta = judge.confirms_clarification(inst, text);
  if (out) out->delta_intent = delta;
  return delta ? Rational(100) : Rational(0);
}

// ---------------------------------------------------------------------------
// KDA and ITA

namespace detail {

inline std::optional<Rational> numeric_value(const json& v) {
  if (v.is_number_integer()) return Rational(v.get<long long>());
  if (v.is_number_unsigned()) return Rational(boost::multiprecision::cpp_int(v.get<unsigned long long>()));
  if (v.is_number_float()) return exact_decimal(v.get<double>());
  if (v.is_string()) {
    auto s = trim(v.get_ref<const std::string&>());
    if (s.empty()) return std::nullopt;
    double d = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), d);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(d)) return std::nullopt;
    return exact_decimal(d);
  }
  return std::nullopt;
}

}  // namespace detail

// Trimmed strings compare byte-exact. Numbers compare by value, also against a numeric string.
inline bool kda_equal(const json& pred, const json& gold) {
  if (pred.is_string() && gold.is_string()) return trim(pred.get_ref<const std::string&>()) == trim(gold.get_ref<const std::string&>());
  if (pred.is_number() || gold.is_number()) {
    auto a = detail::numeric_value(pred), b = detail::numeric_value(gold);
    return a && b && *a == *b;
  }
  if (pred.is_array() && gold.is_array()) {
    if (pred.size() != gold.size()) return false;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (!kda_equal(pred[i], gold[i])) return false;
    return true;
  }
  if (pred.is_object() && gold.is_object()) {
    if (pred.size() != gold.size()) return false;
    for (auto it = gold.begin(); it != gold.end(); ++it) {
      auto p = pred.find(it.key());
      if (p == pred.end() || !kda_equal(*p, it.value())) return false;
    }
    return true;
  }
  return pred == gold;
}

inline std::vector<std::vector<ToolCall>> parsed_turns(const EvalInstance& inst, std::span<const std::string> pred_turns) {
  std::vector<std::vector<ToolCall>> out;
  for (const auto& raw : pred_turns) {
    auto r = codec::parse_tool_calls(raw, inst.mode);
    auto* calls = std::get_if<std::vector<ToolCall>>(&r);
    out.push_back(calls ? *calls : std::vector<ToolCall>{});
  }
  return out;
}

// 1 iff every designated field matches its gold value; nullopt without annotations.
inline std::optional<int> compute_kda(const EvalInstance& inst, const std::vector<std::vector<ToolCall>>& pred) {
  if (inst.kda_fields.empty()) return std::nullopt;
  for (const auto& f : inst.kda_fields) {
    const auto* gcall = detail::nth_call(inst.gold.at(f.turn), f.tool, f.occurrence);
    const json* gval = gcall ? detail::lookup_path(gcall->arguments, f.param) : nullptr;
    if (!gval) throw Error(Errc::InvalidValue, inst.id + ".kda_fields", "no gold value for " + f.tool + "." + f.param);
    if (f.turn >= pred.size()) return 0;
    const auto* pcall = detail::nth_call(pred[f.turn], f.tool, f.occurrence);
    const json* pval = pcall ? detail::lookup_path(pcall->arguments, f.param) : nullptr;
    if (!pval || !kda_equal(*pval, *gval)) return 0;
  }
  return 1;
}

// 1 iff, for every (p, d) with d called, p is called at an earlier position of the flattened sequence.
inline std::optional<int> compute_ita(const EvalInstance& inst, const std::vector<std::vector<ToolCall>>& pred) {
  if (inst.ita_constraints.empty()) return std::nullopt;
  std::vector<std::string> seq;
  for (const auto& turn : pred)
    for (const auto& c : turn) seq.push_back(c.name);
  for (const auto& c : inst.ita_constraints) {
    auto d = std::find(seq.begin(), seq.end(), c.dependent);
    if (d == seq.end()) continue;
    if (std::find(seq.begin(), d, c.prerequisite) == d) return 0;
  }
  return 1;
}

// Full per-instance evaluation. Judge failures mark the instance unscored rather than zero.
inline InstanceResult evaluate_instance(const EvalInstance& inst, const Prediction* pred, ScoringJudge& judge,
                                        const Weights& w = {}) {
  InstanceResult r;
  r.id = inst.id;
  r.category = inst.category;
  static const std::vector<std::string> kEmpty;
  const auto& turns = pred ? pred->turns : kEmpty;
  r.missing_prediction = pred == nullptr;
  try {
    if (is_tool_call(inst.category)) {
      r.total = score_tool_call_instance(inst, turns, judge, w, &r.turns);
    } else if (!pred) {
      r.total = 0;
    } else {
      r.total = score_non_tool_call(inst, turns, judge, &r);
    }
  } catch (const Error& e) {
    if (e.code() != Errc::JudgeMalformedOutput && e.code() != Errc::JudgeUnavailable) throw;
    r.scored = false;
    r.unscored_reason = e.what();
    r.total = 0;
    r.turns.clear();
  }
  auto parsed = parsed_turns(inst, turns);
  r.kda = compute_kda(inst, parsed);
  r.ita = compute_ita(inst, parsed);
  return r;
}

// Scores instances with up to `workers` threads; each worker owns a judge from `make_judge`.
inline std::vector<InstanceResult> evaluate_all(const std::vector<EvalInstance>& instances,
                                                const std::vector<Prediction>& predictions,
                                                const std::function<std::unique_ptr<ScoringJudge>()>& make_judge,
                                                const Weights& w = {}, std::size_t workers = 1) {
  validate_weights(w);
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.id, &p);
  std::vector<InstanceResult> results(instances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    auto judge = make_judge();
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      try {
        auto it = by_id.find(instances[i].id);
        results[i] = evaluate_instance(instances[i], it == by_id.end() ? nullptr : it->second, *judge, w);
      } catch (...) {
        std::lock_guard lk(failure_mu);
        if (!failure) failure = std::current_exception();
        next = instances.size();
        return;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, instances.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

// ---------------------------------------------------------------------------
// Report

struct CategoryAggregate {
  std::size_t count = 0;
  std::optional<Rational> mean;
};

struct ScoreReport {
  std::map<Category, CategoryAggregate> categories;
  std::size_t kda_count = 0;
  std::optional<Rational> kda;  // percent
  std::size_t ita_count = 0;
  std::optional<Rational> ita;  // percent
  std::optional<Rational> overall;        // mean of the non-empty category means
  std::optional<Rational> overall_micro;  // mean over all scored instances
  std::size_t scored = 0;
  std::vector<std::string> unscored;
  std::map<std::string, std::size_t> breaker_counts;
  std::vector<InstanceResult> instances;
};

inline ScoreReport aggregate_report(std::vector<InstanceResult> results) {
  ScoreReport rep;
  std::map<Category, Rational> sums;
  Rational all = 0, kda_hits = 0, ita_hits = 0;
  for (auto c : kAllCategories) rep.categories[c] = {};
  for (const auto& r : results) {
    if (!r.scored) {
      rep.unscored.push_back(r.id);
      continue;
    }
    ++rep.scored;
    auto& agg = rep.categories[r.category];
    ++agg.count;
    sums[r.category] += r.total;
    all += r.total;
    if (r.kda) {
      ++rep.kda_count;
      kda_hits += *r.kda;
    }
    if (r.ita) {
      ++rep.ita_count;
      ita_hits += *r.ita;
    }
    for (const auto& t : r.turns)
      if (t.breaker_reason) ++rep.breaker_counts[std::string(to_string(*t.breaker_reason))];
  }
  Rational macro = 0;
  std::size_t nonempty = 0;
  for (auto& [c, agg] : rep.categories) {
    if (!agg.count) continue;
    agg.mean = sums[c] / Rational(static_cast<long long>(agg.count));
    macro += *agg.mean;
    ++nonempty;
  }
  if (nonempty) rep.overall = macro / Rational(static_cast<long long>(nonempty));
  if (rep.scored) rep.overall_micro = all / Rational(static_cast<long long>(rep.scored));
  if (rep.kda_count) rep.kda = kda_hits * 100 / Rational(static_cast<long long>(rep.kda_count));
  if (rep.ita_count) rep.ita = ita_hits * 100 / Rational(static_cast<long long>(rep.ita_count));
  rep.instances = std::move(results);
  return rep;
}

inline json opt_number(const std::optional<Rational>& r) { return r ? json(to_double(*r)) : json(nullptr); }

inline json to_json(const TurnScoreBreakdown& b) {
  json j = json::object();
  j["v_rule"] = b.v_rule;
  if (b.breaker_reason) {
    j["breaker_reason"] = to_string(*b.breaker_reason);
    j["breaker_detail"] = b.breaker_detail;
  }
  j["k"] = opt_number(b.k);
  json tools = json::array();
  for (const auto& t : b.tools) {
    json tj = json::object();
    tj["name"] = t.name;
    tj["x"] = to_double(t.x);
    json ys = json::object();
    for (const auto& [p, v] : t.y) ys[p] = to_double(v);
    tj["y"] = std::move(ys);
    tj["y_bar"] = to_double(t.y_bar);
    tj["m"] = t.m;
    tj["s"] = to_double(t.s);
    tools.push_back(std::move(tj));
  }
  j["tools"] = std::move(tools);
  j["s_exec"] = to_double(b.s_exec);
  j["s_turn"] = to_double(b.s_turn);
  return j;
}

inline json to_json(const InstanceResult& r) {
  json j = json::object();
  j["id"] = r.id;
  j["category"] = to_string(r.category);
  j["scored"] = r.scored;
  if (!r.scored) j["unscored_reason"] = r.unscored_reason;
  if (r.missing_prediction) j["missing_prediction"] = true;
  j["s_total"] = to_double(r.total);
  if (is_tool_call(r.category)) {
    json turns = json::array();
    for (const auto& t : r.turns) turns.push_back(to_json(t));
    j["turns"] = std::move(turns);
  } else {
    j["n_pred"] = r.n_pred;
    j["parse_error"] = r.parse_error;
    j["delta_intent"] = r.delta_intent ? json(*r.delta_intent) : json(nullptr);
  }
  j["kda"] = r.kda ? json(*r.kda) : json(nullptr);
  j["ita"] = r.ita ? json(*r.ita) : json(nullptr);
  return j;
}

inline json to_json(const ScoreReport& rep) {
  json j = json::object();
  json cats = json::object();
  for (const auto& [c, agg] : rep.categories) {
    json e = json::object();
    e["count"] = agg.count;
    e["mean"] = opt_number(agg.mean);
    cats[std::string(to_string(c))] = std::move(e);
  }
  j["categories"] = std::move(cats);
  j["kda"] = json{{"count", rep.kda_count}, {"percent", opt_number(rep.kda)}};
  j["ita"] = json{{"count", rep.ita_count}, {"percent", opt_number(rep.ita)}};
  j["overall"] = opt_number(rep.overall);
  j["overall_micro"] = opt_number(rep.overall_micro);
  j["scored"] = rep.scored;
  j["unscored"] = rep.unscored;
  json br = json::object();
  for (const auto& [k, v] : rep.breaker_counts) br[k] = v;
  j["breaker_counts"] = std::move(br);
  json inst = json::array();
  for (const auto& r : rep.instances) inst.push_back(to_json(r));
  j["instances"] = std::move(inst);
  return j;
}

// One header row and one value row, columns as in the benchmark's main results table.
inline std::string render_report_table(const ScoreReport& rep, std::string_view label = "model") {
  auto cell = [](const std::optional<Rational>& v) {
    char buf[32];
    if (!v) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.2f", to_double(*v));
    return std::string(buf);
  };
  std::string header = "Model", row(label);
  char buf[64];
  auto add = [&](const std::string& h, const std::string& v) {
    std::snprintf(buf, sizeof buf, " | %7s", h.c_str());
    header += buf;
    std::snprintf(buf, sizeof buf, " | %7s", v.c_str());
    row += buf;
  };
  const auto width = std::max<std::size_t>(label.size(), 5);
  header.resize(width, ' ');
  row.resize(width, ' ');
  for (auto c : kAllCategories) add(std::string(to_string(c)), cell(rep.categories.at(c).mean));
  add("KDA", cell(rep.kda));
  add("ITA", cell(rep.ita));
  add("Avg", cell(rep.overall));
  std::string out = header + "\n" + row + "\n";
  if (!rep.unscored.empty()) out += "unscored: " + std::to_string(rep.unscored.size()) + "\n";
  return out;
}

}  // namespace fintool::eval
