#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fintool/core.hpp"

namespace fintool::registry {

enum class ParamType { String, Integer, Number, Boolean, Array, Object };

inline std::string_view to_string(ParamType t) {
  switch (t) {
    case ParamType::String: return "string";
    case ParamType::Integer: return "integer";
    case ParamType::Number: return "number";
    case ParamType::Boolean: return "boolean";
    case ParamType::Array: return "array";
    case ParamType::Object: return "object";
  }
  return "string";
}

inline std::optional<ParamType> param_type_from_string(std::string_view s) {
  if (s == "string") return ParamType::String;
  if (s == "integer") return ParamType::Integer;
  if (s == "number") return ParamType::Number;
  if (s == "boolean") return ParamType::Boolean;
  if (s == "array") return ParamType::Array;
  if (s == "object") return ParamType::Object;
  return std::nullopt;
}

// Does `v` conform to `t`? Integer-valued numbers satisfy `number`.
inline bool value_matches_type(const json& v, ParamType t) {
  switch (t) {
    case ParamType::String: return v.is_string();
    case ParamType::Integer:
      if (v.is_number_integer()) return true;
      if (v.is_number_float()) {
        double d = v.get<double>();
        return std::isfinite(d) && std::floor(d) == d;
      }
      return false;
    case ParamType::Number: return v.is_number();
    case ParamType::Boolean: return v.is_boolean();
    case ParamType::Array: return v.is_array();
    case ParamType::Object: return v.is_object();
  }
  return false;
}

struct Property;

// Schema of one parameter. Nested `properties` apply to objects, `items` to arrays.
struct PropertySchema {
  ParamType type = ParamType::String;
  std::string description;
  std::optional<json> enum_values;
  std::shared_ptr<const PropertySchema> items;
  std::vector<Property> properties;
  std::vector<std::string> required;
  json extras = json::object();  // unrecognized keys, kept for lossless round trips

  bool operator==(const PropertySchema& o) const;
};

struct Property {
  std::string name;
  PropertySchema schema;
  bool operator==(const Property&) const = default;
};

inline bool PropertySchema::operator==(const PropertySchema& o) const {
  bool items_eq = (!items && !o.items) || (items && o.items && *items == *o.items);
  return type == o.type && description == o.description && enum_values == o.enum_values && items_eq &&
         properties == o.properties && required == o.required && extras == o.extras;
}

struct ParamSchema {
  std::vector<Property> properties;
  std::vector<std::string> required;

  const Property* find(std::string_view name) const {
    for (const auto& p : properties)
      if (p.name == name) return &p;
    return nullptr;
  }
  bool is_required(std::string_view name) const {
    return std::find(required.begin(), required.end(), name) != required.end();
  }
  bool operator==(const ParamSchema&) const = default;
};

struct ToolSpec {
  std::string name;
  std::string description;
  ParamSchema input_schema;
  std::optional<ParamSchema> output_schema;
  std::vector<std::string> tags;

  bool operator==(const ToolSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Argument validation

namespace detail {

inline std::optional<std::string> check_value(const PropertySchema& s, const json& v, const std::string& path);

inline std::optional<std::string> check_object(const std::vector<Property>& props, const std::vector<std::string>& required,
                                               const json& obj, const std::string& prefix) {
  for (const auto& r : required)
    if (!obj.contains(r)) return "missing required parameter '" + prefix + r + "'";
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const Property* p = nullptr;
    for (const auto& q : props)
      if (q.name == it.key()) p = &q;
    if (!p) return "unknown parameter '" + prefix + it.key() + "'";
    if (auto e = check_value(p->schema, it.value(), prefix + it.key())) return e;
  }
  return std::nullopt;
}

inline std::optional<std::string> check_value(const PropertySchema& s, const json& v, const std::string& path) {
  if (!value_matches_type(v, s.type))
    return "parameter '" + path + "' expects " + std::string(to_string(s.type)) + ", got " + v.type_name();
  if (s.enum_values) {
    bool hit = false;
    for (const auto& e : *s.enum_values) {
      if (e == v || (e.is_number() && v.is_number() && e.get<double>() == v.get<double>())) {
        hit = true;
        break;
      }
    }
    if (!hit) return "parameter '" + path + "' value " + v.dump() + " not in enum";
  }
  if (s.type == ParamType::Array && s.items) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (auto e = check_value(*s.items, v[i], path + "[" + std::to_string(i) + "]")) return e;
  }
  if (s.type == ParamType::Object && !s.properties.empty())
    return check_object(s.properties, s.required, v, path + ".");
  return std::nullopt;
}

}  // namespace detail

// First schema violation of a call's arguments: missing required, unknown name, bad type, enum miss.
inline std::optional<std::string> validate_arguments(const ParamSchema& schema, const json& args) {
  if (!args.is_object()) return std::string("arguments must be an object");
  return detail::check_object(schema.properties, schema.required, args, "");
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string join_path(const std::string& base, std::string_view key) {
  return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline PropertySchema parse_property(const json& j, const std::string& path);

inline std::vector<std::string> parse_required(const json& obj, const std::string& path) {
  std::vector<std::string> req;
  auto it = obj.find("required");
  if (it == obj.end()) return req;
  if (!it->is_array()) throw Error(Errc::BadType, join_path(path, "required"), "expected array");
  std::set<std::string> seen;
  for (const auto& r : *it) {
    if (!r.is_string()) throw Error(Errc::BadType, join_path(path, "required"), "expected array of strings");
    auto s = r.get<std::string>();
    if (!seen.insert(s).second) throw Error(Errc::DuplicateRequired, s);
    req.push_back(std::move(s));
  }
  return req;
}

inline std::vector<Property> parse_properties(const json& obj, const std::string& path) {
  std::vector<Property> props;
  auto it = obj.find("properties");
  if (it == obj.end()) return props;
  if (!it->is_object()) throw Error(Errc::BadType, join_path(path, "properties"), "expected object");
  for (auto p = it->begin(); p != it->end(); ++p) {
    auto ppath = join_path(join_path(path, "properties"), p.key());
    if (p.key().empty()) throw Error(Errc::InvalidValue, ppath, "empty property name");
    props.push_back(Property{p.key(), parse_property(p.value(), ppath)});
  }
  return props;
}

inline void check_required_subset(const std::vector<Property>& props, const std::vector<std::string>& req,
                                  const std::string& path) {
  for (const auto& r : req) {
    bool found = std::any_of(props.begin(), props.end(), [&](const Property& p) { return p.name == r; });
    if (!found) throw Error(Errc::MissingField, join_path(join_path(path, "properties"), r));
  }
}

inline PropertySchema parse_property(const json& j, const std::string& path) {
  if (!j.is_object()) throw Error(Errc::BadType, path, "expected object");
  PropertySchema s;
  auto t = j.find("type");
  if (t == j.end()) throw Error(Errc::MissingField, join_path(path, "type"));
  if (!t->is_string()) throw Error(Errc::BadType, join_path(path, "type"), "expected string");
  auto pt = param_type_from_string(t->get<std::string>());
  if (!pt) throw Error(Errc::BadType, join_path(path, "type"), "unsupported type '" + t->get<std::string>() + "'");
  s.type = *pt;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    if (key == "type") continue;
    if (key == "description") {
      if (!it->is_string()) throw Error(Errc::BadType, join_path(path, "description"), "expected string");
      s.description = it->get<std::string>();
    } else if (key == "enum") {
      if (!it->is_array()) throw Error(Errc::BadType, join_path(path, "enum"), "expected array");
      for (const auto& v : *it)
        if (!value_matches_type(v, s.type))
          throw Error(Errc::BadType, join_path(path, "enum"), "enum value " + v.dump() + " is not " + std::string(to_string(s.type)));
      s.enum_values = *it;
    } else if (key == "items") {
      s.items = std::make_shared<const PropertySchema>(parse_property(*it, join_path(path, "items")));
    } else if (key == "properties") {
      s.properties = parse_properties(j, path);
    } else if (key == "required") {
      s.required = parse_required(j, path);
    } else {
      s.extras[key] = *it;
    }
  }
  check_required_subset(s.properties, s.required, path);
  return s;
}

inline ParamSchema parse_param_schema(const json& j, const std::string& path) {
  if (!j.is_object()) throw Error(Errc::BadType, path, "expected object");
  if (auto t = j.find("type"); t != j.end() && (!t->is_string() || t->get<std::string>() != "object"))
    throw Error(Errc::BadType, join_path(path, "type"), "schema root must be 'object'");
  ParamSchema s;
  s.properties = parse_properties(j, path);
  s.required = parse_required(j, path);
  check_required_subset(s.properties, s.required, path);
  return s;
}

inline json property_to_json(const PropertySchema& s) {
  json j = json::object();
  j["type"] = to_string(s.type);
  if (!s.description.empty()) j["description"] = s.description;
  if (s.enum_values) j["enum"] = *s.enum_values;
  if (s.items) j["items"] = property_to_json(*s.items);
  if (!s.properties.empty()) {
    json props = json::object();
    for (const auto& p : s.properties) props[p.name] = property_to_json(p.schema);
    j["properties"] = std::move(props);
  }
  if (!s.required.empty()) j["required"] = s.required;
  for (auto it = s.extras.begin(); it != s.extras.end(); ++it) j[it.key()] = it.value();
  return j;
}

}  // namespace detail

inline bool is_valid_tool_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

inline json schema_to_json(const ParamSchema& s) {
  json j = json::object();
  j["type"] = "object";
  json props = json::object();
  for (const auto& p : s.properties) props[p.name] = detail::property_to_json(p.schema);
  j["properties"] = std::move(props);
  j["required"] = s.required;
  return j;
}

inline ParamSchema schema_from_json(const json& j, const std::string& path = "inputSchema") {
  return detail::parse_param_schema(j, path);
}

// MCP shape: name, description, inputSchema, optional outputSchema and tags.
inline json to_json(const ToolSpec& t) {
  json j = json::object();
  j["name"] = t.name;
  j["description"] = t.description;
  j["inputSchema"] = schema_to_json(t.input_schema);
  if (t.output_schema) {
    json out = json::object();
    out["type"] = "object";
    json props = json::object();
    for (const auto& p : t.output_schema->properties) props[p.name] = detail::property_to_json(p.schema);
    out["properties"] = std::move(props);
    if (!t.output_schema->required.empty()) out["required"] = t.output_schema->required;
    j["outputSchema"] = std::move(out);
  }
  if (!t.tags.empty()) j["tags"] = t.tags;
  return j;
}

inline ToolSpec tool_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadType, "$", "tool spec must be a JSON object");
  ToolSpec t;
  auto name = j.find("name");
  if (name == j.end()) throw Error(Errc::MissingField, "name");
  if (!name->is_string()) throw Error(Errc::BadType, "name", "expected string");
  t.name = name->get<std::string>();
  if (!is_valid_tool_name(t.name)) throw Error(Errc::InvalidValue, "name", "'" + t.name + "' must match [a-z0-9_]+");
  if (auto d = j.find("description"); d != j.end()) {
    if (!d->is_string()) throw Error(Errc::BadType, "description", "expected string");
    t.description = d->get<std::string>();
  }
  auto in = j.find("inputSchema");
  if (in == j.end()) throw Error(Errc::MissingField, "inputSchema");
  t.input_schema = detail::parse_param_schema(*in, "inputSchema");
  if (auto out = j.find("outputSchema"); out != j.end() && !out->is_null())
    t.output_schema = detail::parse_param_schema(*out, "outputSchema");
  if (auto tags = j.find("tags"); tags != j.end()) {
    if (!tags->is_array()) throw Error(Errc::BadType, "tags", "expected array");
    for (const auto& tag : *tags) {
      if (!tag.is_string()) throw Error(Errc::BadType, "tags", "expected array of strings");
      t.tags.push_back(tag.get<std::string>());
    }
  }
  return t;
}

// Parses one MCP tool description. Throws Error naming the first violated constraint and its path.
inline ToolSpec parse_tool_spec(std::string_view raw) {
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedJson, "$", e.what());
  }
  return tool_from_json(j);
}

inline std::string serialize_tool_spec(const ToolSpec& t) { return to_json(t).dump(); }

// ---------------------------------------------------------------------------
// Library

struct LibraryMetadata {
  std::string source;
  std::string build_timestamp;
  std::size_t tool_count = 0;
  std::size_t merged_duplicates = 0;
  // Pairs at or above the similarity threshold, left for review rather than merged.
  std::vector<std::pair<std::string, std::string>> review_flags;
};

class Library {
 public:
  Library() = default;

  // Throws InvalidValue on duplicate names.
  explicit Library(std::vector<ToolSpec> tools, LibraryMetadata meta = {}) : tools_(std::move(tools)), meta_(std::move(meta)) {
    for (std::size_t i = 0; i < tools_.size(); ++i) {
      if (!by_name_.emplace(tools_[i].name, i).second)
        throw Error(Errc::InvalidValue, tools_[i].name, "duplicate tool name in library");
    }
    meta_.tool_count = tools_.size();
  }

  const std::vector<ToolSpec>& tools() const noexcept { return tools_; }
  const LibraryMetadata& metadata() const noexcept { return meta_; }
  std::size_t size() const noexcept { return tools_.size(); }
  bool contains(std::string_view name) const { return by_name_.count(std::string(name)) > 0; }

  const ToolSpec* find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &tools_[it->second];
  }

  const ToolSpec& at(std::string_view name) const {
    if (auto* t = find(name)) return *t;
    throw Error(Errc::UnknownTool, std::string(name));
  }

 private:
  std::vector<ToolSpec> tools_;
  std::unordered_map<std::string, std::size_t> by_name_;
  LibraryMetadata meta_;
};

inline json metadata_to_json(const LibraryMetadata& m) {
  json j = json::object();
  j["kind"] = "library_metadata";
  j["source"] = m.source;
  j["build_timestamp"] = m.build_timestamp;
  j["tool_count"] = m.tool_count;
  j["merged_duplicates"] = m.merged_duplicates;
  json flags = json::array();
  for (const auto& [a, b] : m.review_flags) flags.push_back(json::array({a, b}));
  j["review_flags"] = std::move(flags);
  return j;
}

inline LibraryMetadata metadata_from_json(const json& j) {
  LibraryMetadata m;
  m.source = j.value("source", "");
  m.build_timestamp = j.value("build_timestamp", "");
  m.tool_count = j.value("tool_count", std::size_t{0});
  m.merged_duplicates = j.value("merged_duplicates", std::size_t{0});
  if (auto f = j.find("review_flags"); f != j.end())
    for (const auto& p : *f) m.review_flags.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  return m;
}

// JSONL: one ToolSpec per line. An optional leading metadata line carries "kind":"library_metadata".
inline std::vector<json> library_to_jsonl(const Library& lib, bool with_metadata = true) {
  std::vector<json> rows;
  if (with_metadata) rows.push_back(metadata_to_json(lib.metadata()));
  for (const auto& t : lib.tools()) rows.push_back(to_json(t));
  return rows;
}

inline Library library_from_jsonl(const std::vector<json>& rows) {
  std::vector<ToolSpec> tools;
  LibraryMetadata meta;
  bool have_meta = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.is_object() && r.value("kind", "") == "library_metadata") {
      meta = metadata_from_json(r);
      have_meta = true;
      continue;
    }
    try {
      tools.push_back(tool_from_json(r));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(i + 1) + ": " + e.detail(), e.what());
    }
  }
  if (have_meta && meta.tool_count != tools.size())
    throw Error(Errc::InvalidValue, "tool_count", "metadata count does not match the number of tools");
  return Library(std::move(tools), std::move(meta));
}

// ---------------------------------------------------------------------------
// Verification

struct StructuralLimits {
  std::size_t max_params = 8;
  std::size_t max_nesting_depth = 2;
};

enum class LogicalOutcome { NotRun, Pass, Fail, BudgetExhausted };

struct VerificationReport {
  std::string tool;
  bool layer1_pass = false;
  std::vector<std::string> layer1_reasons;
  LogicalOutcome layer2 = LogicalOutcome::NotRun;
  std::vector<std::string> layer2_reasons;  // judge diagnoses, in attempt order
  int attempts = 0;
  std::optional<ToolSpec> final_spec;  // spec after accepted revisions

  bool passed() const { return layer1_pass && (layer2 == LogicalOutcome::NotRun || layer2 == LogicalOutcome::Pass); }
};

inline std::string_view to_string(LogicalOutcome o) {
  switch (o) {
    case LogicalOutcome::NotRun: return "not_run";
    case LogicalOutcome::Pass: return "pass";
    case LogicalOutcome::Fail: return "fail";
    case LogicalOutcome::BudgetExhausted: return "BudgetExhausted";
  }
  return "not_run";
}

inline json to_json(const VerificationReport& r) {
  json j = json::object();
  j["tool"] = r.tool;
  j["layer1"] = {{"pass", r.layer1_pass}, {"reasons", r.layer1_reasons}};
  json l2 = json::object();
  l2["outcome"] = to_string(r.layer2);
  l2["reasons"] = r.layer2_reasons;
  j["layer2"] = std::move(l2);
  j["attempts"] = r.attempts;
  return j;
}

namespace detail {
inline std::size_t property_depth(const PropertySchema& s) {
  std::size_t child = 0;
  for (const auto& p : s.properties) child = std::max(child, property_depth(p.schema));
  // An array shares its level with its item schema.
  if (s.items) child = std::max(child, property_depth(*s.items) - 1);
  return 1 + child;
}

inline void collect_missing_descriptions(const std::vector<Property>& props, const std::string& prefix,
                                         std::vector<std::string>& out) {
  for (const auto& p : props) {
    auto path = prefix.empty() ? p.name : prefix + "." + p.name;
    if (trim(p.schema.description).empty()) out.push_back(path);
    collect_missing_descriptions(p.schema.properties, path, out);
  }
}
}  // namespace detail

inline std::size_t nesting_depth(const ParamSchema& s) {
  std::size_t d = 0;
  for (const auto& p : s.properties) d = std::max(d, detail::property_depth(p.schema));
  return d;
}

// Layer 1: atomicity and parameter complexity. Pure; failures are report entries.
inline VerificationReport verify_structural(const ToolSpec& spec, const StructuralLimits& limits = {}) {
  VerificationReport r;
  r.tool = spec.name;
  r.attempts = 1;
  const auto count = spec.input_schema.properties.size();
  if (count > limits.max_params)
    r.layer1_reasons.push_back("param count " + std::to_string(count) + " > " + std::to_string(limits.max_params));
  const auto depth = nesting_depth(spec.input_schema);
  if (depth > limits.max_nesting_depth)
    r.layer1_reasons.push_back("nesting depth " + std::to_string(depth) + " > " + std::to_string(limits.max_nesting_depth));
  if (trim(spec.description).empty()) r.layer1_reasons.push_back("empty description");
  std::vector<std::string> missing;
  detail::collect_missing_descriptions(spec.input_schema.properties, "", missing);
  for (const auto& m : missing) r.layer1_reasons.push_back("param '" + m + "' has no description");
  r.layer1_pass = r.layer1_reasons.empty();
  return r;
}

struct ToolJudgement {
  bool pass = false;
  std::string diagnosis;
  std::optional<ToolSpec> revised_spec;
};

// Logical-correctness reviewer. Implementations throw Error(JudgeUnavailable) on gateway failure.
class ToolJudge {
 public:
  virtual ~ToolJudge() = default;
  virtual ToolJudgement review(const ToolSpec& spec, const std::vector<std::string>& prior_diagnoses) = 0;
};

// Layer 2: judge -> revise loop bounded by `budget` judge calls.
// A revision is adopted only if it still passes layer 1.
inline VerificationReport verify_logical(const ToolSpec& spec, ToolJudge& judge, int budget = 3,
                                         const StructuralLimits& limits = {}) {
  if (budget < 1) throw Error(Errc::InvalidConfig, "budget", "T_max must be >= 1");
  VerificationReport report = verify_structural(spec, limits);
  ToolSpec current = spec;
  report.attempts = 0;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    report.attempts = attempt;
    ToolJudgement j = judge.review(current, report.layer2_reasons);
    if (j.pass) {
      report.layer2 = LogicalOutcome::Pass;
      report.final_spec = current;
      return report;
    }
    report.layer2_reasons.push_back(j.diagnosis.empty() ? "judge rejected without diagnosis" : j.diagnosis);
    if (j.revised_spec) {
      auto rev = verify_structural(*j.revised_spec, limits);
      if (rev.layer1_pass) {
        current = *j.revised_spec;
        report.layer1_pass = true;
        report.layer1_reasons.clear();
      } else {
        report.layer2_reasons.push_back("revision rejected: " + rev.layer1_reasons.front());
      }
    }
  }
  report.layer2 = LogicalOutcome::BudgetExhausted;
  report.layer2_reasons.push_back("BudgetExhausted");
  report.final_spec = current;
  return report;
}

// ---------------------------------------------------------------------------
// Normalization

using SimilarityFn = std::function<double(const ToolSpec&, const ToolSpec&)>;

// Jaccard overlap of the token sets of name + description.
inline double token_jaccard(const ToolSpec& a, const ToolSpec& b) {
  auto ta = tokenize(a.name + " " + a.description);
  auto tb = tokenize(b.name + " " + b.description);
  std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Merges exact-name duplicates (first occurrence wins; differing descriptions are concatenated)
// and flags, without merging, distinct tools whose similarity reaches `threshold`.
inline Library normalize_library(const std::vector<ToolSpec>& tools, const SimilarityFn& similarity = token_jaccard,
                                 double threshold = 0.9, LibraryMetadata meta = {}) {
  std::vector<ToolSpec> out;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t merged = 0;
  for (const auto& t : tools) {
    auto [it, inserted] = index.emplace(t.name, out.size());
    if (inserted) {
      out.push_back(t);
      continue;
    }
    ++merged;
    auto& kept = out[it->second];
    if (!t.description.empty() && kept.description != t.description &&
        kept.description.find(t.description) == std::string::npos) {
      kept.description = kept.description.empty() ? t.description : kept.description + " " + t.description;
    }
  }
  meta.merged_duplicates = merged;
  meta.review_flags.clear();
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j)
      if (similarity(out[i], out[j]) >= threshold) meta.review_flags.emplace_back(out[i].name, out[j].name);
  return Library(std::move(out), std::move(meta));
}

}  // namespace fintool::registry
