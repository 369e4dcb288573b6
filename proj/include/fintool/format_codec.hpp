#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/tool_registry.hpp"

namespace fintool::codec {

using registry::ParamSchema;
using registry::ToolSpec;

enum class CallMode { Prompt, Fc };

inline std::string_view to_string(CallMode m) { return m == CallMode::Prompt ? "prompt" : "fc"; }

inline std::optional<CallMode> call_mode_from_string(std::string_view s) {
  if (s == "prompt") return CallMode::Prompt;
  if (s == "fc") return CallMode::Fc;
  return std::nullopt;
}

struct ToolCall {
  std::string name;
  json arguments = json::object();
  bool operator==(const ToolCall&) const = default;
};

inline json to_json(const ToolCall& c) {
  json j = json::object();
  j["name"] = c.name;
  j["arguments"] = c.arguments;
  return j;
}

inline ToolCall tool_call_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadType, "tool_call", "expected object");
  ToolCall c;
  auto n = j.find("name");
  if (n == j.end() || !n->is_string() || n->get<std::string>().empty())
    throw Error(Errc::MissingField, "tool_call.name");
  c.name = n->get<std::string>();
  if (auto a = j.find("arguments"); a != j.end() && !a->is_null()) {
    if (a->is_string()) {
      // OpenAI-style argument strings carry JSON-encoded objects.
      try {
        c.arguments = json::parse(a->get<std::string>());
      } catch (const json::parse_error&) {
        throw Error(Errc::MalformedJson, "tool_call.arguments");
      }
    } else {
      c.arguments = *a;
    }
    if (!c.arguments.is_object()) throw Error(Errc::BadType, "tool_call.arguments", "expected object");
  }
  return c;
}

inline json calls_to_json(const std::vector<ToolCall>& calls) {
  json arr = json::array();
  for (const auto& c : calls) arr.push_back(to_json(c));
  return arr;
}

inline std::vector<ToolCall> calls_from_json(const json& arr) {
  std::vector<ToolCall> out;
  if (!arr.is_array()) throw Error(Errc::BadType, "tool_calls", "expected array");
  for (const auto& c : arr) out.push_back(tool_call_from_json(c));
  return out;
}

// ---------------------------------------------------------------------------
// MCP <-> FC

struct FcFunction {
  std::string name;
  std::string description;
  ParamSchema parameters;
  bool operator==(const FcFunction&) const = default;
};

inline FcFunction mcp_to_fc(const ToolSpec& spec) { return FcFunction{spec.name, spec.description, spec.input_schema}; }

inline ToolSpec fc_to_mcp(const FcFunction& fn) {
  ToolSpec t;
  t.name = fn.name;
  t.description = fn.description;
  t.input_schema = fn.parameters;
  return t;
}

// {"type":"function","function":{"name","description","parameters"}}
inline json to_json(const FcFunction& fn) {
  json inner = json::object();
  inner["name"] = fn.name;
  inner["description"] = fn.description;
  inner["parameters"] = registry::schema_to_json(fn.parameters);
  json j = json::object();
  j["type"] = "function";
  j["function"] = std::move(inner);
  return j;
}

inline FcFunction fc_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadType, "$", "expected object");
  if (j.value("type", "") != "function") throw Error(Errc::InvalidValue, "type", "expected \"function\"");
  auto f = j.find("function");
  if (f == j.end() || !f->is_object()) throw Error(Errc::MissingField, "function");
  FcFunction fn;
  auto n = f->find("name");
  if (n == f->end() || !n->is_string()) throw Error(Errc::MissingField, "function.name");
  fn.name = n->get<std::string>();
  fn.description = f->value("description", "");
  if (auto p = f->find("parameters"); p != f->end())
    fn.parameters = registry::schema_from_json(*p, "function.parameters");
  return fn;
}

// ---------------------------------------------------------------------------
// Templates and prompt-mode rendering

// Replaces every `${key}` present in `vars` in a single pass; unknown placeholders are left intact.
inline std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '$' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      auto close = tmpl.find('}', i + 2);
      if (close != std::string_view::npos) {
        auto key = std::string(tmpl.substr(i + 2, close - i - 2));
        if (auto it = vars.find(key); it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

inline constexpr std::string_view kDefaultFormatInstruction =
    "[func_name1(params_name1=params_value1, params_name2=params_value2...), func_name2(params)]";

// Function definitions as rendered into the prompt: one {name, description, parameters} object per tool.
inline std::string functions_block(const std::vector<ToolSpec>& tools) {
  json arr = json::array();
  for (const auto& t : tools) arr.push_back(to_json(mcp_to_fc(t))["function"]);
  return tools.empty() ? std::string("[]") : arr.dump(2);
}

inline std::string render_prompt_mode(const std::vector<ToolSpec>& tools, std::string_view tmpl,
                                      std::string_view format_instruction = kDefaultFormatInstruction) {
  return substitute(tmpl, {{"functions", functions_block(tools)},
                           {"escaped_format_instruction", std::string(format_instruction)}});
}

// ---------------------------------------------------------------------------
// Model output parsing

struct NoCall {
  std::string text;
  bool operator==(const NoCall&) const = default;
};

struct ParseError {
  std::size_t position = 0;
  std::string reason;
  bool operator==(const ParseError&) const = default;
};

using ParseResult = std::variant<std::vector<ToolCall>, NoCall, ParseError>;

inline bool is_calls(const ParseResult& r) { return std::holds_alternative<std::vector<ToolCall>>(r); }
inline bool is_no_call(const ParseResult& r) { return std::holds_alternative<NoCall>(r); }
inline bool is_parse_error(const ParseResult& r) { return std::holds_alternative<ParseError>(r); }

namespace detail {

// Recursive-descent parser for bracketed call lists:
//   list    := '[' call (',' call)* ']'
//   call    := ident '(' (kwarg (',' kwarg)*)? ')'
//   kwarg   := ident '=' literal
//   literal := string | number | True | False | true | false | '[' (literal (',' literal)*)? ']'
class CallListParser {
 public:
  explicit CallListParser(std::string_view src) : s_(src) {}

  ParseResult parse() {
    std::vector<ToolCall> calls;
    skip_ws();
    while (pos_ < s_.size()) {
      if (!parse_list(calls)) return err_;
      skip_ws();
    }
    return calls;
  }

 private:
  bool fail(std::string reason) {
    err_ = ParseError{pos_, std::move(reason)};
    return false;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) return fail(std::string("expected '") + c + "'");
    ++pos_;
    return true;
  }

  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  }

  bool parse_ident(std::string& out) {
    skip_ws();
    if (pos_ >= s_.size() || !ident_start(s_[pos_])) return fail("expected identifier");
    auto start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    out = std::string(s_.substr(start, pos_ - start));
    return true;
  }

  bool parse_list(std::vector<ToolCall>& calls) {
    if (!expect('[')) return false;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') return fail("empty call list");
    while (true) {
      ToolCall call;
      if (!parse_call(call)) return false;
      calls.push_back(std::move(call));
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      return expect(']');
    }
  }

  bool parse_call(ToolCall& call) {
    if (!parse_ident(call.name)) return false;
    if (!expect('(')) return false;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ')') {
      ++pos_;
      return true;
    }
    while (true) {
      std::string key;
      if (!parse_ident(key)) return false;
      if (call.arguments.contains(key)) return fail("duplicate argument '" + key + "'");
      if (!expect('=')) return false;
      json value;
      if (!parse_literal(value)) return false;
      call.arguments[key] = std::move(value);
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      return expect(')');
    }
  }

  bool parse_literal(json& out) {
    skip_ws();
    if (pos_ >= s_.size()) return fail("expected literal");
    char c = s_[pos_];
    if (c == '\'' || c == '"') return parse_string(out);
    if (c == '[') return parse_array(out);
    if (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number(out);
    if (ident_start(c)) {
      auto start = pos_;
      while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      auto word = s_.substr(start, pos_ - start);
      if (word == "True" || word == "true") {
        out = true;
        return true;
      }
      if (word == "False" || word == "false") {
        out = false;
        return true;
      }
      pos_ = start;
      return fail("unsupported literal '" + std::string(word) + "'");
    }
    return fail(std::string("unexpected character '") + c + "'");
  }

  bool parse_string(json& out) {
    const char quote = s_[pos_++];
    std::string val;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        char e = s_[pos_++];
        switch (e) {
          case 'n': val.push_back('\n'); break;
          case 't': val.push_back('\t'); break;
          case 'r': val.push_back('\r'); break;
          default: val.push_back(e); break;
        }
      } else {
        val.push_back(c);
      }
    }
    if (pos_ >= s_.size()) return fail("unterminated string");
    ++pos_;
    out = std::move(val);
    return true;
  }

  bool parse_number(json& out) {
    auto start = pos_;
    if (s_[pos_] == '-' || s_[pos_] == '+') ++pos_;
    bool digits = false, is_float = false;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digits = true;
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        if ((c == 'e' || c == 'E') && pos_ + 1 < s_.size() && (s_[pos_ + 1] == '-' || s_[pos_ + 1] == '+')) ++pos_;
      } else {
        break;
      }
      ++pos_;
    }
    if (!digits) {
      pos_ = start;
      return fail("malformed number");
    }
    std::string text(s_.substr(start, pos_ - start));
    if (text.front() == '+') text.erase(0, 1);
    try {
      out = json::parse(text);
    } catch (const json::parse_error&) {
      pos_ = start;
      return fail("malformed number");
    }
    if (!is_float && !out.is_number_integer()) return fail("malformed number");
    return true;
  }

  bool parse_array(json& out) {
    ++pos_;
    out = json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return true;
    }
    while (true) {
      json v;
      if (!parse_literal(v)) return false;
      out.push_back(std::move(v));
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      return expect(']');
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  ParseError err_;
};

inline bool looks_like_call_list(std::string_view t) {
  if (t.empty() || t.front() != '[') return false;
  std::size_t i = 1;
  while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
  if (i >= t.size() || !(std::isalpha(static_cast<unsigned char>(t[i])) || t[i] == '_')) return false;
  while (i < t.size() && (std::isalnum(static_cast<unsigned char>(t[i])) || t[i] == '_' || t[i] == '.' || t[i] == '-')) ++i;
  while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
  return i < t.size() && t[i] == '(';
}

inline ParseResult parse_fc(std::string_view raw) {
  static constexpr std::string_view kOpen = "<tool_call>";
  static constexpr std::string_view kClose = "</tool_call>";
  auto first = raw.find(kOpen);
  if (first == std::string_view::npos) {
    if (raw.find(kClose) != std::string_view::npos) return ParseError{raw.find(kClose), "closing tag without opening tag"};
    return NoCall{std::string(raw)};
  }
  std::vector<ToolCall> calls;
  std::size_t pos = first;
  while (pos != std::string_view::npos) {
    auto body_start = pos + kOpen.size();
    auto close = raw.find(kClose, body_start);
    if (close == std::string_view::npos) return ParseError{pos, "unterminated <tool_call> block"};
    auto body = trim(raw.substr(body_start, close - body_start));
    if (body.find(kOpen) != std::string_view::npos) return ParseError{pos, "nested <tool_call> block"};
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      return ParseError{body_start + e.byte, "invalid JSON in <tool_call> block"};
    }
    try {
      calls.push_back(tool_call_from_json(j));
    } catch (const Error& e) {
      return ParseError{body_start, e.what()};
    }
    pos = raw.find(kOpen, close + kClose.size());
  }
  return calls;
}

}  // namespace detail

// Total: every input yields calls, no_call, or a ParseError.
inline ParseResult parse_tool_calls(std::string_view raw, CallMode mode) {
  if (mode == CallMode::Fc) return detail::parse_fc(raw);
  auto t = trim(raw);
  if (!detail::looks_like_call_list(t)) return NoCall{std::string(raw)};
  auto offset = static_cast<std::size_t>(t.data() - raw.data());
  auto r = detail::CallListParser(t).parse();
  if (auto* e = std::get_if<ParseError>(&r)) e->position += offset;
  return r;
}

// Inverse of the prompt-mode grammar; used to render gold calls as model-style text.
inline std::string render_call_list(const std::vector<ToolCall>& calls) {
  auto literal = [](const json& v, auto&& self) -> std::string {
    if (v.is_string()) {
      std::string out = "'";
      for (char c : v.get<std::string>()) {
        if (c == '\'' || c == '\\') out.push_back('\\');
        out.push_back(c);
      }
      return out + "'";
    }
    if (v.is_boolean()) return v.get<bool>() ? "True" : "False";
    if (v.is_array()) {
      std::string out = "[";
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + self(v[i], self);
      return out + "]";
    }
    if (v.is_number()) return v.dump();
    throw Error(Errc::BadType, "argument", "value cannot be written in call-list syntax: " + v.dump());
  };
  std::string out = "[";
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (i) out += ", ";
    out += calls[i].name + "(";
    std::size_t k = 0;
    for (auto it = calls[i].arguments.begin(); it != calls[i].arguments.end(); ++it, ++k)
      out += (k ? ", " : "") + it.key() + "=" + literal(it.value(), literal);
    out += ")";
  }
  return out + "]";
}

// FC-mode rendering, one <tool_call> block per call.
inline std::string render_fc_calls(const std::vector<ToolCall>& calls) {
  std::string out;
  for (const auto& c : calls) {
    if (!out.empty()) out += "\n";
    out += "<tool_call>\n" + to_json(c).dump() + "\n</tool_call>";
  }
  return out;
}

inline std::string render_calls(const std::vector<ToolCall>& calls, CallMode mode) {
  return mode == CallMode::Fc ? render_fc_calls(calls) : render_call_list(calls);
}

}  // namespace fintool::codec
