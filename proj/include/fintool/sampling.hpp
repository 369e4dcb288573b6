#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fintool/core.hpp"

namespace fintool::codec {

// (round type, reply type, pattern, tool context), e.g. ("ST", "Tool Call", "Single", "Single-tool").
struct Category {
  std::string round_type;
  std::string reply_type;
  std::string pattern;
  std::string tool_context;

  auto operator<=>(const Category&) const = default;
  std::string key() const { return round_type + "|" + reply_type + "|" + pattern + "|" + tool_context; }
};

inline json to_json(const Category& c) {
  json j = json::object();
  j["round_type"] = c.round_type;
  j["reply_type"] = c.reply_type;
  j["pattern"] = c.pattern;
  j["tool_context"] = c.tool_context;
  return j;
}

inline Category category_from_json(const json& j, const std::string& path) {
  Category c;
  auto field = [&](const char* k) {
    auto it = j.find(k);
    if (it == j.end() || !it->is_string()) throw Error(Errc::MissingField, path + "." + k);
    return it->get<std::string>();
  };
  c.round_type = field("round_type");
  c.reply_type = field("reply_type");
  c.pattern = field("pattern");
  c.tool_context = field("tool_context");
  return c;
}

struct LabeledItem {
  std::string mode;  // retrieval environment
  Category category;
  std::size_t turns = 0;
  json payload;  // the original corpus line
};

// Reads labels from {"labels": {mode, round_type, reply_type, pattern, tool_context, num_turns?}, ...}.
// Without num_turns, the turn count is the number of user messages in "turns" (or its length if untyped).
inline LabeledItem labeled_item_from_json(const json& j, std::size_t line = 0) {
  const std::string path = "line " + std::to_string(line) + ".labels";
  auto l = j.find("labels");
  if (l == j.end() || !l->is_object()) throw Error(Errc::MissingField, path);
  LabeledItem it;
  auto m = l->find("mode");
  if (m == l->end() || !m->is_string()) throw Error(Errc::MissingField, path + ".mode");
  it.mode = m->get<std::string>();
  it.category = category_from_json(*l, path);
  if (auto n = l->find("num_turns"); n != l->end()) {
    if (!n->is_number_unsigned() && !n->is_number_integer()) throw Error(Errc::BadType, path + ".num_turns");
    it.turns = n->get<std::size_t>();
  } else if (auto t = j.find("turns"); t != j.end() && t->is_array()) {
    std::size_t users = 0;
    bool typed = false;
    for (const auto& turn : *t) {
      if (turn.is_object() && turn.contains("role")) {
        typed = true;
        if (turn["role"] == "user") ++users;
      }
    }
    it.turns = typed ? users : t->size();
  }
  it.payload = j;
  return it;
}

struct SamplingQuota {
  // Retrieval mode -> fraction, in file order.
  std::vector<std::pair<std::string, double>> stage1;
  struct Cell {
    Category category;
    std::optional<std::size_t> count;
    std::optional<double> fraction;
  };
  std::vector<Cell> stage2;

  bool absolute() const { return !stage2.empty() && stage2.front().count.has_value(); }
  std::size_t absolute_total() const {
    std::size_t s = 0;
    for (const auto& c : stage2) s += c.count.value_or(0);
    return s;
  }
};

inline SamplingQuota default_stage1_quota() {
  SamplingQuota q;
  q.stage1 = {{"static", 1.0 / 3.0}, {"vector", 1.0 / 3.0}, {"graph_enhanced", 1.0 / 3.0}};
  return q;
}

inline void validate_quota(const SamplingQuota& q) {
  if (q.stage1.empty()) throw Error(Errc::InvalidConfig, "stage1", "at least one retrieval mode is required");
  double sum = 0.0;
  for (const auto& [mode, f] : q.stage1) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw Error(Errc::InvalidValue, "stage1." + mode, "fraction must be >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::InvalidValue, "stage1", "fractions must sum to 1");
  bool counts = false, fractions = false;
  for (const auto& c : q.stage2) {
    if (c.count.has_value() == c.fraction.has_value())
      throw Error(Errc::InvalidValue, "stage2." + c.category.key(), "exactly one of count or fraction");
    counts |= c.count.has_value();
    fractions |= c.fraction.has_value();
    if (c.fraction && (!(*c.fraction >= 0.0) || !std::isfinite(*c.fraction)))
      throw Error(Errc::InvalidValue, "stage2." + c.category.key(), "fraction must be >= 0");
  }
  if (counts && fractions) throw Error(Errc::InvalidValue, "stage2", "cannot mix counts and fractions");
}

// {"stage1": {mode: fraction, ...}, "stage2": [{round_type, reply_type, pattern, tool_context, count|fraction}, ...]}
inline SamplingQuota quota_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::BadType, "$", "quota must be an object");
  SamplingQuota q;
  if (auto s1 = j.find("stage1"); s1 != j.end()) {
    if (!s1->is_object()) throw Error(Errc::BadType, "stage1");
    for (auto it = s1->begin(); it != s1->end(); ++it) {
      if (!it.value().is_number()) throw Error(Errc::BadType, "stage1." + it.key());
      q.stage1.emplace_back(it.key(), it.value().get<double>());
    }
  } else {
    q.stage1 = default_stage1_quota().stage1;
  }
  if (auto s2 = j.find("stage2"); s2 != j.end()) {
    if (!s2->is_array()) throw Error(Errc::BadType, "stage2");
    for (std::size_t i = 0; i < s2->size(); ++i) {
      const auto& row = (*s2)[i];
      const std::string path = "stage2[" + std::to_string(i) + "]";
      SamplingQuota::Cell cell{category_from_json(row, path), std::nullopt, std::nullopt};
      if (auto c = row.find("count"); c != row.end()) {
        if (!c->is_number_integer() || c->get<long long>() < 0) throw Error(Errc::InvalidValue, path + ".count");
        cell.count = c->get<std::size_t>();
      }
      if (auto f = row.find("fraction"); f != row.end()) {
        if (!f->is_number()) throw Error(Errc::BadType, path + ".fraction");
        cell.fraction = f->get<double>();
      }
      q.stage2.push_back(std::move(cell));
    }
  }
  validate_quota(q);
  return q;
}

struct Shortfall {
  std::string mode;
  Category category;
  std::size_t requested = 0;
  std::size_t available = 0;
};

struct SampleResult {
  std::vector<std::size_t> indices;  // into the corpus, ascending
  std::map<std::string, std::size_t> per_mode;
  std::vector<Shortfall> shortfalls;
};

// {"<mode>|<round>|<reply>|<pattern>|<context>": {requested, available}}
inline json shortfall_report(const SampleResult& r) {
  json j = json::object();
  for (const auto& s : r.shortfalls) {
    json e = json::object();
    e["requested"] = s.requested;
    e["available"] = s.available;
    j[s.mode + "|" + s.category.key()] = std::move(e);
  }
  return j;
}

// Per-cell targets: (mode, optional category) -> count.
inline std::vector<std::tuple<std::string, std::optional<Category>, std::size_t>> plan_cells(
    const SamplingQuota& quota, std::size_t target_size) {
  std::vector<double> mode_w;
  for (const auto& [m, f] : quota.stage1) mode_w.push_back(f);
  std::vector<std::tuple<std::string, std::optional<Category>, std::size_t>> cells;

  if (quota.stage2.empty()) {
    auto per_mode = largest_remainder(target_size, mode_w);
    for (std::size_t m = 0; m < quota.stage1.size(); ++m) cells.emplace_back(quota.stage1[m].first, std::nullopt, per_mode[m]);
    return cells;
  }
  if (quota.absolute()) {
    // Each category's absolute count is split across modes by the stage-1 fractions.
    for (std::size_t m = 0; m < quota.stage1.size(); ++m)
      for (const auto& c : quota.stage2) cells.emplace_back(quota.stage1[m].first, c.category, 0);
    for (std::size_t ci = 0; ci < quota.stage2.size(); ++ci) {
      auto split = largest_remainder(*quota.stage2[ci].count, mode_w);
      for (std::size_t m = 0; m < quota.stage1.size(); ++m) std::get<2>(cells[m * quota.stage2.size() + ci]) = split[m];
    }
    return cells;
  }
  std::vector<double> cat_w;
  for (const auto& c : quota.stage2) cat_w.push_back(*c.fraction);
  auto per_mode = largest_remainder(target_size, mode_w);
  for (std::size_t m = 0; m < quota.stage1.size(); ++m) {
    auto split = largest_remainder(per_mode[m], cat_w);
    for (std::size_t ci = 0; ci < quota.stage2.size(); ++ci)
      cells.emplace_back(quota.stage1[m].first, quota.stage2[ci].category, split[ci]);
  }
  return cells;
}

// Two-stage stratified sampling. With absolute stage-2 counts the target is their sum.
// Underfull cells take everything available and are reported; nothing is substituted.
inline SampleResult stratified_sample(const std::vector<LabeledItem>& corpus, const SamplingQuota& quota,
                                      std::size_t target_size, std::uint64_t seed) {
  validate_quota(quota);
  SampleResult r;
  for (const auto& [mode, cat, want] : plan_cells(quota, quota.absolute() ? quota.absolute_total() : target_size)) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus[i].mode != mode) continue;
      if (cat && corpus[i].category != *cat) continue;
      pool.push_back(i);
    }
    Rng rng(derive_seed(seed, mode + "|" + (cat ? cat->key() : std::string("*"))));
    rng.shuffle(pool);
    const std::size_t take = std::min(want, pool.size());
    if (pool.size() < want) r.shortfalls.push_back({mode, cat.value_or(Category{"*", "*", "*", "*"}), want, pool.size()});
    r.indices.insert(r.indices.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    r.per_mode[mode] += take;
  }
  std::sort(r.indices.begin(), r.indices.end());
  return r;
}

struct StatsRow {
  Category category;
  std::size_t count = 0;
  double percentage = 0.0;
};

struct DatasetStats {
  std::size_t total = 0;
  double avg_turns = 0.0;
  std::vector<StatsRow> rows;  // descending count, then category
  std::map<std::string, std::size_t> per_mode;
};

inline DatasetStats dataset_stats(const std::vector<LabeledItem>& corpus) {
  DatasetStats s;
  s.total = corpus.size();
  std::map<Category, std::size_t> counts;
  Rational turns = 0;
  for (const auto& it : corpus) {
    ++counts[it.category];
    ++s.per_mode[it.mode];
    turns += Rational(static_cast<long long>(it.turns));
  }
  if (s.total) s.avg_turns = to_double(turns / Rational(static_cast<long long>(s.total)));
  for (const auto& [c, n] : counts) {
    double pct = to_double(Rational(static_cast<long long>(n)) * 100 / Rational(static_cast<long long>(s.total)));
    s.rows.push_back({c, n, pct});
  }
  std::stable_sort(s.rows.begin(), s.rows.end(), [](const StatsRow& a, const StatsRow& b) { return a.count > b.count; });
  return s;
}

inline json to_json(const DatasetStats& s) {
  json j = json::object();
  j["total"] = s.total;
  j["avg_turns"] = s.avg_turns;
  json rows = json::array();
  for (const auto& r : s.rows) {
    json row = to_json(r.category);
    row["count"] = r.count;
    row["percentage"] = r.percentage;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  json modes = json::object();
  for (const auto& [m, n] : s.per_mode) modes[m] = n;
  j["per_mode"] = std::move(modes);
  return j;
}

inline std::string render_stats_table(const DatasetStats& s) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-14s %-9s %-12s %7s %8s\n", "Round", "Reply", "Pattern", "Context", "Count", "Pct");
  out += buf;
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof buf, "%-6s %-14s %-9s %-12s %7zu %7.2f%%\n", r.category.round_type.c_str(),
                  r.category.reply_type.c_str(), r.category.pattern.c_str(), r.category.tool_context.c_str(), r.count,
                  r.percentage);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "Total %zu, avg turns %.2f\n", s.total, s.avg_turns);
  out += buf;
  return out;
}

}  // namespace fintool::codec
