#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "fintool/core.hpp"
#include "fintool/tool_registry.hpp"

namespace fintool::index {

using registry::ToolSpec;

struct EmbeddingVector {
  std::vector<double> values;

  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {
    for (double x : values)
      if (!std::isfinite(x)) throw Error(Errc::EncoderFailure, "values", "non-finite embedding component");
  }

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

inline double norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

// Cosine similarity; zero-norm inputs are an error rather than NaN.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    throw Error(Errc::DimensionMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(Errc::ZeroVector, "cosine", "zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EmbeddingVector encode(std::string_view text) const = 0;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
};

// Reference backend: token counts hashed into `dim` buckets, then l2-normalized.
// Text without tokens encodes to the zero vector.
class HashedBowEncoder final : public Encoder {
 public:
  explicit HashedBowEncoder(std::size_t dim = 256) : dim_(dim) {
    if (dim_ == 0) throw Error(Errc::InvalidConfig, "dim", "encoder dimension must be positive");
  }

  EmbeddingVector encode(std::string_view text) const override {
    std::vector<double> v(dim_, 0.0);
    for (const auto& t : tokenize(text)) v[bucket(t)] += 1.0;
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n > 0.0) {
      n = std::sqrt(n);
      for (double& x : v) x /= n;
    }
    return EmbeddingVector(std::move(v));
  }

  std::string id() const override { return "hashed-bow-fnv1a-" + std::to_string(dim_); }
  std::size_t dim() const override { return dim_; }
  std::size_t bucket(std::string_view token) const { return static_cast<std::size_t>(fnv1a64(token) % dim_); }

 private:
  std::size_t dim_;
};

// Text that represents a tool in embedding space: name, one space, description.
inline std::string embedding_text(const ToolSpec& spec) { return spec.name + " " + spec.description; }

inline EmbeddingVector embed_tool(const ToolSpec& spec, const Encoder& encoder) {
  auto v = encoder.encode(embedding_text(spec));
  if (v.dim() != encoder.dim())
    throw Error(Errc::EncoderFailure, spec.name, "encoder returned dimension " + std::to_string(v.dim()));
  return v;
}

struct ScoredTool {
  std::string name;
  double score = 0.0;
  bool operator==(const ScoredTool&) const = default;
};

class VectorIndex {
 public:
  struct Entry {
    std::string name;
    EmbeddingVector vector;
    double norm = 0.0;
  };

  VectorIndex(std::string encoder_id, std::size_t dim) : encoder_id_(std::move(encoder_id)), dim_(dim) {}

  void add(std::string name, EmbeddingVector v) {
    if (v.dim() != dim_) throw Error(Errc::DimensionMismatch, name);
    if (!names_.insert(name).second) throw Error(Errc::InvalidValue, name, "duplicate tool in index");
    double n = norm(v);
    if (n == 0.0) throw Error(Errc::ZeroVector, name, "tool embeds to the zero vector");
    entries_.push_back(Entry{std::move(name), std::move(v), n});
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const std::string& encoder_id() const noexcept { return encoder_id_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::string encoder_id_;
  std::size_t dim_;
  std::vector<Entry> entries_;
  std::unordered_set<std::string> names_;
};

inline VectorIndex build_index(const registry::Library& library, const Encoder& encoder) {
  VectorIndex idx(encoder.id(), encoder.dim());
  for (const auto& t : library.tools()) idx.add(t.name, embed_tool(t, encoder));
  return idx;
}

// Exact scan. Descending cosine, ties by ascending name; returns min(k, |index|) entries.
inline std::vector<ScoredTool> top_k(const VectorIndex& index, const EmbeddingVector& query, std::size_t k) {
  if (k == 0) throw Error(Errc::InvalidValue, "k", "k must be >= 1");
  if (query.dim() != index.dim())
    throw Error(Errc::DimensionMismatch, std::to_string(query.dim()) + " vs " + std::to_string(index.dim()));
  const double qn = norm(query);
  if (qn == 0.0) throw Error(Errc::ZeroVector, "query", "zero-norm query vector");
  std::vector<ScoredTool> scored;
  scored.reserve(index.size());
  for (const auto& e : index.entries()) {
    double dot = 0.0;
    for (std::size_t i = 0; i < query.dim(); ++i) dot += query.values[i] * e.vector.values[i];
    scored.push_back({e.name, std::clamp(dot / (qn * e.norm), -1.0, 1.0)});
  }
  auto better = [](const ScoredTool& a, const ScoredTool& b) {
    return a.score != b.score ? a.score > b.score : a.name < b.name;
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  scored.resize(n);
  return scored;
}

// Index file: header line {kind, encoder_id, dim, count}, then {name, dim, values} per line.
inline std::vector<json> index_to_jsonl(const VectorIndex& idx) {
  std::vector<json> rows;
  json header = json::object();
  header["kind"] = "vector_index";
  header["encoder_id"] = idx.encoder_id();
  header["dim"] = idx.dim();
  header["count"] = idx.size();
  rows.push_back(std::move(header));
  for (const auto& e : idx.entries()) {
    json r = json::object();
    r["name"] = e.name;
    r["dim"] = e.vector.dim();
    r["values"] = e.vector.values;
    rows.push_back(std::move(r));
  }
  return rows;
}

// Refuses files written by a different encoder than the one queries will use.
inline VectorIndex index_from_jsonl(const std::vector<json>& rows, const std::string& expected_encoder_id) {
  if (rows.empty() || rows.front().value("kind", "") != "vector_index")
    throw Error(Errc::MissingField, "header", "index file must start with a vector_index header");
  const auto& h = rows.front();
  auto enc = h.at("encoder_id").get<std::string>();
  if (enc != expected_encoder_id)
    throw Error(Errc::EncoderMismatch, enc, "index was built with a different encoder than '" + expected_encoder_id + "'");
  VectorIndex idx(enc, h.at("dim").get<std::size_t>());
  for (std::size_t i = 1; i < rows.size(); ++i)
    idx.add(rows[i].at("name").get<std::string>(), EmbeddingVector(rows[i].at("values").get<std::vector<double>>()));
  if (idx.size() != h.value("count", idx.size())) throw Error(Errc::InvalidValue, "count", "entry count mismatch");
  return idx;
}

}  // namespace fintool::index
