#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "fintool/fintool.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using fintool::json;

inline fs::path data_dir() { return fs::path(FINTOOL_TEST_DATA_DIR); }
inline fs::path data(const std::string& rel) { return data_dir() / rel; }

inline json read_json(const std::string& rel) { return json::parse(fintool::io::read_file(data(rel))); }
inline std::vector<json> read_jsonl(const std::string& rel) { return fintool::io::read_jsonl(data(rel)); }
inline std::string read_text(const std::string& rel) { return fintool::io::read_file(data(rel)); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("fintool-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline fintool::registry::Library load_library(const std::string& rel) {
  std::vector<fintool::registry::ToolSpec> tools;
  for (const auto& r : read_jsonl(rel)) tools.push_back(fintool::registry::tool_from_json(r));
  return fintool::registry::Library(std::move(tools));
}

inline fintool::registry::ToolSpec string_tool(const std::string& name, std::vector<std::string> params,
                                               std::vector<std::string> required) {
  json props = json::object();
  for (const auto& p : params) props[p] = {{"type", "string"}, {"description", p + " value"}};
  json j = {{"name", name}, {"description", "tool " + name},
            {"inputSchema", {{"type", "object"}, {"properties", props}, {"required", required}}}};
  return fintool::registry::tool_from_json(j);
}

// Scoring judge returning fixed values and counting every call.
class CountingJudge : public fintool::eval::ScoringJudge {
 public:
  double k = 10;
  double x = 10;
  double y = 10;
  bool ci = true;
  int calls = 0;

  double select_score(const fintool::eval::TurnContext&) override {
    ++calls;
    return k;
  }
  std::vector<fintool::eval::ParamJudgement> param_scores(const fintool::eval::TurnContext& ctx) override {
    ++calls;
    std::vector<fintool::eval::ParamJudgement> out;
    for (const auto& c : ctx.predicted) {
      fintool::eval::ParamJudgement p{c.name, x, {}};
      for (auto it = c.arguments.begin(); it != c.arguments.end(); ++it) p.y.emplace_back(it.key(), y);
      out.push_back(p);
    }
    return out;
  }
  bool confirms_clarification(const fintool::eval::EvalInstance&, std::string_view) override {
    ++calls;
    return ci;
  }
};

}  // namespace fixtures
