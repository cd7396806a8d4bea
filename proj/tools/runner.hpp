#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttech/core.hpp"

namespace ttech::cli {

using json = nlohmann::json;

/// Config error tied to a field path ("em.tol"); line is 0 when the field does not
/// appear in the config text (defaults, --set overrides).
struct FieldError : ConfigError {
  FieldError(const std::string& m, std::string f, int l) : ConfigError(m), field(std::move(f)), line(l) {}
  std::string field;
  int line;
};

class Section;

/// Typed access to a parsed config. Every value read (defaults included) is copied
/// into echo(); finish() rejects fields that were never read.
class Reader {
 public:
  Reader(json in, std::string text);

  Section root();
  void finish() const;
  const json& echo() const { return echo_; }

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const;
  int line_of(const std::string& field) const;

 private:
  friend class Section;
  struct Node {
    const json* in;
    json* echo;
    std::string path;
    std::set<std::string> used;
  };
  json in_, echo_;
  std::string text_;
  std::deque<Node> nodes_;
};

class Section {
 public:
  Section(Reader* r, size_t node) : r_(r), node_(node) {}

  bool has(const std::string& key) const;
  std::string field(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const;

  double number(const std::string& key, std::optional<double> def = std::nullopt);
  long long integer(const std::string& key, std::optional<long long> def = std::nullopt);
  std::uint64_t seed(const std::string& key, std::optional<std::uint64_t> def = std::nullopt);
  std::string text(const std::string& key, std::optional<std::string> def = std::nullopt);
  bool flag(const std::string& key, std::optional<bool> def = std::nullopt);
  Vec vec(const std::string& key, std::optional<Vec> def = std::nullopt);
  std::vector<std::string> texts(const std::string& key, std::optional<std::vector<std::string>> def = std::nullopt);
  /// Missing sections read as empty objects.
  Section sub(const std::string& key);
  /// Rejects unknown fields anywhere in the config; call once everything is read.
  void done() const { r_->finish(); }

 private:
  const json* raw(const std::string& key);
  Reader::Node& node() const { return r_->nodes_[node_]; }
  Reader* r_;
  size_t node_;
};

/// Parses JSON text; syntax errors become FieldError with the offending line.
json parse_config(const std::string& text, const std::string& source = "config");

/// Applies "a.b.c=value". The value is parsed as JSON when possible, otherwise taken
/// as a string.
void apply_override(json& cfg, const std::string& assignment);

/// Files of one run, by name. Content is fully determined by the config.
struct RunOutput {
  std::map<std::string, std::string> files;
};

const std::vector<std::string>& commands();

/// Runs a subcommand on a config (after overrides). `text` is the original config
/// text, used for line numbers in diagnostics. Writes nothing to disk.
RunOutput run(const std::string& command, const json& cfg, const std::string& text = "");

void write_output(const std::string& dir, const RunOutput& out);

/// {"error": kind, "message": ..., ["field", "line"]}
std::string error_json(const std::exception& e);

}  // namespace ttech::cli
