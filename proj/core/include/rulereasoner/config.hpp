#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulereasoner/dataset.hpp"
#include "rulereasoner/sampler.hpp"
#include "rulereasoner/simenv.hpp"

namespace rulereasoner {

// Config problems carry the dotted field path they refer to.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// A TOML subset: [section] / [section.sub] headers, `key = value` lines,
// # comments. Values are "strings", numbers, true/false, or flat [arrays] of
// those. Leaves are addressed by dotted path and keep file order.
class ConfigTree {
 public:
  struct Value {
    enum class Kind { string, number, boolean, array };
    Kind kind = Kind::string;
    std::string scalar;              // unquoted text for scalars
    std::vector<std::string> items;  // unquoted items for arrays
  };

  static ConfigTree parse(std::istream& in, std::string_view source = "<config>");
  static ConfigTree parse(std::string_view text, std::string_view source = "<config>");
  static ConfigTree load(const std::filesystem::path& path);

  // Parses `raw` as a TOML value; bare words are taken as strings.
  void set(const std::string& path, std::string_view raw);
  // Applies "path=value".
  void apply_override(std::string_view assignment);

  bool has(const std::string& path) const;
  const Value& at(const std::string& path) const;

  std::string get_string(const std::string& path) const;
  double get_double(const std::string& path) const;
  std::int64_t get_int(const std::string& path) const;
  bool get_bool(const std::string& path) const;
  std::vector<std::string> get_list(const std::string& path) const;

  std::optional<std::string> string_or(const std::string& path) const;

  // Distinct child names directly under `prefix` in first-appearance order,
  // e.g. children("domain") -> {"easy_a", "hard"}.
  std::vector<std::string> children(const std::string& prefix) const;

  const std::vector<std::pair<std::string, Value>>& entries() const { return entries_; }

  // Canonical text: one `path = value` line per leaf, in order.
  std::string to_text() const;

 private:
  Value* find(const std::string& path);
  const Value* find(const std::string& path) const;

  std::vector<std::pair<std::string, Value>> entries_;
};

std::string format_value(const ConfigTree::Value& v);

struct RunConfig {
  EnvConfig env;
  std::vector<std::uint64_t> seeds;
  int save_interval = 50;
  double target = 0.9;
  std::vector<Strategy> strategies;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> val_path;
};

// Required leaves: sampler.{alpha,tau,floor_epsilon,batch_size,strategy},
// grpo.{clip_eps,learning_rate,group_size}, run.{total_steps,seed}, and either
// data.train_path or at least one [domain.<id>] section.
RunConfig run_config_from_tree(const ConfigTree& tree);

// data.seed plus [domain.<id>] sections.
SynthSpec synth_spec_from_tree(const ConfigTree& tree);

}  // namespace rulereasoner
