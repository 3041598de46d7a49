#include "rulereasoner/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace rulereasoner {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool is_key(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.';
  });
}

bool parses_as_number(std::string_view s) {
  if (s.empty()) return false;
  std::string tmp(s);
  char* end = nullptr;
  errno = 0;
  std::strtod(tmp.c_str(), &end);
  return errno == 0 && end == tmp.c_str() + tmp.size();
}

// Removes a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(std::string_view tok, const std::string& where) {
  tok = trim(tok);
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
      if (tok[i] == '\\' && i + 2 < tok.size()) {
        ++i;
        out += tok[i] == 'n' ? '\n' : tok[i] == 't' ? '\t' : tok[i];
      } else {
        out += tok[i];
      }
    }
    return out;
  }
  if (!tok.empty() && tok.front() == '"') throw ConfigError(where, "unterminated string");
  return std::string(tok);
}

ConfigTree::Value parse_value(std::string_view raw, const std::string& where, bool bare_strings) {
  raw = trim(raw);
  ConfigTree::Value v;
  if (raw.empty()) throw ConfigError(where, "missing value");
  if (raw.front() == '[') {
    if (raw.back() != ']') throw ConfigError(where, "unterminated array");
    v.kind = ConfigTree::Value::Kind::array;
    auto body = trim(raw.substr(1, raw.size() - 2));
    bool quoted = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= body.size(); ++i) {
      if (i < body.size() && body[i] == '"') quoted = !quoted;
      if (i == body.size() || (body[i] == ',' && !quoted)) {
        auto item = trim(body.substr(start, i - start));
        if (!item.empty()) v.items.push_back(unquote(item, where));
        start = i + 1;
      }
    }
    return v;
  }
  if (raw.front() == '"') {
    v.kind = ConfigTree::Value::Kind::string;
    v.scalar = unquote(raw, where);
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = ConfigTree::Value::Kind::boolean;
    v.scalar = std::string(raw);
    return v;
  }
  if (parses_as_number(raw)) {
    v.kind = ConfigTree::Value::Kind::number;
    v.scalar = std::string(raw);
    return v;
  }
  if (!bare_strings) throw ConfigError(where, "cannot parse value '" + std::string(raw) + "'");
  v.kind = ConfigTree::Value::Kind::string;
  v.scalar = std::string(raw);
  return v;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_value(const ConfigTree::Value& v) {
  using K = ConfigTree::Value::Kind;
  switch (v.kind) {
    case K::string: return quote(v.scalar);
    case K::number:
    case K::boolean: return v.scalar;
    case K::array: {
      std::string out = "[";
      for (std::size_t i = 0; i < v.items.size(); ++i) {
        if (i) out += ", ";
        out += parses_as_number(v.items[i]) ? v.items[i] : quote(v.items[i]);
      }
      return out + "]";
    }
  }
  return {};
}

ConfigTree ConfigTree::parse(std::istream& in, std::string_view source) {
  ConfigTree tree;
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    auto text = trim(strip_comment(line));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where, "malformed section header");
      auto name = trim(text.substr(1, text.size() - 2));
      if (!is_key(name)) throw ConfigError(where, "bad section name '" + std::string(name) + "'");
      section = std::string(name);
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where, "expected key = value");
    auto key = trim(text.substr(0, eq));
    if (!is_key(key)) throw ConfigError(where, "bad key '" + std::string(key) + "'");
    const std::string path = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (tree.find(path)) throw ConfigError(path, "defined twice (" + where + ")");
    try {
      tree.entries_.emplace_back(path, parse_value(text.substr(eq + 1), path, false));
    } catch (const ConfigError& e) {
      throw ConfigError(path, std::string(e.what()).substr(path.size() + 2) + " (" + where + ")");
    }
  }
  return tree;
}

ConfigTree ConfigTree::parse(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  return parse(in, source);
}

ConfigTree ConfigTree::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config " + path.string());
  return parse(in, path.string());
}

void ConfigTree::set(const std::string& path, std::string_view raw) {
  if (!is_key(path)) throw ConfigError(path, "bad override path");
  auto v = parse_value(raw, path, true);
  if (auto* existing = find(path)) {
    *existing = std::move(v);
  } else {
    entries_.emplace_back(path, std::move(v));
  }
}

void ConfigTree::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("", "override '" + std::string(assignment) + "' is not path=value");
  set(std::string(trim(assignment.substr(0, eq))), assignment.substr(eq + 1));
}

ConfigTree::Value* ConfigTree::find(const std::string& path) {
  for (auto& [k, v] : entries_)
    if (k == path) return &v;
  return nullptr;
}

const ConfigTree::Value* ConfigTree::find(const std::string& path) const {
  for (const auto& [k, v] : entries_)
    if (k == path) return &v;
  return nullptr;
}

bool ConfigTree::has(const std::string& path) const { return find(path) != nullptr; }

const ConfigTree::Value& ConfigTree::at(const std::string& path) const {
  const auto* v = find(path);
  if (!v) throw ConfigError(path, "missing required field");
  return *v;
}

std::string ConfigTree::get_string(const std::string& path) const {
  const auto& v = at(path);
  if (v.kind == Value::Kind::array) throw ConfigError(path, "expected a scalar");
  return v.scalar;
}

double ConfigTree::get_double(const std::string& path) const {
  const auto& v = at(path);
  if (v.kind != Value::Kind::number) throw ConfigError(path, "expected a number");
  return std::strtod(v.scalar.c_str(), nullptr);
}

std::int64_t ConfigTree::get_int(const std::string& path) const {
  const auto& v = at(path);
  if (v.kind != Value::Kind::number) throw ConfigError(path, "expected an integer");
  char* end = nullptr;
  const auto x = std::strtoll(v.scalar.c_str(), &end, 10);
  if (end != v.scalar.c_str() + v.scalar.size()) throw ConfigError(path, "expected an integer");
  return x;
}

bool ConfigTree::get_bool(const std::string& path) const {
  const auto& v = at(path);
  if (v.kind != Value::Kind::boolean) throw ConfigError(path, "expected true or false");
  return v.scalar == "true";
}

std::vector<std::string> ConfigTree::get_list(const std::string& path) const {
  const auto& v = at(path);
  if (v.kind == Value::Kind::array) return v.items;
  // A comma-separated scalar also reads as a list.
  std::vector<std::string> out;
  std::string_view s = v.scalar;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == ',') {
      auto item = trim(s.substr(start, i - start));
      if (!item.empty()) out.emplace_back(item);
      start = i + 1;
    }
  return out;
}

std::optional<std::string> ConfigTree::string_or(const std::string& path) const {
  if (!has(path)) return std::nullopt;
  return get_string(path);
}

std::vector<std::string> ConfigTree::children(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string head = prefix + ".";
  for (const auto& [k, v] : entries_) {
    if (!k.starts_with(head)) continue;
    auto rest = std::string_view(k).substr(head.size());
    auto child = std::string(rest.substr(0, rest.find('.')));
    if (std::find(out.begin(), out.end(), child) == out.end()) out.push_back(child);
  }
  return out;
}

std::string ConfigTree::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + format_value(v) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

namespace {

int get_int32(const ConfigTree& t, const std::string& path) {
  const auto x = t.get_int(path);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(path, "out of range");
  return static_cast<int>(x);
}

double opt_double(const ConfigTree& t, const std::string& path, double fallback) {
  return t.has(path) ? t.get_double(path) : fallback;
}

int opt_int(const ConfigTree& t, const std::string& path, int fallback) {
  return t.has(path) ? get_int32(t, path) : fallback;
}

std::uint64_t to_seed(const std::string& path, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const auto x = std::strtoull(text.c_str(), &end, 10);
  if (errno != 0 || text.empty() || end != text.c_str() + text.size() || text.front() == '-')
    throw ConfigError(path, "seed must be a non-negative integer");
  return x;
}

// Wraps a module validator so its message gets the config path of the
// offending section.
template <class F>
void checked(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(section, e.what());
  }
}

std::pair<GroupedDataset, GroupedDataset> split_holdout(const GroupedDataset& data, int per_domain) {
  GroupedDataset train, val;
  for (const auto& d : data.domains()) {
    const auto& b = data.bucket(d);
    if (static_cast<int>(b.size()) <= per_domain)
      throw ConfigError("run.validation_size",
                        "domain '" + d + "' has " + std::to_string(b.size()) +
                            " problems, too few to hold out " + std::to_string(per_domain));
    const auto cut = b.size() - static_cast<std::size_t>(per_domain);
    for (std::size_t i = 0; i < b.size(); ++i) (i < cut ? train : val).add(b[i]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace

SynthSpec synth_spec_from_tree(const ConfigTree& t) {
  SynthSpec spec;
  spec.seed = t.has("data.seed") ? to_seed("data.seed", t.get_string("data.seed")) : 0;
  for (const auto& id : t.children("domain")) {
    const std::string p = "domain." + id + ".";
    DomainSynthSpec d;
    d.id = id;
    d.problems = get_int32(t, p + "problems");
    d.depth_min = opt_int(t, p + "depth_min", 1);
    d.depth_max = opt_int(t, p + "depth_max", d.depth_min);
    d.n_qtypes = opt_int(t, p + "n_qtypes", 1);
    d.n_options = opt_int(t, p + "n_options", 0);
    d.distractor_rules = opt_int(t, p + "distractor_rules", 0);
    if (t.has(p + "rule_mode")) {
      try {
        d.rule_mode = rule_mode_from_string(t.get_string(p + "rule_mode"));
      } catch (const DatasetError& e) {
        throw ConfigError(p + "rule_mode", e.what());
      }
    }
    spec.domains.push_back(std::move(d));
  }
  if (spec.domains.empty()) throw ConfigError("domain", "no [domain.<id>] sections");
  checked("domain", [&] { validate(spec); });
  return spec;
}

RunConfig run_config_from_tree(const ConfigTree& t) {
  RunConfig rc;
  auto& env = rc.env;

  auto& s = env.sampler;
  s.alpha = t.get_double("sampler.alpha");
  s.tau = t.get_double("sampler.tau");
  s.floor_epsilon = t.get_double("sampler.floor_epsilon");
  s.batch_size = get_int32(t, "sampler.batch_size");
  s.r_target = opt_double(t, "sampler.r_target", 1.0);
  try {
    s.strategy = strategy_from_string(t.get_string("sampler.strategy"));
  } catch (const SamplerError& e) {
    throw ConfigError("sampler.strategy", e.what());
  }
  if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ConfigError("sampler.alpha", "must be in [0, 1]");
  if (!(s.tau > 0.0)) throw ConfigError("sampler.tau", "must be > 0");
  if (!(s.floor_epsilon >= 0.0)) throw ConfigError("sampler.floor_epsilon", "must be >= 0");
  if (s.batch_size < 1) throw ConfigError("sampler.batch_size", "must be >= 1");

  auto& g = env.grpo;
  g.clip_eps = t.get_double("grpo.clip_eps");
  g.learning_rate = t.get_double("grpo.learning_rate");
  g.group_size = get_int32(t, "grpo.group_size");
  if (!(g.clip_eps > 0.0 && g.clip_eps < 1.0)) throw ConfigError("grpo.clip_eps", "must be in (0, 1)");
  if (!(g.learning_rate > 0.0)) throw ConfigError("grpo.learning_rate", "must be > 0");
  if (g.group_size < 2) throw ConfigError("grpo.group_size", "must be >= 2");
  env.rollout_temperature = opt_double(t, "grpo.rollout_temperature", 0.8);
  if (!(env.rollout_temperature > 0.0))
    throw ConfigError("grpo.rollout_temperature", "must be > 0");

  env.total_steps = get_int32(t, "run.total_steps");
  if (env.total_steps < 1) throw ConfigError("run.total_steps", "must be >= 1");
  env.seed = to_seed("run.seed", t.get_string("run.seed"));
  env.validation_interval = opt_int(t, "run.validation_interval", 10);
  if (env.validation_interval < 1) throw ConfigError("run.validation_interval", "must be >= 1");
  env.validation_size = opt_int(t, "run.validation_size", 32);
  if (env.validation_size < 1) throw ConfigError("run.validation_size", "must be >= 1");
  env.slip_rate = opt_double(t, "run.slip_rate", 0.0);
  if (!(env.slip_rate >= 0.0 && env.slip_rate < 1.0)) throw ConfigError("run.slip_rate", "must be in [0, 1)");
  env.two_step_clip_test = t.has("run.two_step_clip_test") && t.get_bool("run.two_step_clip_test");
  rc.save_interval = opt_int(t, "run.save_interval", 50);
  if (rc.save_interval < 1) throw ConfigError("run.save_interval", "must be >= 1");

  env.eval.temperature = opt_double(t, "eval.temperature", 0.6);
  if (!(env.eval.temperature > 0.0)) throw ConfigError("eval.temperature", "must be > 0");
  if (t.has("eval.mode")) {
    try {
      env.eval.mode = eval_mode_from_string(t.get_string("eval.mode"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("eval.mode", e.what());
    }
  }

  if (t.has("run.seeds")) {
    for (const auto& x : t.get_list("run.seeds")) rc.seeds.push_back(to_seed("run.seeds", x));
    if (rc.seeds.empty()) throw ConfigError("run.seeds", "empty seed list");
  } else {
    rc.seeds.push_back(env.seed);
  }

  rc.target = opt_double(t, "compare.target", 0.9);
  if (t.has("compare.strategies")) {
    for (const auto& x : t.get_list("compare.strategies")) {
      try {
        rc.strategies.push_back(strategy_from_string(x));
      } catch (const SamplerError& e) {
        throw ConfigError("compare.strategies", e.what());
      }
    }
  }

  if (auto train = t.string_or("data.train_path")) {
    rc.train_path = *train;
    GroupedDataset loaded;
    try {
      loaded = load_dataset(*rc.train_path);
    } catch (const DatasetError& e) {
      throw ConfigError("data.train_path", e.what());
    }
    if (auto valp = t.string_or("data.val_path")) {
      rc.val_path = *valp;
      try {
        env.val_data = load_dataset(*rc.val_path);
      } catch (const DatasetError& e) {
        throw ConfigError("data.val_path", e.what());
      }
      env.train_data = std::move(loaded);
    } else {
      auto [tr, va] = split_holdout(loaded, env.validation_size);
      env.train_data = std::move(tr);
      env.val_data = std::move(va);
    }
  } else {
    env.synth = synth_spec_from_tree(t);
  }

  checked("run", [&] { validate(env); });
  return rc;
}

}  // namespace rulereasoner
