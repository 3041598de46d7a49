#include "rulereasoner/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rulereasoner/rng.hpp"

namespace rulereasoner {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 3> kBooleanLabels{"True", "False",
                                                         "Unknown"};

std::string mc_label(int index) {
  return std::string(1, static_cast<char>('A' + index));
}

bool is_boolean_key(std::string_view key) {
  return std::find(kBooleanLabels.begin(), kBooleanLabels.end(), key) !=
         kBooleanLabels.end();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool is_word(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '-' ||
           c == '_' || (c >= '0' && c <= '9');
  });
}

}  // namespace

std::string_view to_string(RuleMode mode) {
  return mode == RuleMode::explicit_rules ? "explicit" : "implicit";
}

RuleMode rule_mode_from_string(std::string_view text) {
  if (text == "explicit") return RuleMode::explicit_rules;
  if (text == "implicit") return RuleMode::implicit_rules;
  throw DatasetError("unknown rule_mode '" + std::string(text) + "'");
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate(const Problem& p) {
  if (p.id.empty()) throw DatasetError("problem has empty id");
  if (p.domain.empty()) throw DatasetError("problem " + p.id + ": empty domain");
  if (p.depth < 0 || p.depth > kMaxDepth)
    throw DatasetError("problem " + p.id + ": depth " + std::to_string(p.depth) +
                       " outside [0, 7]");
  if (p.qtype < 0) throw DatasetError("problem " + p.id + ": negative qtype");
  if (p.rule_mode == RuleMode::explicit_rules && p.rules.empty())
    throw DatasetError("problem " + p.id + ": explicit-rule problem without rules");
  if (p.multiple_choice()) {
    std::set<std::string> labels;
    for (const auto& o : p.options) {
      if (o.label.empty() || !labels.insert(o.label).second)
        throw DatasetError("problem " + p.id + ": empty or duplicate option label");
    }
    if (!labels.contains(p.answer_key))
      throw DatasetError("problem " + p.id + ": answer_key '" + p.answer_key +
                         "' is not an option label");
  } else if (!is_boolean_key(p.answer_key)) {
    throw DatasetError("problem " + p.id + ": boolean answer_key must be "
                       "True, False or Unknown, got '" + p.answer_key + "'");
  }
}

// ---------------------------------------------------------------------------
// GroupedDataset

void GroupedDataset::add(Problem p) {
  auto it = index_.find(p.domain);
  if (it == index_.end()) {
    it = index_.emplace(p.domain, domains_.size()).first;
    domains_.push_back(p.domain);
    buckets_.emplace_back();
  }
  buckets_[it->second].push_back(std::move(p));
}

const std::vector<Problem>& GroupedDataset::bucket(std::string_view domain) const {
  return buckets_[domain_index(domain)];
}

std::vector<Problem>& GroupedDataset::bucket(std::string_view domain) {
  return buckets_[domain_index(domain)];
}

bool GroupedDataset::contains(std::string_view domain) const {
  return index_.contains(std::string(domain));
}

std::size_t GroupedDataset::domain_index(std::string_view domain) const {
  auto it = index_.find(std::string(domain));
  if (it == index_.end())
    throw DatasetError("unknown domain '" + std::string(domain) + "'");
  return it->second;
}

std::size_t GroupedDataset::size() const {
  std::size_t n = 0;
  for (const auto& b : buckets_) n += b.size();
  return n;
}

bool GroupedDataset::operator==(const GroupedDataset& other) const {
  return domains_ == other.domains_ && buckets_ == other.buckets_;
}

// ---------------------------------------------------------------------------
// JSON-lines

std::string to_json_line(const Problem& p) {
  ojson j;
  j["id"] = p.id;
  j["domain"] = p.domain;
  j["rules"] = p.rules;
  j["facts"] = p.facts;
  j["question"] = p.question;
  if (p.options.empty()) {
    j["options"] = nullptr;
  } else {
    ojson opts = ojson::array();
    for (const auto& o : p.options) {
      ojson e;
      e["label"] = o.label;
      e["text"] = o.text;
      opts.push_back(std::move(e));
    }
    j["options"] = std::move(opts);
  }
  j["answer_key"] = p.answer_key;
  j["depth"] = p.depth;
  j["rule_mode"] = to_string(p.rule_mode);
  j["qtype"] = p.qtype;
  return j.dump();
}

Problem problem_from_json_line(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DatasetError("record is not a JSON object");
  Problem p;
  try {
    p.id = j.at("id").get<std::string>();
    p.domain = j.at("domain").get<std::string>();
    p.rules = j.at("rules").get<std::vector<std::string>>();
    p.facts = j.at("facts").get<std::vector<std::string>>();
    p.question = j.at("question").get<std::string>();
    const auto& opts = j.at("options");
    if (!opts.is_null()) {
      for (const auto& o : opts)
        p.options.push_back({o.at("label").get<std::string>(),
                             o.at("text").get<std::string>()});
    }
    p.answer_key = j.at("answer_key").get<std::string>();
    p.depth = j.at("depth").get<int>();
    p.rule_mode = rule_mode_from_string(j.at("rule_mode").get<std::string>());
    p.qtype = j.at("qtype").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("bad field: ") + e.what());
  }
  validate(p);
  return p;
}

GroupedDataset read_dataset(std::istream& in) {
  GroupedDataset data;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Problem p;
    try {
      p = problem_from_json_line(line);
    } catch (const DatasetError& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(p.id).second)
      throw DatasetError("line " + std::to_string(line_no) + ": duplicate id '" +
                         p.id + "'");
    data.add(std::move(p));
  }
  if (data.size() == 0) throw DatasetError("dataset is empty");
  return data;
}

GroupedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  try {
    return read_dataset(in);
  } catch (const DatasetError& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const GroupedDataset& data) {
  for (const auto& d : data.domains())
    for (const auto& p : data.bucket(d)) out << to_json_line(p) << '\n';
}

void save_dataset(const std::filesystem::path& path, const GroupedDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset " + path.string());
  write_dataset(out, data);
}

// ---------------------------------------------------------------------------
// Rule-order shuffling and noise

Problem shuffle_rules(const Problem& p, std::uint64_t seed) {
  if (p.rule_mode != RuleMode::explicit_rules) return p;
  Problem out = p;
  Rng rng(derive_seed(seed, {0x5348u}));
  rng.shuffle(out.rules);
  return out;
}

Problem inject_noise(const Problem& p, std::size_t k, std::uint64_t seed,
                     std::span<const std::string> pool) {
  if (k > pool.size())
    throw DatasetError("inject_noise: k=" + std::to_string(k) +
                       " exceeds pool size " + std::to_string(pool.size()));
  for (const auto& r : pool)
    if (std::find(p.rules.begin(), p.rules.end(), r) != p.rules.end())
      throw DatasetError("inject_noise: pool rule already present: " + r);
  if (p.rule_mode != RuleMode::explicit_rules) return p;

  Problem noisy = p;
  Rng rng(derive_seed(seed, {0x4e4fu}));
  std::vector<std::size_t> picks(pool.size());
  for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(picks.size() - i));
    std::swap(picks[i], picks[j]);
    const auto pos = static_cast<std::ptrdiff_t>(rng.below(noisy.rules.size() + 1));
    noisy.rules.insert(noisy.rules.begin() + pos, pool[picks[i]]);
  }
  return shuffle_rules(noisy, seed);
}

namespace {

std::set<std::string> mentioned_predicates(const Problem& p) {
  std::set<std::string> preds;
  for (const auto& r : p.rules)
    if (auto imp = parse_rule(r)) {
      preds.insert(imp->premise);
      preds.insert(imp->conclusion);
    }
  for (const auto& f : p.facts)
    if (auto a = parse_statement(f)) preds.insert(a->predicate);
  for (const auto& o : p.options)
    if (auto a = parse_statement(o.text)) preds.insert(a->predicate);
  if (!p.multiple_choice())
    if (auto a = parse_statement(query_statement(p))) preds.insert(a->predicate);
  return preds;
}

}  // namespace

std::vector<std::string> distractor_pool(const GroupedDataset& data,
                                         const Problem& p) {
  const auto own = mentioned_predicates(p);
  std::vector<std::string> pool;
  std::unordered_set<std::string> seen(p.rules.begin(), p.rules.end());
  for (const auto& other : data.bucket(p.domain)) {
    if (other.id == p.id) continue;
    for (const auto& r : other.rules) {
      auto imp = parse_rule(r);
      if (!imp || own.contains(imp->premise) || own.contains(imp->conclusion))
        continue;
      if (seen.insert(r).second) pool.push_back(r);
    }
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

std::string label_list(const Problem& p) {
  std::string s = "[";
  if (p.multiple_choice()) {
    for (std::size_t i = 0; i < p.options.size(); ++i) {
      if (i) s += '/';
      s += p.options[i].label;
    }
  } else {
    s += "True/False/Unknown";
  }
  return s + "]";
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

}  // namespace

std::string render_prompt(const Problem& problem,
                          std::optional<std::uint64_t> shuffle_seed) {
  const Problem p = shuffle_seed ? shuffle_rules(problem, *shuffle_seed) : problem;
  std::ostringstream out;
  const bool explicit_rules = p.rule_mode == RuleMode::explicit_rules;
  out << "Instruction: Please answer the question based on the given "
      << (explicit_rules ? "rules and facts" : "contexts") << " using either of "
      << label_list(p)
      << ". Fill in the answer between <answer> and </answer>. Provide your "
         "step-by-step reasoning process between <think> and </think>.\n\n"
      << "Input:\n";
  if (explicit_rules) {
    out << "- Rules: " << join(p.rules, " ") << "\n"
        << "- Facts: " << join(p.facts, " ") << "\n\n";
  } else {
    std::vector<std::string> context = p.facts;
    context.insert(context.end(), p.rules.begin(), p.rules.end());
    out << "- Context: " << join(context, " ") << "\n\n";
  }
  out << "Question: " << p.question << "\n";
  if (p.multiple_choice()) {
    out << "\nOptions:";
    for (const auto& o : p.options) out << "\n(" << o.label << ") " << o.text;
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Text forms

std::string rule_text(std::string_view premise, std::string_view conclusion) {
  return "Every " + std::string(premise) + " is a " + std::string(conclusion) + ".";
}

std::string statement_text(std::string_view entity, std::string_view predicate) {
  return std::string(entity) + " is a " + std::string(predicate) + ".";
}

std::optional<Implication> parse_rule(std::string_view text) {
  text = trim(text);
  constexpr std::string_view head = "Every ";
  constexpr std::string_view mid = " is a ";
  if (!text.starts_with(head) || !text.ends_with(".")) return std::nullopt;
  text.remove_prefix(head.size());
  text.remove_suffix(1);
  const auto at = text.find(mid);
  if (at == std::string_view::npos) return std::nullopt;
  auto premise = text.substr(0, at);
  auto conclusion = text.substr(at + mid.size());
  if (!is_word(premise) || !is_word(conclusion)) return std::nullopt;
  return Implication{std::string(premise), std::string(conclusion)};
}

std::optional<Atom> parse_statement(std::string_view text) {
  text = trim(text);
  constexpr std::string_view mid = " is a ";
  if (!text.ends_with(".")) return std::nullopt;
  text.remove_suffix(1);
  const auto at = text.find(mid);
  if (at == std::string_view::npos) return std::nullopt;
  auto entity = text.substr(0, at);
  auto predicate = text.substr(at + mid.size());
  if (!is_word(entity) || !is_word(predicate)) return std::nullopt;
  return Atom{std::string(entity), std::string(predicate)};
}

std::string query_statement(const Problem& p) {
  if (p.multiple_choice()) {
    for (const auto& o : p.options)
      if (o.label == p.answer_key) return o.text;
    return {};
  }
  // Boolean questions end with the statement under test; it is the sentence
  // following the last '?', ':' or '.' separator before " is a ".
  const std::string_view q = p.question;
  const auto is_a = q.rfind(" is a ");
  if (is_a == std::string_view::npos) return {};
  const auto sep = q.find_last_of("?:.", is_a);
  const auto start = sep == std::string_view::npos ? 0 : sep + 1;
  return std::string(trim(q.substr(start)));
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

constexpr std::array<std::string_view, 24> kOnsets{
    "wum", "yum", "zum", "tum", "rom", "jom", "lem", "dum", "vum", "gorp", "imp", "brim",
    "shum", "lorp", "grim", "kemp", "quim", "fep", "dax", "sterp", "bor", "nim", "rex", "zhul"};
constexpr std::array<std::string_view, 12> kMiddles{
    "", "a", "e", "i", "o", "u", "ba", "ro", "li", "ne", "to", "ka"};
constexpr std::array<std::string_view, 6> kSuffixes{"pus", "pee", "ple", "bus", "dee", "loo"};
constexpr std::array<std::string_view, 16> kEntities{
    "Alex", "Fae", "Max", "Polly", "Rex", "Sally", "Sam", "Stella",
    "Wren", "Ivy", "Jo", "Kai", "Nell", "Otto", "Rue", "Tam"};

constexpr std::array<std::string_view, 4> kBooleanTemplates{
    "Is the following statement true or false?",
    "True, false, or unknown:",
    "Determine whether the claim holds.",
    "Given the rules, evaluate the statement:"};
constexpr std::array<std::string_view, 4> kChoiceTemplates{
    "Which of the following statements about {} is true?",
    "Which option follows for {}?",
    "Based on the rules and facts, what can be concluded about {}?",
    "Select the statement that must hold for {}."};

class NameDrawer {
 public:
  explicit NameDrawer(std::set<std::string>& used) : used_(used) {}

  std::string draw(Rng& rng) {
    for (;;) {
      std::string name(kOnsets[rng.below(kOnsets.size())]);
      name += kMiddles[rng.below(kMiddles.size())];
      name += kSuffixes[rng.below(kSuffixes.size())];
      if (used_.insert(name).second) return name;
    }
  }

 private:
  std::set<std::string>& used_;
};

std::string fill(std::string_view tmpl, std::string_view value) {
  std::string out(tmpl);
  const auto at = out.find("{}");
  if (at != std::string::npos) out.replace(at, 2, value);
  return out;
}

Problem generate_one(const DomainSynthSpec& ds, std::uint64_t seed, std::uint64_t stream,
                     int index) {
  const std::uint64_t dom_tag = fnv1a64(ds.id);
  const auto i64 = static_cast<std::uint64_t>(index);
  Rng core(derive_seed(seed, {dom_tag, stream, i64, 1}));
  Rng noise(derive_seed(seed, {dom_tag, stream, i64, 2}));
  std::set<std::string> used;
  NameDrawer names(used);

  Problem p;
  p.id = stream == 0 ? ds.id + "-" + std::to_string(index)
                      : ds.id + "-s" + std::to_string(stream) + "-" + std::to_string(index);
  p.domain = ds.id;
  p.rule_mode = ds.rule_mode;
  p.qtype = index % ds.n_qtypes;
  p.depth = ds.depth_min +
            static_cast<int>(core.below(static_cast<std::uint64_t>(ds.depth_max - ds.depth_min + 1)));

  const std::string entity(kEntities[core.below(kEntities.size())]);
  std::vector<std::string> chain;
  for (int i = 0; i <= p.depth; ++i) chain.push_back(names.draw(core));

  const bool mc = ds.n_options > 0;
  const int negatives = mc ? ds.n_options - 1 : 1;
  std::vector<std::string> negative_preds;
  for (int i = 0; i < negatives; ++i) negative_preds.push_back(names.draw(core));

  std::vector<std::string> rules;
  for (int i = 0; i < p.depth; ++i) rules.push_back(rule_text(chain[i], chain[i + 1]));
  p.facts.push_back(statement_text(entity, chain.front()));

  if (mc) {
    const int key = keyed_option(seed, ds.id, p.qtype, ds.n_options);
    p.question = fill(kChoiceTemplates[static_cast<std::size_t>(p.qtype) % kChoiceTemplates.size()], entity);
    int neg = 0;
    for (int i = 0; i < ds.n_options; ++i) {
      const auto& pred = i == key ? chain.back() : negative_preds[neg++];
      p.options.push_back({mc_label(i), statement_text(entity, pred)});
    }
    p.answer_key = mc_label(key);
  } else {
    const bool truth = index % 2 == 0;
    const auto& pred = truth ? chain.back() : negative_preds.front();
    p.question = std::string(kBooleanTemplates[static_cast<std::size_t>(p.qtype) % kBooleanTemplates.size()]) +
                 " " + statement_text(entity, pred);
    p.answer_key = truth ? "True" : "False";
  }

  // Distractors. Premises come from predicates that nothing derives, so the
  // closure of the facts is exactly the chain and every label stays fixed.
  if (ds.distractor_rules > 0) {
    std::vector<std::string> idle = negative_preds;
    const int fresh = std::max(2, ds.distractor_rules / 2 + 1);
    for (int i = 0; i < fresh; ++i) idle.push_back(names.draw(noise));
    std::vector<std::string> targets = idle;
    targets.insert(targets.end(), chain.begin(), chain.end());

    std::set<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < p.depth; ++i) pairs.emplace(chain[i], chain[i + 1]);
    int added = 0;
    while (added < ds.distractor_rules) {
      const auto& u = idle[noise.below(idle.size())];
      const auto& v = targets[noise.below(targets.size())];
      // At least (d/2 + 2)^2 distinct pairs exist, so this terminates.
      if (u == v || !pairs.emplace(u, v).second) continue;
      const auto pos = static_cast<std::ptrdiff_t>(noise.below(rules.size() + 1));
      rules.insert(rules.begin() + pos, rule_text(u, v));
      ++added;
    }
    std::string other(kEntities[noise.below(kEntities.size())]);
    if (other != entity) p.facts.push_back(statement_text(other, idle.back()));
  }
  p.rules = std::move(rules);
  return p;
}

}  // namespace

int keyed_option(std::uint64_t seed, std::string_view domain, int qtype,
                 int n_options) {
  const auto h = derive_seed(seed, {fnv1a64(domain), static_cast<std::uint64_t>(qtype), 0x4b4559u});
  return static_cast<int>(h % static_cast<std::uint64_t>(n_options));
}

void validate(const SynthSpec& spec) {
  if (spec.domains.empty()) throw DatasetError("synth spec: no domains");
  std::set<std::string> ids;
  for (const auto& d : spec.domains) {
    const std::string where = "synth spec domain '" + d.id + "': ";
    if (d.id.empty() || !ids.insert(d.id).second)
      throw DatasetError("synth spec: empty or duplicate domain id '" + d.id + "'");
    if (d.depth_min < 0 || d.depth_max > kMaxDepth || d.depth_min > d.depth_max)
      throw DatasetError(where + "depth range must satisfy 0 <= min <= max <= 7");
    if (d.n_qtypes < 1) throw DatasetError(where + "n_qtypes must be >= 1");
    if (d.n_options != 0 && (d.n_options < 2 || d.n_options > 26))
      throw DatasetError(where + "n_options must be 0 (boolean) or in [2, 26]");
    if (d.distractor_rules < 0) throw DatasetError(where + "distractor_rules must be >= 0");
    if (d.problems < 1) throw DatasetError(where + "problems must be >= 1");
    if (d.rule_mode == RuleMode::explicit_rules && d.depth_min == 0 &&
        d.distractor_rules == 0)
      throw DatasetError(where + "explicit depth-0 problems need distractor rules");
  }
}

GroupedDataset synth_generate(const SynthSpec& spec, std::uint64_t stream) {
  validate(spec);
  GroupedDataset data;
  for (const auto& ds : spec.domains)
    for (int i = 0; i < ds.problems; ++i) data.add(generate_one(ds, spec.seed, stream, i));
  return data;
}

}  // namespace rulereasoner
