#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rulereasoner {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RuleMode { explicit_rules, implicit_rules };

std::string_view to_string(RuleMode mode);
RuleMode rule_mode_from_string(std::string_view text);

struct Option {
  std::string label;
  std::string text;
  bool operator==(const Option&) const = default;
};

// One rule-based reasoning instance. A problem without options is boolean and
// its key is one of True/False/Unknown; otherwise the key is an option label.
struct Problem {
  std::string id;
  std::string domain;
  std::vector<std::string> rules;
  std::vector<std::string> facts;
  std::string question;
  std::vector<Option> options;
  std::string answer_key;
  int depth = 0;
  RuleMode rule_mode = RuleMode::explicit_rules;
  int qtype = 0;

  bool multiple_choice() const { return !options.empty(); }
  bool operator==(const Problem&) const = default;
};

inline constexpr int kMaxDepth = 7;

// Throws DatasetError describing the first violated invariant.
void validate(const Problem& p);

// Problems grouped by domain. `domains` fixes the iteration order (first
// appearance when loaded); buckets are never empty.
class GroupedDataset {
 public:
  GroupedDataset() = default;

  // Appends to the bucket for p.domain, creating it on first use.
  void add(Problem p);

  const std::vector<std::string>& domains() const { return domains_; }
  const std::vector<Problem>& bucket(std::string_view domain) const;
  std::vector<Problem>& bucket(std::string_view domain);
  bool contains(std::string_view domain) const;
  std::size_t domain_index(std::string_view domain) const;
  std::size_t size() const;

  bool operator==(const GroupedDataset& other) const;

 private:
  std::vector<std::string> domains_;
  std::vector<std::vector<Problem>> buckets_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSON-lines I/O. Field names: id, domain, rules, facts, question, options,
// answer_key, depth, rule_mode, qtype. Options serialize as a list of
// {"label", "text"} objects, or null for boolean problems.
std::string to_json_line(const Problem& p);
Problem problem_from_json_line(std::string_view line);

GroupedDataset read_dataset(std::istream& in);
GroupedDataset load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const GroupedDataset& data);
void save_dataset(const std::filesystem::path& path, const GroupedDataset& data);

// Uniform random permutation of the rules. Implicit-rule problems are returned
// unchanged.
Problem shuffle_rules(const Problem& p, std::uint64_t seed);

// Inserts k rules drawn from `pool` at random positions, then shuffles with
// `seed` (so k = 0 is exactly shuffle_rules(p, seed)). Implicit-rule problems
// are returned unchanged. Throws if k > pool.size() or pool overlaps p.rules.
Problem inject_noise(const Problem& p, std::size_t k, std::uint64_t seed,
                     std::span<const std::string> pool);

// Rules from other problems of p's domain that mention none of p's
// predicates. Deduplicated, in dataset order.
std::vector<std::string> distractor_pool(const GroupedDataset& data,
                                         const Problem& p);

std::string render_prompt(const Problem& p,
                          std::optional<std::uint64_t> shuffle_seed = {});

// ---- Text forms shared by the generator and the forward-chaining oracle ----

// "Every <premise> is a <conclusion>."
struct Implication {
  std::string premise;
  std::string conclusion;
};

// "<Entity> is a <predicate>."
struct Atom {
  std::string entity;
  std::string predicate;
  bool operator==(const Atom&) const = default;
};

std::string rule_text(std::string_view premise, std::string_view conclusion);
std::string statement_text(std::string_view entity, std::string_view predicate);
std::optional<Implication> parse_rule(std::string_view text);
std::optional<Atom> parse_statement(std::string_view text);

// The statement whose truth decides the problem: the queried statement for
// boolean problems, the keyed option's text for multiple choice.
std::string query_statement(const Problem& p);

// ---- Synthetic corpus generation ----

struct DomainSynthSpec {
  std::string id;
  int depth_min = 1;
  int depth_max = 1;
  int n_qtypes = 1;
  int n_options = 0;  // 0 = boolean
  int distractor_rules = 0;
  RuleMode rule_mode = RuleMode::explicit_rules;
  int problems = 1;
};

struct SynthSpec {
  std::vector<DomainSynthSpec> domains;
  std::uint64_t seed = 0;
};

void validate(const SynthSpec& spec);

// Depth-h modus-ponens chains over fictional unary predicates. Per problem,
// chain draws and distractor draws use separate streams, so changing only
// distractor_rules leaves every chain, question and key intact.
//
// `stream` selects an instance stream: option keys depend only on spec.seed,
// so held-out sets drawn from another stream share the training tasks but
// not the instances. Ids are "<domain>-<i>" on stream 0 and
// "<domain>-s<stream>-<i>" otherwise.
GroupedDataset synth_generate(const SynthSpec& spec, std::uint64_t stream = 0);

// Option index (0-based) keyed for every multiple-choice problem of the given
// (domain, qtype) under the given seed.
int keyed_option(std::uint64_t seed, std::string_view domain, int qtype,
                 int n_options);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace rulereasoner
