#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dkg {

// Prolog convention: variables start with an uppercase letter or '_'.
bool is_variable_name(std::string_view name);

struct Literal {
  std::string predicate;
  std::vector<std::string> args;  // variable or constant names; 1 or 2 of them

  std::size_t arity() const { return args.size(); }
  std::string to_string() const;
  bool operator==(const Literal&) const = default;
};

struct Clause {
  Literal head;
  std::vector<Literal> body;
  std::string rule_id;  // from a trailing "{id}" annotation, empty if absent
  std::size_t line = 0;

  std::string to_string() const;
  std::vector<std::string> variables() const;  // first-appearance order, body then head
  bool operator==(const Clause& o) const {
    return head == o.head && body == o.body && rule_id == o.rule_id;
  }
};

struct Theory {
  std::vector<Clause> clauses;

  bool defines(std::string_view predicate) const;
  std::vector<const Clause*> clauses_for(std::string_view predicate) const;
  std::vector<std::string> defined_predicates() const;  // first-appearance order
  std::string to_string() const;
};

enum class Direction { kIO, kOI, kI, kO };

// Input/output designation of a query's argument positions. Binary
// predicates use io or oi; unary predicates use i (ground check) or o.
struct Mode {
  std::string predicate;
  Direction direction = Direction::kIO;

  // Parses "p/io", "p/oi", "p/i", "p/o".
  static Mode parse(std::string_view text);

  std::size_t arity() const;
  int input_position() const;   // -1 when the input is the unit domain
  int output_position() const;  // -1 when the output is the unit domain
  std::string to_string() const;

  auto operator<=>(const Mode&) const = default;
};

std::string_view direction_name(Direction d);

// One query p(c,Y) (or p(Y,c), or q(Y)) and its desired answers.
struct Example {
  std::string input;  // the unit constant for unary "o" queries
  std::vector<std::pair<std::string, double>> answers;
  std::size_t line = 0;
};

struct ExampleSet {
  Mode mode;
  std::vector<Example> examples;
};

// A fact the rewrites add to the knowledge graph. Its argument type is only
// known after type inference.
struct SynthesizedFact {
  std::string predicate;
  std::string constant;
  double weight = 1.0;
  bool trainable = false;

  bool operator==(const SynthesizedFact&) const = default;
};

struct RewriteResult {
  Clause clause;
  std::vector<SynthesizedFact> facts;
};

inline constexpr std::string_view kAnyPredicate = "any";
inline constexpr std::string_view kWeightedPredicate = "weighted";

// Parses clauses terminated by '.', with '%' line comments. A clause may end
// with a rule-id annotation "{id}" before the period. Throws ParseError with
// line/column on syntax errors and on literals of arity > 2.
Theory parse_rules(std::string_view text);

// Replaces each constant occurrence c by a fresh variable V and prepends
// assign_c(V); one assign_c(c) fact (weight 1) per distinct constant.
RewriteResult rewrite_constants(const Clause& clause);

// Prefixes the body with assign_<id>(R), weighted(R) and synthesizes the
// facts assign_<id>(<id>) and weighted(<id>), the latter trainable.
RewriteResult attach_rule_weight(const Clause& clause, std::string_view rule_id);

// Applies attach_rule_weight to every annotated clause (rejecting duplicate
// ids), then rewrite_constants to every clause. Facts are deduplicated.
std::pair<Theory, std::vector<SynthesizedFact>> rewrite_theory(const Theory& theory);

// Checks the compiler's input contract: constant-free, arity <= 2, head
// variables distinct and bound in the body, no variable repeated inside a
// literal, no use of the reserved "any" predicate. Throws ValidationError.
void validate_clause(const Clause& clause);

// Example lines: query literal with exactly one variable, then one or more
// tab-separated answers "constant[:weight]". Lines are grouped into one
// ExampleSet per mode, in first-appearance order.
std::vector<ExampleSet> parse_examples(std::istream& in);
std::string format_examples(const ExampleSet& set);

}  // namespace dkg
