#include "dkg/lang.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "dkg/errors.hpp"
#include "dkg/kgstore.hpp"
#include "text_util.hpp"

namespace dkg {

bool is_variable_name(std::string_view name) {
  return !name.empty() &&
         (std::isupper(static_cast<unsigned char>(name.front())) != 0 || name.front() == '_');
}

std::string Literal::to_string() const {
  std::string out = predicate + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i > 0) out += ",";
    out += args[i];
  }
  return out + ")";
}

std::string Clause::to_string() const {
  std::string out = head.to_string();
  if (!body.empty()) {
    out += " :- ";
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (i > 0) out += ", ";
      out += body[i].to_string();
    }
  }
  if (!rule_id.empty()) out += " {" + rule_id + "}";
  return out + ".";
}

std::vector<std::string> Clause::variables() const {
  std::vector<std::string> out;
  auto visit = [&](const Literal& lit) {
    for (const auto& a : lit.args) {
      if (is_variable_name(a) && std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    }
  };
  for (const auto& lit : body) visit(lit);
  visit(head);
  return out;
}

bool Theory::defines(std::string_view predicate) const {
  return std::any_of(clauses.begin(), clauses.end(),
                     [&](const Clause& c) { return c.head.predicate == predicate; });
}

std::vector<const Clause*> Theory::clauses_for(std::string_view predicate) const {
  std::vector<const Clause*> out;
  for (const auto& c : clauses) {
    if (c.head.predicate == predicate) out.push_back(&c);
  }
  return out;
}

std::vector<std::string> Theory::defined_predicates() const {
  std::vector<std::string> out;
  for (const auto& c : clauses) {
    if (std::find(out.begin(), out.end(), c.head.predicate) == out.end()) {
      out.push_back(c.head.predicate);
    }
  }
  return out;
}

std::string Theory::to_string() const {
  std::string out;
  for (const auto& c : clauses) out += c.to_string() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Modes

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::kIO: return "io";
    case Direction::kOI: return "oi";
    case Direction::kI: return "i";
    case Direction::kO: return "o";
  }
  return "?";
}

Mode Mode::parse(std::string_view text) {
  const auto slash = text.rfind('/');
  if (slash == std::string_view::npos || slash == 0) {
    throw UsageError("mode must look like pred/io, pred/oi, pred/i or pred/o: '" +
                     std::string(text) + "'");
  }
  Mode m;
  m.predicate = std::string(text.substr(0, slash));
  const auto d = text.substr(slash + 1);
  if (d == "io") {
    m.direction = Direction::kIO;
  } else if (d == "oi") {
    m.direction = Direction::kOI;
  } else if (d == "i") {
    m.direction = Direction::kI;
  } else if (d == "o") {
    m.direction = Direction::kO;
  } else {
    throw UsageError("unknown mode direction '" + std::string(d) + "'");
  }
  return m;
}

std::size_t Mode::arity() const {
  return direction == Direction::kIO || direction == Direction::kOI ? 2 : 1;
}

int Mode::input_position() const {
  switch (direction) {
    case Direction::kIO: return 0;
    case Direction::kOI: return 1;
    case Direction::kI: return 0;
    case Direction::kO: return -1;
  }
  return -1;
}

int Mode::output_position() const {
  switch (direction) {
    case Direction::kIO: return 1;
    case Direction::kOI: return 0;
    case Direction::kI: return -1;
    case Direction::kO: return 0;
  }
  return -1;
}

std::string Mode::to_string() const {
  return predicate + "/" + std::string(direction_name(direction));
}

// ---------------------------------------------------------------------------
// Rule parser

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

class RuleParser {
 public:
  explicit RuleParser(std::string_view text) : text_(text) {}

  Theory parse_theory() {
    Theory theory;
    skip_space();
    while (!at_end()) {
      theory.clauses.push_back(parse_clause());
      skip_space();
    }
    return theory;
  }

  Literal parse_single_literal() {
    skip_space();
    Literal lit = parse_literal();
    skip_space();
    if (!at_end()) fail("unexpected text after literal");
    return lit;
  }

 private:
  Clause parse_clause() {
    Clause clause;
    clause.line = line_;
    clause.head = parse_literal();
    skip_space();
    if (peek() == ':') {
      expect(":-");
      do {
        skip_space();
        clause.body.push_back(parse_literal());
        skip_space();
      } while (accept(','));
    }
    skip_space();
    if (accept('{')) {
      skip_space();
      clause.rule_id = parse_ident();
      if (is_variable_name(clause.rule_id)) fail("rule id must be a constant");
      skip_space();
      expect("}");
      skip_space();
    }
    expect(".");
    return clause;
  }

  Literal parse_literal() {
    const std::size_t line = line_;
    const std::size_t column = column_;
    Literal lit;
    lit.predicate = parse_ident();
    if (is_variable_name(lit.predicate)) fail("predicate names must not start uppercase");
    skip_space();
    expect("(");
    do {
      skip_space();
      lit.args.push_back(parse_ident());
      skip_space();
    } while (accept(','));
    expect(")");
    if (lit.args.size() > 2) {
      throw ParseError("literal " + lit.to_string() + " has arity " +
                           std::to_string(lit.args.size()) + " (at most 2 allowed)",
                       line, column);
    }
    return lit;
  }

  std::string parse_ident() {
    const std::size_t start = pos_;
    while (!at_end() && is_ident_char(text_[pos_])) advance();
    if (pos_ == start) fail(at_end() ? "unexpected end of input" : "expected identifier");
    return std::string(text_.substr(start, pos_ - start));
  }

  void skip_space() {
    while (!at_end()) {
      const char c = text_[pos_];
      if (c == '%') {
        while (!at_end() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c)) != 0) {
        advance();
      } else {
        break;
      }
    }
  }

  bool accept(char c) {
    if (peek() != c) return false;
    advance();
    return true;
  }

  void expect(std::string_view token) {
    for (const char c : token) {
      if (peek() != c) fail("expected '" + std::string(token) + "'");
      advance();
    }
  }

  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  bool at_end() const { return pos_ >= text_.size(); }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_, column_); }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

std::string fresh_variable(std::string_view hint, std::set<std::string>& taken) {
  std::string base;
  if (!hint.empty() && std::islower(static_cast<unsigned char>(hint.front())) != 0) {
    base = std::string(hint);
    base.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(base.front())));
  } else {
    base = "C" + std::string(hint);
  }
  std::string name = base;
  for (int n = 2; taken.count(name) != 0; ++n) name = base + std::to_string(n);
  taken.insert(name);
  return name;
}

std::set<std::string> variable_set(const Clause& clause) {
  const auto vars = clause.variables();
  return {vars.begin(), vars.end()};
}

}  // namespace

Theory parse_rules(std::string_view text) { return RuleParser(text).parse_theory(); }

// ---------------------------------------------------------------------------
// Rewrites

RewriteResult rewrite_constants(const Clause& clause) {
  RewriteResult result{clause, {}};
  std::set<std::string> taken = variable_set(clause);
  std::vector<Literal> prefix;
  std::set<std::string> seen_constants;

  auto replace = [&](Literal& lit) {
    for (auto& arg : lit.args) {
      if (is_variable_name(arg)) continue;
      const std::string constant = arg;
      const std::string var = fresh_variable(constant, taken);
      const std::string assign = "assign_" + constant;
      prefix.push_back(Literal{assign, {var}});
      if (seen_constants.insert(constant).second) {
        result.facts.push_back(SynthesizedFact{assign, constant, 1.0, false});
      }
      arg = var;
    }
  };
  replace(result.clause.head);
  for (auto& lit : result.clause.body) replace(lit);
  if (!prefix.empty()) {
    prefix.insert(prefix.end(), result.clause.body.begin(), result.clause.body.end());
    result.clause.body = std::move(prefix);
  }
  return result;
}

RewriteResult attach_rule_weight(const Clause& clause, std::string_view rule_id) {
  if (rule_id.empty() || is_variable_name(rule_id)) {
    throw ValidationError("rule id must be a non-empty constant: '" + std::string(rule_id) + "'");
  }
  RewriteResult result{clause, {}};
  result.clause.rule_id.clear();
  std::set<std::string> taken = variable_set(clause);
  std::string var = "RuleId";
  for (int n = 2; taken.count(var) != 0; ++n) var = "RuleId" + std::to_string(n);
  const std::string assign = "assign_" + std::string(rule_id);
  std::vector<Literal> body{Literal{assign, {var}}, Literal{std::string(kWeightedPredicate), {var}}};
  body.insert(body.end(), clause.body.begin(), clause.body.end());
  result.clause.body = std::move(body);
  result.facts.push_back(SynthesizedFact{assign, std::string(rule_id), 1.0, false});
  result.facts.push_back(SynthesizedFact{std::string(kWeightedPredicate), std::string(rule_id), 1.0, true});
  return result;
}

std::pair<Theory, std::vector<SynthesizedFact>> rewrite_theory(const Theory& theory) {
  Theory out;
  std::vector<SynthesizedFact> facts;
  std::set<std::string> rule_ids;
  auto add_facts = [&](const std::vector<SynthesizedFact>& fs) {
    for (const auto& f : fs) {
      if (std::find(facts.begin(), facts.end(), f) == facts.end()) facts.push_back(f);
    }
  };
  for (const auto& clause : theory.clauses) {
    Clause current = clause;
    if (!clause.rule_id.empty()) {
      if (!rule_ids.insert(clause.rule_id).second) {
        throw ValidationError("duplicate rule id '" + clause.rule_id + "'");
      }
      auto weighted = attach_rule_weight(clause, clause.rule_id);
      add_facts(weighted.facts);
      current = std::move(weighted.clause);
    }
    auto rewritten = rewrite_constants(current);
    add_facts(rewritten.facts);
    rewritten.clause.line = clause.line;
    out.clauses.push_back(std::move(rewritten.clause));
  }
  return {std::move(out), std::move(facts)};
}

void validate_clause(const Clause& clause) {
  const std::string where = "clause '" + clause.to_string() + "'";
  auto check_literal = [&](const Literal& lit) {
    if (lit.args.empty() || lit.args.size() > 2) {
      throw ValidationError(where + ": literal " + lit.to_string() + " must have arity 1 or 2");
    }
    if (lit.predicate == kAnyPredicate) {
      throw ValidationError(where + ": predicate 'any' is reserved");
    }
    for (const auto& a : lit.args) {
      if (!is_variable_name(a)) {
        throw ValidationError(where + ": constant '" + a + "' must be rewritten first");
      }
    }
    if (lit.args.size() == 2 && lit.args[0] == lit.args[1]) {
      throw ValidationError(where + ": variable " + lit.args[0] + " repeated in " + lit.to_string());
    }
  };
  check_literal(clause.head);
  for (const auto& lit : clause.body) check_literal(lit);
  for (const auto& v : clause.head.args) {
    const bool bound = std::any_of(clause.body.begin(), clause.body.end(), [&](const Literal& l) {
      return std::find(l.args.begin(), l.args.end(), v) != l.args.end();
    });
    if (!bound) throw ValidationError(where + ": head variable " + v + " does not appear in the body");
  }
}

// ---------------------------------------------------------------------------
// Examples

std::vector<ExampleSet> parse_examples(std::istream& in) {
  std::vector<ExampleSet> sets;
  std::map<std::string, std::size_t> arity_of;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line, '#')) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() < 2) throw ParseError("example needs a query and at least one answer", lineno);

    Literal query;
    try {
      query = RuleParser(fields[0]).parse_single_literal();
    } catch (const ParseError& e) {
      throw ParseError(std::string("malformed query literal: ") + e.what(), lineno);
    }
    const auto [it, inserted] = arity_of.emplace(query.predicate, query.arity());
    if (!inserted && it->second != query.arity()) {
      throw ParseError("predicate '" + query.predicate + "' used with arity " +
                           std::to_string(query.arity()) + " and " + std::to_string(it->second),
                       lineno);
    }

    Mode mode;
    mode.predicate = query.predicate;
    Example ex;
    ex.line = lineno;
    const std::size_t nvars = static_cast<std::size_t>(
        std::count_if(query.args.begin(), query.args.end(), [](const auto& a) { return is_variable_name(a); }));
    if (nvars != 1) throw ParseError("query " + query.to_string() + " must have exactly one variable", lineno);
    if (query.arity() == 1) {
      mode.direction = Direction::kO;
      ex.input = std::string(kUnitConstant);
    } else if (is_variable_name(query.args[1])) {
      mode.direction = Direction::kIO;
      ex.input = query.args[0];
    } else {
      mode.direction = Direction::kOI;
      ex.input = query.args[1];
    }

    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (fields[i].empty()) throw ParseError("empty answer field", lineno);
      const auto colon = fields[i].rfind(':');
      std::string name = fields[i];
      double weight = 1.0;
      if (colon != std::string::npos) {
        name = detail::trim(std::string_view(fields[i]).substr(0, colon));
        const auto w = detail::parse_double(detail::trim(std::string_view(fields[i]).substr(colon + 1)));
        if (!w) throw ParseError("malformed answer weight in '" + fields[i] + "'", lineno);
        weight = *w;
      }
      if (name.empty() || is_variable_name(name)) {
        throw ParseError("answer '" + fields[i] + "' must be a constant", lineno);
      }
      if (weight < 0.0) {
        throw ValidationError("line " + std::to_string(lineno) + ": negative target weight");
      }
      ex.answers.emplace_back(std::move(name), weight);
    }

    auto set = std::find_if(sets.begin(), sets.end(), [&](const ExampleSet& s) { return s.mode == mode; });
    if (set == sets.end()) {
      sets.push_back(ExampleSet{mode, {}});
      set = std::prev(sets.end());
    }
    set->examples.push_back(std::move(ex));
  }
  return sets;
}

std::string format_examples(const ExampleSet& set) {
  std::ostringstream out;
  for (const auto& ex : set.examples) {
    switch (set.mode.direction) {
      case Direction::kIO: out << set.mode.predicate << "(" << ex.input << ",Y)"; break;
      case Direction::kOI: out << set.mode.predicate << "(Y," << ex.input << ")"; break;
      default: out << set.mode.predicate << "(Y)"; break;
    }
    for (const auto& [name, w] : ex.answers) {
      out << '\t' << name;
      if (w != 1.0) out << ':' << format_weight(w);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace dkg
