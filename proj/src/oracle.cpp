#include "dkg/oracle.hpp"

#include <functional>
#include <optional>
#include <vector>

#include "dkg/errors.hpp"

namespace dkg {

namespace {

struct Goal {
  Literal literal;
  int depth = 0;
};

class Prover {
 public:
  Prover(const Theory& theory, const KnowledgeGraph& kg, const OracleOptions& options)
      : theory_(theory), kg_(kg), options_(options) {}

  AnswerTable run(const Literal& query) {
    std::optional<std::string> var;
    for (const auto& a : query.args) {
      if (!is_variable_name(a)) continue;
      if (var && *var != a) throw UsageError("oracle query must have at most one variable: " + query.to_string());
      var = a;
    }
    answer_var_ = var;
    solve({Goal{query, 0}}, {}, 1.0);
    return std::move(answers_);
  }

 private:
  using Subst = std::map<std::string, std::string>;

  static std::string deref(const Subst& s, std::string term) {
    while (is_variable_name(term)) {
      const auto it = s.find(term);
      if (it == s.end()) break;
      term = it->second;
    }
    return term;
  }

  static bool unify(Subst& s, const std::string& a, const std::string& b) {
    const std::string x = deref(s, a);
    const std::string y = deref(s, b);
    if (x == y) return true;
    if (is_variable_name(x)) {
      s[x] = y;
      return true;
    }
    if (is_variable_name(y)) {
      s[y] = x;
      return true;
    }
    return false;
  }

  void solve(std::vector<Goal> goals, const Subst& subst, double weight) {
    if (++visited_ > options_.max_vertices) {
      throw UsageError("proof enumeration exceeded its budget of " + std::to_string(options_.max_vertices) +
                       " vertices");
    }
    if (goals.empty()) {
      record(subst, weight);
      return;
    }
    const Goal goal = goals.front();
    goals.erase(goals.begin());
    const Literal& lit = goal.literal;

    if (theory_.defines(lit.predicate)) {
      if (goal.depth >= options_.max_depth) return;
      for (const Clause* clause : theory_.clauses_for(lit.predicate)) {
        if (clause->head.arity() != lit.arity()) continue;
        const std::string suffix = "#" + std::to_string(++renames_);
        auto rename = [&](const Literal& l) {
          Literal out = l;
          for (auto& a : out.args) {
            if (is_variable_name(a)) a += suffix;
          }
          return out;
        };
        Subst s = subst;
        const Literal head = rename(clause->head);
        bool ok = true;
        for (std::size_t i = 0; ok && i < lit.arity(); ++i) ok = unify(s, head.args[i], lit.args[i]);
        if (!ok) continue;
        std::vector<Goal> next;
        for (const auto& b : clause->body) next.push_back({rename(b), goal.depth + 1});
        next.insert(next.end(), goals.begin(), goals.end());
        solve(std::move(next), s, weight);
      }
      return;
    }

    const RelationMatrix* rel = kg_.find_relation(lit.predicate);
    if (rel == nullptr || rel->arity() != lit.arity()) return;
    const auto& symbols = kg_.symbols();
    for (std::size_t k = 0; k < rel->size(); ++k) {
      Subst s = subst;
      bool ok = unify(s, lit.args[0], symbols.name(rel->row(k), rel->arg_types()[0]));
      if (ok && lit.arity() == 2) ok = unify(s, lit.args[1], symbols.name(rel->col(k), rel->arg_types()[1]));
      if (ok) solve(goals, s, weight * rel->weight(k));
    }
  }

  void record(const Subst& subst, double weight) {
    std::string key(kUnitConstant);
    if (answer_var_) {
      key = deref(subst, *answer_var_);
      if (is_variable_name(key)) {
        throw ValidationError("solution leaves the query variable " + *answer_var_ + " unbound");
      }
    }
    answers_[key] += weight;
  }

  const Theory& theory_;
  const KnowledgeGraph& kg_;
  const OracleOptions& options_;
  std::optional<std::string> answer_var_;
  AnswerTable answers_;
  std::size_t visited_ = 0;
  std::size_t renames_ = 0;
};

}  // namespace

AnswerTable prove(const Literal& query, const Theory& theory, const KnowledgeGraph& kg,
                  const OracleOptions& options) {
  if (options.max_depth < 1) throw UsageError("maximum depth must be at least 1");
  return Prover(theory, kg, options).run(query);
}

AnswerTable answer_distribution(const AnswerTable& table) {
  double total = 0.0;
  for (const auto& [k, w] : table) total += w;
  if (!(total > 0.0)) throw ValidationError("answer distribution is undefined: no answer has positive weight");
  AnswerTable out;
  for (const auto& [k, w] : table) out.emplace(k, w / total);
  return out;
}

}  // namespace dkg
