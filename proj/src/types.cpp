#include <optional>

#include "dkg/errors.hpp"
#include "dkg/program.hpp"

namespace dkg {

namespace {

using Partial = std::vector<std::optional<std::string>>;

void unify(std::optional<std::string>& slot, const std::string& type, const std::string& what,
           bool& changed) {
  if (!slot) {
    slot = type;
    changed = true;
  } else if (*slot != type) {
    throw CompileError(what + " has conflicting types '" + *slot + "' and '" + type + "'");
  }
}

}  // namespace

SignatureMap infer_types(const Theory& theory, const KnowledgeGraph& kg) {
  std::map<std::string, Partial, std::less<>> partial;
  for (const auto& p : kg.predicates()) {
    const auto& types = kg.relation(p).arg_types();
    partial[p] = Partial(types.begin(), types.end());
  }

  auto slot_for = [&](const Literal& lit) -> Partial& {
    auto [it, inserted] = partial.try_emplace(lit.predicate, Partial(lit.arity()));
    if (it->second.size() != lit.arity()) {
      throw CompileError("predicate '" + lit.predicate + "' used with arity " +
                         std::to_string(lit.arity()) + " but has arity " +
                         std::to_string(it->second.size()));
    }
    return it->second;
  };

  std::vector<std::map<std::string, std::optional<std::string>>> var_types(theory.clauses.size());
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t ci = 0; ci < theory.clauses.size(); ++ci) {
      const Clause& clause = theory.clauses[ci];
      auto& vars = var_types[ci];
      auto visit = [&](const Literal& lit) {
        Partial& sig = slot_for(lit);
        for (std::size_t i = 0; i < lit.arity(); ++i) {
          const std::string& arg = lit.args[i];
          if (!is_variable_name(arg)) continue;
          auto& var = vars[arg];
          if (sig[i]) {
            unify(var, *sig[i], "variable " + arg + " in clause '" + clause.to_string() + "'", changed);
          } else if (var) {
            unify(sig[i], *var, "argument " + std::to_string(i + 1) + " of '" + lit.predicate + "'", changed);
          }
        }
      };
      visit(clause.head);
      for (const auto& lit : clause.body) visit(lit);
    }
  }

  SignatureMap out;
  for (auto& [p, sig] : partial) {
    Signature s;
    for (auto& t : sig) s.push_back(t ? *t : std::string(kDefaultType));
    out.emplace(p, std::move(s));
  }
  return out;
}

std::map<std::string, std::string> clause_variable_types(const Clause& clause,
                                                         const SignatureMap& signatures) {
  std::map<std::string, std::string> out;
  auto visit = [&](const Literal& lit) {
    const auto it = signatures.find(lit.predicate);
    if (it == signatures.end()) throw CompileError("no signature for predicate '" + lit.predicate + "'");
    for (std::size_t i = 0; i < lit.arity() && i < it->second.size(); ++i) {
      if (!is_variable_name(lit.args[i])) continue;
      const auto [pos, inserted] = out.emplace(lit.args[i], it->second[i]);
      if (!inserted && pos->second != it->second[i]) {
        throw CompileError("variable " + lit.args[i] + " in clause '" + clause.to_string() +
                           "' has conflicting types '" + pos->second + "' and '" + it->second[i] + "'");
      }
    }
  };
  for (const auto& lit : clause.body) visit(lit);
  visit(clause.head);
  return out;
}

}  // namespace dkg
