#include "dkg/program.hpp"

#include <istream>

#include "dkg/errors.hpp"

namespace dkg {

const Signature& Program::signature(std::string_view predicate) const {
  const auto it = signatures.find(predicate);
  if (it == signatures.end()) throw CompileError("undefined predicate '" + std::string(predicate) + "'");
  return it->second;
}

std::string Program::input_type(const Mode& mode) const {
  const Signature& sig = signature(mode.predicate);
  if (sig.size() != mode.arity()) {
    throw UsageError("mode " + mode.to_string() + " does not match arity of '" + mode.predicate + "'");
  }
  const int pos = mode.input_position();
  return pos < 0 ? std::string(kUnitType) : sig[static_cast<std::size_t>(pos)];
}

std::string Program::output_type(const Mode& mode) const {
  const Signature& sig = signature(mode.predicate);
  if (sig.size() != mode.arity()) {
    throw UsageError("mode " + mode.to_string() + " does not match arity of '" + mode.predicate + "'");
  }
  const int pos = mode.output_position();
  return pos < 0 ? std::string(kUnitType) : sig[static_cast<std::size_t>(pos)];
}

Program build_program(KnowledgeGraph kg, const Theory& parsed, std::span<const ExampleSet> examples) {
  if (kg.frozen()) throw UsageError("build_program needs an unfrozen knowledge graph");
  auto [theory, synthesized] = rewrite_theory(parsed);
  for (const auto& clause : theory.clauses) validate_clause(clause);

  for (const auto& p : theory.defined_predicates()) {
    if (const auto* rel = kg.find_relation(p); rel != nullptr && rel->size() > 0) {
      throw CompileError("predicate '" + p + "' is defined by both facts and rules");
    }
  }

  SignatureMap signatures = infer_types(theory, kg);

  for (const auto& fact : synthesized) {
    const auto sig = signatures.find(fact.predicate);
    if (sig == signatures.end() || sig->second.size() != 1) {
      throw CompileError("cannot type synthesized predicate '" + fact.predicate + "'");
    }
    kg.declare_predicate(fact.predicate, sig->second);
    const ConstId id = kg.symbols().intern(fact.constant, sig->second[0]);
    if (!kg.relation(fact.predicate).contains(id)) {
      kg.add_fact(fact.predicate, std::vector<std::string>{fact.constant}, fact.weight);
    }
    if (fact.trainable) kg.set_trainable(fact.predicate, true);
  }

  for (const auto& set : examples) {
    const auto sig = signatures.find(set.mode.predicate);
    if (sig == signatures.end()) {
      throw CompileError("examples use undefined predicate '" + set.mode.predicate + "'");
    }
    if (sig->second.size() != set.mode.arity()) {
      throw ValidationError("examples for '" + set.mode.predicate + "' have the wrong arity");
    }
    const int in = set.mode.input_position();
    const int out = set.mode.output_position();
    const std::string in_type = in < 0 ? std::string(kUnitType) : sig->second[static_cast<std::size_t>(in)];
    const std::string out_type = out < 0 ? std::string(kUnitType) : sig->second[static_cast<std::size_t>(out)];
    for (const auto& ex : set.examples) {
      kg.symbols().intern(ex.input, in_type);
      for (const auto& [name, w] : ex.answers) kg.symbols().intern(name, out_type);
    }
  }

  // Every predicate the theory mentions must have facts, a declaration, or clauses.
  for (const auto& clause : theory.clauses) {
    for (const auto& lit : clause.body) {
      if (!theory.defines(lit.predicate) && !kg.has_predicate(lit.predicate)) {
        throw CompileError("undefined predicate '" + lit.predicate + "' in clause '" +
                           clause.to_string() + "'");
      }
    }
  }

  kg.freeze();
  return Program{std::move(kg), std::move(theory), std::move(signatures)};
}

Program load_program(std::string_view rules_text, std::istream& facts, std::istream* types,
                     std::span<const ExampleSet> examples) {
  KnowledgeGraph kg;
  if (types != nullptr) load_types(kg, *types);
  load_facts(kg, facts);
  return build_program(std::move(kg), parse_rules(rules_text), examples);
}

}  // namespace dkg
