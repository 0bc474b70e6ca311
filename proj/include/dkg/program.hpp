#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dkg/kgstore.hpp"
#include "dkg/lang.hpp"

namespace dkg {

using Signature = std::vector<std::string>;
using SignatureMap = std::map<std::string, Signature, std::less<>>;

// Infers argument types for every predicate used by the theory. KG
// predicates contribute their declared signatures; types flow through shared
// clause variables (in both directions) until a fixpoint. Arguments nothing
// constrains get the default type. A variable forced to two different types,
// or a predicate used with two arities, is a CompileError.
SignatureMap infer_types(const Theory& theory, const KnowledgeGraph& kg);

// Types of the variables of one clause under `signatures`.
std::map<std::string, std::string> clause_variable_types(const Clause& clause,
                                                         const SignatureMap& signatures);

// A validated, rewritten theory together with its frozen knowledge graph.
struct Program {
  KnowledgeGraph kg;
  Theory theory;
  SignatureMap signatures;

  const Signature& signature(std::string_view predicate) const;
  // Unit type when the mode has no input (output) position.
  std::string input_type(const Mode& mode) const;
  std::string output_type(const Mode& mode) const;
  bool is_theory_predicate(std::string_view predicate) const { return theory.defines(predicate); }
};

// Rewrites constants and rule weights, validates every clause, infers types,
// adds the synthesized facts, interns every constant the example sets mention,
// and freezes the graph.
Program build_program(KnowledgeGraph kg, const Theory& parsed,
                      std::span<const ExampleSet> examples = {});

// Convenience loader used by the CLI and tests. `types` may be null.
Program load_program(std::string_view rules_text, std::istream& facts, std::istream* types,
                     std::span<const ExampleSet> examples = {});

}  // namespace dkg
