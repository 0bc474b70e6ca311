#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "dkg/kgstore.hpp"
#include "dkg/lang.hpp"

namespace dkg {

struct OracleOptions {
  int max_depth = 1;
  std::size_t max_vertices = 5'000'000;  // proof-graph vertices visited before giving up
};

// Answer constant -> summed weight of all proofs.
using AnswerTable = std::map<std::string, double>;

// Enumerates every SLD proof of `query` top-down. The query has at most one
// variable; answers are keyed by its binding (or by the unit constant for a
// ground query). Clauses have weight 1, facts multiply along a proof, and a
// theory literal at depth >= max_depth has no proofs. Constants inside
// clauses are handled directly, so the theory need not be rewritten.
// Throws UsageError if the budget is exceeded.
AnswerTable prove(const Literal& query, const Theory& theory, const KnowledgeGraph& kg,
                  const OracleOptions& options);

// Divides by the total weight; throws ValidationError when the total is 0.
AnswerTable answer_distribution(const AnswerTable& table);

}  // namespace dkg
