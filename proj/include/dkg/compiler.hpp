#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dkg/lang.hpp"
#include "dkg/program.hpp"

namespace dkg {

// ---------------------------------------------------------------------------
// Clause structure

// Body literals as vertices, an edge between two literals sharing a variable.
struct InfluenceGraph {
  std::size_t num_vertices = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j, each pair once
};

InfluenceGraph influence_graph(const Clause& clause);

// True iff every connected component is a tree.
bool is_polytree(const InfluenceGraph& graph);

// Bipartite graph of logical variables and literal factors, plus the "any"
// factors that make it connected.
struct FactorGraph {
  struct Variable {
    std::string name;
    std::string type;
    bool is_virtual = false;            // stands for a unit-domain input/output
    std::vector<std::size_t> factors;   // in factor order
  };
  struct Factor {
    std::string predicate;              // kAnyPredicate for connecting factors
    std::vector<std::size_t> variables; // argument order
    std::size_t literal_index = 0;      // 1-based; any-factors follow the body
    bool is_any = false;
  };

  std::vector<Variable> variables;
  std::vector<Factor> factors;
  std::size_t input = 0;
  std::size_t output = 0;

  bool connected() const;
  bool acyclic() const;
  std::size_t num_any_factors() const;
  std::string to_dot(std::string_view name) const;
};

// Throws CompileError when the influence graph is not a polytree, when the
// factor graph itself would contain a cycle, or when the mode does not fit
// the head.
FactorGraph build_factor_graph(const Clause& clause, const Mode& mode, const SignatureMap& signatures);

// ---------------------------------------------------------------------------
// Operator IR

enum class OpKind {
  kUnaryLoad,  // v_q, broadcast to every row
  kMatVec,     // x * M_p or x * M_p^T; predicate "any" means the all-ones matrix
  kHadamard,   // elementwise product of >= 1 operands
  kOnes,       // all-ones message (a variable with no other neighbours)
  kAnyScale,   // (product of bases) scaled row-wise by the L1 norms of sources
  kClauseSum,  // sum of per-clause outputs
  kCall,       // evaluate another compiled function on an operand
  kZero,       // recursion bound reached
};

std::string_view op_name(OpKind kind);

// A compiled function is identified by predicate, mode and call depth.
struct FunctionKey {
  Mode mode;
  int depth = 0;

  std::string to_string() const;
  auto operator<=>(const FunctionKey&) const = default;
};

struct Operator {
  OpKind kind = OpKind::kZero;
  int dest = -1;
  std::vector<int> args;
  std::string predicate;      // kUnaryLoad, kMatVec
  bool transposed = false;    // kMatVec
  std::size_t num_bases = 0;  // kAnyScale: args[0, num_bases) are bases, the rest sources
  FunctionKey callee;         // kCall
};

// Register-based straight-line code. Every register is written exactly once
// and operands are always defined by earlier operators (or are the input).
struct OperatorSequence {
  struct Register {
    std::string name;
    std::string type;
  };

  std::vector<Register> registers;
  std::vector<Operator> ops;
  int input = -1;
  int output = -1;

  int add_register(std::string name, std::string type);
  const Register& reg(int r) const { return registers.at(static_cast<std::size_t>(r)); }
  // Checks single assignment and define-before-use; throws CompileError.
  void verify() const;
  std::string to_string() const;
};

// Unrolls message passing for one clause. Messages are requested from the
// output variable toward a fictional output literal; neighbours are visited in
// body order. Body literals naming theory predicates become Calls at
// `depth + 1`, or Zero once `depth + 1 >= max_depth`.
OperatorSequence compile_clause(const Clause& clause, const Mode& mode, const Program& program,
                                int depth, int max_depth);

// Replaces Hadamard products that consume an any-factor message by AnyScale
// over the message's source, dropping the any MatVecs.
OperatorSequence optimize(const OperatorSequence& sequence);

struct CompiledFunction {
  FunctionKey key;
  OperatorSequence sequence;
  std::vector<FunctionKey> calls;
  std::string input_type;
  std::string output_type;
};

// Theory call graph helpers.
bool is_recursive(const Theory& theory);
// 1 + the longest chain of theory-to-theory calls starting at `predicate`.
// Throws CompileError when the predicate can reach a recursive cycle.
int default_max_depth(const Theory& theory, std::string_view predicate);

// Memoized compiler for (predicate, mode, depth) triples. Compiling a
// function also compiles every function it calls.
class Registry {
 public:
  Registry(const Program& program, int max_depth, bool optimize = true);

  const CompiledFunction& compile(const Mode& mode, int depth = 0);
  const CompiledFunction* find(const FunctionKey& key) const;
  const CompiledFunction& at(const FunctionKey& key) const;

  std::vector<FunctionKey> keys() const;
  std::size_t size() const { return functions_.size(); }
  int max_depth() const { return max_depth_; }
  bool optimized() const { return optimize_; }
  const Program& program() const { return program_; }

  std::string to_string() const;

 private:
  std::unique_ptr<CompiledFunction> build(const FunctionKey& key) const;

  const Program& program_;
  int max_depth_;
  bool optimize_;
  std::map<FunctionKey, std::unique_ptr<CompiledFunction>> functions_;
};

}  // namespace dkg
