#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dkg/compiler.hpp"
#include "dkg/kgstore.hpp"

namespace dkg {

// Rows are examples, columns the constants of one type.
using Batch = Eigen::MatrixXd;

// Gradient per predicate, indexed like RelationMatrix's parameter index.
using GradientMap = std::map<std::string, Eigen::VectorXd, std::less<>>;

// Values of every operator applied during one evaluation, in execution order.
// Calls are inlined: the callee's operators are recorded between the caller's.
class Tape {
 public:
  enum class NodeKind { kInput, kUnaryLoad, kMatVec, kAnyMatVec, kHadamard, kOnes, kAnyScale, kSum, kZero };

  struct Node {
    NodeKind kind = NodeKind::kInput;
    std::vector<int> args;
    std::size_t num_bases = 0;
    const RelationMatrix* relation = nullptr;
    bool transposed = false;
    std::string name;  // "<function>:<register>"
    Batch value;
  };

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  const Batch& output() const { return nodes_.at(static_cast<std::size_t>(output_)).value; }
  // Number of distinct (callee, operand) evaluations; repeated calls are shared.
  std::size_t calls_evaluated() const { return calls_evaluated_; }
  void clear();

 private:
  friend class Evaluator;

  std::vector<Node> nodes_;
  int output_ = -1;
  std::size_t calls_evaluated_ = 0;
};

// Evaluates compiled functions against the registry's program. Reentrant:
// all state of one evaluation lives in its Tape.
class Evaluator {
 public:
  explicit Evaluator(const Registry& registry);

  // Output row r holds the unnormalized answer weights for input row r.
  Batch eval(const CompiledFunction& fn, const Batch& input, Tape* tape = nullptr) const;
  Batch eval(const FunctionKey& key, const Batch& input, Tape* tape = nullptr) const;

  // Gradient of sum(upstream .* output) with respect to fact weights. Only
  // trainable predicates appear unless `all_predicates` is set.
  GradientMap grad(const Tape& tape, const Batch& upstream, bool all_predicates = false) const;

  // One-hot rows for the named constants of `type`.
  Batch encode(std::string_view type, std::span<const std::string> constants) const;

  const Registry& registry() const { return registry_; }

 private:
  int eval_function(const CompiledFunction& fn, int input_node, Tape& tape,
                    std::map<std::pair<const CompiledFunction*, int>, int>& memo) const;
  int push(Tape& tape, Tape::Node node) const;

  const Registry& registry_;
  const KnowledgeGraph& kg_;
};

struct NormalizedBatch {
  Batch values;
  std::vector<bool> zero_rows;
};

// Divides each row by its L1 norm; all-zero rows stay zero and are flagged.
NormalizedBatch normalize_ratio(const Batch& batch);

// Row-wise softmax with max subtraction.
Batch softmax(const Batch& batch);

}  // namespace dkg
