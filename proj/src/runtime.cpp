#include "dkg/runtime.hpp"

#include <cmath>
#include <utility>

#include "dkg/errors.hpp"

namespace dkg {

void Tape::clear() {
  nodes_.clear();
  output_ = -1;
  calls_evaluated_ = 0;
}

Evaluator::Evaluator(const Registry& registry) : registry_(registry), kg_(registry.program().kg) {}

Batch Evaluator::encode(std::string_view type, std::span<const std::string> constants) const {
  Batch out = Batch::Zero(static_cast<Eigen::Index>(constants.size()),
                          static_cast<Eigen::Index>(kg_.domain_size(type)));
  for (std::size_t r = 0; r < constants.size(); ++r) {
    out(static_cast<Eigen::Index>(r), kg_.symbols().id(constants[r], type)) = 1.0;
  }
  return out;
}

Batch Evaluator::eval(const FunctionKey& key, const Batch& input, Tape* tape) const {
  return eval(registry_.at(key), input, tape);
}

Batch Evaluator::eval(const CompiledFunction& fn, const Batch& input, Tape* tape) const {
  const auto width = static_cast<Eigen::Index>(kg_.domain_size(fn.input_type));
  if (input.cols() != width) {
    throw UsageError("input for " + fn.key.to_string() + " has " + std::to_string(input.cols()) +
                     " columns, expected " + std::to_string(width) + " (type " + fn.input_type + ")");
  }
  Tape local;
  Tape& t = tape != nullptr ? *tape : local;
  t.clear();
  Tape::Node in;
  in.kind = Tape::NodeKind::kInput;
  in.name = fn.key.to_string() + ":input";
  in.value = input;
  const int input_node = push(t, std::move(in));
  std::map<std::pair<const CompiledFunction*, int>, int> memo;
  t.output_ = eval_function(fn, input_node, t, memo);
  return t.output();
}

int Evaluator::push(Tape& tape, Tape::Node node) const {
  if (!node.value.allFinite()) throw NumericError("non-finite value in register " + node.name);
  tape.nodes_.push_back(std::move(node));
  return static_cast<int>(tape.nodes_.size()) - 1;
}

int Evaluator::eval_function(const CompiledFunction& fn, int input_node, Tape& tape,
                             std::map<std::pair<const CompiledFunction*, int>, int>& memo) const {
  const OperatorSequence& seq = fn.sequence;
  std::vector<int> node_of(seq.registers.size(), -1);
  node_of[static_cast<std::size_t>(seq.input)] = input_node;
  const Eigen::Index rows = tape.nodes_[static_cast<std::size_t>(input_node)].value.rows();
  auto value = [&](int reg) -> const Batch& {
    return tape.nodes_[static_cast<std::size_t>(node_of[static_cast<std::size_t>(reg)])].value;
  };

  for (const Operator& op : seq.ops) {
    const auto width = static_cast<Eigen::Index>(kg_.domain_size(seq.reg(op.dest).type));
    Tape::Node node;
    node.name = fn.key.to_string() + ":" + seq.reg(op.dest).name;
    for (int a : op.args) node.args.push_back(node_of[static_cast<std::size_t>(a)]);

    switch (op.kind) {
      case OpKind::kUnaryLoad:
        node.kind = Tape::NodeKind::kUnaryLoad;
        node.relation = &kg_.relation(op.predicate);
        node.value = node.relation->vector().replicate(rows, 1);
        break;
      case OpKind::kMatVec: {
        const Batch& in = value(op.args[0]);
        if (op.predicate == kAnyPredicate) {
          node.kind = Tape::NodeKind::kAnyMatVec;
          node.value = in * Batch::Ones(in.cols(), width);
        } else {
          node.kind = Tape::NodeKind::kMatVec;
          node.relation = &kg_.relation(op.predicate);
          node.transposed = op.transposed;
          if (op.transposed) node.value = in * node.relation->matrix().transpose();
          else node.value = in * node.relation->matrix();
        }
        break;
      }
      case OpKind::kHadamard:
        node.kind = Tape::NodeKind::kHadamard;
        node.value = value(op.args[0]);
        for (std::size_t i = 1; i < op.args.size(); ++i) node.value.array() *= value(op.args[i]).array();
        break;
      case OpKind::kOnes:
        node.kind = Tape::NodeKind::kOnes;
        node.value = Batch::Ones(rows, width);
        break;
      case OpKind::kAnyScale: {
        node.kind = Tape::NodeKind::kAnyScale;
        node.num_bases = op.num_bases;
        node.value = Batch::Ones(rows, width);
        for (std::size_t i = 0; i < op.num_bases; ++i) node.value.array() *= value(op.args[i]).array();
        Eigen::VectorXd scale = Eigen::VectorXd::Ones(rows);
        for (std::size_t i = op.num_bases; i < op.args.size(); ++i) {
          scale.array() *= value(op.args[i]).rowwise().sum().array();
        }
        node.value = node.value.array().colwise() * scale.array();
        break;
      }
      case OpKind::kClauseSum:
        node.kind = Tape::NodeKind::kSum;
        node.value = Batch::Zero(rows, width);
        for (int a : op.args) node.value += value(a);
        break;
      case OpKind::kZero:
        node.kind = Tape::NodeKind::kZero;
        node.value = Batch::Zero(rows, width);
        break;
      case OpKind::kCall: {
        const CompiledFunction* callee = registry_.find(op.callee);
        if (callee == nullptr) throw UsageError("function " + op.callee.to_string() + " was not compiled");
        const int arg = node_of[static_cast<std::size_t>(op.args[0])];
        const auto key = std::make_pair(callee, arg);
        auto it = memo.find(key);
        if (it == memo.end()) {
          ++tape.calls_evaluated_;
          it = memo.emplace(key, eval_function(*callee, arg, tape, memo)).first;
        }
        node_of[static_cast<std::size_t>(op.dest)] = it->second;
        continue;
      }
    }
    node_of[static_cast<std::size_t>(op.dest)] = push(tape, std::move(node));
  }
  return node_of[static_cast<std::size_t>(seq.output)];
}

GradientMap Evaluator::grad(const Tape& tape, const Batch& upstream, bool all_predicates) const {
  if (tape.empty()) throw UsageError("grad needs a tape recorded by eval");
  const Batch& out = tape.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw UsageError("upstream gradient shape does not match the evaluation output");
  }

  const std::size_t n = tape.size();
  std::vector<Batch> adj(n);
  std::vector<bool> has(n, false);
  auto add = [&](int i, const Batch& g) {
    const auto k = static_cast<std::size_t>(i);
    if (has[k]) {
      adj[k] += g;
    } else {
      adj[k] = g;
      has[k] = true;
    }
  };
  adj[static_cast<std::size_t>(tape.output_)] = upstream;
  has[static_cast<std::size_t>(tape.output_)] = true;

  GradientMap grads;
  auto param_grad = [&](const RelationMatrix* rel) -> Eigen::VectorXd* {
    if (!all_predicates && !rel->trainable()) return nullptr;
    auto [it, inserted] = grads.try_emplace(rel->predicate());
    if (inserted) it->second = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rel->size()));
    return &it->second;
  };
  auto val = [&](int i) -> const Batch& { return tape.nodes_[static_cast<std::size_t>(i)].value; };

  for (std::size_t i = n; i-- > 0;) {
    if (!has[i]) continue;
    const Tape::Node& node = tape.nodes_[i];
    const Batch& a = adj[i];
    switch (node.kind) {
      case Tape::NodeKind::kInput:
      case Tape::NodeKind::kOnes:
      case Tape::NodeKind::kZero:
        break;
      case Tape::NodeKind::kUnaryLoad:
        if (auto* g = param_grad(node.relation)) {
          const Eigen::RowVectorXd colsum = a.colwise().sum();
          for (std::size_t k = 0; k < node.relation->size(); ++k) {
            (*g)[static_cast<Eigen::Index>(k)] += colsum[node.relation->row(k)];
          }
        }
        break;
      case Tape::NodeKind::kMatVec: {
        const auto& m = node.relation->matrix();
        const Batch& in = val(node.args[0]);
        if (node.transposed) add(node.args[0], a * m);
        else add(node.args[0], a * m.transpose());
        if (auto* g = param_grad(node.relation)) {
          for (std::size_t k = 0; k < node.relation->size(); ++k) {
            const ConstId r = node.relation->row(k);
            const ConstId c = node.relation->col(k);
            (*g)[static_cast<Eigen::Index>(k)] += node.transposed ? a.col(r).dot(in.col(c)) : in.col(r).dot(a.col(c));
          }
        }
        break;
      }
      case Tape::NodeKind::kAnyMatVec: {
        const Eigen::Index in_cols = val(node.args[0]).cols();
        add(node.args[0], a.rowwise().sum().replicate(1, in_cols));
        break;
      }
      case Tape::NodeKind::kHadamard:
        for (std::size_t j = 0; j < node.args.size(); ++j) {
          Batch g = a;
          for (std::size_t l = 0; l < node.args.size(); ++l) {
            if (l != j) g.array() *= val(node.args[l]).array();
          }
          add(node.args[j], g);
        }
        break;
      case Tape::NodeKind::kAnyScale: {
        const std::size_t nb = node.num_bases;
        const std::size_t ns = node.args.size() - nb;
        std::vector<Eigen::VectorXd> sums;
        for (std::size_t j = nb; j < node.args.size(); ++j) sums.push_back(val(node.args[j]).rowwise().sum());
        auto scale_except = [&](std::size_t skip) {
          Eigen::VectorXd s = Eigen::VectorXd::Ones(a.rows());
          for (std::size_t j = 0; j < ns; ++j) {
            if (j != skip) s.array() *= sums[j].array();
          }
          return s;
        };
        const Eigen::VectorXd full = scale_except(ns);
        for (std::size_t j = 0; j < nb; ++j) {
          Batch g = a;
          for (std::size_t l = 0; l < nb; ++l) {
            if (l != j) g.array() *= val(node.args[l]).array();
          }
          g = g.array().colwise() * full.array();
          add(node.args[j], g);
        }
        if (ns > 0) {
          Batch weighted = a;
          for (std::size_t l = 0; l < nb; ++l) weighted.array() *= val(node.args[l]).array();
          const Eigen::VectorXd coef = weighted.rowwise().sum();
          for (std::size_t j = 0; j < ns; ++j) {
            const Eigen::VectorXd c = coef.cwiseProduct(scale_except(j));
            add(node.args[nb + j], c.replicate(1, val(node.args[nb + j]).cols()));
          }
        }
        break;
      }
      case Tape::NodeKind::kSum:
        for (int arg : node.args) add(arg, a);
        break;
    }
  }
  return grads;
}

NormalizedBatch normalize_ratio(const Batch& batch) {
  NormalizedBatch out{batch, std::vector<bool>(static_cast<std::size_t>(batch.rows()), false)};
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const double total = batch.row(r).cwiseAbs().sum();
    if (total > 0.0) {
      out.values.row(r) /= total;
    } else {
      out.values.row(r).setZero();
      out.zero_rows[static_cast<std::size_t>(r)] = true;
    }
  }
  return out;
}

Batch softmax(const Batch& batch) {
  Batch out(batch.rows(), batch.cols());
  if (batch.cols() == 0) return out;
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const double m = batch.row(r).maxCoeff();
    out.row(r) = (batch.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace dkg
