#include "dkg/compiler.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "dkg/errors.hpp"

namespace dkg {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kUnaryLoad: return "load";
    case OpKind::kMatVec: return "matvec";
    case OpKind::kHadamard: return "hadamard";
    case OpKind::kOnes: return "ones";
    case OpKind::kAnyScale: return "anyscale";
    case OpKind::kClauseSum: return "sum";
    case OpKind::kCall: return "call";
    case OpKind::kZero: return "zero";
  }
  return "?";
}

std::string FunctionKey::to_string() const {
  return mode.to_string() + "@" + std::to_string(depth);
}

int OperatorSequence::add_register(std::string name, std::string type) {
  registers.push_back({std::move(name), std::move(type)});
  return static_cast<int>(registers.size()) - 1;
}

void OperatorSequence::verify() const {
  std::vector<bool> defined(registers.size(), false);
  auto check = [&](int r, const char* what) {
    if (r < 0 || static_cast<std::size_t>(r) >= registers.size()) {
      throw CompileError(std::string(what) + " register " + std::to_string(r) + " out of range");
    }
  };
  check(input, "input");
  defined[static_cast<std::size_t>(input)] = true;
  for (const auto& op : ops) {
    for (int a : op.args) {
      check(a, "operand");
      if (!defined[static_cast<std::size_t>(a)]) {
        throw CompileError("register " + reg(a).name + " used before definition");
      }
    }
    check(op.dest, "destination");
    if (defined[static_cast<std::size_t>(op.dest)]) {
      throw CompileError("register " + reg(op.dest).name + " assigned twice");
    }
    defined[static_cast<std::size_t>(op.dest)] = true;
  }
  check(output, "output");
  if (!defined[static_cast<std::size_t>(output)]) throw CompileError("output register is never assigned");
}

std::string OperatorSequence::to_string() const {
  std::ostringstream out;
  auto name = [&](int r) { return reg(r).name; };
  auto join = [&](auto first, auto last, const char* sep) {
    std::string s;
    for (auto it = first; it != last; ++it) {
      if (it != first) s += sep;
      s += name(*it);
    }
    return s;
  };
  out << "input " << name(input) << " : " << reg(input).type << "\n";
  for (const auto& op : ops) {
    out << "  " << name(op.dest) << " = ";
    switch (op.kind) {
      case OpKind::kUnaryLoad: out << "v_" << op.predicate; break;
      case OpKind::kMatVec:
        out << name(op.args[0]) << " * M_" << op.predicate << (op.transposed ? "^T" : "");
        break;
      case OpKind::kHadamard: out << join(op.args.begin(), op.args.end(), " o "); break;
      case OpKind::kOnes: out << "ones(" << reg(op.dest).type << ")"; break;
      case OpKind::kAnyScale: {
        const auto split = op.args.begin() + static_cast<std::ptrdiff_t>(op.num_bases);
        out << "anyscale(" << join(op.args.begin(), split, " o ") << "; "
            << join(split, op.args.end(), ", ") << ")";
        break;
      }
      case OpKind::kClauseSum: out << join(op.args.begin(), op.args.end(), " + "); break;
      case OpKind::kCall: out << "call " << op.callee.to_string() << "(" << name(op.args[0]) << ")"; break;
      case OpKind::kZero: out << "zeros(" << reg(op.dest).type << ")"; break;
    }
    out << "\n";
  }
  out << "output " << name(output) << " : " << reg(output).type << "\n";
  return out.str();
}

namespace {

class ClauseCompiler {
 public:
  ClauseCompiler(const FactorGraph& graph, const Program& program, int depth, int max_depth,
                 OperatorSequence& seq)
      : g_(graph), program_(program), depth_(depth), max_depth_(max_depth), seq_(seq) {}

  static constexpr std::size_t kFictional = std::numeric_limits<std::size_t>::max();

  // Message from variable v toward factor `to` (kFictional for the head).
  int variable_message(std::size_t v, std::size_t to) {
    const auto& var = g_.variables[v];
    std::vector<int> incoming;
    for (std::size_t f : var.factors) {
      if (f != to) incoming.push_back(factor_message(f, v));
    }
    if (v == g_.input) {
      if (incoming.empty()) return seq_.input;
      incoming.insert(incoming.begin(), seq_.input);
    }
    const int dest = seq_.add_register("v[" + var.name + "]", var.type);
    Operator op;
    op.dest = dest;
    if (incoming.empty()) {
      op.kind = OpKind::kOnes;
    } else {
      op.kind = OpKind::kHadamard;
      op.args = std::move(incoming);
    }
    seq_.ops.push_back(std::move(op));
    return dest;
  }

  // Message from factor f toward its variable v.
  int factor_message(std::size_t f, std::size_t v) {
    const auto& factor = g_.factors[f];
    const auto& var = g_.variables[v];
    const int dest_name_index = static_cast<int>(factor.literal_index);
    auto new_dest = [&] {
      return seq_.add_register("v[" + std::to_string(dest_name_index) + "," + var.name + "]", var.type);
    };

    if (factor.variables.size() == 1) {
      if (!program_.is_theory_predicate(factor.predicate)) {
        Operator op;
        op.kind = OpKind::kUnaryLoad;
        op.predicate = factor.predicate;
        op.dest = new_dest();
        seq_.ops.push_back(op);
        return op.dest;
      }
      Operator ones;
      ones.kind = OpKind::kOnes;
      ones.dest = seq_.add_register("ones[" + std::to_string(dest_name_index) + "]", std::string(kUnitType));
      seq_.ops.push_back(ones);
      return call(Mode{factor.predicate, Direction::kO}, ones.dest, new_dest());
    }

    const bool to_second = factor.variables[1] == v;
    const std::size_t other = to_second ? factor.variables[0] : factor.variables[1];
    const int src = variable_message(other, f);
    if (factor.is_any || !program_.is_theory_predicate(factor.predicate)) {
      Operator op;
      op.kind = OpKind::kMatVec;
      op.predicate = factor.predicate;
      op.transposed = !to_second;
      op.args = {src};
      op.dest = new_dest();
      seq_.ops.push_back(op);
      return op.dest;
    }
    return call(Mode{factor.predicate, to_second ? Direction::kIO : Direction::kOI}, src, new_dest());
  }

 private:
  int call(Mode mode, int src, int dest) {
    Operator op;
    op.dest = dest;
    if (depth_ + 1 >= max_depth_) {
      op.kind = OpKind::kZero;
    } else {
      op.kind = OpKind::kCall;
      op.args = {src};
      op.callee = FunctionKey{std::move(mode), depth_ + 1};
    }
    seq_.ops.push_back(std::move(op));
    return dest;
  }

  const FactorGraph& g_;
  const Program& program_;
  int depth_;
  int max_depth_;
  OperatorSequence& seq_;
};

}  // namespace

OperatorSequence compile_clause(const Clause& clause, const Mode& mode, const Program& program, int depth,
                                int max_depth) {
  const FactorGraph graph = build_factor_graph(clause, mode, program.signatures);
  OperatorSequence seq;
  seq.input = seq.add_register("u", graph.variables[graph.input].type);
  ClauseCompiler compiler(graph, program, depth, max_depth, seq);
  seq.output = compiler.variable_message(graph.output, ClauseCompiler::kFictional);
  seq.verify();
  return seq;
}

bool is_recursive(const Theory& theory) {
  for (const auto& p : theory.defined_predicates()) {
    try {
      default_max_depth(theory, p);
    } catch (const CompileError&) {
      return true;
    }
  }
  return false;
}

int default_max_depth(const Theory& theory, std::string_view predicate) {
  std::map<std::string, int, std::less<>> longest;
  std::set<std::string, std::less<>> active;
  std::function<int(std::string_view)> visit = [&](std::string_view p) -> int {
    if (const auto it = longest.find(p); it != longest.end()) return it->second;
    if (active.count(p) != 0) {
      throw CompileError("predicate '" + std::string(p) +
                         "' is recursive; an explicit maximum depth is required");
    }
    active.emplace(p);
    int best = 0;
    for (const Clause* c : theory.clauses_for(p)) {
      for (const auto& lit : c->body) {
        if (theory.defines(lit.predicate)) best = std::max(best, 1 + visit(lit.predicate));
      }
    }
    active.erase(active.find(p));
    longest.emplace(std::string(p), best);
    return best;
  };
  return 1 + visit(predicate);
}

Registry::Registry(const Program& program, int max_depth, bool optimize)
    : program_(program), max_depth_(max_depth), optimize_(optimize) {
  if (max_depth < 1) throw UsageError("maximum depth must be at least 1");
}

const CompiledFunction* Registry::find(const FunctionKey& key) const {
  const auto it = functions_.find(key);
  return it == functions_.end() ? nullptr : it->second.get();
}

const CompiledFunction& Registry::at(const FunctionKey& key) const {
  const auto* fn = find(key);
  if (fn == nullptr) throw UsageError("function " + key.to_string() + " has not been compiled");
  return *fn;
}

std::vector<FunctionKey> Registry::keys() const {
  std::vector<FunctionKey> out;
  for (const auto& [key, fn] : functions_) out.push_back(key);
  return out;
}

const CompiledFunction& Registry::compile(const Mode& mode, int depth) {
  if (depth < 0 || depth >= max_depth_) {
    throw UsageError("depth " + std::to_string(depth) + " outside [0, " + std::to_string(max_depth_) + ")");
  }
  const FunctionKey key{mode, depth};
  if (const auto* fn = find(key)) return *fn;
  auto built = build(key);
  const CompiledFunction& ref = *built;
  functions_.emplace(key, std::move(built));
  for (const auto& callee : ref.calls) compile(callee.mode, callee.depth);
  return ref;
}

std::unique_ptr<CompiledFunction> Registry::build(const FunctionKey& key) const {
  const Mode& mode = key.mode;
  auto fn = std::make_unique<CompiledFunction>();
  fn->key = key;
  fn->input_type = program_.input_type(mode);
  fn->output_type = program_.output_type(mode);

  std::vector<Clause> clauses;
  if (program_.is_theory_predicate(mode.predicate)) {
    for (const Clause* c : program_.theory.clauses_for(mode.predicate)) clauses.push_back(*c);
  } else if (program_.kg.has_predicate(mode.predicate)) {
    // Direct KG lookup: p(X,Y) :- p(X,Y).
    Literal lit{mode.predicate, mode.arity() == 2 ? std::vector<std::string>{"X", "Y"}
                                                  : std::vector<std::string>{"X"}};
    clauses.push_back(Clause{lit, {lit}, "", 0});
  } else {
    throw CompileError("undefined predicate '" + mode.predicate + "'");
  }

  OperatorSequence& seq = fn->sequence;
  seq.input = seq.add_register("u", fn->input_type);
  std::vector<int> outputs;
  for (std::size_t k = 0; k < clauses.size(); ++k) {
    OperatorSequence part;
    try {
      part = compile_clause(clauses[k], mode, program_, key.depth, max_depth_);
    } catch (const CompileError& e) {
      throw CompileError(std::string(e.what()) + " (compiling " + key.to_string() + ")");
    }
    if (optimize_) part = optimize(part);

    const std::string prefix = "c" + std::to_string(k + 1) + ".";
    std::vector<int> remap(part.registers.size(), -1);
    remap[static_cast<std::size_t>(part.input)] = seq.input;
    for (std::size_t r = 0; r < part.registers.size(); ++r) {
      if (static_cast<int>(r) == part.input) continue;
      remap[r] = seq.add_register(prefix + part.registers[r].name, part.registers[r].type);
    }
    for (auto op : part.ops) {
      op.dest = remap[static_cast<std::size_t>(op.dest)];
      for (int& a : op.args) a = remap[static_cast<std::size_t>(a)];
      if (op.kind == OpKind::kCall &&
          std::find(fn->calls.begin(), fn->calls.end(), op.callee) == fn->calls.end()) {
        fn->calls.push_back(op.callee);
      }
      seq.ops.push_back(std::move(op));
    }
    outputs.push_back(remap[static_cast<std::size_t>(part.output)]);
  }

  Operator sum;
  sum.kind = OpKind::kClauseSum;
  sum.args = std::move(outputs);
  sum.dest = seq.add_register("g", fn->output_type);
  seq.ops.push_back(sum);
  seq.output = sum.dest;
  seq.verify();
  return fn;
}

std::string Registry::to_string() const {
  std::ostringstream out;
  for (const auto& [key, fn] : functions_) {
    out << "function " << key.to_string() << " : " << fn->input_type << " -> " << fn->output_type << "\n";
    out << fn->sequence.to_string() << "\n";
  }
  return out.str();
}

}  // namespace dkg
