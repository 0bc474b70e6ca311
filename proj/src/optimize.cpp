#include <map>

#include "dkg/compiler.hpp"

namespace dkg {

// v * M_any is a row-sum of v broadcast over the output domain, so a product
// with it is a row-wise rescaling and the dense all-ones matrix is never needed.
OperatorSequence optimize(const OperatorSequence& sequence) {
  std::map<int, int> any_source;  // register written by MatVec(any) -> its operand
  for (const auto& op : sequence.ops) {
    if (op.kind == OpKind::kMatVec && op.predicate == kAnyPredicate) any_source[op.dest] = op.args[0];
  }
  if (any_source.empty()) return sequence;

  std::vector<Operator> rewritten;
  for (const auto& op : sequence.ops) {
    Operator out = op;
    if (op.kind == OpKind::kHadamard) {
      std::vector<int> bases;
      std::vector<int> sources;
      for (int a : op.args) {
        if (const auto it = any_source.find(a); it != any_source.end()) sources.push_back(it->second);
        else bases.push_back(a);
      }
      if (!sources.empty()) {
        out.kind = OpKind::kAnyScale;
        out.num_bases = bases.size();
        out.args = std::move(bases);
        out.args.insert(out.args.end(), sources.begin(), sources.end());
      }
    }
    rewritten.push_back(std::move(out));
  }

  // Drop operators whose results are no longer read, then compact registers.
  std::vector<bool> live(sequence.registers.size(), false);
  live[static_cast<std::size_t>(sequence.output)] = true;
  std::vector<bool> keep(rewritten.size(), false);
  for (std::size_t i = rewritten.size(); i-- > 0;) {
    if (!live[static_cast<std::size_t>(rewritten[i].dest)]) continue;
    keep[i] = true;
    for (int a : rewritten[i].args) live[static_cast<std::size_t>(a)] = true;
  }
  live[static_cast<std::size_t>(sequence.input)] = true;

  OperatorSequence out;
  std::vector<int> remap(sequence.registers.size(), -1);
  for (std::size_t r = 0; r < sequence.registers.size(); ++r) {
    if (live[r]) remap[r] = out.add_register(sequence.registers[r].name, sequence.registers[r].type);
  }
  out.input = remap[static_cast<std::size_t>(sequence.input)];
  out.output = remap[static_cast<std::size_t>(sequence.output)];
  for (std::size_t i = 0; i < rewritten.size(); ++i) {
    if (!keep[i]) continue;
    Operator op = std::move(rewritten[i]);
    op.dest = remap[static_cast<std::size_t>(op.dest)];
    for (int& a : op.args) a = remap[static_cast<std::size_t>(a)];
    out.ops.push_back(std::move(op));
  }
  out.verify();
  return out;
}

}  // namespace dkg
