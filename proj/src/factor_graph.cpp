#include <algorithm>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "dkg/compiler.hpp"
#include "dkg/errors.hpp"

namespace dkg {

namespace {

// Virtual variable names cannot collide with parsed variables.
constexpr std::string_view kVirtualInput = "#in";
constexpr std::string_view kVirtualOutput = "#out";

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
  std::vector<std::size_t> parent;
};

}  // namespace

InfluenceGraph influence_graph(const Clause& clause) {
  InfluenceGraph g;
  g.num_vertices = clause.body.size();
  for (std::size_t i = 0; i < clause.body.size(); ++i) {
    for (std::size_t j = i + 1; j < clause.body.size(); ++j) {
      const auto& a = clause.body[i].args;
      const auto& b = clause.body[j].args;
      const bool shares = std::any_of(a.begin(), a.end(), [&](const std::string& x) {
        return is_variable_name(x) && std::find(b.begin(), b.end(), x) != b.end();
      });
      if (shares) g.edges.emplace_back(i, j);
    }
  }
  return g;
}

bool is_polytree(const InfluenceGraph& graph) {
  DisjointSets sets(graph.num_vertices);
  for (const auto& [a, b] : graph.edges) {
    if (!sets.unite(a, b)) return false;
  }
  return true;
}

bool FactorGraph::connected() const {
  DisjointSets sets(variables.size());
  for (const auto& f : factors) {
    for (std::size_t i = 1; i < f.variables.size(); ++i) sets.unite(f.variables[0], f.variables[i]);
  }
  for (std::size_t v = 0; v < variables.size(); ++v) {
    if (sets.find(v) != sets.find(0)) return false;
  }
  return true;
}

bool FactorGraph::acyclic() const {
  // Bipartite graph: variables are 0..n-1, factors n..n+m-1.
  DisjointSets sets(variables.size() + factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    for (std::size_t v : factors[f].variables) {
      if (!sets.unite(v, variables.size() + f)) return false;
    }
  }
  return true;
}

std::size_t FactorGraph::num_any_factors() const {
  return static_cast<std::size_t>(
      std::count_if(factors.begin(), factors.end(), [](const Factor& f) { return f.is_any; }));
}

std::string FactorGraph::to_dot(std::string_view name) const {
  std::ostringstream out;
  out << "graph \"" << name << "\" {\n";
  for (std::size_t v = 0; v < variables.size(); ++v) {
    out << "  x" << v << " [label=\"" << variables[v].name << ":" << variables[v].type << "\"";
    if (v == input) out << ", shape=doublecircle";
    else if (v == output) out << ", shape=circle, style=bold";
    out << "];\n";
  }
  for (std::size_t f = 0; f < factors.size(); ++f) {
    out << "  f" << f << " [shape=box, label=\"" << factors[f].literal_index << ":" << factors[f].predicate
        << "\"";
    if (factors[f].is_any) out << ", style=dashed";
    out << "];\n";
    for (std::size_t v : factors[f].variables) out << "  f" << f << " -- x" << v << ";\n";
  }
  out << "}\n";
  return out.str();
}

FactorGraph build_factor_graph(const Clause& clause, const Mode& mode, const SignatureMap& signatures) {
  if (clause.head.predicate != mode.predicate || clause.head.arity() != mode.arity()) {
    throw CompileError("mode " + mode.to_string() + " does not fit clause '" + clause.to_string() + "'");
  }
  if (!is_polytree(influence_graph(clause))) {
    throw CompileError("clause is not a polytree: '" + clause.to_string() + "'");
  }

  const auto types = clause_variable_types(clause, signatures);
  FactorGraph g;
  std::map<std::string, std::size_t> index;
  for (const auto& name : clause.variables()) {
    index.emplace(name, g.variables.size());
    g.variables.push_back({name, types.at(name), false, {}});
  }

  auto head_var = [&](int pos, std::string_view virtual_name) {
    if (pos >= 0) return index.at(clause.head.args[static_cast<std::size_t>(pos)]);
    g.variables.push_back({std::string(virtual_name), std::string(kUnitType), true, {}});
    return g.variables.size() - 1;
  };
  g.input = head_var(mode.input_position(), kVirtualInput);
  g.output = head_var(mode.output_position(), kVirtualOutput);

  for (std::size_t i = 0; i < clause.body.size(); ++i) {
    FactorGraph::Factor f;
    f.predicate = clause.body[i].predicate;
    f.literal_index = i + 1;
    for (const auto& arg : clause.body[i].args) f.variables.push_back(index.at(arg));
    g.factors.push_back(std::move(f));
  }

  // Connect every component to the output's with an any-factor.
  DisjointSets sets(g.variables.size());
  for (const auto& f : g.factors) {
    for (std::size_t i = 1; i < f.variables.size(); ++i) sets.unite(f.variables[0], f.variables[i]);
  }
  std::map<std::size_t, std::vector<std::size_t>> components;
  for (std::size_t v = 0; v < g.variables.size(); ++v) components[sets.find(v)].push_back(v);
  const std::size_t out_root = sets.find(g.output);
  for (const auto& [root, members] : components) {
    if (root == out_root) continue;
    std::size_t rep = members.front();
    for (std::size_t v : members) {
      if (v != g.input) {
        rep = v;
        break;
      }
    }
    FactorGraph::Factor f;
    f.predicate = std::string(kAnyPredicate);
    f.variables = {g.output, rep};
    f.literal_index = g.factors.size() + 1;
    f.is_any = true;
    g.factors.push_back(std::move(f));
  }

  if (!g.acyclic()) {
    throw CompileError("factor graph of clause '" + clause.to_string() + "' contains a cycle");
  }

  for (std::size_t f = 0; f < g.factors.size(); ++f) {
    for (std::size_t v : g.factors[f].variables) g.variables[v].factors.push_back(f);
  }
  return g;
}

}  // namespace dkg
