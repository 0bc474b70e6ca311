#include "dkg/kgstore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>

#include "dkg/errors.hpp"
#include "text_util.hpp"

namespace dkg {

// ---------------------------------------------------------------------------
// SymbolTable

SymbolTable::SymbolTable() {
  declare_type(kDefaultType);
  declare_type(kUnitType);
  intern(kUnitConstant, kUnitType);
}

void SymbolTable::declare_type(std::string_view type) {
  if (type.empty()) throw ValidationError("empty type name");
  if (domains_.find(type) != domains_.end()) return;
  if (frozen_) throw UsageError("cannot declare type '" + std::string(type) + "' after freeze");
  domains_.emplace(std::string(type), Domain{});
}

bool SymbolTable::has_type(std::string_view type) const {
  return domains_.find(type) != domains_.end();
}

const SymbolTable::Domain& SymbolTable::domain(std::string_view type) const {
  const auto it = domains_.find(type);
  if (it == domains_.end()) throw ValidationError("undeclared type '" + std::string(type) + "'");
  return it->second;
}

ConstId SymbolTable::intern(std::string_view name, std::string_view type) {
  auto it = domains_.find(type);
  if (it == domains_.end()) throw ValidationError("undeclared type '" + std::string(type) + "'");
  Domain& d = it->second;
  if (const auto found = d.ids.find(name); found != d.ids.end()) return found->second;
  if (frozen_) {
    throw ValidationError("unknown constant '" + std::string(name) + "' of type '" +
                          std::string(type) + "' (symbol table is frozen)");
  }
  const auto id = static_cast<ConstId>(d.names.size());
  d.names.emplace_back(name);
  d.ids.emplace(std::string(name), id);
  return id;
}

std::optional<ConstId> SymbolTable::find(std::string_view name, std::string_view type) const {
  const auto it = domains_.find(type);
  if (it == domains_.end()) return std::nullopt;
  const auto found = it->second.ids.find(name);
  if (found == it->second.ids.end()) return std::nullopt;
  return found->second;
}

ConstId SymbolTable::id(std::string_view name, std::string_view type) const {
  if (auto found = find(name, type)) return *found;
  throw ValidationError("unknown constant '" + std::string(name) + "' of type '" +
                        std::string(type) + "'");
}

const std::string& SymbolTable::name(ConstId id, std::string_view type) const {
  const Domain& d = domain(type);
  if (id < 0 || static_cast<std::size_t>(id) >= d.names.size()) {
    throw std::out_of_range("constant id " + std::to_string(id) + " outside domain '" +
                            std::string(type) + "'");
  }
  return d.names[static_cast<std::size_t>(id)];
}

std::size_t SymbolTable::domain_size(std::string_view type) const {
  return domain(type).names.size();
}

std::vector<std::string> SymbolTable::types() const {
  std::vector<std::string> out;
  for (const auto& [t, d] : domains_) {
    if (t != kUnitType) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// RelationMatrix

RelationMatrix::RelationMatrix(std::string predicate, std::vector<std::string> arg_types)
    : predicate_(std::move(predicate)), arg_types_(std::move(arg_types)) {
  if (arg_types_.empty() || arg_types_.size() > 2) {
    throw ValidationError("predicate '" + predicate_ + "' must have arity 1 or 2");
  }
}

void RelationMatrix::add(ConstId row, ConstId col, double weight) {
  if (built_) throw UsageError("relation '" + predicate_ + "' is frozen");
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw ValidationError("fact of '" + predicate_ + "' has invalid weight " +
                          std::to_string(weight) + " (weights must be finite and >= 0)");
  }
  if (arity() == 1) col = 0;
  if (!seen_.emplace(row, col).second) {
    throw ValidationError("duplicate fact for predicate '" + predicate_ + "'");
  }
  staged_.emplace_back(row, col, weight);
}

void RelationMatrix::build(std::size_t rows, std::size_t cols) {
  if (built_) return;
  if (arity() == 2) {
    matrix_.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    matrix_.setFromTriplets(staged_.begin(), staged_.end());
    matrix_.makeCompressed();
    rows_.reserve(staged_.size());
    for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
      for (Sparse::InnerIterator it(matrix_, r); it; ++it) rows_.push_back(static_cast<ConstId>(r));
    }
  } else {
    std::sort(staged_.begin(), staged_.end(),
              [](const auto& a, const auto& b) { return a.row() < b.row(); });
    dense_ = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(rows));
    for (const auto& t : staged_) {
      support_.push_back(t.row());
      dense_[t.row()] = t.value();
    }
  }
  staged_.clear();
  staged_.shrink_to_fit();
  seen_.clear();
  built_ = true;
}

void RelationMatrix::require_built() const {
  if (!built_) throw UsageError("relation '" + predicate_ + "' is not frozen yet");
}

std::size_t RelationMatrix::size() const {
  if (!built_) return staged_.size();
  return arity() == 2 ? static_cast<std::size_t>(matrix_.nonZeros()) : support_.size();
}

double RelationMatrix::weight(std::size_t k) const {
  require_built();
  if (k >= size()) throw std::out_of_range("fact index out of range for '" + predicate_ + "'");
  return arity() == 2 ? matrix_.valuePtr()[k] : dense_[support_[k]];
}

void RelationMatrix::set_weight(std::size_t k, double weight) {
  require_built();
  if (k >= size()) throw std::out_of_range("fact index out of range for '" + predicate_ + "'");
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw ValidationError("weight of '" + predicate_ + "' must be finite and >= 0");
  }
  if (arity() == 2) {
    matrix_.valuePtr()[k] = weight;
  } else {
    dense_[support_[k]] = weight;
  }
}

ConstId RelationMatrix::row(std::size_t k) const {
  require_built();
  return arity() == 2 ? rows_.at(k) : support_.at(k);
}

ConstId RelationMatrix::col(std::size_t k) const {
  require_built();
  if (arity() == 1) return -1;
  if (k >= size()) throw std::out_of_range("fact index out of range");
  return matrix_.innerIndexPtr()[k];
}

std::optional<std::size_t> RelationMatrix::find(ConstId row, ConstId col) const {
  require_built();
  if (arity() == 1) {
    const auto it = std::lower_bound(support_.begin(), support_.end(), row);
    if (it == support_.end() || *it != row) return std::nullopt;
    return static_cast<std::size_t>(it - support_.begin());
  }
  if (row < 0 || row >= matrix_.outerSize()) return std::nullopt;
  const auto* outer = matrix_.outerIndexPtr();
  const auto* inner = matrix_.innerIndexPtr();
  const auto* begin = inner + outer[row];
  const auto* end = inner + outer[row + 1];
  const auto* it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return std::nullopt;
  return static_cast<std::size_t>(it - inner);
}

bool RelationMatrix::contains(ConstId row, ConstId col) const {
  if (!built_) return seen_.count({row, arity() == 1 ? 0 : col}) != 0;
  return find(row, col).has_value();
}

const RelationMatrix::Sparse& RelationMatrix::matrix() const {
  require_built();
  if (arity() != 2) throw UsageError("'" + predicate_ + "' is unary");
  return matrix_;
}

const Eigen::RowVectorXd& RelationMatrix::vector() const {
  require_built();
  if (arity() != 1) throw UsageError("'" + predicate_ + "' is binary");
  return dense_;
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

void KnowledgeGraph::declare_predicate(std::string_view predicate,
                                       std::vector<std::string> arg_types) {
  if (predicate.empty()) throw ValidationError("empty predicate name");
  if (const auto it = relations_.find(predicate); it != relations_.end()) {
    if (it->second.arg_types() != arg_types) {
      throw ValidationError("conflicting declarations for predicate '" + std::string(predicate) +
                            "'");
    }
    return;
  }
  if (frozen_) {
    throw UsageError("cannot declare predicate '" + std::string(predicate) + "' after freeze");
  }
  for (const auto& t : arg_types) symbols_.declare_type(t);
  relations_.emplace(std::string(predicate), RelationMatrix(std::string(predicate), std::move(arg_types)));
}

bool KnowledgeGraph::has_predicate(std::string_view predicate) const {
  return relations_.find(predicate) != relations_.end();
}

std::vector<std::string> KnowledgeGraph::predicates() const {
  std::vector<std::string> out;
  for (const auto& [p, r] : relations_) out.push_back(p);
  return out;
}

const RelationMatrix& KnowledgeGraph::relation(std::string_view predicate) const {
  const auto* r = find_relation(predicate);
  if (r == nullptr) throw ValidationError("unknown predicate '" + std::string(predicate) + "'");
  return *r;
}

RelationMatrix& KnowledgeGraph::relation(std::string_view predicate) {
  const auto it = relations_.find(predicate);
  if (it == relations_.end()) throw ValidationError("unknown predicate '" + std::string(predicate) + "'");
  return it->second;
}

const RelationMatrix* KnowledgeGraph::find_relation(std::string_view predicate) const {
  const auto it = relations_.find(predicate);
  return it == relations_.end() ? nullptr : &it->second;
}

void KnowledgeGraph::add_fact(std::string_view predicate, std::span<const std::string> args,
                              double weight) {
  if (frozen_) throw UsageError("knowledge graph is frozen");
  if (args.empty() || args.size() > 2) {
    throw ValidationError("fact of '" + std::string(predicate) + "' must have 1 or 2 arguments");
  }
  if (!has_predicate(predicate)) {
    declare_predicate(predicate, std::vector<std::string>(args.size(), std::string(kDefaultType)));
  }
  RelationMatrix& rel = relation(predicate);
  if (rel.arity() != args.size()) {
    throw ValidationError("predicate '" + std::string(predicate) + "' has arity " +
                          std::to_string(rel.arity()) + ", fact has " +
                          std::to_string(args.size()) + " arguments");
  }
  const ConstId a = symbols_.intern(args[0], rel.arg_types()[0]);
  const ConstId b = args.size() == 2 ? symbols_.intern(args[1], rel.arg_types()[1]) : -1;
  try {
    rel.add(a, b, weight);
  } catch (const ValidationError& e) {
    std::string fact = std::string(predicate) + "(" + args[0];
    if (args.size() == 2) fact += "," + args[1];
    fact += ")";
    throw ValidationError(std::string(e.what()) + ": " + fact);
  }
}

void KnowledgeGraph::set_trainable(std::string_view predicate, bool flag) {
  relation(predicate).set_trainable(flag);
}

std::vector<std::string> KnowledgeGraph::trainable_predicates() const {
  std::vector<std::string> out;
  for (const auto& [p, r] : relations_) {
    if (r.trainable()) out.push_back(p);
  }
  return out;
}

void KnowledgeGraph::freeze() {
  if (frozen_) return;
  symbols_.freeze();
  for (auto& [p, r] : relations_) {
    const std::size_t rows = symbols_.domain_size(r.arg_types()[0]);
    const std::size_t cols = r.arity() == 2 ? symbols_.domain_size(r.arg_types()[1]) : 1;
    r.build(rows, cols);
  }
  frozen_ = true;
}

std::size_t KnowledgeGraph::num_facts() const {
  std::size_t n = 0;
  for (const auto& [p, r] : relations_) n += r.size();
  return n;
}

Eigen::RowVectorXd KnowledgeGraph::onehot(ConstId c, std::string_view type) const {
  const std::size_t n = symbols_.domain_size(type);
  if (c < 0 || static_cast<std::size_t>(c) >= n) {
    throw std::out_of_range("constant id " + std::to_string(c) + " outside domain '" +
                            std::string(type) + "' of size " + std::to_string(n));
  }
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(n));
  v[c] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// File formats

void load_types(KnowledgeGraph& kg, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line, '#')) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError("type declaration needs predicate and 1 or 2 types", lineno);
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError("empty field in type declaration", lineno);
    }
    try {
      kg.declare_predicate(fields[0], std::vector<std::string>(fields.begin() + 1, fields.end()));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
}

void load_facts(KnowledgeGraph& kg, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line, '#')) continue;
    auto fields = detail::split(line, '\t');
    if (fields.size() < 2 || fields.size() > 4) {
      throw ParseError("fact needs 2 to 4 tab-separated fields", lineno);
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError("empty field in fact", lineno);
    }
    const std::string predicate = fields[0];
    const RelationMatrix* declared = kg.find_relation(predicate);
    std::size_t arity = 0;
    bool has_weight = false;
    switch (fields.size()) {
      case 2:
        arity = 1;
        break;
      case 4:
        arity = 2;
        has_weight = true;
        break;
      default:
        if (declared != nullptr) {
          arity = declared->arity();
        } else {
          arity = detail::looks_like_weight(fields[2]) ? 1 : 2;
        }
        has_weight = arity == 1;
        break;
    }
    double weight = 1.0;
    if (has_weight) {
      const auto w = detail::parse_double(fields.back());
      if (!w) throw ParseError("malformed weight '" + fields.back() + "'", lineno);
      weight = *w;
      if (*w < 0.0) {
        throw ValidationError("line " + std::to_string(lineno) + ": negative weight " +
                              fields.back() + " for " + predicate);
      }
    }
    const std::vector<std::string> args(fields.begin() + 1, fields.begin() + 1 + static_cast<long>(arity));
    try {
      kg.add_fact(predicate, args, weight);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

KnowledgeGraph load_facts(std::istream& in) {
  KnowledgeGraph kg;
  load_facts(kg, in);
  return kg;
}

std::string format_weight(double w) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), w);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string serialize_facts(const KnowledgeGraph& kg) {
  std::ostringstream out;
  const SymbolTable& sym = kg.symbols();
  for (const auto& p : kg.predicates()) {
    const RelationMatrix& r = kg.relation(p);
    for (std::size_t k = 0; k < r.size(); ++k) {
      out << p << '\t' << sym.name(r.row(k), r.arg_types()[0]);
      if (r.arity() == 2) out << '\t' << sym.name(r.col(k), r.arg_types()[1]);
      out << '\t' << format_weight(r.weight(k)) << '\n';
    }
  }
  return out.str();
}

std::string serialize_types(const KnowledgeGraph& kg) {
  std::ostringstream out;
  for (const auto& p : kg.predicates()) {
    out << p;
    for (const auto& t : kg.relation(p).arg_types()) out << '\t' << t;
    out << '\n';
  }
  return out.str();
}

}  // namespace dkg
