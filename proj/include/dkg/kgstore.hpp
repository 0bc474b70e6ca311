#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dkg {

using ConstId = std::int32_t;

// Type assigned to every argument of an undeclared predicate.
inline constexpr std::string_view kDefaultType = "thing";

// One-element domain standing in for the missing input (unary "o" mode) or
// missing output (unary "i" mode) of a query.
inline constexpr std::string_view kUnitType = "__unit";
inline constexpr std::string_view kUnitConstant = "true";

// Per-type dense interning of constant names.
class SymbolTable {
 public:
  SymbolTable();

  void declare_type(std::string_view type);
  bool has_type(std::string_view type) const;

  // Returns the existing id for (name, type) or allocates the next dense id.
  // The default type is always available; other types must be declared.
  ConstId intern(std::string_view name, std::string_view type);

  std::optional<ConstId> find(std::string_view name, std::string_view type) const;
  // Like find() but throws ValidationError for unknown names.
  ConstId id(std::string_view name, std::string_view type) const;
  const std::string& name(ConstId id, std::string_view type) const;

  std::size_t domain_size(std::string_view type) const;

  // Declared types, excluding the internal unit type.
  std::vector<std::string> types() const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  struct Domain {
    std::map<std::string, ConstId, std::less<>> ids;
    std::vector<std::string> names;
  };

  const Domain& domain(std::string_view type) const;

  std::map<std::string, Domain, std::less<>> domains_;
  bool frozen_ = false;
};

// Weighted facts of one predicate: a sparse |C_t1| x |C_t2| matrix for binary
// predicates, a row vector over C_t1 for unary ones.
//
// Facts are addressed by a dense parameter index k in [0, size()). After
// build() the index order is CSR order (binary) or ascending id (unary) and
// never changes; training rewrites weights in place and cannot add or remove
// facts.
class RelationMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int32_t>;

  RelationMatrix(std::string predicate, std::vector<std::string> arg_types);

  const std::string& predicate() const { return predicate_; }
  const std::vector<std::string>& arg_types() const { return arg_types_; }
  std::size_t arity() const { return arg_types_.size(); }

  bool trainable() const { return trainable_; }
  void set_trainable(bool flag) { trainable_ = flag; }

  // Staging, before build(). `col` is ignored for unary predicates.
  void add(ConstId row, ConstId col, double weight);
  void build(std::size_t rows, std::size_t cols);
  bool built() const { return built_; }

  std::size_t size() const;
  double weight(std::size_t k) const;
  void set_weight(std::size_t k, double weight);
  ConstId row(std::size_t k) const;
  ConstId col(std::size_t k) const;  // -1 for unary
  std::optional<std::size_t> find(ConstId row, ConstId col = -1) const;
  // Works before and after build().
  bool contains(ConstId row, ConstId col = -1) const;

  const Sparse& matrix() const;
  const Eigen::RowVectorXd& vector() const;

 private:
  void require_built() const;

  std::string predicate_;
  std::vector<std::string> arg_types_;
  bool trainable_ = false;
  bool built_ = false;

  std::vector<Eigen::Triplet<double, std::int32_t>> staged_;
  std::set<std::pair<ConstId, ConstId>> seen_;

  Sparse matrix_;
  std::vector<ConstId> rows_;  // row of each CSR entry

  Eigen::RowVectorXd dense_;
  std::vector<ConstId> support_;
};

// Constants, types, and weighted relations. Facts may be added until
// freeze(); afterwards only weights of existing facts can change.
class KnowledgeGraph {
 public:
  SymbolTable& symbols() { return symbols_; }
  const SymbolTable& symbols() const { return symbols_; }

  // Declares (or re-confirms) a predicate signature. Redeclaring with a
  // different signature is a ValidationError.
  void declare_predicate(std::string_view predicate, std::vector<std::string> arg_types);
  bool has_predicate(std::string_view predicate) const;
  std::vector<std::string> predicates() const;

  const RelationMatrix& relation(std::string_view predicate) const;
  RelationMatrix& relation(std::string_view predicate);
  const RelationMatrix* find_relation(std::string_view predicate) const;

  // Interns the arguments and stages the fact. Undeclared predicates get the
  // default type for every argument.
  void add_fact(std::string_view predicate, std::span<const std::string> args, double weight);

  void set_trainable(std::string_view predicate, bool flag);
  std::vector<std::string> trainable_predicates() const;

  void freeze();
  bool frozen() const { return frozen_; }

  std::size_t num_facts() const;
  std::size_t domain_size(std::string_view type) const { return symbols_.domain_size(type); }

  Eigen::RowVectorXd onehot(ConstId c, std::string_view type) const;

 private:
  SymbolTable symbols_;
  std::map<std::string, RelationMatrix, std::less<>> relations_;
  bool frozen_ = false;
};

// ".types" lines: predicate<TAB>type1[<TAB>type2]. '#' starts a comment line.
void load_types(KnowledgeGraph& kg, std::istream& in);

// ".facts" lines: predicate<TAB>arg1[<TAB>arg2][<TAB>weight]. A three-field
// line is read as unary-with-weight when the predicate is declared unary, or
// when the last field is a decimal literal containing '.', 'e' or 'E';
// otherwise it is a binary fact with weight 1.
void load_facts(KnowledgeGraph& kg, std::istream& in);
KnowledgeGraph load_facts(std::istream& in);

std::string serialize_facts(const KnowledgeGraph& kg);
std::string serialize_types(const KnowledgeGraph& kg);

// Shortest decimal text that always reads back as a weight (keeps a '.').
std::string format_weight(double w);

}  // namespace dkg
