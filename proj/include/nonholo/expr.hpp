#ifndef NONHOLO_EXPR_HPP
#define NONHOLO_EXPR_HPP

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nonholo {

/// Immutable symbolic scalar over named variables.
///
/// Node kinds: constant, variable, neg, sin, cos, sum, product, and pow with
/// a constant rational exponent whose denominator is 1 or 2 (sqrt(u) is
/// stored as pow(u, 1/2)).  Subtraction and division are normalized at
/// construction: a - b becomes a + (-b), a / b becomes a * b^(-1), and
/// 1/sqrt(u) becomes u^(-1/2).  Expressions are immutable after construction
/// and safe to share across threads.
class Expr;

enum class ExprKind { kConst, kVar, kNeg, kSin, kCos, kAdd, kMul, kPow };

/// Interns a variable name, returning its stable id.  Thread-safe.
int intern_symbol(const std::string& name);
const std::string& symbol_name(int id);

/// Set of interned variable ids, stored as a bitmask.
class VarMask {
 public:
  void set(int id);
  bool test(int id) const;
  void merge(const VarMask& other);
  bool empty() const { return words_.empty(); }
  std::vector<int> ids() const;

 private:
  std::vector<std::uint64_t> words_;
};

struct ExprNode {
  ExprKind kind;
  double value = 0.0;  // kConst
  int var = -1;        // kVar
  int pow_num = 1;     // kPow exponent numerator
  int pow_den = 1;     // kPow exponent denominator (1 or 2)
  std::shared_ptr<const ExprNode> a;
  std::shared_ptr<const ExprNode> b;
  VarMask free_vars;
  std::size_t node_count = 1;
  std::size_t hash = 0;
};

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what), offset(offset) {}
  std::size_t offset;
};

/// Variable bindings for evaluation, indexed by interned symbol id.
class Environment {
 public:
  Environment() = default;
  Environment(std::initializer_list<std::pair<std::string, double>> vals);

  void set(const std::string& name, double value);
  void set_id(int id, double value);
  bool has(int id) const;
  double get(int id) const;  // throws EvalError when unbound
  void clear();

 private:
  std::vector<double> values_;
  std::vector<char> bound_;
};

class Expr {
 public:
  Expr() = default;  // empty handle; only assignment is valid on it

  static Expr constant(double v);
  static Expr var(const std::string& name);

  bool valid() const { return node_ != nullptr; }
  const ExprNode& node() const { return *node_; }
  ExprKind kind() const { return node_->kind; }
  std::size_t node_count() const { return node_ ? node_->node_count : 0; }
  const VarMask& free_vars() const { return node_->free_vars; }
  bool depends_on(int id) const { return node_->free_vars.test(id); }
  bool is_constant(double v) const;
  bool is_zero() const { return is_constant(0.0); }

  std::shared_ptr<const ExprNode> ptr() const { return node_; }
  static Expr wrap(std::shared_ptr<const ExprNode> n) { return Expr(std::move(n)); }

 private:
  explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}
  std::shared_ptr<const ExprNode> node_;
};

// Construction helpers.  Light normalization only: constant folding,
// 0/1 identities, neg(neg(x)) -> x, a/b -> a*b^(-1), sqrt -> pow(.,1/2).
Expr operator-(const Expr& e);
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr sin_of(const Expr& e);
Expr cos_of(const Expr& e);
Expr sqrt_of(const Expr& e);
Expr pow_of(const Expr& base, int num, int den = 1);

/// Total structural order; 0 on structural equality.
int expr_compare(const Expr& a, const Expr& b);
inline bool expr_equal(const Expr& a, const Expr& b) { return expr_compare(a, b) == 0; }

/// Parses the infix grammar (precedence ^ > unary- > * / > + -; functions
/// sin, cos, sqrt; identifiers [A-Za-z_][A-Za-z0-9_]*).  Throws ParseError
/// with the byte offset of the failure.
Expr parse_expression(const std::string& text);

/// Prints in the same grammar; parse_expression(to_string(e)) is structurally
/// equal to e.
std::string to_string(const Expr& e);

double evaluate(const Expr& e, const Environment& env);

/// Exact partial derivative with respect to `var`.
Expr partial_derivative(const Expr& e, const std::string& var);

/// Constant folding, 0/1 identities, and like-term flattening.  No
/// trigonometric rewriting.
Expr simplify(const Expr& e);

/// Per-variable sampling interval; a degenerate interval pins a value.
using Box = std::map<std::string, std::pair<double, double>>;

constexpr std::uint64_t kDefaultSeed = 0x5EED;

/// True iff |e| <= tol at `trials` points sampled uniformly from `box`.
/// Deterministic for a fixed seed.  Throws EvalError if a free variable of
/// `e` has no interval in `box`, or if evaluation fails at a sample.
bool probably_zero(const Expr& e, const Box& box, int trials = 256,
                   double tol = 1e-9, std::uint64_t seed = kDefaultSeed);

/// Uniform sample of `box` into `env` (appending/overwriting bindings).
void sample_box(const Box& box, std::uint64_t seed, int index, Environment* env);

/// Expression flattened to a postorder program over a fixed variable layout,
/// for fast repeated evaluation (ODE right-hand sides, sampled searches).
/// Variables outside `layout` must be pinned in `fixed` at compile time.
/// eval() is pure and safe to call concurrently.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& e, const std::vector<std::string>& layout,
               const std::map<std::string, double>& fixed);

  double eval(const double* values) const;
  double eval(const std::vector<double>& values) const { return eval(values.data()); }

 private:
  enum class Op : std::uint8_t { kConst, kVar, kNeg, kSin, kCos, kAdd, kMul, kPow };
  struct Step {
    Op op;
    int slot = 0;        // kVar
    int pow_num = 1;     // kPow
    int pow_den = 1;
    double value = 0.0;  // kConst
  };
  std::vector<Step> steps_;
  int max_depth_ = 0;
};

}  // namespace nonholo

#endif  // NONHOLO_EXPR_HPP
