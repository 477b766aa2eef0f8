#include "nonholo/expr.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <random>
#include <sstream>
#include <unordered_map>

namespace nonholo {

namespace {

struct SymbolTable {
  std::mutex mu;
  std::unordered_map<std::string, int> ids;
  std::vector<std::string> names;
};

SymbolTable& symbols() {
  static SymbolTable table;
  return table;
}

}  // namespace

int intern_symbol(const std::string& name) {
  SymbolTable& t = symbols();
  std::lock_guard<std::mutex> lock(t.mu);
  auto it = t.ids.find(name);
  if (it != t.ids.end()) return it->second;
  int id = static_cast<int>(t.names.size());
  t.names.push_back(name);
  t.ids.emplace(name, id);
  return id;
}

const std::string& symbol_name(int id) {
  SymbolTable& t = symbols();
  std::lock_guard<std::mutex> lock(t.mu);
  return t.names.at(static_cast<std::size_t>(id));
}

void VarMask::set(int id) {
  std::size_t word = static_cast<std::size_t>(id) / 64;
  if (word >= words_.size()) words_.resize(word + 1, 0);
  words_[word] |= (std::uint64_t{1} << (id % 64));
}

bool VarMask::test(int id) const {
  std::size_t word = static_cast<std::size_t>(id) / 64;
  if (word >= words_.size()) return false;
  return (words_[word] >> (id % 64)) & 1u;
}

void VarMask::merge(const VarMask& other) {
  if (other.words_.size() > words_.size()) words_.resize(other.words_.size(), 0);
  for (std::size_t i = 0; i < other.words_.size(); ++i) words_[i] |= other.words_[i];
}

std::vector<int> VarMask::ids() const {
  std::vector<int> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t bits = words_[w];
    while (bits) {
      int bit = std::countr_zero(bits);
      out.push_back(static_cast<int>(w * 64) + bit);
      bits &= bits - 1;
    }
  }
  return out;
}

Environment::Environment(std::initializer_list<std::pair<std::string, double>> vals) {
  for (const auto& [name, v] : vals) set(name, v);
}

void Environment::set(const std::string& name, double value) { set_id(intern_symbol(name), value); }

void Environment::set_id(int id, double value) {
  std::size_t n = static_cast<std::size_t>(id);
  if (n >= values_.size()) {
    values_.resize(n + 1, 0.0);
    bound_.resize(n + 1, 0);
  }
  values_[n] = value;
  bound_[n] = 1;
}

bool Environment::has(int id) const {
  std::size_t n = static_cast<std::size_t>(id);
  return n < bound_.size() && bound_[n];
}

double Environment::get(int id) const {
  if (!has(id)) throw EvalError("unbound variable: " + symbol_name(id));
  return values_[static_cast<std::size_t>(id)];
}

void Environment::clear() {
  std::fill(bound_.begin(), bound_.end(), 0);
}

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;

std::size_t combine_hash(std::size_t h, std::size_t v) {
  return h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
}

NodePtr finish(std::unique_ptr<ExprNode> n) {
  std::size_t h = static_cast<std::size_t>(n->kind) * 0x100000001b3ull;
  std::size_t count = 1;
  switch (n->kind) {
    case ExprKind::kConst:
      h = combine_hash(h, std::hash<double>{}(n->value));
      break;
    case ExprKind::kVar:
      h = combine_hash(h, static_cast<std::size_t>(n->var));
      n->free_vars.set(n->var);
      break;
    case ExprKind::kPow:
      h = combine_hash(h, static_cast<std::size_t>(n->pow_num * 8 + n->pow_den));
      [[fallthrough]];
    default:
      if (n->a) {
        h = combine_hash(h, n->a->hash);
        count += n->a->node_count;
        n->free_vars.merge(n->a->free_vars);
      }
      if (n->b) {
        h = combine_hash(h, n->b->hash);
        count += n->b->node_count;
        n->free_vars.merge(n->b->free_vars);
      }
      break;
  }
  n->hash = h;
  n->node_count = count;
  return NodePtr(n.release());
}

NodePtr make_const_node(double v) {
  auto n = std::make_unique<ExprNode>();
  n->kind = ExprKind::kConst;
  n->value = v;
  return finish(std::move(n));
}

NodePtr make_unary(ExprKind k, NodePtr a) {
  auto n = std::make_unique<ExprNode>();
  n->kind = k;
  n->a = std::move(a);
  return finish(std::move(n));
}

NodePtr make_binary(ExprKind k, NodePtr a, NodePtr b) {
  auto n = std::make_unique<ExprNode>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return finish(std::move(n));
}

NodePtr make_pow_node(NodePtr base, int num, int den) {
  auto n = std::make_unique<ExprNode>();
  n->kind = ExprKind::kPow;
  n->a = std::move(base);
  n->pow_num = num;
  n->pow_den = den;
  return finish(std::move(n));
}

bool node_is_const(const NodePtr& n, double v) {
  return n->kind == ExprKind::kConst && n->value == v;
}

void normalize_exponent(int* num, int* den) {
  if (*den < 0) {
    *den = -*den;
    *num = -*num;
  }
  if (*den == 2 && *num % 2 == 0) {
    *num /= 2;
    *den = 1;
  }
}

}  // namespace

Expr Expr::constant(double v) { return Expr::wrap(make_const_node(v)); }

Expr Expr::var(const std::string& name) {
  auto n = std::make_unique<ExprNode>();
  n->kind = ExprKind::kVar;
  n->var = intern_symbol(name);
  return Expr::wrap(finish(std::move(n)));
}

bool Expr::is_constant(double v) const {
  return node_ && node_->kind == ExprKind::kConst && node_->value == v;
}

Expr operator-(const Expr& e) {
  const ExprNode& n = e.node();
  if (n.kind == ExprKind::kConst) return Expr::constant(-n.value);
  if (n.kind == ExprKind::kNeg) return Expr::wrap(n.a);
  return Expr::wrap(make_unary(ExprKind::kNeg, e.ptr()));
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.node().kind == ExprKind::kConst && b.node().kind == ExprKind::kConst) {
    double v = a.node().value + b.node().value;
    if (std::isfinite(v)) return Expr::constant(v);
  }
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return Expr::wrap(make_binary(ExprKind::kAdd, a.ptr(), b.ptr()));
}

Expr operator-(const Expr& a, const Expr& b) { return a + (-b); }

Expr operator*(const Expr& a, const Expr& b) {
  if (a.node().kind == ExprKind::kConst && b.node().kind == ExprKind::kConst) {
    double v = a.node().value * b.node().value;
    if (std::isfinite(v)) return Expr::constant(v);
  }
  if (a.is_zero() || b.is_zero()) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  return Expr::wrap(make_binary(ExprKind::kMul, a.ptr(), b.ptr()));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_constant(1.0)) return a;
  if (a.is_zero()) return Expr::constant(0.0);
  Expr inv = pow_of(b, -1, 1);
  if (a.is_constant(1.0)) return inv;
  return a * inv;
}

Expr sin_of(const Expr& e) {
  if (e.node().kind == ExprKind::kConst) return Expr::constant(std::sin(e.node().value));
  return Expr::wrap(make_unary(ExprKind::kSin, e.ptr()));
}

Expr cos_of(const Expr& e) {
  if (e.node().kind == ExprKind::kConst) return Expr::constant(std::cos(e.node().value));
  return Expr::wrap(make_unary(ExprKind::kCos, e.ptr()));
}

Expr sqrt_of(const Expr& e) { return pow_of(e, 1, 2); }

Expr pow_of(const Expr& base, int num, int den) {
  if (den != 1 && den != 2 && den != -1 && den != -2)
    throw std::invalid_argument("pow: exponent denominator must be 1 or 2");
  normalize_exponent(&num, &den);
  if (num == 0) return Expr::constant(1.0);
  if (num == 1 && den == 1) return base;
  const ExprNode& n = base.node();
  if (n.kind == ExprKind::kConst) {
    double v = n.value;
    if (den == 1) {
      if (v != 0.0 || num > 0) {
        double folded = std::pow(v, num);
        if (std::isfinite(folded)) return Expr::constant(folded);
      }
      // else keep the node; evaluation reports division by zero / overflow
    } else if (v >= 0.0) {
      double folded = std::pow(v, static_cast<double>(num) / den);
      if (std::isfinite(folded)) return Expr::constant(folded);
    }
  }
  if (n.kind == ExprKind::kPow && den == 1) {
    // (u^(p/q))^n = u^(p*n/q) for integer n; a half outer exponent must stay
    // nested (sqrt(x^2) is |x|, not x)
    return pow_of(Expr::wrap(n.a), n.pow_num * num, n.pow_den);
  }
  // pow(u, e) with e rational: 1/sqrt(u) arrives here as pow(u, -1/2)
  return Expr::wrap(make_pow_node(base.ptr(), num, den));
}

int expr_compare(const Expr& a, const Expr& b) {
  const ExprNode* x = &a.node();
  const ExprNode* y = &b.node();
  if (x == y) return 0;
  if (x->kind != y->kind) return x->kind < y->kind ? -1 : 1;
  switch (x->kind) {
    case ExprKind::kConst:
      if (x->value != y->value) return x->value < y->value ? -1 : 1;
      return 0;
    case ExprKind::kVar: {
      if (x->var == y->var) return 0;
      const std::string& nx = symbol_name(x->var);
      const std::string& ny = symbol_name(y->var);
      int c = nx.compare(ny);
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case ExprKind::kPow: {
      if (x->pow_num * y->pow_den != y->pow_num * x->pow_den) {
        double ex = static_cast<double>(x->pow_num) / x->pow_den;
        double ey = static_cast<double>(y->pow_num) / y->pow_den;
        return ex < ey ? -1 : 1;
      }
      return expr_compare(Expr::wrap(x->a), Expr::wrap(y->a));
    }
    default: {
      if (x->hash != y->hash) {
        // hash mismatch guarantees inequality; still order structurally
      }
      int c = expr_compare(Expr::wrap(x->a), Expr::wrap(y->a));
      if (c != 0) return c;
      if (x->b && y->b) return expr_compare(Expr::wrap(x->b), Expr::wrap(y->b));
      if (x->b) return 1;
      if (y->b) return -1;
      return 0;
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double eval_node(const ExprNode& n, const Environment& env) {
  switch (n.kind) {
    case ExprKind::kConst:
      return n.value;
    case ExprKind::kVar:
      return env.get(n.var);
    case ExprKind::kNeg:
      return -eval_node(*n.a, env);
    case ExprKind::kSin:
      return std::sin(eval_node(*n.a, env));
    case ExprKind::kCos:
      return std::cos(eval_node(*n.a, env));
    case ExprKind::kAdd:
      return eval_node(*n.a, env) + eval_node(*n.b, env);
    case ExprKind::kMul:
      return eval_node(*n.a, env) * eval_node(*n.b, env);
    case ExprKind::kPow: {
      double base = eval_node(*n.a, env);
      if (n.pow_den == 2 && base < 0.0)
        throw EvalError("sqrt of negative value " + std::to_string(base));
      if (n.pow_num < 0 && base == 0.0) throw EvalError("division by zero");
      double r = n.pow_den == 2 ? std::sqrt(base) : base;
      double out = 1.0;
      int k = std::abs(n.pow_num);
      for (int i = 0; i < k; ++i) out *= r;
      return n.pow_num < 0 ? 1.0 / out : out;
    }
  }
  throw EvalError("corrupt expression node");
}

}  // namespace

double evaluate(const Expr& e, const Environment& env) {
  double v = eval_node(e.node(), env);
  if (!std::isfinite(v)) throw EvalError("non-finite result");
  return v;
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

Expr diff_node(const Expr& e, int var) {
  if (!e.depends_on(var)) return Expr::constant(0.0);
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::kVar:
      return Expr::constant(1.0);
    case ExprKind::kNeg:
      return -diff_node(Expr::wrap(n.a), var);
    case ExprKind::kSin:
      return cos_of(Expr::wrap(n.a)) * diff_node(Expr::wrap(n.a), var);
    case ExprKind::kCos:
      return -(sin_of(Expr::wrap(n.a)) * diff_node(Expr::wrap(n.a), var));
    case ExprKind::kAdd:
      return diff_node(Expr::wrap(n.a), var) + diff_node(Expr::wrap(n.b), var);
    case ExprKind::kMul: {
      Expr a = Expr::wrap(n.a);
      Expr b = Expr::wrap(n.b);
      return diff_node(a, var) * b + a * diff_node(b, var);
    }
    case ExprKind::kPow: {
      Expr u = Expr::wrap(n.a);
      Expr coeff = Expr::constant(static_cast<double>(n.pow_num) / n.pow_den);
      Expr inner = pow_of(u, n.pow_num - n.pow_den, n.pow_den);
      return coeff * inner * diff_node(u, var);
    }
    default:
      return Expr::constant(0.0);  // kConst handled by depends_on
  }
}

}  // namespace

Expr partial_derivative(const Expr& e, const std::string& var) {
  return diff_node(e, intern_symbol(var));
}

// ---------------------------------------------------------------------------
// Simplification: constant folding, 0/1 identities, like-term flattening.

namespace {

struct Factor {
  Expr base;
  int num;  // exponent numerator
  int den;  // exponent denominator
};

Expr rebuild_pow(const Expr& base, int num, int den) {
  normalize_exponent(&num, &den);
  return pow_of(base, num, den);
}

// Collects a product tree into (constant, factor list).  Negations fold into
// the constant.  Returns false through `infinite` when a 0^negative shows up.
void collect_factors(const Expr& e, int num, int den, double* coeff, std::vector<Factor>* out);

void add_factor(const Expr& base, int num, int den, double* coeff, std::vector<Factor>* out) {
  normalize_exponent(&num, &den);
  if (num == 0) return;
  const ExprNode& n = base.node();
  if (n.kind == ExprKind::kConst) {
    double v = n.value;
    if (den == 1 && (v != 0.0 || num > 0)) {
      *coeff *= std::pow(v, num);
      return;
    }
    if (den == 2 && v >= 0.0) {
      *coeff *= std::pow(v, static_cast<double>(num) / den);
      return;
    }
  }
  for (Factor& f : *out) {
    if (expr_equal(f.base, base)) {
      // a^(p/q) * a^(r/s): denominators are 1 or 2, so the sum stays closed
      int nn = f.num * den + num * f.den;
      int dd = f.den * den;
      if (dd == 4) {
        nn /= 2;
        dd = 2;
      }
      normalize_exponent(&nn, &dd);
      f.num = nn;
      f.den = dd;
      return;
    }
  }
  out->push_back(Factor{base, num, den});
}

void collect_factors(const Expr& e, int num, int den, double* coeff, std::vector<Factor>* out) {
  const ExprNode& n = e.node();
  if (n.kind == ExprKind::kConst) {
    add_factor(e, num, den, coeff, out);
    return;
  }
  if (n.kind == ExprKind::kNeg) {
    if (den == 1) {
      if (num % 2 != 0) *coeff = -*coeff;
      collect_factors(Expr::wrap(n.a), num, den, coeff, out);
      return;
    }
    add_factor(e, num, den, coeff, out);
    return;
  }
  if (n.kind == ExprKind::kMul && den == 1) {
    collect_factors(Expr::wrap(n.a), num, den, coeff, out);
    collect_factors(Expr::wrap(n.b), num, den, coeff, out);
    return;
  }
  if (n.kind == ExprKind::kPow) {
    // only integer outer exponents distribute over an inner pow safely
    if (den == 1) {
      collect_factors(Expr::wrap(n.a), n.pow_num * num, n.pow_den, coeff, out);
      return;
    }
  }
  add_factor(e, num, den, coeff, out);
}

Expr rebuild_product(double coeff, std::vector<Factor> factors) {
  if (coeff == 0.0) return Expr::constant(0.0);
  std::erase_if(factors, [](const Factor& f) { return f.num == 0; });
  std::sort(factors.begin(), factors.end(),
            [](const Factor& x, const Factor& y) { return expr_compare(x.base, y.base) < 0; });
  Expr acc;
  for (const Factor& f : factors) {
    Expr piece = rebuild_pow(f.base, f.num, f.den);
    acc = acc.valid() ? acc * piece : piece;
  }
  bool negate = false;
  double c = coeff;
  if (c == -1.0 && acc.valid()) {
    negate = true;
    c = 1.0;
  }
  Expr out;
  if (!acc.valid()) {
    out = Expr::constant(c);
  } else if (c == 1.0) {
    out = acc;
  } else {
    out = Expr::constant(c) * acc;
  }
  return negate ? -out : out;
}

struct Term {
  double coeff;
  Expr monomial;  // invalid handle for the pure-constant term
};

void collect_terms(const Expr& e, double sign, std::vector<Term>* out, double* constant) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::kAdd:
      collect_terms(Expr::wrap(n.a), sign, out, constant);
      collect_terms(Expr::wrap(n.b), sign, out, constant);
      return;
    case ExprKind::kNeg:
      collect_terms(Expr::wrap(n.a), -sign, out, constant);
      return;
    case ExprKind::kConst:
      *constant += sign * n.value;
      return;
    default: {
      double coeff = sign;
      std::vector<Factor> factors;
      collect_factors(e, 1, 1, &coeff, &factors);
      Expr mono = rebuild_product(1.0, std::move(factors));
      if (mono.node().kind == ExprKind::kConst) {
        *constant += coeff * mono.node().value;
        return;
      }
      for (Term& t : *out) {
        if (expr_equal(t.monomial, mono)) {
          t.coeff += coeff;
          return;
        }
      }
      out->push_back(Term{coeff, mono});
      return;
    }
  }
}

Expr simplify_node(const Expr& e);

Expr simplify_children(const Expr& e) {
  const ExprNode& n = e.node();
  switch (n.kind) {
    case ExprKind::kConst:
    case ExprKind::kVar:
      return e;
    case ExprKind::kNeg:
      return -simplify_node(Expr::wrap(n.a));
    case ExprKind::kSin:
      return sin_of(simplify_node(Expr::wrap(n.a)));
    case ExprKind::kCos:
      return cos_of(simplify_node(Expr::wrap(n.a)));
    case ExprKind::kAdd:
      return simplify_node(Expr::wrap(n.a)) + simplify_node(Expr::wrap(n.b));
    case ExprKind::kMul:
      return simplify_node(Expr::wrap(n.a)) * simplify_node(Expr::wrap(n.b));
    case ExprKind::kPow:
      return pow_of(simplify_node(Expr::wrap(n.a)), n.pow_num, n.pow_den);
  }
  return e;
}

Expr simplify_node(const Expr& e) {
  Expr s = simplify_children(e);
  const ExprNode& n = s.node();
  if (n.kind == ExprKind::kAdd || n.kind == ExprKind::kNeg) {
    std::vector<Term> terms;
    double constant = 0.0;
    collect_terms(s, 1.0, &terms, &constant);
    std::erase_if(terms, [](const Term& t) { return t.coeff == 0.0; });
    std::sort(terms.begin(), terms.end(),
              [](const Term& x, const Term& y) { return expr_compare(x.monomial, y.monomial) < 0; });
    Expr acc;
    for (const Term& t : terms) {
      Expr piece;
      if (t.coeff == 1.0) {
        piece = t.monomial;
      } else if (t.coeff == -1.0) {
        piece = -t.monomial;
      } else {
        piece = Expr::constant(t.coeff) * t.monomial;
      }
      acc = acc.valid() ? acc + piece : piece;
    }
    if (constant != 0.0 || !acc.valid()) {
      Expr c = Expr::constant(constant);
      acc = acc.valid() ? acc + c : c;
    }
    return acc;
  }
  if (n.kind == ExprKind::kMul || n.kind == ExprKind::kPow) {
    double coeff = 1.0;
    std::vector<Factor> factors;
    collect_factors(s, 1, 1, &coeff, &factors);
    return rebuild_product(coeff, std::move(factors));
  }
  return s;
}

bool has_nonfinite_constant(const ExprNode& n) {
  if (n.kind == ExprKind::kConst) return !std::isfinite(n.value);
  if (n.a && has_nonfinite_constant(*n.a)) return true;
  return n.b && has_nonfinite_constant(*n.b);
}

}  // namespace

Expr simplify(const Expr& e) {
  Expr out = simplify_node(e);
  // coefficient accumulation can overflow on extreme inputs; such constants
  // are unprintable, so hand the original tree back instead
  if (has_nonfinite_constant(out.node()) && !has_nonfinite_constant(e.node())) return e;
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg + " at offset " + std::to_string(pos_), pos_); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Expr parse_sum() {
    Expr e = parse_product();
    for (;;) {
      if (eat('+')) {
        e = e + parse_product();
      } else if (eat('-')) {
        e = e - parse_product();
      } else {
        return e;
      }
    }
  }

  Expr parse_product() {
    Expr e = parse_unary();
    for (;;) {
      if (eat('*')) {
        e = e * parse_unary();
      } else if (eat('/')) {
        e = e / parse_unary();
      } else {
        return e;
      }
    }
  }

  Expr parse_unary() {
    if (eat('-')) return -parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (!eat('^')) return base;
    auto [num, den] = parse_exponent();
    return pow_of(base, num, den);
  }

  std::pair<int, int> parse_exponent() {
    skip_ws();
    bool paren = eat('(');
    int sign = 1;
    if (eat('-')) sign = -1;
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == start) fail("expected integer exponent");
    int num = sign * std::stoi(text_.substr(start, pos_ - start));
    int den = 1;
    if (paren && eat('/')) {
      skip_ws();
      std::size_t dstart = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      if (pos_ == dstart) fail("expected exponent denominator");
      den = std::stoi(text_.substr(dstart, pos_ - dstart));
      if (den != 1 && den != 2) fail("exponent denominator must be 1 or 2");
    }
    if (paren && !eat(')')) fail("expected ')' in exponent");
    return {num, den};
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      } else {
        pos_ = mark;  // 'e' belongs to an identifier that follows
      }
    }
    std::string digits = text_.substr(start, pos_ - start);
    try {
      std::size_t used = 0;
      double v = std::stod(digits, &used);
      if (used != digits.size()) throw std::invalid_argument(digits);
      return Expr::constant(v);
    } catch (const std::exception&) {
      pos_ = start;
      fail("malformed number");
    }
  }

  Expr parse_identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    std::string name = text_.substr(start, pos_ - start);
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      Expr arg = parse_sum();
      if (!eat(')')) fail("expected ')' after function argument");
      if (name == "sin") return sin_of(arg);
      if (name == "cos") return cos_of(arg);
      if (name == "sqrt") return sqrt_of(arg);
      pos_ = start;
      fail("unknown function '" + name + "'");
    }
    return Expr::var(name);
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expression(const std::string& text) { return Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string format_constant(double v) {
  if (v == static_cast<long long>(v) && std::abs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// precedence levels: 0 sum, 1 product, 2 unary, 3 power, 4 atom
int node_level(const ExprNode& n) {
  switch (n.kind) {
    case ExprKind::kAdd:
      return 0;
    case ExprKind::kMul:
      return 1;
    case ExprKind::kNeg:
      return 2;
    case ExprKind::kPow:
      return n.pow_num == 1 && n.pow_den == 2 ? 4 : 3;  // sqrt(u) prints as an atom
    case ExprKind::kConst:
      return n.value < 0 ? 2 : 4;
    default:
      return 4;
  }
}

void print_node(const ExprNode& n, int min_level, std::string* out);

void print_child(const ExprNode& n, int min_level, std::string* out) {
  if (node_level(n) < min_level) {
    out->push_back('(');
    print_node(n, 0, out);
    out->push_back(')');
  } else {
    print_node(n, 0, out);
  }
}

void print_node(const ExprNode& n, int, std::string* out) {
  switch (n.kind) {
    case ExprKind::kConst:
      *out += format_constant(n.value);
      return;
    case ExprKind::kVar:
      *out += symbol_name(n.var);
      return;
    case ExprKind::kNeg:
      out->push_back('-');
      print_child(*n.a, 2, out);
      return;
    case ExprKind::kSin:
      *out += "sin(";
      print_node(*n.a, 0, out);
      out->push_back(')');
      return;
    case ExprKind::kCos:
      *out += "cos(";
      print_node(*n.a, 0, out);
      out->push_back(')');
      return;
    case ExprKind::kAdd: {
      print_child(*n.a, 0, out);
      const ExprNode* rhs = n.b.get();
      if (rhs->kind == ExprKind::kNeg) {
        *out += " - ";
        print_child(*rhs->a, 1, out);
      } else if (rhs->kind == ExprKind::kConst && rhs->value < 0) {
        *out += " - ";
        *out += format_constant(-rhs->value);
      } else {
        *out += " + ";
        print_child(*rhs, 1, out);  // right-nested sums get parens
      }
      return;
    }
    case ExprKind::kMul:
      print_child(*n.a, 1, out);
      out->push_back('*');
      print_child(*n.b, 2, out);  // right-nested products get parens
      return;
    case ExprKind::kPow: {
      if (n.pow_num == 1 && n.pow_den == 2) {
        *out += "sqrt(";
        print_node(*n.a, 0, out);
        out->push_back(')');
        return;
      }
      print_child(*n.a, 4, out);
      out->push_back('^');
      if (n.pow_num >= 0 && n.pow_den == 1) {
        *out += std::to_string(n.pow_num);
      } else {
        out->push_back('(');
        *out += std::to_string(n.pow_num);
        if (n.pow_den != 1) {
          out->push_back('/');
          *out += std::to_string(n.pow_den);
        }
        out->push_back(')');
      }
      return;
    }
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print_node(e.node(), 0, &out);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

void sample_box(const Box& box, std::uint64_t seed, int index, Environment* env) {
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(index + 1));
  for (const auto& [name, interval] : box) {
    std::uniform_real_distribution<double> dist(interval.first, interval.second);
    double v = interval.first == interval.second ? interval.first : dist(rng);
    env->set(name, v);
  }
}

// ---------------------------------------------------------------------------
// Compiled evaluation

CompiledExpr::CompiledExpr(const Expr& e, const std::vector<std::string>& layout,
                           const std::map<std::string, double>& fixed) {
  std::unordered_map<int, int> slot_of;
  for (std::size_t i = 0; i < layout.size(); ++i) slot_of[intern_symbol(layout[i])] = static_cast<int>(i);
  std::unordered_map<int, double> fixed_of;
  for (const auto& [name, v] : fixed) fixed_of[intern_symbol(name)] = v;

  int depth = 0;
  auto emit = [&](const ExprNode& n, auto&& self) -> void {
    switch (n.kind) {
      case ExprKind::kConst:
        steps_.push_back({Op::kConst, 0, 1, 1, n.value});
        ++depth;
        break;
      case ExprKind::kVar: {
        auto it = slot_of.find(n.var);
        if (it != slot_of.end()) {
          steps_.push_back({Op::kVar, it->second, 1, 1, 0.0});
        } else {
          auto fit = fixed_of.find(n.var);
          if (fit == fixed_of.end())
            throw EvalError("compile: variable not in layout or fixed bindings: " + symbol_name(n.var));
          steps_.push_back({Op::kConst, 0, 1, 1, fit->second});
        }
        ++depth;
        break;
      }
      case ExprKind::kNeg:
      case ExprKind::kSin:
      case ExprKind::kCos:
        self(*n.a, self);
        steps_.push_back({n.kind == ExprKind::kNeg ? Op::kNeg
                          : n.kind == ExprKind::kSin ? Op::kSin
                                                     : Op::kCos,
                          0, 1, 1, 0.0});
        break;
      case ExprKind::kAdd:
      case ExprKind::kMul:
        self(*n.a, self);
        self(*n.b, self);
        steps_.push_back({n.kind == ExprKind::kAdd ? Op::kAdd : Op::kMul, 0, 1, 1, 0.0});
        --depth;
        break;
      case ExprKind::kPow:
        self(*n.a, self);
        steps_.push_back({Op::kPow, 0, n.pow_num, n.pow_den, 0.0});
        break;
    }
    max_depth_ = std::max(max_depth_, depth);
  };
  emit(e.node(), emit);
}

double CompiledExpr::eval(const double* values) const {
  double local[64];
  std::vector<double> heap;
  double* stack = local;
  if (max_depth_ > 64) {
    heap.resize(static_cast<std::size_t>(max_depth_));
    stack = heap.data();
  }
  int top = 0;
  for (const Step& s : steps_) {
    switch (s.op) {
      case Op::kConst:
        stack[top++] = s.value;
        break;
      case Op::kVar:
        stack[top++] = values[s.slot];
        break;
      case Op::kNeg:
        stack[top - 1] = -stack[top - 1];
        break;
      case Op::kSin:
        stack[top - 1] = std::sin(stack[top - 1]);
        break;
      case Op::kCos:
        stack[top - 1] = std::cos(stack[top - 1]);
        break;
      case Op::kAdd:
        stack[top - 2] += stack[top - 1];
        --top;
        break;
      case Op::kMul:
        stack[top - 2] *= stack[top - 1];
        --top;
        break;
      case Op::kPow: {
        double base = stack[top - 1];
        if (s.pow_den == 2 && base < 0.0) throw EvalError("sqrt of negative value");
        if (s.pow_num < 0 && base == 0.0) throw EvalError("division by zero");
        double r = s.pow_den == 2 ? std::sqrt(base) : base;
        double out = 1.0;
        for (int i = 0, k = std::abs(s.pow_num); i < k; ++i) out *= r;
        stack[top - 1] = s.pow_num < 0 ? 1.0 / out : out;
        break;
      }
    }
  }
  return stack[0];
}

bool probably_zero(const Expr& e, const Box& box, int trials, double tol, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("probably_zero: trials must be >= 1");
  for (int id : e.free_vars().ids()) {
    if (!box.count(symbol_name(id)))
      throw EvalError("probably_zero: no interval for variable " + symbol_name(id));
  }
  Environment env;
  for (int i = 0; i < trials; ++i) {
    sample_box(box, seed, i, &env);
    if (std::abs(evaluate(e, env)) > tol) return false;
  }
  return true;
}

}  // namespace nonholo
