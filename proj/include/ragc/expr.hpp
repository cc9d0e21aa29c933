#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ragc/error.hpp"

namespace ragc {

enum class ElemKind { Float64, Int64 };

inline const char* elem_name(ElemKind k) { return k == ElemKind::Float64 ? "float" : "int"; }

/// Scalar value flowing through expressions: an int64 or a float64.
struct Value {
  bool is_int = true;
  int64_t i = 0;
  double f = 0.0;

  static Value of_int(int64_t v) { return Value{true, v, 0.0}; }
  static Value of_float(double v) { return Value{false, 0, v}; }

  double as_double() const { return is_int ? static_cast<double>(i) : f; }
  int64_t as_int() const { return is_int ? i : static_cast<int64_t>(f); }

  friend bool operator==(const Value& a, const Value& b) {
    if (a.is_int != b.is_int) return false;
    return a.is_int ? a.i == b.i : (a.f == b.f || (std::isnan(a.f) && std::isnan(b.f)));
  }
};

inline int64_t floor_div(int64_t a, int64_t b) {
  if (b == 0) fail(ErrorKind::OutOfRangeAccess, "division by zero");
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
inline int64_t floor_mod(int64_t a, int64_t b) { return a - floor_div(a, b) * b; }
inline int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }
inline int64_t round_up(int64_t a, int64_t m) { return ceil_div(a, m) * m; }
inline int64_t round_down(int64_t a, int64_t m) { return floor_div(a, m) * m; }

enum class Op {
  Const,
  Var,
  Read,   // logical tensor read T[i, j, ...] (front end only)
  Load,   // flat buffer load buf[offset]
  Table,  // prelude/length table read tab[index]
  Add,
  Sub,
  Mul,
  Div,
  FloorDiv,
  Mod,
  Min,
  Max,
  CeilTo,   // smallest multiple of b that is >= a
  FloorTo,  // largest multiple of b that is <= a
  CeilDiv,
  Lt,
  Le,
  Eq,
  And,
  Exp,
  Neg,
};

inline bool is_binary(Op op) { return op >= Op::Add && op <= Op::And; }

struct ExprNode;

/// Immutable expression tree with shared structure.
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const ExprNode> n) : n_(std::move(n)) {}

  const ExprNode& node() const { return *n_; }
  const ExprNode* operator->() const { return n_.get(); }
  bool valid() const { return static_cast<bool>(n_); }
  const void* id() const { return n_.get(); }

 private:
  std::shared_ptr<const ExprNode> n_;
};

struct ExprNode {
  Op op = Op::Const;
  Value value;
  std::string name;  // Var name, Read tensor, Load buffer, Table name
  std::vector<Expr> args;
};

namespace ex {

inline Expr make(Op op, std::string name, std::vector<Expr> args, Value v = {}) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->name = std::move(name);
  n->args = std::move(args);
  n->value = v;
  return Expr(std::move(n));
}

inline Expr cst(int64_t v) { return make(Op::Const, {}, {}, Value::of_int(v)); }
inline Expr cstf(double v) { return make(Op::Const, {}, {}, Value::of_float(v)); }
inline Expr var(std::string name) { return make(Op::Var, std::move(name), {}); }
inline Expr read(std::string tensor, std::vector<Expr> idx) {
  return make(Op::Read, std::move(tensor), std::move(idx));
}
inline Expr load(std::string buffer, Expr offset) {
  return make(Op::Load, std::move(buffer), {std::move(offset)});
}
inline Expr table(std::string name, Expr index) {
  return make(Op::Table, std::move(name), {std::move(index)});
}

inline bool is_int_const(const Expr& e, int64_t v) {
  return e->op == Op::Const && e->value.is_int && e->value.i == v;
}
inline bool is_int_const(const Expr& e) { return e->op == Op::Const && e->value.is_int; }

/// Binary node with folding of integer constants and additive/multiplicative identities.
inline Expr bin(Op op, Expr a, Expr b) {
  if (is_int_const(a) && is_int_const(b)) {
    int64_t x = a->value.i, y = b->value.i;
    switch (op) {
      case Op::Add: return cst(x + y);
      case Op::Sub: return cst(x - y);
      case Op::Mul: return cst(x * y);
      case Op::Div:
      case Op::FloorDiv:
        if (y != 0) return cst(floor_div(x, y));
        break;
      case Op::Mod:
        if (y != 0) return cst(floor_mod(x, y));
        break;
      case Op::Min: return cst(std::min(x, y));
      case Op::Max: return cst(std::max(x, y));
      case Op::CeilTo:
        if (y > 0) return cst(round_up(x, y));
        break;
      case Op::FloorTo:
        if (y > 0) return cst(round_down(x, y));
        break;
      case Op::CeilDiv:
        if (y > 0) return cst(ceil_div(x, y));
        break;
      case Op::Lt: return cst(x < y);
      case Op::Le: return cst(x <= y);
      case Op::Eq: return cst(x == y);
      case Op::And: return cst((x != 0) && (y != 0));
      default: break;
    }
  }
  switch (op) {
    case Op::Add:
      if (is_int_const(a, 0)) return b;
      if (is_int_const(b, 0)) return a;
      break;
    case Op::Sub:
      if (is_int_const(b, 0)) return a;
      break;
    case Op::Mul:
      if (is_int_const(a, 1)) return b;
      if (is_int_const(b, 1)) return a;
      break;
    case Op::CeilTo:
    case Op::FloorTo:
    case Op::CeilDiv:
    case Op::FloorDiv:
      if (is_int_const(b, 1)) return a;
      break;
    default: break;
  }
  return make(op, {}, {std::move(a), std::move(b)});
}

inline Expr add(Expr a, Expr b) { return bin(Op::Add, std::move(a), std::move(b)); }
inline Expr sub(Expr a, Expr b) { return bin(Op::Sub, std::move(a), std::move(b)); }
inline Expr mul(Expr a, Expr b) { return bin(Op::Mul, std::move(a), std::move(b)); }
inline Expr div(Expr a, Expr b) { return bin(Op::Div, std::move(a), std::move(b)); }
inline Expr min(Expr a, Expr b) { return bin(Op::Min, std::move(a), std::move(b)); }
inline Expr max(Expr a, Expr b) { return bin(Op::Max, std::move(a), std::move(b)); }
inline Expr lt(Expr a, Expr b) { return bin(Op::Lt, std::move(a), std::move(b)); }
inline Expr eq(Expr a, Expr b) { return bin(Op::Eq, std::move(a), std::move(b)); }
inline Expr ceil_to(Expr a, int64_t m) { return bin(Op::CeilTo, std::move(a), cst(m)); }
inline Expr floor_to(Expr a, int64_t m) { return bin(Op::FloorTo, std::move(a), cst(m)); }
inline Expr ceil_div(Expr a, Expr b) { return bin(Op::CeilDiv, std::move(a), std::move(b)); }
inline Expr exp(Expr a) { return make(Op::Exp, {}, {std::move(a)}); }
inline Expr neg(Expr a) {
  if (a->op == Op::Const)
    return a->value.is_int ? cst(-a->value.i) : cstf(-a->value.f);
  return make(Op::Neg, {}, {std::move(a)});
}

}  // namespace ex

inline bool equal(const Expr& a, const Expr& b) {
  if (a.id() == b.id()) return true;
  if (!a.valid() || !b.valid()) return false;
  if (a->op != b->op || a->name != b->name || a->args.size() != b->args.size()) return false;
  if (a->op == Op::Const && !(a->value == b->value)) return false;
  for (size_t k = 0; k < a->args.size(); ++k)
    if (!equal(a->args[k], b->args[k])) return false;
  return true;
}

/// Post-order rewrite: children first, then `fn` on the rebuilt node. `fn` returns
/// an invalid Expr to keep the node.
inline Expr rewrite(const Expr& e, const std::function<Expr(const Expr&)>& fn) {
  std::vector<Expr> args;
  args.reserve(e->args.size());
  bool changed = false;
  for (const auto& a : e->args) {
    args.push_back(rewrite(a, fn));
    changed |= args.back().id() != a.id();
  }
  Expr cur = e;
  if (changed) {
    if (is_binary(e->op))
      cur = ex::bin(e->op, args[0], args[1]);
    else
      cur = ex::make(e->op, e->name, std::move(args), e->value);
  }
  Expr r = fn(cur);
  return r.valid() ? r : cur;
}

inline Expr substitute(const Expr& e, const std::map<std::string, Expr>& m) {
  return rewrite(e, [&](const Expr& x) -> Expr {
    if (x->op == Op::Var) {
      auto it = m.find(x->name);
      if (it != m.end()) return it->second;
    }
    return {};
  });
}

inline void visit(const Expr& e, const std::function<void(const Expr&)>& fn) {
  fn(e);
  for (const auto& a : e->args) visit(a, fn);
}

inline std::set<std::string> free_vars(const Expr& e) {
  std::set<std::string> out;
  visit(e, [&](const Expr& x) {
    if (x->op == Op::Var) out.insert(x->name);
  });
  return out;
}

inline bool mentions_var(const Expr& e, const std::string& v) {
  bool found = false;
  visit(e, [&](const Expr& x) { found |= (x->op == Op::Var && x->name == v); });
  return found;
}

inline int count_ops(const Expr& e, Op op) {
  int n = 0;
  visit(e, [&](const Expr& x) { n += x->op == op; });
  return n;
}

/// Slow reference evaluator. Callbacks resolve variables, tables, loads and reads.
struct EvalEnv {
  std::function<Value(const std::string&)> var;
  std::function<int64_t(const std::string&, int64_t)> table;
  std::function<Value(const std::string&, int64_t)> load;
  std::function<Value(const std::string&, const std::vector<int64_t>&)> read;
};

inline Value apply_binary(Op op, const Value& a, const Value& b) {
  bool ints = a.is_int && b.is_int;
  auto fl = [&](double v) { return Value::of_float(v); };
  auto in = [&](int64_t v) { return Value::of_int(v); };
  auto need_ints = [&] {
    if (!ints) fail(ErrorKind::InvalidDecl, "integer operator applied to float operand");
  };
  switch (op) {
    case Op::Add: return ints ? in(a.i + b.i) : fl(a.as_double() + b.as_double());
    case Op::Sub: return ints ? in(a.i - b.i) : fl(a.as_double() - b.as_double());
    case Op::Mul: return ints ? in(a.i * b.i) : fl(a.as_double() * b.as_double());
    case Op::Div: return ints ? in(floor_div(a.i, b.i)) : fl(a.as_double() / b.as_double());
    case Op::Min:
      return ints ? in(std::min(a.i, b.i)) : fl(std::min(a.as_double(), b.as_double()));
    case Op::Max:
      return ints ? in(std::max(a.i, b.i)) : fl(std::max(a.as_double(), b.as_double()));
    case Op::FloorDiv: need_ints(); return in(floor_div(a.i, b.i));
    case Op::Mod: need_ints(); return in(floor_mod(a.i, b.i));
    case Op::CeilTo: need_ints(); return in(round_up(a.i, b.i));
    case Op::FloorTo: need_ints(); return in(round_down(a.i, b.i));
    case Op::CeilDiv: need_ints(); return in(ceil_div(a.i, b.i));
    case Op::Lt: return in(a.as_double() < b.as_double());
    case Op::Le: return in(a.as_double() <= b.as_double());
    case Op::Eq: return in(ints ? a.i == b.i : a.as_double() == b.as_double());
    case Op::And: return in(a.as_double() != 0 && b.as_double() != 0);
    default: break;
  }
  fail(ErrorKind::InvalidDecl, "not a binary operator");
}

inline Value eval(const Expr& e, const EvalEnv& env) {
  const auto& n = e.node();
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var:
      if (!env.var) fail(ErrorKind::UnboundVariable, n.name);
      return env.var(n.name);
    case Op::Table:
      if (!env.table) fail(ErrorKind::MissingPrelude, n.name);
      return Value::of_int(env.table(n.name, eval(n.args[0], env).as_int()));
    case Op::Load:
      if (!env.load) fail(ErrorKind::InvalidDecl, "load outside execution");
      return env.load(n.name, eval(n.args[0], env).as_int());
    case Op::Read: {
      if (!env.read) fail(ErrorKind::InvalidDecl, "logical read outside front end");
      std::vector<int64_t> idx;
      for (const auto& a : n.args) idx.push_back(eval(a, env).as_int());
      return env.read(n.name, idx);
    }
    case Op::Exp: return Value::of_float(std::exp(eval(n.args[0], env).as_double()));
    case Op::Neg: {
      Value v = eval(n.args[0], env);
      return v.is_int ? Value::of_int(-v.i) : Value::of_float(-v.f);
    }
    default: return apply_binary(n.op, eval(n.args[0], env), eval(n.args[1], env));
  }
}

namespace detail {

inline int precedence(Op op) {
  switch (op) {
    case Op::And: return 1;
    case Op::Lt:
    case Op::Le:
    case Op::Eq: return 2;
    case Op::Add:
    case Op::Sub: return 3;
    case Op::Mul:
    case Op::Div:
    case Op::Mod: return 4;
    default: return 10;
  }
}

inline const char* infix(Op op) {
  switch (op) {
    case Op::Add: return " + ";
    case Op::Sub: return " - ";
    case Op::Mul: return " * ";
    case Op::Div: return " / ";
    case Op::Mod: return " % ";
    case Op::Lt: return " < ";
    case Op::Le: return " <= ";
    case Op::Eq: return " == ";
    case Op::And: return " && ";
    default: return nullptr;
  }
}

inline const char* call_name(Op op) {
  switch (op) {
    case Op::Min: return "min";
    case Op::Max: return "max";
    case Op::CeilTo: return "ceil_to";
    case Op::FloorTo: return "floor_to";
    case Op::CeilDiv: return "ceil_div";
    case Op::FloorDiv: return "floor_div";
    case Op::Exp: return "exp";
    default: return nullptr;
  }
}

inline void format_value(std::ostream& os, const Value& v) {
  if (v.is_int) {
    os << v.i;
    return;
  }
  std::ostringstream tmp;
  tmp.imbue(std::locale::classic());
  tmp.precision(17);
  tmp << v.f;
  std::string s = tmp.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  os << s;
}

inline void print(std::ostream& os, const Expr& e, int parent_prec) {
  const auto& n = e.node();
  switch (n.op) {
    case Op::Const: {
      bool negative = n.value.is_int ? n.value.i < 0 : n.value.f < 0;
      if (negative) os << '(';
      format_value(os, n.value);
      if (negative) os << ')';
      return;
    }
    case Op::Var: os << n.name; return;
    case Op::Read:
    case Op::Load:
    case Op::Table: {
      os << n.name << '[';
      for (size_t k = 0; k < n.args.size(); ++k) {
        if (k) os << ", ";
        print(os, n.args[k], 0);
      }
      os << ']';
      return;
    }
    case Op::Neg:
      os << "-(";
      print(os, n.args[0], 0);
      os << ')';
      return;
    default: break;
  }
  if (const char* f = call_name(n.op)) {
    os << f << '(';
    for (size_t k = 0; k < n.args.size(); ++k) {
      if (k) os << ", ";
      print(os, n.args[k], 0);
    }
    os << ')';
    return;
  }
  int p = precedence(n.op);
  bool paren = p <= parent_prec;
  if (paren) os << '(';
  // Left operand binds at p-1 so left-associative chains print without parens.
  print(os, n.args[0], p - 1);
  os << infix(n.op);
  print(os, n.args[1], p);
  if (paren) os << ')';
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  detail::print(os, e, 0);
  return os.str();
}

}  // namespace ragc
