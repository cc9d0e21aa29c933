#pragma once

// Loop-nest IR: lowering of scheduled operators, simplification, guard
// elision, load hoisting and C-like text emission.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ragc/fusion_prelude.hpp"
#include "ragc/ragged_storage.hpp"
#include "ragc/schedule.hpp"

namespace ragc {

struct Stmt {
  enum Kind { Loop, Guard, Store, Let } kind = Store;
  std::string var;        // Loop, Let
  Expr lo, hi;            // Loop
  std::string parallel;   // Loop
  bool reduction = false; // Loop
  Expr cond;              // Guard
  std::string tag;        // Guard: "pad:<dim>", "split", "bulk"
  bool elidable = false;  // Guard: padding that storage padding makes safe
  Expr span;              // Guard (split): extent that was split
  int64_t factor = 1;     // Guard (split)
  std::string buffer;     // Store
  Expr offset;            // Store
  Expr value;             // Store, Let
  Combiner mode = Combiner::Assign;
  bool init = false;      // Store: reduction initializer
  std::vector<Stmt> body;
};

struct LoopNest {
  std::string name;
  std::string output;
  std::vector<Stmt> body;
  TableCatalog catalog;  // derived tables the nest may read
};

namespace detail {

inline void for_each_stmt(const std::vector<Stmt>& body, const std::function<void(const Stmt&)>& fn) {
  for (const auto& s : body) {
    fn(s);
    for_each_stmt(s.body, fn);
  }
}

inline void for_each_expr(const Stmt& s, const std::function<void(const Expr&)>& fn) {
  for (const Expr* e : {&s.lo, &s.hi, &s.cond, &s.offset, &s.value})
    if (e->valid()) fn(*e);
}

inline void map_exprs(std::vector<Stmt>& body, const std::function<Expr(const Expr&)>& fn) {
  for (auto& s : body) {
    for (Expr* e : {&s.lo, &s.hi, &s.cond, &s.offset, &s.value})
      if (e->valid()) *e = fn(*e);
    map_exprs(s.body, fn);
  }
}

// Rewrites T[i0, ..., i_{p}, i_{p+1}, ...] for tensors with fused storage dims.
inline std::vector<Expr> apply_dim_fusions(const ScheduledOp& s, const std::string& tensor, std::vector<Expr> idx) {
  for (const auto& f : s.dim_fusions) {
    if (f.tensor != tensor) continue;
    auto p = static_cast<size_t>(f.pos);
    Expr fused = ex::add(ex::table(f.key.oif_name(s.prog), idx[p]), idx[p + 1]);
    idx[p] = fused;
    idx.erase(idx.begin() + static_cast<long>(p) + 1);
  }
  return idx;
}

inline bool divisible(const Expr& e, int64_t f) {
  if (f == 1) return true;
  switch (e->op) {
    case Op::Const: return e->value.is_int && e->value.i % f == 0;
    case Op::CeilTo:
    case Op::FloorTo: return e->args[1]->op == Op::Const && e->args[1]->value.i % f == 0;
    case Op::Add:
    case Op::Sub: return divisible(e->args[0], f) && divisible(e->args[1], f);
    case Op::Mul: return divisible(e->args[0], f) || divisible(e->args[1], f);
    default: return false;
  }
}

// Whether storage padding makes skipping the padding guard of `dim` safe.
inline bool padding_elidable(const ScheduledOp& s, const std::string& dim, int64_t pad) {
  const OperatorDef& op = s.base;
  int li = op.loop_index(dim);
  if (li < 0 || op.loops[static_cast<size_t>(li)].reduction) return false;
  const Extent& loop_ext = op.loops[static_cast<size_t>(li)].extent;
  for (const auto& l : op.loops)
    if (l.extent.varying && l.extent.dep == dim) return false;
  auto covered = [&](const std::string& tensor, int k) {
    for (const auto& f : s.dim_fusions)
      if (f.tensor == tensor && (f.pos == k || f.pos + 1 == k)) return false;
    const TensorDecl& t = s.prog.tensor(tensor);
    return t.pad[static_cast<size_t>(k)] % pad == 0 && t.storage[static_cast<size_t>(k)] == loop_ext;
  };
  bool ok = true;
  std::function<void(const Expr&)> walk = [&](const Expr& e) {
    if (!ok) return;
    if (e->op == Op::Var && e->name == dim) ok = false;
    if (e->op == Op::Read) {
      for (size_t k = 0; k < e->args.size(); ++k) {
        const Expr& a = e->args[k];
        if (a->op == Op::Var && a->name == dim) {
          if (!covered(e->name, static_cast<int>(k))) ok = false;
        } else {
          walk(a);
        }
      }
      return;
    }
    for (const auto& a : e->args) walk(a);
  };
  walk(op.body);
  const TensorDecl& out = s.prog.tensor(op.output);
  int k = out.dim_index(dim);
  return ok && k >= 0 && covered(op.output, k);
}

}  // namespace detail

/// Lowers one scheduled operator to a loop nest. Derived tables it reads are
/// listed in the nest's catalog; no prelude check is done here.
inline LoopNest lower_unchecked(const ScheduledOp& s) {
  LoopNest nest;
  nest.name = s.name;
  nest.output = s.base.output;
  nest.catalog = s.catalog;
  std::map<std::string, Layout> layouts;
  auto layout = [&](const std::string& t) -> const Layout& {
    auto it = layouts.find(t);
    if (it == layouts.end()) {
      it = layouts.emplace(t, Layout(s.prog.tensor(t), s.prog)).first;
      for (const auto& [d, a] : it->second.aux_arrays())
        nest.catalog[a.name] = {TableSpec::Aux, s.prog.tensor(t), d, {}};
    }
    return it->second;
  };
  auto access = [&](const std::string& tensor, const std::vector<Expr>& idx) {
    std::vector<Expr> phys;
    for (const auto& i : idx) phys.push_back(substitute(i, s.dim_value));
    phys = detail::apply_dim_fusions(s, tensor, phys);
    return lower_access(layout(tensor), phys).to_expr();
  };

  Expr value = rewrite(s.base.body, [&](const Expr& e) -> Expr {
    if (e->op != Op::Read) return {};
    return ex::load(e->name, access(e->name, e->args));
  });
  value = substitute(value, s.dim_value);
  std::vector<Expr> out_idx;
  for (const auto& l : s.base.loops)
    if (!l.reduction) out_idx.push_back(ex::var(l.dim));
  Expr out_off = access(s.base.output, out_idx);
  ElemKind out_elem = s.prog.tensor(s.base.output).elem;

  Stmt update;
  update.kind = Stmt::Store;
  update.buffer = s.base.output;
  update.offset = out_off;
  update.value = value;
  update.mode = s.base.combine;

  Stmt init = update;
  init.init = true;
  init.mode = Combiner::Assign;
  if (s.base.combine == Combiner::Max)
    init.value = out_elem == ElemKind::Int64 ? ex::cst(INT64_MIN) : ex::neg(ex::cstf(HUGE_VAL));
  else
    init.value = out_elem == ElemKind::Int64 ? ex::cst(0) : ex::cstf(0.0);

  size_t n = s.loops.size();
  size_t first_red = n;
  for (size_t k = 0; k < n; ++k)
    if (s.loops[k].reduction) {
      first_red = k;
      break;
    }
  bool has_red = s.base.has_reduction();

  // Guards sit directly inside the loop of the innermost variable they use.
  std::vector<std::vector<const SGuard*>> guards_at(n + 1);
  for (const auto& g : s.guards) {
    size_t level = 0;
    auto vars = free_vars(g.cond);
    for (size_t k = 0; k < n; ++k)
      if (vars.count(s.loops[k].var)) level = k + 1;
    guards_at[level].push_back(&g);
  }

  std::function<std::vector<Stmt>(size_t)> build = [&](size_t k) {
    std::vector<Stmt> inner;
    if (has_red && k == first_red && s.init) inner.push_back(init);
    if (k == n) {
      inner.push_back(update);
    } else {
      Stmt loop;
      loop.kind = Stmt::Loop;
      loop.var = s.loops[k].var;
      loop.lo = s.loops[k].lo;
      loop.hi = s.loops[k].hi;
      loop.parallel = s.loops[k].parallel;
      loop.reduction = s.loops[k].reduction;
      loop.body = build(k + 1);
      inner.push_back(std::move(loop));
    }
    for (auto it = guards_at[k].rbegin(); it != guards_at[k].rend(); ++it) {
      const SGuard& g = **it;
      Stmt gs;
      gs.kind = Stmt::Guard;
      gs.cond = g.cond;
      gs.body = std::move(inner);
      if (g.kind == SGuard::Padding) {
        gs.tag = "pad:" + (g.dim.empty() ? std::string("?") : g.dim);
        gs.elidable = !g.dim.empty() && detail::padding_elidable(s, g.dim, g.pad);
      } else if (g.kind == SGuard::Split) {
        gs.tag = "split";
        gs.span = g.span;
        gs.factor = g.pad;
      } else {
        gs.tag = "bulk";
      }
      inner = {std::move(gs)};
    }
    return inner;
  };
  nest.body = build(0);
  return nest;
}

/// Derived (non-input) tables a nest reads.
inline std::set<std::string> derived_tables(const LoopNest& nest, const Program& p) {
  std::set<std::string> out;
  detail::for_each_stmt(nest.body, [&](const Stmt& s) {
    detail::for_each_expr(s, [&](const Expr& e) {
      visit(e, [&](const Expr& n) {
        if (n->op == Op::Table && !p.tables.count(n->name)) out.insert(n->name);
      });
    });
  });
  return out;
}

inline LoopNest lower(const ScheduledOp& s, const PreludeProgram& prelude) {
  LoopNest nest = lower_unchecked(s);
  for (const auto& name : derived_tables(nest, s.prog))
    if (!prelude.find(name)) fail(ErrorKind::MissingPrelude, s.name + ": prelude lacks table " + name);
  return nest;
}

namespace detail {

struct LoopCtx {
  std::string var;
  Expr lo, hi;
};

inline bool proven(const Stmt& g, const std::vector<LoopCtx>& ctx) {
  const Expr& c = g.cond;
  if (c->op == Op::Const && c->value.is_int) return c->value.i != 0;
  if (c->op == Op::Eq && equal(c->args[0], c->args[1])) return true;
  if (c->op != Op::Lt) return false;
  const Expr &a = c->args[0], &b = c->args[1];
  if (g.tag == "split" && g.span.valid() && divisible(g.span, g.factor)) return true;
  if (a->op == Op::Var) {
    for (auto it = ctx.rbegin(); it != ctx.rend(); ++it) {
      if (it->var != a->name) continue;
      if (equal(it->hi, b)) return true;
      if (it->hi->op == Op::Const && b->op == Op::Const && it->hi->value.is_int && b->value.is_int)
        return it->hi->value.i <= b->value.i;
      break;
    }
  }
  return false;
}

inline std::vector<Stmt> splice_guards(std::vector<Stmt> body, const std::function<bool(const Stmt&)>& drop,
                                       std::vector<LoopCtx>& ctx) {
  std::vector<Stmt> out;
  for (auto& s : body) {
    if (s.kind == Stmt::Loop) ctx.push_back({s.var, s.lo, s.hi});
    s.body = splice_guards(std::move(s.body), drop, ctx);
    if (s.kind == Stmt::Loop) ctx.pop_back();
    if (s.kind == Stmt::Guard && drop(s)) {
      for (auto& b : s.body) out.push_back(std::move(b));
    } else {
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace detail

/// Applies the fusion-map identities and removes guards that loop bounds prove.
inline LoopNest simplify(LoopNest nest, const UfFacts& = uf_simplify_facts()) {
  detail::map_exprs(nest.body, [](const Expr& e) { return UfFacts::apply(e); });
  std::vector<detail::LoopCtx> ctx;
  // Guards are checked against their enclosing loops, innermost binding first.
  std::function<std::vector<Stmt>(std::vector<Stmt>)> walk = [&](std::vector<Stmt> body) {
    std::vector<Stmt> out;
    for (auto& s : body) {
      if (s.kind == Stmt::Loop) ctx.push_back({s.var, s.lo, s.hi});
      bool drop = s.kind == Stmt::Guard && detail::proven(s, ctx);
      s.body = walk(std::move(s.body));
      if (s.kind == Stmt::Loop) ctx.pop_back();
      if (drop) {
        for (auto& b : s.body) out.push_back(std::move(b));
      } else {
        out.push_back(std::move(s));
      }
    }
    return out;
  };
  nest.body = walk(std::move(nest.body));
  return nest;
}

/// Drops padding guards whose padded iterations only touch padded storage.
inline LoopNest elide_guards(LoopNest nest) {
  std::vector<detail::LoopCtx> ctx;
  nest.body = detail::splice_guards(std::move(nest.body), [](const Stmt& s) { return s.elidable; }, ctx);
  return nest;
}

namespace detail {

// Maximal table reads in `e` that use none of `banned`.
inline void invariant_reads(const Expr& e, const std::set<std::string>& banned, std::vector<Expr>& out) {
  if (e->op == Op::Table) {
    bool ok = true;
    for (const auto& v : free_vars(e)) ok &= !banned.count(v);
    if (ok) {
      for (const auto& x : out)
        if (equal(x, e)) return;
      out.push_back(e);
      return;
    }
  }
  for (const auto& a : e->args) invariant_reads(a, banned, out);
}

// Walks statements executed on every pass through a loop body (guard bodies excluded).
inline void collect_unguarded(const std::vector<Stmt>& body, std::set<std::string> banned, std::vector<Expr>& out) {
  for (const auto& s : body) {
    if (s.kind == Stmt::Guard) {
      invariant_reads(s.cond, banned, out);
      continue;
    }
    if (s.kind == Stmt::Loop) {
      invariant_reads(s.lo, banned, out);
      invariant_reads(s.hi, banned, out);
      auto inner = banned;
      inner.insert(s.var);
      collect_unguarded(s.body, inner, out);
    } else if (s.kind == Stmt::Let) {
      invariant_reads(s.value, banned, out);
      auto inner = banned;
      inner.insert(s.var);
      collect_unguarded(s.body, inner, out);
    } else {
      invariant_reads(s.offset, banned, out);
      invariant_reads(s.value, banned, out);
    }
  }
}

inline void replace_unguarded(std::vector<Stmt>& body, const std::function<Expr(const Expr&)>& fn) {
  for (auto& s : body) {
    if (s.kind == Stmt::Guard) {
      s.cond = rewrite(s.cond, fn);
      continue;
    }
    for (Expr* e : {&s.lo, &s.hi, &s.offset, &s.value})
      if (e->valid()) *e = rewrite(*e, fn);
    replace_unguarded(s.body, fn);
  }
}

// Vars bound anywhere inside `body`.
inline void bound_vars(const std::vector<Stmt>& body, std::set<std::string>& out) {
  for (const auto& s : body) {
    if (s.kind == Stmt::Loop || s.kind == Stmt::Let) out.insert(s.var);
    bound_vars(s.body, out);
  }
}

inline std::vector<Stmt> hoist(std::vector<Stmt> body, int& counter) {
  std::vector<Stmt> out;
  for (auto& s : body) {
    if (s.kind != Stmt::Loop) {
      s.body = hoist(std::move(s.body), counter);
      out.push_back(std::move(s));
      continue;
    }
    std::set<std::string> banned{s.var};
    bound_vars(s.body, banned);
    std::vector<Expr> reads;
    collect_unguarded(s.body, banned, reads);
    std::vector<std::pair<std::string, Expr>> lets;
    for (const auto& r : reads) lets.push_back({"_h" + std::to_string(counter++), r});
    if (!lets.empty()) {
      replace_unguarded(s.body, [&](const Expr& e) -> Expr {
        if (e->op != Op::Table) return {};
        for (const auto& [name, r] : lets)
          if (equal(e, r)) return ex::var(name);
        return {};
      });
    }
    s.body = hoist(std::move(s.body), counter);
    Stmt cur = std::move(s);
    for (auto it = lets.rbegin(); it != lets.rend(); ++it) {
      Stmt let;
      let.kind = Stmt::Let;
      let.var = it->first;
      let.value = it->second;
      let.body.push_back(std::move(cur));
      cur = std::move(let);
    }
    out.push_back(std::move(cur));
  }
  return out;
}

}  // namespace detail

/// Rebinds loop-invariant table reads with Lets placed just above the loop.
inline LoopNest hoist_loads(LoopNest nest) {
  int counter = 0;
  nest.body = detail::hoist(std::move(nest.body), counter);
  return nest;
}

/// The full optimization pipeline.
inline LoopNest optimize(LoopNest nest) { return hoist_loads(elide_guards(simplify(std::move(nest)))); }

namespace detail {

inline void print_stmts(std::ostream& os, const std::vector<Stmt>& body, int depth) {
  std::string ind(static_cast<size_t>(depth) * 2, ' ');
  for (const auto& s : body) {
    switch (s.kind) {
      case Stmt::Loop:
        os << ind << "for " << s.var << " in [" << to_string(s.lo) << ", " << to_string(s.hi) << ")";
        if (!s.parallel.empty()) os << " parallel(" << s.parallel << ")";
        if (s.reduction) os << " reduce";
        os << " {\n";
        break;
      case Stmt::Guard:
        os << ind << "if (" << to_string(s.cond) << ") {  # " << s.tag << (s.elidable ? " elidable" : "") << "\n";
        break;
      case Stmt::Let:
        os << ind << "let " << s.var << " = " << to_string(s.value) << " {\n";
        break;
      case Stmt::Store: {
        const char* op = s.mode == Combiner::Sum ? " += " : s.mode == Combiner::Max ? " max= " : " = ";
        os << ind << s.buffer << "[" << to_string(s.offset) << "]" << op << to_string(s.value) << "\n";
        continue;
      }
    }
    print_stmts(os, s.body, depth + 1);
    os << ind << "}\n";
  }
}

inline std::string c_name(const std::string& n) {
  std::string out;
  for (char c : n) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) out = "_" + out;
  return out;
}

inline std::string c_expr(const Expr& e) {
  auto a = [&](size_t k) { return c_expr(e->args[k]); };
  auto call = [&](const char* f) { return std::string(f) + "(" + a(0) + ", " + a(1) + ")"; };
  auto infix = [&](const char* op) { return "(" + a(0) + " " + op + " " + a(1) + ")"; };
  switch (e->op) {
    case Op::Const: return to_string(e);
    case Op::Var: return c_name(e->name);
    case Op::Load:
    case Op::Table: return c_name(e->name) + "[" + a(0) + "]";
    case Op::Read: return c_name(e->name) + "[?]";
    case Op::Add: return infix("+");
    case Op::Sub: return infix("-");
    case Op::Mul: return infix("*");
    case Op::Div: return infix("/");
    case Op::Lt: return infix("<");
    case Op::Le: return infix("<=");
    case Op::Eq: return infix("==");
    case Op::And: return infix("&&");
    case Op::FloorDiv: return call("floor_div_");
    case Op::Mod: return call("floor_mod_");
    case Op::Min: return call("min_");
    case Op::Max: return call("max_");
    case Op::CeilTo: return call("ceil_to_");
    case Op::FloorTo: return call("floor_to_");
    case Op::CeilDiv: return call("ceil_div_");
    case Op::Exp: return "exp(" + a(0) + ")";
    case Op::Neg: return "(-" + a(0) + ")";
  }
  return "?";
}

inline void emit_stmts(std::ostream& os, const std::vector<Stmt>& body, int depth) {
  std::string ind(static_cast<size_t>(depth) * 2, ' ');
  for (const auto& s : body) {
    switch (s.kind) {
      case Stmt::Loop:
        if (!s.parallel.empty()) os << ind << "/* parallel: " << s.parallel << " */\n";
        os << ind << "for (long " << c_name(s.var) << " = " << c_expr(s.lo) << "; " << c_name(s.var) << " < "
           << c_expr(s.hi) << "; ++" << c_name(s.var) << ") {\n";
        break;
      case Stmt::Guard:
        os << ind << "if (" << c_expr(s.cond) << ") {\n";
        break;
      case Stmt::Let:
        os << ind << "{\n" << ind << "  const long " << c_name(s.var) << " = " << c_expr(s.value) << ";\n";
        emit_stmts(os, s.body, depth + 1);
        os << ind << "}\n";
        continue;
      case Stmt::Store: {
        std::string dst = c_name(s.buffer) + "[" + c_expr(s.offset) + "]";
        if (s.mode == Combiner::Sum) os << ind << dst << " += " << c_expr(s.value) << ";\n";
        else if (s.mode == Combiner::Max) os << ind << dst << " = max_(" << dst << ", " << c_expr(s.value) << ");\n";
        else os << ind << dst << " = " << c_expr(s.value) << ";\n";
        continue;
      }
    }
    emit_stmts(os, s.body, depth + 1);
    os << ind << "}\n";
  }
}

}  // namespace detail

/// Stable human-readable form of a nest.
inline std::string print_ir(const LoopNest& nest) {
  std::ostringstream os;
  os << "kernel " << nest.name << " -> " << nest.output << " {\n";
  detail::print_stmts(os, nest.body, 1);
  os << "}\n";
  return os.str();
}

/// Portable C-like source for a nest; buffers and tables become parameters.
inline std::string emit_c_text(const LoopNest& nest) {
  std::set<std::string> buffers{nest.output}, tables;
  detail::for_each_stmt(nest.body, [&](const Stmt& s) {
    detail::for_each_expr(s, [&](const Expr& e) {
      visit(e, [&](const Expr& n) {
        if (n->op == Op::Load) buffers.insert(n->name);
        if (n->op == Op::Table) tables.insert(n->name);
      });
    });
  });
  std::ostringstream os;
  os << "/* generated kernel " << nest.name << " */\n"
     << "#include <math.h>\n"
     << "static inline long floor_div_(long a, long b) { long q = a / b; return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q; }\n"
     << "static inline long floor_mod_(long a, long b) { return a - floor_div_(a, b) * b; }\n"
     << "static inline long ceil_div_(long a, long b) { return floor_div_(a + b - 1, b); }\n"
     << "static inline long ceil_to_(long a, long m) { return ceil_div_(a, m) * m; }\n"
     << "static inline long floor_to_(long a, long m) { return floor_div_(a, m) * m; }\n"
     << "#define min_(a, b) ((a) < (b) ? (a) : (b))\n"
     << "#define max_(a, b) ((a) > (b) ? (a) : (b))\n\n"
     << "void kernel_" << detail::c_name(nest.name) << "(";
  bool first = true;
  for (const auto& b : buffers) {
    os << (first ? "" : ", ") << (b == nest.output ? "double* " : "const double* ") << detail::c_name(b);
    first = false;
  }
  for (const auto& t : tables) {
    os << (first ? "" : ", ") << "const long* " << detail::c_name(t);
    first = false;
  }
  os << ") {\n";
  detail::emit_stmts(os, nest.body, 1);
  os << "}\n";
  return os.str();
}

}  // namespace ragc
