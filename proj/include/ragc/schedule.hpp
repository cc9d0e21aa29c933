#pragma once

// Scheduling primitives over a single operator, operation splitting,
// horizontal fusion and thread-remapping policies.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ragc/core_ir.hpp"
#include "ragc/fusion_prelude.hpp"

namespace ragc {

struct RemapPolicy {
  enum Kind { Identity, SortDescendingWork, ExplicitPermutation } kind = Identity;
  std::vector<int64_t> perm;
  bool operator==(const RemapPolicy&) const = default;
};

struct SplitPoint {
  enum Kind { Const, FloorMultiple } kind = Const;
  int64_t value = 0;
  bool operator==(const SplitPoint&) const = default;
};

struct SplitLoop { std::string loop; int64_t factor = 1; bool operator==(const SplitLoop&) const = default; };
struct FuseLoops { std::string outer, inner; bool operator==(const FuseLoops&) const = default; };
struct ReorderLoops { std::vector<std::string> order; bool operator==(const ReorderLoops&) const = default; };
struct PadLoop { std::string loop; int64_t multiple = 1; bool operator==(const PadLoop&) const = default; };
struct PadDim {
  std::string tensor, dim;
  int64_t multiple = 1;
  bool operator==(const PadDim&) const = default;
};
struct SplitOperation {
  std::string loop;
  std::vector<SplitPoint> points;
  bool operator==(const SplitOperation&) const = default;
};
struct HFuse { std::vector<std::string> ops; bool operator==(const HFuse&) const = default; };
struct ThreadRemap {
  std::string loop;
  RemapPolicy policy;
  bool operator==(const ThreadRemap&) const = default;
};
struct FuseDims { std::string tensor, outer, inner; bool operator==(const FuseDims&) const = default; };
struct MarkParallel { std::string loop, axis; bool operator==(const MarkParallel&) const = default; };

using SchedulePrimitive = std::variant<SplitLoop, FuseLoops, ReorderLoops, PadLoop, PadDim, SplitOperation,
                                       HFuse, ThreadRemap, FuseDims, MarkParallel>;

inline std::string policy_text(const RemapPolicy& p) {
  switch (p.kind) {
    case RemapPolicy::Identity: return "identity";
    case RemapPolicy::SortDescendingWork: return "desc";
    case RemapPolicy::ExplicitPermutation: {
      std::string s = "perm:";
      for (size_t k = 0; k < p.perm.size(); ++k) s += (k ? "," : "") + std::to_string(p.perm[k]);
      return s;
    }
  }
  return "";
}

inline RemapPolicy parse_policy(const std::string& s) {
  if (s == "identity") return {};
  if (s == "desc") return {RemapPolicy::SortDescendingWork, {}};
  if (s.rfind("perm:", 0) == 0) {
    RemapPolicy p{RemapPolicy::ExplicitPermutation, {}};
    std::stringstream ss(s.substr(5));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        p.perm.push_back(std::stoll(item));
      } catch (const std::exception&) {
        fail(ErrorKind::BadParams, "bad permutation entry '" + item + "'");
      }
    }
    return p;
  }
  fail(ErrorKind::BadParams, "unknown remap policy '" + s + "'");
}

/// One line of a schedule file, e.g. `pad_loop len 32`.
inline std::string primitive_text(const SchedulePrimitive& prim) {
  std::ostringstream os;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SplitLoop>) os << "split_loop " << p.loop << " " << p.factor;
        if constexpr (std::is_same_v<T, FuseLoops>) os << "fuse_loops " << p.outer << " " << p.inner;
        if constexpr (std::is_same_v<T, ReorderLoops>) {
          os << "reorder";
          for (const auto& l : p.order) os << " " << l;
        }
        if constexpr (std::is_same_v<T, PadLoop>) os << "pad_loop " << p.loop << " " << p.multiple;
        if constexpr (std::is_same_v<T, PadDim>) os << "pad_dim " << p.tensor << " " << p.dim << " " << p.multiple;
        if constexpr (std::is_same_v<T, SplitOperation>) {
          os << "split_op " << p.loop;
          for (const auto& pt : p.points)
            os << " " << (pt.kind == SplitPoint::FloorMultiple ? "floor:" : "") << pt.value;
        }
        if constexpr (std::is_same_v<T, HFuse>) {
          os << "hfuse";
          for (const auto& o : p.ops) os << " " << o;
        }
        if constexpr (std::is_same_v<T, ThreadRemap>) os << "remap " << p.loop << " " << policy_text(p.policy);
        if constexpr (std::is_same_v<T, FuseDims>) os << "fuse_dims " << p.tensor << " " << p.outer << " " << p.inner;
        if constexpr (std::is_same_v<T, MarkParallel>) os << "parallel " << p.loop << " " << p.axis;
      },
      prim);
  return os.str();
}

inline SchedulePrimitive parse_primitive(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> w;
  for (std::string s; is >> s;) w.push_back(s);
  if (w.empty()) fail(ErrorKind::ParseError, "empty schedule line");
  auto need = [&](size_t n) {
    if (w.size() != n) fail(ErrorKind::ParseError, "'" + w[0] + "' expects " + std::to_string(n - 1) + " arguments");
  };
  auto num = [&](const std::string& s) -> int64_t {
    try {
      size_t used = 0;
      int64_t v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, "expected an integer, got '" + s + "'");
    }
  };
  const std::string& k = w[0];
  if (k == "split_loop") { need(3); return SplitLoop{w[1], num(w[2])}; }
  if (k == "fuse_loops") { need(3); return FuseLoops{w[1], w[2]}; }
  if (k == "reorder") return ReorderLoops{{w.begin() + 1, w.end()}};
  if (k == "pad_loop") { need(3); return PadLoop{w[1], num(w[2])}; }
  if (k == "pad_dim") { need(4); return PadDim{w[1], w[2], num(w[3])}; }
  if (k == "split_op") {
    if (w.size() < 3) fail(ErrorKind::ParseError, "split_op expects a loop and split points");
    SplitOperation s{w[1], {}};
    for (size_t i = 2; i < w.size(); ++i) {
      if (w[i].rfind("floor:", 0) == 0) s.points.push_back({SplitPoint::FloorMultiple, num(w[i].substr(6))});
      else s.points.push_back({SplitPoint::Const, num(w[i])});
    }
    return s;
  }
  if (k == "hfuse") return HFuse{{w.begin() + 1, w.end()}};
  if (k == "remap") { need(3); return ThreadRemap{w[1], parse_policy(w[2])}; }
  if (k == "fuse_dims") { need(4); return FuseDims{w[1], w[2], w[3]}; }
  if (k == "parallel") { need(3); return MarkParallel{w[1], w[2]}; }
  fail(ErrorKind::ParseError, "unknown schedule primitive '" + k + "'");
}

/// A loop of the scheduled nest, iterating var over [lo, hi).
struct SLoop {
  std::string var;
  Expr lo, hi;
  std::string parallel;  // axis label, empty if sequential
  bool reduction = false;
  int64_t pad = 1;
  std::optional<FusionKey> fusion;  // set for fused vloops

  bool operator==(const SLoop& o) const {
    return var == o.var && equal(lo, o.lo) && equal(hi, o.hi) && parallel == o.parallel &&
           reduction == o.reduction && pad == o.pad && fusion == o.fusion;
  }
};

struct SGuard {
  enum Kind { Padding, Split, Bulk } kind = Padding;
  Expr cond;
  std::string dim;  // Padding: the original dim whose loop was padded
  int64_t pad = 1;  // Padding: loop pad; Split: split factor
  Expr span;        // Split: extent of the loop that was split

  bool operator==(const SGuard& o) const {
    return kind == o.kind && equal(cond, o.cond) && dim == o.dim && pad == o.pad &&
           span.valid() == o.span.valid() && (!span.valid() || equal(span, o.span));
  }
};

/// Storage-level fusion of tensor dims (outer, inner) into one dim at `pos`.
struct DimFusion {
  std::string tensor;
  int pos = 0;
  FusionKey key;
  bool operator==(const DimFusion&) const = default;
};

struct ScheduledOp {
  OperatorDef base;
  Program prog;  // copy with scheduled storage (pads, fused dims)
  std::vector<SchedulePrimitive> log;
  std::vector<SLoop> loops;
  std::map<std::string, Expr> dim_value;  // original loop dim -> value over scheduled vars
  std::vector<SGuard> guards;
  std::map<std::string, int64_t> dim_loop_pad;
  std::vector<DimFusion> dim_fusions;
  TableCatalog catalog;
  bool init = true;             // false for later pieces of a split reduction
  bool reduction_split = false;
  std::string name;
  RemapPolicy remap;

  int loop_pos(const std::string& var) const {
    for (size_t k = 0; k < loops.size(); ++k)
      if (loops[k].var == var) return static_cast<int>(k);
    return -1;
  }
  const SLoop& loop(const std::string& var) const {
    int k = loop_pos(var);
    if (k < 0) fail(ErrorKind::InvalidPrimitive, name + ": no loop named '" + var + "'");
    return loops[static_cast<size_t>(k)];
  }
  SLoop& loop(const std::string& var) {
    return const_cast<SLoop&>(static_cast<const ScheduledOp*>(this)->loop(var));
  }

  bool operator==(const ScheduledOp& o) const {
    if (dim_value.size() != o.dim_value.size()) return false;
    for (const auto& [k, v] : dim_value) {
      auto it = o.dim_value.find(k);
      if (it == o.dim_value.end() || !equal(v, it->second)) return false;
    }
    return base == o.base && prog == o.prog && log == o.log && loops == o.loops && guards == o.guards &&
           dim_loop_pad == o.dim_loop_pad && dim_fusions == o.dim_fusions && init == o.init &&
           reduction_split == o.reduction_split && name == o.name && remap == o.remap;
  }
};

namespace detail {

inline void replace_var(ScheduledOp& s, const std::string& var, const Expr& value) {
  std::map<std::string, Expr> m{{var, value}};
  for (auto& l : s.loops) {
    l.lo = substitute(l.lo, m);
    l.hi = substitute(l.hi, m);
  }
  for (auto& [d, v] : s.dim_value) v = substitute(v, m);
  for (auto& g : s.guards) {
    g.cond = substitute(g.cond, m);
    if (g.span.valid()) g.span = substitute(g.span, m);
  }
}

inline void rename_tables(ScheduledOp& s, const std::map<std::string, std::string>& names) {
  auto fn = [&](const Expr& e) -> Expr {
    if (e->op != Op::Table) return {};
    auto it = names.find(e->name);
    return it == names.end() ? Expr{} : ex::table(it->second, e->args[0]);
  };
  for (auto& l : s.loops) {
    l.lo = rewrite(l.lo, fn);
    l.hi = rewrite(l.hi, fn);
  }
  for (auto& [d, v] : s.dim_value) v = rewrite(v, fn);
  for (auto& g : s.guards) {
    g.cond = rewrite(g.cond, fn);
    if (g.span.valid()) g.span = rewrite(g.span, fn);
  }
}

inline void register_fusion(ScheduledOp& s, const FusionKey& k) {
  s.catalog[k.fo_name(s.prog)] = {TableSpec::FusionFo, {}, 0, k};
  s.catalog[k.fi_name(s.prog)] = {TableSpec::FusionFi, {}, 0, k};
  s.catalog[k.oif_name(s.prog)] = {TableSpec::FusionOif, {}, 0, k};
}

inline std::string fresh(const ScheduledOp& s, const std::string& name) {
  if (s.loop_pos(name) >= 0 || s.dim_value.count(name))
    fail(ErrorKind::InvalidPrimitive, s.name + ": loop name '" + name + "' already in use");
  return name;
}

inline bool mentions_any(const Expr& e, const std::set<std::string>& vars) {
  for (const auto& v : free_vars(e))
    if (vars.count(v)) return true;
  return false;
}

// Original dim iterated directly by `var`, if any.
inline std::string direct_dim(const ScheduledOp& s, const std::string& var) {
  for (const auto& [d, v] : s.dim_value)
    if (v->op == Op::Var && v->name == var) return d;
  return "";
}

// Matches hi == table[var(outer)] or ceil_to(table[var(outer)], pad).
inline std::optional<std::pair<std::string, int64_t>> vloop_bound(const Expr& hi, const std::string& outer) {
  Expr t = hi;
  int64_t pad = 1;
  if (t->op == Op::CeilTo && t->args[1]->op == Op::Const && t->args[1]->value.is_int) {
    pad = t->args[1]->value.i;
    t = t->args[0];
  }
  if (t->op == Op::Table && t->args[0]->op == Op::Var && t->args[0]->name == outer)
    return std::make_pair(t->name, pad);
  return std::nullopt;
}

}  // namespace detail

/// Unscheduled form of operator `op_name` of program p.
inline ScheduledOp make_scheduled(const Program& p, const std::string& op_name) {
  const OperatorDef* op = p.find_op(op_name);
  if (!op) fail(ErrorKind::UnknownOp, op_name);
  ScheduledOp s;
  s.base = *op;
  s.prog = p;
  s.name = op->name;
  for (const auto& l : op->loops) {
    SLoop sl;
    sl.var = l.dim;
    sl.lo = ex::cst(0);
    sl.hi = l.extent.varying ? ex::table(l.extent.table, ex::var(l.extent.dep)) : ex::cst(l.extent.size);
    sl.reduction = l.reduction;
    s.loops.push_back(sl);
    s.dim_value[l.dim] = ex::var(l.dim);
  }
  return s;
}

inline void apply_split_loop(ScheduledOp& s, const SplitLoop& p) {
  if (p.factor < 1) fail(ErrorKind::BadParams, "split factor must be positive");
  int k = s.loop_pos(p.loop);
  SLoop l = s.loop(p.loop);
  std::string outer = detail::fresh(s, p.loop + ".outer"), inner = detail::fresh(s, p.loop + ".inner");
  SLoop lo = l, li = l;
  lo.var = outer;
  lo.lo = ex::cst(0);
  lo.hi = ex::ceil_div(ex::sub(l.hi, l.lo), ex::cst(p.factor));
  lo.pad = 1;
  lo.fusion.reset();
  li.var = inner;
  li.lo = ex::cst(0);
  li.hi = ex::cst(p.factor);
  li.parallel.clear();
  li.pad = 1;
  li.fusion.reset();
  s.loops[static_cast<size_t>(k)] = lo;
  s.loops.insert(s.loops.begin() + k + 1, li);
  Expr value = ex::add(l.lo, ex::add(ex::mul(ex::var(outer), ex::cst(p.factor)), ex::var(inner)));
  detail::replace_var(s, p.loop, value);
  s.guards.push_back({SGuard::Split, ex::lt(value, l.hi), "", p.factor, ex::sub(l.hi, l.lo)});
}

inline void apply_fuse_loops(ScheduledOp& s, const FuseLoops& p) {
  int ko = s.loop_pos(p.outer), ki = s.loop_pos(p.inner);
  if (ko < 0 || ki < 0) fail(ErrorKind::InvalidPrimitive, s.name + ": fuse_loops on unknown loop");
  if (ki != ko + 1) fail(ErrorKind::InvalidPrimitive, s.name + ": fused loops must be adjacent");
  SLoop o = s.loops[static_cast<size_t>(ko)], i = s.loops[static_cast<size_t>(ki)];
  if (o.reduction != i.reduction)
    fail(ErrorKind::Unsupported, s.name + ": cannot fuse a reduction loop with a non-reduction loop");
  if (!ex::is_int_const(o.lo, 0) || !ex::is_int_const(i.lo, 0))
    fail(ErrorKind::Unsupported, s.name + ": fused loops must start at 0");
  SLoop f;
  f.var = detail::fresh(s, p.outer + "." + p.inner + ".fused");
  f.lo = ex::cst(0);
  f.reduction = o.reduction;
  f.parallel = o.parallel;
  Expr ov, iv;
  if (!mentions_var(i.hi, p.outer)) {
    f.hi = ex::mul(o.hi, i.hi);
    ov = ex::bin(Op::FloorDiv, ex::var(f.var), i.hi);
    iv = ex::bin(Op::Mod, ex::var(f.var), i.hi);
  } else {
    auto vb = detail::vloop_bound(i.hi, p.outer);
    if (!vb || o.hi->op != Op::Const || !o.hi->value.is_int)
      fail(ErrorKind::Unsupported, s.name + ": vloop fusion needs a constant outer extent and inner extent table[outer]");
    FusionKey key{o.hi->value.i, vb->first, vb->second, 1};
    detail::register_fusion(s, key);
    f.fusion = key;
    f.hi = ex::table(key.oif_name(s.prog), ex::cst(key.M));
    ov = ex::table(key.fo_name(s.prog), ex::var(f.var));
    iv = ex::table(key.fi_name(s.prog), ex::var(f.var));
  }
  s.loops[static_cast<size_t>(ko)] = f;
  s.loops.erase(s.loops.begin() + ki);
  detail::replace_var(s, p.outer, ov);
  detail::replace_var(s, p.inner, iv);
}

inline void apply_reorder(ScheduledOp& s, const ReorderLoops& p) {
  std::vector<int> slots;
  std::set<std::string> seen;
  for (const auto& v : p.order) {
    int k = s.loop_pos(v);
    if (k < 0 || !seen.insert(v).second)
      fail(ErrorKind::InvalidPrimitive, s.name + ": reorder lists unknown or repeated loop '" + v + "'");
    slots.push_back(k);
  }
  std::sort(slots.begin(), slots.end());
  std::vector<SLoop> next = s.loops;
  for (size_t j = 0; j < slots.size(); ++j)
    next[static_cast<size_t>(slots[j])] = s.loops[static_cast<size_t>(s.loop_pos(p.order[j]))];
  bool in_reduction = false;
  for (size_t k = 0; k < next.size(); ++k) {
    std::set<std::string> inside;
    for (size_t j = k; j < next.size(); ++j) inside.insert(next[j].var);
    if (detail::mentions_any(next[k].lo, inside) || detail::mentions_any(next[k].hi, inside))
      fail(ErrorKind::IllegalReorder, s.name + ": loop '" + next[k].var + "' bound depends on a loop placed inside it");
    if (in_reduction && !next[k].reduction)
      fail(ErrorKind::IllegalReorder, s.name + ": reduction loops must stay innermost");
    in_reduction |= next[k].reduction;
  }
  s.loops = next;
}

inline void apply_pad_loop(ScheduledOp& s, const PadLoop& p) {
  if (p.multiple < 1) fail(ErrorKind::BadParams, "pad multiple must be positive");
  SLoop& l = s.loop(p.loop);
  if (l.pad != 1) fail(ErrorKind::InvalidPrimitive, s.name + ": loop '" + p.loop + "' is already padded");
  if (p.multiple == 1) return;
  l.pad = p.multiple;
  if (l.fusion) {
    FusionKey old = *l.fusion, key = old;
    key.bulk = p.multiple;
    detail::rename_tables(s, {{old.fo_name(s.prog), key.fo_name(s.prog)},
                              {old.fi_name(s.prog), key.fi_name(s.prog)},
                              {old.oif_name(s.prog), key.oif_name(s.prog)}});
    s.catalog.erase(old.fo_name(s.prog));
    s.catalog.erase(old.fi_name(s.prog));
    s.catalog.erase(old.oif_name(s.prog));
    detail::register_fusion(s, key);
    SLoop& fl = s.loop(p.loop);
    fl.fusion = key;
    Expr end = ex::table(key.oif_name(s.prog), ex::cst(key.M));
    fl.hi = ex::ceil_to(end, p.multiple);
    s.guards.push_back({SGuard::Bulk, ex::lt(ex::var(p.loop), end), "", p.multiple, {}});
    return;
  }
  Expr hi = l.hi;
  if (hi->op == Op::Const && hi->value.is_int && ex::is_int_const(l.lo, 0) && hi->value.i % p.multiple == 0) return;
  l.hi = ex::add(l.lo, ex::ceil_to(ex::sub(hi, l.lo), p.multiple));
  std::string dim = detail::direct_dim(s, p.loop);
  if (!dim.empty()) s.dim_loop_pad[dim] = p.multiple;
  s.guards.push_back({SGuard::Padding, ex::lt(ex::var(p.loop), hi), dim, p.multiple, {}});
}

inline void apply_pad_dim(ScheduledOp& s, const PadDim& p) {
  if (p.multiple < 1) fail(ErrorKind::BadParams, "pad multiple must be positive");
  TensorDecl* t = s.prog.find_tensor(p.tensor);
  if (!t) fail(ErrorKind::UnknownTensor, p.tensor);
  int k = t->dim_index(p.dim);
  if (k < 0) fail(ErrorKind::UnknownDim, p.tensor + "." + p.dim);
  if (p.tensor == s.base.output) {
    auto it = s.dim_loop_pad.find(p.dim);
    int64_t loop_pad = it == s.dim_loop_pad.end() ? 1 : it->second;
    if (p.multiple % loop_pad != 0)
      fail(ErrorKind::PadUnderflow, p.tensor + "." + p.dim + ": storage pad " + std::to_string(p.multiple) +
                                        " does not cover loop pad " + std::to_string(loop_pad));
  }
  TensorDecl next = *t;
  next.pad[static_cast<size_t>(k)] = p.multiple;
  validate_tensor(s.prog, next);
  *t = next;
}

inline void apply_fuse_dims(ScheduledOp& s, const FuseDims& p) {
  TensorDecl* t = s.prog.find_tensor(p.tensor);
  if (!t) fail(ErrorKind::UnknownTensor, p.tensor);
  int ko = t->dim_index(p.outer), ki = t->dim_index(p.inner);
  if (ko < 0 || ki < 0) fail(ErrorKind::UnknownDim, p.tensor + ": fuse_dims");
  if (ki != ko + 1) fail(ErrorKind::InvalidPrimitive, p.tensor + ": fused dims must be adjacent");
  const Extent& eo = t->storage[static_cast<size_t>(ko)];
  const Extent& ei = t->storage[static_cast<size_t>(ki)];
  if (eo.varying || !ei.varying || ei.dep != p.outer)
    fail(ErrorKind::SingleDepViolation, p.tensor + ": fused dim would depend on more than one dim");
  for (int d = 0; d < t->rank(); ++d) {
    const Extent& e = t->storage[static_cast<size_t>(d)];
    if (d != ki && e.varying && (e.dep == p.outer || e.dep == p.inner))
      fail(ErrorKind::SingleDepViolation, p.tensor + ": dim '" + t->dims[static_cast<size_t>(d)] +
                                              "' would depend on the fused dim");
  }
  if (t->pad[static_cast<size_t>(ko)] != 1) fail(ErrorKind::Unsupported, p.tensor + ": padded outer dim");
  FusionKey key{eo.size, ei.table, t->pad[static_cast<size_t>(ki)], 1};
  std::string label = p.outer + "." + p.inner;
  if (!s.prog.find_dim(label)) s.prog.add_dim(label);
  TensorDecl next = *t;
  next.dims[static_cast<size_t>(ko)] = label;
  next.storage[static_cast<size_t>(ko)] = Extent::fixed(fused_extent(key.M, s.prog.table(key.table), 1, key.pad));
  next.pad[static_cast<size_t>(ko)] = 1;
  next.dims.erase(next.dims.begin() + ki);
  next.storage.erase(next.storage.begin() + ki);
  next.pad.erase(next.pad.begin() + ki);
  validate_tensor(s.prog, next);
  *t = next;
  detail::register_fusion(s, key);
  s.dim_fusions.push_back({p.tensor, ko, key});
}

/// Applies one per-operator primitive (split_operation and hfuse operate on lists).
inline ScheduledOp apply(ScheduledOp s, const SchedulePrimitive& prim) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SplitLoop>) apply_split_loop(s, p);
        if constexpr (std::is_same_v<T, FuseLoops>) apply_fuse_loops(s, p);
        if constexpr (std::is_same_v<T, ReorderLoops>) apply_reorder(s, p);
        if constexpr (std::is_same_v<T, PadLoop>) apply_pad_loop(s, p);
        if constexpr (std::is_same_v<T, PadDim>) apply_pad_dim(s, p);
        if constexpr (std::is_same_v<T, FuseDims>) apply_fuse_dims(s, p);
        if constexpr (std::is_same_v<T, MarkParallel>) {
          SLoop& l = s.loop(p.loop);
          if (l.reduction) fail(ErrorKind::InvalidPrimitive, s.name + ": reduction loop cannot be parallel");
          l.parallel = p.axis;
        }
        if constexpr (std::is_same_v<T, ThreadRemap>) {
          if (s.loop(p.loop).parallel.empty())
            fail(ErrorKind::NotParallel, s.name + ": loop '" + p.loop + "' is not parallel");
          s.remap = p.policy;
        }
        if constexpr (std::is_same_v<T, SplitOperation> || std::is_same_v<T, HFuse>)
          fail(ErrorKind::InvalidPrimitive, "split_op and hfuse apply to operator lists");
      },
      prim);
  s.log.push_back(prim);
  return s;
}

/// Re-applies a primitive log to the unscheduled operator.
inline ScheduledOp replay(const Program& p, const std::string& op_name, const std::vector<SchedulePrimitive>& log) {
  ScheduledOp s = make_scheduled(p, op_name);
  for (const auto& prim : log) s = apply(std::move(s), prim);
  return s;
}

/// Splits the iteration space of `loop` at the given points into consecutive pieces.
inline std::vector<ScheduledOp> split_operation(const ScheduledOp& s, const std::string& loop,
                                                const std::vector<SplitPoint>& points, bool hfuse_intended = false) {
  const SLoop& l = s.loop(loop);
  if (points.empty()) fail(ErrorKind::NonMonotonePoints, "no split points");
  if (l.reduction && hfuse_intended)
    fail(ErrorKind::ReductionSplit, s.name + ": splitting reduction loop '" + loop + "' for horizontal fusion");
  for (size_t k = 0; k < points.size(); ++k) {
    const SplitPoint& pt = points[k];
    if (pt.value < 0 || (pt.kind == SplitPoint::FloorMultiple && pt.value < 1))
      fail(ErrorKind::NonMonotonePoints, "invalid split point");
    if (k == 0) continue;
    const SplitPoint& prev = points[k - 1];
    bool ok = false;
    if (prev.kind == SplitPoint::Const && pt.kind == SplitPoint::Const) ok = pt.value > prev.value;
    // floor_to(E, a) <= floor_to(E, b) for every E only when b divides a.
    if (prev.kind == SplitPoint::FloorMultiple && pt.kind == SplitPoint::FloorMultiple)
      ok = prev.value > pt.value && prev.value % pt.value == 0;
    if (!ok) fail(ErrorKind::NonMonotonePoints, s.name + ": split points must increase for every extent");
  }
  std::vector<Expr> bounds{l.lo};
  Expr len = ex::sub(l.hi, l.lo);
  for (const auto& pt : points) {
    Expr off = pt.kind == SplitPoint::Const ? ex::min(ex::cst(pt.value), len) : ex::floor_to(len, pt.value);
    bounds.push_back(ex::add(l.lo, off));
  }
  bounds.push_back(l.hi);
  std::vector<ScheduledOp> out;
  for (size_t k = 0; k + 1 < bounds.size(); ++k) {
    ScheduledOp piece = s;
    SLoop& pl = piece.loop(loop);
    pl.lo = bounds[k];
    pl.hi = bounds[k + 1];
    piece.name = s.name + "." + std::to_string(k);
    if (l.reduction) {
      piece.reduction_split = true;
      if (k > 0) piece.init = false;
    }
    piece.log.push_back(SplitOperation{loop, points});
    out.push_back(std::move(piece));
  }
  return out;
}

/// A horizontally fused kernel: members run as independent blocks of one dispatch.
struct HFusedKernel {
  std::vector<ScheduledOp> members;
};

inline HFusedKernel hfuse(const std::vector<ScheduledOp>& ops) {
  if (ops.size() == 1) return {ops};
  for (const auto& s : ops) {
    if (s.reduction_split)
      fail(ErrorKind::ReductionSplitHFuse, s.name + ": pieces of a split reduction cannot be fused");
    if (s.loops.empty() || s.loops[0].parallel.empty() || s.loops[0].reduction)
      fail(ErrorKind::NonOutermost, s.name + ": horizontal fusion needs a parallel outermost loop");
    for (size_t k = 1; k < s.loops.size(); ++k)
      if (!s.loops[k].parallel.empty())
        fail(ErrorKind::NonOutermost, s.name + ": only the outermost loop may be parallel");
  }
  for (size_t a = 0; a < ops.size(); ++a)
    for (size_t b = 0; b < ops.size(); ++b) {
      if (a == b) continue;
      auto reads = tensors_read(ops[b].base);
      if (std::find(reads.begin(), reads.end(), ops[a].base.output) != reads.end())
        fail(ErrorKind::DependentOps, ops[b].name + " reads the output of " + ops[a].name);
    }
  return {ops};
}

/// Block dispatch order for the given per-block work estimates.
inline std::vector<int64_t> remap_order(const RemapPolicy& p, const std::vector<int64_t>& works) {
  auto n = static_cast<int64_t>(works.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (p.kind == RemapPolicy::SortDescendingWork) {
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      return works[static_cast<size_t>(a)] > works[static_cast<size_t>(b)];
    });
  } else if (p.kind == RemapPolicy::ExplicitPermutation) {
    std::vector<int64_t> sorted = p.perm;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != order) fail(ErrorKind::BadParams, "remap permutation is not a permutation of block ids");
    order = p.perm;
  }
  return order;
}

/// One dispatch unit: a single op, the pieces of a split op, or an hfused kernel.
struct Kernel {
  std::vector<ScheduledOp> pieces;
  bool hfused = false;
};

/// Schedule file: primitives grouped by operator; `op <name>` switches target.
struct ScheduleScript {
  std::vector<std::pair<std::string, SchedulePrimitive>> lines;
};

inline ScheduleScript parse_schedule(const std::string& text, const Program& p) {
  ScheduleScript out;
  std::string target = p.ops.empty() ? "" : p.ops[0].name;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ws(line);
    std::string first;
    if (!(ws >> first)) continue;
    try {
      if (first == "op") {
        std::string name, extra;
        if (!(ws >> name) || (ws >> extra)) fail(ErrorKind::ParseError, "'op' expects one operator name");
        if (!p.find_op(name)) fail(ErrorKind::UnknownOp, name);
        target = name;
        continue;
      }
      out.lines.push_back({target, parse_primitive(line)});
    } catch (const Error& e) {
      throw Error(e.kind(), "schedule line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace detail {

// Tensor layouts edited by one op's schedule become visible to every op.
inline void sync_storage(const Program& original, std::vector<Kernel>& kernels) {
  std::map<std::string, TensorDecl> edited;
  std::map<std::string, DimFusion> fusions;
  TableCatalog catalog;
  for (const auto& k : kernels)
    for (const auto& s : k.pieces) {
      for (const auto& t : s.prog.tensors) {
        const TensorDecl* orig = original.find_tensor(t.name);
        if (orig && *orig == t) continue;
        auto [it, fresh] = edited.insert({t.name, t});
        if (!fresh && !(it->second == t))
          fail(ErrorKind::InvalidPrimitive, t.name + ": operators disagree on its storage layout");
      }
      for (const auto& f : s.dim_fusions) {
        auto [it, fresh] = fusions.insert({f.tensor, f});
        if (!fresh && !(it->second == f)) fail(ErrorKind::InvalidPrimitive, f.tensor + ": conflicting dim fusions");
      }
      for (const auto& [n, spec] : s.catalog) catalog[n] = spec;
    }
  for (auto& k : kernels)
    for (auto& s : k.pieces) {
      for (auto& t : s.prog.tensors)
        if (auto it = edited.find(t.name); it != edited.end()) {
          for (const auto& d : it->second.dims)
            if (!s.prog.find_dim(d)) s.prog.add_dim(d);
          t = it->second;
        }
      s.dim_fusions.clear();
      for (const auto& [n, f] : fusions) s.dim_fusions.push_back(f);
      for (const auto& [n, spec] : catalog) s.catalog.insert({n, spec});
    }
}

}  // namespace detail

/// Applies a schedule script to every operator of p, in program order.
inline std::vector<Kernel> schedule_program(const Program& p, const ScheduleScript& script) {
  std::vector<Kernel> kernels;
  for (const auto& op : p.ops) {
    Kernel k;
    k.pieces.push_back(make_scheduled(p, op.name));
    std::vector<std::pair<std::string, SchedulePrimitive>> mine;
    for (const auto& line : script.lines)
      if (line.first == op.name) mine.push_back(line);
    for (size_t i = 0; i < mine.size(); ++i) {
      const auto& prim = mine[i].second;
      if (const auto* so = std::get_if<SplitOperation>(&prim)) {
        if (k.pieces.size() != 1) fail(ErrorKind::Unsupported, op.name + ": only one split_op per operator");
        bool later_hfuse = false;
        for (size_t j = i + 1; j < mine.size(); ++j) later_hfuse |= std::holds_alternative<HFuse>(mine[j].second);
        k.pieces = split_operation(k.pieces[0], so->loop, so->points, later_hfuse);
      } else if (std::holds_alternative<HFuse>(prim)) {
        k.pieces = hfuse(k.pieces).members;
        k.hfused = true;
        for (auto& s : k.pieces) s.log.push_back(prim);
      } else {
        for (auto& s : k.pieces) s = apply(std::move(s), prim);
      }
    }
    kernels.push_back(std::move(k));
  }
  detail::sync_storage(p, kernels);
  return kernels;
}

inline std::vector<Kernel> schedule_program(const Program& p, const std::string& script_text) {
  return schedule_program(p, parse_schedule(script_text, p));
}

}  // namespace ragc
