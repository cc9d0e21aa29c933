#pragma once

// Reference interpreter for loop nests, a simulated parallel dispatcher and
// the dense padded oracle used as ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ragc/core_ir.hpp"
#include "ragc/fusion_prelude.hpp"
#include "ragc/lowering.hpp"
#include "ragc/ragged_storage.hpp"
#include "ragc/schedule.hpp"

namespace ragc {

/// Flat scalar storage for one tensor, padding included.
struct Buffer {
  std::string name;
  ElemKind elem = ElemKind::Float64;
  std::vector<double> f;
  std::vector<int64_t> i;

  Buffer() = default;
  Buffer(std::string n, ElemKind k, int64_t size) : name(std::move(n)), elem(k) {
    if (k == ElemKind::Float64) f.assign(static_cast<size_t>(size), 0.0);
    else i.assign(static_cast<size_t>(size), 0);
  }
  int64_t size() const {
    return static_cast<int64_t>(elem == ElemKind::Float64 ? f.size() : i.size());
  }
  void check(int64_t off) const {
    if (off < 0 || off >= size())
      fail(ErrorKind::OutOfRangeAccess, name + "[" + std::to_string(off) + "] outside [0, " +
                                            std::to_string(size()) + ")");
  }
  Value get(int64_t off) const {
    check(off);
    return elem == ElemKind::Float64 ? Value::of_float(f[static_cast<size_t>(off)])
                                     : Value::of_int(i[static_cast<size_t>(off)]);
  }
  void set(int64_t off, const Value& v) {
    check(off);
    if (elem == ElemKind::Float64) f[static_cast<size_t>(off)] = v.as_double();
    else i[static_cast<size_t>(off)] = v.as_int();
  }
};

using Buffers = std::map<std::string, Buffer>;

inline Buffers allocate_buffers(const Program& p) {
  Buffers out;
  for (const auto& t : p.tensors) out[t.name] = Buffer(t.name, t.elem, total_size(t, p));
  return out;
}

/// Row-major dense array over the max extents of a tensor.
struct DenseArray {
  ElemKind elem = ElemKind::Float64;
  std::vector<int64_t> shape, strides;
  std::vector<double> f;
  std::vector<int64_t> i;

  DenseArray() = default;
  DenseArray(ElemKind k, std::vector<int64_t> s) : elem(k), shape(std::move(s)) {
    strides.assign(shape.size(), 1);
    int64_t n = 1;
    for (size_t d = shape.size(); d-- > 0;) {
      strides[d] = n;
      n *= shape[d];
    }
    if (k == ElemKind::Float64) f.assign(static_cast<size_t>(n), 0.0);
    else i.assign(static_cast<size_t>(n), 0);
  }
  int64_t flat(const int64_t* idx) const {
    int64_t off = 0;
    for (size_t d = 0; d < shape.size(); ++d) {
      if (idx[d] < 0 || idx[d] >= shape[d]) fail(ErrorKind::OutOfRangeAccess, "dense index out of range");
      off += idx[d] * strides[d];
    }
    return off;
  }
  Value get(const std::vector<int64_t>& idx) const { return at(flat(idx.data())); }
  Value at(int64_t off) const {
    return elem == ElemKind::Float64 ? Value::of_float(f[static_cast<size_t>(off)])
                                     : Value::of_int(i[static_cast<size_t>(off)]);
  }
  void set(const std::vector<int64_t>& idx, const Value& v) {
    int64_t off = flat(idx.data());
    if (elem == ElemKind::Float64) f[static_cast<size_t>(off)] = v.as_double();
    else i[static_cast<size_t>(off)] = v.as_int();
  }
};

/// Expressions compiled to an index-linked node array with variable slots.
/// Integer-typed subtrees are evaluated on a separate int64 path.
class Engine {
 public:
  struct Resolver {
    std::function<const std::vector<int64_t>*(const std::string&)> table;
    std::function<Buffer*(const std::string&)> buffer;
    std::function<const DenseArray*(const std::string&)> dense;
  };

  int64_t table_reads = 0;

  explicit Engine(Resolver r) : r_(std::move(r)) {}

  int new_slot(int let_node = -1) {
    slots_.push_back({});
    let_node_.push_back(let_node);
    ready_.push_back(1);
    return static_cast<int>(slots_.size()) - 1;
  }
  void set(int slot, Value v) { slots_[static_cast<size_t>(slot)] = v; }
  void reset_let(int slot) { ready_[static_cast<size_t>(slot)] = 0; }

  /// Compiles e; `scope` maps variable names to slots.
  int compile(const Expr& e, const std::map<std::string, int>& scope) {
    Node n;
    n.op = e->op;
    n.c = e->value;
    switch (e->op) {
      case Op::Const: n.is_int = e->value.is_int; break;
      case Op::Var: {
        auto it = scope.find(e->name);
        if (it == scope.end()) fail(ErrorKind::UnboundVariable, e->name);
        n.slot = it->second;
        int let = let_node_[static_cast<size_t>(n.slot)];
        n.is_int = let < 0 || nodes_[static_cast<size_t>(let)].is_int;
        break;
      }
      case Op::Table:
        n.table = r_.table ? r_.table(e->name) : nullptr;
        if (!n.table) fail(ErrorKind::MissingPrelude, "table " + e->name + " not available");
        n.a = compile(e->args[0], scope);
        n.name = intern(e->name);
        break;
      case Op::Load:
        n.buf = r_.buffer ? r_.buffer(e->name) : nullptr;
        if (!n.buf) fail(ErrorKind::UnknownTensor, e->name);
        n.a = compile(e->args[0], scope);
        n.is_int = n.buf->elem == ElemKind::Int64;
        break;
      case Op::Read: {
        n.dense = r_.dense ? r_.dense(e->name) : nullptr;
        if (!n.dense) fail(ErrorKind::UnknownTensor, e->name);
        if (e->args.size() > 8) fail(ErrorKind::Unsupported, "rank above 8");
        std::vector<int> args;
        for (const auto& a : e->args) args.push_back(compile(a, scope));
        n.a = static_cast<int>(arg_lists_.size());
        n.b = static_cast<int>(args.size());
        arg_lists_.insert(arg_lists_.end(), args.begin(), args.end());
        n.is_int = n.dense->elem == ElemKind::Int64;
        break;
      }
      case Op::Exp: n.a = compile(e->args[0], scope); n.is_int = false; break;
      case Op::Neg: n.a = compile(e->args[0], scope); n.is_int = nodes_[static_cast<size_t>(n.a)].is_int; break;
      default: {
        n.a = compile(e->args[0], scope);
        n.b = compile(e->args[1], scope);
        const Node& x = nodes_[static_cast<size_t>(n.a)];
        const Node& y = nodes_[static_cast<size_t>(n.b)];
        bool ints = x.is_int && y.is_int;
        bool cmp = n.op == Op::Lt || n.op == Op::Le || n.op == Op::Eq || n.op == Op::And;
        n.is_int = ints || cmp;
        n.int_args = ints;
        if (x.op == Op::Const && y.op == Op::Const) {
          Value v = apply_binary(n.op, x.c, y.c);
          nodes_.resize(static_cast<size_t>(std::min(n.a, n.b)));
          Node k;
          k.op = Op::Const;
          k.c = v;
          k.is_int = v.is_int;
          nodes_.push_back(k);
          return static_cast<int>(nodes_.size()) - 1;
        }
      }
    }
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  Value eval(int k) {
    const Node& n = nodes_[static_cast<size_t>(k)];
    if (n.is_int) return Value::of_int(ieval(k));
    switch (n.op) {
      case Op::Const: return n.c;
      case Op::Var: return var(n.slot);
      case Op::Load: return n.buf->get(ieval(n.a));
      case Op::Read: return n.dense->at(dense_offset(n));
      case Op::Exp: return Value::of_float(std::exp(eval(n.a).as_double()));
      case Op::Neg: return Value::of_float(-eval(n.a).f);
      default: return apply_binary(n.op, eval(n.a), eval(n.b));
    }
  }

  int64_t ieval(int k) {
    const Node& n = nodes_[static_cast<size_t>(k)];
    if (!n.is_int) return eval(k).as_int();
    switch (n.op) {
      case Op::Const: return n.c.i;
      case Op::Var: return var(n.slot).as_int();
      case Op::Table: {
        int64_t i = ieval(n.a);
        ++table_reads;
        if (i < 0 || i >= static_cast<int64_t>(n.table->size()))
          fail(ErrorKind::OutOfRangeAccess, names_[static_cast<size_t>(n.name)] + "[" + std::to_string(i) + "]");
        return (*n.table)[static_cast<size_t>(i)];
      }
      case Op::Load: {
        int64_t off = ieval(n.a);
        n.buf->check(off);
        return n.buf->i[static_cast<size_t>(off)];
      }
      case Op::Read: return n.dense->i[static_cast<size_t>(dense_offset(n))];
      case Op::Neg: return -ieval(n.a);
      default: break;
    }
    if (!n.int_args) return apply_binary(n.op, eval(n.a), eval(n.b)).i;
    int64_t a = ieval(n.a), b = ieval(n.b);
    switch (n.op) {
      case Op::Add: return a + b;
      case Op::Sub: return a - b;
      case Op::Mul: return a * b;
      case Op::Div:
      case Op::FloorDiv: return floor_div(a, b);
      case Op::Mod: return floor_mod(a, b);
      case Op::Min: return std::min(a, b);
      case Op::Max: return std::max(a, b);
      case Op::CeilTo: return round_up(a, b);
      case Op::FloorTo: return round_down(a, b);
      case Op::CeilDiv: return ceil_div(a, b);
      case Op::Lt: return a < b;
      case Op::Le: return a <= b;
      case Op::Eq: return a == b;
      case Op::And: return a != 0 && b != 0;
      default: return apply_binary(n.op, Value::of_int(a), Value::of_int(b)).i;
    }
  }

 private:
  struct Node {
    Op op = Op::Const;
    bool is_int = true;    // result type
    bool int_args = true;  // binary: both operands integer
    int a = -1, b = -1, slot = -1, name = -1;
    Value c;
    const std::vector<int64_t>* table = nullptr;
    Buffer* buf = nullptr;
    const DenseArray* dense = nullptr;
  };

  const Value& var(int slot) {
    auto s = static_cast<size_t>(slot);
    if (!ready_[s]) {
      slots_[s] = eval(let_node_[s]);
      ready_[s] = 1;
    }
    return slots_[s];
  }

  int64_t dense_offset(const Node& n) {
    int64_t idx[8];
    for (int d = 0; d < n.b; ++d) idx[d] = ieval(arg_lists_[static_cast<size_t>(n.a + d)]);
    return n.dense->flat(idx);
  }

  int intern(const std::string& s) {
    names_.push_back(s);
    return static_cast<int>(names_.size()) - 1;
  }

  Resolver r_;
  std::vector<Node> nodes_;
  std::vector<int> arg_lists_;
  std::vector<std::string> names_;
  std::vector<Value> slots_;
  std::vector<int> let_node_;
  std::vector<char> ready_;
};

struct RunStats {
  std::vector<int64_t> worker_work;
  int64_t makespan = 0;
  int64_t table_reads = 0;
  int64_t guard_evals = 0;
  int64_t flops = 0;
  std::vector<std::pair<int64_t, int64_t>> block_work;  // (block id, work units)

  int64_t total_work() const {
    int64_t t = 0;
    for (auto [id, w] : block_work) t += w;
    return t;
  }
};

namespace detail {

inline bool pure_arith(const Expr& e) {
  if (e->op == Op::Table || e->op == Op::Load || e->op == Op::Read) return false;
  for (const auto& a : e->args)
    if (!pure_arith(a)) return false;
  return true;
}

// Maximal pure-arithmetic subtrees of e that use none of `banned`.
inline void invariant_arith(const Expr& e, const std::set<std::string>& banned, std::vector<Expr>& out) {
  if (!e->args.empty() && pure_arith(e)) {
    bool ok = true;
    for (const auto& v : free_vars(e)) ok &= !banned.count(v);
    if (ok) {
      for (const auto& x : out)
        if (equal(x, e)) return;
      out.push_back(e);
      return;
    }
  }
  for (const auto& a : e->args) invariant_arith(a, banned, out);
}

// Interpreter-side code motion of loop-invariant index arithmetic. Lets are
// evaluated lazily, so nothing runs that the original nest would skip.
inline std::vector<Stmt> hoist_arith(std::vector<Stmt> body, int& counter) {
  std::vector<Stmt> out;
  for (auto& s : body) {
    if (s.kind != Stmt::Loop) {
      s.body = hoist_arith(std::move(s.body), counter);
      out.push_back(std::move(s));
      continue;
    }
    s.body = hoist_arith(std::move(s.body), counter);
    std::set<std::string> banned{s.var};
    bound_vars(s.body, banned);
    std::vector<Expr> found;
    for_each_stmt(s.body, [&](const Stmt& t) { for_each_expr(t, [&](const Expr& e) { invariant_arith(e, banned, found); }); });
    std::vector<std::pair<std::string, Expr>> lets;
    for (const auto& e : found) lets.push_back({"_a" + std::to_string(counter++), e});
    if (!lets.empty())
      map_exprs(s.body, [&](const Expr& x) {
        return rewrite(x, [&](const Expr& e) -> Expr {
          for (const auto& [name, v] : lets)
            if (equal(e, v)) return ex::var(name);
          return {};
        });
      });
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

class NestRunner {
 public:
  NestRunner(const LoopNest& nest, Buffers& buffers, const Program& p, const PreludeProgram& prelude)
      : eng_(Engine::Resolver{
            [&p, &prelude](const std::string& name) -> const std::vector<int64_t>* {
              if (const auto* t = prelude.find(name)) return t;
              auto it = p.tables.find(name);
              return it == p.tables.end() ? nullptr : &it->second.values;
            },
            [&buffers](const std::string& name) -> Buffer* {
              auto it = buffers.find(name);
              return it == buffers.end() ? nullptr : &it->second;
            },
            nullptr}) {
    std::map<std::string, int> scope;
    int counter = 0;
    for (const auto& s : hoist_arith(nest.body, counter)) body_.push_back(compile(s, scope, buffers));
    // Blocks are the iterations of the first loop reached without entering another loop.
    for (CStmt* c = body_.size() == 1 ? &body_[0] : nullptr; c;) {
      if (c->kind == Stmt::Loop) {
        if (c->parallel) c->block_loop = true;
        break;
      }
      c = c->body.size() == 1 ? &c->body[0] : nullptr;
    }
  }

  RunStats run() {
    stats_ = {};
    block_ = 0;
    for (auto& c : body_) exec(c);
    for (const auto& [id, w] : work_) stats_.block_work.push_back({id, w});
    if (stats_.block_work.empty()) stats_.block_work.push_back({0, 0});
    stats_.table_reads = eng_.table_reads;
    return stats_;
  }

 private:
  struct CStmt {
    Stmt::Kind kind = Stmt::Store;
    int slot = -1, lo = -1, hi = -1, cond = -1, offset = -1, value = -1;
    Buffer* buf = nullptr;
    Combiner mode = Combiner::Assign;
    bool init = false, parallel = false, leaf = false, block_loop = false;
    std::vector<CStmt> body;
  };

  static bool has_loop(const std::vector<Stmt>& body) {
    for (const auto& s : body)
      if (s.kind == Stmt::Loop || has_loop(s.body)) return true;
    return false;
  }

  CStmt compile(const Stmt& s, std::map<std::string, int>& scope, Buffers& buffers) {
    CStmt c;
    c.kind = s.kind;
    std::optional<std::pair<std::string, std::optional<int>>> shadow;
    switch (s.kind) {
      case Stmt::Loop:
        c.lo = eng_.compile(s.lo, scope);
        c.hi = eng_.compile(s.hi, scope);
        c.slot = eng_.new_slot();
        c.parallel = !s.parallel.empty();
        c.leaf = !has_loop(s.body);
        break;
      case Stmt::Let:
        c.slot = eng_.new_slot(eng_.compile(s.value, scope));
        break;
      case Stmt::Guard:
        c.cond = eng_.compile(s.cond, scope);
        break;
      case Stmt::Store: {
        auto it = buffers.find(s.buffer);
        if (it == buffers.end()) fail(ErrorKind::UnknownTensor, s.buffer);
        c.buf = &it->second;
        c.offset = eng_.compile(s.offset, scope);
        c.value = eng_.compile(s.value, scope);
        c.mode = s.mode;
        c.init = s.init;
        return c;
      }
    }
    if (c.kind == Stmt::Loop || c.kind == Stmt::Let) {
      auto prev = scope.find(s.var);
      shadow = std::make_pair(s.var, prev == scope.end() ? std::nullopt : std::optional<int>(prev->second));
      scope[s.var] = c.slot;
    }
    for (const auto& b : s.body) c.body.push_back(compile(b, scope, buffers));
    if (shadow) {
      if (shadow->second) scope[shadow->first] = *shadow->second;
      else scope.erase(shadow->first);
    }
    return c;
  }

  void exec(CStmt& c) {
    switch (c.kind) {
      case Stmt::Loop: {
        int64_t lo = eng_.eval(c.lo).as_int(), hi = eng_.eval(c.hi).as_int();
        for (int64_t v = lo; v < hi; ++v) {
          eng_.set(c.slot, Value::of_int(v));
          if (c.block_loop) {
            block_ = v;
            work_[v];
          }
          if (c.leaf) ++work_[block_];
          for (auto& b : c.body) exec(b);
        }
        return;
      }
      case Stmt::Let:
        eng_.reset_let(c.slot);
        for (auto& b : c.body) exec(b);
        return;
      case Stmt::Guard:
        ++stats_.guard_evals;
        if (eng_.eval(c.cond).as_int() == 0) return;
        for (auto& b : c.body) exec(b);
        return;
      case Stmt::Store: {
        int64_t off = eng_.eval(c.offset).as_int();
        Value v = eng_.eval(c.value);
        if (!c.init) ++stats_.flops;
        if (c.mode == Combiner::Sum) v = apply_binary(Op::Add, c.buf->get(off), v);
        else if (c.mode == Combiner::Max) v = apply_binary(Op::Max, c.buf->get(off), v);
        c.buf->set(off, v);
        return;
      }
    }
  }

  Engine eng_;
  std::vector<CStmt> body_;
  RunStats stats_;
  int64_t block_ = 0;
  std::map<int64_t, int64_t> work_;
};

}  // namespace detail

/// Runs a nest against the buffers. Stats count table reads, guard checks,
/// executed body stores (flops) and per-block work (innermost iterations).
inline RunStats interpret(const LoopNest& nest, Buffers& buffers, const Program& p, const PreludeProgram& prelude) {
  detail::NestRunner r(nest, buffers, p, prelude);
  return r.run();
}

struct Block {
  int64_t id = 0;
  int member = 0;
  int64_t work = 0;
};

struct DispatchPlan {
  std::vector<Block> blocks;
  int workers = 1;
  std::vector<int64_t> order;  // positions into blocks
};

inline DispatchPlan make_plan(std::vector<Block> blocks, int workers, const RemapPolicy& policy) {
  if (workers < 1) fail(ErrorKind::BadParams, "worker count must be positive");
  std::vector<int64_t> works;
  for (const auto& b : blocks) works.push_back(b.work);
  DispatchPlan plan{std::move(blocks), workers, {}};
  plan.order = remap_order(policy, works);
  return plan;
}

/// Greedy list scheduling: each block in order goes to the worker that frees
/// up first (lowest id on ties).
inline RunStats simulate_parallel(const DispatchPlan& plan) {
  RunStats st;
  st.worker_work.assign(static_cast<size_t>(plan.workers), 0);
  for (int64_t pos : plan.order) {
    auto w = std::min_element(st.worker_work.begin(), st.worker_work.end());
    *w += plan.blocks[static_cast<size_t>(pos)].work;
  }
  st.makespan = *std::max_element(st.worker_work.begin(), st.worker_work.end());
  for (const auto& b : plan.blocks) st.block_work.push_back({b.id, b.work});
  return st;
}

inline RunStats simulate_parallel(const std::vector<int64_t>& works, int workers, const RemapPolicy& policy) {
  std::vector<Block> blocks;
  for (size_t k = 0; k < works.size(); ++k) blocks.push_back({static_cast<int64_t>(k), 0, works[k]});
  return simulate_parallel(make_plan(std::move(blocks), workers, policy));
}

/// Runs the members of an hfused kernel; their blocks share one dispatch plan.
inline RunStats run_hfused(const std::vector<LoopNest>& members, Buffers& buffers, const Program& p,
                           const PreludeProgram& prelude, int workers = 1, const RemapPolicy& policy = {}) {
  RunStats total;
  std::vector<Block> blocks;
  for (size_t m = 0; m < members.size(); ++m) {
    RunStats st = interpret(members[m], buffers, p, prelude);
    total.table_reads += st.table_reads;
    total.guard_evals += st.guard_evals;
    total.flops += st.flops;
    for (auto [id, w] : st.block_work) blocks.push_back({id, static_cast<int>(m), w});
  }
  RunStats sim = simulate_parallel(make_plan(blocks, workers, policy));
  total.worker_work = sim.worker_work;
  total.makespan = sim.makespan;
  for (const auto& b : blocks) total.block_work.push_back({b.id, b.work});
  return total;
}

/// Calls fn for every unpadded index tuple of tensor t, in row-major order.
inline void for_each_valid_index(const TensorDecl& t, const Program& p,
                                 const std::function<void(const std::vector<int64_t>&)>& fn) {
  std::vector<int64_t> idx(static_cast<size_t>(t.rank()), 0);
  std::function<void(int)> walk = [&](int d) {
    if (d == t.rank()) {
      fn(idx);
      return;
    }
    const Extent& e = t.storage[static_cast<size_t>(d)];
    int64_t n = e.varying ? p.table(e.table).at(idx[static_cast<size_t>(t.dim_index(e.dep))]) : e.size;
    for (int64_t v = 0; v < n; ++v) {
      idx[static_cast<size_t>(d)] = v;
      walk(d + 1);
    }
  };
  walk(0);
}

/// Maps logical indices of a tensor to physical offsets in its scheduled layout.
class TensorMap {
 public:
  TensorMap(const std::string& tensor, const Program& sched, const std::vector<DimFusion>& fusions)
      : eng_(Engine::Resolver{[this](const std::string& n) { return find(n); }, nullptr, nullptr}) {
    const TensorDecl& t = sched.tensor(tensor);
    Layout L(t, sched);
    for (const auto& [d, a] : L.aux_arrays()) tables_[a.name] = a.entries;
    for (const auto& [n, tab] : sched.tables) tables_[n] = tab.values;
    std::vector<Expr> idx;
    std::map<std::string, int> scope;
    int rank = t.rank();
    for (const auto& f : fusions)
      if (f.tensor == tensor) ++rank;
    for (int d = 0; d < rank; ++d) {
      std::string v = "i" + std::to_string(d);
      idx.push_back(ex::var(v));
      scope[v] = eng_.new_slot();
      slots_.push_back(scope[v]);
    }
    for (const auto& f : fusions) {
      if (f.tensor != tensor) continue;
      std::string oif = f.key.oif_name(sched);
      tables_[oif] = build_fusion_maps(f.key, sched).oif_base;
      auto pos = static_cast<size_t>(f.pos);
      idx[pos] = ex::add(ex::table(oif, idx[pos]), idx[pos + 1]);
      idx.erase(idx.begin() + static_cast<long>(pos) + 1);
    }
    root_ = eng_.compile(lower_access(L, idx).to_expr(), scope);
  }

  int64_t offset(const std::vector<int64_t>& idx) {
    for (size_t d = 0; d < slots_.size(); ++d) eng_.set(slots_[d], Value::of_int(idx[d]));
    return eng_.eval(root_).as_int();
  }

 private:
  const std::vector<int64_t>* find(const std::string& n) const {
    auto it = tables_.find(n);
    return it == tables_.end() ? nullptr : &it->second;
  }
  std::map<std::string, std::vector<int64_t>> tables_;
  Engine eng_;
  std::vector<int> slots_;
  int root_ = -1;
};

/// Max extents of a tensor (no padding).
inline std::vector<int64_t> dense_shape(const TensorDecl& t, const Program& p) {
  std::vector<int64_t> s;
  for (const auto& e : t.storage) s.push_back(detail::extent_max(p, e));
  return s;
}

/// Ground truth: every tensor held in a max-extent dense array; each operator
/// runs plain dense loops with out-of-extent iterations masked off.
inline std::map<std::string, DenseArray> dense_oracle(const Program& p, std::map<std::string, DenseArray> arrays) {
  for (const auto& t : p.tensors)
    if (!arrays.count(t.name)) arrays[t.name] = DenseArray(t.elem, dense_shape(t, p));
  for (const auto& op : p.ops) {
    Engine eng(Engine::Resolver{
        [&p](const std::string& n) -> const std::vector<int64_t>* {
          auto it = p.tables.find(n);
          return it == p.tables.end() ? nullptr : &it->second.values;
        },
        nullptr, [&arrays](const std::string& n) -> const DenseArray* {
          auto it = arrays.find(n);
          return it == arrays.end() ? nullptr : &it->second;
        }});
    std::map<std::string, int> scope;
    std::vector<int> slot;
    for (const auto& l : op.loops) {
      scope[l.dim] = eng.new_slot();
      slot.push_back(scope[l.dim]);
    }
    int body = eng.compile(op.body, scope);
    DenseArray& out = arrays[op.output];
    size_t n = op.loops.size();
    std::vector<int64_t> idx(n, 0), out_idx;
    std::vector<int64_t> maxe;
    for (const auto& l : op.loops) maxe.push_back(detail::extent_max(p, l.extent));
    auto real = [&](size_t k) {
      const Extent& e = op.loops[k].extent;
      if (!e.varying) return e.size;
      return p.table(e.table).at(idx[static_cast<size_t>(op.loop_index(e.dep))]);
    };
    Value acc;
    ElemKind ek = p.tensor(op.output).elem;
    std::function<void(size_t)> walk = [&](size_t k) {
      if (k == n) {
        Value v = eng.eval(body);
        if (op.combine == Combiner::Sum) acc = apply_binary(Op::Add, acc, v);
        else if (op.combine == Combiner::Max) acc = apply_binary(Op::Max, acc, v);
        else acc = v;
        return;
      }
      for (int64_t v = 0; v < maxe[k]; ++v) {
        if (v >= real(k)) continue;  // mask
        idx[k] = v;
        eng.set(slot[k], Value::of_int(v));
        bool owner = !op.loops[k].reduction && (k + 1 == n || op.loops[k + 1].reduction);
        if (owner) {
          if (op.combine == Combiner::Max)
            acc = ek == ElemKind::Int64 ? Value::of_int(INT64_MIN) : Value::of_float(-HUGE_VAL);
          else
            acc = ek == ElemKind::Int64 ? Value::of_int(0) : Value::of_float(0.0);
        }
        walk(k + 1);
        if (owner) {
          out_idx.clear();
          for (size_t j = 0; j <= k; ++j) out_idx.push_back(idx[j]);
          out.set(out_idx, acc);
        }
      }
    };
    if (n == 0 || op.loops[0].reduction) fail(ErrorKind::Unsupported, op.name + ": no output loops");
    walk(0);
  }
  return arrays;
}

/// Writes logical values into the physical buffer (padding left untouched).
inline void pack(const TensorDecl& logical, const Program& base, const DenseArray& src, Buffer& dst, TensorMap& map) {
  for_each_valid_index(logical, base, [&](const std::vector<int64_t>& idx) { dst.set(map.offset(idx), src.get(idx)); });
}

struct Comparison {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool bitwise_equal = true;
  int64_t elements = 0;
};

/// Compares the valid region of a physical buffer with a dense array.
inline Comparison compare(const TensorDecl& logical, const Program& base, const Buffer& buf, const DenseArray& ref,
                          TensorMap& map) {
  Comparison c;
  for_each_valid_index(logical, base, [&](const std::vector<int64_t>& idx) {
    Value a = buf.get(map.offset(idx)), b = ref.get(idx);
    ++c.elements;
    if (!(a == b)) c.bitwise_equal = false;
    double x = a.as_double(), y = b.as_double();
    if (x == y) return;
    double d = std::fabs(x - y);
    if (std::isnan(d)) d = HUGE_VAL;
    c.max_abs_err = std::max(c.max_abs_err, d);
    c.max_rel_err = std::max(c.max_rel_err, d / std::max(std::fabs(y), 1e-300));
  });
  return c;
}

}  // namespace ragc
