#pragma once

// Ragged storage: dimension graphs, prefix-offset (aux) arrays and the O(rank)
// offset lowering for densely packed ragged layouts.
//
// Dimensions are numbered 0..n-1 here (outermost first). An edge d1 -> d2 means
// the slice size of d2 is looked up from a length table at the index along d1.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ragc/core_ir.hpp"

namespace ragc {

class DimGraph {
 public:
  DimGraph() = default;
  DimGraph(int n, std::set<std::pair<int, int>> edges) : n_(n), edges_(std::move(edges)) {
    out_.assign(static_cast<size_t>(n), {});
    in_.assign(static_cast<size_t>(n), {});
    for (auto [a, b] : edges_) {
      if (a < 0 || b < 0 || a >= n || b >= n)
        fail(ErrorKind::InvalidDecl, "dgraph edge out of range");
      // Edges always point outer -> inner, which also rules out cycles.
      if (a >= b) fail(ErrorKind::CyclicDependence, "dgraph edge must point outer to inner");
      out_[static_cast<size_t>(a)].insert(b);
      in_[static_cast<size_t>(b)].insert(a);
    }
    closure_.assign(static_cast<size_t>(n), {});
    for (int d = n - 1; d >= 0; --d) {
      auto& c = closure_[static_cast<size_t>(d)];
      for (int x : out_[static_cast<size_t>(d)]) {
        c.insert(x);
        const auto& cx = closure_[static_cast<size_t>(x)];
        c.insert(cx.begin(), cx.end());
      }
    }
  }

  int rank() const { return n_; }
  const std::set<std::pair<int, int>>& edges() const { return edges_; }
  const std::set<int>& out(int d) const { return out_[static_cast<size_t>(d)]; }
  const std::set<int>& in(int d) const { return in_[static_cast<size_t>(d)]; }
  const std::set<int>& out_closure(int d) const { return closure_[static_cast<size_t>(d)]; }

  /// Direct successors not reachable through another successor.
  std::set<int> out_exclusive(int d) const {
    std::set<int> r = out(d);
    for (int x : out(d))
      for (int y : out_closure(x)) r.erase(y);
    return r;
  }

  int parent(int d) const { return in(d).empty() ? -1 : *in(d).begin(); }

 private:
  int n_ = 0;
  std::set<std::pair<int, int>> edges_;
  std::vector<std::set<int>> out_, in_, closure_;
};

inline DimGraph build_dgraph(const TensorDecl& t) {
  std::set<std::pair<int, int>> edges;
  for (int d = 0; d < t.rank(); ++d) {
    const Extent& e = t.storage[static_cast<size_t>(d)];
    if (!e.varying) continue;
    int p = t.dim_index(e.dep);
    if (p < 0) fail(ErrorKind::UnknownDim, t.name + ": " + e.dep);
    edges.insert({p, d});
  }
  return DimGraph(t.rank(), std::move(edges));
}

/// S(n-1) = {n-1};  S(d) = {d} ∪ (S(d+1) − O*(d)).
inline std::vector<std::set<int>> s_sets(const DimGraph& g) {
  int n = g.rank();
  std::vector<std::set<int>> s(static_cast<size_t>(n));
  for (int d = n - 1; d >= 0; --d) {
    auto& cur = s[static_cast<size_t>(d)];
    cur.insert(d);
    if (d + 1 < n)
      for (int x : s[static_cast<size_t>(d + 1)])
        if (!g.out_closure(d).count(x)) cur.insert(x);
  }
  return s;
}

/// Prefix-offset array for one dimension: entries[v] is the flat size of all
/// sub-blocks owned by indices < v along `dim` (exclusive prefix sums).
struct AuxArray {
  int dim = 0;
  std::string name;
  std::vector<int64_t> entries;
};

/// Everything needed to address one tensor: dgraph, per-dim slice sizes, aux arrays.
class Layout {
 public:
  Layout(const TensorDecl& t, const Program& p) : t_(t), g_(build_dgraph(t)) {
    validate_tensor(p, t);
    int n = t.rank();
    tables_.resize(static_cast<size_t>(n), nullptr);
    for (int d = 0; d < n; ++d) {
      const Extent& e = t.storage[static_cast<size_t>(d)];
      if (e.varying) tables_[static_cast<size_t>(d)] = &p.table(e.table);
    }
    domain_.assign(static_cast<size_t>(n), 0);
    for (int d = 0; d < n; ++d) {
      int par = g_.parent(d);
      if (par < 0) {
        domain_[static_cast<size_t>(d)] = slice(d, 0);
      } else {
        int64_t m = 0;
        for (int64_t v = 0; v < domain_[static_cast<size_t>(par)]; ++v) m = std::max(m, slice(d, v));
        domain_[static_cast<size_t>(d)] = m;
      }
    }
    aux_.resize(static_cast<size_t>(n));
    names_.resize(static_cast<size_t>(n));
    for (int d = n - 1; d >= 0; --d) {
      if (g_.out(d).empty()) continue;
      names_[static_cast<size_t>(d)] = "A(" + signature(d) + ")";
      auto& a = aux_[static_cast<size_t>(d)];
      a.dim = d;
      a.name = names_[static_cast<size_t>(d)];
      int64_t dom = domain_[static_cast<size_t>(d)];
      a.entries.assign(static_cast<size_t>(dom + 1), 0);
      for (int64_t v = 0; v < dom; ++v) {
        int64_t block = 1;
        for (int c : g_.out_exclusive(d)) block = checked_mul(block, child_size(c, v));
        a.entries[static_cast<size_t>(v + 1)] = checked_add(a.entries[static_cast<size_t>(v)], block);
      }
    }
  }

  const TensorDecl& tensor() const { return t_; }
  const DimGraph& graph() const { return g_; }

  /// Padded slice size of dim d given the index along its parent (ignored for cdims).
  int64_t slice(int d, int64_t parent_index) const {
    const Extent& e = t_.storage[static_cast<size_t>(d)];
    int64_t pad = t_.pad[static_cast<size_t>(d)];
    if (!e.varying) return round_up(e.size, pad);
    return round_up(tables_[static_cast<size_t>(d)]->at(parent_index), pad);
  }

  /// Number of distinct indices dim d can take (max slice for vdims).
  int64_t domain(int d) const { return domain_[static_cast<size_t>(d)]; }

  bool has_aux(int d) const { return !g_.out(d).empty(); }
  const AuxArray& aux(int d) const { return aux_[static_cast<size_t>(d)]; }
  const std::string& aux_name(int d) const { return names_[static_cast<size_t>(d)]; }

  std::map<int, AuxArray> aux_arrays() const {
    std::map<int, AuxArray> m;
    for (int d = 0; d < t_.rank(); ++d)
      if (has_aux(d)) m[d] = aux(d);
    return m;
  }

  int64_t total_size() const {
    int64_t total = 1;
    for (int d = 0; d < t_.rank(); ++d) {
      if (g_.parent(d) >= 0) continue;
      total = checked_mul(total, has_aux(d) ? aux(d).entries.back() : domain(d));
    }
    return total;
  }

  /// Structural signature of the sub-block governed by dim d, used to name and
  /// deduplicate aux arrays across tensors.
  std::string signature(int d) const {
    std::ostringstream os;
    os << domain(d) << ";";
    bool first = true;
    for (int c : g_.out_exclusive(d)) {
      if (!first) os << "*";
      first = false;
      const Extent& e = t_.storage[static_cast<size_t>(c)];
      os << e.table << ":" << t_.pad[static_cast<size_t>(c)];
      if (has_aux(c)) os << ">" << signature(c);
    }
    return os.str();
  }

 private:
  static int64_t checked_mul(int64_t a, int64_t b) {
    int64_t r = 0;
    if (__builtin_mul_overflow(a, b, &r)) fail(ErrorKind::InvalidDecl, "aux array overflow");
    return r;
  }
  static int64_t checked_add(int64_t a, int64_t b) {
    int64_t r = 0;
    if (__builtin_add_overflow(a, b, &r)) fail(ErrorKind::InvalidDecl, "aux array overflow");
    return r;
  }

  // Flat size contributed by child c (and everything below it) when its parent index is v.
  int64_t child_size(int c, int64_t v) const {
    int64_t s = slice(c, v);
    return has_aux(c) ? aux(c).entries[static_cast<size_t>(s)] : s;
  }

  TensorDecl t_;
  DimGraph g_;
  std::vector<const LengthTable*> tables_;
  std::vector<int64_t> domain_;
  std::vector<AuxArray> aux_;
  std::vector<std::string> names_;
};

inline std::map<int, AuxArray> build_aux_arrays(const TensorDecl& t, const Program& p) {
  return Layout(t, p).aux_arrays();
}

inline int64_t total_size(const TensorDecl& t, const Program& p) { return Layout(t, p).total_size(); }

/// One multiplicative factor of an offset term.
struct OffsetFactor {
  enum Kind { Index, Const, Length, Aux } kind = Const;
  Expr index;          // Index: the index expression; Length/Aux: the lookup index
  int64_t value = 1;   // Const: the size; Length: the pad multiple
  std::string name;    // Length: length table; Aux: aux array name

  Expr to_expr() const {
    switch (kind) {
      case Index: return index;
      case Const: return ex::cst(value);
      case Length: return ex::ceil_to(ex::table(name, index), value);
      case Aux: return ex::table(name, index);
    }
    return {};
  }
};

/// Flat offset as a sum of products.
struct OffsetExpr {
  std::vector<std::vector<OffsetFactor>> terms;

  Expr to_expr() const {
    Expr sum = ex::cst(0);
    for (const auto& term : terms) {
      Expr prod = ex::cst(1);
      bool zero = false;
      for (const auto& f : term) {
        Expr fe = f.to_expr();
        if (ex::is_int_const(fe, 0)) zero = true;
        prod = ex::mul(prod, fe);
      }
      if (!zero) sum = ex::add(sum, prod);
    }
    return sum;
  }

  std::set<std::string> aux_names() const {
    std::set<std::string> out;
    for (const auto& term : terms)
      for (const auto& f : term)
        if (f.kind == OffsetFactor::Aux) out.insert(f.name);
    return out;
  }
};

/// Lowers T[idx...] to a flat offset expression (iterate dims inner to outer,
/// accumulating one term per dim).
inline OffsetExpr lower_access(const Layout& L, const std::vector<Expr>& idx) {
  const TensorDecl& t = L.tensor();
  const DimGraph& g = L.graph();
  int n = t.rank();
  if (static_cast<int>(idx.size()) != n)
    fail(ErrorKind::ArityMismatch, t.name + ": expected " + std::to_string(n) + " indices");
  auto S = s_sets(g);
  std::vector<Expr> relaxed = idx;

  auto size_factor = [&](int j) {
    OffsetFactor f;
    const Extent& e = t.storage[static_cast<size_t>(j)];
    if (!e.varying) {
      f.kind = OffsetFactor::Const;
      f.value = round_up(e.size, t.pad[static_cast<size_t>(j)]);
    } else {
      f.kind = OffsetFactor::Length;
      f.name = e.table;
      f.value = t.pad[static_cast<size_t>(j)];
      f.index = relaxed[static_cast<size_t>(g.parent(j))];
    }
    return f;
  };
  auto aux_factor = [&](int j) {
    OffsetFactor f;
    f.kind = OffsetFactor::Aux;
    f.name = L.aux_name(j);
    f.index = relaxed[static_cast<size_t>(j)];
    return f;
  };

  OffsetExpr out;
  for (int i = n - 1; i >= 0; --i) {
    std::vector<OffsetFactor> term;
    if (L.has_aux(i)) {
      term.push_back(aux_factor(i));
    } else {
      OffsetFactor f;
      f.kind = OffsetFactor::Index;
      f.index = relaxed[static_cast<size_t>(i)];
      term.push_back(f);
    }
    for (int j : S[static_cast<size_t>(i)]) {
      if (j == i) continue;
      term.push_back(L.has_aux(j) ? aux_factor(j) : size_factor(j));
    }
    relaxed[static_cast<size_t>(i)] = size_factor(i).to_expr();
    out.terms.push_back(std::move(term));
  }
  std::reverse(out.terms.begin(), out.terms.end());
  return out;
}

inline OffsetExpr lower_access(const TensorDecl& t, const Program& p, const std::vector<Expr>& idx) {
  return lower_access(Layout(t, p), idx);
}

/// Evaluates an offset at concrete indices, resolving length tables from the
/// program and aux arrays from the layout.
inline int64_t evaluate_offset(const OffsetExpr& off, const Layout& L, const Program& p) {
  std::map<std::string, const std::vector<int64_t>*> aux;
  for (int d = 0; d < L.tensor().rank(); ++d)
    if (L.has_aux(d)) aux[L.aux_name(d)] = &L.aux(d).entries;
  EvalEnv env;
  env.table = [&](const std::string& name, int64_t i) -> int64_t {
    auto it = aux.find(name);
    if (it != aux.end()) {
      if (i < 0 || i >= static_cast<int64_t>(it->second->size()))
        fail(ErrorKind::OutOfRangeAccess, name + "[" + std::to_string(i) + "]");
      return (*it->second)[static_cast<size_t>(i)];
    }
    return p.table(name).at(i);
  };
  return eval(off.to_expr(), env).as_int();
}

inline int64_t offset_of(const Layout& L, const Program& p, const std::vector<int64_t>& index) {
  std::vector<Expr> idx;
  for (auto v : index) idx.push_back(ex::cst(v));
  return evaluate_offset(lower_access(L, idx), L, p);
}

struct AuxCounts {
  int64_t prefix = 0;
  int64_t sparse_tree = 0;
};

/// Aux-data entry counts: prefix arrays vs one entry per vdim slice
/// (a CSF-style tree that assumes every slice depends on all outer dims).
inline AuxCounts aux_counts(const TensorDecl& t, const Program& p) {
  Layout L(t, p);
  AuxCounts c;
  for (int d = 0; d < t.rank(); ++d)
    if (L.has_aux(d)) c.prefix += static_cast<int64_t>(L.aux(d).entries.size());
  // Count valid index prefixes by walking the (padded) index tree.
  std::vector<int64_t> prefixes(static_cast<size_t>(t.rank()) + 1, 0);
  std::vector<int64_t> idx(static_cast<size_t>(t.rank()), 0);
  std::function<void(int)> walk = [&](int d) {
    prefixes[static_cast<size_t>(d)]++;
    if (d == t.rank()) return;
    int par = L.graph().parent(d);
    bool any_vdim_below = false;
    for (int k = d; k < t.rank(); ++k) any_vdim_below |= t.storage[static_cast<size_t>(k)].varying;
    if (!any_vdim_below) return;
    int64_t n = L.slice(d, par < 0 ? 0 : idx[static_cast<size_t>(par)]);
    for (int64_t v = 0; v < n; ++v) {
      idx[static_cast<size_t>(d)] = v;
      walk(d + 1);
    }
  };
  walk(0);
  for (int d = 0; d < t.rank(); ++d)
    if (t.storage[static_cast<size_t>(d)].varying) c.sparse_tree += prefixes[static_cast<size_t>(d)];
  return c;
}

/// Binary blob: per array, little-endian int64 dim id, int64 length, then entries.
inline std::string serialize_aux(const std::map<int, AuxArray>& arrays) {
  std::string out;
  auto put = [&](int64_t v) {
    auto u = static_cast<uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  };
  for (const auto& [d, a] : arrays) {
    put(d);
    put(static_cast<int64_t>(a.entries.size()));
    for (auto v : a.entries) put(v);
  }
  return out;
}

inline std::map<int, std::vector<int64_t>> deserialize_aux(const std::string& blob) {
  std::map<int, std::vector<int64_t>> out;
  size_t pos = 0;
  auto get = [&]() -> int64_t {
    if (pos + 8 > blob.size()) fail(ErrorKind::ParseError, "truncated aux blob");
    uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<uint64_t>(static_cast<unsigned char>(blob[pos + b])) << (8 * b);
    pos += 8;
    return static_cast<int64_t>(u);
  };
  while (pos < blob.size()) {
    auto d = static_cast<int>(get());
    int64_t n = get();
    if (n < 0) fail(ErrorKind::ParseError, "negative aux length");
    auto& v = out[d];
    for (int64_t k = 0; k < n; ++k) v.push_back(get());
  }
  return out;
}

}  // namespace ragc
