#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ragc/error.hpp"
#include "ragc/expr.hpp"

namespace ragc {

/// Identifier naming a loop and/or a tensor dimension.
struct NamedDim {
  int id = 0;
  std::string label;

  friend bool operator==(const NamedDim&, const NamedDim&) = default;
};

/// Per-index element counts for a ragged dimension, indexed by an outer dimension.
struct LengthTable {
  std::string name;
  std::vector<int64_t> values;

  int64_t at(int64_t idx) const {
    if (idx < 0 || idx >= static_cast<int64_t>(values.size()))
      fail(ErrorKind::OutOfRangeAccess,
           "table " + name + " index " + std::to_string(idx) + " outside [0," +
               std::to_string(values.size()) + ")");
    return values[static_cast<size_t>(idx)];
  }
  int64_t max() const {
    return values.empty() ? 0 : *std::max_element(values.begin(), values.end());
  }
  int64_t sum() const {
    int64_t s = 0;
    for (auto v : values) s += v;
    return s;
  }

  friend bool operator==(const LengthTable&, const LengthTable&) = default;
};

/// Loop or storage extent: a constant, or a length-table lookup on one outer dimension.
struct Extent {
  bool varying = false;
  int64_t size = 0;   // Fixed
  std::string dep;    // Varying: outer dim label
  std::string table;  // Varying: length table name

  static Extent fixed(int64_t n) { return Extent{false, n, {}, {}}; }
  static Extent on(std::string dep, std::string table) {
    return Extent{true, 0, std::move(dep), std::move(table)};
  }

  friend bool operator==(const Extent&, const Extent&) = default;
};

struct TensorDecl {
  std::string name;
  std::vector<std::string> dims;
  std::vector<Extent> storage;
  ElemKind elem = ElemKind::Float64;
  std::vector<int64_t> pad;  // per-dim storage multiple, >= 1

  int rank() const { return static_cast<int>(dims.size()); }
  int dim_index(const std::string& label) const {
    auto it = std::find(dims.begin(), dims.end(), label);
    return it == dims.end() ? -1 : static_cast<int>(it - dims.begin());
  }

  friend bool operator==(const TensorDecl&, const TensorDecl&) = default;
};

enum class Combiner { Assign, Sum, Max };

inline const char* combiner_name(Combiner c) {
  switch (c) {
    case Combiner::Assign: return "assign";
    case Combiner::Sum: return "sum";
    case Combiner::Max: return "max";
  }
  return "?";
}

struct LoopSpec {
  std::string dim;
  Extent extent;
  bool reduction = false;

  friend bool operator==(const LoopSpec&, const LoopSpec&) = default;
};

/// A compute definition: loop nest, body evaluated at each point, combined into `output`.
/// Reduction loops are flagged; the body is folded over them with `combine`.
struct OperatorDef {
  std::string name;
  std::vector<LoopSpec> loops;
  Combiner combine = Combiner::Assign;
  Expr body;
  std::string output;

  int loop_index(const std::string& dim) const {
    for (size_t k = 0; k < loops.size(); ++k)
      if (loops[k].dim == dim) return static_cast<int>(k);
    return -1;
  }
  bool has_reduction() const {
    return std::any_of(loops.begin(), loops.end(), [](const LoopSpec& l) { return l.reduction; });
  }
};

inline bool operator==(const OperatorDef& a, const OperatorDef& b) {
  return a.name == b.name && a.loops == b.loops && a.combine == b.combine &&
         equal(a.body, b.body) && a.output == b.output;
}

enum class LoopKind { CLoop, VLoop };
enum class DimKind { CDim, VDim };

/// Declarations plus length tables. Immutable once built (values shared freely).
struct Program {
  std::vector<NamedDim> dims;
  std::map<std::string, LengthTable> tables;
  std::vector<TensorDecl> tensors;
  std::vector<OperatorDef> ops;

  const NamedDim* find_dim(const std::string& label) const {
    for (const auto& d : dims)
      if (d.label == label) return &d;
    return nullptr;
  }
  const TensorDecl* find_tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  TensorDecl* find_tensor(const std::string& name) {
    for (auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  const TensorDecl& tensor(const std::string& name) const {
    if (auto* t = find_tensor(name)) return *t;
    fail(ErrorKind::UnknownTensor, name);
  }
  const LengthTable& table(const std::string& name) const {
    auto it = tables.find(name);
    if (it == tables.end()) fail(ErrorKind::MissingTable, name);
    return it->second;
  }
  const OperatorDef* find_op(const std::string& name) const {
    for (const auto& o : ops)
      if (o.name == name) return &o;
    return nullptr;
  }

  NamedDim add_dim(const std::string& label) {
    if (find_dim(label)) fail(ErrorKind::InvalidDecl, "duplicate dim " + label);
    NamedDim d{static_cast<int>(dims.size()), label};
    dims.push_back(d);
    return d;
  }
  void add_table(LengthTable t) {
    for (auto v : t.values)
      if (v < 0) fail(ErrorKind::InvalidDecl, "negative length in table " + t.name);
    tables[t.name] = std::move(t);
  }

  friend bool operator==(const Program&, const Program&) = default;
};

namespace detail {

/// Largest index (exclusive) an extent can produce, used to size-check tables.
inline int64_t extent_max(const Program& p, const Extent& e) {
  if (!e.varying) return e.size;
  auto it = p.tables.find(e.table);
  return it == p.tables.end() ? 0 : it->second.max();
}

/// Common checks for an ordered list of (dim, extent) pairs: deps must be strictly outer.
inline void check_extents(const Program& p, const std::vector<std::string>& dims,
                          const std::vector<Extent>& exts, const std::string& what,
                          const std::vector<int64_t>* pads = nullptr) {
  for (size_t k = 0; k < dims.size(); ++k) {
    if (!p.find_dim(dims[k])) fail(ErrorKind::UnknownDim, what + ": " + dims[k]);
    const Extent& e = exts[k];
    if (!e.varying) {
      if (e.size < 0) fail(ErrorKind::InvalidDecl, what + ": negative extent");
      continue;
    }
    if (!p.find_dim(e.dep)) fail(ErrorKind::UnknownDim, what + ": extent depends on " + e.dep);
    auto pos = std::find(dims.begin(), dims.end(), e.dep);
    if (pos == dims.end())
      fail(ErrorKind::UnknownDim, what + ": dependence " + e.dep + " is not an outer dim");
    if (static_cast<size_t>(pos - dims.begin()) >= k)
      fail(ErrorKind::InnerDependence,
           what + ": extent of " + dims[k] + " depends on inner/same dim " + e.dep);
    auto tit = p.tables.find(e.table);
    if (tit == p.tables.end()) fail(ErrorKind::MissingTable, what + ": " + e.table);
    size_t dep_idx = static_cast<size_t>(pos - dims.begin());
    int64_t need = extent_max(p, exts[dep_idx]);
    if (pads) need = round_up(need, (*pads)[dep_idx]);
    if (static_cast<int64_t>(tit->second.values.size()) < need)
      fail(ErrorKind::MissingTable, what + ": table " + e.table + " shorter than extent of " +
                                        e.dep + " (" + std::to_string(need) + ")");
  }
}

}  // namespace detail

inline void validate_tensor(const Program& p, const TensorDecl& t) {
  if (t.storage.size() != t.dims.size() || t.pad.size() != t.dims.size())
    fail(ErrorKind::ArityMismatch, "tensor " + t.name + ": dims/storage/pad size mismatch");
  for (auto m : t.pad)
    if (m < 1) fail(ErrorKind::InvalidDecl, "tensor " + t.name + ": pad multiple < 1");
  std::set<std::string> seen(t.dims.begin(), t.dims.end());
  if (seen.size() != t.dims.size()) fail(ErrorKind::InvalidDecl, "tensor " + t.name + ": repeated dim");
  detail::check_extents(p, t.dims, t.storage, "tensor " + t.name, &t.pad);
}

inline TensorDecl& declare_tensor(Program& p, const std::string& name,
                                  std::vector<std::string> dims, std::vector<Extent> storage,
                                  ElemKind elem = ElemKind::Float64,
                                  std::vector<int64_t> pad = {}) {
  if (p.find_tensor(name)) fail(ErrorKind::InvalidDecl, "duplicate tensor " + name);
  if (pad.empty()) pad.assign(dims.size(), 1);
  TensorDecl t{name, std::move(dims), std::move(storage), elem, std::move(pad)};
  validate_tensor(p, t);
  p.tensors.push_back(std::move(t));
  return p.tensors.back();
}

/// Validates an operator against the program; throws on the first violation.
inline void validate_operator(const Program& p, const OperatorDef& op) {
  std::vector<std::string> dims;
  std::vector<Extent> exts;
  for (const auto& l : op.loops) {
    dims.push_back(l.dim);
    exts.push_back(l.extent);
  }
  std::set<std::string> seen(dims.begin(), dims.end());
  if (seen.size() != dims.size()) fail(ErrorKind::InvalidDecl, op.name + ": repeated loop dim");
  detail::check_extents(p, dims, exts, "operator " + op.name);

  const TensorDecl* out = p.find_tensor(op.output);
  if (!out) fail(ErrorKind::UnknownTensor, op.name + ": output " + op.output);
  std::vector<std::string> out_loops;
  for (const auto& l : op.loops)
    if (!l.reduction) out_loops.push_back(l.dim);
  if (out_loops != out->dims)
    fail(ErrorKind::InvalidDecl,
         op.name + ": output dims must equal the non-reduction loops in order");
  if (op.has_reduction() == (op.combine == Combiner::Assign))
    fail(ErrorKind::InvalidDecl, op.name + ": reduction loops require a sum/max combiner");

  if (!op.body.valid()) fail(ErrorKind::InvalidDecl, op.name + ": empty body");
  visit(op.body, [&](const Expr& e) {
    if (e->op == Op::Read) {
      const TensorDecl* t = p.find_tensor(e->name);
      if (!t) fail(ErrorKind::UnknownTensor, op.name + ": reads " + e->name);
      if (static_cast<int>(e->args.size()) != t->rank())
        fail(ErrorKind::ArityMismatch, op.name + ": " + e->name + " has rank " +
                                           std::to_string(t->rank()) + ", read with " +
                                           std::to_string(e->args.size()) + " indices");
      if (t->name == op.output)
        fail(ErrorKind::Unsupported, op.name + ": operator reads its own output");
    } else if (e->op == Op::Var) {
      if (!seen.count(e->name)) fail(ErrorKind::UnknownDim, op.name + ": unbound " + e->name);
    } else if (e->op == Op::Load || e->op == Op::Table) {
      fail(ErrorKind::InvalidDecl, op.name + ": body may not contain lowered accesses");
    }
  });
}

/// Validates and appends an operator. Returns the stored definition.
inline const OperatorDef& declare_operator(Program& p, OperatorDef op) {
  if (p.find_op(op.name)) fail(ErrorKind::InvalidDecl, "duplicate operator " + op.name);
  validate_operator(p, op);
  p.ops.push_back(std::move(op));
  return p.ops.back();
}

inline std::vector<LoopKind> classify_loops(const OperatorDef& op) {
  std::vector<LoopKind> out;
  for (const auto& l : op.loops) out.push_back(l.extent.varying ? LoopKind::VLoop : LoopKind::CLoop);
  return out;
}

inline std::vector<DimKind> classify_dims(const TensorDecl& t) {
  std::vector<DimKind> out;
  for (const auto& e : t.storage) out.push_back(e.varying ? DimKind::VDim : DimKind::CDim);
  return out;
}

/// Evaluates an extent given the values of already-bound outer dims.
inline int64_t eval_extent(const Program& p, const Extent& e,
                           const std::map<std::string, int64_t>& env) {
  if (!e.varying) return e.size;
  auto it = env.find(e.dep);
  if (it == env.end()) fail(ErrorKind::UnboundVariable, e.dep);
  return p.table(e.table).at(it->second);
}

/// Tensors read by an operator body, in first-appearance order.
inline std::vector<std::string> tensors_read(const OperatorDef& op) {
  std::vector<std::string> out;
  visit(op.body, [&](const Expr& e) {
    if (e->op == Op::Read && std::find(out.begin(), out.end(), e->name) == out.end())
      out.push_back(e->name);
  });
  return out;
}

}  // namespace ragc
