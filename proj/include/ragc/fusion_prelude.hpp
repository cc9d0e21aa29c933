#pragma once

// Vloop fusion maps, range translation, the uninterpreted-function rewrite
// facts, and the prelude that materializes every derived table a kernel reads.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ragc/core_ir.hpp"
#include "ragc/expr.hpp"
#include "ragc/ragged_storage.hpp"

namespace ragc {

/// Identifies one fused (outer, inner) iteration space: outer extent M, inner
/// extent ceil_to(table[o], pad), fused extent rounded up to `bulk`.
struct FusionKey {
  int64_t M = 0;
  std::string table;
  int64_t pad = 1;
  int64_t bulk = 1;

  std::string base(const Program& p) const {
    std::string b = table;
    if (pad > 1) b += "_p" + std::to_string(pad);
    if (bulk > 1) b += "_b" + std::to_string(bulk);
    const auto* t = p.tables.count(table) ? &p.tables.at(table) : nullptr;
    if (!t || static_cast<int64_t>(t->values.size()) != M) b += "_M" + std::to_string(M);
    return b;
  }
  std::string fo_name(const Program& p) const { return "f_fo_" + base(p); }
  std::string fi_name(const Program& p) const { return "f_fi_" + base(p); }
  std::string oif_name(const Program& p) const { return "f_oif_" + base(p); }

  auto operator<=>(const FusionKey&) const = default;
};

struct FusionMaps {
  int64_t M = 0;
  int64_t F = 0;
  std::vector<int64_t> fo, fi, oif_base;

  int64_t valid() const { return oif_base.empty() ? 0 : oif_base.back(); }
  int64_t f_oif(int64_t o, int64_t i) const { return oif_base[static_cast<size_t>(o)] + i; }
  int64_t inner(int64_t o) const {
    return oif_base[static_cast<size_t>(o + 1)] - oif_base[static_cast<size_t>(o)];
  }
};

namespace detail {
inline std::vector<int64_t> inner_sizes(int64_t M, const LengthTable& s, int64_t pad) {
  if (M < 0 || M > static_cast<int64_t>(s.values.size()))
    fail(ErrorKind::MissingTable, s.name + " shorter than fused outer extent");
  std::vector<int64_t> out;
  for (int64_t o = 0; o < M; ++o) out.push_back(round_up(s.values[static_cast<size_t>(o)], pad));
  return out;
}
}  // namespace detail

inline int64_t fused_extent(int64_t M, const LengthTable& s, int64_t bulk_pad, int64_t loop_pad = 1) {
  int64_t sum = 0;
  for (auto v : detail::inner_sizes(M, s, loop_pad)) sum += v;
  return round_up(sum, bulk_pad);
}

/// Bulk-padding tail entries map to the sentinel outer index M.
inline FusionMaps build_fusion_maps(int64_t M, const LengthTable& s, int64_t bulk_pad, int64_t loop_pad = 1) {
  FusionMaps m;
  m.M = M;
  m.oif_base.push_back(0);
  for (auto v : detail::inner_sizes(M, s, loop_pad)) {
    for (int64_t i = 0; i < v; ++i) {
      m.fo.push_back(static_cast<int64_t>(m.oif_base.size()) - 1);
      m.fi.push_back(i);
    }
    m.oif_base.push_back(m.oif_base.back() + v);
  }
  m.F = round_up(m.valid(), bulk_pad);
  for (int64_t f = m.valid(); f < m.F; ++f) {
    m.fo.push_back(M);
    m.fi.push_back(f - m.valid());
  }
  return m;
}

inline FusionMaps build_fusion_maps(const FusionKey& k, const Program& p) {
  return build_fusion_maps(k.M, p.table(k.table), k.bulk, k.pad);
}

/// Inclusive integer range.
struct Range {
  int64_t lo = 0;
  int64_t hi = -1;

  bool empty() const { return hi < lo; }
  bool contains(int64_t v) const { return lo <= v && v <= hi; }
  static Range none() { return {0, -1}; }
  bool operator==(const Range&) const = default;
};

/// (o, i) box to fused range: f_oif at the two corners.
inline Range range_oi_to_f(Range o, Range i, const FusionMaps& m) {
  if (o.empty() || i.empty()) return Range::none();
  return {m.f_oif(o.lo, i.lo), m.f_oif(o.hi, i.hi)};
}

/// Fused range to outer range: f_fo at the endpoints.
inline Range range_f_to_o(Range f, const FusionMaps& m) {
  if (f.empty()) return Range::none();
  return {m.fo[static_cast<size_t>(f.lo)], m.fo[static_cast<size_t>(f.hi)]};
}

/// Fused range to inner range. With a single outer index the endpoints map
/// directly; otherwise the whole inner extent is possible, taken here as the
/// largest inner extent (or tail offset) among the spanned outer indices.
inline Range range_f_to_i(Range f, const FusionMaps& m) {
  if (f.empty()) return Range::none();
  int64_t ol = m.fo[static_cast<size_t>(f.lo)], oh = m.fo[static_cast<size_t>(f.hi)];
  if (ol == oh) return {m.fi[static_cast<size_t>(f.lo)], m.fi[static_cast<size_t>(f.hi)]};
  int64_t hi = -1;
  for (int64_t o = ol; o <= oh && o < m.M; ++o) hi = std::max(hi, m.inner(o) - 1);
  if (oh == m.M) hi = std::max(hi, m.fi[static_cast<size_t>(f.hi)]);
  return {0, hi};
}

/// Rewrite rules over f_fo / f_fi / f_oif table reads that share a base name.
struct UfFacts {
  /// f_fo(f_oif(o, i)) -> o, f_fi(f_oif(o, i)) -> i
  static Expr fo_fi_of_oif(const Expr& e) {
    if (e->op != Op::Table) return {};
    bool is_fo = e->name.rfind("f_fo_", 0) == 0, is_fi = e->name.rfind("f_fi_", 0) == 0;
    if (!is_fo && !is_fi) return {};
    std::string oif = "f_oif_" + e->name.substr(5);
    std::vector<Expr> terms;
    flatten_sum(e->args[0], terms);
    for (size_t k = 0; k < terms.size(); ++k) {
      if (terms[k]->op != Op::Table || terms[k]->name != oif) continue;
      Expr rest = ex::cst(0);
      for (size_t j = 0; j < terms.size(); ++j)
        if (j != k) rest = ex::add(rest, terms[j]);
      return is_fo ? terms[k]->args[0] : rest;
    }
    return {};
  }

  /// f_oif(f_fo(f), f_fi(f)) -> f, inside any sum.
  static Expr oif_of_fo_fi(const Expr& e) {
    if (e->op != Op::Add) return {};
    std::vector<Expr> terms;
    flatten_sum(e, terms);
    for (size_t a = 0; a < terms.size(); ++a) {
      const Expr& t = terms[a];
      if (t->op != Op::Table || t->name.rfind("f_oif_", 0) != 0) continue;
      const Expr& inner = t->args[0];
      std::string base = t->name.substr(6);
      if (inner->op != Op::Table || inner->name != "f_fo_" + base) continue;
      for (size_t b = 0; b < terms.size(); ++b) {
        const Expr& u = terms[b];
        if (b == a || u->op != Op::Table || u->name != "f_fi_" + base) continue;
        if (!equal(u->args[0], inner->args[0])) continue;
        Expr out = inner->args[0];
        for (size_t j = 0; j < terms.size(); ++j)
          if (j != a && j != b) out = ex::add(out, terms[j]);
        return out;
      }
    }
    return {};
  }

  /// Applies all rules bottom-up until nothing changes.
  static Expr apply(const Expr& e) {
    Expr cur = e;
    for (int round = 0; round < 16; ++round) {
      Expr next = rewrite(cur, [](const Expr& n) -> Expr {
        if (Expr r = fo_fi_of_oif(n); r.valid()) return r;
        if (Expr r = oif_of_fo_fi(n); r.valid()) return r;
        return {};
      });
      if (equal(next, cur)) return next;
      cur = next;
    }
    return cur;
  }

  // Monotonicity facts available to the simplifier.
  static constexpr bool fo_nondecreasing = true;
  static constexpr bool oif_nondecreasing = true;
  static constexpr bool fi_below_inner_extent = true;

 private:
  static void flatten_sum(const Expr& e, std::vector<Expr>& out) {
    if (e->op == Op::Add) {
      flatten_sum(e->args[0], out);
      flatten_sum(e->args[1], out);
    } else if (!ex::is_int_const(e, 0)) {
      out.push_back(e);
    }
  }
};

inline UfFacts uf_simplify_facts() { return {}; }

/// How to build a derived table referenced by lowered code.
struct TableSpec {
  enum Kind { Aux, FusionFo, FusionFi, FusionOif } kind = Aux;
  TensorDecl tensor;  // Aux
  int dim = 0;        // Aux
  FusionKey fusion;   // Fusion*

  std::string structure(const Program& p) const {
    if (kind == Aux) return Layout(tensor, p).aux_name(dim);
    return "fusion(" + fusion.base(p) + ")";
  }
};

using TableCatalog = std::map<std::string, TableSpec>;

struct PreludeStep {
  std::string structure;
  enum Kind { AuxArray, FusionMaps } kind = AuxArray;
  std::vector<std::string> outputs;
  int64_t entries = 0;
};

struct PreludeProgram {
  std::vector<PreludeStep> steps;
  int64_t op_count = 0;
  int64_t bytes = 0;
  int64_t bytes_without_dedup = 0;
  std::map<std::string, std::vector<int64_t>> tables;

  const std::vector<int64_t>* find(const std::string& name) const {
    auto it = tables.find(name);
    return it == tables.end() ? nullptr : &it->second;
  }
};

/// Builds one step per distinct structure referenced by any operator.
/// `per_op` lists, for each operator, the derived table names its kernel reads.
inline PreludeProgram build_prelude(const Program& p, const TableCatalog& catalog,
                                    const std::vector<std::set<std::string>>& per_op) {
  PreludeProgram out;
  std::map<std::string, size_t> step_of;
  std::map<std::string, int64_t> structure_entries;
  for (const auto& names : per_op) {
    std::set<std::string> structures;
    for (const auto& name : names) {
      if (p.tables.count(name)) continue;
      auto it = catalog.find(name);
      if (it == catalog.end()) fail(ErrorKind::MissingPrelude, "no builder for table " + name);
      const TableSpec& spec = it->second;
      std::string st = spec.structure(p);
      structures.insert(st);
      if (step_of.count(st)) continue;
      PreludeStep step;
      step.structure = st;
      if (spec.kind == TableSpec::Aux) {
        Layout L(spec.tensor, p);
        step.kind = PreludeStep::AuxArray;
        step.outputs = {name};
        out.tables[name] = L.aux(spec.dim).entries;
        step.entries = static_cast<int64_t>(L.aux(spec.dim).entries.size());
      } else {
        auto m = build_fusion_maps(spec.fusion, p);
        step.kind = PreludeStep::FusionMaps;
        step.outputs = {spec.fusion.fo_name(p), spec.fusion.fi_name(p), spec.fusion.oif_name(p)};
        out.tables[step.outputs[0]] = m.fo;
        out.tables[step.outputs[1]] = m.fi;
        out.tables[step.outputs[2]] = m.oif_base;
        step.entries = static_cast<int64_t>(m.fo.size() + m.fi.size() + m.oif_base.size());
      }
      step_of[st] = out.steps.size();
      structure_entries[st] = step.entries;
      out.steps.push_back(std::move(step));
    }
    for (const auto& st : structures) out.bytes_without_dedup += 8 * structure_entries[st];
  }
  for (const auto& s : out.steps) out.op_count += s.entries;
  out.bytes = 8 * out.op_count;
  return out;
}

}  // namespace ragc
