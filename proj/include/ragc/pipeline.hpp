#pragma once

// Whole-program driver: schedule, lower, build the prelude, execute, check.

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ragc/core_ir.hpp"
#include "ragc/executor.hpp"
#include "ragc/fusion_prelude.hpp"
#include "ragc/lowering.hpp"
#include "ragc/schedule.hpp"

namespace ragc {

struct CompileOptions {
  bool optimize = true;  // simplify, elide guards, hoist loads
};

struct CompiledProgram {
  Program base;     // as declared
  Program storage;  // scheduled storage layouts
  std::vector<DimFusion> dim_fusions;
  std::vector<Kernel> kernels;
  std::vector<std::vector<LoopNest>> nests;  // per kernel, one per piece
  PreludeProgram prelude;
};

inline CompiledProgram compile_program(const Program& p, const ScheduleScript& script, const CompileOptions& opt = {}) {
  CompiledProgram c;
  c.base = p;
  c.kernels = schedule_program(p, script);
  c.storage = c.kernels.empty() ? p : c.kernels[0].pieces[0].prog;
  if (!c.kernels.empty()) c.dim_fusions = c.kernels[0].pieces[0].dim_fusions;

  TableCatalog catalog;
  std::vector<std::set<std::string>> per_op;
  for (const auto& k : c.kernels) {
    std::set<std::string> used;
    for (const auto& s : k.pieces) {
      LoopNest n = lower_unchecked(s);
      for (const auto& t : derived_tables(n, s.prog)) used.insert(t);
      for (const auto& [name, spec] : n.catalog) catalog.insert({name, spec});
    }
    per_op.push_back(std::move(used));
  }
  c.prelude = build_prelude(c.storage, catalog, per_op);
  for (const auto& k : c.kernels) {
    std::vector<LoopNest> nests;
    for (const auto& s : k.pieces) {
      LoopNest n = lower(s, c.prelude);
      nests.push_back(opt.optimize ? optimize(std::move(n)) : std::move(n));
    }
    c.nests.push_back(std::move(nests));
  }
  return c;
}

inline CompiledProgram compile_program(const Program& p, const std::string& script, const CompileOptions& opt = {}) {
  return compile_program(p, parse_schedule(script, p), opt);
}

using TensorValues = std::map<std::string, DenseArray>;

/// Tensors no operator writes.
inline std::vector<std::string> input_tensors(const Program& p) {
  std::set<std::string> written;
  for (const auto& op : p.ops) written.insert(op.output);
  std::vector<std::string> out;
  for (const auto& t : p.tensors)
    if (!written.count(t.name)) out.push_back(t.name);
  return out;
}

/// Random values on the valid region of every input tensor; zero elsewhere.
/// Integers are drawn from [-8, 8], floats from [-1, 1).
inline TensorValues random_inputs(const Program& p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> di(-8, 8);
  std::uniform_real_distribution<double> df(-1.0, 1.0);
  TensorValues out;
  for (const auto& name : input_tensors(p)) {
    const TensorDecl& t = p.tensor(name);
    DenseArray a(t.elem, dense_shape(t, p));
    for_each_valid_index(t, p, [&](const std::vector<int64_t>& idx) {
      a.set(idx, t.elem == ElemKind::Int64 ? Value::of_int(di(rng)) : Value::of_float(df(rng)));
    });
    out[name] = std::move(a);
  }
  return out;
}

struct Execution {
  Buffers buffers;
  RunStats stats;  // makespans add up over kernels
  std::vector<RunStats> per_kernel;
};

inline Execution execute(const CompiledProgram& c, const TensorValues& inputs, int workers = 1,
                         const RemapPolicy& policy = {}) {
  Execution ex;
  ex.buffers = allocate_buffers(c.storage);
  for (const auto& [name, arr] : inputs) {
    auto it = ex.buffers.find(name);
    if (it == ex.buffers.end()) fail(ErrorKind::UnknownTensor, name);
    TensorMap map(name, c.storage, c.dim_fusions);
    pack(c.base.tensor(name), c.base, arr, it->second, map);
  }
  ex.stats.worker_work.assign(static_cast<size_t>(workers), 0);
  auto add = [&](const RunStats& st) {
    ex.per_kernel.push_back(st);
    ex.stats.makespan += st.makespan;
    ex.stats.table_reads += st.table_reads;
    ex.stats.guard_evals += st.guard_evals;
    ex.stats.flops += st.flops;
    for (size_t w = 0; w < st.worker_work.size(); ++w) ex.stats.worker_work[w] += st.worker_work[w];
    for (const auto& b : st.block_work) ex.stats.block_work.push_back(b);
  };
  for (size_t k = 0; k < c.kernels.size(); ++k) {
    const auto& nests = c.nests[k];
    // A remap primitive in the schedule applies unless the caller asks for another policy.
    const RemapPolicy& pol = policy.kind == RemapPolicy::Identity ? c.kernels[k].pieces[0].remap : policy;
    if (c.kernels[k].hfused) {
      add(run_hfused(nests, ex.buffers, c.storage, c.prelude, workers, pol));
    } else {
      for (const auto& n : nests) add(run_hfused({n}, ex.buffers, c.storage, c.prelude, workers, pol));
    }
  }
  return ex;
}

/// Compares every operator output with the dense oracle on its valid region.
inline Comparison check_against_oracle(const CompiledProgram& c, const TensorValues& inputs, const Buffers& buffers) {
  TensorValues ref = dense_oracle(c.base, inputs);
  Comparison total;
  std::set<std::string> outputs;
  for (const auto& op : c.base.ops) outputs.insert(op.output);
  for (const auto& name : outputs) {
    TensorMap map(name, c.storage, c.dim_fusions);
    Comparison one = compare(c.base.tensor(name), c.base, buffers.at(name), ref.at(name), map);
    total.max_abs_err = std::max(total.max_abs_err, one.max_abs_err);
    total.max_rel_err = std::max(total.max_rel_err, one.max_rel_err);
    total.bitwise_equal = total.bitwise_equal && one.bitwise_equal;
    total.elements += one.elements;
  }
  return total;
}

/// Within tolerance: exact for integers, relative 1e-12 for floats.
inline bool within_tolerance(const Comparison& c, ElemKind elem) {
  return elem == ElemKind::Int64 ? c.bitwise_equal : c.max_rel_err <= 1e-12;
}

/// Reads the valid region of a tensor back into a flat row-major vector.
inline std::vector<Value> logical_values(const CompiledProgram& c, const Buffers& buffers, const std::string& name) {
  TensorMap map(name, c.storage, c.dim_fusions);
  std::vector<Value> out;
  for_each_valid_index(c.base.tensor(name), c.base,
                       [&](const std::vector<int64_t>& idx) { out.push_back(buffers.at(name).get(map.offset(idx))); });
  return out;
}

}  // namespace ragc
