#pragma once

// Subcommands of the ragc tool. Each takes parsed options and output streams
// and returns the process exit code, so tests can call them directly.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ragc/ops_library.hpp"
#include "ragc/parser.hpp"
#include "ragc/pipeline.hpp"

namespace ragc::cli {

struct Options {
  // program selection
  std::string op;                    // recipe name or path to an op file
  std::vector<std::string> lens;     // "path" or "table=path"
  std::string lens2;                 // second length file (vgemm)
  std::string schedule;              // schedule file path
  std::string variant;               // recipe schedule variant name
  std::vector<std::string> inputs;   // "tensor=path"
  int64_t heads = 1, head_dim = 1, k = 4, n = 4, tile = 64;
  std::string elem;                  // "int" or "float"; empty picks the recipe default

  // accounting and execution
  int64_t pad_loop = 1, pad_dim = 1, bulk_pad = 1;
  int workers = 1;
  std::string remap = "identity";
  bool check = false;
  uint64_t seed = 0;
  std::string emit = "ir";
  std::string out;

  // gen-lengths
  std::string dist = "uniform";
  int64_t lo = 1, hi = 64, multiple = 128, value = 0, count = 0;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

inline int exit_code(const Error& e) { return is_runtime_error(e.kind()) ? kExitRuntime : kExitInvalid; }

/// Runs fn, reporting library errors on `err` as "error: <Kind>: message".
inline int guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::BadParams, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::BadParams, "cannot write '" + path + "'");
  out << text;
}

// ---- length files ----------------------------------------------------------

inline std::vector<int64_t> parse_lengths(const std::string& text) {
  std::vector<int64_t> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ws(line);
    std::string tok;
    while (ws >> tok) {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size() || v < 0)
        fail(ErrorKind::ParseError, "lengths line " + std::to_string(lineno) + ": bad length '" + tok + "'");
      out.push_back(v);
    }
  }
  return out;
}

inline std::string format_lengths(const std::vector<int64_t>& v) {
  std::string s;
  for (auto x : v) s += std::to_string(x) + "\n";
  return s;
}

/// Deterministic lengths for (dist, params, seed). Draws use `lo + rng() % span`
/// so the sequence does not depend on the standard library's distributions.
inline std::vector<int64_t> generate_lengths(const Options& o) {
  if (o.count < 0) fail(ErrorKind::BadParams, "count must be non-negative");
  std::mt19937_64 rng(o.seed);
  std::vector<int64_t> out;
  if (o.dist == "fixed") {
    if (o.value < 0) fail(ErrorKind::BadParams, "fixed length must be non-negative");
    out.assign(static_cast<size_t>(o.count), o.value);
  } else if (o.dist == "uniform") {
    if (o.lo < 0 || o.hi < o.lo) fail(ErrorKind::BadParams, "need 0 <= lo <= hi");
    auto span = static_cast<uint64_t>(o.hi - o.lo + 1);
    for (int64_t k = 0; k < o.count; ++k) out.push_back(o.lo + static_cast<int64_t>(rng() % span));
  } else if (o.dist == "uniform-multiple") {
    if (o.multiple < 1 || o.lo < 0 || o.hi < o.lo) fail(ErrorKind::BadParams, "need multiple >= 1 and 0 <= lo <= hi");
    int64_t first = ceil_div(o.lo, o.multiple), last = floor_div(o.hi, o.multiple);
    if (last < first) fail(ErrorKind::BadParams, "no multiple of " + std::to_string(o.multiple) + " in range");
    auto span = static_cast<uint64_t>(last - first + 1);
    for (int64_t k = 0; k < o.count; ++k) out.push_back((first + static_cast<int64_t>(rng() % span)) * o.multiple);
  } else {
    fail(ErrorKind::BadParams, "unknown distribution '" + o.dist + "'");
  }
  return out;
}

// ---- tensor files ----------------------------------------------------------
//
//   tensor <name> <int|float> <count>
//   <value>            one per line, row-major over the valid region
//
// A file may hold several tensors back to back; `#` starts a comment.

inline std::string format_value(const Value& v) {
  if (v.is_int) return std::to_string(v.i);
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v.f);
  return std::string(buf, p);
}

inline std::string format_tensor(const std::string& name, ElemKind elem, const std::vector<Value>& values) {
  std::string s = "tensor " + name + " " + elem_name(elem) + " " + std::to_string(values.size()) + "\n";
  for (const auto& v : values) s += format_value(v) + "\n";
  return s;
}

struct TensorFile {
  std::string name;
  ElemKind elem = ElemKind::Float64;
  std::vector<Value> values;
};

inline std::vector<TensorFile> parse_tensors(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ws(line);
    for (std::string w; ws >> w;) words.push_back(w);
  }
  std::vector<TensorFile> out;
  size_t k = 0;
  auto number = [&](const std::string& w, ElemKind elem) {
    const char* end = w.data() + w.size();
    if (elem == ElemKind::Int64) {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(w.data(), end, v);
      if (ec == std::errc() && p == end) return Value::of_int(v);
    } else {
      double v = 0;
      auto [p, ec] = std::from_chars(w.data(), end, v);
      if (ec == std::errc() && p == end) return Value::of_float(v);
    }
    fail(ErrorKind::ParseError, "bad tensor value '" + w + "'");
  };
  while (k < words.size()) {
    if (words[k] != "tensor") fail(ErrorKind::ParseError, "expected 'tensor <name> <int|float> <count>'");
    if (k + 3 >= words.size()) fail(ErrorKind::ParseError, "truncated tensor header");
    TensorFile t;
    t.name = words[k + 1];
    if (words[k + 2] == "int") t.elem = ElemKind::Int64;
    else if (words[k + 2] != "float") fail(ErrorKind::ParseError, "element type must be int or float");
    Value count = number(words[k + 3], ElemKind::Int64);
    if (count.i < 0) fail(ErrorKind::ParseError, "negative tensor count");
    k += 4;
    for (int64_t j = 0; j < count.i; ++j, ++k) {
      if (k >= words.size() || words[k] == "tensor")
        fail(ErrorKind::SizeMismatch, t.name + ": header promises " + std::to_string(count.i) + " values, found " +
                                          std::to_string(j));
      t.values.push_back(number(words[k], t.elem));
    }
    out.push_back(std::move(t));
  }
  return out;
}

/// CSV field with RFC-4180 quoting.
inline std::string csv(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::string csv_num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// ---- program loading -------------------------------------------------------

struct Loaded {
  Program program;
  const OpRecipe* recipe = nullptr;  // set when --op names a recipe
  RecipeParams params;
  std::string schedule_name;
  std::string schedule_text;
};

inline bool is_recipe(const std::string& name) {
  for (const auto& r : recipes())
    if (r.name == name) return true;
  return false;
}

inline RecipeParams recipe_params(const Options& o, const OpRecipe& r) {
  RecipeParams hp;
  for (const auto& l : o.lens) {
    if (l.find('=') != std::string::npos) fail(ErrorKind::BadParams, "recipes take a plain --lens path");
    auto v = parse_lengths(read_file(l));
    hp.lens.insert(hp.lens.end(), v.begin(), v.end());
  }
  hp.lens2 = o.lens2.empty() ? hp.lens : parse_lengths(read_file(o.lens2));
  hp.heads = o.heads;
  hp.head_dim = o.head_dim;
  hp.k = o.k;
  hp.n = o.n;
  hp.tile = o.tile;
  if (o.elem.empty()) hp.elem = r.float_only ? ElemKind::Float64 : ElemKind::Int64;
  else if (o.elem == "int") hp.elem = ElemKind::Int64;
  else if (o.elem == "float") hp.elem = ElemKind::Float64;
  else fail(ErrorKind::BadParams, "--elem must be int or float");
  if (r.float_only && hp.elem == ElemKind::Int64) fail(ErrorKind::BadParams, r.name + " needs float elements");
  if (hp.heads < 1 || hp.head_dim < 1 || hp.k < 1 || hp.n < 0 || hp.tile < 1)
    fail(ErrorKind::BadParams, "recipe sizes must be positive");
  return hp;
}

/// Resolves --op to a program and --schedule / --variant to schedule text.
inline Loaded load(const Options& o) {
  if (o.op.empty()) fail(ErrorKind::BadParams, "--op is required");
  Loaded L;
  if (is_recipe(o.op)) {
    L.recipe = &recipe(o.op);
    L.params = recipe_params(o, *L.recipe);
    L.program = L.recipe->build(L.params);
  } else if (std::filesystem::exists(o.op)) {
    std::map<std::string, LengthTable> bound;
    for (const auto& l : o.lens) {
      auto eq = l.find('=');
      std::string name = eq == std::string::npos ? "lens" : l.substr(0, eq);
      std::string path = eq == std::string::npos ? l : l.substr(eq + 1);
      bound[name] = LengthTable{name, parse_lengths(read_file(path))};
    }
    L.program = parse_program(read_file(o.op), bound);
  } else {
    fail(ErrorKind::UnknownOp, "'" + o.op + "' is neither a recipe nor a readable op file");
  }
  if (!o.schedule.empty() && !o.variant.empty()) fail(ErrorKind::BadParams, "give --schedule or --variant, not both");
  if (!o.schedule.empty()) {
    L.schedule_name = std::filesystem::path(o.schedule).stem().string();
    L.schedule_text = read_file(o.schedule);
  } else if (!o.variant.empty()) {
    if (!L.recipe) fail(ErrorKind::BadParams, "--variant needs a recipe --op");
    bool found = false;
    for (const auto& v : L.recipe->schedules(L.params))
      if (v.name == o.variant) {
        L.schedule_text = v.script;
        found = true;
      }
    if (!found) fail(ErrorKind::BadParams, "no schedule variant '" + o.variant + "' for " + L.recipe->name);
    L.schedule_name = o.variant;
  } else {
    L.schedule_name = "none";
  }
  return L;
}

inline void emit(const Options& o, std::ostream& out, const std::string& text) {
  if (o.out.empty()) out << text;
  else write_file(o.out, text);
}

// ---- subcommands -----------------------------------------------------------

inline int cmd_gen_lengths(const Options& o, std::ostream& out) {
  emit(o, out, format_lengths(generate_lengths(o)));
  return kExitOk;
}

inline int cmd_lower(const Options& o, std::ostream& out) {
  if (o.emit != "ir" && o.emit != "c") fail(ErrorKind::BadParams, "--emit must be ir or c");
  Loaded L = load(o);
  CompiledProgram c = compile_program(L.program, L.schedule_text);
  std::string text;
  for (const auto& nests : c.nests)
    for (const auto& n : nests) text += o.emit == "ir" ? print_ir(n) : emit_c_text(n);
  emit(o, out, text);
  return kExitOk;
}

/// Random inputs from --seed, overridden by tensors read from --input files.
inline TensorValues run_inputs(const Options& o, const Program& p) {
  TensorValues in = random_inputs(p, o.seed);
  auto inputs = input_tensors(p);
  for (const auto& path : o.inputs)
    for (const auto& t : parse_tensors(read_file(path))) {
      if (std::find(inputs.begin(), inputs.end(), t.name) == inputs.end())
        fail(ErrorKind::UnknownTensor, t.name + " is not an input tensor");
      const TensorDecl& decl = p.tensor(t.name);
      if (t.elem != decl.elem) fail(ErrorKind::BadParams, t.name + ": element type differs from the declaration");
      DenseArray a(decl.elem, dense_shape(decl, p));
      size_t k = 0;
      int64_t expected = 0;
      for_each_valid_index(decl, p, [&](const std::vector<int64_t>&) { ++expected; });
      if (expected != static_cast<int64_t>(t.values.size()))
        fail(ErrorKind::SizeMismatch, t.name + ": expected " + std::to_string(expected) + " values, got " +
                                          std::to_string(t.values.size()));
      for_each_valid_index(decl, p, [&](const std::vector<int64_t>& idx) { a.set(idx, t.values[k++]); });
      in[t.name] = std::move(a);
    }
  return in;
}

inline std::vector<std::string> output_names(const Program& p) {
  std::vector<std::string> out;
  for (const auto& op : p.ops)
    if (std::find(out.begin(), out.end(), op.output) == out.end()) out.push_back(op.output);
  return out;
}

inline int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.workers < 1) fail(ErrorKind::BadParams, "--workers must be at least 1");
  Loaded L = load(o);
  CompiledProgram c = compile_program(L.program, L.schedule_text);
  TensorValues in = run_inputs(o, L.program);
  Execution ex = execute(c, in, o.workers, parse_policy(o.remap));
  std::string err_field;
  bool ok = true;
  if (o.check) {
    TensorValues ref = dense_oracle(L.program, in);
    double worst = 0;
    for (const auto& name : output_names(L.program)) {
      TensorMap map(name, c.storage, c.dim_fusions);
      const TensorDecl& t = L.program.tensor(name);
      Comparison one = compare(t, L.program, ex.buffers.at(name), ref.at(name), map);
      worst = std::max(worst, one.max_abs_err);
      ok = ok && within_tolerance(one, t.elem);
    }
    err_field = csv_num(worst);
  }
  int64_t elements = 0;
  std::string tensors;
  for (const auto& name : output_names(L.program)) {
    auto values = logical_values(c, ex.buffers, name);
    elements += static_cast<int64_t>(values.size());
    tensors += format_tensor(name, L.program.tensor(name).elem, values);
  }
  out << "op,schedule,elements,flops,table_reads,guard_evals,makespan,oracle_max_abs_err\n"
      << csv(o.op) << "," << csv(L.schedule_name) << "," << elements << "," << ex.stats.flops << ","
      << ex.stats.table_reads << "," << ex.stats.guard_evals << "," << ex.stats.makespan << "," << err_field << "\n";
  if (o.out.empty()) out << tensors;
  else write_file(o.out, tensors);
  if (!ok) {
    err << "error: output differs from the dense oracle (max abs err " << err_field << ")\n";
    return kExitRuntime;
  }
  return kExitOk;
}

inline const char* kBenchHeader =
    "run_id,op,schedule,batch,flops_padded,flops_ragged,overhead_fraction,aux_entries_cora,aux_entries_sparse,"
    "prelude_bytes,makespan_identity,makespan_remapped,oracle_max_abs_err";

/// Makespan of every dispatch unit under `policy`, summed.
inline int64_t replayed_makespan(const Execution& ex, int workers, const RemapPolicy& policy) {
  int64_t total = 0;
  for (const auto& st : ex.per_kernel) {
    std::vector<int64_t> works;
    for (auto [id, w] : st.block_work) works.push_back(w);
    total += simulate_parallel(works, workers, policy).makespan;
  }
  return total;
}

inline int cmd_bench(const Options& o, std::ostream& out) {
  if (o.workers < 1) fail(ErrorKind::BadParams, "--workers must be at least 1");
  if (o.pad_loop < 1 || o.pad_dim < 1 || o.bulk_pad < 1) fail(ErrorKind::BadParams, "pads must be positive");
  if (o.pad_dim % o.pad_loop != 0)
    fail(ErrorKind::PadUnderflow, "--pad-dim " + std::to_string(o.pad_dim) + " does not cover --pad-loop " +
                                      std::to_string(o.pad_loop));
  if (!is_recipe(o.op)) fail(ErrorKind::UnknownOp, "bench needs a recipe name, got '" + o.op + "'");
  Loaded L = load(o);
  const OpRecipe& r = *L.recipe;
  const RecipeParams& hp = L.params;
  RemapPolicy remapped = o.remap == "identity" ? RemapPolicy{RemapPolicy::SortDescendingWork, {}} : parse_policy(o.remap);

  std::vector<ScheduleVariant> variants;
  if (!o.schedule.empty() || !o.variant.empty()) variants.push_back({L.schedule_name, L.schedule_text});
  else variants = r.schedules(hp);

  FlopCount f = r.flops(hp);
  double overhead = padding_overhead(r.name, hp, {o.pad_loop, o.bulk_pad});
  AuxCounts aux;
  for (const auto& t : L.program.tensors) {
    AuxCounts a = aux_counts(t, L.program);
    aux.prefix += a.prefix;
    aux.sparse_tree += a.sparse_tree;
  }
  int64_t batch = r.name == "trmm" ? hp.n : static_cast<int64_t>(hp.lens.size());
  TensorValues in = random_inputs(L.program, o.seed);

  std::ostringstream rows;
  rows << kBenchHeader << "\n";
  for (const auto& v : variants) {
    CompiledProgram c = compile_program(L.program, v.script);
    Execution ex = execute(c, in, o.workers);
    Comparison cmp = check_against_oracle(c, in, ex.buffers);
    rows << csv(r.name + "/" + v.name + "/s" + std::to_string(o.seed)) << "," << csv(r.name) << "," << csv(v.name)
         << "," << batch << "," << csv_num(f.padded) << "," << csv_num(f.ragged) << "," << csv_num(overhead) << ","
         << aux.prefix << "," << aux.sparse_tree << "," << c.prelude.bytes << ","
         << replayed_makespan(ex, o.workers, {}) << "," << replayed_makespan(ex, o.workers, remapped) << ","
         << csv_num(cmp.max_abs_err) << "\n";
  }
  emit(o, out, rows.str());
  return kExitOk;
}

inline int cmd_prelude_stats(const Options& o, std::ostream& out) {
  Loaded L = load(o);
  CompiledProgram c = compile_program(L.program, L.schedule_text);
  std::ostringstream rows;
  rows << "kind,name,entries,bytes,aux_prefix,aux_sparse\n";
  for (const auto& s : c.prelude.steps)
    rows << (s.kind == PreludeStep::AuxArray ? "AuxArray" : "FusionMaps") << "," << csv(s.structure) << ","
         << s.entries << "," << 8 * s.entries << ",,\n";
  AuxCounts total;
  for (const auto& t : c.storage.tensors) {
    AuxCounts a = aux_counts(t, c.storage);
    total.prefix += a.prefix;
    total.sparse_tree += a.sparse_tree;
    rows << "tensor," << csv(t.name) << ",,," << a.prefix << "," << a.sparse_tree << "\n";
  }
  rows << "total,prelude," << c.prelude.op_count << "," << c.prelude.bytes << "," << total.prefix << ","
       << total.sparse_tree << "\n";
  emit(o, out, rows.str());
  return kExitOk;
}

}  // namespace ragc::cli
