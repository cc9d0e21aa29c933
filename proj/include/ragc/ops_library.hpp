#pragma once

// Ragged operators used across the test matrix, their schedule variants, and
// analytic FLOP / memory / padding accounting.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ragc/core_ir.hpp"
#include "ragc/error.hpp"
#include "ragc/parser.hpp"

namespace ragc {

struct RecipeParams {
  std::vector<int64_t> lens;   // per-instance sequence lengths (vgemm: rows)
  std::vector<int64_t> lens2;  // vgemm: per-instance columns
  int64_t heads = 1;
  int64_t head_dim = 1;
  int64_t k = 4;     // vgemm contraction extent
  int64_t n = 4;     // trmm matrix size
  int64_t tile = 64; // split point for the Split variants
  ElemKind elem = ElemKind::Int64;
};

struct ScheduleVariant {
  std::string name;
  std::string script;
};

struct FlopCount {
  double padded = 0;
  double ragged = 0;
  double ratio() const { return ragged == 0 ? 1.0 : padded / ragged; }
};

struct PadSpec {
  int64_t loop_pad = 1;
  int64_t bulk_pad = 1;
};

struct OpRecipe {
  std::string name;
  bool float_only = false;
  std::string output;  // final output tensor
  std::function<std::string(const RecipeParams&)> text;
  std::function<std::map<std::string, LengthTable>(const RecipeParams&)> tables;
  std::function<std::vector<ScheduleVariant>(const RecipeParams&)> schedules;
  std::function<FlopCount(const RecipeParams&)> flops;
  // Flops once varying extents are rounded up to pad.loop_pad and the
  // fused token count to pad.bulk_pad (where the operator has one).
  std::function<double(const RecipeParams&, const PadSpec&)> padded_flops;
  // Work per block of the outermost parallel loop (trmm: per row tile of `tile` rows).
  std::function<std::vector<int64_t>(const RecipeParams&)> block_works;

  Program build(const RecipeParams& hp) const { return parse_program(text(hp), tables(hp)); }
};

namespace detail {

inline std::string elem_text(ElemKind e) { return e == ElemKind::Int64 ? "int" : "float"; }

inline int64_t max_of(const std::vector<int64_t>& v) {
  return v.empty() ? 0 : *std::max_element(v.begin(), v.end());
}

inline std::vector<int64_t> padded(std::vector<int64_t> v, int64_t m) {
  for (auto& x : v) x = round_up(x, m);
  return v;
}

inline double sum_of(const std::vector<int64_t>& v, const std::function<double(double)>& f) {
  double s = 0;
  for (auto x : v) s += f(static_cast<double>(x));
  return s;
}

// Row lengths 1..n of a lower triangle.
inline LengthTable tri_table(int64_t n) {
  LengthTable t{"tri", {}};
  for (int64_t i = 0; i < n; ++i) t.values.push_back(i + 1);
  return t;
}

inline std::map<std::string, LengthTable> lens_table(const RecipeParams& hp) {
  return {{"lens", {"lens", hp.lens}}};
}

inline std::string str(int64_t v) { return std::to_string(v); }

}  // namespace detail

namespace recipes_detail {

using detail::str;

inline OpRecipe elementwise_scale() {
  OpRecipe r;
  r.name = "elementwise_scale";
  r.output = "O";
  r.text = [](const RecipeParams& hp) {
    std::string e = detail::elem_text(hp.elem);
    return "dims batch, len;\n"
           "table lens = input;\n"
           "tensor A (batch, len) storage [size(lens), lens(batch)] " + e + ";\n"
           "tensor O (batch, len) storage [size(lens), lens(batch)] " + e + ";\n"
           "op O loops [batch: size(lens), len: lens(batch)] = 2 * A[batch, len];\n";
  };
  r.tables = detail::lens_table;
  r.schedules = [](const RecipeParams& hp) -> std::vector<ScheduleVariant> {
    std::string t = str(hp.tile);
    return {{"NoSplit", "parallel batch x\n"},
            {"Padded", "pad_dim A len 4\npad_dim O len 4\npad_loop len 4\nparallel batch x\n"},
            {"FusedLoops", "fuse_loops batch len\npad_loop batch.len.fused 8\nparallel batch.len.fused x\n"},
            {"FusedStorage", "fuse_dims A batch len\nfuse_dims O batch len\nparallel batch x\n"},
            {"Split", "parallel batch x\nsplit_op len floor:" + t + "\n"},
            {"Split-HFused", "parallel batch x\nsplit_op len floor:" + t + "\nhfuse\n"}};
  };
  r.flops = [](const RecipeParams& hp) {
    return FlopCount{static_cast<double>(hp.lens.size()) * static_cast<double>(detail::max_of(hp.lens)),
                     detail::sum_of(hp.lens, [](double l) { return l; })};
  };
  r.padded_flops = [](const RecipeParams& hp, const PadSpec& pad) {
    double tokens = detail::sum_of(detail::padded(hp.lens, pad.loop_pad), [](double l) { return l; });
    return static_cast<double>(round_up(static_cast<int64_t>(tokens), pad.bulk_pad));
  };
  r.block_works = [](const RecipeParams& hp) { return hp.lens; };
  return r;
}

// Softmax over each variable-length row, as three operators.
inline OpRecipe ragged_softmax() {
  OpRecipe r;
  r.name = "ragged_softmax";
  r.float_only = true;
  r.output = "O";
  r.text = [](const RecipeParams&) {
    return std::string(
        "dims batch, len;\n"
        "table lens = input;\n"
        "tensor X (batch, len) storage [size(lens), lens(batch)] float;\n"
        "tensor M (batch) storage [size(lens)] float;\n"
        "tensor S (batch) storage [size(lens)] float;\n"
        "tensor O (batch, len) storage [size(lens), lens(batch)] float;\n"
        "op M loops [batch: size(lens), len: lens(batch) reduce] = max: X[batch, len];\n"
        "op S loops [batch: size(lens), len: lens(batch) reduce] = sum: exp(X[batch, len] - M[batch]);\n"
        "op O loops [batch: size(lens), len: lens(batch)] = exp(X[batch, len] - M[batch]) / S[batch];\n");
  };
  r.tables = detail::lens_table;
  r.schedules = [](const RecipeParams& hp) -> std::vector<ScheduleVariant> {
    std::string t = str(hp.tile);
    std::string par = "op M\nparallel batch x\nop S\nparallel batch x\nop O\nparallel batch x\n";
    return {{"NoSplit", par},
            {"Padded", "op O\npad_dim X len 4\npad_dim O len 4\npad_loop len 4\nop S\npad_loop len 4\n"},
            {"SplitReduction", "op M\nsplit_op len " + t + "\nop S\nsplit_op len floor:" + t + "\n"},
            {"Split-HFused", par + "split_op len floor:" + t + "\nhfuse\n"}};
  };
  // max, subtract, exp, add, divide per element
  r.flops = [](const RecipeParams& hp) {
    return FlopCount{5.0 * static_cast<double>(hp.lens.size()) * static_cast<double>(detail::max_of(hp.lens)),
                     5.0 * detail::sum_of(hp.lens, [](double l) { return l; })};
  };
  r.padded_flops = [](const RecipeParams& hp, const PadSpec& pad) {
    double tokens = detail::sum_of(detail::padded(hp.lens, pad.loop_pad), [](double l) { return l; });
    return 5.0 * static_cast<double>(round_up(static_cast<int64_t>(tokens), pad.bulk_pad));
  };
  r.block_works = [](const RecipeParams& hp) {
    std::vector<int64_t> w;
    for (auto l : hp.lens) w.push_back(3 * l);
    return w;
  };
  return r;
}

// Batch of GEMMs with per-instance rows (lens) and columns (lens2).
inline OpRecipe vgemm() {
  OpRecipe r;
  r.name = "vgemm";
  r.output = "C";
  r.text = [](const RecipeParams& hp) {
    std::string e = detail::elem_text(hp.elem), K = str(hp.k);
    return "dims batch, m, n, k;\n"
           "table mlen = input;\n"
           "table nlen = input;\n"
           "tensor A (batch, m, k) storage [size(mlen), mlen(batch), " + K + "] " + e + ";\n"
           "tensor B (batch, k, n) storage [size(mlen), " + K + ", nlen(batch)] " + e + ";\n"
           "tensor C (batch, m, n) storage [size(mlen), mlen(batch), nlen(batch)] " + e + ";\n"
           "op C loops [batch: size(mlen), m: mlen(batch), n: nlen(batch), k: " + K +
           " reduce] = sum: A[batch, m, k] * B[batch, k, n];\n";
  };
  r.tables = [](const RecipeParams& hp) -> std::map<std::string, LengthTable> {
    if (hp.lens2.size() != hp.lens.size()) fail(ErrorKind::BadParams, "vgemm needs one column count per instance");
    return {{"mlen", {"mlen", hp.lens}}, {"nlen", {"nlen", hp.lens2}}};
  };
  r.schedules = [](const RecipeParams& hp) -> std::vector<ScheduleVariant> {
    std::string t = str(hp.tile);
    return {{"NoSplit", "parallel batch x\n"},
            {"Padded", "pad_dim C n 4\npad_dim B n 4\npad_loop n 4\nparallel batch x\n"},
            {"Tiled", "split_loop m 4\nparallel batch x\n"},
            {"Split", "parallel batch x\nsplit_op m floor:" + t + "\n"},
            {"Split-HFused", "parallel batch x\nsplit_op m floor:" + t + "\nhfuse\n"}};
  };
  auto macs = [](const std::vector<int64_t>& m, const std::vector<int64_t>& n, int64_t k) {
    double s = 0;
    for (size_t b = 0; b < m.size() && b < n.size(); ++b)
      s += static_cast<double>(m[b]) * static_cast<double>(n[b]) * static_cast<double>(k);
    return s;
  };
  r.flops = [macs](const RecipeParams& hp) {
    double padded = static_cast<double>(hp.lens.size()) * static_cast<double>(detail::max_of(hp.lens)) *
                    static_cast<double>(detail::max_of(hp.lens2)) * static_cast<double>(hp.k);
    return FlopCount{padded, macs(hp.lens, hp.lens2, hp.k)};
  };
  r.padded_flops = [macs](const RecipeParams& hp, const PadSpec& pad) {
    return macs(detail::padded(hp.lens, pad.loop_pad), detail::padded(hp.lens2, pad.loop_pad), hp.k);
  };
  r.block_works = [](const RecipeParams& hp) {
    std::vector<int64_t> w;
    for (size_t b = 0; b < hp.lens.size() && b < hp.lens2.size(); ++b) w.push_back(hp.lens[b] * hp.lens2[b] * hp.k);
    return w;
  };
  return r;
}

// C = tril(A) * B for an n x n lower-triangular A stored row-ragged.
inline OpRecipe trmm() {
  OpRecipe r;
  r.name = "trmm";
  r.output = "C";
  r.text = [](const RecipeParams& hp) {
    std::string e = detail::elem_text(hp.elem), N = str(hp.n);
    return "dims i, j, k;\n"
           "table tri = input;\n"
           "tensor A (i, k) storage [" + N + ", tri(i)] " + e + ";\n"
           "tensor B (k, j) storage [" + N + ", " + N + "] " + e + ";\n"
           "tensor C (i, j) storage [" + N + ", " + N + "] " + e + ";\n"
           "op C loops [i: " + N + ", j: " + N + ", k: tri(i) reduce] = sum: A[i, k] * B[k, j];\n";
  };
  r.tables = [](const RecipeParams& hp) -> std::map<std::string, LengthTable> {
    return {{"tri", detail::tri_table(hp.n)}};
  };
  r.schedules = [](const RecipeParams& hp) -> std::vector<ScheduleVariant> {
    std::string t = str(hp.tile);
    return {{"NoSplit", "parallel i x\n"},
            {"Balanced", "split_loop i 4\nparallel i.outer x\nremap i.outer desc\n"},
            {"SplitReduction", "split_op k floor:4\n"},
            {"Split-HFused", "parallel i x\nsplit_op i " + t + "\nhfuse\n"}};
  };
  r.flops = [](const RecipeParams& hp) {
    auto n = static_cast<double>(hp.n);
    return FlopCount{n * n * n, n * n * (n + 1) / 2};
  };
  r.padded_flops = [](const RecipeParams& hp, const PadSpec& pad) {
    double s = 0;
    for (int64_t i = 0; i < hp.n; ++i) s += static_cast<double>(round_up(i + 1, pad.loop_pad));
    return s * static_cast<double>(hp.n);
  };
  r.block_works = [](const RecipeParams& hp) {
    std::vector<int64_t> w;
    int64_t tile = std::max<int64_t>(hp.tile, 1);
    for (int64_t lo = 0; lo < hp.n; lo += tile) {
      int64_t s = 0;
      for (int64_t i = lo; i < std::min(hp.n, lo + tile); ++i) s += (i + 1) * hp.n;
      w.push_back(s);
    }
    return w;
  };
  return r;
}

inline std::vector<ScheduleVariant> attention_schedules(const RecipeParams& hp, const std::string& in,
                                                        const std::string& out) {
  std::string t = str(hp.tile);
  return {{"NoSplit", "parallel batch x\n"},
          {"Padded", "pad_dim " + out + " seqj 4\npad_dim " + in + " seqj 4\npad_loop seqj 4\nparallel batch x\n"},
          {"Split", "parallel batch x\nsplit_op seqi floor:" + t + "\n"},
          {"Split-HFused", "parallel batch x\nsplit_op seqi floor:" + t + "\nhfuse\n"}};
}

inline FlopCount square_flops(const RecipeParams& hp) {
  double hd = static_cast<double>(hp.heads * hp.head_dim);
  auto mx = static_cast<double>(detail::max_of(hp.lens));
  return {hd * static_cast<double>(hp.lens.size()) * mx * mx, hd * detail::sum_of(hp.lens, [](double l) { return l * l; })};
}

inline std::vector<int64_t> square_blocks(const RecipeParams& hp) {
  std::vector<int64_t> w;
  for (auto l : hp.lens) w.push_back(hp.heads * hp.head_dim * l * l);
  return w;
}

inline double square_padded(const RecipeParams& hp, const PadSpec& pad) {
  return static_cast<double>(hp.heads * hp.head_dim) *
         detail::sum_of(detail::padded(hp.lens, pad.loop_pad), [](double l) { return l * l; });
}

inline OpRecipe qkT() {
  OpRecipe r;
  r.name = "qkT";
  r.output = "S";
  r.text = [](const RecipeParams& hp) {
    std::string e = detail::elem_text(hp.elem), H = str(hp.heads), D = str(hp.head_dim);
    return "dims batch, seqi, head, seqj, d;\n"
           "table lens = input;\n"
           "tensor Q (batch, seqi, head, d) storage [size(lens), lens(batch), " + H + ", " + D + "] " + e + ";\n"
           "tensor K (batch, seqj, head, d) storage [size(lens), lens(batch), " + H + ", " + D + "] " + e + ";\n"
           "tensor S (batch, seqi, head, seqj) storage [size(lens), lens(batch), " + H + ", lens(batch)] " + e +
           ";\n"
           "op S loops [batch: size(lens), seqi: lens(batch), head: " + H + ", seqj: lens(batch), d: " + D +
           " reduce] = sum: Q[batch, seqi, head, d] * K[batch, seqj, head, d];\n";
  };
  r.tables = detail::lens_table;
  r.schedules = [](const RecipeParams& hp) { return attention_schedules(hp, "K", "S"); };
  r.flops = square_flops;
  r.padded_flops = square_padded;
  r.block_works = square_blocks;
  return r;
}

inline OpRecipe attnv() {
  OpRecipe r;
  r.name = "attnv";
  r.output = "O";
  r.text = [](const RecipeParams& hp) {
    std::string e = detail::elem_text(hp.elem), H = str(hp.heads), D = str(hp.head_dim);
    return "dims batch, seqi, head, seqj, d;\n"
           "table lens = input;\n"
           "tensor P (batch, seqi, head, seqj) storage [size(lens), lens(batch), " + H + ", lens(batch)] " + e +
           ";\n"
           "tensor V (batch, seqj, head, d) storage [size(lens), lens(batch), " + H + ", " + D + "] " + e + ";\n"
           "tensor O (batch, seqi, head, d) storage [size(lens), lens(batch), " + H + ", " + D + "] " + e + ";\n"
           "op O loops [batch: size(lens), seqi: lens(batch), head: " + H + ", d: " + D +
           ", seqj: lens(batch) reduce] = sum: P[batch, seqi, head, seqj] * V[batch, seqj, head, d];\n";
  };
  r.tables = detail::lens_table;
  r.schedules = [](const RecipeParams& hp) -> std::vector<ScheduleVariant> {
    std::string t = str(hp.tile);
    return {{"NoSplit", "parallel batch x\n"},
            {"Padded", "pad_dim O d 2\npad_loop seqi 4\nparallel batch x\n"},
            {"Split", "parallel batch x\nsplit_op seqi floor:" + t + "\n"},
            {"Split-HFused", "parallel batch x\nsplit_op seqi floor:" + t + "\nhfuse\n"}};
  };
  r.flops = square_flops;
  r.padded_flops = square_padded;
  r.block_works = square_blocks;
  return r;
}

// Causal attention: scores only for seqj <= seqi, softmax, then weighted sum of V.
inline OpRecipe masked_sdpa() {
  OpRecipe r;
  r.name = "masked_sdpa";
  r.float_only = true;
  r.output = "O";
  r.text = [](const RecipeParams& hp) {
    std::string H = str(hp.heads), D = str(hp.head_dim);
    std::string B = "size(lens), lens(batch), " + H;
    return "dims batch, seqi, head, seqj, d;\n"
           "table lens = input;\n"
           "table tri = input;\n"
           "tensor Q (batch, seqi, head, d) storage [" + B + ", " + D + "] float;\n"
           "tensor K (batch, seqj, head, d) storage [" + B + ", " + D + "] float;\n"
           "tensor V (batch, seqj, head, d) storage [" + B + ", " + D + "] float;\n"
           "tensor S (batch, seqi, head, seqj) storage [" + B + ", tri(seqi)] float;\n"
           "tensor M (batch, seqi, head) storage [" + B + "] float;\n"
           "tensor Z (batch, seqi, head) storage [" + B + "] float;\n"
           "tensor O (batch, seqi, head, d) storage [" + B + ", " + D + "] float;\n"
           "op S loops [batch: size(lens), seqi: lens(batch), head: " + H + ", seqj: tri(seqi), d: " + D +
           " reduce] = sum: Q[batch, seqi, head, d] * K[batch, seqj, head, d];\n"
           "op M loops [batch: size(lens), seqi: lens(batch), head: " + H +
           ", seqj: tri(seqi) reduce] = max: S[batch, seqi, head, seqj];\n"
           "op Z loops [batch: size(lens), seqi: lens(batch), head: " + H +
           ", seqj: tri(seqi) reduce] = sum: exp(S[batch, seqi, head, seqj] - M[batch, seqi, head]);\n"
           "op O loops [batch: size(lens), seqi: lens(batch), head: " + H + ", d: " + D +
           ", seqj: tri(seqi) reduce] = sum: exp(S[batch, seqi, head, seqj] - M[batch, seqi, head]) / "
           "Z[batch, seqi, head] * V[batch, seqj, head, d];\n";
  };
  r.tables = [](const RecipeParams& hp) -> std::map<std::string, LengthTable> {
    return {{"lens", {"lens", hp.lens}}, {"tri", detail::tri_table(std::max<int64_t>(detail::max_of(hp.lens), 1))}};
  };
  r.schedules = [](const RecipeParams& hp) -> std::vector<ScheduleVariant> {
    std::string t = str(hp.tile);
    std::string par = "op S\nparallel batch x\nop M\nparallel batch x\nop Z\nparallel batch x\nop O\nparallel batch x\n";
    return {{"NoSplit", par},
            {"Padded", "op S\npad_loop seqj 4\nop O\npad_loop seqi 2\n"},
            {"Split-HFused", par + "op S\nsplit_op seqi floor:" + t + "\nhfuse\n"}};
  };
  // Per score: D MACs for the product, D for the weighted sum, 5 for the softmax.
  // The padded count runs the causal kernel at the batch's max length.
  r.flops = [](const RecipeParams& hp) {
    double per = static_cast<double>(hp.heads * (2 * hp.head_dim + 5));
    auto mx = static_cast<double>(detail::max_of(hp.lens));
    return FlopCount{per * static_cast<double>(hp.lens.size()) * mx * (mx + 1) / 2,
                     per * detail::sum_of(hp.lens, [](double l) { return l * (l + 1) / 2; })};
  };
  r.padded_flops = [](const RecipeParams& hp, const PadSpec& pad) {
    double per = static_cast<double>(hp.heads * (2 * hp.head_dim + 5));
    double s = 0;
    for (auto l : hp.lens)
      for (int64_t i = 0; i < round_up(l, pad.loop_pad); ++i) s += static_cast<double>(round_up(i + 1, pad.loop_pad));
    return per * s;
  };
  r.block_works = [](const RecipeParams& hp) {
    std::vector<int64_t> w;
    for (auto l : hp.lens) w.push_back(hp.heads * (2 * hp.head_dim + 3) * l * (l + 1) / 2);
    return w;
  };
  return r;
}

}  // namespace recipes_detail

/// The seven library operators.
inline const std::vector<OpRecipe>& recipes() {
  static const std::vector<OpRecipe> all{recipes_detail::elementwise_scale(), recipes_detail::ragged_softmax(),
                                         recipes_detail::vgemm(),             recipes_detail::trmm(),
                                         recipes_detail::qkT(),               recipes_detail::attnv(),
                                         recipes_detail::masked_sdpa()};
  return all;
}

inline const OpRecipe& recipe(const std::string& name) {
  for (const auto& r : recipes())
    if (r.name == name) return r;
  fail(ErrorKind::UnknownOp, "no recipe named '" + name + "'");
}

inline FlopCount flops(const std::string& name, const RecipeParams& hp) { return recipe(name).flops(hp); }

/// Unmasked attention cost for the same shapes as masked_sdpa.
inline double unmasked_sdpa_flops(const RecipeParams& hp) {
  return static_cast<double>(hp.heads * (2 * hp.head_dim + 5)) *
         detail::sum_of(hp.lens, [](double l) { return l * l; });
}

/// (flops with partial padding - ideal flops) / ideal flops.
inline double padding_overhead(const std::string& name, const RecipeParams& hp, const PadSpec& pad) {
  const OpRecipe& r = recipe(name);
  double ideal = r.flops(hp).ragged;
  if (ideal == 0) return 0.0;
  return (r.padded_flops(hp, pad) - ideal) / ideal;
}

/// Hyperparameters of a transformer encoder layer, used only for accounting.
struct EncoderParams {
  int64_t hidden = 512;
  int64_t heads = 8;
  int64_t head_dim = 64;
  int64_t ff = 2048;
  int64_t elem_bytes = 4;
};

/// MACs of one encoder layer over a batch. Token-wise layers (projections and
/// feed-forward) run on the fused token dimension, bulk padded; attention
/// (QK^T, softmax, AttnV) runs per sequence with loop padding.
inline double encoder_layer_flops(const std::vector<int64_t>& lens, const EncoderParams& e, const PadSpec& pad) {
  double tokens = detail::sum_of(lens, [](double l) { return l; });
  tokens = static_cast<double>(round_up(static_cast<int64_t>(tokens), pad.bulk_pad));
  double per_token = static_cast<double>(4 * e.hidden * e.hidden + 2 * e.hidden * e.ff);
  double per_score = static_cast<double>(e.heads * (2 * e.head_dim + 5));
  double scores = detail::sum_of(detail::padded(lens, pad.loop_pad), [](double l) { return l * l; });
  return tokens * per_token + scores * per_score;
}

/// Padding overhead of encoder layers over a dataset split into consecutive batches.
inline double encoder_overhead(const std::vector<int64_t>& dataset, size_t batch, const EncoderParams& e,
                               const PadSpec& pad) {
  if (batch == 0) fail(ErrorKind::BadParams, "batch size must be positive");
  double ideal = 0, real = 0;
  for (size_t lo = 0; lo < dataset.size(); lo += batch) {
    std::vector<int64_t> b(dataset.begin() + static_cast<long>(lo),
                           dataset.begin() + static_cast<long>(std::min(dataset.size(), lo + batch)));
    ideal += encoder_layer_flops(b, e, {1, 1});
    real += encoder_layer_flops(b, e, pad);
  }
  return ideal == 0 ? 0.0 : (real - ideal) / ideal;
}

/// Bytes of the attention activations: Q, K, V, attention output and projected
/// output (tokens x hidden), plus scores and probabilities (heads x len^2).
/// Dense storage pads every sequence to the batch maximum.
inline double activation_memory(const std::vector<int64_t>& lens, const EncoderParams& e, bool ragged,
                                int64_t loop_pad = 1) {
  std::vector<int64_t> l = ragged ? detail::padded(lens, loop_pad)
                                  : std::vector<int64_t>(lens.size(), detail::max_of(lens));
  double tokens = detail::sum_of(l, [](double x) { return x; });
  double scores = detail::sum_of(l, [](double x) { return x * x; });
  return static_cast<double>(e.elem_bytes) *
         (5.0 * tokens * static_cast<double>(e.hidden) + 2.0 * scores * static_cast<double>(e.heads));
}

}  // namespace ragc
