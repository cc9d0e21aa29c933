#include <gtest/gtest.h>

#include <random>

#include "ragc/ops_library.hpp"
#include "ragc/parser.hpp"
#include "ragc/pipeline.hpp"

using namespace ragc;

namespace {

Program scale_rows(const std::vector<int64_t>& lens) {
  Program p;
  p.add_dim("batch");
  p.add_dim("len");
  p.add_table({"lens", lens});
  auto n = static_cast<int64_t>(lens.size());
  declare_tensor(p, "A", {"batch", "len"}, {Extent::fixed(n), Extent::on("batch", "lens")});
  declare_tensor(p, "O", {"batch", "len"}, {Extent::fixed(n), Extent::on("batch", "lens")});
  declare_operator(p, {"O",
                       {{"batch", Extent::fixed(n)}, {"len", Extent::on("batch", "lens")}},
                       Combiner::Assign,
                       ex::mul(ex::cst(2), ex::read("A", {ex::var("batch"), ex::var("len")})),
                       "O"});
  return p;
}

// Row-wise ragged sum: R[b] = sum_k X[b, k].
Program row_sum(const std::vector<int64_t>& lens) {
  Program p;
  p.add_dim("b");
  p.add_dim("k");
  p.add_table({"lens", lens});
  auto n = static_cast<int64_t>(lens.size());
  declare_tensor(p, "X", {"b", "k"}, {Extent::fixed(n), Extent::on("b", "lens")}, ElemKind::Int64);
  declare_tensor(p, "R", {"b"}, {Extent::fixed(n)}, ElemKind::Int64);
  declare_operator(p, {"R",
                       {{"b", Extent::fixed(n)}, {"k", Extent::on("b", "lens"), true}},
                       Combiner::Sum,
                       ex::read("X", {ex::var("b"), ex::var("k")}),
                       "R"});
  return p;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::UnknownOp;
}

using Tuple = std::vector<int64_t>;

// Walks the scheduled loops directly. Bounds and guards may read only the
// program's own tables, so this covers every primitive except loop fusion.
void enumerate(const ScheduledOp& s, const Program& p, size_t depth, std::map<std::string, int64_t>& env,
               std::vector<Tuple>& out) {
  EvalEnv e;
  e.var = [&](const std::string& v) { return Value::of_int(env.at(v)); };
  e.table = [&](const std::string& t, int64_t i) { return p.table(t).at(i); };
  if (depth == s.loops.size()) {
    for (const auto& g : s.guards)
      if (eval(g.cond, e).as_int() == 0) return;
    Tuple t;
    for (const auto& l : s.base.loops) t.push_back(eval(s.dim_value.at(l.dim), e).as_int());
    out.push_back(t);
    return;
  }
  const SLoop& l = s.loops[depth];
  int64_t lo = eval(l.lo, e).as_int(), hi = eval(l.hi, e).as_int();
  for (int64_t v = lo; v < hi; ++v) {
    env[l.var] = v;
    enumerate(s, p, depth + 1, env, out);
  }
  env.erase(l.var);
}

std::vector<Tuple> points_of(const std::vector<ScheduledOp>& pieces, const Program& p) {
  std::vector<Tuple> out;
  for (const auto& s : pieces) {
    std::map<std::string, int64_t> env;
    enumerate(s, p, 0, env, out);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Reference iteration space, straight from the operator declaration.
std::vector<Tuple> declared_space(const OperatorDef& op, const Program& p) {
  std::vector<Tuple> out;
  Tuple cur;
  std::function<void(size_t)> rec = [&](size_t d) {
    if (d == op.loops.size()) {
      out.push_back(cur);
      return;
    }
    const auto& e = op.loops[d].extent;
    int64_t hi = e.size;
    if (e.varying) {
      size_t dep = 0;
      while (op.loops[dep].dim != e.dep) ++dep;
      hi = p.table(e.table).at(cur[dep]);
    }
    for (int64_t v = 0; v < hi; ++v) {
      cur.push_back(v);
      rec(d + 1);
      cur.pop_back();
    }
  };
  rec(0);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int64_t> random_lens(std::mt19937_64& rng, int max_batch, int64_t max_len) {
  std::vector<int64_t> v(static_cast<size_t>(std::uniform_int_distribution<int>(1, max_batch)(rng)));
  for (auto& x : v) x = std::uniform_int_distribution<int64_t>(0, max_len)(rng);
  return v;
}

}  // namespace

TEST(PadRules, LoopPadThenCoveringStoragePad) {
  Program p = scale_rows({3, 5});
  ScheduledOp s = make_scheduled(p, "O");
  s = ragc::apply(s, PadLoop{"len", 32});
  s = ragc::apply(s, PadDim{"O", "len", 64});
  EXPECT_EQ(s.prog.tensor("O").pad[1], 64);
  EXPECT_EQ(s.dim_loop_pad.at("len"), 32);
}

TEST(PadRules, StoragePadBelowLoopPadUnderflows) {
  Program p = scale_rows({3, 5});
  ScheduledOp s = ragc::apply(make_scheduled(p, "O"), PadLoop{"len", 32});
  EXPECT_EQ(kind_of([&] { ragc::apply(s, PadDim{"O", "len", 16}); }), ErrorKind::PadUnderflow);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, PadDim{"O", "len", 48}); }), ErrorKind::PadUnderflow);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, PadLoop{"len", 4}); }), ErrorKind::InvalidPrimitive);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, PadLoop{"batch", 0}); }), ErrorKind::BadParams);
}

TEST(PadRules, DivisibleConstantLoopNeedsNoGuard) {
  Program p = scale_rows({3, 5, 1, 1});
  ScheduledOp s = ragc::apply(make_scheduled(p, "O"), PadLoop{"batch", 2});
  EXPECT_TRUE(s.guards.empty());
  s = ragc::apply(s, PadLoop{"len", 2});
  ASSERT_EQ(s.guards.size(), 1u);
  EXPECT_EQ(s.guards[0].kind, SGuard::Padding);
  EXPECT_EQ(s.guards[0].dim, "len");
}

TEST(Reorder, DependentLoopCannotMoveOutside) {
  Program p = scale_rows({3, 5});
  ScheduledOp s = make_scheduled(p, "O");
  EXPECT_EQ(kind_of([&] { ragc::apply(s, ReorderLoops{{"len", "batch"}}); }), ErrorKind::IllegalReorder);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, ReorderLoops{{"len", "len"}}); }), ErrorKind::InvalidPrimitive);
  ScheduledOp same = ragc::apply(s, ReorderLoops{{"batch", "len"}});
  EXPECT_EQ(same.loops, s.loops);
}

TEST(Reorder, ReductionsStayInnermost) {
  RecipeParams hp;
  hp.lens = {2, 3};
  hp.lens2 = {3, 2};
  Program p = recipe("vgemm").build(hp);
  ScheduledOp s = make_scheduled(p, "C");
  std::vector<std::string> vars;
  for (const auto& l : s.loops) vars.push_back(l.var);
  ASSERT_TRUE(s.loops.back().reduction);
  std::vector<std::string> bad = vars;
  std::swap(bad[bad.size() - 1], bad[bad.size() - 2]);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, ReorderLoops{bad}); }), ErrorKind::IllegalReorder);
}

TEST(Reorder, IndependentDenseLoopsSwap) {
  Program p = parse_program(
      "dims i, j;\n"
      "tensor A (i, j) storage [3, 4] int;\n"
      "tensor B (i, j) storage [3, 4] int;\n"
      "op B loops [i: 3, j: 4] = A[i, j] + 1;\n");
  ScheduledOp s = ragc::apply(make_scheduled(p, "B"), ReorderLoops{{"j", "i"}});
  EXPECT_EQ(s.loops[0].var, "j");
  EXPECT_EQ(s.loops[1].var, "i");
  EXPECT_EQ(points_of({s}, p), declared_space(p.ops[0], p));
}

TEST(SplitLoop, NamesAndGuard) {
  Program p = scale_rows({5, 2});
  ScheduledOp s = ragc::apply(make_scheduled(p, "O"), SplitLoop{"len", 4});
  ASSERT_EQ(s.loops.size(), 3u);
  EXPECT_EQ(s.loops[1].var, "len.outer");
  EXPECT_EQ(s.loops[2].var, "len.inner");
  ASSERT_EQ(s.guards.size(), 1u);
  EXPECT_EQ(s.guards[0].kind, SGuard::Split);
  EXPECT_EQ(points_of({s}, p), declared_space(p.ops[0], p));
  EXPECT_EQ(kind_of([&] { ragc::apply(s, SplitLoop{"len.inner", 0}); }), ErrorKind::BadParams);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, SplitLoop{"nope", 2}); }), ErrorKind::InvalidPrimitive);
}

TEST(FuseLoops, VloopFusionNeedsConstantOuter) {
  Program p = scale_rows({5, 2});
  ScheduledOp s = ragc::apply(make_scheduled(p, "O"), FuseLoops{"batch", "len"});
  ASSERT_EQ(s.loops.size(), 1u);
  EXPECT_EQ(s.loops[0].var, "batch.len.fused");
  ASSERT_TRUE(s.loops[0].fusion.has_value());
  EXPECT_EQ(s.loops[0].fusion->M, 2);
  ScheduledOp split = ragc::apply(make_scheduled(p, "O"), SplitLoop{"batch", 2});
  EXPECT_EQ(kind_of([&] { ragc::apply(split, FuseLoops{"batch.inner", "len"}); }), ErrorKind::Unsupported);
  EXPECT_EQ(kind_of([&] { ragc::apply(make_scheduled(p, "O"), FuseLoops{"len", "batch"}); }),
            ErrorKind::InvalidPrimitive);
}

TEST(FuseLoops, ReductionWithSpatialIsUnsupported) {
  Program p = row_sum({3, 1});
  EXPECT_EQ(kind_of([&] { ragc::apply(make_scheduled(p, "R"), FuseLoops{"b", "k"}); }), ErrorKind::Unsupported);
}

TEST(FuseLoops, PadOnFusedLoopIsBulk) {
  Program p = scale_rows({5, 2});
  ScheduledOp s = ragc::apply(apply(make_scheduled(p, "O"), FuseLoops{"batch", "len"}), PadLoop{"batch.len.fused", 8});
  ASSERT_EQ(s.guards.size(), 1u);
  EXPECT_EQ(s.guards[0].kind, SGuard::Bulk);
  EXPECT_EQ(s.loops[0].fusion->bulk, 8);
  EXPECT_TRUE(s.catalog.count(s.loops[0].fusion->oif_name(s.prog)));
  EXPECT_EQ(s.catalog.size(), 3u);
}

TEST(FuseDims, SingleDependenceRule) {
  Program p = parse_program(
      "dims b, i, j;\n"
      "table lens = [2 3];\n"
      "table tri = [1 2 3];\n"
      "tensor S (b, i, j) storage [2, lens(b), tri(i)] int;\n"
      "tensor T (b, i, j) storage [2, lens(b), tri(i)] int;\n"
      "op T loops [b: 2, i: lens(b), j: tri(i)] = S[b, i, j];\n");
  ScheduledOp s = make_scheduled(p, "T");
  EXPECT_EQ(kind_of([&] { ragc::apply(s, FuseDims{"S", "b", "i"}); }), ErrorKind::SingleDepViolation);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, FuseDims{"S", "i", "j"}); }), ErrorKind::SingleDepViolation);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, FuseDims{"S", "b", "j"}); }), ErrorKind::InvalidPrimitive);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, FuseDims{"Q", "b", "i"}); }), ErrorKind::UnknownTensor);
}

TEST(FuseDims, MergesStorageDims) {
  Program p = scale_rows({3, 0, 2});
  ScheduledOp s = ragc::apply(make_scheduled(p, "O"), FuseDims{"A", "batch", "len"});
  const TensorDecl& a = s.prog.tensor("A");
  ASSERT_EQ(a.rank(), 1);
  EXPECT_EQ(a.dims[0], "batch.len");
  EXPECT_EQ(a.storage[0].size, 5);
  ASSERT_EQ(s.dim_fusions.size(), 1u);
  EXPECT_EQ(s.dim_fusions[0].tensor, "A");
}

TEST(Parallel, ReductionLoopRejected) {
  Program p = row_sum({3, 1});
  ScheduledOp s = make_scheduled(p, "R");
  EXPECT_EQ(kind_of([&] { ragc::apply(s, MarkParallel{"k", "x"}); }), ErrorKind::InvalidPrimitive);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, ThreadRemap{"b", {RemapPolicy::SortDescendingWork, {}}}); }),
            ErrorKind::NotParallel);
  ScheduledOp par = ragc::apply(apply(s, MarkParallel{"b", "x"}), ThreadRemap{"b", {RemapPolicy::SortDescendingWork, {}}});
  EXPECT_EQ(par.loops[0].parallel, "x");
  EXPECT_EQ(par.remap.kind, RemapPolicy::SortDescendingWork);
}

TEST(Remap, Examples) {
  std::vector<int64_t> w{1, 5, 3};
  EXPECT_EQ(remap_order({RemapPolicy::SortDescendingWork, {}}, w), (std::vector<int64_t>{1, 2, 0}));
  EXPECT_EQ(remap_order({}, w), (std::vector<int64_t>{0, 1, 2}));
  EXPECT_EQ(remap_order({RemapPolicy::ExplicitPermutation, {2, 0, 1}}, w), (std::vector<int64_t>{2, 0, 1}));
  EXPECT_EQ(kind_of([&] { remap_order({RemapPolicy::ExplicitPermutation, {0, 1}}, w); }), ErrorKind::BadParams);
  EXPECT_EQ(remap_order({RemapPolicy::SortDescendingWork, {}}, {2, 2, 7, 2}), (std::vector<int64_t>{2, 0, 1, 3}));
}

TEST(RemapProperty, ScalingWorkKeepsOrder) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int64_t> w(std::uniform_int_distribution<size_t>(0, 30)(rng));
    for (auto& x : w) x = std::uniform_int_distribution<int64_t>(0, 20)(rng);
    int64_t c = std::uniform_int_distribution<int64_t>(1, 1000)(rng);
    std::vector<int64_t> scaled = w;
    for (auto& x : scaled) x *= c;
    RemapPolicy desc{RemapPolicy::SortDescendingWork, {}};
    ASSERT_EQ(remap_order(desc, w), remap_order(desc, scaled));
  }
}

TEST(SplitOperation, TiledBodyAndRemainder) {
  Program p = scale_rows({10, 3, 7});
  ScheduledOp s = make_scheduled(p, "O");
  auto pieces = split_operation(s, "len", {{SplitPoint::FloorMultiple, 4}});
  ASSERT_EQ(pieces.size(), 2u);
  std::vector<Tuple> body, rest;
  std::map<std::string, int64_t> env;
  enumerate(pieces[0], p, 0, env, body);
  enumerate(pieces[1], p, 0, env, rest);
  EXPECT_EQ(body.size(), 8u + 0u + 4u);
  EXPECT_EQ(rest.size(), 2u + 3u + 3u);
  for (const auto& t : body) EXPECT_LT(t[1], (p.table("lens").at(t[0]) / 4) * 4);
  EXPECT_EQ(points_of(pieces, p), declared_space(p.ops[0], p));
}

TEST(SplitOperation, PointZeroLeavesFirstPieceEmpty) {
  Program p = scale_rows({4, 2});
  ScheduledOp s = make_scheduled(p, "O");
  auto pieces = split_operation(s, "len", {{SplitPoint::Const, 0}});
  ASSERT_EQ(pieces.size(), 2u);
  EXPECT_TRUE(points_of({pieces[0]}, p).empty());
  EXPECT_EQ(points_of({pieces[1]}, p), declared_space(p.ops[0], p));
}

TEST(SplitOperation, PointsMustIncrease) {
  Program p = scale_rows({4, 2});
  ScheduledOp s = make_scheduled(p, "O");
  using P = SplitPoint;
  EXPECT_EQ(kind_of([&] { split_operation(s, "len", {}); }), ErrorKind::NonMonotonePoints);
  EXPECT_EQ(kind_of([&] { split_operation(s, "len", {{P::Const, 3}, {P::Const, 3}}); }), ErrorKind::NonMonotonePoints);
  EXPECT_EQ(kind_of([&] { split_operation(s, "len", {{P::Const, -1}}); }), ErrorKind::NonMonotonePoints);
  EXPECT_EQ(kind_of([&] { split_operation(s, "len", {{P::FloorMultiple, 0}}); }), ErrorKind::NonMonotonePoints);
  EXPECT_EQ(kind_of([&] { split_operation(s, "len", {{P::FloorMultiple, 4}, {P::FloorMultiple, 3}}); }),
            ErrorKind::NonMonotonePoints);
  EXPECT_EQ(split_operation(s, "len", {{P::FloorMultiple, 8}, {P::FloorMultiple, 4}}).size(), 3u);
  EXPECT_EQ(split_operation(s, "len", {{P::Const, 1}, {P::Const, 3}}).size(), 3u);
}

TEST(SplitOperation, TrmmReductionSplitCannotBeFused) {
  RecipeParams hp;
  hp.n = 9;
  Program p = recipe("trmm").build(hp);
  ScheduledOp s = ragc::apply(make_scheduled(p, "C"), MarkParallel{"i", "x"});
  auto pieces = split_operation(s, "k", {{SplitPoint::FloorMultiple, 4}});
  ASSERT_EQ(pieces.size(), 2u);
  EXPECT_TRUE(pieces[0].init);
  EXPECT_FALSE(pieces[1].init);
  EXPECT_EQ(kind_of([&] { hfuse(pieces); }), ErrorKind::ReductionSplitHFuse);
  EXPECT_EQ(kind_of([&] { split_operation(s, "k", {{SplitPoint::FloorMultiple, 4}}, true); }),
            ErrorKind::ReductionSplit);
  EXPECT_EQ(kind_of([&] { schedule_program(p, "parallel i x\nsplit_op k floor:4\nhfuse\n"); }),
            ErrorKind::ReductionSplit);
  EXPECT_EQ(points_of(pieces, p), declared_space(p.ops[0], p));
}

TEST(HFuse, FusesSplitPieces) {
  Program p = scale_rows({10, 3, 7});
  ScheduledOp s = ragc::apply(make_scheduled(p, "O"), MarkParallel{"batch", "x"});
  auto pieces = split_operation(s, "batch", {{SplitPoint::Const, 1}});
  HFusedKernel k = hfuse(pieces);
  EXPECT_EQ(k.members.size(), 2u);
  auto kernels = schedule_program(p, "parallel batch x\nsplit_op len floor:4\nhfuse\n");
  ASSERT_EQ(kernels.size(), 1u);
  EXPECT_TRUE(kernels[0].hfused);
  EXPECT_EQ(kernels[0].pieces.size(), 2u);
}

TEST(HFuse, SingleOpIsIdentity) {
  Program p = scale_rows({2, 3});
  ScheduledOp s = make_scheduled(p, "O");
  HFusedKernel k = hfuse({s});
  ASSERT_EQ(k.members.size(), 1u);
  EXPECT_EQ(k.members[0], s);
}

TEST(HFuse, RequiresParallelOutermostLoop) {
  Program p = scale_rows({10, 3});
  ScheduledOp s = make_scheduled(p, "O");
  auto plain = split_operation(s, "len", {{SplitPoint::Const, 2}});
  EXPECT_EQ(kind_of([&] { hfuse(plain); }), ErrorKind::NonOutermost);
  ScheduledOp inner = ragc::apply(s, MarkParallel{"len", "y"});
  EXPECT_EQ(kind_of([&] { hfuse(split_operation(inner, "len", {{SplitPoint::Const, 2}})); }),
            ErrorKind::NonOutermost);
}

TEST(HFuse, ProducerConsumerRejected) {
  RecipeParams hp;
  hp.lens = {3, 2};
  hp.elem = ElemKind::Float64;
  Program p = recipe("ragged_softmax").build(hp);
  ScheduledOp m = ragc::apply(make_scheduled(p, p.ops[0].name), MarkParallel{p.ops[0].loops[0].dim, "x"});
  ScheduledOp o = ragc::apply(make_scheduled(p, p.ops[2].name), MarkParallel{p.ops[2].loops[0].dim, "x"});
  EXPECT_EQ(kind_of([&] { hfuse({m, o}); }), ErrorKind::DependentOps);
}

TEST(Text, PrimitivesRoundTrip) {
  std::vector<SchedulePrimitive> prims{
      SplitLoop{"len", 4},
      FuseLoops{"batch", "len"},
      ReorderLoops{{"j", "i", "k"}},
      PadLoop{"len", 32},
      PadDim{"O", "len", 64},
      SplitOperation{"seqi", {{SplitPoint::FloorMultiple, 64}, {SplitPoint::Const, 3}}},
      HFuse{{}},
      HFuse{{"a", "b"}},
      ThreadRemap{"i.outer", {RemapPolicy::SortDescendingWork, {}}},
      ThreadRemap{"b", {RemapPolicy::ExplicitPermutation, {2, 0, 1}}},
      ThreadRemap{"b", {}},
      FuseDims{"A", "batch", "len"},
      MarkParallel{"batch", "x"},
  };
  for (const auto& prim : prims) EXPECT_EQ(parse_primitive(primitive_text(prim)), prim) << primitive_text(prim);
  EXPECT_EQ(primitive_text(SplitOperation{"len", {{SplitPoint::FloorMultiple, 64}}}), "split_op len floor:64");
}

TEST(Text, BadLinesReportLineNumbers) {
  Program p = scale_rows({2, 3});
  auto expect_line = [&](const std::string& text, ErrorKind kind, const std::string& line) {
    try {
      parse_schedule(text, p);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), kind) << text;
      EXPECT_NE(std::string(e.what()).find("schedule line " + line), std::string::npos) << e.what();
    }
  };
  expect_line("pad_loop len 4\n# note\nsplit_loop len\n", ErrorKind::ParseError, "3");
  expect_line("warp len 2\n", ErrorKind::ParseError, "1");
  expect_line("\n\npad_loop len x4\n", ErrorKind::ParseError, "3");
  expect_line("op Nope\n", ErrorKind::UnknownOp, "1");
  expect_line("remap batch sideways\n", ErrorKind::BadParams, "1");
  expect_line("remap batch perm:1,x\n", ErrorKind::BadParams, "1");
}

TEST(Text, OpLinesRetarget) {
  RecipeParams hp;
  hp.lens = {3, 2};
  hp.elem = ElemKind::Float64;
  Program p = recipe("ragged_softmax").build(hp);
  std::string last = p.ops.back().name;
  ScheduleScript sc = parse_schedule("pad_loop x 2  # first op\nop " + last + "\nparallel y z\n", p);
  ASSERT_EQ(sc.lines.size(), 2u);
  EXPECT_EQ(sc.lines[0].first, p.ops[0].name);
  EXPECT_EQ(sc.lines[1].first, last);
}

TEST(Replay, LogReproducesSchedule) {
  Program p = scale_rows({5, 0, 3});
  ScheduledOp s = make_scheduled(p, "O");
  for (const auto& prim : std::vector<SchedulePrimitive>{PadLoop{"len", 4}, PadDim{"O", "len", 8},
                                                           SplitLoop{"len", 2}, MarkParallel{"batch", "x"},
                                                           ThreadRemap{"batch", {RemapPolicy::SortDescendingWork, {}}}})
    s = ragc::apply(std::move(s), prim);
  EXPECT_EQ(replay(p, "O", s.log), s);
  EXPECT_EQ(kind_of([&] { replay(p, "Q", {}); }), ErrorKind::UnknownOp);
  EXPECT_EQ(kind_of([&] { ragc::apply(s, HFuse{}); }), ErrorKind::InvalidPrimitive);
}

namespace {

// Candidate single-primitive schedules for one operator, in text form.
std::vector<std::string> candidates(const OperatorDef& op, const Program& p, std::mt19937_64& rng) {
  std::vector<std::string> out;
  auto pick = [&](int64_t lo, int64_t hi) { return std::to_string(std::uniform_int_distribution<int64_t>(lo, hi)(rng)); };
  const auto& L = op.loops;
  for (size_t k = 0; k < L.size(); ++k) {
    const std::string& d = L[k].dim;
    out.push_back("split_loop " + d + " " + pick(1, 4));
    out.push_back("pad_loop " + d + " " + pick(2, 5));
    out.push_back("split_op " + d + " " + pick(0, 3));
    out.push_back("split_op " + d + " floor:" + pick(1, 4));
    if (k + 1 < L.size()) {
      out.push_back("fuse_loops " + d + " " + L[k + 1].dim);
      out.push_back("reorder " + L[k + 1].dim + " " + d);
    }
  }
  if (!L.empty() && !L[0].reduction) {
    std::string d = L[0].dim;
    out.push_back("parallel " + d + " x\nremap " + d + " desc");
    out.push_back("parallel " + d + " x\nsplit_op " + d + " 1\nhfuse");
  }
  const TensorDecl& t = p.tensor(op.output);
  for (const auto& d : t.dims) out.push_back("pad_dim " + op.output + " " + d + " " + pick(2, 4));
  for (size_t k = 0; k + 1 < t.dims.size(); ++k)
    out.push_back("fuse_dims " + op.output + " " + t.dims[k] + " " + t.dims[k + 1]);
  return out;
}

}  // namespace

TEST(SemanticsProperty, EveryPrimitiveOnEveryRecipe) {
  std::mt19937_64 rng(23);
  std::map<std::string, int> accepted;
  for (const auto& r : recipes()) {
    for (int trial = 0; trial < 3; ++trial) {
      RecipeParams hp;
      hp.lens = random_lens(rng, 4, 7);
      hp.lens2 = hp.lens;
      std::reverse(hp.lens2.begin(), hp.lens2.end());
      hp.heads = 2;
      hp.head_dim = 2;
      hp.n = std::uniform_int_distribution<int64_t>(1, 7)(rng);
      hp.tile = 2;
      hp.elem = r.float_only ? ElemKind::Float64 : ElemKind::Int64;
      Program p = r.build(hp);
      auto in = random_inputs(p, rng());
      for (const auto& op : p.ops) {
        for (const auto& line : candidates(op, p, rng)) {
          std::string script = "op " + op.name + "\n" + line + "\n";
          CompiledProgram c;
          try {
            c = compile_program(p, script);
          } catch (const Error&) {
            continue;  // illegal for this operator
          }
          SCOPED_TRACE(r.name + ": " + script);
          ++accepted[line.substr(0, line.find(' '))];
          auto cmp = check_against_oracle(c, in, execute(c, in, 2).buffers);
          ASSERT_TRUE(within_tolerance(cmp, hp.elem)) << cmp.max_abs_err;
        }
      }
    }
  }
  for (const char* prim : {"split_loop", "pad_loop", "split_op", "fuse_loops", "reorder", "parallel", "pad_dim",
                           "fuse_dims"})
    EXPECT_GT(accepted[prim], 0) << prim;
}

TEST(ReplayProperty, SameLogSameSchedule) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    Program p = scale_rows(random_lens(rng, 5, 6));
    ScheduledOp s = make_scheduled(p, "O");
    for (const auto& line : candidates(p.ops[0], p, rng)) {
      if (std::uniform_int_distribution<int>(0, 2)(rng) != 0) continue;
      if (line.find('\n') != std::string::npos || line.rfind("split_op", 0) == 0) continue;
      try {
        s = ragc::apply(s, parse_primitive(line));
      } catch (const Error&) {
      }
    }
    ASSERT_EQ(replay(p, "O", s.log), s);
    ASSERT_EQ(replay(p, "O", s.log), replay(p, "O", s.log));
  }
}

TEST(PartitionProperty, SplitPiecesCoverIterationSpace) {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 400; ++trial) {
    bool reduce = trial % 2 == 1;
    Program p = reduce ? row_sum(random_lens(rng, 8, 30)) : scale_rows(random_lens(rng, 8, 30));
    const OperatorDef& op = p.ops[0];
    ScheduledOp s = make_scheduled(p, op.name);
    if (std::uniform_int_distribution<int>(0, 1)(rng))
      s = ragc::apply(s, SplitLoop{op.loops[1].dim, std::uniform_int_distribution<int64_t>(1, 5)(rng)});
    std::string loop = s.loops[std::uniform_int_distribution<size_t>(0, s.loops.size() - 1)(rng)].var;
    std::vector<SplitPoint> pts;
    int64_t at = 0;
    for (int k = std::uniform_int_distribution<int>(1, 3)(rng); k > 0; --k) {
      at += std::uniform_int_distribution<int64_t>(k == 3 ? 0 : 1, 6)(rng);
      pts.push_back({SplitPoint::Const, at});
    }
    if (std::uniform_int_distribution<int>(0, 1)(rng)) pts = {{SplitPoint::FloorMultiple, std::uniform_int_distribution<int64_t>(1, 8)(rng)}};
    auto pieces = split_operation(s, loop, pts);
    ASSERT_EQ(pieces.size(), pts.size() + 1);
    auto space = declared_space(op, p);
    ASSERT_LE(space.size(), 10000u);
    ASSERT_EQ(points_of(pieces, p), space) << loop;
  }
}
