#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ragc/core_ir.hpp"
#include "ragc/parser.hpp"

using namespace ragc;

namespace {

Program scale_rows(std::vector<int64_t> lens = {2, 1, 3}) {
  Program p;
  p.add_dim("batch");
  p.add_dim("len");
  p.add_table({"lens", lens});
  auto bs = static_cast<int64_t>(lens.size());
  declare_tensor(p, "A", {"batch", "len"}, {Extent::fixed(bs), Extent::on("batch", "lens")});
  declare_tensor(p, "O", {"batch", "len"}, {Extent::fixed(bs), Extent::on("batch", "lens")});
  OperatorDef op;
  op.name = op.output = "O";
  op.loops = {{"batch", Extent::fixed(bs), false}, {"len", Extent::on("batch", "lens"), false}};
  op.body = ex::mul(ex::cst(2), ex::read("A", {ex::var("batch"), ex::var("len")}));
  declare_operator(p, op);
  return p;
}

ErrorKind error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::Unsupported;
}

}  // namespace

TEST(CoreIr, ScaleRowsDeclaresOneVloop) {
  Program p = scale_rows();
  ASSERT_EQ(p.ops.size(), 1u);
  auto kinds = classify_loops(p.ops[0]);
  EXPECT_EQ(kinds, (std::vector<LoopKind>{LoopKind::CLoop, LoopKind::VLoop}));
  EXPECT_EQ(classify_dims(p.tensor("A")), (std::vector<DimKind>{DimKind::CDim, DimKind::VDim}));
}

TEST(CoreIr, DenseOperatorHasNoVloops) {
  Program p;
  p.add_dim("i");
  p.add_dim("j");
  declare_tensor(p, "A", {"i", "j"}, {Extent::fixed(3), Extent::fixed(4)});
  declare_tensor(p, "O", {"i", "j"}, {Extent::fixed(3), Extent::fixed(4)});
  OperatorDef op{"O", {{"i", Extent::fixed(3)}, {"j", Extent::fixed(4)}}, Combiner::Assign,
                 ex::read("A", {ex::var("i"), ex::var("j")}), "O"};
  declare_operator(p, op);
  for (auto k : classify_loops(p.ops[0])) EXPECT_EQ(k, LoopKind::CLoop);
}

TEST(CoreIr, InnerDependenceRejected) {
  Program p;
  p.add_dim("a");
  p.add_dim("b");
  p.add_table({"t", {1, 2, 3}});
  declare_tensor(p, "O", {"a", "b"}, {Extent::fixed(3), Extent::fixed(3)});
  OperatorDef op{"O", {{"a", Extent::on("b", "t")}, {"b", Extent::fixed(3)}}, Combiner::Assign,
                 ex::cst(1), "O"};
  EXPECT_EQ(error_of([&] { declare_operator(p, op); }), ErrorKind::InnerDependence);
  op.loops[0].extent = Extent::on("a", "t");
  EXPECT_EQ(error_of([&] { declare_operator(p, op); }), ErrorKind::InnerDependence);
}

TEST(CoreIr, UnknownDimAndArityErrors) {
  Program p = scale_rows();
  OperatorDef op = p.ops[0];
  op.name = "O2";
  op.loops[1].extent = Extent::on("nope", "lens");
  EXPECT_EQ(error_of([&] { declare_operator(p, op); }), ErrorKind::UnknownDim);

  op = p.ops[0];
  op.name = "O3";
  op.body = ex::read("A", {ex::var("batch")});
  EXPECT_EQ(error_of([&] { declare_operator(p, op); }), ErrorKind::ArityMismatch);

  op = p.ops[0];
  op.name = "O4";
  op.loops[1].extent = Extent::on("batch", "missing");
  EXPECT_EQ(error_of([&] { declare_operator(p, op); }), ErrorKind::MissingTable);
}

TEST(CoreIr, TrmmReductionLoopIsVloop) {
  Program p;
  for (auto d : {"i", "j", "k"}) p.add_dim(d);
  p.add_table({"rowlen", {1, 2, 3, 4}});
  declare_tensor(p, "A", {"i", "k"}, {Extent::fixed(4), Extent::on("i", "rowlen")});
  declare_tensor(p, "B", {"k", "j"}, {Extent::fixed(4), Extent::fixed(4)});
  declare_tensor(p, "C", {"i", "j"}, {Extent::fixed(4), Extent::fixed(4)});
  OperatorDef op{"C",
                 {{"i", Extent::fixed(4)}, {"j", Extent::fixed(4)}, {"k", Extent::on("i", "rowlen"), true}},
                 Combiner::Sum,
                 ex::mul(ex::read("A", {ex::var("i"), ex::var("k")}), ex::read("B", {ex::var("k"), ex::var("j")})),
                 "C"};
  declare_operator(p, op);
  EXPECT_EQ(classify_loops(p.ops[0])[2], LoopKind::VLoop);
}

TEST(CoreIr, ReductionNeedsCombiner) {
  Program p = scale_rows();
  OperatorDef op = p.ops[0];
  op.name = "X";
  op.combine = Combiner::Sum;
  EXPECT_EQ(error_of([&] { declare_operator(p, op); }), ErrorKind::InvalidDecl);
}

TEST(CoreIr, ParsesScaleRowsText) {
  const char* text = R"(
    # Doubling operator
    dims batch, len;
    table lens = [2 1 3];
    tensor A (batch, len) storage [size(lens), lens(batch)] float;
    tensor O (batch, len) storage [3, lens(batch)] pad [1, 64] float;
    op O loops [batch: 3, len: lens(batch)] = 2 * A[batch, len];
  )";
  Program p = parse_program(text);
  EXPECT_EQ(p.ops[0], scale_rows().ops[0]);
  EXPECT_EQ(p.tensor("O").pad, (std::vector<int64_t>{1, 64}));
}

TEST(CoreIr, ParseErrorCarriesPosition) {
  try {
    parse_program("dims a;\ntensor A (a) storage [3 float;");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("2:"), std::string::npos) << e.what();
  }
}

TEST(CoreIr, InputTablesAreBoundByCaller) {
  const char* text = "dims b, l; table lens = input; tensor A (b, l) storage [size(lens), lens(b)];";
  EXPECT_EQ(error_of([&] { parse_program(text); }), ErrorKind::ParseError);
  Program p = parse_program(text, {{"lens", LengthTable{"lens", {4, 5}}}});
  EXPECT_EQ(p.tensor("A").storage[0].size, 2);
}

namespace {

// Random program: a chain of dims where each Varying extent depends on an earlier dim.
Program random_program(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rank_d(1, 4), coin(0, 1), len_d(0, 6);
  Program p;
  int rank = rank_d(rng);
  std::vector<std::string> dims;
  for (int d = 0; d < rank; ++d) dims.push_back(p.add_dim("d" + std::to_string(d)).label);
  std::vector<Extent> ext;
  int tables = 0;
  for (int d = 0; d < rank; ++d) {
    if (d > 0 && coin(rng)) {
      int dep = std::uniform_int_distribution<int>(0, d - 1)(rng);
      std::string name = "t" + std::to_string(tables++);
      LengthTable t{name, {}};
      for (int k = 0; k < 8; ++k) t.values.push_back(len_d(rng));
      p.add_table(t);
      ext.push_back(Extent::on(dims[static_cast<size_t>(dep)], name));
    } else {
      ext.push_back(Extent::fixed(std::uniform_int_distribution<int64_t>(1, 8)(rng)));
    }
  }
  std::vector<int64_t> pad;
  for (int d = 0; d < rank; ++d) pad.push_back(coin(rng) ? 1 : 2);
  // Pads on dims with dependents would need longer tables; keep those at 1.
  for (int d = 0; d < rank; ++d)
    for (const auto& e : ext)
      if (e.varying && e.dep == dims[static_cast<size_t>(d)]) pad[static_cast<size_t>(d)] = 1;
  declare_tensor(p, "In", dims, ext, coin(rng) ? ElemKind::Int64 : ElemKind::Float64, pad);
  declare_tensor(p, "Out", dims, ext);
  OperatorDef op;
  op.name = op.output = "Out";
  for (int d = 0; d < rank; ++d) op.loops.push_back({dims[static_cast<size_t>(d)], ext[static_cast<size_t>(d)], false});
  std::vector<Expr> idx;
  for (const auto& d : dims) idx.push_back(ex::var(d));
  op.body = ex::add(ex::mul(ex::cstf(-1.5), ex::read("In", idx)),
                    ex::max(ex::var(dims[0]), ex::exp(ex::cst(-2))));
  declare_operator(p, op);
  return p;
}

}  // namespace

TEST(CoreIrProperty, PrintParseRoundTrip) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    Program p = random_program(rng);
    std::string text = print_program(p);
    Program q = parse_program(text);
    ASSERT_EQ(p, q) << text;
    ASSERT_EQ(print_program(q), text);
  }
}

TEST(CoreIrProperty, DependencesPointOutward) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    Program p = random_program(rng);
    const auto& op = p.ops[0];
    for (size_t k = 0; k < op.loops.size(); ++k) {
      if (!op.loops[k].extent.varying) continue;
      int dep = op.loop_index(op.loops[k].extent.dep);
      ASSERT_GE(dep, 0);
      ASSERT_LT(static_cast<size_t>(dep), k);
    }
  }
}

TEST(CoreIrProperty, ClassificationIgnoresTableValues) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Program p = random_program(rng);
    auto before = classify_loops(p.ops[0]);
    for (auto& [name, t] : p.tables) std::shuffle(t.values.begin(), t.values.end(), rng);
    EXPECT_EQ(classify_loops(p.ops[0]), before);
  }
}
