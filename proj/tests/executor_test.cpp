#include <gtest/gtest.h>

#include <random>

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
                       ex::mul(ex::cstf(2.0), ex::read("A", {ex::var("batch"), ex::var("len")})),
                       "O"});
  return p;
}

TensorValues counting_input(const Program& p, const std::string& name) {
  TensorValues in;
  in[name] = DenseArray(p.tensor(name).elem, dense_shape(p.tensor(name), p));
  double v = 1;
  for_each_valid_index(p.tensor(name), p, [&](const std::vector<int64_t>& idx) { in[name].set(idx, Value::of_float(v++)); });
  return in;
}

std::vector<double> doubles(const std::vector<Value>& v) {
  std::vector<double> out;
  for (const auto& x : v) out.push_back(x.as_double());
  return out;
}

// Oracle: event-driven list scheduling. Workers are released in finish-time
// order and a freed worker takes the next block from the queue.
int64_t list_schedule(const std::vector<int64_t>& works, const std::vector<int64_t>& order, int W) {
  std::vector<std::pair<int64_t, int>> free_at;  // (time, worker)
  for (int w = 0; w < W; ++w) free_at.push_back({0, w});
  int64_t end = 0;
  for (int64_t b : order) {
    std::sort(free_at.begin(), free_at.end());
    auto& slot = free_at.front();
    slot.first += works[static_cast<size_t>(b)];
    end = std::max(end, slot.first);
  }
  return end;
}

std::vector<int64_t> descending(const std::vector<int64_t>& works) {
  std::vector<int64_t> ids(works.size());
  for (size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<int64_t>(k);
  // Insertion sort keeps equal works in id order.
  for (size_t a = 1; a < ids.size(); ++a)
    for (size_t b = a; b > 0 && works[static_cast<size_t>(ids[b])] > works[static_cast<size_t>(ids[b - 1])]; --b)
      std::swap(ids[b], ids[b - 1]);
  return ids;
}

}  // namespace

TEST(Interpret, ScaleRowsDoubles) {
  Program p = scale_rows({2, 1, 3});
  auto c = compile_program(p, "");
  auto in = counting_input(p, "A");
  auto ex = execute(c, in);
  EXPECT_EQ(doubles(logical_values(c, ex.buffers, "O")), (std::vector<double>{2, 4, 6, 8, 10, 12}));
  EXPECT_EQ(ex.stats.flops, 6);
}

TEST(Interpret, EmptyBatch) {
  Program p = scale_rows({});
  auto c = compile_program(p, "");
  auto ex = execute(c, {});
  EXPECT_EQ(ex.buffers.at("O").size(), 0);
  EXPECT_EQ(ex.stats.flops, 0);
}

TEST(Interpret, OutOfRangeStoreIsAnError) {
  Program p = scale_rows({2});
  LoopNest nest;
  nest.name = "bad";
  nest.output = "O";
  Stmt s;
  s.kind = Stmt::Store;
  s.buffer = "O";
  s.offset = ex::cst(2);
  s.value = ex::cstf(1.0);
  nest.body = {s};
  Buffers b = allocate_buffers(p);
  try {
    interpret(nest, b, p, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfRangeAccess);
  }
}

TEST(Interpret, UnboundVariable) {
  Program p = scale_rows({2});
  LoopNest nest;
  Stmt s;
  s.kind = Stmt::Store;
  s.buffer = "O";
  s.offset = ex::var("nowhere");
  s.value = ex::cstf(1.0);
  nest.body = {s};
  Buffers b = allocate_buffers(p);
  try {
    interpret(nest, b, p, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnboundVariable);
  }
}

TEST(Interpret, ScheduledVariantsAgreeAndAreDeterministic) {
  Program p = scale_rows({5, 0, 7, 3});
  auto in = random_inputs(p, 3);
  for (const char* sched : {"", "fuse_loops batch len\npad_loop batch.len.fused 4\nparallel batch.len.fused x\n",
                            "pad_loop len 2\nparallel batch x\nremap batch desc\n", "split_loop len 2\n",
                            "pad_dim O len 4\npad_loop len 4\n"}) {
    SCOPED_TRACE(sched);
    auto c = compile_program(p, sched);
    auto a = execute(c, in, 3);
    auto b = execute(c, in, 3);
    auto cmp = check_against_oracle(c, in, a.buffers);
    EXPECT_TRUE(cmp.bitwise_equal);
    EXPECT_EQ(cmp.elements, 15);
    EXPECT_EQ(a.buffers.at("O").f, b.buffers.at("O").f);
    EXPECT_EQ(a.stats.makespan, b.stats.makespan);
    EXPECT_EQ(a.stats.table_reads, b.stats.table_reads);
    EXPECT_EQ(a.stats.flops, 15);
  }
}

TEST(Simulate, HandInstances) {
  EXPECT_EQ(simulate_parallel({8, 1, 1}, 2, {}).makespan, 8);
  EXPECT_EQ(simulate_parallel({8, 1, 1}, 2, {RemapPolicy::SortDescendingWork, {}}).makespan, 8);
  std::vector<int64_t> works{5, 4, 3, 3, 3};
  EXPECT_EQ(simulate_parallel(works, 2, {}).makespan, list_schedule(works, {0, 1, 2, 3, 4}, 2));
  EXPECT_EQ(simulate_parallel(works, 2, {}).makespan, 10);
  EXPECT_EQ(simulate_parallel(works, 2, {RemapPolicy::SortDescendingWork, {}}).makespan,
            list_schedule(works, descending(works), 2));
}

TEST(Simulate, RemapOrder) {
  EXPECT_EQ(remap_order({RemapPolicy::SortDescendingWork, {}}, {1, 5, 3}), (std::vector<int64_t>{1, 2, 0}));
  EXPECT_EQ(remap_order({RemapPolicy::ExplicitPermutation, {2, 0, 1}}, {1, 5, 3}), (std::vector<int64_t>{2, 0, 1}));
  EXPECT_THROW(remap_order({RemapPolicy::ExplicitPermutation, {0, 0, 1}}, {1, 5, 3}), Error);
}

TEST(SimulateProperty, BoundsAndConservation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    int n = std::uniform_int_distribution<int>(1, 40)(rng);
    int W = std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<int64_t> works;
    for (int k = 0; k < n; ++k) works.push_back(std::uniform_int_distribution<int64_t>(0, 100)(rng));
    for (auto kind : {RemapPolicy::Identity, RemapPolicy::SortDescendingWork}) {
      RunStats st = simulate_parallel(works, W, {kind, {}});
      int64_t total = 0, biggest = 0;
      for (auto w : works) {
        total += w;
        biggest = std::max(biggest, w);
      }
      int64_t sum = 0;
      for (auto w : st.worker_work) sum += w;
      ASSERT_EQ(sum, total);
      ASSERT_GE(st.makespan * W, total);
      ASSERT_GE(st.makespan, biggest);
      auto order = kind == RemapPolicy::Identity ? std::vector<int64_t>{} : descending(works);
      if (order.empty())
        for (int k = 0; k < n; ++k) order.push_back(k);
      ASSERT_EQ(st.makespan, list_schedule(works, order, W));
    }
  }
}

TEST(HFused, SplitPairMatchesSequentialAndUnsplit) {
  Program p = scale_rows({3, 1, 4, 1, 5});
  auto in = random_inputs(p, 9);
  auto plain = compile_program(p, "");
  auto split = compile_program(p, "parallel batch x\nsplit_op batch 2\n");
  auto fused = compile_program(p, "parallel batch x\nsplit_op batch 2\nhfuse\n");
  ASSERT_TRUE(fused.kernels[0].hfused);
  ASSERT_EQ(fused.nests[0].size(), 2u);
  auto a = execute(plain, in), b = execute(split, in, 2), c = execute(fused, in, 2);
  EXPECT_EQ(a.buffers.at("O").f, b.buffers.at("O").f);
  EXPECT_EQ(a.buffers.at("O").f, c.buffers.at("O").f);
  EXPECT_EQ(c.per_kernel.size(), 1u);
  EXPECT_EQ(c.stats.block_work.size(), 5u);
}

TEST(HFused, SingleMemberMatchesInterpret) {
  Program p = scale_rows({2, 3});
  auto c = compile_program(p, "parallel batch x\n");
  auto in = random_inputs(p, 1);
  Buffers b1 = execute(c, in).buffers, b2 = b1;
  RunStats s1 = interpret(c.nests[0][0], b1, c.storage, c.prelude);
  RunStats s2 = run_hfused({c.nests[0][0]}, b2, c.storage, c.prelude);
  EXPECT_EQ(s1.flops, s2.flops);
  EXPECT_EQ(s1.table_reads, s2.table_reads);
  EXPECT_EQ(s1.block_work, s2.block_work);
  EXPECT_EQ(b1.at("O").f, b2.at("O").f);
}

TEST(DenseOracle, ScaleRowsValidRegion) {
  Program p = scale_rows({2, 1, 3});
  auto ref = dense_oracle(p, counting_input(p, "A"));
  const DenseArray& o = ref.at("O");
  EXPECT_EQ(o.shape, (std::vector<int64_t>{3, 3}));
  EXPECT_EQ(o.f, (std::vector<double>{2, 4, 0, 6, 0, 0, 8, 10, 12}));
}

TEST(DenseOracle, EqualLengthsMatchEverywhere) {
  Program p = scale_rows({3, 3, 3});
  auto in = random_inputs(p, 4);
  auto c = compile_program(p, "");
  auto ex = execute(c, in);
  EXPECT_EQ(ex.buffers.at("O").f, dense_oracle(p, in).at("O").f);
}

TEST(Buffers, SizesMatchTotalSize) {
  Program p = scale_rows({2, 1, 3});
  Buffers b = allocate_buffers(p);
  EXPECT_EQ(b.at("A").size(), 6);
  EXPECT_THROW(b.at("A").get(6), Error);
  EXPECT_THROW(b.at("A").get(-1), Error);
}
