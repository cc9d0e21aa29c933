#include <CLI11.hpp>

#include "ragc_commands.hpp"

using ragc::cli::Options;

namespace {

void program_flags(CLI::App* app, Options& o) {
  app->add_option("--op", o.op, "recipe name or op file")->required();
  app->add_option("--lens", o.lens, "length file; op files also accept table=path");
  app->add_option("--lens2", o.lens2, "second length file (vgemm column counts)");
  app->add_option("--schedule", o.schedule, "schedule file");
  app->add_option("--variant", o.variant, "named schedule variant of a recipe");
  app->add_option("--heads", o.heads, "attention heads");
  app->add_option("--head-dim", o.head_dim, "attention head size");
  app->add_option("--k", o.k, "vgemm reduction size");
  app->add_option("--n", o.n, "trmm matrix size");
  app->add_option("--tile", o.tile, "split tile");
  app->add_option("--elem", o.elem, "element type")->check(CLI::IsMember({"int", "float"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ragged tensor compiler driver"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-lengths", "write a seeded length file");
  gen->add_option("--dist", o.dist, "uniform, uniform-multiple or fixed");
  gen->add_option("--lo", o.lo, "smallest length");
  gen->add_option("--hi", o.hi, "largest length");
  gen->add_option("--multiple", o.multiple, "granularity for uniform-multiple");
  gen->add_option("--value", o.value, "length for fixed");
  gen->add_option("--count", o.count, "number of lengths")->required();
  gen->add_option("--seed", o.seed, "RNG seed");
  gen->add_option("--out", o.out, "output path (default stdout)");

  auto* lower = app.add_subcommand("lower", "print the lowered loop nests");
  program_flags(lower, o);
  lower->add_option("--emit", o.emit, "ir or c")->check(CLI::IsMember({"ir", "c"}));
  lower->add_option("--out", o.out, "output path (default stdout)");

  auto* run = app.add_subcommand("run", "execute a program and print stats and outputs");
  program_flags(run, o);
  run->add_option("--input", o.inputs, "tensor file with input values");
  run->add_option("--seed", o.seed, "seed for inputs not given by --input");
  run->add_option("--workers", o.workers, "simulated workers");
  run->add_option("--remap", o.remap, "identity, desc or perm:<list>");
  run->add_flag("--check", o.check, "compare with the dense oracle");
  run->add_option("--out", o.out, "output tensor file (default stdout)");

  auto* bench = app.add_subcommand("bench", "one CSV row per schedule variant of a recipe");
  program_flags(bench, o);
  bench->add_option("--pad-loop", o.pad_loop, "loop pad for the overhead model");
  bench->add_option("--pad-dim", o.pad_dim, "storage pad; must be a multiple of --pad-loop");
  bench->add_option("--bulk-pad", o.bulk_pad, "bulk pad for the overhead model");
  bench->add_option("--workers", o.workers, "simulated workers");
  bench->add_option("--remap", o.remap, "policy for the remapped makespan (default desc)");
  bench->add_option("--seed", o.seed, "input seed");
  bench->add_option("--out", o.out, "CSV path (default stdout)");

  auto* stats = app.add_subcommand("prelude-stats", "prelude structures and aux entry counts");
  program_flags(stats, o);
  stats->add_option("--out", o.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : ragc::cli::kExitInvalid;
  }

  return ragc::cli::guarded(std::cerr, [&] {
    if (*gen) return ragc::cli::cmd_gen_lengths(o, std::cout);
    if (*lower) return ragc::cli::cmd_lower(o, std::cout);
    if (*run) return ragc::cli::cmd_run(o, std::cout, std::cerr);
    if (*bench) return ragc::cli::cmd_bench(o, std::cout);
    return ragc::cli::cmd_prelude_stats(o, std::cout);
  });
}
