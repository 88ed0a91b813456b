#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "loopspace/cli.hpp"

using loopspace::cli::RunConfig;

namespace {

void add_common(CLI::App *sub, RunConfig &c) {
  sub->add_option("--seed", c.seed, "Random seed")->default_val(0);
  sub->add_option("--format", c.format, "Report format")
      ->check(CLI::IsMember({"text", "json"}))
      ->default_val("text");
  sub->add_option("--out", c.out, "Output path");
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Piecewise-constant loops: occupation fields, distances, "
               "discretization and reconstruction"};
  app.require_subcommand(1);
  RunConfig c;

  auto *gen = app.add_subcommand("generate", "Write a random loop");
  add_common(gen, c);
  gen->add_option("--segments", c.segments, "Number of segments")
      ->default_val(4);
  gen->add_option("--labels", c.labels, "Alphabet size (finite space)")
      ->default_val(3);
  gen->add_option("--dim", c.dim, "Euclidean dimension (0 for finite)")
      ->default_val(0);

  auto *occ = app.add_subcommand("occupation", "Multi-occupation time");
  add_common(occ, c);
  occ->add_option("--loop", c.loop, "Loop file")->required();
  occ->add_option("--pattern", c.pattern,
                  "Labels 'x,y,x' or boxes '0,0:1,1; 2,0:3,1'");

  auto *dist = app.add_subcommand("distance", "Distance between two loops");
  add_common(dist, c);
  dist->add_option("--a", c.a, "First loop file")->required();
  dist->add_option("--b", c.b, "Second loop file")->required();
  dist->add_flag("--quotient", c.quotient,
                 "Distance between rotation classes instead of based loops");
  dist->add_option("--witness", c.witness,
                   "Write the optimal reparametrization here");

  auto *disc = app.add_subcommand("discretize", "Induced discrete loop");
  add_common(disc, c);
  disc->add_option("--loop", c.loop, "Loop file")->required();
  disc->add_option("--eps", c.eps, "Cell diameter bound")->required();
  disc->add_option("--report", c.report,
                   "Sidecar report path (default: <out>.report.json)");
  disc->add_option("--b", c.b, "Second loop for the offset experiment");
  disc->add_option("--eps-ladder", c.eps_ladder,
                   "Decreasing eps values, e.g. '0.5,0.25,0.125'");
  disc->add_option("--tol", c.tol, "Relative tolerance of the trace check");

  auto *rec = app.add_subcommand("reconstruct", "Recover a loop from a field");
  add_common(rec, c);
  rec->add_option("--loop", c.loop, "Loop file used as its own oracle");
  rec->add_option("--table", c.table, "Recorded field table");
  rec->add_option("--qmax", c.qmax, "Largest word length tried")
      ->default_val(6);
  rec->add_option("--tol", c.tol, "Acceptance residual");

  auto *ver = app.add_subcommand("verify", "Run property campaigns");
  add_common(ver, c);
  ver->add_option("--suite", c.suite, "Suite name or 'all'")->default_val("all");
  ver->add_option("--trials", c.trials, "Trials per suite");
  ver->add_option("--samples", c.samples, "Monte Carlo samples per trial");
  ver->add_option("--tol", c.tol, "Tolerance override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;
  }
  c.command = app.get_subcommands().front()->get_name();

  const auto result = loopspace::cli::run(c);
  if (!result.error.empty())
    std::cerr << result.error << "\n";
  std::fwrite(result.report.data(), 1, result.report.size(), stdout);
  return result.exit_code();
}
