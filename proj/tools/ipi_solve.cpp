// Command-line front end: load or generate an MDP, solve it, write artifacts.
//
// Exit codes: 0 converged, 2 not converged (artifacts still written),
// 1 usage, validation or I/O error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ipi/ipi.hpp"

namespace {

struct CliConfig {
  std::string input;
  std::string generator;
  ipi::index_t n = 0;
  ipi::index_t actions = 1;
  std::string method = "ipi";
  std::string inner = "gmres";
  ipi::SolveOptions opts;
  std::size_t workers = 0;
  std::optional<double> gamma;
  std::string out_dir;
  std::string save_mdp;
};

ipi::Mdp load_model(const CliConfig& cfg, std::size_t workers) {
  if (!cfg.input.empty()) return ipi::read_mdp(cfg.input);
  if (cfg.generator == "e1") return ipi::make_e1();
  if (cfg.n < 1) throw ipi::ValidationError("--gen chain requires --n N with N >= 1");
  ipi::Executor exec(cfg.n, workers);
  return ipi::make_chain(cfg.n, cfg.actions, 0.9, exec);
}

int run(int argc, char** argv) {
  CLI::App app{"Solve a discounted MDP with value iteration, policy iteration, modified or inexact policy iteration"};
  CliConfig cfg;
  auto& o = cfg.opts;

  auto* input = app.add_option("--input", cfg.input, "MDPB file to load")->check(CLI::ExistingFile);
  auto* gen = app.add_option("--gen", cfg.generator, "Builtin generator")
                  ->check(CLI::IsMember({"chain", "e1"}));
  input->excludes(gen);
  gen->excludes(input);
  app.add_option("--n", cfg.n, "State count for --gen chain")->check(CLI::PositiveNumber);
  app.add_option("--actions", cfg.actions, "Action count for --gen chain")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--method", cfg.method, "Outer method")
      ->check(CLI::IsMember({"vi", "pi", "mpi", "ipi"}))
      ->capture_default_str();
  app.add_option("--inner", cfg.inner, "Inner solver for ipi")
      ->check(CLI::IsMember({"richardson", "gmres"}))
      ->capture_default_str();
  app.add_option("--alpha", o.alpha, "Inexactness forcing factor in [0, 1)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--tol", o.tol, "Outer tolerance on ||TV - V||_inf")->capture_default_str();
  app.add_option("--max-outer", o.max_outer, "Outer iteration cap")->capture_default_str();
  app.add_option("--max-inner", o.max_inner, "Inner iteration cap")->capture_default_str();
  app.add_option("--mpi-steps", o.mpi_steps, "Richardson sweeps per mpi iteration")->capture_default_str();
  app.add_option("--gmres-restart", o.gmres_restart, "GMRES restart length")->capture_default_str();
  app.add_option("--workers", cfg.workers, "Worker count (default: available parallelism)")
      ->check(CLI::PositiveNumber);
  app.add_option("--gamma", cfg.gamma, "Override the discount factor after loading");
  app.add_option("--out", cfg.out_dir, "Directory for value.txt, policy.txt and stats.json");
  app.add_option("--save-mdp", cfg.save_mdp, "Also write the loaded or generated model as MDPB");

  try {
    app.parse(argc, argv);
    if (cfg.input.empty() && cfg.generator.empty())
      throw CLI::RequiredError("exactly one of --input or --gen");
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 1;
  }

  o.method = *ipi::parse_method(cfg.method);
  o.inner = *ipi::parse_inner(cfg.inner);
  o.workers = cfg.workers == 0 ? ipi::default_worker_count() : cfg.workers;

  try {
    ipi::validate_options(o);
    ipi::Mdp mdp = load_model(cfg, o.workers);
    if (cfg.gamma) {
      mdp.gamma = *cfg.gamma;
      ipi::require_valid(mdp);
    }
    if (!cfg.save_mdp.empty()) ipi::write_mdp(cfg.save_mdp, mdp);

    ipi::Executor exec(mdp.n, o.workers);
    const auto result = ipi::solve_unchecked(mdp, o, {}, exec);
    if (!cfg.out_dir.empty()) ipi::write_solution(cfg.out_dir, result, o);

    const auto& st = result.stats;
    std::printf("method=%s inner=%s states=%lld actions=%lld workers=%zu\n",
                std::string(ipi::to_string(o.method)).c_str(),
                std::string(ipi::to_string(o.inner)).c_str(), static_cast<long long>(mdp.n),
                static_cast<long long>(mdp.m), o.workers);
    std::printf("converged=%s outer_iterations=%lld residual=%.6e bound=%.6e time=%.3fs\n",
                st.converged ? "true" : "false", static_cast<long long>(st.outer_iterations),
                st.residual_history.back(), st.suboptimality_bound, st.wall_time);
    if (!st.converged) {
      std::fprintf(stderr, "not converged after %lld outer iterations\n",
                   static_cast<long long>(st.outer_iterations));
      return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
