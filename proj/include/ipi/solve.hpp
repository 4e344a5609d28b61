#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linear_solvers.hpp"
#include "mdp.hpp"
#include "parallel.hpp"
#include "types.hpp"

namespace ipi {

enum class Method { vi, pi, mpi, ipi };
enum class InnerSolver { richardson, gmres };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::vi: return "vi";
    case Method::pi: return "pi";
    case Method::mpi: return "mpi";
    case Method::ipi: return "ipi";
  }
  return "?";
}

inline std::string_view to_string(InnerSolver s) {
  return s == InnerSolver::gmres ? "gmres" : "richardson";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "vi") return Method::vi;
  if (s == "pi") return Method::pi;
  if (s == "mpi") return Method::mpi;
  if (s == "ipi") return Method::ipi;
  return std::nullopt;
}

inline std::optional<InnerSolver> parse_inner(std::string_view s) {
  if (s == "richardson") return InnerSolver::richardson;
  if (s == "gmres") return InnerSolver::gmres;
  return std::nullopt;
}

/// Smallest relative tolerance ever requested from an inner solver.
inline constexpr double inner_tolerance_floor = 1e-14;

struct SolveOptions {
  Method method = Method::ipi;
  InnerSolver inner = InnerSolver::gmres;
  double alpha = 0.1;  // forcing factor: inner tau_k = max(alpha * min(1, r_k), 1e-14)
  double tol = 1e-8;   // outer stop on ||TV - V||_inf
  index_t max_outer = 10000;
  index_t max_inner = 1000;
  index_t mpi_steps = 50;
  index_t gmres_restart = 30;
  std::size_t workers = 0;  // 0 selects the available hardware parallelism

  friend bool operator==(const SolveOptions&, const SolveOptions&) = default;
};

inline void validate_options(const SolveOptions& o) {
  std::string bad;
  if (!(o.tol > 0.0)) bad += "tol must be positive; ";
  if (!(o.alpha >= 0.0 && o.alpha < 1.0)) bad += "alpha must lie in [0, 1); ";
  if (o.max_outer < 1) bad += "max_outer must be at least 1; ";
  if (o.max_inner < 1) bad += "max_inner must be at least 1; ";
  if (o.mpi_steps < 1) bad += "mpi_steps must be at least 1; ";
  if (o.gmres_restart < 1) bad += "gmres_restart must be at least 1; ";
  if (!bad.empty()) throw ValidationError("invalid solve options: " + bad);
}

struct SolveStats {
  index_t outer_iterations = 0;
  std::vector<index_t> inner_iterations_per_outer;
  /// Relative Euclidean tolerance handed to the inner solver, one per outer
  /// iteration; 0 for methods without a residual-controlled inner solve.
  std::vector<double> inner_tolerance_per_outer;
  /// ||TV_k - V_k||_inf for k = 0..outer_iterations.
  std::vector<double> residual_history;
  double wall_time = 0.0;
  bool converged = false;
  /// gamma / (1 - gamma) times the last residual; bounds ||value - V*||_inf.
  double suboptimality_bound = 0.0;
  std::string outer_norm = "inf";
  std::string inner_norm = "l2";
};

struct SolveResult {
  Vector value;
  Policy policy;
  SolveStats stats;
};

class NotConverged : public Error {
 public:
  explicit NotConverged(SolveResult result)
      : Error("not converged after " + std::to_string(result.stats.outer_iterations) +
              " outer iterations (residual " +
              std::to_string(result.stats.residual_history.empty()
                                 ? 0.0
                                 : result.stats.residual_history.back()) +
              ")"),
        result_(std::move(result)) {}

  const SolveResult& result() const noexcept { return result_; }

 private:
  SolveResult result_;
};

/// Snapshot handed to an observer once per outer iteration, before the
/// evaluation step: V_k, the greedy policy for V_k and ||TV_k - V_k||_inf.
struct IterationRecord {
  index_t k;
  std::span<const double> value;
  std::span<const index_t> policy;
  double residual;
};

using IterationObserver = std::function<void(const IterationRecord&)>;

/// How the policy evaluation step of inexact_policy_iteration is truncated.
enum class InnerSchedule {
  forcing,       // relative residual max(alpha * min(1, r_k), 1e-14)
  fixed_sweeps,  // exactly mpi_steps Richardson sweeps
  exact,         // GMRES to relative residual 1e-14
};

namespace detail {

struct Evaluation {
  index_t inner_iterations = 0;
  double inner_tolerance = 0.0;
};

/// Produces V_{k+1} in place of `v` given the greedy policy, TV_k and r_k.
using EvaluateStep =
    std::function<Evaluation(std::span<const index_t> pi, Vector& v, const Vector& tv, double r)>;

/**
 * Shared outer loop. Each round computes the greedy policy and residual of
 * V_k, stops once r_k <= tol, otherwise replaces V_k by the evaluation step.
 * The returned value is T V_k of the final iterate, paired with its greedy
 * policy, so that gamma / (1 - gamma) r_k bounds its distance to V*.
 */
inline SolveResult outer_loop(const Mdp& mdp, const SolveOptions& opts, Vector v, Executor& exec,
                              const IterationObserver& observer, const EvaluateStep& evaluate,
                              bool check_before_first_step) {
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  auto& st = res.stats;
  Vector tv(static_cast<std::size_t>(mdp.n));
  Policy pi(static_cast<std::size_t>(mdp.n));
  std::vector<double> partial(exec.workers());

  for (index_t k = 0;; ++k) {
    parallel_bellman(mdp, v, exec, tv, pi);
    exec.for_each_block([&](std::size_t w, index_t b, index_t e) {
      double acc = 0.0;
      for (index_t i = b; i < e; ++i) acc = std::max(acc, std::abs(tv[i] - v[i]));
      partial[w] = acc;
    });
    const double r = parallel_reduce(ReduceKind::max_abs, partial, exec.partition());
    st.residual_history.push_back(r);
    if (observer) observer({k, v, pi, r});

    if (r <= opts.tol && (k > 0 || check_before_first_step)) {
      st.converged = true;
      break;
    }
    if (k >= opts.max_outer) break;

    const auto ev = evaluate(pi, v, tv, r);
    st.inner_iterations_per_outer.push_back(ev.inner_iterations);
    st.inner_tolerance_per_outer.push_back(ev.inner_tolerance);
    st.outer_iterations = k + 1;
  }

  const double r_last = st.residual_history.back();
  st.suboptimality_bound = mdp.gamma / (1.0 - mdp.gamma) * r_last;
  res.value = std::move(tv);
  res.policy.assign(static_cast<std::size_t>(mdp.n), 0);
  Vector scratch(static_cast<std::size_t>(mdp.n));
  parallel_bellman(mdp, res.value, exec, scratch, res.policy);
  st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline Vector initial_value(const Mdp& mdp, std::span<const double> v0) {
  if (v0.empty()) return Vector(static_cast<std::size_t>(mdp.n), 0.0);
  if (static_cast<index_t>(v0.size()) != mdp.n)
    throw DimensionMismatch("initial value has " + std::to_string(v0.size()) +
                            " entries, MDP has " + std::to_string(mdp.n) + " states");
  return Vector(v0.begin(), v0.end());
}

inline void check_inputs(const Mdp& mdp, const SolveOptions& opts, Executor& exec) {
  require_valid(mdp);
  validate_options(opts);
  if (exec.size() != mdp.n) throw PartitionMismatch("executor partition does not match the MDP");
}

inline SolveResult finish(SolveResult res) {
  if (!res.stats.converged) throw NotConverged(std::move(res));
  return res;
}

inline EvaluateStep value_iteration_evaluate() {
  return [](std::span<const index_t>, Vector& v, const Vector& tv, double) {
    std::copy(tv.begin(), tv.end(), v.begin());
    return Evaluation{};
  };
}

inline SolveResult run_value_iteration(const Mdp& mdp, const SolveOptions& opts,
                                       std::span<const double> v0, Executor& exec,
                                       const IterationObserver& observer) {
  return outer_loop(mdp, opts, initial_value(mdp, v0), exec, observer, value_iteration_evaluate(),
                    true);
}

inline SolveResult run_inexact_policy_iteration(const Mdp& mdp, const SolveOptions& opts,
                                                std::span<const double> v0, Executor& exec,
                                                const IterationObserver& observer,
                                                InnerSchedule schedule) {
  if (mdp.gamma == 0.0) return run_value_iteration(mdp, opts, v0, exec, observer);

  EvaluateStep step = [&](std::span<const index_t> pi, Vector& v, const Vector&, double r) {
    const auto sys = policy_system(mdp, pi);
    InnerResult inner;
    double tau = 0.0;
    if (schedule == InnerSchedule::fixed_sweeps) {
      inner = richardson_solve(sys.P_pi, sys.g_pi, mdp.gamma, v, FixedSweeps{opts.mpi_steps},
                               opts.max_inner, exec);
    } else {
      tau = schedule == InnerSchedule::exact
                ? inner_tolerance_floor
                : std::max(opts.alpha * std::min(1.0, r), inner_tolerance_floor);
      if (schedule == InnerSchedule::forcing && opts.inner == InnerSolver::richardson)
        inner = richardson_solve(sys.P_pi, sys.g_pi, mdp.gamma, v, RelativeResidual{tau},
                                 opts.max_inner, exec);
      else
        inner = gmres_policy_solve(sys.P_pi, sys.g_pi, mdp.gamma, v,
                                   GmresOptions{tau, opts.gmres_restart, opts.max_inner}, exec);
    }
    v = std::move(inner.x);
    return Evaluation{inner.iterations, tau};
  };
  // Exact PI always evaluates the starting policy at least once.
  return outer_loop(mdp, opts, initial_value(mdp, v0), exec, observer, step,
                    schedule != InnerSchedule::exact);
}

}  // namespace detail

/// One backup of v together with ||TV - v||_inf.
struct ValueIterationStep {
  Vector value;
  Policy policy;
  double residual;
};

inline ValueIterationStep value_iteration_step(const Mdp& mdp, std::span<const double> v) {
  auto b = bellman_apply(mdp, v);
  const double r = max_abs_diff(b.value, v);
  return {std::move(b.value), std::move(b.policy), r};
}

inline SolveResult value_iteration(const Mdp& mdp, const SolveOptions& opts,
                                   std::span<const double> v0, Executor& exec,
                                   const IterationObserver& observer = {}) {
  detail::check_inputs(mdp, opts, exec);
  return detail::finish(detail::run_value_iteration(mdp, opts, v0, exec, observer));
}

/// Exact policy iteration: every evaluation is a GMRES solve to relative
/// residual 1e-14, warm started from the current value.
inline SolveResult policy_iteration(const Mdp& mdp, const SolveOptions& opts,
                                    std::span<const double> v0, Executor& exec,
                                    const IterationObserver& observer = {}) {
  detail::check_inputs(mdp, opts, exec);
  return detail::finish(detail::run_inexact_policy_iteration(mdp, opts, v0, exec, observer,
                                                             InnerSchedule::exact));
}

/**
 * Inexact policy iteration. With InnerSchedule::forcing the evaluation of the
 * greedy policy pi_k is solved from V_k by opts.inner to relative residual
 * max(alpha * min(1, r_k), 1e-14); with fixed_sweeps it is mpi_steps
 * Richardson sweeps, which is modified policy iteration.
 */
inline SolveResult inexact_policy_iteration(const Mdp& mdp, const SolveOptions& opts,
                                            std::span<const double> v0, Executor& exec,
                                            const IterationObserver& observer = {},
                                            InnerSchedule schedule = InnerSchedule::forcing) {
  detail::check_inputs(mdp, opts, exec);
  return detail::finish(
      detail::run_inexact_policy_iteration(mdp, opts, v0, exec, observer, schedule));
}

/// Runs the selected method; never throws NotConverged, check stats.converged.
inline SolveResult solve_unchecked(const Mdp& mdp, const SolveOptions& opts,
                                   std::span<const double> v0, Executor& exec,
                                   const IterationObserver& observer = {}) {
  detail::check_inputs(mdp, opts, exec);
  switch (opts.method) {
    case Method::vi: return detail::run_value_iteration(mdp, opts, v0, exec, observer);
    case Method::pi:
      return detail::run_inexact_policy_iteration(mdp, opts, v0, exec, observer,
                                                  InnerSchedule::exact);
    case Method::mpi:
      return detail::run_inexact_policy_iteration(mdp, opts, v0, exec, observer,
                                                  InnerSchedule::fixed_sweeps);
    case Method::ipi:
      return detail::run_inexact_policy_iteration(mdp, opts, v0, exec, observer,
                                                  InnerSchedule::forcing);
  }
  throw Error("unknown method");
}

inline std::size_t resolve_workers(const SolveOptions& opts) {
  return opts.workers == 0 ? default_worker_count() : opts.workers;
}

/// Throws NotConverged (carrying the partial result) when max_outer is hit.
inline SolveResult solve(const Mdp& mdp, const SolveOptions& opts, std::span<const double> v0,
                         Executor& exec, const IterationObserver& observer = {}) {
  return detail::finish(solve_unchecked(mdp, opts, v0, exec, observer));
}

inline SolveResult solve(const Mdp& mdp, const SolveOptions& opts, std::span<const double> v0 = {}) {
  Executor exec(mdp.n, resolve_workers(opts));
  return solve(mdp, opts, v0, exec);
}

}  // namespace ipi
