#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "sparse.hpp"
#include "types.hpp"

namespace ipi {

enum class InnerStatus {
  converged,
  cap_reached,
  stagnated,  // residual at the rounding level of b - A x, above the requested target
};

/// Outcome of an inner linear solve. cap_reached and stagnated are not
/// errors: x is the last (and for GMRES also the best) iterate and the caller
/// decides.
struct InnerResult {
  Vector x;
  index_t iterations = 0;
  InnerStatus status = InnerStatus::converged;
  double initial_residual = 0.0;  // Euclidean norm at the starting guess
  double final_residual = 0.0;    // Euclidean norm at x
};

/// Exactly `count` sweeps, no residual evaluation.
struct FixedSweeps {
  index_t count;
};

/// Stop at the first iterate with ||b - A v||_2 <= tau * ||b - A v0||_2.
struct RelativeResidual {
  double tau;
};

using RichardsonStop = std::variant<FixedSweeps, RelativeResidual>;

/**
 * Richardson sweeps v <- g_pi + gamma * P_pi v for (I - gamma P_pi) v = g_pi.
 *
 * Each row update touches only that row, so the iterates are independent of
 * the worker count. The residual of v equals (sweep of v) - v, and in
 * relative-residual mode its norm is taken with Executor::stable_norm2, which
 * is also worker-count independent.
 */
inline InnerResult richardson_solve(const CsrMatrix& P_pi, std::span<const double> g_pi, double gamma,
                                    std::span<const double> v0, const RichardsonStop& stop,
                                    index_t cap, Executor& exec) {
  const index_t n = P_pi.rows();
  if (P_pi.cols() != n || static_cast<index_t>(g_pi.size()) != n ||
      static_cast<index_t>(v0.size()) != n || exec.size() != n)
    throw DimensionMismatch("richardson_solve: system dimensions disagree");

  InnerResult res;
  res.x.assign(v0.begin(), v0.end());
  Vector next(static_cast<std::size_t>(n));
  auto sweep = [&] {
    exec.for_each_block([&](std::size_t, index_t b, index_t e) {
      for (index_t i = b; i < e; ++i) next[i] = g_pi[i] + gamma * P_pi.row_dot(i, res.x);
    });
  };

  if (const auto* fixed = std::get_if<FixedSweeps>(&stop)) {
    for (index_t k = 0; k < fixed->count; ++k) {
      sweep();
      res.x.swap(next);
    }
    res.iterations = std::max<index_t>(fixed->count, 0);
    return res;
  }

  const double tau = std::get<RelativeResidual>(stop).tau;
  Vector r(static_cast<std::size_t>(n));
  double target = 0.0;
  for (index_t k = 0;; ++k) {
    sweep();
    exec.for_each_block([&](std::size_t, index_t b, index_t e) {
      for (index_t i = b; i < e; ++i) r[i] = next[i] - res.x[i];
    });
    const double norm = exec.stable_norm2(r);
    if (k == 0) {
      res.initial_residual = norm;
      target = tau * norm;
    }
    res.final_residual = norm;
    res.iterations = k;
    if (norm <= target) return res;
    if (k >= cap) {
      res.status = InnerStatus::cap_reached;
      return res;
    }
    res.x.swap(next);
  }
}

struct GmresOptions {
  double tau = 1e-10;
  index_t restart = 30;
  index_t max_iterations = 1000;
};

/**
 * Restarted GMRES for A x = b with modified Gram-Schmidt Arnoldi and Givens
 * rotations on the Hessenberg least-squares problem.
 *
 * `apply(x, y)` must write y = A x. Inner products go through Executor::dot.
 * The stopping test is always confirmed on a freshly computed residual
 * b - A x; the rotated right-hand side is only used to end a cycle early.
 * A subdiagonal below 1e-14 ||b|| ends the cycle (happy breakdown).
 * The solve returns `stagnated` when a cycle leaves the true residual at the
 * rounding level of b - A x or does not reduce it at all.
 * `iterations` counts Arnoldi steps over all cycles.
 */
template <class Apply>
InnerResult gmres_solve(Apply&& apply, std::span<const double> b, std::span<const double> x0,
                        const GmresOptions& opts, Executor& exec) {
  const index_t n = static_cast<index_t>(b.size());
  if (static_cast<index_t>(x0.size()) != n || exec.size() != n)
    throw DimensionMismatch("gmres_solve: vector lengths disagree");
  if (!(opts.tau > 0.0)) throw Error("gmres_solve: tau must be positive");
  if (opts.restart < 1) throw Error("gmres_solve: restart must be at least 1");

  const auto restart = static_cast<std::size_t>(opts.restart);
  InnerResult res;
  res.x.assign(x0.begin(), x0.end());

  Vector r(static_cast<std::size_t>(n));
  double ax_norm = 0.0;
  auto true_residual = [&] {
    apply(std::span<const double>(res.x), std::span<double>(r));
    ax_norm = exec.norm2(r);
    exec.for_each_block([&](std::size_t, index_t lo, index_t hi) {
      for (index_t i = lo; i < hi; ++i) r[i] = b[i] - r[i];
    });
    return exec.norm2(r);
  };

  double beta = true_residual();
  res.initial_residual = beta;
  res.final_residual = beta;
  if (beta == 0.0) return res;

  const double target = opts.tau * beta;
  const double b_norm = exec.norm2(b);
  const double breakdown_tol = 1e-14 * (b_norm > 0.0 ? b_norm : beta);

  std::vector<Vector> basis(restart + 1, Vector(static_cast<std::size_t>(n)));
  std::vector<std::vector<double>> h(restart + 1, std::vector<double>(restart, 0.0));
  std::vector<double> cs(restart, 0.0), sn(restart, 0.0), rhs(restart + 1, 0.0), y(restart, 0.0);

  while (true) {
    if (beta <= target) return res;
    if (res.iterations >= opts.max_iterations) {
      res.status = InnerStatus::cap_reached;
      return res;
    }

    exec.for_each_block([&](std::size_t, index_t lo, index_t hi) {
      for (index_t i = lo; i < hi; ++i) basis[0][i] = r[i] / beta;
    });
    std::fill(rhs.begin(), rhs.end(), 0.0);
    rhs[0] = beta;

    std::size_t steps = 0;
    bool breakdown = false;
    for (std::size_t j = 0; j < restart && res.iterations < opts.max_iterations; ++j) {
      Vector& w = basis[j + 1];
      apply(std::span<const double>(basis[j]), std::span<double>(w));
      ++res.iterations;
      ++steps;

      for (std::size_t i = 0; i <= j; ++i) {
        const double hij = exec.dot(w, basis[i]);
        h[i][j] = hij;
        const Vector& vi = basis[i];
        exec.for_each_block([&](std::size_t, index_t lo, index_t hi) {
          for (index_t k = lo; k < hi; ++k) w[k] -= hij * vi[k];
        });
      }
      const double h_next = exec.norm2(w);
      h[j + 1][j] = h_next;
      breakdown = h_next < breakdown_tol;
      if (!breakdown) {
        exec.for_each_block([&](std::size_t, index_t lo, index_t hi) {
          for (index_t k = lo; k < hi; ++k) w[k] /= h_next;
        });
      }

      for (std::size_t i = 0; i < j; ++i) {
        const double t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
        h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
        h[i][j] = t;
      }
      const double denom = std::hypot(h[j][j], h[j + 1][j]);
      if (denom == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = h[j][j] / denom;
        sn[j] = h[j + 1][j] / denom;
      }
      h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
      h[j + 1][j] = 0.0;
      rhs[j + 1] = -sn[j] * rhs[j];
      rhs[j] = cs[j] * rhs[j];

      if (breakdown || std::abs(rhs[j + 1]) <= target) break;
    }

    // Back substitution on the rotated triangular system.
    for (std::size_t ii = steps; ii-- > 0;) {
      double acc = rhs[ii];
      for (std::size_t k = ii + 1; k < steps; ++k) acc -= h[ii][k] * y[k];
      y[ii] = h[ii][ii] != 0.0 ? acc / h[ii][ii] : 0.0;
    }
    exec.for_each_block([&](std::size_t, index_t lo, index_t hi) {
      for (index_t i = lo; i < hi; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < steps; ++k) acc += y[k] * basis[k][i];
        res.x[i] += acc;
      }
    });

    const double previous = beta;
    beta = true_residual();
    res.final_residual = beta;
    if (beta <= target) return res;
    // Below this level b - A x is dominated by rounding, and so is any cycle
    // that fails to shrink it.
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * (b_norm + ax_norm);
    if (beta <= floor || beta >= previous) {
      res.status = InnerStatus::stagnated;
      return res;
    }
  }
}

/// GMRES on the policy evaluation operator v -> (I - gamma P_pi) v.
inline InnerResult gmres_policy_solve(const CsrMatrix& P_pi, std::span<const double> g_pi, double gamma,
                                      std::span<const double> v0, const GmresOptions& opts,
                                      Executor& exec) {
  const index_t n = P_pi.rows();
  if (P_pi.cols() != n || static_cast<index_t>(g_pi.size()) != n)
    throw DimensionMismatch("gmres_policy_solve: system dimensions disagree");
  auto apply = [&](std::span<const double> x, std::span<double> y) {
    exec.for_each_block([&](std::size_t, index_t lo, index_t hi) {
      for (index_t i = lo; i < hi; ++i) y[i] = x[i] - gamma * P_pi.row_dot(i, x);
    });
  };
  return gmres_solve(apply, g_pi, v0, opts, exec);
}

}  // namespace ipi
