#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "sparse.hpp"
#include "types.hpp"

namespace ipi {

/**
 * Infinite-horizon discounted MDP with cost minimization.
 *
 * Transition row s*m + a of P holds the distribution P(.|s, a), so the m
 * rows of one state are contiguous. Costs g are dense, row-major by state:
 * g[s*m + a] is the stage cost of action a in state s.
 */
struct Mdp {
  index_t n = 0;
  index_t m = 0;
  double gamma = 0.0;
  CsrMatrix P;
  Vector g;

  double cost(index_t s, index_t a) const noexcept { return g[s * m + a]; }

  friend bool operator==(const Mdp&, const Mdp&) = default;
};

struct ValidationIssue {
  enum class Kind { shape, discount, row_sum, negative_entry, non_finite };
  Kind kind;
  index_t row = -1;  // state-action row, or -1 when not row specific
  double value = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const noexcept { return issues.empty(); }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& i : issues) {
      switch (i.kind) {
        case ValidationIssue::Kind::shape: os << "shape: " << i.detail; break;
        case ValidationIssue::Kind::discount: os << "discount out of range: " << i.value; break;
        case ValidationIssue::Kind::row_sum: os << "row " << i.row << ": row sum " << i.value; break;
        case ValidationIssue::Kind::negative_entry:
          os << "row " << i.row << ": negative entry " << i.value << " (" << i.detail << ")";
          break;
        case ValidationIssue::Kind::non_finite: os << "non-finite " << i.detail; break;
      }
      os << '\n';
    }
    return os.str();
  }
};

class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report)
      : Error("validation failed:\n" + report.to_string()), report_(std::move(report)) {}
  explicit ValidationError(const std::string& what) : Error(what) {}

  const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

inline constexpr double row_sum_tolerance = 1e-8;

/// Lists every violated invariant. Rows are never renormalized.
inline ValidationReport validate(const Mdp& mdp) {
  ValidationReport r;
  auto shape = [&](std::string what) {
    r.issues.push_back({ValidationIssue::Kind::shape, -1, 0.0, std::move(what)});
  };
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    r.issues.push_back({ValidationIssue::Kind::discount, -1, mdp.gamma, {}});
  if (mdp.n < 1 || mdp.m < 1) shape("need at least one state and one action");
  if (mdp.P.rows() != mdp.n * mdp.m)
    shape("P has " + std::to_string(mdp.P.rows()) + " rows, expected n*m = " +
          std::to_string(mdp.n * mdp.m));
  if (mdp.P.cols() != mdp.n)
    shape("P has " + std::to_string(mdp.P.cols()) + " columns, expected n = " +
          std::to_string(mdp.n));
  if (static_cast<index_t>(mdp.g.size()) != mdp.n * mdp.m)
    shape("g has " + std::to_string(mdp.g.size()) + " entries, expected n*m = " +
          std::to_string(mdp.n * mdp.m));
  for (std::size_t k = 0; k < mdp.g.size(); ++k)
    if (!std::isfinite(mdp.g[k]))
      r.issues.push_back({ValidationIssue::Kind::non_finite, static_cast<index_t>(k), mdp.g[k],
                          "cost at entry " + std::to_string(k)});

  for (index_t row = 0; row < mdp.P.rows(); ++row) {
    double sum = 0.0;
    auto cols = mdp.P.row_cols(row);
    auto vals = mdp.P.row_vals(row);
    for (std::size_t k = 0; k < vals.size(); ++k) {
      if (vals[k] < 0.0 || !std::isfinite(vals[k]))
        r.issues.push_back({ValidationIssue::Kind::negative_entry, row, vals[k],
                            "column " + std::to_string(cols[k])});
      sum += vals[k];
    }
    if (!(std::abs(sum - 1.0) <= row_sum_tolerance))
      r.issues.push_back({ValidationIssue::Kind::row_sum, row, sum, {}});
  }
  return r;
}

inline void require_valid(const Mdp& mdp) {
  auto report = validate(mdp);
  if (!report.ok()) throw ValidationError(std::move(report));
}

/// One-step lookahead g(s,a) + gamma * P(.|s,a).v for a single state-action row.
inline double q_value(const Mdp& mdp, index_t s, index_t a, std::span<const double> v) noexcept {
  return mdp.g[s * mdp.m + a] + mdp.gamma * mdp.P.row_dot(s * mdp.m + a, v);
}

namespace detail {

/// Backs up states [begin, end). Ties go to the smallest action index.
inline void backup_block(const Mdp& mdp, std::span<const double> v, index_t begin, index_t end,
                         std::span<double> tv, std::span<index_t> pi) {
  for (index_t s = begin; s < end; ++s) {
    double best = q_value(mdp, s, 0, v);
    index_t arg = 0;
    for (index_t a = 1; a < mdp.m; ++a) {
      const double q = q_value(mdp, s, a, v);
      if (q < best) {
        best = q;
        arg = a;
      }
    }
    tv[s] = best;
    pi[s] = arg;
  }
}

inline void check_value_length(const Mdp& mdp, std::span<const double> v) {
  if (static_cast<index_t>(v.size()) != mdp.n)
    throw DimensionMismatch("value vector has " + std::to_string(v.size()) +
                            " entries, MDP has " + std::to_string(mdp.n) + " states");
}

}  // namespace detail

struct Backup {
  Vector value;
  Policy policy;
};

/// Bellman optimality backup (TV)(s) = min_a [g(s,a) + gamma * sum_s' P(s'|s,a) v(s')].
inline Backup bellman_apply(const Mdp& mdp, std::span<const double> v) {
  detail::check_value_length(mdp, v);
  Backup out{Vector(static_cast<std::size_t>(mdp.n)), Policy(static_cast<std::size_t>(mdp.n))};
  detail::backup_block(mdp, v, 0, mdp.n, out.value, out.policy);
  return out;
}

/**
 * Same backup with each worker handling only its owned states. The full
 * output vector is visible to every worker after the barrier. Bitwise equal
 * to bellman_apply for any worker count.
 */
inline void parallel_bellman(const Mdp& mdp, std::span<const double> v, Executor& exec,
                             std::span<double> tv, std::span<index_t> pi) {
  detail::check_value_length(mdp, v);
  if (exec.size() != mdp.n) throw PartitionMismatch("partition does not cover the MDP states");
  if (static_cast<index_t>(tv.size()) != mdp.n || static_cast<index_t>(pi.size()) != mdp.n)
    throw DimensionMismatch("backup outputs must have one entry per state");
  exec.for_each_block([&](std::size_t, index_t b, index_t e) {
    detail::backup_block(mdp, v, b, e, tv, pi);
  });
}

inline Backup parallel_bellman(const Mdp& mdp, std::span<const double> v, Executor& exec) {
  Backup out{Vector(static_cast<std::size_t>(mdp.n)), Policy(static_cast<std::size_t>(mdp.n))};
  parallel_bellman(mdp, v, exec, out.value, out.policy);
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

/// ||TV - V||_inf
inline double bellman_residual(const Mdp& mdp, std::span<const double> v) {
  return max_abs_diff(bellman_apply(mdp, v).value, v);
}

/// Policy evaluation system (I - gamma P_pi) V = g_pi.
struct PolicySystem {
  CsrMatrix P_pi;
  Vector g_pi;
};

inline void check_policy(const Mdp& mdp, std::span<const index_t> pi) {
  if (static_cast<index_t>(pi.size()) != mdp.n)
    throw DimensionMismatch("policy has " + std::to_string(pi.size()) + " entries, MDP has " +
                            std::to_string(mdp.n) + " states");
  for (std::size_t s = 0; s < pi.size(); ++s)
    if (pi[s] < 0 || pi[s] >= mdp.m)
      throw IndexOutOfRange("policy action " + std::to_string(pi[s]) + " at state " +
                            std::to_string(s) + " outside [0, " + std::to_string(mdp.m) + ")");
}

inline PolicySystem policy_system(const Mdp& mdp, std::span<const index_t> pi) {
  check_policy(mdp, pi);
  std::vector<index_t> rows(pi.size());
  Vector g_pi(pi.size());
  for (std::size_t s = 0; s < pi.size(); ++s) {
    const index_t s_ = static_cast<index_t>(s);
    rows[s] = s_ * mdp.m + pi[s];
    g_pi[s] = mdp.cost(s_, pi[s]);
  }
  return {extract_rows(mdp.P, rows), std::move(g_pi)};
}

/// ||g_pi - (I - gamma P_pi) v||_2
inline double policy_value_residual(const Mdp& mdp, std::span<const index_t> pi,
                                    std::span<const double> v) {
  detail::check_value_length(mdp, v);
  auto sys = policy_system(mdp, pi);
  double acc = 0.0;
  for (index_t s = 0; s < mdp.n; ++s) {
    const double r = sys.g_pi[s] + mdp.gamma * sys.P_pi.row_dot(s, v) - v[s];
    acc += r * r;
  }
  return std::sqrt(acc);
}

}  // namespace ipi
