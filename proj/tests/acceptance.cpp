// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Tolerances are fixed here.

#include <sys/resource.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ipi/ipi.hpp"
#include "support/oracles.hpp"

namespace {

using namespace ipi;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Records the first few failures, keeps counting the rest.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (failures_ <= 5) messages_ += (messages_.empty() ? "" : "; ") + what;
  }
  Outcome outcome(const std::string& summary) const {
    std::ostringstream os;
    os << summary << " [" << checks_ << " checks";
    if (failures_) os << ", " << failures_ << " failed: " << messages_;
    os << "]";
    return {failures_ == 0, os.str()};
  }

 private:
  int checks_ = 0;
  int failures_ = 0;
  std::string messages_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

SolveOptions make_options(Method method, InnerSolver inner, double tol, std::size_t workers = 1) {
  SolveOptions o;
  o.method = method;
  o.inner = inner;
  o.tol = tol;
  o.workers = workers;
  return o;
}

struct NamedOptions {
  const char* name;
  SolveOptions opts;
};

std::vector<NamedOptions> method_family(double tol, std::size_t workers = 1) {
  return {{"vi", make_options(Method::vi, InnerSolver::gmres, tol, workers)},
          {"pi", make_options(Method::pi, InnerSolver::gmres, tol, workers)},
          {"mpi", make_options(Method::mpi, InnerSolver::richardson, tol, workers)},
          {"ipi-richardson", make_options(Method::ipi, InnerSolver::richardson, tol, workers)},
          {"ipi-gmres", make_options(Method::ipi, InnerSolver::gmres, tol, workers)}};
}

struct OracleInstance {
  Mdp mdp;
  Vector optimum;
};

/// 50 random models with n <= 6, m <= 3 and gamma cycling through {0.5, 0.9, 0.99}.
std::vector<OracleInstance> oracle_instances() {
  std::mt19937_64 rng(20240501);
  std::uniform_int_distribution<index_t> n(1, 6), m(1, 3);
  const double gammas[] = {0.5, 0.9, 0.99};
  std::vector<OracleInstance> out;
  for (int i = 0; i < 50; ++i) {
    auto mdp = testing::random_mdp(n(rng), m(rng), gammas[i % 3], rng);
    auto opt = testing::enumerate_optimum(mdp).optimal_value;
    out.push_back({std::move(mdp), std::move(opt)});
  }
  return out;
}

Outcome enumeration_optimality(const std::vector<OracleInstance>& instances) {
  const auto t0 = Clock::now();
  Checker c;
  double worst_value = 0.0, worst_policy = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& [mdp, opt] = instances[i];
    for (const auto& [name, opts] : method_family(1e-10)) {
      const auto r = solve(mdp, opts);
      const double err = testing::max_abs_diff(r.value, opt);
      const double policy_err = testing::max_abs_diff(testing::dense_policy_value(mdp, r.policy), opt);
      worst_value = std::max(worst_value, err);
      worst_policy = std::max(worst_policy, policy_err);
      c.expect(err <= 1e-8, std::string(name) + " instance " + std::to_string(i) + " value error " + fmt(err));
      c.expect(policy_err <= 1e-8,
               std::string(name) + " instance " + std::to_string(i) + " policy value error " + fmt(policy_err));
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 30.0, "runtime " + fmt(elapsed) + " s");
  return c.outcome("50 instances x 5 methods, worst value error " + fmt(worst_value) +
                   ", worst policy-value error " + fmt(worst_policy) + " (tol 1e-8), " + fmt(elapsed) +
                   " s (limit 30 s)");
}

Outcome suboptimality_bound(const std::vector<OracleInstance>& instances) {
  Checker c;
  double tightest = 1e300;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& [mdp, opt] = instances[i];
    for (double tol : {1e-10, 1e-4, 1e-2}) {
      for (const auto& [name, opts] : method_family(tol)) {
        const auto r = solve(mdp, opts);
        const double err = testing::max_abs_diff(r.value, opt);
        const double bound = r.stats.suboptimality_bound;
        tightest = std::min(tightest, bound + 1e-9 - err);
        c.expect(err <= bound + 1e-9, std::string(name) + " instance " + std::to_string(i) + " tol " +
                                          fmt(tol) + ": error " + fmt(err) + " > bound " + fmt(bound));
      }
    }
  }
  return c.outcome("bound + 1e-9 >= true error on all oracle instances, tol in {1e-10, 1e-4, 1e-2}; "
                   "smallest margin " + fmt(tightest));
}

Outcome contraction_suite() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<index_t> n(1, 20), m(1, 4);
  std::uniform_real_distribution<double> gam(0.0, 0.999), val(-10.0, 10.0), up(0.0, 5.0), shift(-10.0, 10.0);
  Checker c;
  for (int trial = 0; trial < 200; ++trial) {
    const auto mdp = testing::random_mdp(n(rng), m(rng), gam(rng), rng, -1, -5.0, 5.0);
    Vector v(mdp.n), w(mdp.n);
    for (auto& x : v) x = val(rng);
    for (auto& x : w) x = val(rng);
    const auto tv = bellman_apply(mdp, v).value, tw = bellman_apply(mdp, w).value;
    c.expect(testing::max_abs_diff(tv, tw) <= mdp.gamma * testing::max_abs_diff(v, w) + 1e-12,
             "contraction trial " + std::to_string(trial));

    Vector above = v;
    for (auto& x : above) x += up(rng);
    const auto ta = bellman_apply(mdp, above).value;
    bool monotone = true;
    for (index_t s = 0; s < mdp.n; ++s) monotone &= tv[s] <= ta[s] + 1e-12;
    c.expect(monotone, "monotonicity trial " + std::to_string(trial));

    const double k = shift(rng);
    Vector shifted = v;
    for (auto& x : shifted) x += k;
    const auto ts = bellman_apply(mdp, shifted).value;
    bool covariant = true;
    for (index_t s = 0; s < mdp.n; ++s) covariant &= std::abs(ts[s] - (tv[s] + mdp.gamma * k)) <= 1e-12;
    c.expect(covariant, "shift covariance trial " + std::to_string(trial));
  }
  return c.outcome("200 random (mdp, v, w) triples, contraction/monotonicity/shift at 1e-12");
}

Outcome vi_geometric_decay() {
  std::mt19937_64 rng(88);
  std::uniform_int_distribution<index_t> n(1, 40), m(1, 5);
  std::uniform_real_distribution<double> gam(0.05, 0.99);
  Checker c;
  std::size_t steps = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto mdp = testing::random_mdp(n(rng), m(rng), gam(rng), rng, 8);
    const auto r = solve(mdp, make_options(Method::vi, InnerSolver::gmres, 1e-10));
    const auto& h = r.stats.residual_history;
    for (std::size_t k = 1; k < h.size(); ++k, ++steps)
      c.expect(h[k] <= mdp.gamma * h[k - 1] + 1e-12,
               "instance " + std::to_string(trial) + " step " + std::to_string(k));
  }
  return c.outcome("20 instances, " + std::to_string(steps) + " steps with r_k <= gamma r_{k-1} + 1e-12");
}

Outcome family_consistency() {
  std::mt19937_64 rng(99);
  Checker c;
  // (a) mpi against ipi with fixed Richardson sweeps.
  for (int i = 0; i < 10; ++i) {
    const auto mdp = testing::random_mdp(5 + i * 3, 1 + i % 4, 0.9 + 0.009 * i, rng, 6);
    auto o = make_options(Method::mpi, InnerSolver::richardson, 1e-10, 1 + i % 3);
    o.mpi_steps = 1 + 4 * i;
    std::vector<Vector> mpi_iterates, ipi_iterates;
    Executor exec(mdp.n, o.workers);
    const auto a = solve(mdp, o, {}, exec, [&](const IterationRecord& r) {
      mpi_iterates.emplace_back(r.value.begin(), r.value.end());
    });
    auto ipi_opts = o;
    ipi_opts.method = Method::ipi;
    const auto b = inexact_policy_iteration(
        mdp, ipi_opts, {}, exec,
        [&](const IterationRecord& r) { ipi_iterates.emplace_back(r.value.begin(), r.value.end()); },
        InnerSchedule::fixed_sweeps);
    c.expect(mpi_iterates == ipi_iterates && a.value == b.value && a.policy == b.policy,
             "mpi vs fixed-sweep ipi instance " + std::to_string(i));
  }

  // (b) ipi with floor-exact inner solves against exact PI, tie-free instances only.
  int accepted = 0, rejected = 0;
  while (accepted < 10) {
    const auto mdp = testing::random_mdp(3 + accepted, 2 + accepted % 2, 0.95, rng);
    const auto opt = testing::enumerate_optimum(mdp).optimal_value;
    const auto gaps = testing::action_gaps(mdp, opt);
    if (*std::min_element(gaps.begin(), gaps.end()) <= 1e-6) {
      ++rejected;
      continue;
    }
    std::vector<Policy> pi_seq, ipi_seq;
    auto record = [](std::vector<Policy>& seq) {
      return [&seq](const IterationRecord& r) { seq.emplace_back(r.policy.begin(), r.policy.end()); };
    };
    Executor exec(mdp.n);
    policy_iteration(mdp, make_options(Method::pi, InnerSolver::gmres, 1e-10), {}, exec, record(pi_seq));
    auto o = make_options(Method::ipi, InnerSolver::gmres, 1e-10);
    o.alpha = 0.0;
    inexact_policy_iteration(mdp, o, {}, exec, record(ipi_seq));
    c.expect(pi_seq == ipi_seq, "pi vs exact ipi policy sequence, instance " + std::to_string(accepted));
    ++accepted;
  }
  return c.outcome("10 mpi/ipi-fixed-sweep pairs bitwise; 10 tie-free pi/ipi(alpha=0) sequences (" +
                   std::to_string(rejected) + " tied draws skipped)");
}

Outcome gmres_vs_dense() {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<index_t> n(2, 100);
  std::uniform_real_distribution<double> cost(0.0, 10.0), start(-5.0, 5.0);
  Checker c;
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const index_t size = trial == 0 ? 100 : n(rng);
    const auto p = testing::random_stochastic(size, size, 1 + trial % 10, rng);
    Vector b(size), x0(size);
    for (auto& x : b) x = cost(rng);
    for (auto& x : x0) x = trial % 2 ? start(rng) : 0.0;
    Executor exec(size, 1 + trial % 4);
    const auto r = gmres_policy_solve(p, b, 0.9, x0, GmresOptions{1e-10, 30, 1000}, exec);
    auto a = testing::to_dense(p);
    for (index_t i = 0; i < size; ++i) {
      for (auto& x : a[i]) x *= -0.9;
      a[i][i] += 1.0;
    }
    const auto exact = testing::dense_solve(a, b);
    const double rel = testing::max_abs_diff(r.x, exact) / testing::inf_norm(exact);
    worst = std::max(worst, rel);
    c.expect(r.status == InnerStatus::converged && rel <= 1e-8,
             "system " + std::to_string(trial) + " (n=" + std::to_string(size) + ") relative error " + fmt(rel));
  }
  return c.outcome("30 random policy systems up to 100x100, gamma 0.9, tau 1e-10; worst relative inf-norm error " +
                   fmt(worst) + " (limit 1e-8)");
}

Outcome parallel_determinism() {
  const auto t0 = Clock::now();
  Checker c;
  const index_t n = 1000;
  const std::size_t worker_counts[] = {1, 2, 3, 8};

  std::vector<Mdp> models;
  for (std::size_t w : worker_counts) {
    Executor exec(n, w);
    models.push_back(make_chain(n, 2, 0.9, exec));
  }
  for (std::size_t i = 1; i < models.size(); ++i)
    c.expect(models[i] == models[0], "generated chain differs for w=" + std::to_string(worker_counts[i]));
  const Mdp& mdp = models[0];

  for (const auto& [name, base] : method_family(1e-10)) {
    if (std::strcmp(name, "pi") == 0) continue;
    std::vector<SolveResult> results;
    for (std::size_t w : worker_counts) {
      auto o = base;
      o.workers = w;
      results.push_back(solve(mdp, o));
    }
    const bool bitwise = std::strcmp(name, "ipi-gmres") != 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
      const auto& a = results[0];
      const auto& b = results[i];
      const std::string tag = std::string(name) + " w=" + std::to_string(worker_counts[i]);
      if (bitwise) {
        c.expect(a.value == b.value && a.policy == b.policy &&
                     a.stats.residual_history == b.stats.residual_history &&
                     a.stats.inner_iterations_per_outer == b.stats.inner_iterations_per_outer,
                 tag + " not bitwise identical");
      } else {
        const double diff = testing::max_abs_diff(a.value, b.value);
        c.expect(diff <= 1e-9, tag + " value difference " + fmt(diff));
        const auto gaps = testing::action_gaps(mdp, a.value);
        int compared = 0;
        for (index_t s = 0; s < n; ++s) {
          if (gaps[s] <= 1e-6) continue;
          ++compared;
          c.expect(a.policy[s] == b.policy[s], tag + " policy differs at gap-checked state " + std::to_string(s));
        }
        c.expect(compared > n / 2, tag + " too few gap-checked states (" + std::to_string(compared) + ")");
      }
    }
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 60.0, "runtime " + fmt(elapsed) + " s");
  return c.outcome("1000-state chain, workers {1,2,3,8}: vi/mpi/ipi-richardson bitwise, ipi-gmres within 1e-9; " +
                   fmt(elapsed) + " s (limit 60 s)");
}

double peak_rss_gb() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<double>(usage.ru_maxrss) / (1024.0 * 1024.0);  // ru_maxrss is in KiB
}

Outcome scale_smoke() {
  const auto t0 = Clock::now();
  Checker c;
  const index_t n = 1'000'000;
  const std::size_t workers = default_worker_count();
  Executor exec(n, workers);
  const auto mdp = make_chain(n, 2, 0.9, exec);
  const double build = seconds_since(t0);
  auto o = make_options(Method::ipi, InnerSolver::gmres, 1e-6, workers);
  const auto r = solve_unchecked(mdp, o, {}, exec);
  const double elapsed = seconds_since(t0);
  const double rss = peak_rss_gb();
  c.expect(r.stats.converged, "not converged, residual " + fmt(r.stats.residual_history.back()));
  c.expect(r.stats.residual_history.back() <= 1e-6, "final residual " + fmt(r.stats.residual_history.back()));
  c.expect(elapsed < 600.0, "runtime " + fmt(elapsed) + " s");
  c.expect(rss < 8.0, "peak RSS " + fmt(rss) + " GB");
  index_t inner = 0;
  for (auto k : r.stats.inner_iterations_per_outer) inner += k;
  return c.outcome("n=1e6, m=2 (" + std::to_string(mdp.P.rows()) + " rows, " + std::to_string(mdp.P.nnz()) +
                   " nnz), " + std::to_string(workers) + " workers: build " + fmt(build) + " s, " +
                   std::to_string(r.stats.outer_iterations) + " outer / " + std::to_string(inner) +
                   " GMRES steps, residual " + fmt(r.stats.residual_history.back()) + ", total " + fmt(elapsed) +
                   " s (limit 600 s), peak RSS " + fmt(rss) + " GB (limit 8 GB)");
}

template <class F>
bool throws_format(F&& f, FormatError::Kind kind) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.kind() == kind;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome format_suite() {
  Checker c;
  std::mt19937_64 rng(5);
  std::vector<Mdp> models{make_e1(), make_chain(500, 3, 0.97)};
  for (int i = 0; i < 10; ++i) models.push_back(testing::random_mdp(1 + 3 * i, 1 + i % 4, 0.1 * i, rng, 4, -1e3, 1e3));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto bytes = encode_mdp(models[i]);
    const auto back = decode_mdp(bytes);
    c.expect(back == models[i] && encode_mdp(back) == bytes, "round trip model " + std::to_string(i));
  }

  const auto good = encode_mdp(make_e1());
  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  c.expect(throws_format([&] { decode_mdp(bad_magic); }, FormatError::Kind::bad_magic), "bad magic");
  auto bad_version = good;
  bad_version[4] = 7;
  c.expect(throws_format([&] { decode_mdp(bad_version); }, FormatError::Kind::bad_version), "bad version");
  for (std::size_t len : {std::size_t{2}, std::size_t{39}, good.size() - 8}) {
    std::vector<unsigned char> cut(good.begin(), good.begin() + len);
    c.expect(throws_format([&] { decode_mdp(cut); }, FormatError::Kind::truncated_file),
             "truncated to " + std::to_string(len));
  }
  auto huge_n = good;
  huge_n[15] = 0x10;
  c.expect(throws_format([&] { decode_mdp(huge_n); }, FormatError::Kind::truncated_file), "corrupted header n");

  // Payload: transition value of row 2 patched from 1.0 to 0.9.
  auto patched = good;
  const double bad_value = 0.9;
  std::memcpy(patched.data() + 40 + 5 * 8 + 4 * 8 + 2 * 8, &bad_value, 8);
  bool cited = false;
  try {
    decode_mdp(patched);
  } catch (const ValidationError& e) {
    cited = e.report().issues.size() == 1 && e.report().issues[0].row == 2;
  }
  c.expect(cited, "corrupted payload row sum not reported at row 2");
  auto bad_column = good;
  bad_column[40 + 5 * 8] = 5;
  c.expect(throws_format([&] { decode_mdp(bad_column); }, FormatError::Kind::corrupt_payload), "bad column index");
  return c.outcome("12 models round trip bitwise; bad magic/version, truncation, corrupted header and payload rejected");
}

}  // namespace

int main(int argc, char** argv) {
  const bool skip_scale = argc > 1 && std::strcmp(argv[1], "--skip-scale") == 0;
  std::printf("building enumeration oracles...\n");
  std::fflush(stdout);
  const auto instances = oracle_instances();

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"enumeration-oracle optimality", [&] { return enumeration_optimality(instances); }},
      {"contraction suite", contraction_suite},
      {"VI geometric decay", vi_geometric_decay},
      {"family consistency", family_consistency},
      {"GMRES vs dense oracle", gmres_vs_dense},
      {"suboptimality bound", [&] { return suboptimality_bound(instances); }},
      {"parallel determinism", parallel_determinism},
      {"scale smoke test", scale_smoke},
      {"MDPB format", format_suite},
  };

  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (skip_scale && std::strcmp(name, "scale smoke test") == 0) {
      std::printf("[SKIP] %s\n", name);
      continue;
    }
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
