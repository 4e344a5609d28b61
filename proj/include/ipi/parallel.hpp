#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "sparse.hpp"
#include "types.hpp"

namespace ipi {

/// Contiguous block ownership of states: worker i owns [bounds[i], bounds[i+1]).
struct Partition {
  index_t n = 0;
  std::vector<index_t> bounds{0};

  std::size_t workers() const noexcept { return bounds.size() - 1; }
  index_t begin(std::size_t w) const noexcept { return bounds[w]; }
  index_t end(std::size_t w) const noexcept { return bounds[w + 1]; }

  friend bool operator==(const Partition&, const Partition&) = default;
};

/// Balanced blocks: the first n mod w workers get one extra state.
inline Partition make_partition(index_t n, std::size_t w) {
  if (w == 0) throw InvalidWorkerCount("worker count must be at least 1");
  if (n < 0) throw DimensionMismatch("negative state count");
  Partition p;
  p.n = n;
  p.bounds.assign(w + 1, 0);
  const index_t base = n / static_cast<index_t>(w);
  const index_t extra = n % static_cast<index_t>(w);
  for (std::size_t i = 0; i < w; ++i)
    p.bounds[i + 1] = p.bounds[i] + base + (static_cast<index_t>(i) < extra ? 1 : 0);
  return p;
}

/**
 * Persistent pool of worker threads. run() hands the same task to every
 * worker id in [0, size) and returns once all of them finished, which is the
 * exchange point after each update round. Worker 0 runs on the caller.
 */
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t size) : size_(size) {
    if (size == 0) throw InvalidWorkerCount("worker count must be at least 1");
    threads_.reserve(size - 1);
    for (std::size_t id = 1; id < size; ++id) threads_.emplace_back([this, id] { loop(id); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
      ++generation_;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const noexcept { return size_; }

  /// Rethrows the first exception raised by any worker, lowest id first.
  void run(const std::function<void(std::size_t)>& task) {
    if (size_ == 1) {
      task(0);
      return;
    }
    errors_.assign(size_, nullptr);
    {
      std::lock_guard lock(mutex_);
      task_ = &task;
      pending_ = size_ - 1;
      ++generation_;
    }
    wake_.notify_all();
    try {
      task(0);
    } catch (...) {
      errors_[0] = std::current_exception();
    }
    {
      std::unique_lock lock(mutex_);
      done_.wait(lock, [this] { return pending_ == 0; });
      task_ = nullptr;
    }
    for (auto& e : errors_)
      if (e) std::rethrow_exception(e);
  }

 private:
  void loop(std::size_t id) {
    std::size_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task = nullptr;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return generation_ != seen; });
        seen = generation_;
        if (stopping_) return;
        task = task_;
      }
      try {
        (*task)(id);
      } catch (...) {
        errors_[id] = std::current_exception();
      }
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::size_t size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t pending_ = 0;
  std::size_t generation_ = 0;
  bool stopping_ = false;
  std::vector<std::exception_ptr> errors_;
};

inline std::size_t default_worker_count() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

enum class ReduceKind { max_abs, dot };

/**
 * Combines one contribution per worker. max_abs is order-free; dot sums in
 * ascending worker order, so it is reproducible for a fixed worker count but
 * may differ in the last bits between worker counts.
 */
inline double parallel_reduce(ReduceKind kind, std::span<const double> contributions,
                              const Partition& partition) {
  if (contributions.size() != partition.workers())
    throw PartitionMismatch("expected " + std::to_string(partition.workers()) +
                            " contributions, got " + std::to_string(contributions.size()));
  double acc = 0.0;
  for (double c : contributions) {
    if (kind == ReduceKind::max_abs)
      acc = std::max(acc, std::abs(c));
    else
      acc += c;
  }
  return acc;
}

/**
 * A partition of n states bound to a worker pool. All vector kernels of the
 * solvers run through here: each worker reads the replicated inputs and
 * writes only its owned segment of the output.
 */
class Executor {
 public:
  Executor(index_t n, std::size_t workers)
      : partition_(make_partition(n, workers)), pool_(workers) {}

  explicit Executor(index_t n) : Executor(n, 1) {}

  const Partition& partition() const noexcept { return partition_; }
  std::size_t workers() const noexcept { return partition_.workers(); }
  index_t size() const noexcept { return partition_.n; }

  /// f(worker, begin, end) over every owned block, then a barrier.
  template <class F>
  void for_each_block(F&& f) {
    if (workers() == 1) {
      f(std::size_t{0}, index_t{0}, partition_.n);
      return;
    }
    pool_.run([&](std::size_t w) { f(w, partition_.begin(w), partition_.end(w)); });
  }

  /// Per-worker partial sums of x.y combined in worker order.
  double dot(std::span<const double> x, std::span<const double> y) {
    check_length(x);
    check_length(y);
    std::vector<double> partial(workers(), 0.0);
    for_each_block([&](std::size_t w, index_t b, index_t e) {
      double acc = 0.0;
      for (index_t i = b; i < e; ++i) acc += x[i] * y[i];
      partial[w] = acc;
    });
    return parallel_reduce(ReduceKind::dot, partial, partition_);
  }

  double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

  double max_abs(std::span<const double> x) {
    check_length(x);
    std::vector<double> partial(workers(), 0.0);
    for_each_block([&](std::size_t w, index_t b, index_t e) {
      double acc = 0.0;
      for (index_t i = b; i < e; ++i) acc = std::max(acc, std::abs(x[i]));
      partial[w] = acc;
    });
    return parallel_reduce(ReduceKind::max_abs, partial, partition_);
  }

  /**
   * Euclidean norm whose value does not depend on the worker count: squares
   * are summed over fixed 1024-entry chunks and the chunk sums are then added
   * in index order.
   */
  double stable_norm2(std::span<const double> x) {
    check_length(x);
    constexpr index_t chunk = 1024;
    const index_t n = partition_.n;
    const index_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<double> partial(static_cast<std::size_t>(n_chunks), 0.0);
    for_each_block([&](std::size_t, index_t b, index_t e) {
      // A chunk belongs to the worker owning its first entry.
      for (index_t c = (b + chunk - 1) / chunk; c * chunk < e; ++c) {
        double acc = 0.0;
        const index_t stop = std::min(n, (c + 1) * chunk);
        for (index_t i = c * chunk; i < stop; ++i) acc += x[i] * x[i];
        partial[c] = acc;
      }
    });
    double acc = 0.0;
    for (double p : partial) acc += p;
    return std::sqrt(acc);
  }

  /// y = A x for a square-in-rows matrix with one row per state.
  void matvec(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
    if (a.rows() != partition_.n || a.cols() != static_cast<index_t>(x.size()) ||
        y.size() != x.size())
      throw DimensionMismatch("parallel matvec: operand sizes do not match the partition");
    for_each_block([&](std::size_t, index_t b, index_t e) {
      for (index_t i = b; i < e; ++i) y[i] = a.row_dot(i, x);
    });
  }

 private:
  void check_length(std::span<const double> x) const {
    if (static_cast<index_t>(x.size()) != partition_.n)
      throw DimensionMismatch("vector length " + std::to_string(x.size()) +
                              " does not match partition size " + std::to_string(partition_.n));
  }

  Partition partition_;
  WorkerPool pool_;
};

}  // namespace ipi
