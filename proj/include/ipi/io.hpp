#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "errors.hpp"
#include "mdp.hpp"
#include "parallel.hpp"
#include "solve.hpp"
#include "sparse.hpp"
#include "types.hpp"

namespace ipi {

// MDPB v1, all fields little-endian:
//
//   offset  size  field
//   0       4     magic "MDPB"
//   4       4     version (u32) = 1
//   8       8     n (u64)
//   16      8     m (u64)
//   24      8     gamma (f64)
//   32      8     nnz (u64)
//   40            row_ptr, (n*m + 1) x i64
//                 col_idx, nnz x i64
//                 vals, nnz x f64
//                 g, n*m x f64, row-major by state
inline constexpr char mdpb_magic[4] = {'M', 'D', 'P', 'B'};
inline constexpr std::uint32_t mdpb_version = 1;
inline constexpr std::size_t mdpb_header_size = 40;

class FormatError : public Error {
 public:
  enum class Kind { bad_magic, bad_version, truncated_file, corrupt_payload };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  v = to_little(v);
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
void put_array(std::vector<unsigned char>& out, std::span<const T> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * sizeof(T));
  if constexpr (std::endian::native == std::endian::little) {
    if (!values.empty()) std::memcpy(out.data() + at, values.data(), values.size() * sizeof(T));
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T v = to_little(values[i]);
      std::memcpy(out.data() + at + i * sizeof(T), &v, sizeof(T));
    }
  }
}

template <class T>
T get(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return to_little(v);
}

template <class T>
std::vector<T> get_array(const unsigned char* p, std::size_t count) {
  std::vector<T> out(count);
  if (count != 0) std::memcpy(out.data(), p, count * sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (auto& v : out) v = to_little(v);
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_mdp(const Mdp& mdp) {
  require_valid(mdp);
  std::vector<unsigned char> out;
  const auto rows = static_cast<std::size_t>(mdp.n * mdp.m);
  out.reserve(mdpb_header_size + (rows + 1) * 8 + static_cast<std::size_t>(mdp.P.nnz()) * 16 + rows * 8);
  out.insert(out.end(), std::begin(mdpb_magic), std::end(mdpb_magic));
  detail::put<std::uint32_t>(out, mdpb_version);
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(mdp.n));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(mdp.m));
  detail::put<double>(out, mdp.gamma);
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(mdp.P.nnz()));
  detail::put_array<index_t>(out, mdp.P.row_ptr());
  detail::put_array<index_t>(out, mdp.P.col_idx());
  detail::put_array<double>(out, mdp.P.values());
  detail::put_array<double>(out, mdp.g);
  return out;
}

/// Parses an MDPB v1 image and validates the model.
inline Mdp decode_mdp(std::span<const unsigned char> bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < 4) throw FormatError(Kind::truncated_file, "file shorter than the MDPB magic");
  if (!std::equal(std::begin(mdpb_magic), std::end(mdpb_magic), bytes.begin(),
                  [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; }))
    throw FormatError(Kind::bad_magic, "not an MDPB file (bad magic)");
  if (bytes.size() < mdpb_header_size)
    throw FormatError(Kind::truncated_file, "file shorter than the MDPB header");
  const auto* p = bytes.data();
  const auto version = detail::get<std::uint32_t>(p + 4);
  if (version != mdpb_version)
    throw FormatError(Kind::bad_version, "unsupported MDPB version " + std::to_string(version));
  const auto n = detail::get<std::uint64_t>(p + 8);
  const auto m = detail::get<std::uint64_t>(p + 16);
  const auto gamma = detail::get<double>(p + 24);
  const auto nnz = detail::get<std::uint64_t>(p + 32);

  // Every count is bounded by the payload length before any multiplication.
  const std::uint64_t payload = bytes.size() - mdpb_header_size;
  const std::uint64_t max_entries = payload / 8;
  if (n > max_entries || m > max_entries || nnz > max_entries ||
      (n != 0 && m > max_entries / n))
    throw FormatError(Kind::truncated_file, "header counts exceed the file length");
  const std::uint64_t rows = n * m;
  const std::uint64_t expected_entries = (rows + 1) + 2 * nnz + rows;
  if (expected_entries > max_entries || payload < expected_entries * 8)
    throw FormatError(Kind::truncated_file, "payload shorter than the header counts require");
  if (payload != expected_entries * 8)
    throw FormatError(Kind::corrupt_payload, "trailing bytes after the MDPB payload");

  const unsigned char* at = p + mdpb_header_size;
  auto row_ptr = detail::get_array<index_t>(at, rows + 1);
  at += (rows + 1) * 8;
  auto col_idx = detail::get_array<index_t>(at, nnz);
  at += nnz * 8;
  auto vals = detail::get_array<double>(at, nnz);
  at += nnz * 8;
  auto g = detail::get_array<double>(at, rows);

  Mdp mdp;
  mdp.n = static_cast<index_t>(n);
  mdp.m = static_cast<index_t>(m);
  mdp.gamma = gamma;
  try {
    mdp.P = CsrMatrix(static_cast<index_t>(rows), mdp.n, std::move(row_ptr), std::move(col_idx),
                      std::move(vals));
  } catch (const Error& e) {
    throw FormatError(Kind::corrupt_payload, std::string("corrupt transition matrix: ") + e.what());
  }
  mdp.g = std::move(g);
  require_valid(mdp);
  return mdp;
}

inline void write_mdp(const std::filesystem::path& path, const Mdp& mdp) {
  const auto bytes = encode_mdp(mdp);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

inline Mdp read_mdp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return decode_mdp(bytes);
}

/**
 * Builds an MDP from simulator callbacks.
 *
 * transition(s, a) returns a range of (next_state, probability) pairs and
 * cost(s, a) a real. Each worker calls them only for the states it owns and
 * canonicalizes its own rows; blocks are then concatenated in state order,
 * so the result does not depend on the worker count. Exceptions escaping a
 * callback are rethrown as CallbackError naming (s, a).
 */
template <class TransitionFn, class CostFn>
Mdp build_from_generator(index_t n, index_t m, double gamma, TransitionFn&& transition, CostFn&& cost,
                         Executor& exec) {
  if (n < 1 || m < 1) throw ValidationError("generator needs n >= 1 and m >= 1");
  if (exec.size() != n) throw PartitionMismatch("executor partition does not match n");

  struct Block {
    std::vector<index_t> row_len;
    std::vector<index_t> cols;
    std::vector<double> vals;
  };
  std::vector<Block> blocks(exec.workers());
  Vector g(static_cast<std::size_t>(n * m));

  exec.for_each_block([&](std::size_t w, index_t begin, index_t end) {
    Block& blk = blocks[w];
    std::vector<std::pair<index_t, double>> row;
    for (index_t s = begin; s < end; ++s) {
      for (index_t a = 0; a < m; ++a) {
        row.clear();
        try {
          for (const auto& [next, prob] : transition(s, a)) {
            if (next < 0 || next >= n)
              throw IndexOutOfRange("next state " + std::to_string(next) + " outside [0, " +
                                    std::to_string(n) + ")");
            if (prob != 0.0) row.emplace_back(static_cast<index_t>(next), static_cast<double>(prob));
          }
          g[s * m + a] = static_cast<double>(cost(s, a));
        } catch (const CallbackError&) {
          throw;
        } catch (const std::exception& e) {
          throw CallbackError(s, a, e.what());
        } catch (...) {
          throw CallbackError(s, a, "unknown exception");
        }
        std::stable_sort(row.begin(), row.end(),
                         [](const auto& x, const auto& y) { return x.first < y.first; });
        index_t len = 0;
        for (std::size_t k = 0; k < row.size(); ++k) {
          if (k > 0 && row[k].first == row[k - 1].first) {
            blk.vals.back() += row[k].second;
            continue;
          }
          blk.cols.push_back(row[k].first);
          blk.vals.push_back(row[k].second);
          ++len;
        }
        blk.row_len.push_back(len);
      }
    }
  });

  std::vector<index_t> row_ptr{0};
  row_ptr.reserve(static_cast<std::size_t>(n * m) + 1);
  std::size_t total = 0;
  for (const auto& blk : blocks) total += blk.cols.size();
  std::vector<index_t> col_idx;
  std::vector<double> vals;
  col_idx.reserve(total);
  vals.reserve(total);
  for (auto& blk : blocks) {
    for (index_t len : blk.row_len) row_ptr.push_back(row_ptr.back() + len);
    col_idx.insert(col_idx.end(), blk.cols.begin(), blk.cols.end());
    vals.insert(vals.end(), blk.vals.begin(), blk.vals.end());
    blk = Block{};
  }

  Mdp mdp;
  mdp.n = n;
  mdp.m = m;
  mdp.gamma = gamma;
  mdp.P = CsrMatrix(n * m, n, std::move(row_ptr), std::move(col_idx), std::move(vals));
  mdp.g = std::move(g);
  require_valid(mdp);
  return mdp;
}

inline nlohmann::json options_to_json(const SolveOptions& o) {
  return {{"method", std::string(to_string(o.method))},
          {"inner", std::string(to_string(o.inner))},
          {"alpha", o.alpha},
          {"tol", o.tol},
          {"max_outer", o.max_outer},
          {"max_inner", o.max_inner},
          {"mpi_steps", o.mpi_steps},
          {"gmres_restart", o.gmres_restart},
          {"workers", resolve_workers(o)}};
}

inline nlohmann::json stats_to_json(const SolveResult& result, const SolveOptions& opts) {
  const auto& st = result.stats;
  return {{"method", std::string(to_string(opts.method))},
          {"options", options_to_json(opts)},
          {"outer_iterations", st.outer_iterations},
          {"residual_history", st.residual_history},
          {"inner_iterations_per_outer", st.inner_iterations_per_outer},
          {"inner_tolerance_per_outer", st.inner_tolerance_per_outer},
          {"outer_norm", st.outer_norm},
          {"inner_norm", st.inner_norm},
          {"wall_time", st.wall_time},
          {"converged", st.converged},
          {"suboptimality_bound", st.suboptimality_bound}};
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes value.txt, policy.txt and stats.json into dir, creating it if needed.
inline void write_solution(const std::filesystem::path& dir, const SolveResult& result,
                           const SolveOptions& opts) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));

  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw IoError("cannot open " + (dir / name).string() + " for writing");
    return out;
  };
  auto check = [&](std::ofstream& out, const char* name) {
    out.flush();
    if (!out) throw IoError("failed writing " + (dir / name).string());
  };

  {
    auto out = open("value.txt");
    for (double v : result.value) out << format_real(v) << '\n';
    check(out, "value.txt");
  }
  {
    auto out = open("policy.txt");
    for (index_t a : result.policy) out << a << '\n';
    check(out, "policy.txt");
  }
  {
    auto out = open("stats.json");
    out << stats_to_json(result, opts).dump(2) << '\n';
    check(out, "stats.json");
  }
}

}  // namespace ipi
