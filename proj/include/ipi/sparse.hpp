#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "types.hpp"

namespace ipi {

struct Triplet {
  index_t row;
  index_t col;
  double value;
};

/**
 * Compressed sparse row matrix in canonical form: column indices strictly
 * increase within every row. Immutable after construction, so a single
 * instance can be read concurrently by any number of workers.
 */
class CsrMatrix {
 public:
  CsrMatrix() : row_ptr_{0} {}

  /// Adopts raw CSR arrays after checking every structural invariant.
  CsrMatrix(index_t n_rows, index_t n_cols, std::vector<index_t> row_ptr,
            std::vector<index_t> col_idx, std::vector<double> vals)
      : n_rows_(n_rows),
        n_cols_(n_cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        vals_(std::move(vals)) {
    check_structure();
  }

  index_t rows() const noexcept { return n_rows_; }
  index_t cols() const noexcept { return n_cols_; }
  index_t nnz() const noexcept { return static_cast<index_t>(vals_.size()); }

  std::span<const index_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const index_t> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return vals_; }

  std::span<const index_t> row_cols(index_t i) const noexcept {
    return {col_idx_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }
  std::span<const double> row_vals(index_t i) const noexcept {
    return {vals_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }

  /// Row i times x, accumulated from 0.0 in ascending column order. Every
  /// kernel in the library goes through this so results are reproducible.
  double row_dot(index_t i, std::span<const double> x) const noexcept {
    double acc = 0.0;
    for (index_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += vals_[k] * x[col_idx_[k]];
    return acc;
  }

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  void check_structure() const {
    if (n_rows_ < 0 || n_cols_ < 0) throw DimensionMismatch("negative matrix dimension");
    if (static_cast<index_t>(row_ptr_.size()) != n_rows_ + 1)
      throw DimensionMismatch("row_ptr must have n_rows + 1 entries");
    if (col_idx_.size() != vals_.size())
      throw DimensionMismatch("col_idx and vals lengths differ");
    if (row_ptr_.front() != 0 || row_ptr_.back() != nnz())
      throw DimensionMismatch("row_ptr must start at 0 and end at nnz");
    for (index_t i = 0; i < n_rows_; ++i) {
      if (row_ptr_[i + 1] < row_ptr_[i]) throw DimensionMismatch("row_ptr is decreasing");
      for (index_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        if (col_idx_[k] < 0 || col_idx_[k] >= n_cols_)
          throw IndexOutOfRange("column index out of range in row " + std::to_string(i));
        if (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1])
          throw IndexOutOfRange("column indices not strictly increasing in row " +
                                std::to_string(i));
      }
    }
  }

  index_t n_rows_ = 0;
  index_t n_cols_ = 0;
  std::vector<index_t> row_ptr_;
  std::vector<index_t> col_idx_;
  std::vector<double> vals_;
};

/**
 * Builds a canonical CSR matrix from (row, col, value) triplets. Duplicate
 * coordinates are summed and zero-valued triplets are dropped before
 * summation, so a pair of entries cancelling to 0.0 is kept as an explicit
 * zero.
 */
inline CsrMatrix csr_from_triplets(index_t n_rows, index_t n_cols, std::span<const Triplet> triplets) {
  if (n_rows < 0 || n_cols < 0) throw DimensionMismatch("negative matrix dimension");
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
      throw IndexOutOfRange("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                            ") outside " + std::to_string(n_rows) + "x" + std::to_string(n_cols));
  }

  std::vector<Triplet> sorted;
  sorted.reserve(triplets.size());
  std::copy_if(triplets.begin(), triplets.end(), std::back_inserter(sorted),
               [](const Triplet& t) { return t.value != 0.0; });
  // Stable so duplicates are summed in input order.
  std::stable_sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });

  std::vector<index_t> row_ptr(static_cast<std::size_t>(n_rows) + 1, 0);
  std::vector<index_t> col_idx;
  std::vector<double> vals;
  col_idx.reserve(sorted.size());
  vals.reserve(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto& t = sorted[k];
    if (k > 0 && sorted[k - 1].row == t.row && sorted[k - 1].col == t.col) {
      vals.back() += t.value;
      continue;
    }
    col_idx.push_back(t.col);
    vals.push_back(t.value);
    ++row_ptr[t.row + 1];
  }
  for (index_t i = 0; i < n_rows; ++i) row_ptr[i + 1] += row_ptr[i];
  return CsrMatrix(n_rows, n_cols, std::move(row_ptr), std::move(col_idx), std::move(vals));
}

inline CsrMatrix csr_from_triplets(index_t n_rows, index_t n_cols,
                                   std::initializer_list<Triplet> triplets) {
  return csr_from_triplets(n_rows, n_cols, std::span<const Triplet>(triplets.begin(), triplets.size()));
}

/// Expands a matrix back into its stored entries, row-major.
inline std::vector<Triplet> to_triplets(const CsrMatrix& a) {
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(a.nnz()));
  for (index_t i = 0; i < a.rows(); ++i) {
    auto cols = a.row_cols(i);
    auto vals = a.row_vals(i);
    for (std::size_t k = 0; k < cols.size(); ++k) out.push_back({i, cols[k], vals[k]});
  }
  return out;
}

inline CsrMatrix identity_matrix(index_t n) {
  std::vector<index_t> row_ptr(static_cast<std::size_t>(n) + 1);
  std::vector<index_t> col_idx(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) {
    row_ptr[i + 1] = i + 1;
    col_idx[i] = i;
  }
  return CsrMatrix(n, n, std::move(row_ptr), std::move(col_idx), std::vector<double>(n, 1.0));
}

inline Vector matvec(const CsrMatrix& a, std::span<const double> x) {
  if (static_cast<index_t>(x.size()) != a.cols())
    throw DimensionMismatch("matvec: x has " + std::to_string(x.size()) + " entries, matrix has " +
                            std::to_string(a.cols()) + " columns");
  Vector y(static_cast<std::size_t>(a.rows()));
  for (index_t i = 0; i < a.rows(); ++i) y[i] = a.row_dot(i, x);
  return y;
}

/// Row k of the result is row rows[k] of a; the column count is unchanged.
inline CsrMatrix extract_rows(const CsrMatrix& a, std::span<const index_t> rows) {
  std::vector<index_t> row_ptr(rows.size() + 1, 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const index_t r = rows[k];
    if (r < 0 || r >= a.rows())
      throw IndexOutOfRange("extract_rows: row " + std::to_string(r) + " of " +
                            std::to_string(a.rows()));
    row_ptr[k + 1] = row_ptr[k] + (a.row_ptr()[r + 1] - a.row_ptr()[r]);
  }
  std::vector<index_t> col_idx(static_cast<std::size_t>(row_ptr.back()));
  std::vector<double> vals(static_cast<std::size_t>(row_ptr.back()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto cols = a.row_cols(rows[k]);
    auto v = a.row_vals(rows[k]);
    std::copy(cols.begin(), cols.end(), col_idx.begin() + row_ptr[k]);
    std::copy(v.begin(), v.end(), vals.begin() + row_ptr[k]);
  }
  return CsrMatrix(static_cast<index_t>(rows.size()), a.cols(), std::move(row_ptr),
                   std::move(col_idx), std::move(vals));
}

}  // namespace ipi
