#pragma once

#include <algorithm>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

#include "markfun/errors.hpp"

namespace markfun {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Row-compressed sparse matrix, immutable after construction.
///
/// The transpose mirror (a CSR of the transpose) is built on first use and
/// shared by all copies; construction is guarded by std::call_once so
/// concurrent readers are safe.
class SparseCsr {
public:
  SparseCsr() : impl_(std::make_shared<Impl>()) {}

  static SparseCsr from_triplets(Index rows, Index cols,
                                 std::vector<Triplet> entries) {
    if (rows < 0 || cols < 0) throw IndexError("negative matrix dimension");
    for (const Triplet& t : entries) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw IndexError("triplet index out of range");
      if (!std::isfinite(t.value))
        throw ValidationError("non-finite matrix entry");
    }
    std::sort(entries.begin(), entries.end(),
              [](const Triplet& a, const Triplet& b) {
                return a.row != b.row ? a.row < b.row : a.col < b.col;
              });
    auto impl = std::make_shared<Impl>();
    impl->rows = rows;
    impl->cols = cols;
    impl->row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      double sum = 0.0;
      while (j < entries.size() && entries[j].row == entries[i].row &&
             entries[j].col == entries[i].col) {
        sum += entries[j].value;
        ++j;
      }
      if (sum != 0.0) {
        impl->col_idx.push_back(entries[i].col);
        impl->vals.push_back(sum);
        ++impl->row_ptr[static_cast<std::size_t>(entries[i].row) + 1];
      }
      i = j;
    }
    for (Index r = 0; r < rows; ++r)
      impl->row_ptr[static_cast<std::size_t>(r) + 1] +=
          impl->row_ptr[static_cast<std::size_t>(r)];
    SparseCsr m;
    m.impl_ = std::move(impl);
    return m;
  }

  Index rows() const { return impl_->rows; }
  Index cols() const { return impl_->cols; }
  Index nnz() const { return static_cast<Index>(impl_->vals.size()); }

  /// y = A x, O(nnz).
  Vector matvec(const Vector& x) const {
    if (x.size() != cols()) throw IndexError("matvec dimension mismatch");
    Vector y = Vector::Zero(rows());
    const Impl& m = *impl_;
    for (Index r = 0; r < m.rows; ++r) {
      double acc = 0.0;
      for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
        acc += m.vals[k] * x[m.col_idx[k]];
      y[r] = acc;
    }
    return y;
  }

  /// y = A^T x, via the lazily built transpose mirror.
  Vector transpose_matvec(const Vector& x) const {
    if (x.size() != rows())
      throw IndexError("transpose_matvec dimension mismatch");
    return transposed().matvec(x);
  }

  /// CSR of A^T; built once, cached, race-free.
  const SparseCsr& transposed() const {
    std::call_once(impl_->transpose_once, [this]() {
      std::vector<Triplet> ts;
      ts.reserve(impl_->vals.size());
      for_each_entry([&](Index r, Index c, double v) {
        ts.push_back({c, r, v});
      });
      impl_->transpose = std::make_unique<SparseCsr>(
          from_triplets(cols(), rows(), std::move(ts)));
    });
    return *impl_->transpose;
  }

  template <typename F>
  void for_each_entry(F&& f) const {
    const Impl& m = *impl_;
    for (Index r = 0; r < m.rows; ++r)
      for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
        f(r, static_cast<Index>(m.col_idx[k]), m.vals[k]);
  }

  std::vector<Triplet> to_triplets() const {
    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(nnz()));
    for_each_entry([&](Index r, Index c, double v) { ts.push_back({r, c, v}); });
    return ts;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d = DenseMatrix::Zero(rows(), cols());
    for_each_entry([&](Index r, Index c, double v) { d(r, c) += v; });
    return d;
  }

  /// Max absolute column sum.
  double norm1() const {
    Vector cs = Vector::Zero(cols());
    for_each_entry([&](Index, Index c, double v) { cs[c] += std::abs(v); });
    return cols() == 0 ? 0.0 : cs.maxCoeff();
  }

  /// Max absolute row sum.
  double norm_inf() const {
    Vector rs = Vector::Zero(rows());
    for_each_entry([&](Index r, Index, double v) { rs[r] += std::abs(v); });
    return rows() == 0 ? 0.0 : rs.maxCoeff();
  }

  Vector row_sums() const {
    Vector rs = Vector::Zero(rows());
    const Impl& m = *impl_;
    for (Index r = 0; r < m.rows; ++r) {
      double acc = 0.0;
      for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
        acc += m.vals[k];
      rs[r] = acc;
    }
    return rs;
  }

  /// Entries of one row as (col, value) pairs.
  template <typename F>
  void for_each_in_row(Index r, F&& f) const {
    if (r < 0 || r >= rows()) throw IndexError("row index out of range");
    const Impl& m = *impl_;
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
      f(static_cast<Index>(m.col_idx[k]), m.vals[k]);
  }

private:
  struct Impl {
    Index rows = 0;
    Index cols = 0;
    std::vector<std::size_t> row_ptr = {0};
    std::vector<Index> col_idx;
    std::vector<double> vals;
    mutable std::once_flag transpose_once;
    mutable std::unique_ptr<SparseCsr> transpose;
  };
  std::shared_ptr<Impl> impl_;
};

} // namespace markfun
