#pragma once

#include <spectra_lr/types.hpp>

#include <span>
#include <vector>

namespace spectra_lr {

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Observed entries of a d x T matrix grouped by column, row indices strictly
/// increasing inside each column.
class ColumnSparseMatrix {
 public:
  ColumnSparseMatrix() = default;
  ColumnSparseMatrix(Index rows, Index cols);

  /// Builds from unordered triplets. Throws InputError on out-of-range or
  /// duplicate (row, col) pairs.
  static ColumnSparseMatrix fromTriplets(Index rows, Index cols, std::vector<Triplet> entries);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nonZeros() const { return static_cast<Index>(rowIndex_.size()); }
  Index columnSize(Index t) const { return colStart_[t + 1] - colStart_[t]; }
  Index columnOffset(Index t) const { return colStart_[t]; }

  std::span<const Index> columnIndices(Index t) const {
    return {rowIndex_.data() + colStart_[t], static_cast<std::size_t>(columnSize(t))};
  }
  std::span<const double> columnValues(Index t) const {
    return {values_.data() + colStart_[t], static_cast<std::size_t>(columnSize(t))};
  }
  Eigen::Map<const Vector> columnVector(Index t) const {
    return {values_.data() + colStart_[t], columnSize(t)};
  }

  std::span<const double> values() const { return values_; }
  std::vector<Triplet> triplets() const;

  /// Zero-filled dense copy (desk-scale only).
  Matrix toDense() const;
  SparseMatrix toSparse() const;

  bool operator==(const ColumnSparseMatrix&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> colStart_{0};
  std::vector<Index> rowIndex_;
  std::vector<double> values_;
};

}  // namespace spectra_lr
