#include <spectra_lr/column_sparse.hpp>

#include <algorithm>
#include <sstream>

namespace spectra_lr {

ColumnSparseMatrix::ColumnSparseMatrix(Index rows, Index cols)
    : rows_(rows), cols_(cols), colStart_(static_cast<std::size_t>(cols) + 1, 0) {
  if (rows < 0 || cols < 0) throw InputError("matrix dimensions must be non-negative");
}

ColumnSparseMatrix ColumnSparseMatrix::fromTriplets(Index rows, Index cols,
                                                    std::vector<Triplet> entries) {
  ColumnSparseMatrix m(rows, cols);
  for (const Triplet& e : entries) {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      std::ostringstream os;
      os << "entry (" << e.row << ", " << e.col << ") outside " << rows << "x" << cols;
      throw InputError(os.str());
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.col != b.col ? a.col < b.col : a.row < b.row;
  });
  for (std::size_t k = 1; k < entries.size(); ++k) {
    if (entries[k].col == entries[k - 1].col && entries[k].row == entries[k - 1].row) {
      std::ostringstream os;
      os << "duplicate entry (" << entries[k].row << ", " << entries[k].col << ")";
      throw InputError(os.str());
    }
  }
  m.rowIndex_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (const Triplet& e : entries) {
    m.colStart_[static_cast<std::size_t>(e.col) + 1]++;
    m.rowIndex_.push_back(e.row);
    m.values_.push_back(e.value);
  }
  for (Index t = 0; t < cols; ++t) m.colStart_[t + 1] += m.colStart_[t];
  return m;
}

std::vector<Triplet> ColumnSparseMatrix::triplets() const {
  std::vector<Triplet> out;
  out.reserve(rowIndex_.size());
  for (Index t = 0; t < cols_; ++t) {
    for (Index k = colStart_[t]; k < colStart_[t + 1]; ++k) {
      out.push_back({rowIndex_[k], t, values_[k]});
    }
  }
  return out;
}

Matrix ColumnSparseMatrix::toDense() const {
  Matrix m = Matrix::Zero(rows_, cols_);
  for (Index t = 0; t < cols_; ++t) {
    for (Index k = colStart_[t]; k < colStart_[t + 1]; ++k) m(rowIndex_[k], t) = values_[k];
  }
  return m;
}

SparseMatrix ColumnSparseMatrix::toSparse() const {
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(rowIndex_.size());
  for (Index t = 0; t < cols_; ++t) {
    for (Index k = colStart_[t]; k < colStart_[t + 1]; ++k) ts.emplace_back(rowIndex_[k], t, values_[k]);
  }
  SparseMatrix s(rows_, cols_);
  s.setFromTriplets(ts.begin(), ts.end());
  return s;
}

}  // namespace spectra_lr
