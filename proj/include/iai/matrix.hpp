#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace iai {

// Dense row-major matrix of doubles. Kernels that reduce over an inner
// dimension always sum left to right so results are reproducible bit for bit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(std::size_t(rows) * cols, 0.0) {}

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& at(int r, int c) { return data_[std::size_t(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[std::size_t(r) * cols_ + c]; }

  double* row(int r) { return data_.data() + std::size_t(r) * cols_; }
  const double* row(int r) const { return data_.data() + std::size_t(r) * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool is_finite() const;

  bool operator==(const Matrix& o) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// a * b; throws std::invalid_argument with both shapes if a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// [a | b] column concatenation; row counts must match.
Matrix hconcat(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction; every row sums to 1.
Matrix softmax_rows(const Matrix& a);

// softmax_rows(q * k^T / sqrt(q.cols)) * v, computed one query row at a time
// so the full score matrix never has to be materialized. Bit-identical to the
// composed form.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

// a += b elementwise; shapes must match.
void add_inplace(Matrix& a, const Matrix& b);

// Seeded orthonormal n x n matrix: QR of a standard-normal draw via modified
// Gram-Schmidt with positive diagonal. Deterministic given the seed.
Matrix random_rotation(std::uint64_t seed, int n);

// Gauss-Jordan inverse with partial pivoting; throws on singular input.
Matrix invert_matrix(const Matrix& a);

}  // namespace iai
