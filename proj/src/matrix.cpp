#include "iai/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "iai/rng.hpp"

namespace iai {

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool Matrix::is_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  Matrix c(a.rows(), b.cols());
  const int n = a.cols(), cols = b.cols();
  for (int i = 0; i < a.rows(); ++i) {
    double* __restrict ci = c.row(i);
    const double* __restrict ai = a.row(i);
    // k ascending: every c(i,j) accumulates its terms left to right
    for (int k = 0; k < n; ++k) {
      const double aik = ai[k];
      const double* __restrict bk = b.row(k);
      for (int j = 0; j < cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("hconcat: row mismatch " + std::to_string(a.rows()) + " vs " +
                                std::to_string(b.rows()));
  Matrix c(a.rows(), a.cols() + b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    for (int j = 0; j < a.cols(); ++j) ci[j] = ai[j];
    for (int j = 0; j < b.cols(); ++j) ci[a.cols() + j] = bi[j];
  }
  return c;
}

namespace {

// shared by softmax_rows and the fused attention path so both round identically
void softmax_row_inplace(double* __restrict x, int n) {
  double mx = x[0];
  for (int j = 1; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  for (int j = 0; j < n; ++j) x[j] /= sum;
}

}  // namespace

Matrix softmax_rows(const Matrix& a) {
  Matrix r = a;
  if (r.cols() == 0) return r;
  for (int i = 0; i < r.rows(); ++i) softmax_row_inplace(r.row(i), r.cols());
  return r;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add_inplace: shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n = std::size_t(a.rows()) * a.cols();
  for (std::size_t i = 0; i < n; ++i) pa[i] += pb[i];
}

Matrix random_rotation(std::uint64_t seed, int n) {
  auto eng = make_engine(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g.at(i, j) = nd(eng);
  // modified Gram-Schmidt over columns, renormalizing so the implied upper
  // triangle has a positive diagonal (fixes the sign ambiguity)
  for (int j = 0; j < n; ++j) {
    for (int p = 0; p < j; ++p) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += g.at(i, p) * g.at(i, j);
      for (int i = 0; i < n; ++i) g.at(i, j) -= dot * g.at(i, p);
    }
    double norm = 0.0;
    for (int i = 0; i < n; ++i) norm += g.at(i, j) * g.at(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("random_rotation: degenerate draw");
    for (int i = 0; i < n; ++i) g.at(i, j) /= norm;
  }
  return g;
}

Matrix invert_matrix(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("invert_matrix: matrix not square");
  const int n = a.rows();
  Matrix m = a;
  Matrix inv = Matrix::identity(n);
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m.at(r, col)) > std::abs(m.at(pivot, col))) pivot = r;
    if (std::abs(m.at(pivot, col)) < 1e-12)
      throw std::invalid_argument("invert_matrix: singular matrix");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(m.at(pivot, j), m.at(col, j));
        std::swap(inv.at(pivot, j), inv.at(col, j));
      }
    }
    const double d = m.at(col, col);
    for (int j = 0; j < n; ++j) {
      m.at(col, j) /= d;
      inv.at(col, j) /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m.at(r, col);
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        m.at(r, j) -= f * m.at(col, j);
        inv.at(r, j) -= f * inv.at(col, j);
      }
    }
  }
  return inv;
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols())
    throw std::invalid_argument("attention: q/k width mismatch " + std::to_string(q.cols()) +
                                " vs " + std::to_string(k.cols()));
  if (k.rows() != v.rows())
    throw std::invalid_argument("attention: k/v token mismatch " + std::to_string(k.rows()) +
                                " vs " + std::to_string(v.rows()));
  if (k.rows() == 0) throw std::invalid_argument("attention: no memory tokens");
  const int tokens = k.rows(), c = q.cols(), vc = v.cols();
  const double scale = std::sqrt(double(c));
  // keys transposed once: the per-query score pass then runs along contiguous rows
  Matrix kt = transpose(k);
  Matrix out(q.rows(), vc);
  std::vector<double> srow(tokens);
  for (int i = 0; i < q.rows(); ++i) {
    const double* __restrict qi = q.row(i);
    for (int j = 0; j < tokens; ++j) srow[j] = qi[0] * kt.at(0, j);
    for (int d = 1; d < c; ++d) {
      const double qd = qi[d];
      const double* __restrict ktd = kt.row(d);
      for (int j = 0; j < tokens; ++j) srow[j] += qd * ktd[j];
    }
    for (int j = 0; j < tokens; ++j) srow[j] /= scale;
    softmax_row_inplace(srow.data(), tokens);
    double* __restrict oi = out.row(i);
    // j ascending matches matmul's left-to-right inner order exactly
    for (int j = 0; j < tokens; ++j) {
      const double w = srow[j];
      const double* __restrict vj = v.row(j);
      for (int d = 0; d < vc; ++d) oi[d] += w * vj[d];
    }
  }
  return out;
}

}  // namespace iai
