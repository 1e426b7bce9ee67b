#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "iai/matrix.hpp"
#include "iai/rng.hpp"

using namespace iai;

namespace {

Matrix random_matrix(std::uint64_t seed, int r, int c) {
  auto eng = make_engine(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m.at(i, j) = dist(eng);
  return m;
}

// independent oracle with the same left-to-right accumulation the kernel
// documents, so comparisons can demand exact equality
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  return out;
}

// direct formula, written without reference to softmax_rows
Matrix softmax_oracle(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, a.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
      out.at(i, j) = std::exp(a.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (int j = 0; j < a.cols(); ++j) out.at(i, j) = out.at(i, j) / sum;
  }
  return out;
}

Matrix attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix scores = matmul_oracle(q, transpose(k));
  const double scale = std::sqrt(double(q.cols()));
  for (int i = 0; i < scores.rows(); ++i)
    for (int j = 0; j < scores.cols(); ++j) scores.at(i, j) = scores.at(i, j) / scale;
  return matmul_oracle(softmax_oracle(scores), v);
}

}  // namespace

TEST_CASE("matmul: identity is neutral") {
  const Matrix b = random_matrix(1, 3, 4);
  CHECK(matmul(Matrix::identity(3), b) == b);
}

TEST_CASE("matmul: hand case") {
  Matrix a(2, 2), b(2, 1);
  a.at(0, 0) = 1; a.at(0, 1) = 2; a.at(1, 0) = 3; a.at(1, 1) = 4;
  b.at(0, 0) = 0; b.at(1, 0) = 1;
  const Matrix c = matmul(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 1);
  CHECK(c.at(0, 0) == 2.0);
  CHECK(c.at(1, 0) == 4.0);
}

TEST_CASE("matmul: equals the loop oracle exactly") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const int m = 1 + int(mix64(s, 1) % 6);
    const int k = 1 + int(mix64(s, 2) % 6);
    const int n = 1 + int(mix64(s, 3) % 6);
    const Matrix a = random_matrix(mix64(s, 4), m, k);
    const Matrix b = random_matrix(mix64(s, 5), k, n);
    CHECK(matmul(a, b) == matmul_oracle(a, b));
  }
}

TEST_CASE("matmul: shape mismatch throws") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(4, 2)), std::invalid_argument);
}

TEST_CASE("transpose: involution and values") {
  const Matrix a = random_matrix(7, 3, 5);
  const Matrix t = transpose(a);
  CHECK(t.rows() == 5);
  CHECK(t.cols() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) CHECK(t.at(j, i) == a.at(i, j));
  CHECK(transpose(t) == a);
}

TEST_CASE("hconcat: values and shape guard") {
  const Matrix a = random_matrix(8, 3, 2);
  const Matrix b = random_matrix(9, 3, 4);
  const Matrix c = hconcat(a, b);
  CHECK(c.rows() == 3);
  CHECK(c.cols() == 6);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(c.at(i, j) == a.at(i, j));
    for (int j = 0; j < 4; ++j) CHECK(c.at(i, 2 + j) == b.at(i, j));
  }
  CHECK_THROWS_AS(hconcat(a, Matrix(4, 1)), std::invalid_argument);
}

TEST_CASE("add_inplace: elementwise sum, shape guard") {
  Matrix a = random_matrix(10, 4, 3);
  const Matrix before = a;
  const Matrix b = random_matrix(11, 4, 3);
  add_inplace(a, b);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) CHECK(a.at(i, j) == before.at(i, j) + b.at(i, j));
  CHECK_THROWS_AS(add_inplace(a, Matrix(3, 3)), std::invalid_argument);
}

TEST_CASE("softmax_rows: symmetric row") {
  Matrix a(1, 2);
  const Matrix p = softmax_rows(a);
  CHECK(p.at(0, 0) == 0.5);
  CHECK(p.at(0, 1) == 0.5);
}

TEST_CASE("softmax_rows: huge gap does not overflow") {
  Matrix a(1, 2);
  a.at(0, 0) = 1000.0;
  const Matrix p = softmax_rows(a);
  CHECK(p.is_finite());
  CHECK(p.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax_rows: matches the direct formula and rows sum to 1") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix a = random_matrix(mix64(100, s), 4, 6);
    const Matrix p = softmax_rows(a);
    const Matrix q = softmax_oracle(a);
    for (int i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 6; ++j) {
        CHECK(p.at(i, j) == doctest::Approx(q.at(i, j)).epsilon(1e-12));
        sum += p.at(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention: single token returns its value row") {
  const Matrix q = random_matrix(20, 5, 3);
  const Matrix k = random_matrix(21, 1, 3);
  const Matrix v = random_matrix(22, 1, 4);
  const Matrix out = attention(q, k, v);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) CHECK(out.at(i, j) == v.at(0, j));
}

TEST_CASE("attention: identical keys give the uniform mix") {
  Matrix k(3, 2);
  for (int i = 0; i < 3; ++i) { k.at(i, 0) = 1.0; k.at(i, 1) = -2.0; }
  const Matrix q = random_matrix(23, 2, 2);
  const Matrix v = random_matrix(24, 3, 2);
  const Matrix out = attention(q, k, v);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double mean = (v.at(0, j) + v.at(1, j) + v.at(2, j)) / 3.0;
      CHECK(out.at(i, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("attention: equals the composed oracle") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const int qc = 2 + int(mix64(s, 7) % 4);
    const Matrix q = random_matrix(mix64(200, s), 3, qc);
    const Matrix k = random_matrix(mix64(201, s), 4, qc);
    const Matrix v = random_matrix(mix64(202, s), 4, 5);
    const Matrix out = attention(q, k, v);
    const Matrix ora = attention_oracle(q, k, v);
    REQUIRE(out.rows() == ora.rows());
    REQUIRE(out.cols() == ora.cols());
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j)
        CHECK(out.at(i, j) == doctest::Approx(ora.at(i, j)).epsilon(1e-10));
  }
}

TEST_CASE("attention: bit-identical to composing the library kernels") {
  const Matrix q = random_matrix(30, 6, 4);
  const Matrix k = random_matrix(31, 5, 4);
  const Matrix v = random_matrix(32, 5, 3);
  Matrix scores = matmul(q, transpose(k));
  const double scale = std::sqrt(4.0);
  for (int i = 0; i < scores.rows(); ++i)
    for (int j = 0; j < scores.cols(); ++j) scores.at(i, j) = scores.at(i, j) / scale;
  CHECK(attention(q, k, v) == matmul(softmax_rows(scores), v));
}

TEST_CASE("attention: shape guards") {
  CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 4), Matrix(2, 2)), std::invalid_argument);
  CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 3), Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("random_rotation: orthonormal, deterministic, seed-sensitive") {
  const Matrix r = random_rotation(5, 6);
  const Matrix gram = matmul(transpose(r), r);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(gram.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
  CHECK(random_rotation(5, 6) == r);
  CHECK_FALSE(random_rotation(6, 6) == r);
}

TEST_CASE("invert_matrix: reconstructs the identity") {
  const Matrix a = random_rotation(9, 5);  // well conditioned by construction
  const Matrix inv = invert_matrix(a);
  const Matrix prod = matmul(a, inv);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(prod.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
}

TEST_CASE("invert_matrix: singular input throws") {
  Matrix a(2, 2);
  a.at(0, 0) = 1; a.at(0, 1) = 2; a.at(1, 0) = 2; a.at(1, 1) = 4;
  CHECK_THROWS_AS(invert_matrix(a), std::invalid_argument);
}

TEST_CASE("is_finite flags bad values") {
  Matrix a(2, 2);
  CHECK(a.is_finite());
  a.at(1, 1) = std::nan("");
  CHECK_FALSE(a.is_finite());
}
