#include "iai/identity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "iai/rng.hpp"

namespace iai {

IdBank IdBank::seeded(std::uint64_t seed, int n_ids, int channels) {
  if (n_ids < 2 || channels < 1) throw std::invalid_argument("IdBank: need n_ids >= 2, channels >= 1");
  auto eng = make_engine(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double s = 1.0 / std::sqrt(double(channels));
  Matrix t(n_ids + 1, channels);
  for (int i = 0; i <= n_ids; ++i)
    for (int c = 0; c < channels; ++c) t.at(i, c) = nd(eng) * s;
  return IdBank(n_ids, channels, std::move(t));
}

HungarianResult hungarian(const Matrix& cost) {
  const int rows = cost.rows(), cols = cost.cols();
  HungarianResult res;
  if (rows == 0) return res;
  if (rows > cols)
    throw std::invalid_argument("hungarian: rows " + std::to_string(rows) + " > cols " +
                                std::to_string(cols) + " (pad the matrix first)");
  if (!cost.is_finite()) throw std::invalid_argument("hungarian: non-finite cost entry");

  const double inf = std::numeric_limits<double>::infinity();
  // Jonker-Volgenant style shortest augmenting paths with potentials,
  // 1-indexed; column 0 is the virtual start. Rows are augmented in ascending
  // order and every minimum scan keeps the first (lowest-index) column, which
  // realizes the lowest-row-then-lowest-column tie preference.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0), minv(cols + 1, 0.0);
  std::vector<int> p(cols + 1, 0), way(cols + 1, 0);
  std::vector<char> used(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    while (j0 != 0) {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    }
  }

  res.col_of_row.assign(rows, -1);
  for (int j = 1; j <= cols; ++j)
    if (p[j] != 0) res.col_of_row[p[j] - 1] = j - 1;
  for (int i = 0; i < rows; ++i) res.total_cost += cost.at(i, res.col_of_row[i]);
  return res;
}

UniqueIdAssignment resolve_ids(const Matrix& id_probs, const IdState& state) {
  const int L = id_probs.rows();
  UniqueIdAssignment out;
  if (L == 0) return out;
  if (id_probs.cols() != state.capacity + 1)
    throw std::invalid_argument("resolve_ids: expected " + std::to_string(state.capacity + 1) +
                                " probability columns, got " + std::to_string(id_probs.cols()));
  for (int i = 0; i < L; ++i) {
    double sum = 0.0;
    for (int j = 0; j < id_probs.cols(); ++j) {
      const double p = id_probs.at(i, j);
      if (!(p >= 0.0))
        throw std::invalid_argument("resolve_ids: negative or NaN probability in row " +
                                    std::to_string(i));
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("resolve_ids: row " + std::to_string(i) +
                                  " sums to " + std::to_string(sum));
  }

  const int s = state.assigned;
  const int n = state.capacity;
  // columns: S existing IDs, then L copies of NEW, then L copies of BACKGROUND
  Matrix cost(L, s + 2 * L);
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < s; ++j) cost.at(i, j) = -std::log(id_probs.at(i, j) + 1e-12);
    const double cnew = -std::log(id_probs.at(i, n - 1) + 1e-12);
    const double cbg = -std::log(id_probs.at(i, n) + 1e-12);
    for (int r = 0; r < L; ++r) {
      cost.at(i, s + r) = cnew;
      cost.at(i, s + L + r) = cbg;
    }
  }
  const HungarianResult h = hungarian(cost);
  out.entries.resize(L);
  for (int i = 0; i < L; ++i) {
    const int col = h.col_of_row[i];
    if (col < s)
      out.entries[i] = {IdKind::Existing, col};
    else if (col < s + L)
      out.entries[i] = {IdKind::New, -1};
    else
      out.entries[i] = {IdKind::Background, -1};
  }
  return out;
}

AdmitResult admit_new(const UniqueIdAssignment& assignment, IdState state,
                      const std::vector<double>& scores) {
  if (scores.size() != assignment.entries.size())
    throw std::invalid_argument("admit_new: scores/assignment length mismatch");
  AdmitResult res{assignment, state};
  std::vector<int> fresh;
  for (int i = 0; i < int(assignment.entries.size()); ++i)
    if (assignment.entries[i].kind == IdKind::New) fresh.push_back(i);
  std::sort(fresh.begin(), fresh.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  for (int i : fresh) {
    if (res.state.assigned < res.state.capacity - 1)
      res.assignment.entries[i] = {IdKind::Existing, res.state.assigned++};
    else
      res.assignment.entries[i] = {IdKind::Discarded, -1};
  }
  return res;
}

IdMask build_id_mask(const UniqueIdAssignment& assignment, const std::vector<Mask>& masks,
                     const std::vector<double>& scores, int n_ids, int pixels) {
  const std::size_t L = assignment.entries.size();
  if (masks.size() != L || scores.size() != L)
    throw std::invalid_argument("build_id_mask: proposal count mismatch");
  std::vector<int> row_of_pixel(pixels, n_ids);
  std::vector<double> best(pixels, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < L; ++i) {
    const ProposalId& e = assignment.entries[i];
    if (e.kind == IdKind::New)
      throw std::invalid_argument("build_id_mask: NEW entry at proposal " + std::to_string(i) +
                                  " (run admit_new first)");
    if (e.kind == IdKind::Discarded) continue;
    int target;
    if (e.kind == IdKind::Existing) {
      if (e.id < 0 || e.id > n_ids - 2)
        throw std::invalid_argument("build_id_mask: ID " + std::to_string(e.id) + " out of range");
      target = e.id;
    } else {
      target = n_ids;  // background-assigned proposals paint the background row
    }
    if (int(masks[i].size()) != pixels)
      throw std::invalid_argument("build_id_mask: mask " + std::to_string(i) + " has " +
                                  std::to_string(masks[i].size()) + " pixels, expected " +
                                  std::to_string(pixels));
    for (int p = 0; p < pixels; ++p) {
      if (!masks[i][p]) continue;
      if (scores[i] > best[p]) {
        best[p] = scores[i];
        row_of_pixel[p] = target;
      }
    }
  }
  IdMask y;
  y.n_ids = n_ids;
  y.pixels = pixels;
  y.grid = Matrix(n_ids + 1, pixels);
  for (int p = 0; p < pixels; ++p) y.grid.at(row_of_pixel[p], p) = 1.0;
  return y;
}

Matrix embed(const IdMask& y, const IdBank& bank) {
  if (y.n_ids != bank.n_ids())
    throw std::invalid_argument("embed: grid is for " + std::to_string(y.n_ids) +
                                " IDs but bank holds " + std::to_string(bank.n_ids()));
  return matmul(transpose(y.grid), bank.table());
}

}  // namespace iai
