#pragma once

#include <cstdint>
#include <vector>

#include "iai/matrix.hpp"

namespace iai {

using Mask = std::vector<std::uint8_t>;

// Identity coding for a capacity of n_ids: values 0..n_ids-2 are real,
// reusable-never instance IDs, n_ids-1 is the "new instance" class and n_ids
// is background. A bank therefore has n_ids+1 rows.
class IdBank {
 public:
  IdBank() = default;
  IdBank(int n_ids, int channels, Matrix table)
      : n_ids_(n_ids), channels_(channels), table_(std::move(table)) {}

  // rows drawn from a standard normal scaled by 1/sqrt(channels)
  static IdBank seeded(std::uint64_t seed, int n_ids, int channels);

  int n_ids() const { return n_ids_; }
  int channels() const { return channels_; }
  const Matrix& table() const { return table_; }
  const double* row(int id) const { return table_.row(id); }

 private:
  int n_ids_ = 0;
  int channels_ = 0;
  Matrix table_;
};

struct IdState {
  int capacity = 0;     // n_ids
  int assigned = 0;     // S: how many real IDs are in use; never decreases
  int frame_index = 1;  // 1-based index of the frame about to be processed
};

// (n_ids+1) x pixels one-hot-per-column grid: each pixel belongs to exactly
// one row (an instance ID or the background row n_ids).
struct IdMask {
  int n_ids = 0;
  int pixels = 0;
  Matrix grid;
};

enum class IdKind { Existing, New, Background, Discarded };

struct ProposalId {
  IdKind kind = IdKind::Background;
  int id = -1;  // valid only when kind == Existing
};

struct UniqueIdAssignment {
  std::vector<ProposalId> entries;  // positionally aligned with the proposals
};

struct HungarianResult {
  std::vector<int> col_of_row;
  double total_cost = 0.0;
};

// Min-cost assignment of every row to a distinct column; requires
// rows <= cols. Ties prefer the lowest row index, then the lowest column.
HungarianResult hungarian(const Matrix& cost);

// Turn per-proposal ID probability rows (width n_ids+1) into a unique
// assignment over {already-assigned IDs} + NEW + BACKGROUND. Uniqueness is
// enforced only on real IDs: the NEW and BACKGROUND columns are replicated
// once per proposal so any number of proposals may land on them.
UniqueIdAssignment resolve_ids(const Matrix& id_probs, const IdState& state);

struct AdmitResult {
  UniqueIdAssignment assignment;
  IdState state;
};

// Give NEW proposals fresh IDs in descending score order (ties by proposal
// index). Once all capacity-1 real IDs exist, the rest are discarded.
AdmitResult admit_new(const UniqueIdAssignment& assignment, IdState state,
                      const std::vector<double>& scores);

// Paint proposal masks into an ID grid. Overlapping pixels go to the highest
// scoring proposal (ties: lowest proposal index); uncovered pixels to the
// background row. Requires a NEW-free assignment (admit_new already ran).
IdMask build_id_mask(const UniqueIdAssignment& assignment, const std::vector<Mask>& masks,
                     const std::vector<double>& scores, int n_ids, int pixels);

// E = Y^T D. Columns of Y are one-hot, so row p of the result is exactly the
// bank row of pixel p's ID.
Matrix embed(const IdMask& y, const IdBank& bank);

}  // namespace iai
