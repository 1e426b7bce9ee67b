#pragma once

#include <cstdint>
#include <optional>

#include "iai/matrix.hpp"

namespace iai {

// Projection weights of one hybrid association block: a memory-attention
// tracking branch (w_q, w_k, w_v) and a classification projector (w_cls).
struct HabParams {
  int channels = 0;
  Matrix w_q, w_k, w_v, w_cls;

  // Orthonormal initialization. Queries and keys share one rotation with the
  // keys scaled up, so attention logits are a sharpened dot product of the raw
  // features themselves and tokens with matching appearance dominate the
  // softmax from step one. Values and the classifier get independent
  // rotations. (Independent Gaussian projections make the logit spread shrink
  // like 1/sqrt(C) and the untrained attention collapses toward uniform,
  // which carries no identity signal.)
  static HabParams seeded(std::uint64_t seed, int channels);
};

struct MemoryEntry {
  Matrix keys;    // HW x C
  Matrix values;  // HW x C
  int frame_index = 0;

  bool operator==(const MemoryEntry&) const = default;
};

// global: the first completed frame, set once and never replaced.
// local: the most recent completed frame, replaced every frame.
struct MemoryStore {
  std::optional<MemoryEntry> global;
  std::optional<MemoryEntry> local;
};

struct HabConfig {
  bool enable_global = true;
  bool enable_local = true;
  bool enable_cls = true;
};

// keys = features * w_k; values = (features + id_embedding) * w_v.
MemoryEntry build_memory(const Matrix& features, const Matrix& id_embedding,
                         const HabParams& params, int frame_index);

// Two-branch fusion, output HW x 2C = [tracking | classification].
// Tracking = features*w_q plus one attention readout per memory that exists
// and is enabled. Classification = features*w_cls when enabled, else the
// features untouched.
Matrix hab_forward(const Matrix& features, const MemoryStore& store, const HabParams& params,
                   const HabConfig& cfg);

}  // namespace iai
