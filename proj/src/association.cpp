#include "iai/association.hpp"

#include <stdexcept>

#include "iai/rng.hpp"

namespace iai {

namespace {
constexpr double kKeySharpness = 64.0;
enum : std::uint64_t { kTagShared = 1, kTagValue = 2, kTagCls = 3 };
}  // namespace

HabParams HabParams::seeded(std::uint64_t seed, int channels) {
  HabParams p;
  p.channels = channels;
  p.w_q = random_rotation(mix64(seed, kTagShared), channels);
  p.w_k = p.w_q;
  for (int i = 0; i < channels; ++i)
    for (int j = 0; j < channels; ++j) p.w_k.at(i, j) *= kKeySharpness;
  p.w_v = random_rotation(mix64(seed, kTagValue), channels);
  p.w_cls = random_rotation(mix64(seed, kTagCls), channels);
  return p;
}

MemoryEntry build_memory(const Matrix& features, const Matrix& id_embedding,
                         const HabParams& params, int frame_index) {
  if (features.rows() != id_embedding.rows() || features.cols() != id_embedding.cols())
    throw std::invalid_argument("build_memory: features/embedding shape mismatch");
  if (features.cols() != params.channels)
    throw std::invalid_argument("build_memory: channel mismatch");
  MemoryEntry e;
  e.keys = matmul(features, params.w_k);
  Matrix sum = features;
  add_inplace(sum, id_embedding);
  e.values = matmul(sum, params.w_v);
  e.frame_index = frame_index;
  return e;
}

Matrix hab_forward(const Matrix& features, const MemoryStore& store, const HabParams& params,
                   const HabConfig& cfg) {
  if (!cfg.enable_global && !cfg.enable_local && !cfg.enable_cls)
    throw std::invalid_argument("hab_forward: every branch disabled");
  if (features.cols() != params.channels)
    throw std::invalid_argument("hab_forward: channel mismatch");
  if (!features.is_finite()) throw std::invalid_argument("hab_forward: non-finite features");
  const Matrix q = matmul(features, params.w_q);
  Matrix track = q;
  if (cfg.enable_global && store.global)
    add_inplace(track, attention(q, store.global->keys, store.global->values));
  if (cfg.enable_local && store.local)
    add_inplace(track, attention(q, store.local->keys, store.local->values));
  Matrix cls = cfg.enable_cls ? matmul(features, params.w_cls) : features;
  return hconcat(track, cls);
}

}  // namespace iai
