#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "iai/association.hpp"
#include "iai/identity.hpp"
#include "iai/postproc.hpp"

namespace iai {

// Fused per-pixel features, computed on first request and cached. Detectors
// that take their proposals from elsewhere never pay for the attention pass;
// detectors that need the fusion call get().
class FusedView {
 public:
  FusedView(const Matrix& features, const MemoryStore& store, const HabParams& params,
            const HabConfig& cfg)
      : features_(features), store_(store), params_(params), cfg_(cfg) {}

  const Matrix& get() const {
    if (!cache_) cache_ = hab_forward(features_, store_, params_, cfg_);
    return *cache_;
  }
  const Matrix& raw() const { return features_; }

 private:
  const Matrix& features_;
  const MemoryStore& store_;
  const HabParams& params_;
  const HabConfig& cfg_;
  mutable std::optional<Matrix> cache_;
};

// Read-only view of tracker state offered to a detector: frame geometry, the
// memory entries, the active branch toggles, and which pixels each ID covered
// in the frame each memory entry was built from.
struct FrameContext {
  int height = 0;
  int width = 0;
  int frame_index = 1;
  const MemoryStore* memory = nullptr;
  HabConfig config;
  const std::vector<std::vector<int>>* global_pixels = nullptr;
  const std::vector<std::vector<int>>* local_pixels = nullptr;
};

using Detector = std::function<std::vector<Detection>(const FusedView&, const FrameContext&)>;

struct TrackerState {
  IdState id_state;
  MemoryStore memory;
  IdBank bank;
  HabParams params;
  HabConfig config;
  double nms_iou = 0.5;
  int height = 0;
  int width = 0;
  // pixel list per ID for the frames backing the two memory entries
  std::vector<std::vector<int>> global_pixels, local_pixels;

  static TrackerState make(IdBank bank, HabParams params, HabConfig config, int height, int width,
                           double nms_iou = 0.5);
};

struct InstanceOut {
  int id = -1;
  int category = -1;
  Mask mask;
  double score = 0.0;  // combined score
  std::vector<double> class_probs;

  bool operator==(const InstanceOut&) const = default;
};

struct FrameResult {
  int frame_index = 0;
  std::vector<InstanceOut> instances;

  bool operator==(const FrameResult&) const = default;
};

struct MaskTube {
  int id = -1;
  int category = -1;
  double confidence = 0.0;
  std::vector<Mask> frames;  // empty mask = absent that frame

  bool operator==(const MaskTube&) const = default;
};

// One online step: fuse (lazily) -> detect -> score -> suppress -> resolve ->
// admit -> paint ID mask -> embed -> rebuild memory. The new memory entry
// replaces local and, on frame 1, also becomes the immutable global entry.
FrameResult process_frame(const Matrix& features, TrackerState& state, const Detector& detector);

struct VideoResult {
  std::vector<FrameResult> frames;
  std::vector<MaskTube> tubes;
};

// Strictly sequential frame loop plus per-ID tube aggregation: tube class is
// the argmax of the score-weighted mean class distribution, tube confidence
// the mean combined score over the frames the instance appears in.
VideoResult run_video(const std::vector<Matrix>& frames, TrackerState state,
                      const Detector& detector);

// Canonical model wiring used by the toolchain: bank and projection weights
// derived from one model seed.
IdBank default_bank(std::uint64_t model_seed, int n_ids, int channels);
HabParams default_hab(std::uint64_t model_seed, int channels);

}  // namespace iai
