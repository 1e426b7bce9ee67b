#pragma once

#include <array>
#include <vector>

#include "iai/tracker.hpp"

namespace iai {

struct EvalReport {
  double map = 0.0;   // mean AP over IoU thresholds 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar1 = 0.0;   // recall with at most 1 prediction per video
  double ar10 = 0.0;  // ... at most 10
  long long switches = 0;
  std::array<double, 10> ap_per_threshold{};
};

// Spatio-temporal Jaccard: summed per-frame intersections over summed unions.
// Tubes may differ in length; missing frames count as empty. 0 when both
// tubes are empty everywhere.
double tube_iou(const MaskTube& a, const MaskTube& b);

struct VideoTubes {
  int video_id = 0;
  std::vector<MaskTube> tubes;
};

// Per GT instance, the number of visible frames whose best-overlapping
// predicted ID (frame mask IoU >= 0.5) differs from the previous matched
// frame's. Unmatched stretches are gaps, not switches.
long long count_id_switches(const std::vector<MaskTube>& preds, const std::vector<MaskTube>& gts);

// Greedy confidence-descending matching per category and IoU threshold (a GT
// tube matches at most once), 101-point interpolated AP, averaged over the
// categories present in the ground truth and over thresholds. AR@k caps each
// video at its k most confident predictions. Prediction videos are paired to
// GT videos by id; a GT video with no prediction entry counts as all-missed.
EvalReport evaluate(const std::vector<VideoTubes>& preds, const std::vector<VideoTubes>& gts);

}  // namespace iai
