#pragma once

#include <array>
#include <vector>

#include "iai/identity.hpp"

namespace iai {

// One detection proposal. id_probs spans the n_ids+1 identity classes
// (existing IDs, new-instance, background); class_probs spans the categories.
struct Detection {
  Mask mask;
  std::array<int, 4> box{0, 0, 0, 0};  // x0, y0, x1, y1 inclusive pixel bounds
  std::vector<double> class_probs;
  std::vector<double> id_probs;
  double score = 1.0;
};

// (best class probability + best non-background ID probability) / 2.
// The new-instance class counts as foreground here: a first appearance must
// be able to outscore suppression.
double combined_score(const Detection& d);

// Jaccard overlap of two equal-length binary masks; 0 when both are empty.
double mask_iou(const Mask& a, const Mask& b);

// Greedy NMS on combined_score (descending, ties by input index), keeping a
// detection only when its mask IoU with everything already kept is <= the
// threshold. Class labels are ignored entirely. Returns indices in kept order.
std::vector<int> class_agnostic_nms(const std::vector<Detection>& dets, double iou_thresh);

}  // namespace iai
