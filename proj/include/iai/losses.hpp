#pragma once

#include <vector>

namespace iai {

struct FocalParams {
  double alpha = 0.25;
  double lambda = 2.0;
};

// Numerically stable softmax of a logit vector (max subtraction, left-to-right
// sums), matching the Matrix row kernel digit for digit.
std::vector<double> softmax_vec(const std::vector<double>& logits);

// -alpha * (1-p)^lambda * ln(p) with p = probs[target] clamped to >= 1e-12.
// alpha=1, lambda=0 reduces to plain cross-entropy.
double focal_id_loss(const std::vector<double>& probs, int target, const FocalParams& fp);

// Analytic gradient of focal_id_loss(softmax(logits), target) w.r.t. logits.
std::vector<double> focal_id_grad(const std::vector<double>& logits, int target,
                                  const FocalParams& fp);

// -ln(probs[target]), clamped; computed through the focal path with alpha=1,
// lambda=0 so the two are identical by construction.
double ce_id_loss(const std::vector<double>& probs, int target);

// Classification + identity terms; box and mask terms have no trainable source
// here and contribute nothing.
double total_loss(double cls_loss, double id_loss);

// Ground-truth identity labels for a sequence. label[t][a] is the class for
// annotation a at frame t (-1 when absent): the new-instance class n_ids-1 at
// its first appearance, its assigned ID afterwards. id_of[a] is that ID.
struct SequenceLabels {
  std::vector<std::vector<int>> label;
  std::vector<int> id_of;
};

// Assign IDs 0,1,2,... in order of first appearance (ties by annotation
// order). presence[t][a] says whether annotation a is visible at frame t.
// Rejects sequences with more instances than the n_ids-1 real-ID capacity.
SequenceLabels assign_gt_ids(const std::vector<std::vector<char>>& presence, int n_ids);

}  // namespace iai
