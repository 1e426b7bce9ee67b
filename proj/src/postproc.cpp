#include "iai/postproc.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace iai {

double combined_score(const Detection& d) {
  if (d.class_probs.empty() || d.id_probs.size() < 2)
    throw std::invalid_argument("combined_score: missing probability vectors");
  double cls = d.class_probs[0];
  for (double p : d.class_probs) cls = std::max(cls, p);
  double idp = d.id_probs[0];
  for (std::size_t j = 0; j + 1 < d.id_probs.size(); ++j) idp = std::max(idp, d.id_probs[j]);
  return (cls + idp) / 2.0;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mask_iou: length mismatch");
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool pa = a[i] != 0, pb = b[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

std::vector<int> class_agnostic_nms(const std::vector<Detection>& dets, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0))
    throw std::invalid_argument("class_agnostic_nms: threshold must be in (0, 1)");
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> s(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) s[i] = combined_score(dets[i]);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return a < b;
  });
  std::vector<int> kept;
  for (int i : order) {
    bool ok = true;
    for (int k : kept) {
      if (mask_iou(dets[i].mask, dets[k].mask) > iou_thresh) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(i);
  }
  return kept;
}

}  // namespace iai
