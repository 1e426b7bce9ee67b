#include "iai/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "iai/postproc.hpp"

namespace iai {

namespace {

double frame_iou(const Mask& a, const Mask& b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return 0.0;
  return mask_iou(a, b);
}

// all prediction-GT tube IoUs for one video, preds down the rows
std::vector<std::vector<double>> iou_table(const std::vector<MaskTube>& preds,
                                           const std::vector<MaskTube>& gts) {
  std::vector<std::vector<double>> t(preds.size(), std::vector<double>(gts.size(), 0.0));
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < gts.size(); ++j) t[i][j] = tube_iou(preds[i], gts[j]);
  return t;
}

double interpolated_ap(std::vector<std::pair<double, bool>> hits, int n_gt) {
  // hits: (confidence, is-true-positive), any order
  if (n_gt == 0) return 0.0;
  std::stable_sort(hits.begin(), hits.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> recall, precision;
  int tp = 0, fp = 0;
  for (const auto& [conf, ok] : hits) {
    (void)conf;
    ok ? ++tp : ++fp;
    recall.push_back(double(tp) / n_gt);
    precision.push_back(double(tp) / (tp + fp));
  }
  // running max from the right, then sample 101 recall points
  for (int i = int(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), target);
    ap += it == recall.end() ? 0.0 : precision[it - recall.begin()];
  }
  return ap / 101.0;
}

}  // namespace

double tube_iou(const MaskTube& a, const MaskTube& b) {
  const std::size_t T = std::max(a.frames.size(), b.frames.size());
  long long inter = 0, uni = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const Mask* ma = t < a.frames.size() ? &a.frames[t] : nullptr;
    const Mask* mb = t < b.frames.size() ? &b.frames[t] : nullptr;
    const bool ea = !ma || ma->empty(), eb = !mb || mb->empty();
    if (ea && eb) continue;
    if (ea || eb) {
      const Mask& m = ea ? *mb : *ma;
      for (auto v : m) uni += v != 0;
      continue;
    }
    if (ma->size() != mb->size())
      throw std::invalid_argument("tube_iou: frame geometry mismatch");
    for (std::size_t p = 0; p < ma->size(); ++p) {
      const bool pa = (*ma)[p] != 0, pb = (*mb)[p] != 0;
      inter += pa && pb;
      uni += pa || pb;
    }
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

long long count_id_switches(const std::vector<MaskTube>& preds, const std::vector<MaskTube>& gts) {
  long long switches = 0;
  for (const MaskTube& g : gts) {
    int prev_id = -1;
    for (std::size_t t = 0; t < g.frames.size(); ++t) {
      if (g.frames[t].empty()) continue;
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (t >= preds[i].frames.size() || preds[i].frames[t].empty()) continue;
        const double iou = frame_iou(preds[i].frames[t], g.frames[t]);
        if (iou > best_iou) {
          best_iou = iou;
          best = int(i);
        }
      }
      if (best < 0 || best_iou < 0.5) continue;  // unmatched frame: a gap, not a switch
      const int id = preds[best].id;
      if (prev_id >= 0 && id != prev_id) switches += 1;
      prev_id = id;
    }
  }
  return switches;
}

EvalReport evaluate(const std::vector<VideoTubes>& preds, const std::vector<VideoTubes>& gts) {
  EvalReport rep;
  std::map<int, const std::vector<MaskTube>*> pred_of;
  for (const VideoTubes& v : preds) {
    if (!pred_of.emplace(v.video_id, &v.tubes).second)
      throw std::invalid_argument("evaluate: duplicate prediction video id");
  }
  static const std::vector<MaskTube> kNone;

  struct VideoPack {
    const std::vector<MaskTube>* preds;
    const std::vector<MaskTube>* gts;
    std::vector<std::vector<double>> iou;
    std::vector<int> conf_order;  // pred indices by confidence desc
  };
  std::vector<VideoPack> packs;
  std::set<int> categories;
  for (const VideoTubes& v : gts) {
    VideoPack pk;
    pk.gts = &v.tubes;
    const auto it = pred_of.find(v.video_id);
    pk.preds = it == pred_of.end() ? &kNone : it->second;
    pk.iou = iou_table(*pk.preds, *pk.gts);
    pk.conf_order.resize(pk.preds->size());
    for (std::size_t i = 0; i < pk.preds->size(); ++i) pk.conf_order[i] = int(i);
    std::stable_sort(pk.conf_order.begin(), pk.conf_order.end(), [&](int a, int b) {
      return (*pk.preds)[a].confidence > (*pk.preds)[b].confidence;
    });
    for (const MaskTube& t : v.tubes) categories.insert(t.category);
    packs.push_back(std::move(pk));
  }

  // greedy matching of one (category, threshold) slice; cap < 0 means no cap
  const auto match_slice = [&](int category, double thresh, int cap,
                               std::vector<std::pair<double, bool>>* hits, int* n_gt,
                               int* n_matched) {
    *n_gt = 0;
    *n_matched = 0;
    for (const VideoPack& pk : packs) {
      std::vector<int> gt_idx;
      for (std::size_t j = 0; j < pk.gts->size(); ++j)
        if ((*pk.gts)[j].category == category) gt_idx.push_back(int(j));
      *n_gt += int(gt_idx.size());
      std::vector<char> taken(pk.gts->size(), 0);
      int used = 0;
      for (int i : pk.conf_order) {
        if (cap >= 0 && used >= cap) break;
        ++used;  // the cap is on predictions considered per video, any class
        if ((*pk.preds)[i].category != category) continue;
        int best = -1;
        double best_iou = 0.0;
        for (int j : gt_idx) {
          if (taken[j]) continue;
          if (pk.iou[i][j] > best_iou) {
            best_iou = pk.iou[i][j];
            best = j;
          }
        }
        const bool ok = best >= 0 && best_iou >= thresh;
        if (ok) {
          taken[best] = 1;
          *n_matched += 1;
        }
        if (hits) hits->emplace_back((*pk.preds)[i].confidence, ok);
      }
    }
  };

  double ar1_sum = 0.0, ar10_sum = 0.0, map_sum = 0.0;
  for (int ti = 0; ti < 10; ++ti) {
    const double thresh = 0.5 + 0.05 * ti;
    double ap_sum = 0.0;
    int gt_total = 0, matched1 = 0, matched10 = 0;
    for (int c : categories) {
      std::vector<std::pair<double, bool>> hits;
      int n_gt = 0, n_matched = 0;
      match_slice(c, thresh, -1, &hits, &n_gt, &n_matched);
      ap_sum += interpolated_ap(std::move(hits), n_gt);
      int m1 = 0, m10 = 0, g = 0;
      match_slice(c, thresh, 1, nullptr, &g, &m1);
      match_slice(c, thresh, 10, nullptr, &g, &m10);
      gt_total += g;
      matched1 += m1;
      matched10 += m10;
    }
    const double n_cat = categories.empty() ? 1.0 : double(categories.size());
    rep.ap_per_threshold[ti] = ap_sum / n_cat;
    if (gt_total > 0) {
      ar1_sum += double(matched1) / gt_total;
      ar10_sum += double(matched10) / gt_total;
    }
  }
  for (double ap : rep.ap_per_threshold) map_sum += ap;
  rep.map = map_sum / 10.0;
  rep.ar1 = ar1_sum / 10.0;
  rep.ar10 = ar10_sum / 10.0;
  rep.ap50 = rep.ap_per_threshold[0];
  rep.ap75 = rep.ap_per_threshold[5];
  for (const VideoPack& pk : packs) rep.switches += count_id_switches(*pk.preds, *pk.gts);
  return rep;
}

}  // namespace iai
