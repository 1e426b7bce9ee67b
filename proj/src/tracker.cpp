#include "iai/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "iai/rng.hpp"

namespace iai {

namespace {
enum : std::uint64_t { kTagBank = 0x11, kTagHab = 0x12 };

void check_detection(const Detection& d, int pixels, int capacity, int index) {
  const auto fail = [index](const std::string& why) {
    throw std::runtime_error("detector contract: proposal " + std::to_string(index) + " " + why);
  };
  if (int(d.mask.size()) != pixels) fail("has a mask of the wrong size");
  bool any = false;
  for (auto v : d.mask) {
    if (v > 1) fail("has a non-binary mask");
    any |= v != 0;
  }
  if (!any) fail("has an empty mask");
  if (d.class_probs.empty()) fail("has no class probabilities");
  if (int(d.id_probs.size()) != capacity + 1) fail("has the wrong ID probability width");
  for (const auto* probs : {&d.class_probs, &d.id_probs}) {
    double sum = 0.0;
    for (double p : *probs) {
      if (!(p >= 0.0)) fail("has a negative or NaN probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail("has a probability row that does not sum to 1");
  }
  if (!(d.score >= 0.0 && d.score <= 1.0)) fail("has a score outside [0, 1]");
  if (d.box[0] > d.box[2] || d.box[1] > d.box[3]) fail("has an inverted box");
}

std::vector<std::vector<int>> pixels_per_id(const IdMask& y) {
  std::vector<std::vector<int>> out(y.n_ids - 1);
  for (int d = 0; d + 1 < y.n_ids; ++d) {
    const double* row = y.grid.row(d);
    for (int p = 0; p < y.pixels; ++p)
      if (row[p] != 0.0) out[d].push_back(p);
  }
  return out;
}

}  // namespace

TrackerState TrackerState::make(IdBank bank, HabParams params, HabConfig config, int height,
                                int width, double nms_iou) {
  TrackerState s;
  s.id_state = IdState{bank.n_ids(), 0, 1};
  s.bank = std::move(bank);
  s.params = std::move(params);
  s.config = config;
  s.height = height;
  s.width = width;
  s.nms_iou = nms_iou;
  if (s.bank.channels() != s.params.channels)
    throw std::invalid_argument("TrackerState: bank/projection channel mismatch");
  return s;
}

FrameResult process_frame(const Matrix& features, TrackerState& state, const Detector& detector) {
  const int pixels = state.height * state.width;
  const int capacity = state.id_state.capacity;
  if (features.rows() != pixels || features.cols() != state.params.channels)
    throw std::invalid_argument("process_frame: features are " + std::to_string(features.rows()) +
                                "x" + std::to_string(features.cols()) + ", expected " +
                                std::to_string(pixels) + "x" +
                                std::to_string(state.params.channels));

  FusedView fused(features, state.memory, state.params, state.config);
  FrameContext ctx;
  ctx.height = state.height;
  ctx.width = state.width;
  ctx.frame_index = state.id_state.frame_index;
  ctx.memory = &state.memory;
  ctx.config = state.config;
  ctx.global_pixels = &state.global_pixels;
  ctx.local_pixels = &state.local_pixels;

  const std::vector<Detection> dets = detector(fused, ctx);
  for (std::size_t i = 0; i < dets.size(); ++i) check_detection(dets[i], pixels, capacity, int(i));

  const std::vector<int> kept = class_agnostic_nms(dets, state.nms_iou);
  const int L = int(kept.size());
  Matrix id_probs(L, capacity + 1);
  std::vector<double> comb(L);
  std::vector<Mask> masks(L);
  for (int i = 0; i < L; ++i) {
    const Detection& d = dets[kept[i]];
    for (int j = 0; j <= capacity; ++j) id_probs.at(i, j) = d.id_probs[j];
    comb[i] = combined_score(d);
    masks[i] = d.mask;
  }

  UniqueIdAssignment asg = resolve_ids(id_probs, state.id_state);
  AdmitResult adm = admit_new(asg, state.id_state, comb);
  IdMask y = build_id_mask(adm.assignment, masks, comb, capacity, pixels);
  Matrix e = embed(y, state.bank);
  MemoryEntry entry = build_memory(features, e, state.params, state.id_state.frame_index);
  std::vector<std::vector<int>> id_pixels = pixels_per_id(y);

  state.memory.local = entry;
  state.local_pixels = id_pixels;
  if (state.id_state.frame_index == 1) {
    state.memory.global = std::move(entry);
    state.global_pixels = std::move(id_pixels);
  }

  FrameResult out;
  out.frame_index = state.id_state.frame_index;
  for (int i = 0; i < L; ++i) {
    const ProposalId& pid = adm.assignment.entries[i];
    if (pid.kind != IdKind::Existing) continue;
    const Detection& d = dets[kept[i]];
    int cls = 0;
    for (std::size_t c = 1; c < d.class_probs.size(); ++c)
      if (d.class_probs[c] > d.class_probs[cls]) cls = int(c);
    out.instances.push_back({pid.id, cls, masks[i], comb[i], d.class_probs});
  }

  state.id_state = adm.state;
  state.id_state.frame_index += 1;
  return out;
}

VideoResult run_video(const std::vector<Matrix>& frames, TrackerState state,
                      const Detector& detector) {
  if (frames.empty()) throw std::invalid_argument("run_video: no frames");
  VideoResult res;
  res.frames.reserve(frames.size());
  for (const Matrix& f : frames) res.frames.push_back(process_frame(f, state, detector));

  const int T = int(frames.size());
  std::map<int, MaskTube> by_id;
  std::map<int, std::vector<double>> cls_acc;
  std::map<int, double> score_sum;
  std::map<int, int> seen;
  for (int t = 0; t < T; ++t) {
    for (const InstanceOut& ins : res.frames[t].instances) {
      MaskTube& tube = by_id[ins.id];
      if (tube.frames.empty()) {
        tube.id = ins.id;
        tube.frames.assign(T, Mask{});
        cls_acc[ins.id].assign(ins.class_probs.size(), 0.0);
      }
      tube.frames[t] = ins.mask;
      auto& acc = cls_acc[ins.id];
      if (acc.size() != ins.class_probs.size())
        throw std::runtime_error("run_video: detector changed its category count mid-video");
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += ins.score * ins.class_probs[c];
      score_sum[ins.id] += ins.score;
      seen[ins.id] += 1;
    }
  }
  for (auto& [id, tube] : by_id) {
    const auto& acc = cls_acc[id];
    int best = 0;
    for (std::size_t c = 1; c < acc.size(); ++c)
      if (acc[c] > acc[best]) best = int(c);
    tube.category = best;
    tube.confidence = score_sum[id] / seen[id];
    res.tubes.push_back(std::move(tube));
  }
  return res;
}

IdBank default_bank(std::uint64_t model_seed, int n_ids, int channels) {
  return IdBank::seeded(mix64(model_seed, kTagBank), n_ids, channels);
}

HabParams default_hab(std::uint64_t model_seed, int channels) {
  return HabParams::seeded(mix64(model_seed, kTagHab), channels);
}

}  // namespace iai
