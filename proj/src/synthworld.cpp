#include "iai/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "iai/rng.hpp"

namespace iai {

namespace {

enum : std::uint64_t {
  kTagScene = 0x21,
  kTagSig = 0x22,
  kTagBgSig = 0x23,
  kTagNoise = 0x24,
  kTagHead = 0x25,
  kTagSampler = 0x26,
};

void check_world(const WorldConfig& cfg) {
  if (cfg.height < 8 || cfg.width < 8)
    throw std::invalid_argument("world: dimensions must be at least 8x8");
  if (cfg.frames < 1) throw std::invalid_argument("world: need at least one frame");
  if (cfg.max_instances < 0) throw std::invalid_argument("world: negative instance count");
  if (cfg.categories < 1) throw std::invalid_argument("world: need at least one category");
  if (cfg.occlusion_rate < 0.0 || cfg.occlusion_rate > 1.0)
    throw std::invalid_argument("world: occlusion rate outside [0, 1]");
  if (cfg.noise_sigma < 0.0) throw std::invalid_argument("world: negative noise sigma");
  if (cfg.channels < 2) throw std::invalid_argument("world: need at least 2 channels");
  if (cfg.max_instances + 1 > cfg.channels)
    throw std::invalid_argument("world: " + std::to_string(cfg.max_instances) +
                                " instances cannot get mutually orthogonal signatures in " +
                                std::to_string(cfg.channels) + " channels");
}

std::vector<double> pool_rows(const Matrix& m, const std::vector<int>& px) {
  std::vector<double> out(m.cols(), 0.0);
  for (int p : px) {
    const double* row = m.row(p);
    for (int c = 0; c < m.cols(); ++c) out[c] += row[c];
  }
  for (double& v : out) v /= double(px.size());
  return out;
}

std::vector<int> mask_pixels(const Mask& m) {
  std::vector<int> px;
  for (std::size_t p = 0; p < m.size(); ++p)
    if (m[p]) px.push_back(int(p));
  return px;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom < 1e-12 ? 0.0 : dot / denom;
}

std::vector<double> smoothed_class_probs(int category, int categories, double smooth) {
  std::vector<double> p(categories, categories > 1 ? (1.0 - smooth) / (categories - 1) : 0.0);
  p[category] = categories > 1 ? smooth : 1.0;
  return p;
}

// per-ID appearance prototypes recovered from whatever memory the active
// config exposes; the last frame wins over the first when an ID is in both
struct ProtoSet {
  std::vector<std::vector<double>> sig;
  std::vector<char> have;
};

void recover_from_entry(const MemoryEntry& entry, const std::vector<std::vector<int>>& id_pixels,
                        const Matrix& w_v_inv, const IdBank& bank, ProtoSet& ps) {
  const int c = w_v_inv.rows();
  for (std::size_t d = 0; d < id_pixels.size(); ++d) {
    if (ps.have[d] || id_pixels[d].empty()) continue;
    const std::vector<double> pooled = pool_rows(entry.values, id_pixels[d]);
    std::vector<double> rec(c, 0.0);
    for (int k = 0; k < c; ++k) {
      const double pk = pooled[k];
      const double* inv_row = w_v_inv.row(k);
      for (int j = 0; j < c; ++j) rec[j] += pk * inv_row[j];
    }
    const double* bank_row = bank.row(int(d));
    for (int j = 0; j < c; ++j) rec[j] -= bank_row[j];
    ps.sig[d] = std::move(rec);
    ps.have[d] = 1;
  }
}

ProtoSet recover_prototypes(const FrameContext& ctx, const Matrix& w_v_inv, const IdBank& bank) {
  ProtoSet ps;
  ps.sig.resize(bank.n_ids() - 1);
  ps.have.assign(bank.n_ids() - 1, 0);
  if (ctx.config.enable_local && ctx.memory->local && ctx.local_pixels)
    recover_from_entry(*ctx.memory->local, *ctx.local_pixels, w_v_inv, bank, ps);
  if (ctx.config.enable_global && ctx.memory->global && ctx.global_pixels)
    recover_from_entry(*ctx.memory->global, *ctx.global_pixels, w_v_inv, bank, ps);
  return ps;
}

std::vector<double> oracle_id_row(const std::vector<double>& pooled_feature, const ProtoSet& ps,
                                  const OracleConfig& ocfg, int n_ids) {
  std::vector<double> sims(n_ids + 1, -1.0);
  for (int d = 0; d + 1 < n_ids; ++d)
    if (ps.have[d]) sims[d] = cosine(pooled_feature, ps.sig[d]);
  sims[n_ids - 1] = ocfg.margin;  // the new-instance class: the bar to beat
  sims[n_ids] = 0.0;              // background: below the margin, above a miss
  for (double& s : sims) s /= ocfg.temperature;
  return softmax_vec(sims);
}

}  // namespace

std::vector<MaskTube> GroundTruth::tubes() const {
  std::vector<MaskTube> out;
  const int n = int(category.size());
  for (int i = 0; i < n; ++i) {
    MaskTube t;
    t.id = i;
    t.category = category[i];
    t.confidence = 1.0;
    t.frames.reserve(frames.size());
    for (const GtFrame& f : frames) t.frames.push_back(f.masks[i]);
    out.push_back(std::move(t));
  }
  return out;
}

GroundTruth render_scene(const SceneSpec& spec, const WorldConfig& cfg, int video_id) {
  check_world(cfg);
  const int h = cfg.height, w = cfg.width, hw = h * w;
  const int n = int(spec.items.size());
  GroundTruth gt;
  gt.cfg = cfg;
  gt.video_id = video_id;
  gt.scene = spec;
  gt.category.reserve(n);
  for (const SceneItem& it : spec.items) {
    if (it.category < 0 || it.category >= cfg.categories)
      throw std::invalid_argument("render_scene: category out of range");
    if (it.w < 1 || it.h < 1) throw std::invalid_argument("render_scene: degenerate shape");
    gt.category.push_back(it.category);
  }
  gt.frames.resize(cfg.frames);
  std::vector<int> owner(hw);
  for (int t = 1; t <= cfg.frames; ++t) {
    std::fill(owner.begin(), owner.end(), -1);
    for (int i = 0; i < n; ++i) {
      const SceneItem& it = spec.items[i];
      if (t < it.enter || t > it.leave) continue;
      const double fx = it.x0 + it.dx * (t - 1);
      const double fy = it.y0 + it.dy * (t - 1);
      const int x = int(std::llround(fx)), y = int(std::llround(fy));
      const double cx = x + (it.w - 1) / 2.0, cy = y + (it.h - 1) / 2.0;
      const double rad2 = (it.w / 2.0) * (it.w / 2.0);
      for (int r = std::max(0, y); r <= std::min(h - 1, y + it.h - 1); ++r) {
        for (int col = std::max(0, x); col <= std::min(w - 1, x + it.w - 1); ++col) {
          if (it.disc && (col - cx) * (col - cx) + (r - cy) * (r - cy) > rad2) continue;
          owner[r * w + col] = i;  // later items draw in front
        }
      }
    }
    GtFrame& gf = gt.frames[t - 1];
    gf.masks.assign(n, Mask{});
    gf.boxes.assign(n, {0, 0, -1, -1});
    std::vector<int> area(n, 0);
    for (int p = 0; p < hw; ++p)
      if (owner[p] >= 0) area[owner[p]] += 1;
    for (int i = 0; i < n; ++i)
      if (area[i] > 0) gf.masks[i].assign(hw, 0);
    for (int p = 0; p < hw; ++p) {
      const int i = owner[p];
      if (i < 0) continue;
      gf.masks[i][p] = 1;
      auto& b = gf.boxes[i];
      const int r = p / w, c = p % w;
      if (b[2] < b[0]) {
        b = {c, r, c, r};
      } else {
        b[0] = std::min(b[0], c);
        b[1] = std::min(b[1], r);
        b[2] = std::max(b[2], c);
        b[3] = std::max(b[3], r);
      }
    }
  }
  return gt;
}

GroundTruth gen_video(const WorldConfig& cfg, int video_id) {
  check_world(cfg);
  auto eng = make_engine(mix64(cfg.seed, kTagScene, std::uint64_t(video_id)));
  SceneSpec spec;
  const int T = cfg.frames;
  int k = 0;
  if (cfg.max_instances > 0)
    k = std::uniform_int_distribution<int>(1, cfg.max_instances)(eng);
  if (k > 0) {
    const int g = int(std::ceil(std::sqrt(double(k))));
    const int cellw = cfg.width / g, cellh = cfg.height / g;
    const int sbase = std::min(cellw, cellh) - 2;
    if (sbase < 3)
      throw std::invalid_argument("gen_video: " + std::to_string(k) +
                                  " instances cannot fit a " + std::to_string(cfg.width) + "x" +
                                  std::to_string(cfg.height) + " canvas");
    std::vector<int> cells(g * g);
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), eng);

    struct Draft {
      int category, cell;
      bool roam, disc;
      int enter, leave;
    };
    std::vector<Draft> drafts(k);
    std::bernoulli_distribution roam_dist(cfg.occlusion_rate);
    std::bernoulli_distribution event_dist(cfg.occlusion_rate / 2.0);
    std::bernoulli_distribution disc_dist(0.5);
    for (int i = 0; i < k; ++i) {
      Draft& d = drafts[i];
      d.category = std::uniform_int_distribution<int>(0, cfg.categories - 1)(eng);
      d.cell = cells[i];
      d.roam = roam_dist(eng);
      d.disc = disc_dist(eng);
      d.enter = 1;
      d.leave = T;
      if (T >= 4 && i > 0) {
        if (event_dist(eng)) {
          d.enter = std::uniform_int_distribution<int>(2, T - 2)(eng);
          d.roam = false;  // latecomers keep to their own cell
        }
        if (event_dist(eng) && d.enter + 1 <= T - 1)
          d.leave = std::uniform_int_distribution<int>(d.enter + 1, T - 1)(eng);
      }
    }
    // Latecomers move to the back of the list: the list order is the depth
    // order (front last) and sizes shrink along it, so whoever appears later
    // is smaller and in front of everything it could meet.
    std::stable_sort(drafts.begin(), drafts.end(),
                     [](const Draft& a, const Draft& b) { return a.enter < b.enter; });
    for (int i = 0; i < k; ++i) {
      const Draft& d = drafts[i];
      SceneItem it;
      it.category = d.category;
      it.w = it.h = std::max(3, sbase - i);
      it.disc = d.disc && it.w >= 5;
      it.enter = d.enter;
      it.leave = d.leave;
      const int span = d.leave - d.enter;
      auto draw_leg = [&](double lo, double hi, double& p0, double& dp) {
        std::uniform_real_distribution<double> u(lo, hi);
        const double a = u(eng), b = u(eng);
        p0 = a;
        dp = span > 0 ? (b - a) / double(span) : 0.0;
      };
      if (d.roam) {
        draw_leg(0.0, double(cfg.width - it.w), it.x0, it.dx);
        draw_leg(0.0, double(cfg.height - it.h), it.y0, it.dy);
      } else {
        const int cx = (d.cell % g) * cellw, cy = (d.cell / g) * cellh;
        draw_leg(double(cx), double(cx + cellw - it.w), it.x0, it.dx);
        draw_leg(double(cy), double(cy + cellh - it.h), it.y0, it.dy);
      }
      // positions are sampled at t = enter, not t = 1
      it.x0 -= it.dx * (d.enter - 1);
      it.y0 -= it.dy * (d.enter - 1);
      spec.items.push_back(it);
    }
  }
  GroundTruth gt = render_scene(spec, cfg, video_id);
  for (int i = 0; i < int(gt.category.size()); ++i) {
    bool visible = false;
    for (const GtFrame& f : gt.frames) visible |= !f.masks[i].empty();
    if (!visible)
      throw std::logic_error("gen_video: instance " + std::to_string(i) +
                             " never became visible (seed " + std::to_string(cfg.seed) +
                             ", video " + std::to_string(video_id) + ")");
  }
  return gt;
}

std::vector<double> background_signature(const WorldConfig& cfg) {
  auto eng = make_engine(mix64(cfg.seed, kTagBgSig));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(cfg.channels);
  double norm = 0.0;
  for (double& x : v) {
    x = nd(eng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> instance_signatures(const WorldConfig& cfg, int video_id,
                                                     int n_instances) {
  if (n_instances + 1 > cfg.channels)
    throw std::invalid_argument("instance_signatures: not enough channels for " +
                                std::to_string(n_instances) + " orthogonal signatures");
  std::vector<std::vector<double>> basis{background_signature(cfg)};
  auto eng = make_engine(mix64(cfg.seed, kTagSig, std::uint64_t(video_id)));
  std::normal_distribution<double> nd(0.0, 1.0);
  const int c = cfg.channels;
  while (int(basis.size()) < n_instances + 1) {
    std::vector<double> v(c);
    for (double& x : v) x = nd(eng);
    for (const auto& b : basis) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += v[j] * b[j];
      for (int j = 0; j < c; ++j) v[j] -= dot * b[j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;  // resample a degenerate draw
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return {basis.begin() + 1, basis.end()};
}

Matrix synth_features(const WorldConfig& cfg, int video_id, int frame_index,
                      const std::vector<Mask>& masks, int n_instances) {
  const int hw = cfg.height * cfg.width;
  const std::vector<std::vector<double>> sigs =
      instance_signatures(cfg, video_id, n_instances);
  const std::vector<double> bg = background_signature(cfg);
  std::vector<int> owner(hw, -1);
  for (int i = 0; i < int(masks.size()); ++i) {
    if (masks[i].empty()) continue;
    if (int(masks[i].size()) != hw)
      throw std::invalid_argument("synth_features: mask size mismatch");
    for (int p = 0; p < hw; ++p)
      if (masks[i][p]) owner[p] = i;
  }
  auto eng = make_engine(
      mix64(cfg.seed, kTagNoise, std::uint64_t(video_id), std::uint64_t(frame_index)));
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix f(hw, cfg.channels);
  for (int p = 0; p < hw; ++p) {
    const std::vector<double>& base = owner[p] < 0 ? bg : sigs[owner[p]];
    double* row = f.row(p);
    for (int c = 0; c < cfg.channels; ++c) row[c] = base[c] + cfg.noise_sigma * nd(eng);
  }
  return f;
}

std::vector<Matrix> synth_all_features(const WorldConfig& cfg, const GroundTruth& gt) {
  std::vector<Matrix> out;
  out.reserve(gt.frames.size());
  const int n = int(gt.category.size());
  for (int t = 1; t <= int(gt.frames.size()); ++t)
    out.push_back(synth_features(cfg, gt.video_id, t, gt.frames[t - 1].masks, n));
  return out;
}

Detector make_oracle_detector(GroundTruth gt, IdBank bank, HabParams params, OracleConfig ocfg) {
  Matrix w_v_inv = invert_matrix(params.w_v);
  return [gt = std::move(gt), bank = std::move(bank), w_v_inv = std::move(w_v_inv),
          ocfg](const FusedView& fused, const FrameContext& ctx) {
    if (ctx.frame_index < 1 || ctx.frame_index > int(gt.frames.size()))
      throw std::runtime_error("oracle detector: frame " + std::to_string(ctx.frame_index) +
                               " beyond the " + std::to_string(gt.frames.size()) +
                               " frames it knows");
    const GtFrame& gf = gt.frames[ctx.frame_index - 1];
    const ProtoSet ps = recover_prototypes(ctx, w_v_inv, bank);
    std::vector<Detection> dets;
    for (int i = 0; i < int(gf.masks.size()); ++i) {
      if (gf.masks[i].empty()) continue;
      const std::vector<int> px = mask_pixels(gf.masks[i]);
      const std::vector<double> pooled = pool_rows(fused.raw(), px);
      Detection d;
      d.mask = gf.masks[i];
      d.box = gf.boxes[i];
      d.class_probs = smoothed_class_probs(gt.category[i], gt.cfg.categories, ocfg.class_smooth);
      d.id_probs = oracle_id_row(pooled, ps, ocfg, bank.n_ids());
      d.score = 1.0;
      dets.push_back(std::move(d));
    }
    return dets;
  };
}

ToyIdHead ToyIdHead::seeded(std::uint64_t model_seed, int in_dim, int n_out) {
  if (in_dim < 1 || n_out < 2) throw std::invalid_argument("ToyIdHead: bad dimensions");
  ToyIdHead h;
  h.in_dim = in_dim;
  h.n_out = n_out;
  h.model_seed = model_seed;
  auto eng = make_engine(mix64(model_seed, kTagHead));
  std::normal_distribution<double> nd(0.0, 1.0);
  const double s = 1.0 / std::sqrt(double(in_dim));
  h.w1 = Matrix(in_dim, in_dim);
  for (int i = 0; i < in_dim; ++i)
    for (int j = 0; j < in_dim; ++j) h.w1.at(i, j) = nd(eng) * s;
  h.w2 = Matrix(in_dim, n_out);
  for (int i = 0; i < in_dim; ++i)
    for (int j = 0; j < n_out; ++j) h.w2.at(i, j) = nd(eng) * s;
  h.b1.assign(in_dim, 0.0);
  h.b2.assign(n_out, 0.0);
  return h;
}

namespace {

// h1 = tanh(x*w1 + b1); logits = h1*w2 + b2
void head_forward(const ToyIdHead& head, const Matrix& x, Matrix& h1, Matrix& logits) {
  if (x.cols() != head.in_dim)
    throw std::invalid_argument("head: input width " + std::to_string(x.cols()) +
                                ", expected " + std::to_string(head.in_dim));
  h1 = matmul(x, head.w1);
  for (int i = 0; i < h1.rows(); ++i) {
    double* row = h1.row(i);
    for (int j = 0; j < head.in_dim; ++j) row[j] = std::tanh(row[j] + head.b1[j]);
  }
  logits = matmul(h1, head.w2);
  for (int i = 0; i < logits.rows(); ++i) {
    double* row = logits.row(i);
    for (int j = 0; j < head.n_out; ++j) row[j] += head.b2[j];
  }
}

struct TeacherFrame {
  Matrix features;  // raw backbone stand-in
  Matrix fused;     // full-config association output
  std::vector<std::pair<std::vector<int>, int>> samples;  // (pixel set, target class)
};

// Teacher-forced window: memories come from ground-truth ID masks, so every
// frame's fused features are exactly what a perfect tracker would have seen.
std::vector<TeacherFrame> build_window(const GroundTruth& gt, int start, int window, int n_ids,
                                       const IdBank& bank, const HabParams& hab) {
  const int hw = gt.cfg.height * gt.cfg.width;
  const int n = int(gt.category.size());
  std::vector<std::vector<char>> presence(window, std::vector<char>(n, 0));
  for (int j = 0; j < window; ++j)
    for (int a = 0; a < n; ++a) presence[j][a] = !gt.frames[start + j].masks[a].empty();
  const SequenceLabels labels = assign_gt_ids(presence, n_ids);

  const HabConfig full{true, true, true};
  std::vector<TeacherFrame> out(window);
  MemoryStore store;
  for (int j = 0; j < window; ++j) {
    const GtFrame& gf = gt.frames[start + j];
    TeacherFrame& tf = out[j];
    tf.features = synth_features(gt.cfg, gt.video_id, start + j + 1, gf.masks, n);
    tf.fused = hab_forward(tf.features, store, hab, full);

    std::vector<char> covered(hw, 0);
    for (int a = 0; a < n; ++a) {
      if (!presence[j][a]) continue;
      std::vector<int> px = mask_pixels(gf.masks[a]);
      for (int p : px) covered[p] = 1;
      tf.samples.emplace_back(std::move(px), labels.label[j][a]);
    }
    std::vector<int> bg_px;
    for (int p = 0; p < hw; ++p)
      if (!covered[p]) bg_px.push_back(p);
    if (!bg_px.empty()) tf.samples.emplace_back(std::move(bg_px), n_ids);

    // ground-truth memory for the next frame
    UniqueIdAssignment asg;
    std::vector<Mask> masks;
    std::vector<double> scores;
    for (int a = 0; a < n; ++a) {
      if (!presence[j][a]) continue;
      asg.entries.push_back({IdKind::Existing, labels.id_of[a]});
      masks.push_back(gf.masks[a]);
      scores.push_back(1.0);
    }
    const IdMask y = build_id_mask(asg, masks, scores, n_ids, hw);
    MemoryEntry entry = build_memory(tf.features, embed(y, bank), hab, j + 1);
    store.local = entry;
    if (j == 0) store.global = std::move(entry);
  }
  return out;
}

std::vector<double> pooled_logit_row(const Matrix& logits, const std::vector<int>& px) {
  std::vector<double> v = pool_rows(logits, px);
  return v;
}

}  // namespace

TrainResult train_toy_head(ToyIdHead head, const std::vector<GroundTruth>& seqs,
                           const TrainConfig& tc) {
  if (seqs.empty()) throw std::invalid_argument("train: no sequences");
  for (const GroundTruth& gt : seqs) {
    if (int(gt.frames.size()) < tc.window)
      throw std::invalid_argument("train: a sequence is shorter than the sampling window");
    if (head.in_dim != 2 * gt.cfg.channels)
      throw std::invalid_argument("train: head width does not match 2x feature channels");
  }
  if (head.n_out != tc.n_ids + 1)
    throw std::invalid_argument("train: head output width does not match the ID class count");

  const IdBank bank = default_bank(head.model_seed, tc.n_ids, seqs[0].cfg.channels);
  const HabParams hab = default_hab(head.model_seed, seqs[0].cfg.channels);
  auto sampler = make_engine(mix64(tc.sampler_seed, kTagSampler));
  std::map<std::pair<int, int>, std::vector<TeacherFrame>> cache;

  TrainResult res;
  res.loss_curve.reserve(tc.steps);
  const int in = head.in_dim, nout = head.n_out;
  Matrix dw1(in, in), dw2(in, nout);
  std::vector<double> db1(in), db2(nout);
  Matrix h1, logits;

  for (int step = 0; step < tc.steps; ++step) {
    const int s = step % int(seqs.size());
    const int maxstart = int(seqs[s].frames.size()) - tc.window;
    const int start =
        maxstart > 0 ? std::uniform_int_distribution<int>(0, maxstart)(sampler) : 0;
    auto key = std::make_pair(s, start);
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, build_window(seqs[s], start, tc.window, tc.n_ids, bank, hab)).first;
    const std::vector<TeacherFrame>& frames = it->second;

    std::fill(dw1.data(), dw1.data() + std::size_t(in) * in, 0.0);
    std::fill(dw2.data(), dw2.data() + std::size_t(in) * nout, 0.0);
    std::fill(db1.begin(), db1.end(), 0.0);
    std::fill(db2.begin(), db2.end(), 0.0);
    double loss = 0.0;
    int n_samples = 0;

    for (const TeacherFrame& tf : frames) {
      head_forward(head, tf.fused, h1, logits);
      for (const auto& [px, target] : tf.samples) {
        const std::vector<double> pooled = pooled_logit_row(logits, px);
        loss += focal_id_loss(softmax_vec(pooled), target, tc.fp);
        n_samples += 1;
        const std::vector<double> g = focal_id_grad(pooled, target, tc.fp);
        const std::vector<double> pooled_h = pool_rows(h1, px);
        for (int i = 0; i < in; ++i) {
          double* row = dw2.row(i);
          const double hi = pooled_h[i];
          for (int j = 0; j < nout; ++j) row[j] += hi * g[j];
        }
        for (int j = 0; j < nout; ++j) db2[j] += g[j];
        std::vector<double> gh(in, 0.0);  // g * w2^T
        for (int i = 0; i < in; ++i) {
          const double* row = head.w2.row(i);
          double acc = 0.0;
          for (int j = 0; j < nout; ++j) acc += g[j] * row[j];
          gh[i] = acc;
        }
        const double inv_px = 1.0 / double(px.size());
        for (int p : px) {
          const double* hrow = h1.row(p);
          const double* xrow = tf.fused.row(p);
          for (int i = 0; i < in; ++i) {
            const double dz = gh[i] * (1.0 - hrow[i] * hrow[i]) * inv_px;
            if (dz == 0.0) continue;
            db1[i] += dz;
            for (int q = 0; q < in; ++q) dw1.at(q, i) += xrow[q] * dz;
          }
        }
      }
    }

    loss /= n_samples;
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged: non-finite loss at step " +
                               std::to_string(step));
    const double scale = tc.lr / n_samples;
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < in; ++j) head.w1.at(i, j) -= scale * dw1.at(i, j);
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < nout; ++j) head.w2.at(i, j) -= scale * dw2.at(i, j);
    for (int i = 0; i < in; ++i) head.b1[i] -= scale * db1[i];
    for (int j = 0; j < nout; ++j) head.b2[j] -= scale * db2[j];
    res.loss_curve.push_back(loss);
  }
  res.head = std::move(head);
  return res;
}

Detector make_trained_detector(GroundTruth gt, ToyIdHead head) {
  return [gt = std::move(gt), head = std::move(head)](const FusedView& fused,
                                                      const FrameContext& ctx) {
    if (ctx.frame_index < 1 || ctx.frame_index > int(gt.frames.size()))
      throw std::runtime_error("trained detector: frame out of range");
    const GtFrame& gf = gt.frames[ctx.frame_index - 1];
    Matrix h1, logits;
    head_forward(head, fused.get(), h1, logits);
    std::vector<Detection> dets;
    for (int i = 0; i < int(gf.masks.size()); ++i) {
      if (gf.masks[i].empty()) continue;
      const std::vector<int> px = mask_pixels(gf.masks[i]);
      Detection d;
      d.mask = gf.masks[i];
      d.box = gf.boxes[i];
      d.class_probs = smoothed_class_probs(gt.category[i], gt.cfg.categories, 0.9);
      d.id_probs = softmax_vec(pooled_logit_row(logits, px));
      d.score = 1.0;
      dets.push_back(std::move(d));
    }
    return dets;
  };
}

namespace {

// Frame-2 resolution accuracy shared by the trained head and the oracle gate:
// teacher-force the frame-1 memory, score every visible frame-2 instance,
// resolve, and compare against the frame-1 assignment.
struct Frame2Tally {
  int correct = 0;
  int total = 0;
};

template <typename ScoreRows>
Frame2Tally eval_frame2(const std::vector<GroundTruth>& videos, int n_ids, const IdBank& bank,
                        const HabParams& hab, ScoreRows&& score_rows) {
  Frame2Tally tally;
  for (const GroundTruth& gt : videos) {
    if (gt.frames.size() < 2)
      throw std::invalid_argument("frame-2 accuracy needs at least 2 frames");
    const std::vector<TeacherFrame> win = build_window(gt, 0, 2, n_ids, bank, hab);
    const int n = int(gt.category.size());
    std::vector<std::vector<char>> presence(2, std::vector<char>(n, 0));
    for (int j = 0; j < 2; ++j)
      for (int a = 0; a < n; ++a) presence[j][a] = !gt.frames[j].masks[a].empty();
    const SequenceLabels labels = assign_gt_ids(presence, n_ids);
    int assigned = 0;
    for (int a = 0; a < n; ++a)
      if (presence[0][a]) assigned += 1;

    std::vector<int> instances;  // frame-2 instances that already hold an ID
    for (int a = 0; a < n; ++a)
      if (presence[1][a] && presence[0][a]) instances.push_back(a);
    if (instances.empty()) continue;

    const Matrix probs = score_rows(gt, win, instances);
    const IdState state{n_ids, assigned, 2};
    const UniqueIdAssignment asg = resolve_ids(probs, state);
    for (std::size_t r = 0; r < instances.size(); ++r) {
      const ProposalId& e = asg.entries[r];
      tally.correct += e.kind == IdKind::Existing && e.id == labels.id_of[instances[r]];
      tally.total += 1;
    }
  }
  return tally;
}

}  // namespace

double head_frame2_accuracy(const ToyIdHead& head, const std::vector<GroundTruth>& videos,
                            int n_ids) {
  if (videos.empty()) throw std::invalid_argument("frame-2 accuracy: no videos");
  const IdBank bank = default_bank(head.model_seed, n_ids, videos[0].cfg.channels);
  const HabParams hab = default_hab(head.model_seed, videos[0].cfg.channels);
  const Frame2Tally tally = eval_frame2(
      videos, n_ids, bank, hab,
      [&](const GroundTruth& gt, const std::vector<TeacherFrame>& win,
          const std::vector<int>& instances) {
        Matrix h1, logits;
        head_forward(head, win[1].fused, h1, logits);
        Matrix probs(int(instances.size()), n_ids + 1);
        for (std::size_t r = 0; r < instances.size(); ++r) {
          const std::vector<int> px = mask_pixels(gt.frames[1].masks[instances[r]]);
          const std::vector<double> row = softmax_vec(pooled_logit_row(logits, px));
          for (int j = 0; j <= n_ids; ++j) probs.at(int(r), j) = row[j];
        }
        return probs;
      });
  return tally.total == 0 ? 0.0 : double(tally.correct) / tally.total;
}

double oracle_frame2_accuracy(const std::vector<GroundTruth>& videos, int n_ids,
                              std::uint64_t model_seed, OracleConfig ocfg) {
  if (videos.empty()) throw std::invalid_argument("frame-2 accuracy: no videos");
  const IdBank bank = default_bank(model_seed, n_ids, videos[0].cfg.channels);
  const HabParams hab = default_hab(model_seed, videos[0].cfg.channels);
  const Matrix w_v_inv = invert_matrix(hab.w_v);
  const Frame2Tally tally = eval_frame2(
      videos, n_ids, bank, hab,
      [&](const GroundTruth& gt, const std::vector<TeacherFrame>& win,
          const std::vector<int>& instances) {
        // prototypes from the teacher-forced frame-1 memory
        const int n = int(gt.category.size());
        std::vector<std::vector<char>> presence(2, std::vector<char>(n, 0));
        for (int j = 0; j < 2; ++j)
          for (int a = 0; a < n; ++a) presence[j][a] = !gt.frames[j].masks[a].empty();
        const SequenceLabels labels = assign_gt_ids(presence, n_ids);
        std::vector<std::vector<int>> id_pixels(n_ids - 1);
        for (int a = 0; a < n; ++a)
          if (presence[0][a]) id_pixels[labels.id_of[a]] = mask_pixels(gt.frames[0].masks[a]);
        ProtoSet ps;
        ps.sig.resize(n_ids - 1);
        ps.have.assign(n_ids - 1, 0);
        // rebuild the frame-1 memory entry exactly as build_window did
        UniqueIdAssignment asg;
        std::vector<Mask> masks;
        std::vector<double> scores;
        for (int a = 0; a < n; ++a) {
          if (!presence[0][a]) continue;
          asg.entries.push_back({IdKind::Existing, labels.id_of[a]});
          masks.push_back(gt.frames[0].masks[a]);
          scores.push_back(1.0);
        }
        const int hw = gt.cfg.height * gt.cfg.width;
        const IdMask y = build_id_mask(asg, masks, scores, n_ids, hw);
        const MemoryEntry mem = build_memory(win[0].features, embed(y, bank), hab, 1);
        recover_from_entry(mem, id_pixels, w_v_inv, bank, ps);
        Matrix probs(int(instances.size()), n_ids + 1);
        for (std::size_t r = 0; r < instances.size(); ++r) {
          const std::vector<int> px = mask_pixels(gt.frames[1].masks[instances[r]]);
          const std::vector<double> pooled = pool_rows(win[1].features, px);
          const std::vector<double> row = oracle_id_row(pooled, ps, ocfg, n_ids);
          for (int j = 0; j <= n_ids; ++j) probs.at(int(r), j) = row[j];
        }
        return probs;
      });
  return tally.total == 0 ? 0.0 : double(tally.correct) / tally.total;
}

}  // namespace iai
