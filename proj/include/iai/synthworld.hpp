#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "iai/losses.hpp"
#include "iai/tracker.hpp"

namespace iai {

struct WorldConfig {
  int height = 64;
  int width = 64;
  int frames = 20;
  int max_instances = 8;
  int categories = 4;
  double occlusion_rate = 0.3;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  int channels = 16;
};

// One moving shape. Position is linear in the frame index; depth is the item
// index within the scene (later items draw in front).
struct SceneItem {
  int category = 0;
  bool disc = false;  // axis-aligned rectangle otherwise
  int w = 4, h = 4;
  double x0 = 0.0, y0 = 0.0;  // top-left corner at frame 1
  double dx = 0.0, dy = 0.0;  // per-frame velocity
  int enter = 1;              // first visible frame, 1-based
  int leave = 1 << 30;        // last visible frame (leaving is permanent)
};

struct SceneSpec {
  std::vector<SceneItem> items;
};

struct GtFrame {
  std::vector<Mask> masks;                // per instance; empty when not visible
  std::vector<std::array<int, 4>> boxes;  // visible-pixel bounds, {0,0,-1,-1} when empty
};

struct GroundTruth {
  WorldConfig cfg;
  int video_id = 0;
  std::vector<int> category;  // per instance
  SceneSpec scene;
  std::vector<GtFrame> frames;

  std::vector<MaskTube> tubes() const;  // confidence 1, one tube per instance
};

// Depth-resolved rasterization: each pixel belongs to the front-most covering
// item, so per-frame instance masks are pairwise disjoint.
GroundTruth render_scene(const SceneSpec& spec, const WorldConfig& cfg, int video_id);

// Seeded random scene: occlusion_rate of the instances roam the full canvas
// on crossing linear trajectories, the rest stay inside disjoint grid cells;
// the same fraction controls how many enter late or leave early. Sizes
// strictly shrink with depth order (entrants are the smallest and sit in
// front), so nothing is ever fully hidden by a single other instance and only
// first-frame instances can lose every pixel to a pile-up.
GroundTruth gen_video(const WorldConfig& cfg, int video_id);

// Appearance model shared by generation and tracking. Every instance carries
// a unit signature vector orthonormal to the other instances of its video and
// to one run-wide background signature; a pixel's feature row is its owner's
// signature plus seeded Gaussian noise. Keyed only by (seed, video, frame,
// masks), so a dataset file plus the seed reproduces features bit for bit.
std::vector<std::vector<double>> instance_signatures(const WorldConfig& cfg, int video_id,
                                                     int n_instances);
std::vector<double> background_signature(const WorldConfig& cfg);
Matrix synth_features(const WorldConfig& cfg, int video_id, int frame_index,
                      const std::vector<Mask>& masks, int n_instances);
std::vector<Matrix> synth_all_features(const WorldConfig& cfg, const GroundTruth& gt);

struct OracleConfig {
  double margin = 0.5;       // similarity a prototype must beat to claim an ID
  double temperature = 0.1;  // softmax temperature over similarities
  double class_smooth = 0.9; // probability placed on the true category
};

// Reference detector: emits the true mask/box/class of every visible instance
// and derives ID probabilities by cosine similarity between the detection's
// mask-pooled features and per-ID prototypes recovered from the memory
// entries the active config exposes. IDs with no prototype score -1, the
// new-instance class scores the margin, background 0.
Detector make_oracle_detector(GroundTruth gt, IdBank bank, HabParams params,
                              OracleConfig ocfg = {});

// Two per-location linear layers with a tanh between, read out by mask
// pooling the output logits. Identity classes only; boxes and masks are not
// its job.
struct ToyIdHead {
  int in_dim = 0;  // 2 * channels
  int n_out = 0;   // n_ids + 1
  std::uint64_t model_seed = 0;
  Matrix w1, w2;
  std::vector<double> b1, b2;

  static ToyIdHead seeded(std::uint64_t model_seed, int in_dim, int n_out);

  bool operator==(const ToyIdHead&) const = default;
};

// Detector built on a trained head: proposals are the visible ground-truth
// instances, ID probabilities come from the head applied to the fused
// features (this one does pay for the attention pass).
Detector make_trained_detector(GroundTruth gt, ToyIdHead head);

struct TrainConfig {
  FocalParams fp{0.25, 2.0};
  int steps = 500;
  double lr = 0.1;
  int window = 5;
  int n_ids = 20;
  std::uint64_t sampler_seed = 0;
};

struct TrainResult {
  ToyIdHead head;
  std::vector<double> loss_curve;  // mean loss per step
};

// SGD on the identity loss over teacher-forced windows: memories are built
// from ground-truth ID masks, the association weights stay frozen, and only
// the head trains. Sequences are visited round-robin; the window start inside
// a sequence comes from a seeded sampler. Throws when the loss leaves the
// reals.
TrainResult train_toy_head(ToyIdHead head, const std::vector<GroundTruth>& seqs,
                           const TrainConfig& tc);

// Identity-resolution accuracy at frame 2 given a teacher-forced frame-1
// memory: the fraction of visible frame-2 instances resolved to the ID they
// were assigned at frame 1.
double head_frame2_accuracy(const ToyIdHead& head, const std::vector<GroundTruth>& videos,
                            int n_ids);
double oracle_frame2_accuracy(const std::vector<GroundTruth>& videos, int n_ids,
                              std::uint64_t model_seed, OracleConfig ocfg = {});

}  // namespace iai
