// Command-line front end: generate synthetic videos, track them with the
// oracle or a trained head, train the toy identity head, evaluate
// predictions, and render frames. Exit codes: 0 ok, 1 usage, 2 unwritable
// output, 3 malformed input file, 4 training divergence.
#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "iai/formats.hpp"
#include "iai/metrics.hpp"
#include "iai/synthworld.hpp"
#include "iai/tracker.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitParse = 3;
constexpr int kExitDiverged = 4;

struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void parse_size(const std::string& text, int& height, int& width) {
  const auto x = text.find('x');
  try {
    std::size_t a = 0, b = 0;
    const int h = std::stoi(text.substr(0, x), &a);
    const int w = std::stoi(text.substr(x + 1), &b);
    if (x == std::string::npos || a != x || b != text.size() - x - 1) throw std::exception();
    height = h;
    width = w;
  } catch (const std::exception&) {
    throw Usage("--size expects HxW, e.g. 64x64, got '" + text + "'");
  }
}

// IAI_SEED in the environment beats --seed everywhere
std::uint64_t effective_seed(std::uint64_t cli_seed) {
  const char* env = std::getenv("IAI_SEED");
  if (!env || !*env) return cli_seed;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (env[used] != '\0') throw std::exception();
    return v;
  } catch (const std::exception&) {
    throw Usage(std::string("IAI_SEED is not an unsigned integer: '") + env + "'");
  }
}

// Rebuild the ground truth a dataset video describes. Appearance is keyed by
// (seed, video id, masks), so this plus the generation seed reproduces the
// generated features exactly.
iai::GroundTruth video_truth(const iai::TrackVideo& v, std::uint64_t seed, double noise,
                             int channels) {
  iai::GroundTruth gt;
  gt.cfg.height = v.height;
  gt.cfg.width = v.width;
  gt.cfg.frames = v.frames;
  gt.cfg.categories = v.categories;
  gt.cfg.max_instances = int(v.tubes.size());
  gt.cfg.noise_sigma = noise;
  gt.cfg.seed = seed;
  gt.cfg.channels = channels;
  gt.video_id = v.id;
  const int n = int(v.tubes.size());
  const int w = v.width;
  for (const iai::MaskTube& t : v.tubes) gt.category.push_back(t.category);
  gt.frames.resize(v.frames);
  for (int f = 0; f < v.frames; ++f) {
    iai::GtFrame& gf = gt.frames[f];
    gf.masks.assign(n, iai::Mask{});
    gf.boxes.assign(n, {0, 0, -1, -1});
    for (int i = 0; i < n; ++i) {
      const iai::Mask& m = v.tubes[i].frames[f];
      if (m.empty()) continue;
      gf.masks[i] = m;
      auto& b = gf.boxes[i];
      for (int p = 0; p < int(m.size()); ++p) {
        if (!m[p]) continue;
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
  }
  return gt;
}

struct GenArgs {
  std::string out = "dataset.iai";
  std::uint64_t seed = 0;
  int videos = 1;
  std::string size = "64x64";
  int frames = 20;
  int instances = 8;
  int categories = 4;
  double occlusion = 0.3;
  double noise = 0.05;
  int n_ids = 20;
  int channels = 16;
};

int cmd_gen(const GenArgs& a) {
  iai::WorldConfig wc;
  parse_size(a.size, wc.height, wc.width);
  wc.frames = a.frames;
  wc.max_instances = a.instances;
  wc.categories = a.categories;
  wc.occlusion_rate = a.occlusion;
  wc.noise_sigma = a.noise;
  wc.seed = effective_seed(a.seed);
  wc.channels = a.channels;
  if (a.n_ids < 2) throw Usage("--n-ids must be at least 2");
  if (a.instances > a.n_ids - 1)
    throw Usage("--instances " + std::to_string(a.instances) + " exceeds the identity capacity " +
                std::to_string(a.n_ids - 1) + " (= --n-ids minus the new-instance class)");
  if (a.videos < 1) throw Usage("--videos must be positive");

  iai::TrackFile tf;
  tf.is_dataset = true;
  for (int vid = 1; vid <= a.videos; ++vid) {
    const iai::GroundTruth gt = iai::gen_video(wc, vid);
    iai::TrackVideo v;
    v.id = vid;
    v.frames = wc.frames;
    v.height = wc.height;
    v.width = wc.width;
    v.categories = wc.categories;
    v.tubes = gt.tubes();
    tf.videos.push_back(std::move(v));
  }
  iai::write_tracks(a.out, tf);
  std::cout << "wrote " << tf.videos.size() << " videos to " << a.out << "\n";
  return 0;
}

struct TrackArgs {
  std::string data;
  std::string out = "pred.iai";
  std::string detector = "oracle";
  std::uint64_t seed = 0;
  double noise = 0.05;
  int channels = 16;
  int n_ids = 20;
  bool no_global = false;
  bool no_local = false;
  bool no_cls = false;
  double nms_iou = 0.5;
  int threads = 1;
};

int cmd_track(const TrackArgs& a) {
  if (a.threads < 1) throw Usage("--threads must be positive");
  const std::uint64_t seed = effective_seed(a.seed);
  const iai::TrackFile data = iai::read_tracks(a.data);

  iai::ToyIdHead head;
  bool trained = false;
  if (a.detector == "oracle") {
    trained = false;
  } else if (a.detector.rfind("trained:", 0) == 0) {
    trained = true;
    head = iai::read_head(a.detector.substr(8));
    if (head.in_dim != 2 * a.channels || head.n_out != a.n_ids + 1)
      throw Usage("head expects " + std::to_string(head.in_dim) + " inputs and " +
                  std::to_string(head.n_out) + " identity classes; flags give " +
                  std::to_string(2 * a.channels) + " and " + std::to_string(a.n_ids + 1));
  } else {
    throw Usage("--detector must be 'oracle' or 'trained:PATH', got '" + a.detector + "'");
  }
  const std::uint64_t model_seed = trained ? head.model_seed : seed;

  iai::HabConfig cfg;
  cfg.enable_global = !a.no_global;
  cfg.enable_local = !a.no_local;
  cfg.enable_cls = !a.no_cls;

  const int nv = int(data.videos.size());
  std::vector<iai::TrackVideo> preds(nv);
  std::vector<std::string> lines(nv);

  std::atomic<int> cursor{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  const auto worker = [&] {
    for (;;) {
      const int i = cursor.fetch_add(1);
      if (i >= nv) return;
      try {
        const iai::TrackVideo& v = data.videos[i];
        const iai::GroundTruth gt = video_truth(v, seed, a.noise, a.channels);
        const iai::IdBank bank = iai::default_bank(model_seed, a.n_ids, a.channels);
        const iai::HabParams hab = iai::default_hab(model_seed, a.channels);
        const iai::Detector det = trained ? iai::make_trained_detector(gt, head)
                                          : iai::make_oracle_detector(gt, bank, hab);
        iai::TrackerState st =
            iai::TrackerState::make(bank, hab, cfg, v.height, v.width, a.nms_iou);
        const std::vector<iai::Matrix> feats = iai::synth_all_features(gt.cfg, gt);
        iai::VideoResult res = iai::run_video(feats, std::move(st), det);

        iai::TrackVideo p;
        p.id = v.id;
        p.frames = v.frames;
        p.height = v.height;
        p.width = v.width;
        p.categories = v.categories;
        p.tubes = std::move(res.tubes);
        lines[i] = "video " + std::to_string(p.id) + ": " + std::to_string(p.tubes.size()) +
                   " instances\n";
        preds[i] = std::move(p);
      } catch (...) {
        const std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (a.threads == 1 || nv <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min(a.threads, nv);
    pool.reserve(n);
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  iai::TrackFile out;
  out.is_dataset = false;
  out.videos = std::move(preds);
  iai::write_tracks(a.out, out);
  for (const std::string& l : lines) std::cout << l;
  std::cout << "wrote predictions to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string out_head = "head.iai";
  std::string out_curve = "curve.txt";
  std::uint64_t seed = 0;
  std::string loss = "focal";
  double alpha = 0.25;
  double lambda = 2.0;
  int steps = 500;
  double lr = 0.1;
  int sequences = 20;
  int frames = 5;
  int window = 5;
  std::string size = "16x16";
  int instances = 4;
  int categories = 4;
  double occlusion = 0.3;
  double noise = 0.05;
  int n_ids = 20;
  int channels = 16;
};

int cmd_train(const TrainArgs& a) {
  iai::WorldConfig wc;
  parse_size(a.size, wc.height, wc.width);
  wc.frames = a.frames;
  wc.max_instances = a.instances;
  wc.categories = a.categories;
  wc.occlusion_rate = a.occlusion;
  wc.noise_sigma = a.noise;
  wc.seed = effective_seed(a.seed);
  wc.channels = a.channels;
  if (a.instances > a.n_ids - 1) throw Usage("--instances exceeds the identity capacity");
  if (a.sequences < 1) throw Usage("--sequences must be positive");

  iai::TrainConfig tc;
  if (a.loss == "focal") {
    tc.fp = {a.alpha, a.lambda};
  } else if (a.loss == "ce") {
    tc.fp = {1.0, 0.0};  // cross entropy is the focal special case
  } else {
    throw Usage("--loss must be 'focal' or 'ce', got '" + a.loss + "'");
  }
  tc.steps = a.steps;
  tc.lr = a.lr;
  tc.window = a.window;
  tc.n_ids = a.n_ids;
  tc.sampler_seed = wc.seed;

  std::vector<iai::GroundTruth> seqs;
  seqs.reserve(a.sequences);
  for (int vid = 1; vid <= a.sequences; ++vid) seqs.push_back(iai::gen_video(wc, vid));

  const iai::ToyIdHead init =
      iai::ToyIdHead::seeded(wc.seed, 2 * a.channels, a.n_ids + 1);
  iai::TrainResult tr;
  try {
    tr = iai::train_toy_head(init, seqs, tc);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  }
  iai::write_head(a.out_head, tr.head);
  iai::write_loss_curve(a.out_curve, tr.loss_curve);
  if (!tr.loss_curve.empty())
    std::cout << "loss " << tr.loss_curve.front() << " -> " << tr.loss_curve.back() << " over "
              << tr.loss_curve.size() << " steps\n";
  std::cout << "wrote " << a.out_head << " and " << a.out_curve << "\n";
  return 0;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const iai::TrackFile pf = iai::read_tracks(a.pred);
  const iai::TrackFile gf = iai::read_tracks(a.gt);
  std::vector<iai::VideoTubes> preds, gts;
  for (const iai::TrackVideo& v : gf.videos) gts.push_back({v.id, v.tubes});
  for (const iai::TrackVideo& v : pf.videos) {
    bool known = false;
    for (const iai::TrackVideo& g : gf.videos) known |= g.id == v.id;
    if (!known)
      throw iai::ParseError("prediction video " + std::to_string(v.id) + " has no ground truth",
                            1);
    preds.push_back({v.id, v.tubes});
  }
  iai::EvalReport rep;
  try {
    rep = iai::evaluate(preds, gts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  }
  const std::string text = iai::report_text(rep);
  std::cout << text;
  if (!a.out.empty()) iai::write_text_file(a.out, text);
  return 0;
}

struct RenderArgs {
  std::string in;
  std::string out_dir;
};

int cmd_render(const RenderArgs& a) {
  const iai::TrackFile tf = iai::read_tracks(a.in);
  std::error_code ec;
  std::filesystem::create_directories(a.out_dir, ec);
  if (ec || !std::filesystem::is_directory(a.out_dir)) {
    std::cerr << "error: cannot create directory " << a.out_dir << "\n";
    return kExitIo;
  }
  int written = 0;
  for (const iai::TrackVideo& v : tf.videos)
    for (int t = 1; t <= v.frames; ++t) {
      const std::string name =
          a.out_dir + "/v" + std::to_string(v.id) + "_f" + std::to_string(t) + ".ppm";
      iai::write_frame_ppm(name, v, t);
      ++written;
    }
  std::cout << "wrote " << written << " frames to " << a.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identity-association tracker toolchain"};
  app.require_subcommand(1);

  GenArgs ga;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--out", ga.out, "dataset file to write");
  gen->add_option("--seed", ga.seed, "world seed (IAI_SEED overrides)");
  gen->add_option("--videos", ga.videos, "number of videos");
  gen->add_option("--size", ga.size, "frame size HxW");
  gen->add_option("--frames", ga.frames, "frames per video");
  gen->add_option("--instances", ga.instances, "max instances per video");
  gen->add_option("--categories", ga.categories, "number of categories");
  gen->add_option("--occlusion", ga.occlusion, "roam/enter/leave rate in [0,1]");
  gen->add_option("--noise", ga.noise, "feature noise sigma");
  gen->add_option("--n-ids", ga.n_ids, "identity capacity N");
  gen->add_option("--channels", ga.channels, "feature channels C");

  TrackArgs ta;
  CLI::App* track = app.add_subcommand("track", "run the tracker over a dataset");
  track->add_option("--data", ta.data, "dataset file")->required();
  track->add_option("--out", ta.out, "prediction file to write");
  track->add_option("--detector", ta.detector, "oracle | trained:PATH");
  track->add_option("--seed", ta.seed, "seed the dataset was generated with");
  track->add_option("--noise", ta.noise, "feature noise sigma");
  track->add_option("--channels", ta.channels, "feature channels C");
  track->add_option("--n-ids", ta.n_ids, "identity capacity N");
  track->add_flag("--no-global", ta.no_global, "disable the first-frame memory");
  track->add_flag("--no-local", ta.no_local, "disable the last-frame memory");
  track->add_flag("--no-cls", ta.no_cls, "disable the classification projector");
  track->add_option("--nms-iou", ta.nms_iou, "suppression IoU threshold");
  track->add_option("--threads", ta.threads, "worker threads over videos");

  TrainArgs na;
  CLI::App* train = app.add_subcommand("train", "train the toy identity head");
  train->add_option("--out-head", na.out_head, "weights file to write");
  train->add_option("--out-curve", na.out_curve, "loss curve file to write");
  train->add_option("--seed", na.seed, "world/model/sampler seed (IAI_SEED overrides)");
  train->add_option("--loss", na.loss, "focal | ce");
  train->add_option("--alpha", na.alpha, "focal alpha");
  train->add_option("--lambda", na.lambda, "focal exponent");
  train->add_option("--steps", na.steps, "SGD steps");
  train->add_option("--lr", na.lr, "learning rate");
  train->add_option("--sequences", na.sequences, "training sequences");
  train->add_option("--frames", na.frames, "frames per sequence");
  train->add_option("--window", na.window, "frames sampled per step");
  train->add_option("--size", na.size, "frame size HxW");
  train->add_option("--instances", na.instances, "max instances per sequence");
  train->add_option("--categories", na.categories, "number of categories");
  train->add_option("--occlusion", na.occlusion, "roam/enter/leave rate in [0,1]");
  train->add_option("--noise", na.noise, "feature noise sigma");
  train->add_option("--n-ids", na.n_ids, "identity capacity N");
  train->add_option("--channels", na.channels, "feature channels C");

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", ea.pred, "prediction file")->required();
  eval->add_option("--gt", ea.gt, "dataset file")->required();
  eval->add_option("--out", ea.out, "also write the report here");

  RenderArgs ra;
  CLI::App* render = app.add_subcommand("render", "write one PPM image per frame");
  render->add_option("--in", ra.in, "track file (dataset or predictions)")->required();
  render->add_option("--out-dir", ra.out_dir, "directory for the images")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(ga);
    if (track->parsed()) return cmd_track(ta);
    if (train->parsed()) return cmd_train(na);
    if (eval->parsed()) return cmd_eval(ea);
    if (render->parsed()) return cmd_render(ra);
  } catch (const iai::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const iai::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Usage& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
