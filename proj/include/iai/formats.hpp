#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "iai/metrics.hpp"
#include "iai/synthworld.hpp"
#include "iai/tracker.hpp"

namespace iai {

// Any defect in an input file: carries the 1-based line it was found on.
struct ParseError : std::runtime_error {
  int line;
  ParseError(const std::string& what, int line_no)
      : std::runtime_error(what + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrackVideo {
  int id = 0;
  int frames = 0;
  int height = 0;
  int width = 0;
  int categories = 1;
  std::vector<MaskTube> tubes;
};

struct TrackFile {
  bool is_dataset = true;  // datasets carry ground truth, otherwise predictions
  std::vector<TrackVideo> videos;
};

// Line-oriented ASCII track container:
//   IAITRACK 1 <dataset|pred> <video count>
//   VIDEO <id> <frames> <height> <width> <categories>
//   TUBE <instance-id> <class> <confidence, 6 decimals>
//   F <frame, 1-based> <run-length mask>
// The mask line lists comma-separated run lengths of the row-major pixels,
// alternating zeros/ones and starting with the zero count; runs must sum to
// height*width. Frames where the instance is absent are simply omitted.
void write_tracks(const std::string& path, const TrackFile& tf);
TrackFile read_tracks(const std::string& path);  // throws ParseError / IoError

std::string rle_encode(const Mask& mask);
Mask rle_decode(const std::string& text, int pixels, int line_no);

// one "<step> <loss, 9 decimals>" pair per line
void write_loss_curve(const std::string& path, const std::vector<double>& curve);

// Head weights, hexfloat so a write/read round trip is exact:
//   IAIHEAD 1 <model-seed> <in-dim> <out-dim>
// then one W1/B1/W2/B2 section per line group.
void write_head(const std::string& path, const ToyIdHead& head);
ToyIdHead read_head(const std::string& path);

// fixed 20-color palette keyed by ID; the background stays near-black
std::array<unsigned char, 3> palette_color(int id);

// binary PPM (P6) of one frame of a video's tube set; overlapping masks (not
// produced by this pipeline, but legal input) resolve to the later tube
void write_frame_ppm(const std::string& path, const TrackVideo& video, int frame_index);

std::string report_text(const EvalReport& rep);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace iai
