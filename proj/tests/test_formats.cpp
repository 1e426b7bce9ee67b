#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "iai/formats.hpp"
#include "iai/rng.hpp"

using namespace iai;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("iai_fmt_" + name)).string();
}

void put(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Mask random_mask(std::uint64_t seed, int pixels) {
  auto eng = make_engine(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mask m(pixels, 0);
  for (int p = 0; p < pixels; ++p) m[p] = u(eng) < 0.5 ? 1 : 0;
  return m;
}

TrackFile sample_file() {
  TrackFile tf;
  tf.is_dataset = true;
  TrackVideo v;
  v.id = 1;
  v.frames = 3;
  v.height = 2;
  v.width = 4;
  v.categories = 2;
  MaskTube t;
  t.id = 0;
  t.category = 1;
  t.confidence = 0.5;
  t.frames = {Mask{0, 1, 1, 0, 0, 0, 0, 0}, Mask{}, Mask{1, 1, 0, 0, 0, 0, 0, 1}};
  v.tubes.push_back(t);
  tf.videos.push_back(v);
  return tf;
}

}  // namespace

TEST_CASE("rle: encode starts with the leading-zero count and round-trips") {
  CHECK(rle_encode(Mask{0, 1, 1, 0, 0, 0, 0, 0}) == "1,2,5");
  CHECK(rle_encode(Mask{1, 1, 0, 0, 0, 0, 0, 1}) == "0,2,5,1");
  CHECK(rle_encode(Mask(4, 0)) == "4");
  CHECK(rle_encode(Mask(3, 1)) == "0,3");
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Mask m = random_mask(s, 24);
    CHECK(rle_decode(rle_encode(m), 24, 1) == m);
  }
}

TEST_CASE("rle: defective runs are rejected with the line number") {
  CHECK_THROWS_AS(rle_decode("1,2", 8, 7), ParseError);          // sums to 3, not 8
  CHECK_THROWS_AS(rle_decode("0,0,8", 8, 7), ParseError);        // zero run past the front
  CHECK_THROWS_AS(rle_decode("9", 8, 7), ParseError);            // overruns the pixel count
  CHECK_THROWS_AS(rle_decode("4,x", 8, 7), ParseError);          // not a number
  CHECK_THROWS_AS(rle_decode("4,4,", 8, 7), ParseError);         // trailing comma
  CHECK_THROWS_AS(rle_decode("-1,9", 8, 7), ParseError);         // negative run
  try {
    rle_decode("1,2", 8, 7);
  } catch (const ParseError& e) {
    CHECK(e.line == 7);
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
}

TEST_CASE("tracks: write/read round trip preserves everything") {
  const TrackFile tf = sample_file();
  const std::string path = tmp_path("roundtrip.iai");
  write_tracks(path, tf);
  const TrackFile back = read_tracks(path);
  CHECK(back.is_dataset == tf.is_dataset);
  REQUIRE(back.videos.size() == 1);
  const TrackVideo &a = back.videos[0], &b = tf.videos[0];
  CHECK(a.id == b.id);
  CHECK(a.frames == b.frames);
  CHECK(a.height == b.height);
  CHECK(a.width == b.width);
  CHECK(a.categories == b.categories);
  REQUIRE(a.tubes.size() == 1);
  CHECK(a.tubes[0].id == b.tubes[0].id);
  CHECK(a.tubes[0].category == b.tubes[0].category);
  CHECK(a.tubes[0].confidence == b.tubes[0].confidence);
  CHECK(a.tubes[0].frames == b.tubes[0].frames);
  std::remove(path.c_str());
}

TEST_CASE("tracks: absent frames are omitted lines, empty video is legal") {
  const std::string path = tmp_path("omitted.iai");
  write_tracks(path, sample_file());
  const std::string text = slurp(path);
  CHECK(text.find("F 1 ") != std::string::npos);
  CHECK(text.find("F 2 ") == std::string::npos);  // frame 2 mask is empty
  CHECK(text.find("F 3 ") != std::string::npos);
  CHECK(text.find("TUBE 0 1 0.500000\n") != std::string::npos);

  put(path, "IAITRACK 1 pred 1\nVIDEO 4 2 2 2 1\n");
  const TrackFile empty = read_tracks(path);
  CHECK_FALSE(empty.is_dataset);
  REQUIRE(empty.videos.size() == 1);
  CHECK(empty.videos[0].tubes.empty());
  std::remove(path.c_str());
}

TEST_CASE("tracks: malformed inputs carry their line numbers") {
  const std::string path = tmp_path("bad.iai");
  const auto line_of = [&](const std::string& text) {
    put(path, text);
    try {
      read_tracks(path);
    } catch (const ParseError& e) {
      return e.line;
    }
    return -1;
  };
  CHECK(line_of("IAITRACK 2 dataset 0\n") == 1);                               // bad version
  CHECK(line_of("IAITRACK 1 other 0\n") == 1);                                 // bad kind
  CHECK(line_of("IAITRACK 1 dataset 1\n") > 0);                                // missing video
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 1 2 2\n") == 2);                // short VIDEO
  CHECK(line_of("IAITRACK 1 dataset 1\nTUBE 0 0 1.000000\n") == 2);            // tube first
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 1 2 2 1\nF 1 4\n") == 3);       // F before TUBE
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 1 2 2 1\n"
                "TUBE 0 0 1.000000\nF 1 3\n") == 4);                           // runs sum short
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 1 2 2 1\n"
                "TUBE 0 0 1.500000\n") == 3);                                  // confidence > 1
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 1 2 2 1\n"
                "TUBE 0 3 1.000000\n") == 3);                                  // class range
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 2 2 2 1\nTUBE 0 0 1.000000\n"
                "F 2 4\nF 1 4\n") == 5);                                       // F not ascending
  CHECK(line_of("IAITRACK 1 dataset 1\nVIDEO 1 1 2 2 1\nTUBE 0 0 1.000000\n"
                "F 2 4\n") == 4);                                              // frame out of range
  std::remove(path.c_str());
}

TEST_CASE("tracks: duplicate tube and video ids are rejected") {
  const std::string path = tmp_path("dups.iai");
  put(path,
      "IAITRACK 1 pred 1\nVIDEO 1 1 2 2 1\nTUBE 0 0 1.000000\nF 1 0,4\n"
      "TUBE 0 0 0.500000\nF 1 0,4\n");
  CHECK_THROWS_AS(read_tracks(path), ParseError);
  put(path, "IAITRACK 1 pred 2\nVIDEO 1 1 2 2 1\nVIDEO 1 1 2 2 1\n");
  CHECK_THROWS_AS(read_tracks(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("tracks: header video count must match the body") {
  const std::string path = tmp_path("count.iai");
  put(path, "IAITRACK 1 dataset 2\nVIDEO 1 1 2 2 1\n");
  CHECK_THROWS_AS(read_tracks(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("tracks: unreadable and unwritable paths raise IoError") {
  CHECK_THROWS_AS(read_tracks("/nonexistent_dir_xyz/a.iai"), IoError);
  CHECK_THROWS_AS(write_tracks("/nonexistent_dir_xyz/a.iai", sample_file()), IoError);
}

TEST_CASE("loss curve: step and nine decimals per line") {
  const std::string path = tmp_path("curve.txt");
  write_loss_curve(path, {1.5, 0.25});
  CHECK(slurp(path) == "0 1.500000000\n1 0.250000000\n");
  std::remove(path.c_str());
}

TEST_CASE("head: hexfloat round trip is exact") {
  ToyIdHead h = ToyIdHead::seeded(12345, 6, 4);
  h.w1.at(0, 0) = 0.1 + 0.2;  // value with a messy binary expansion
  h.b2[3] = -1.0 / 3.0;
  const std::string path = tmp_path("head.iai");
  write_head(path, h);
  const ToyIdHead back = read_head(path);
  CHECK(back == h);
  std::remove(path.c_str());
}

TEST_CASE("head: malformed files are rejected") {
  const std::string path = tmp_path("badhead.iai");
  put(path, "IAIHEAD 2 0 4 3\n");
  CHECK_THROWS_AS(read_head(path), ParseError);
  put(path, "IAIHEAD 1 0 4 3\nW1 1.0\n");  // wrong element count
  CHECK_THROWS_AS(read_head(path), ParseError);
  CHECK_THROWS_AS(read_head("/nonexistent_dir_xyz/h.iai"), IoError);
  std::remove(path.c_str());
}

TEST_CASE("palette: stable, bright, and distinct from the background") {
  const auto bg = palette_color(-1);
  CHECK(int(bg[0]) + bg[1] + bg[2] < 60);
  for (int id = 0; id < 20; ++id) {
    const auto c = palette_color(id);
    CHECK(palette_color(id) == c);           // pure function of id
    CHECK(palette_color(id + 20) == c);      // palette wraps
    CHECK(int(c[0]) + c[1] + c[2] > 150);    // visibly brighter than background
  }
  CHECK_FALSE(palette_color(0) == palette_color(1));
}

TEST_CASE("ppm: header, size, and exactly two colors for one instance") {
  TrackVideo v = sample_file().videos[0];
  const std::string path = tmp_path("frame.ppm");
  write_frame_ppm(path, v, 1);
  const std::string text = slurp(path);
  CHECK(text.rfind("P6\n4 2\n255\n", 0) == 0);
  const std::string pix = text.substr(text.find("255\n") + 4);
  REQUIRE(pix.size() == 2u * 4u * 3u);
  std::set<std::string> colors;
  for (int p = 0; p < 8; ++p) colors.insert(pix.substr(std::size_t(p) * 3, 3));
  CHECK(colors.size() == 2);  // background plus one instance color
  std::remove(path.c_str());
}

TEST_CASE("report: key-value lines plus the machine summary") {
  EvalReport rep;
  rep.map = 1.0;
  rep.ap50 = 1.0;
  rep.ap75 = 0.5;
  rep.ar1 = 0.25;
  rep.ar10 = 1.0;
  rep.switches = 3;
  for (int i = 0; i < 10; ++i) rep.ap_per_threshold[i] = 0.1 * i;
  const std::string text = report_text(rep);
  CHECK(text.find("mAP 1.0000\n") != std::string::npos);
  CHECK(text.find("AP50 1.0000\n") != std::string::npos);
  CHECK(text.find("AP75 0.5000\n") != std::string::npos);
  CHECK(text.find("id_switches 3\n") != std::string::npos);
  CHECK(text.find("AP@0.55 0.1000\n") != std::string::npos);
  CHECK(text.find("SUMMARY mAP=1.0000 AP50=1.0000 AP75=0.5000 AR1=0.2500 AR10=1.0000 "
                  "switches=3\n") != std::string::npos);
}
