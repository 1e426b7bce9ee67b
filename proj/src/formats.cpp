#include "iai/formats.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iai {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// strict nonneg integer parse; no signs, no blanks, no trailing junk
long long parse_int(const std::string& tok, int line_no, const char* what) {
  if (tok.empty()) throw ParseError(std::string("missing ") + what, line_no);
  long long v = 0;
  for (char ch : tok) {
    if (ch < '0' || ch > '9') throw ParseError(std::string("malformed ") + what + " '" + tok + "'", line_no);
    v = v * 10 + (ch - '0');
    if (v > (1ll << 40)) throw ParseError(std::string("oversized ") + what, line_no);
  }
  return v;
}

double parse_double(const std::string& tok, int line_no, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("malformed ") + what + " '" + tok + "'", line_no);
  }
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::string rle_encode(const Mask& mask) {
  std::string out;
  std::size_t p = 0;
  int bit = 0;
  while (p < mask.size()) {
    std::size_t run = 0;
    while (p < mask.size() && (mask[p] != 0) == (bit != 0)) {
      ++run;
      ++p;
    }
    if (!out.empty()) out += ',';
    out += std::to_string(run);
    bit ^= 1;
  }
  if (out.empty()) out = "0";
  return out;
}

Mask rle_decode(const std::string& text, int pixels, int line_no) {
  Mask mask(pixels, 0);
  long long p = 0;
  int bit = 0;
  std::size_t i = 0;
  bool first = true;
  while (i < text.size()) {
    std::size_t j = text.find(',', i);
    if (j == std::string::npos) j = text.size();
    const long long run = parse_int(text.substr(i, j - i), line_no, "run length");
    if (run == 0 && !first) throw ParseError("zero-length run", line_no);
    if (p + run > pixels) throw ParseError("mask runs exceed the pixel count", line_no);
    if (bit)
      for (long long k = 0; k < run; ++k) mask[p + k] = 1;
    p += run;
    bit ^= 1;
    first = false;
    i = j + 1;
    if (j == text.size()) break;
    if (i == text.size()) throw ParseError("trailing comma in mask runs", line_no);
  }
  if (p != pixels) throw ParseError("mask runs sum to " + std::to_string(p) + ", expected " +
                                        std::to_string(pixels), line_no);
  return mask;
}

void write_tracks(const std::string& path, const TrackFile& tf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "IAITRACK 1 " << (tf.is_dataset ? "dataset" : "pred") << ' ' << tf.videos.size() << '\n';
  for (const TrackVideo& v : tf.videos) {
    out << "VIDEO " << v.id << ' ' << v.frames << ' ' << v.height << ' ' << v.width << ' '
        << v.categories << '\n';
    for (const MaskTube& t : v.tubes) {
      out << "TUBE " << t.id << ' ' << t.category << ' ' << fmt("%.6f", t.confidence) << '\n';
      for (std::size_t f = 0; f < t.frames.size(); ++f) {
        if (t.frames[f].empty()) continue;
        out << "F " << f + 1 << ' ' << rle_encode(t.frames[f]) << '\n';
      }
    }
  }
  if (!out.flush()) throw IoError("cannot write " + path);
}

TrackFile read_tracks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  TrackFile tf;
  std::string line;
  int line_no = 0;
  long long declared_videos = -1;

  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++line_no;
  {
    const auto tok = split_ws(line);
    if (tok.size() != 4 || tok[0] != "IAITRACK") throw ParseError("bad header", line_no);
    if (tok[1] != "1") throw ParseError("unsupported version '" + tok[1] + "'", line_no);
    if (tok[2] == "dataset")
      tf.is_dataset = true;
    else if (tok[2] == "pred")
      tf.is_dataset = false;
    else
      throw ParseError("unknown kind '" + tok[2] + "'", line_no);
    declared_videos = parse_int(tok[3], line_no, "video count");
  }

  TrackVideo* video = nullptr;
  MaskTube* tube = nullptr;
  int last_frame = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw ParseError("blank line", line_no);
    const auto tok = split_ws(line);
    if (tok[0] == "VIDEO") {
      if (tok.size() != 6) throw ParseError("VIDEO needs 5 fields", line_no);
      TrackVideo v;
      v.id = int(parse_int(tok[1], line_no, "video id"));
      v.frames = int(parse_int(tok[2], line_no, "frame count"));
      v.height = int(parse_int(tok[3], line_no, "height"));
      v.width = int(parse_int(tok[4], line_no, "width"));
      v.categories = int(parse_int(tok[5], line_no, "category count"));
      if (v.frames < 1 || v.height < 1 || v.width < 1 || v.categories < 1)
        throw ParseError("degenerate video geometry", line_no);
      for (const TrackVideo& prev : tf.videos)
        if (prev.id == v.id) throw ParseError("duplicate video id " + tok[1], line_no);
      tf.videos.push_back(v);
      video = &tf.videos.back();
      tube = nullptr;
    } else if (tok[0] == "TUBE") {
      if (!video) throw ParseError("TUBE before any VIDEO", line_no);
      if (tok.size() != 4) throw ParseError("TUBE needs 3 fields", line_no);
      MaskTube t;
      t.id = int(parse_int(tok[1], line_no, "instance id"));
      t.category = int(parse_int(tok[2], line_no, "class"));
      t.confidence = parse_double(tok[3], line_no, "confidence");
      if (t.category >= video->categories) throw ParseError("class out of range", line_no);
      if (!(t.confidence >= 0.0 && t.confidence <= 1.0))
        throw ParseError("confidence outside [0, 1]", line_no);
      for (const MaskTube& prev : video->tubes)
        if (prev.id == t.id)
          throw ParseError("instance id " + tok[1] + " appears twice in video " +
                               std::to_string(video->id), line_no);
      t.frames.assign(video->frames, Mask{});
      video->tubes.push_back(std::move(t));
      tube = &video->tubes.back();
      last_frame = 0;
    } else if (tok[0] == "F") {
      if (!tube) throw ParseError("F before any TUBE", line_no);
      if (tok.size() != 3) throw ParseError("F needs 2 fields", line_no);
      const int f = int(parse_int(tok[1], line_no, "frame index"));
      if (f < 1 || f > video->frames) throw ParseError("frame index out of range", line_no);
      if (f <= last_frame) throw ParseError("frame indices not ascending", line_no);
      last_frame = f;
      tube->frames[f - 1] = rle_decode(tok[2], video->height * video->width, line_no);
    } else {
      throw ParseError("unknown record '" + tok[0] + "'", line_no);
    }
  }
  if (declared_videos != int(tf.videos.size()))
    throw ParseError("header declares " + std::to_string(declared_videos) + " videos, file has " +
                         std::to_string(tf.videos.size()), line_no == 0 ? 1 : line_no);
  return tf;
}

void write_loss_curve(const std::string& path, const std::vector<double>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ' ' << fmt("%.9f", curve[i]) << '\n';
  if (!out.flush()) throw IoError("cannot write " + path);
}

void write_head(const std::string& path, const ToyIdHead& head) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "IAIHEAD 1 " << head.model_seed << ' ' << head.in_dim << ' ' << head.n_out << '\n';
  const auto hex = [&](double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", v);
    out << buf;
  };
  const auto dump_matrix = [&](const char* name, const Matrix& m) {
    out << name;
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        out << ' ';
        hex(m.at(i, j));
      }
    out << '\n';
  };
  const auto dump_vec = [&](const char* name, const std::vector<double>& v) {
    out << name;
    for (double x : v) {
      out << ' ';
      hex(x);
    }
    out << '\n';
  };
  dump_matrix("W1", head.w1);
  dump_vec("B1", head.b1);
  dump_matrix("W2", head.w2);
  dump_vec("B2", head.b2);
  if (!out.flush()) throw IoError("cannot write " + path);
}

ToyIdHead read_head(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty head file", 1);
  auto tok = split_ws(line);
  if (tok.size() != 5 || tok[0] != "IAIHEAD" || tok[1] != "1")
    throw ParseError("bad head header", 1);
  ToyIdHead h;
  h.model_seed = std::uint64_t(parse_int(tok[2], 1, "model seed"));
  h.in_dim = int(parse_int(tok[3], 1, "input width"));
  h.n_out = int(parse_int(tok[4], 1, "output width"));
  if (h.in_dim < 1 || h.n_out < 2) throw ParseError("degenerate head dimensions", 1);

  const auto parse_hex = [](const std::string& t, int line_no) {
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) throw ParseError("malformed weight '" + t + "'", line_no);
    return v;
  };
  const auto read_row = [&](const char* name, std::size_t count, int line_no) {
    if (!std::getline(in, line)) throw ParseError(std::string("missing ") + name, line_no);
    auto tk = split_ws(line);
    if (tk.empty() || tk[0] != name || tk.size() != count + 1)
      throw ParseError(std::string("bad ") + name + " section", line_no);
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = parse_hex(tk[i + 1], line_no);
    return v;
  };
  const std::size_t in_sz = std::size_t(h.in_dim);
  const std::size_t out_sz = std::size_t(h.n_out);
  const auto w1 = read_row("W1", in_sz * in_sz, 2);
  h.b1 = read_row("B1", in_sz, 3);
  const auto w2 = read_row("W2", in_sz * out_sz, 4);
  h.b2 = read_row("B2", out_sz, 5);
  h.w1 = Matrix(h.in_dim, h.in_dim);
  std::copy(w1.begin(), w1.end(), h.w1.data());
  h.w2 = Matrix(h.in_dim, h.n_out);
  std::copy(w2.begin(), w2.end(), h.w2.data());
  return h;
}

std::array<unsigned char, 3> palette_color(int id) {
  static const std::array<std::array<unsigned char, 3>, 20> table{{
      {230, 70, 60},  {60, 160, 230}, {90, 200, 90},   {240, 180, 50}, {170, 90, 220},
      {70, 210, 200}, {230, 120, 40}, {150, 220, 40},  {230, 90, 170}, {90, 110, 230},
      {180, 160, 80}, {60, 120, 90},  {200, 200, 200}, {150, 60, 60},  {60, 60, 150},
      {240, 230, 90}, {130, 230, 160},{200, 120, 120}, {120, 200, 230},{170, 170, 40},
  }};
  if (id < 0) return {12, 12, 12};
  return table[id % 20];
}

void write_frame_ppm(const std::string& path, const TrackVideo& video, int frame_index) {
  const int hw = video.height * video.width;
  std::vector<unsigned char> rgb(std::size_t(hw) * 3);
  const auto bg = palette_color(-1);
  for (int p = 0; p < hw; ++p) {
    rgb[p * 3] = bg[0];
    rgb[p * 3 + 1] = bg[1];
    rgb[p * 3 + 2] = bg[2];
  }
  for (const MaskTube& t : video.tubes) {
    if (frame_index - 1 >= int(t.frames.size())) continue;
    const Mask& m = t.frames[frame_index - 1];
    if (m.empty()) continue;
    const auto c = palette_color(t.id);
    for (int p = 0; p < hw; ++p) {
      if (!m[p]) continue;
      rgb[p * 3] = c[0];
      rgb[p * 3 + 1] = c[1];
      rgb[p * 3 + 2] = c[2];
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << video.width << ' ' << video.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), std::streamsize(rgb.size()));
  if (!out.flush()) throw IoError("cannot write " + path);
}

std::string report_text(const EvalReport& rep) {
  std::string s;
  s += "mAP " + fmt("%.4f", rep.map) + "\n";
  s += "AP50 " + fmt("%.4f", rep.ap50) + "\n";
  s += "AP75 " + fmt("%.4f", rep.ap75) + "\n";
  s += "AR1 " + fmt("%.4f", rep.ar1) + "\n";
  s += "AR10 " + fmt("%.4f", rep.ar10) + "\n";
  s += "id_switches " + std::to_string(rep.switches) + "\n";
  for (int i = 0; i < 10; ++i)
    s += "AP@" + fmt("%.2f", 0.5 + 0.05 * i) + " " + fmt("%.4f", rep.ap_per_threshold[i]) + "\n";
  s += "SUMMARY mAP=" + fmt("%.4f", rep.map) + " AP50=" + fmt("%.4f", rep.ap50) +
       " AP75=" + fmt("%.4f", rep.ap75) + " AR1=" + fmt("%.4f", rep.ar1) +
       " AR10=" + fmt("%.4f", rep.ar10) + " switches=" + std::to_string(rep.switches) + "\n";
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out.flush()) throw IoError("cannot write " + path);
}

}  // namespace iai
