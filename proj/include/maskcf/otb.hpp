#pragma once

// OTB directory layout: img/ with numbered frames and groundtruth_rect.txt
// holding one "x,y,w,h" top-left box per frame. Link maskcf_io to use.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "maskcf/errors.hpp"
#include "maskcf/image_io.hpp"
#include "maskcf/synth.hpp"

namespace maskcf {

struct Sequence {
  std::string name;
  std::vector<std::filesystem::path> frames;
  std::vector<BoundingBox> groundtruth;  // empty when the file is absent
  std::vector<std::string> attributes;

  bool has_groundtruth() const noexcept { return !groundtruth.empty(); }
};

/// Parses ground-truth lines of four numbers separated by commas, tabs or
/// spaces. Blank lines are skipped; line numbers in errors are 1-based.
inline std::vector<BoundingBox> parse_groundtruth(std::istream& in, const std::string& file) {
  std::vector<BoundingBox> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t,") == std::string::npos) continue;
    double v[4];
    int k = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ',' || *p == ' ' || *p == '\t')) ++p;
      if (p == end) break;
      if (k == 4) throw ParseError(file, n, "expected 4 values");
      const auto [next, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc() || (next < end && *next != ',' && *next != ' ' && *next != '\t'))
        throw ParseError(file, n, "not a number");
      ++k;
      p = next;
    }
    if (k != 4) throw ParseError(file, n, "expected 4 values");
    if (!(v[2] > 0.0) || !(v[3] > 0.0)) throw ParseError(file, n, "box width and height must be positive");
    out.push_back(BoundingBox::from_top_left(v[0], v[1], v[2], v[3]));
  }
  return out;
}

inline std::vector<BoundingBox> read_groundtruth(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  return parse_groundtruth(in, file.string());
}

/// Loads the frame list, ground truth and optional attributes.txt tags.
/// Without ground truth the sequence is returned with an empty box list
/// unless require_groundtruth is set.
inline Sequence load_otb_sequence(const std::filesystem::path& dir, bool require_groundtruth = true) {
  namespace fs = std::filesystem;
  const fs::path img = dir / "img";
  if (!fs::is_directory(img)) throw DataError("missing image folder " + img.string());
  Sequence seq;
  seq.name = fs::path(dir).lexically_normal().filename().string();
  if (seq.name.empty()) seq.name = fs::path(dir).lexically_normal().parent_path().filename().string();
  for (const auto& e : fs::directory_iterator(img)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (e.is_regular_file() && (ext == ".jpg" || ext == ".jpeg" || ext == ".png")) seq.frames.push_back(e.path());
  }
  std::sort(seq.frames.begin(), seq.frames.end());
  if (seq.frames.size() < 2) throw DataError("sequence " + dir.string() + " has fewer than 2 frames");

  const fs::path gt = dir / "groundtruth_rect.txt";
  if (fs::exists(gt)) {
    seq.groundtruth = read_groundtruth(gt);
    if (seq.groundtruth.size() != seq.frames.size())
      throw DataError(gt.string() + ": " + std::to_string(seq.groundtruth.size()) + " boxes for " +
                      std::to_string(seq.frames.size()) + " frames");
  } else if (require_groundtruth) {
    throw DataError("missing " + gt.string());
  }

  if (std::ifstream tags(dir / "attributes.txt"); tags) {
    std::string t;
    while (tags >> t) {
      std::replace(t.begin(), t.end(), ',', ' ');
      std::istringstream parts(t);
      for (std::string a; parts >> a;) seq.attributes.push_back(a);
    }
  }
  return seq;
}

inline Image read_frame(const Sequence& seq, std::size_t t) { return read_image(seq.frames.at(t)); }

/// Writes img/%04d.jpg (1-based) and groundtruth_rect.txt.
inline void write_otb_sequence(const std::filesystem::path& dir, const SynthSequence& seq) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "img", ec);
  if (ec) throw DataError("cannot create " + (dir / "img").string() + ": " + ec.message());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.jpg", t + 1);
    write_image(dir / "img" / name, seq.frames[t]);
  }
  const auto gt_path = dir / "groundtruth_rect.txt";
  std::ofstream gt(gt_path);
  for (const auto& b : seq.groundtruth) {
    char line[128];
    std::snprintf(line, sizeof line, "%.6g,%.6g,%.6g,%.6g\n", b.left(), b.top(), b.w, b.h);
    gt << line;
  }
  if (!gt) throw DataError("cannot write " + gt_path.string());
}

}  // namespace maskcf
