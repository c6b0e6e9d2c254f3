#pragma once

// Image decoding and encoding through OpenCV's codecs. Link maskcf_io to use.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "maskcf/errors.hpp"
#include "maskcf/features.hpp"

namespace maskcf {

/// Decodes a PNG/JPEG file into RGB (or gray) values in [0, 1].
inline Image read_image(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot decode image " + path.string());
  if (m.depth() != CV_8U) throw DataError("unsupported bit depth in " + path.string());
  const int ch = m.channels() == 1 ? 1 : 3;
  Image im(m.rows, m.cols, ch);
  for (int r = 0; r < m.rows; ++r) {
    const unsigned char* row = m.ptr<unsigned char>(r);
    for (int c = 0; c < m.cols; ++c) {
      if (ch == 1) {
        im.at(r, c) = row[c] / 255.0;
      } else {
        const unsigned char* px = row + std::size_t(c) * std::size_t(m.channels());
        im.at(r, c, 0) = px[2] / 255.0;
        im.at(r, c, 1) = px[1] / 255.0;
        im.at(r, c, 2) = px[0] / 255.0;
      }
    }
  }
  return im;
}

inline void write_image(const std::filesystem::path& path, const Image& im, int jpeg_quality = 95) {
  cv::Mat m(im.rows, im.cols, im.channels == 1 ? CV_8UC1 : CV_8UC3);
  auto q = [](double v) { return cv::saturate_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (int r = 0; r < im.rows; ++r) {
    unsigned char* row = m.ptr<unsigned char>(r);
    for (int c = 0; c < im.cols; ++c) {
      if (im.channels == 1) {
        row[c] = q(im.at(r, c));
      } else {
        row[3 * c + 0] = q(im.at(r, c, 2));
        row[3 * c + 1] = q(im.at(r, c, 1));
        row[3 * c + 2] = q(im.at(r, c, 0));
      }
    }
  }
  const std::vector<int> params{cv::IMWRITE_JPEG_QUALITY, jpeg_quality};
  if (!cv::imwrite(path.string(), m, params)) throw DataError("cannot write image " + path.string());
}

}  // namespace maskcf
