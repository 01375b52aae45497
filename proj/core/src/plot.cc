// plot.cc

// Copyright 2026  The avsr-cmfe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "avsr/plot.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <png.h>

#include "avsr/error.h"

namespace avsr::plot {
namespace {

struct Rgb {
  uint8_t r, g, b;
};

Rgb Palette(int k, int classes) {
  // Evenly spaced hues, two brightness levels to separate neighbours.
  const double h = 6.0 * (static_cast<double>(k) / std::max(classes, 1));
  const double v = k % 2 ? 0.65 : 0.95;
  const double f = h - std::floor(h);
  const double p = 0.0, q = v * (1.0 - f), t = v * f;
  double r, g, b;
  switch (static_cast<int>(std::floor(h)) % 6) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {static_cast<uint8_t>(std::lround(255 * r)), static_cast<uint8_t>(std::lround(255 * g)),
          static_cast<uint8_t>(std::lround(255 * b))};
}

void AppendBytes(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void NoFlush(png_structp) {}

}  // namespace

nn::RowMatrix Pca2d(const nn::RowMatrix& x) {
  if (x.rows() < 2 || x.cols() < 2) throw DegenerateInputError("pca: need >= 2 points in >= 2 dims");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const int64_t d = x.cols();
  Eigen::MatrixXd axes(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(k) = v;
  }
  return centred * axes;
}

std::vector<uint8_t> ScatterPng(const nn::RowMatrix& points, const std::vector<int>& labels,
                                int classes, int width, int height) {
  if (points.cols() != 2 || static_cast<size_t>(points.rows()) != labels.size())
    throw ConfigError("scatter: need [n, 2] points and n labels");
  std::vector<uint8_t> img(static_cast<size_t>(width) * height * 3, 255);
  const int margin = 16;
  auto put = [&](int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    uint8_t* p = &img[(static_cast<size_t>(y) * width + x) * 3];
    p[0] = c.r, p[1] = c.g, p[2] = c.b;
  };
  const Rgb axis{160, 160, 160};
  for (int x = margin; x < width - margin; ++x) put(x, height - margin, axis), put(x, margin, axis);
  for (int y = margin; y < height - margin; ++y) put(margin, y, axis), put(width - margin, y, axis);

  if (points.rows() > 0) {
    const double x0 = points.col(0).minCoeff(), x1 = points.col(0).maxCoeff();
    const double y0 = points.col(1).minCoeff(), y1 = points.col(1).maxCoeff();
    const double sx = (width - 2 * margin - 6) / std::max(x1 - x0, 1e-12);
    const double sy = (height - 2 * margin - 6) / std::max(y1 - y0, 1e-12);
    for (int64_t i = 0; i < points.rows(); ++i) {
      const int px = margin + 3 + static_cast<int>(std::lround((points(i, 0) - x0) * sx));
      const int py = height - margin - 3 - static_cast<int>(std::lround((points(i, 1) - y0) * sy));
      const Rgb c = Palette(labels[i], classes);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) put(px + dx, py + dy, c);
    }
  }

  std::vector<uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw IoError("png: cannot allocate writer");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(png, &out, AppendBytes, NoFlush);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, &img[static_cast<size_t>(y) * width * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace avsr::plot
