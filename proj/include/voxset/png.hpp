// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "voxset/image.hpp"

namespace voxset {

// Writes an image as 8-bit PNG (1=gray, 3=RGB, 4=RGBA channels). Values are
// clamped to [0,1] and rounded to bytes; meant for inspection — exact tests
// use the raw float format.
template <typename Scalar>
void write_png(const std::string& path, const Image<Scalar>& img) {
  const int channels = img.channels();
  if (channels != 1 && channels != 3 && channels != 4) {
    throw std::invalid_argument("write_png: need 1, 3 or 4 channels");
  }
  std::vector<png_byte> bytes(
      static_cast<size_t>(img.height) * img.width * channels);
  size_t at = 0;
  for (Eigen::Index i = 0; i < img.values.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < img.values.cols(); ++ch) {
      Scalar v = img.values(i, ch);
      v = std::min(std::max(v, Scalar(0)), Scalar(1));
      bytes[at++] = static_cast<png_byte>(v * Scalar(255) + Scalar(0.5));
    }
  }
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(
      std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                              nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  const int color_type = channels == 1   ? PNG_COLOR_TYPE_GRAY
                         : channels == 3 ? PNG_COLOR_TYPE_RGB
                                         : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int r = 0; r < img.height; ++r) {
    rows[static_cast<size_t>(r)] =
        bytes.data() + static_cast<size_t>(r) * img.width * channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace voxset
