// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "voxset/common.hpp"

namespace voxset {

// Dense raster with channel-last storage: element (r, c) occupies row
// r * width + c of a (height*width) x channels array, so the backing memory
// matches the on-disk .f32img layout byte for byte.
template <typename Scalar>
struct Image {
  int height = 0;
  int width = 0;
  ChannelArray<Scalar> values;  // (height*width) x channels

  Image() = default;
  Image(int h, int w, int channels) : height(h), width(w) {
    require(h > 0 && w > 0 && channels > 0, "Image: dims must be positive");
    values = ChannelArray<Scalar>::Zero(static_cast<Eigen::Index>(h) * w,
                                        channels);
  }

  int channels() const { return static_cast<int>(values.cols()); }
  Eigen::Index pixel_index(int r, int c) const {
    return static_cast<Eigen::Index>(r) * width + c;
  }

  Scalar& operator()(int r, int c, int ch) {
    return values(pixel_index(r, c), ch);
  }
  Scalar operator()(int r, int c, int ch) const {
    return values(pixel_index(r, c), ch);
  }

  auto pixel(int r, int c) { return values.row(pixel_index(r, c)); }
  auto pixel(int r, int c) const { return values.row(pixel_index(r, c)); }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width &&
           channels() == other.channels();
  }
};

template <typename Scalar>
bool same_shape(const Image<Scalar>& a, const Image<Scalar>& b) {
  return a.same_shape(b);
}

template <typename Scalar>
Image<Scalar> constant_image(int h, int w, const Vec3<Scalar>& rgb) {
  Image<Scalar> img(h, w, 3);
  img.values.col(0) = rgb.x();
  img.values.col(1) = rgb.y();
  img.values.col(2) = rgb.z();
  return img;
}

}  // namespace voxset
