// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxset/aggregate.hpp"
#include "voxset/common.hpp"
#include "voxset/field.hpp"
#include "voxset/geometry.hpp"
#include "voxset/image.hpp"
#include "voxset/normalize.hpp"

namespace voxset {

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(const std::string& data, size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(data[at])) |
         (static_cast<std::uint32_t>(
              static_cast<unsigned char>(data[at + 1]))
          << 8) |
         (static_cast<std::uint32_t>(
              static_cast<unsigned char>(data[at + 2]))
          << 16) |
         (static_cast<std::uint32_t>(
              static_cast<unsigned char>(data[at + 3]))
          << 24);
}

inline float get_f32(const std::string& data, size_t at) {
  const std::uint32_t bits = get_u32(data, at);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

// Shortest round-trip decimal formatting for manifest floats.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// ---- raw float image (.f32img) -------------------------------------------
// 12-byte header: u32 height, u32 width, u32 channels (little-endian),
// then height*width*channels float32 values, row-major, channels innermost.

template <typename Scalar>
void write_f32img(const std::string& path, const Image<Scalar>& img) {
  std::string data;
  data.reserve(12 + static_cast<size_t>(img.values.size()) * 4);
  detail::put_u32(data, static_cast<std::uint32_t>(img.height));
  detail::put_u32(data, static_cast<std::uint32_t>(img.width));
  detail::put_u32(data, static_cast<std::uint32_t>(img.channels()));
  for (Eigen::Index i = 0; i < img.values.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < img.values.cols(); ++ch) {
      detail::put_f32(data, static_cast<float>(img.values(i, ch)));
    }
  }
  detail::write_file(path, data);
}

template <typename Scalar>
Image<Scalar> read_f32img(const std::string& path) {
  const std::string data = detail::read_file(path);
  if (data.size() < 12) {
    throw std::runtime_error("truncated image header: " + path);
  }
  const auto height = static_cast<int>(detail::get_u32(data, 0));
  const auto width = static_cast<int>(detail::get_u32(data, 4));
  const auto channels = static_cast<int>(detail::get_u32(data, 8));
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw std::runtime_error("bad image dims: " + path);
  }
  const size_t need = 12 + static_cast<size_t>(height) * width * channels * 4;
  if (data.size() != need) {
    throw std::runtime_error("truncated image payload: " + path);
  }
  Image<Scalar> img(height, width, channels);
  size_t at = 12;
  for (Eigen::Index i = 0; i < img.values.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < img.values.cols(); ++ch) {
      img.values(i, ch) = Scalar(detail::get_f32(data, at));
      at += 4;
    }
  }
  return img;
}

// ---- voxel volumes (.vxg) -------------------------------------------------
// 16-byte header: magic "VXG1", u32 side, u32 channels, u32 reserved = 0,
// then side^3 * channels float32 values in z-major, y, x node order with
// channels innermost — exactly the in-memory row order.

inline constexpr char kVxgMagic[4] = {'V', 'X', 'G', '1'};

template <typename Scalar>
void write_vxg_values(const std::string& path, int side,
                      const ChannelArray<Scalar>& values) {
  std::string data;
  data.reserve(16 + static_cast<size_t>(values.size()) * 4);
  data.append(kVxgMagic, 4);
  detail::put_u32(data, static_cast<std::uint32_t>(side));
  detail::put_u32(data, static_cast<std::uint32_t>(values.cols()));
  detail::put_u32(data, 0);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < values.cols(); ++ch) {
      detail::put_f32(data, static_cast<float>(values(i, ch)));
    }
  }
  detail::write_file(path, data);
}

template <typename Scalar>
void write_vxg(const std::string& path, const VoxelGrid<Scalar>& grid) {
  write_vxg_values(path, grid.side, grid.values);
}

template <typename Scalar>
void write_vxg(const std::string& path, const FeatureVolume<Scalar>& vol) {
  write_vxg_values(path, vol.side, vol.values);
}

template <typename Scalar>
void read_vxg_values(const std::string& path, int& side,
                     ChannelArray<Scalar>& values) {
  const std::string data = detail::read_file(path);
  if (data.size() < 16 || std::memcmp(data.data(), kVxgMagic, 4) != 0) {
    throw std::runtime_error("not a voxel-grid file: " + path);
  }
  side = static_cast<int>(detail::get_u32(data, 4));
  const auto channels = static_cast<int>(detail::get_u32(data, 8));
  if (side < 2 || channels < 1) {
    throw std::runtime_error("bad voxel-grid dims: " + path);
  }
  const size_t nodes = static_cast<size_t>(side) * side * side;
  if (data.size() != 16 + nodes * channels * 4) {
    throw std::runtime_error("truncated voxel-grid payload: " + path);
  }
  values.resize(static_cast<Eigen::Index>(nodes), channels);
  size_t at = 16;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < values.cols(); ++ch) {
      values(i, ch) = Scalar(detail::get_f32(data, at));
      at += 4;
    }
  }
}

template <typename Scalar>
VoxelGrid<Scalar> read_vxg(const std::string& path,
                           Scalar extent = Scalar(0.6)) {
  int side = 0;
  ChannelArray<Scalar> values;
  read_vxg_values(path, side, values);
  if (values.cols() != 4) {
    throw std::runtime_error("voxel grid must have 4 channels: " + path);
  }
  VoxelGrid<Scalar> grid(side, extent);
  grid.values = std::move(values);
  return grid;
}

template <typename Scalar>
FeatureVolume<Scalar> read_vxg_features(const std::string& path,
                                        Scalar extent = Scalar(0.6)) {
  int side = 0;
  ChannelArray<Scalar> values;
  read_vxg_values(path, side, values);
  FeatureVolume<Scalar> vol(side, static_cast<int>(values.cols()), extent);
  vol.values = std::move(values);
  return vol;
}

// ---- camera manifest -------------------------------------------------------
// Line-delimited text, one camera per line: 9 rotation entries (row-major),
// 3 translation entries, then focal x, focal y, principal x, principal y —
// 16 numbers separated by single spaces. '#' lines are comments.

template <typename Scalar>
std::string camera_line(const CameraPose<Scalar>& pose) {
  std::string line;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      line += detail::format_double(static_cast<double>(pose.rotation(r, c)));
      line += ' ';
    }
  }
  for (int i = 0; i < 3; ++i) {
    line += detail::format_double(static_cast<double>(pose.translation[i]));
    line += ' ';
  }
  line += detail::format_double(static_cast<double>(pose.focal_x()));
  line += ' ';
  line += detail::format_double(static_cast<double>(pose.focal_y()));
  line += ' ';
  line += detail::format_double(static_cast<double>(pose.principal_x()));
  line += ' ';
  line += detail::format_double(static_cast<double>(pose.principal_y()));
  return line;
}

template <typename Scalar>
void write_camera_manifest(const std::string& path,
                           const std::vector<CameraPose<Scalar>>& poses) {
  std::string data =
      "# rotation r00..r22 tx ty tz focal_x focal_y principal_x principal_y\n";
  for (const auto& pose : poses) {
    data += camera_line(pose);
    data += '\n';
  }
  detail::write_file(path, data);
}

template <typename Scalar>
std::vector<CameraPose<Scalar>> read_camera_manifest(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<CameraPose<Scalar>> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v[16];
    for (int i = 0; i < 16; ++i) {
      if (!(ls >> v[i])) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected 16 numbers per camera");
      }
    }
    double trailing;
    if (ls >> trailing) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": trailing values after camera record");
    }
    CameraPose<Scalar> pose;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        pose.rotation(r, c) = Scalar(v[3 * r + c]);
      }
    }
    pose.translation = Vec3<Scalar>(Scalar(v[9]), Scalar(v[10]),
                                    Scalar(v[11]));
    pose.intrinsics = CameraPose<Scalar>::make_intrinsics(
        Scalar(v[12]), Scalar(v[13]), Scalar(v[14]), Scalar(v[15]));
    try {
      validate_pose(pose);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               err.what());
    }
    poses.push_back(pose);
  }
  return poses;
}

// ---- point cloud ------------------------------------------------------------
// Line-delimited "x y z"; '#' lines are comments.

template <typename Scalar>
void write_point_cloud(const std::string& path,
                       const std::vector<Vec3<Scalar>>& points) {
  std::string data;
  for (const auto& p : points) {
    data += detail::format_double(static_cast<double>(p.x()));
    data += ' ';
    data += detail::format_double(static_cast<double>(p.y()));
    data += ' ';
    data += detail::format_double(static_cast<double>(p.z()));
    data += '\n';
  }
  detail::write_file(path, data);
}

template <typename Scalar>
std::vector<Vec3<Scalar>> read_point_cloud(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<Vec3<Scalar>> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'x y z'");
    }
    points.emplace_back(Scalar(x), Scalar(y), Scalar(z));
  }
  return points;
}

// Normalization outcome as line-delimited "key value" text.
template <typename Scalar>
std::string format_report(const NormalizationReport<Scalar>& report) {
  std::string out;
  out += "accepted " + std::string(report.accepted ? "1" : "0") + "\n";
  out += "reason " + (report.reason.empty() ? std::string("none")
                                            : report.reason) + "\n";
  out += "shift";
  for (int i = 0; i < 3; ++i) {
    out += ' ';
    out += detail::format_double(static_cast<double>(report.shift[i]));
  }
  out += "\nrotation";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      out += ' ';
      out += detail::format_double(static_cast<double>(report.rotation(r, c)));
    }
  }
  out += "\nscale " +
         detail::format_double(static_cast<double>(report.scale)) + "\n";
  return out;
}

}  // namespace voxset
