// SPDX-License-Identifier: Apache-2.0
#include "maskforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <cstdlib>

#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge {

namespace {

double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

void require_finite(const Vec3& p, const std::string& where) {
  for (double v : p) {
    if (!std::isfinite(v)) {
      throw ValidationError("non-finite coordinate at " + where);
    }
  }
}

PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  PointCloud cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip trailing CR from files written on other platforms
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    // strtod instead of stream extraction so "nan"/"inf" parse as numbers
    // and fall through to the finiteness check below
    Vec3 p;
    const char* cursor = line.c_str();
    for (int d = 0; d < 3; ++d) {
      char* end = nullptr;
      p[d] = std::strtod(cursor, &end);
      if (end == cursor) {
        throw FormatError(path + ": malformed line " + std::to_string(line_no) +
                          ": expected three reals");
      }
      cursor = end;
    }
    while (*cursor == ' ' || *cursor == '\t') ++cursor;
    if (*cursor != '\0') {
      throw FormatError(path + ": malformed line " + std::to_string(line_no) +
                        ": trailing data '" + std::string(cursor) + "'");
    }
    require_finite(p, path + ":" + std::to_string(line_no));
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) {
    throw ValidationError(path + ": cloud is empty (N >= 1 required)");
  }
  return cloud;
}

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

float read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = read_u32_le(p);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

PointCloud load_pcf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PCF1", 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected PCF1)");
  }
  if (bytes.size() < 8) {
    throw FormatError(path + ": truncated header at byte offset " +
                      std::to_string(bytes.size()) + " (count field missing)");
  }
  const std::uint32_t n = read_u32_le(bytes.data() + 4);
  if (n == 0) {
    throw ValidationError(path + ": point count 0 (N >= 1 required)");
  }
  const std::size_t expected = 8 + std::size_t{n} * 12;
  if (bytes.size() < expected) {
    throw FormatError(path + ": truncated payload at byte offset " +
                      std::to_string(bytes.size()) + " (expected " +
                      std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) {
    throw FormatError(path + ": trailing data at byte offset " +
                      std::to_string(expected));
  }
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + 8 + std::size_t{i} * 12;
    Vec3 p{static_cast<double>(read_f32_le(rec)),
           static_cast<double>(read_f32_le(rec + 4)),
           static_cast<double>(read_f32_le(rec + 8))};
    require_finite(p, path + " record " + std::to_string(i));
    cloud.points.push_back(p);
  }
  return cloud;
}

Mat3 identity_matrix() {
  return Mat3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

Mat3 quaternion_to_matrix(double w, double x, double y, double z) {
  return Mat3{{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
               {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
               {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

}  // namespace

PointCloud load_cloud(const std::string& path, CloudFormat format) {
  return format == CloudFormat::XyzAscii ? load_xyz(path) : load_pcf(path);
}

void validate_rotation(const Rotation& rot) {
  const Mat3& m = rot.matrix;
  // R * R^T == I within 1e-9 elementwise
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += m[i][k] * m[j][k];
      const double want = i == j ? 1.0 : 0.0;
      if (std::abs(dot - want) > 1e-9) {
        throw ValidationError("rotation matrix is not orthonormal");
      }
    }
  }
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det - 1.0) > 1e-9) {
    throw ValidationError("rotation matrix determinant is not +1");
  }
}

Rotation sample_rotation(RotationMode mode, std::uint64_t seed) {
  Rotation rot;
  rot.mode = mode;
  switch (mode) {
    case RotationMode::Aligned:
      rot.matrix = identity_matrix();
      break;
    case RotationMode::ZAxis: {
      std::mt19937_64 rng(seed);
      const double theta = uniform_in(rng, 0.0, 2.0 * std::numbers::pi);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      rot.matrix = Mat3{{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
      break;
    }
    case RotationMode::Full: {
      // Shoemake's subgroup algorithm: uniform unit quaternion -> Haar
      // measure on SO(3).
      std::mt19937_64 rng(seed);
      const double u1 = uniform_unit(rng);
      const double u2 = uniform_unit(rng);
      const double u3 = uniform_unit(rng);
      const double two_pi = 2.0 * std::numbers::pi;
      const double a = std::sqrt(1.0 - u1);
      const double b = std::sqrt(u1);
      const double x = a * std::sin(two_pi * u2);
      const double y = a * std::cos(two_pi * u2);
      const double z = b * std::sin(two_pi * u3);
      const double w = b * std::cos(two_pi * u3);
      rot.matrix = quaternion_to_matrix(w, x, y, z);
      break;
    }
  }
  return rot;
}

PointCloud apply_rotation(const PointCloud& cloud, const Rotation& rot) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  const Mat3& m = rot.matrix;
  for (const Vec3& p : cloud.points) {
    out.points.push_back(Vec3{m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
                              m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
                              m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2]});
  }
  return out;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int K,
                                       std::uint64_t /*seed*/) {
  const int n = cloud.size();
  if (K < 1 || K > n) {
    throw ArgumentError("farthest_point_sample: K must be in [1, N], got K=" +
                        std::to_string(K) + " N=" + std::to_string(n));
  }

  Vec3 centroid{0.0, 0.0, 0.0};
  for (const Vec3& p : cloud.points) {
    centroid[0] += p[0];
    centroid[1] += p[1];
    centroid[2] += p[2];
  }
  centroid[0] /= n;
  centroid[1] /= n;
  centroid[2] /= n;

  int first = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = sq_dist(cloud.points[i], centroid);
    if (d > best) {  // strict: ties keep the smaller index
      best = d;
      first = i;
    }
  }

  std::vector<int> centers{first};
  centers.reserve(K);
  std::vector<double> min_dist(n);
  for (int i = 0; i < n; ++i) min_dist[i] = sq_dist(cloud.points[i], cloud.points[first]);

  while (static_cast<int>(centers.size()) < K) {
    int next = -1;
    double far = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_dist[i] > far) {
        far = min_dist[i];
        next = i;
      }
    }
    centers.push_back(next);
    for (int i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], sq_dist(cloud.points[i], cloud.points[next]));
    }
  }
  return centers;
}

PatchSet knn_patchify(const PointCloud& cloud, const std::vector<int>& centers,
                      int k) {
  const int n = cloud.size();
  if (k < 1 || k > n) {
    throw ArgumentError("knn_patchify: k must be in [1, N], got k=" +
                        std::to_string(k) + " N=" + std::to_string(n));
  }
  for (int c : centers) {
    if (c < 0 || c >= n) {
      throw ArgumentError("knn_patchify: center index " + std::to_string(c) +
                          " out of range");
    }
  }

  PatchSet patches;
  patches.centers = centers;
  patches.source_size = n;
  patches.neighbors.reserve(centers.size());
  patches.center_coords.reserve(centers.size());

  std::vector<std::pair<double, int>> dist(n);
  for (int c : centers) {
    const Vec3& cp = cloud.points[c];
    for (int i = 0; i < n; ++i) dist[i] = {sq_dist(cloud.points[i], cp), i};
    // (distance, index) order implements the smaller-index tie-break. The
    // center gets a sentinel key so it keeps its own slot even when another
    // point with a smaller index shares its coordinates.
    dist[c].first = -1.0;
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<int> nb(k);
    for (int j = 0; j < k; ++j) nb[j] = dist[j].second;
    patches.neighbors.push_back(std::move(nb));
    patches.center_coords.push_back(cp);
  }
  return patches;
}

}  // namespace maskforge
