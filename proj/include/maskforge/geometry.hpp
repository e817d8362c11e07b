// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace maskforge {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// Raw N x 3 coordinate set. Point order is significant: index identity is
// stable across every downstream operation.
struct PointCloud {
  std::vector<Vec3> points;

  int size() const { return static_cast<int>(points.size()); }
};

enum class RotationMode { Aligned, ZAxis, Full };

struct Rotation {
  Mat3 matrix;
  RotationMode mode = RotationMode::Aligned;
};

// Local regions: K distinct center indices into the source cloud plus the
// k nearest neighbors of each center (the center is always a member of its
// own neighbor list).
struct PatchSet {
  std::vector<int> centers;
  std::vector<std::vector<int>> neighbors;
  std::vector<Vec3> center_coords;
  int source_size = 0;

  int patch_count() const { return static_cast<int>(centers.size()); }
};

enum class CloudFormat { XyzAscii, PcfBinary };

// XYZ-ASCII: one point per line, three whitespace-separated reals, '#' starts
// a comment line. PCF: "PCF1" magic, u32-LE count, then N x 3 f32-LE coords.
PointCloud load_cloud(const std::string& path, CloudFormat format);

// Orthonormality and determinant checks at 1e-9; throws ValidationError.
void validate_rotation(const Rotation& rot);

// Aligned -> identity. ZAxis -> rotation about z by an angle uniform in
// [0, 2pi). Full -> Haar-uniform over SO(3) via unit quaternions.
// Deterministic given (mode, seed).
Rotation sample_rotation(RotationMode mode, std::uint64_t seed);

PointCloud apply_rotation(const PointCloud& cloud, const Rotation& rot);

// Greedy max-min selection. The first center is the point farthest from the
// cloud centroid; each subsequent center maximizes the distance to the chosen
// set. All ties break toward the smaller point index. The seed is reserved
// for a randomized-start mode and ignored by the default deterministic mode.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int K,
                                       std::uint64_t seed = 0);

// For each center: the k nearest points by Euclidean distance, center
// included, ties toward the smaller point index.
PatchSet knn_patchify(const PointCloud& cloud, const std::vector<int>& centers,
                      int k);

}  // namespace maskforge
