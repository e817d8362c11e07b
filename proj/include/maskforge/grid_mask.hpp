// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "maskforge/geometry.hpp"
#include "maskforge/mask_scores.hpp"

namespace maskforge {

// Per-axis position ranks of the K patch centers; each column is a
// permutation of {0..K-1}.
struct AxisRanks {
  std::vector<std::array<int, 3>> pos;

  int patch_count() const { return static_cast<int>(pos.size()); }
};

using Granularity = std::array<int, 3>;

// Binary grid coordinates per axis plus the derived 3-bit grid type
// (one of the eight cube-vertex classes).
struct GridAssignment {
  std::vector<std::array<int, 3>> grid_coords;
  std::vector<int> grid_type;
  Granularity granularity{4, 4, 4};

  int patch_count() const { return static_cast<int>(grid_type.size()); }
};

enum class CellProbScheme { Checkerboard, UniformRandom, Explicit };

// One masking probability per grid type.
struct GridCellProbs {
  std::array<double, 8> p{};
  CellProbScheme scheme = CellProbScheme::Checkerboard;
};

// Ascending rank per axis; equal coordinates tie-break toward the smaller
// patch index. Ranks are invariant under any per-axis strictly increasing
// coordinate transform.
AxisRanks rank_coordinates(const std::vector<Vec3>& centers);

// grid_d[i] = floor(pos_d[i] / G_d) mod 2; grid_type = gx + 2*gy + 4*gz.
GridAssignment grid_coordinates(const AxisRanks& ranks, const Granularity& granularity);

// score[i] = p[grid_type[i]]; the spatial stream output.
MaskScores grid_scores(const GridAssignment& assignment, const GridCellProbs& cell_probs);

// Checkerboard: 0.9 for even-popcount grid types, 0.1 for odd, so adjacent
// cells alternate high/low. UniformRandom: 8 seeded i.i.d. uniforms.
// Explicit: caller-supplied table (required iff scheme is Explicit).
GridCellProbs make_cell_probs(CellProbScheme scheme, std::uint64_t seed,
                              const std::optional<std::array<double, 8>>& explicit_probs = {});

}  // namespace maskforge
