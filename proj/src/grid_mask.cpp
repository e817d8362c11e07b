// SPDX-License-Identifier: Apache-2.0
#include "maskforge/grid_mask.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge {

AxisRanks rank_coordinates(const std::vector<Vec3>& centers) {
  const int k = static_cast<int>(centers.size());
  if (k < 1) {
    throw ArgumentError("rank_coordinates: need at least one center");
  }
  AxisRanks ranks;
  ranks.pos.assign(k, {0, 0, 0});

  std::vector<int> order(k);
  for (int d = 0; d < 3; ++d) {
    std::iota(order.begin(), order.end(), 0);
    // stable sort keeps equal coordinates in patch-index order
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return centers[a][d] < centers[b][d];
    });
    for (int r = 0; r < k; ++r) ranks.pos[order[r]][d] = r;
  }
  return ranks;
}

GridAssignment grid_coordinates(const AxisRanks& ranks, const Granularity& granularity) {
  for (int d = 0; d < 3; ++d) {
    if (granularity[d] < 1) {
      throw ArgumentError("grid_coordinates: granularity must be >= 1, got " +
                          std::to_string(granularity[d]));
    }
  }
  GridAssignment out;
  out.granularity = granularity;
  const int k = ranks.patch_count();
  out.grid_coords.assign(k, {0, 0, 0});
  out.grid_type.assign(k, 0);
  for (int i = 0; i < k; ++i) {
    for (int d = 0; d < 3; ++d) {
      out.grid_coords[i][d] = (ranks.pos[i][d] / granularity[d]) % 2;
    }
    out.grid_type[i] = out.grid_coords[i][0] + 2 * out.grid_coords[i][1] +
                       4 * out.grid_coords[i][2];
  }
  return out;
}

MaskScores grid_scores(const GridAssignment& assignment, const GridCellProbs& cell_probs) {
  MaskScores scores;
  scores.stream = Stream::Spatial;
  scores.scores.reserve(assignment.grid_type.size());
  for (int t : assignment.grid_type) scores.scores.push_back(cell_probs.p[t]);
  return scores;
}

GridCellProbs make_cell_probs(CellProbScheme scheme, std::uint64_t seed,
                              const std::optional<std::array<double, 8>>& explicit_probs) {
  GridCellProbs out;
  out.scheme = scheme;
  switch (scheme) {
    case CellProbScheme::Checkerboard:
      for (int t = 0; t < 8; ++t) {
        out.p[t] = std::popcount(static_cast<unsigned>(t)) % 2 == 0 ? 0.9 : 0.1;
      }
      break;
    case CellProbScheme::UniformRandom: {
      std::mt19937_64 rng(seed);
      for (double& v : out.p) v = uniform_unit(rng);
      break;
    }
    case CellProbScheme::Explicit: {
      if (!explicit_probs) {
        throw ArgumentError("make_cell_probs: explicit scheme needs 8 probabilities");
      }
      for (double v : *explicit_probs) {
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ArgumentError("make_cell_probs: probability " + std::to_string(v) +
                              " outside [0,1]");
        }
      }
      out.p = *explicit_probs;
      break;
    }
  }
  return out;
}

}  // namespace maskforge
