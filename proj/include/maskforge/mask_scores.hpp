// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace maskforge {

enum class Stream { Spatial, Semantic, Mixed };

// Per-patch masking scores in [0,1] for one stream or the mixed result.
struct MaskScores {
  std::vector<double> scores;
  Stream stream = Stream::Spatial;

  int size() const { return static_cast<int>(scores.size()); }
};

}  // namespace maskforge
