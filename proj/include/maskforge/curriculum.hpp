// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "maskforge/geometry.hpp"
#include "maskforge/grid_mask.hpp"
#include "maskforge/mask_scores.hpp"
#include "maskforge/semantic_mask.hpp"

namespace maskforge {

// Named seeds for the independent random streams of one pipeline run.
struct SeedBundle {
  std::uint64_t cell_probs = 0;
  std::uint64_t delta = 0;
  std::uint64_t em = 0;
  std::uint64_t selection = 0;

  // Fan a single master seed out into the four streams.
  static SeedBundle from_master(std::uint64_t master);
};

enum class EmFeatureSource { AttentionRows, AffinityRows };

struct CurriculumConfig {
  int T = 100;
  double gamma = 2.0;
  double ratio = 0.75;
  int c_max = 40;
  int c_min = 10;
  double q_start = 0.5;
  double q_end = 0.9;
  Granularity granularity{4, 4, 4};
  SeedBundle seeds;
  CellProbScheme cell_scheme = CellProbScheme::Checkerboard;
  std::optional<std::array<double, 8>> explicit_cell_probs;
  EmFeatureSource em_features = EmFeatureSource::AttentionRows;
  EmOptions em;
};

void validate_config(const CurriculumConfig& cfg);

// Stable 64-bit digest of every non-seed configuration field; recorded in
// selection provenance so artifacts name the settings that produced them.
std::uint64_t config_hash(const CurriculumConfig& cfg);

// Final boolean mask over K patches plus the provenance needed to reproduce
// it byte-for-byte.
struct MaskSelection {
  std::vector<bool> masked;
  int masked_count = 0;
  double ratio = 0.0;
  double alpha = 0.0;
  int t = 0;
  int T = 0;
  std::vector<double> scores;  // the mixed scores the cut was taken on
  SeedBundle seeds;
  std::uint64_t config_digest = 0;
};

// Curriculum coefficient (t/T)^gamma: 0 at t=0, 1 at t=T.
double alpha(int t, int T, double gamma);

// Elementwise convex combination (1-alpha)*spatial + alpha*semantic.
MaskScores mix_scores(const MaskScores& spatial, const MaskScores& semantic,
                      double alpha);

// Masks the round-half-up(ratio*K) patches with the highest scores. Exact
// score ties are ordered by a seeded per-patch jitter draw, then by the
// smaller patch index; scores themselves are never perturbed.
MaskSelection select_mask(const MaskScores& mixed, double ratio, std::uint64_t seed);

// Everything run_dual_stream computed on the way to the selection; the
// harness uses these for traces and rotation studies.
struct PipelineResult {
  MaskSelection selection;
  MaskScores spatial;
  std::optional<MaskScores> semantic;    // absent when alpha == 0
  std::optional<Clustering> clustering;  // absent when alpha == 0
  double alpha = 0.0;
  int components = 0;
  double tau = 0.0;
};

// Composes the spatial stream (ranks -> grid -> scores), the semantic stream
// (threshold -> affinity -> EM -> component scores), the curriculum weight,
// the mix, and the final cut. At alpha == 0 the semantic stream is skipped;
// the selection is identical to the pure-grid pipeline by the mixing
// endpoint contract. The EM and delta streams draw fresh seeds per t.
PipelineResult run_dual_stream_detailed(const PatchSet& patches,
                                        const AttentionMap& attn, int t,
                                        const CurriculumConfig& cfg);

MaskSelection run_dual_stream(const PatchSet& patches, const AttentionMap& attn,
                              int t, const CurriculumConfig& cfg);

}  // namespace maskforge
