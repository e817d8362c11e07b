// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "maskforge/geometry.hpp"
#include "maskforge/mask_scores.hpp"

namespace maskforge {

// K x K row-stochastic affinity matrix; row i is patch i's attention
// distribution over all patches.
struct AttentionMap {
  std::vector<double> a;  // row-major K x K
  int k = 0;
  int iteration = 0;

  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * k + j]; }
  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * k + j]; }
};

// Rows sum to 1 within tol, entries finite and >= 0. Throws ValidationError.
void validate_row_stochastic(const AttentionMap& attn, double tol = 1e-6);

// Attention map after adaptive thresholding: entries are either 0 or kept
// verbatim when strictly above tau.
struct AffinityGraph {
  std::vector<double> w;  // row-major K x K
  int k = 0;
  double tau = 0.0;

  double at(int i, int j) const { return w[static_cast<std::size_t>(i) * k + j]; }
};

// Diagonal-covariance Gaussian mixture fit over the K attention rows.
struct Clustering {
  std::vector<int> assignment;              // K labels in [0, C)
  std::vector<double> responsibilities;     // row-major K x C
  std::vector<double> weights;              // C mixture priors
  std::vector<double> means;                // row-major C x D
  std::vector<double> variances;            // row-major C x D, >= variance floor
  std::vector<double> log_likelihood_trace; // one entry per EM iteration
  int components = 0;
  int dim = 0;

  int point_count() const { return static_cast<int>(assignment.size()); }
};

struct EmOptions {
  int max_iters = 50;
  double tol = 1e-6;          // stop when log-likelihood gain drops below
  double variance_floor = 1e-6;
};

// Linearly shrinking component schedule: round-half-up of
// C_max - (t/T)(C_max - C_min), clamped to [C_min, min(C_max, K)].
int component_count(int t, int T, int c_max, int c_min, int k);

// tau = empirical quantile q(t) = q_start + (t/T)(q_end - q_start) of the
// off-diagonal attention entries (linear interpolation between order
// statistics).
double threshold_schedule(const AttentionMap& attn, int t, int T,
                          double q_start, double q_end);

AffinityGraph affinity_graph(const AttentionMap& attn, double tau);

// EM over K feature rows (row-major K x dim). Log-space E-step, M-step with
// variance floor, distance-weighted (k-means++ style) seeded initialization
// of the means from feature rows. Hard assignment by argmax responsibility,
// ties toward the smaller component.
Clustering em_cluster(const std::vector<double>& features, int k, int dim,
                      int components, std::uint64_t seed,
                      const EmOptions& opts = {});

// One uniform delta in [0,1) per component, drawn in component index order;
// score[i] = delta[assignment[i]]. Patches sharing a component share a score.
MaskScores semantic_scores(const Clustering& clustering, std::uint64_t seed);

// Desk-scale attention stand-in: a[i][j] proportional to
// exp(-||c_i - c_j||^2 / bandwidth^2), optionally perturbed by seeded
// multiplicative noise of relative amplitude noise_amp, then row-normalized.
// Depends on pairwise distances only, so it is rotation-invariant.
AttentionMap synth_attention(const PatchSet& patches, double bandwidth,
                             std::uint64_t seed, double noise_amp = 0.0);

}  // namespace maskforge
