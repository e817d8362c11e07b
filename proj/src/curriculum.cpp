// SPDX-License-Identifier: Apache-2.0
#include "maskforge/curriculum.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>

#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge {

namespace {

// Stream tags for seed derivation; values are arbitrary but frozen, changing
// them changes every derived artifact.
enum : std::uint64_t {
  kStreamCellProbs = 1,
  kStreamDelta = 2,
  kStreamEm = 3,
  kStreamSelection = 4,
};

void append_double(std::string* s, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  s->append(buf, res.ptr);
  s->push_back(';');
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

SeedBundle SeedBundle::from_master(std::uint64_t master) {
  SeedBundle b;
  b.cell_probs = derive_seed(master, kStreamCellProbs);
  b.delta = derive_seed(master, kStreamDelta);
  b.em = derive_seed(master, kStreamEm);
  b.selection = derive_seed(master, kStreamSelection);
  return b;
}

void validate_config(const CurriculumConfig& cfg) {
  if (cfg.T < 1) throw ArgumentError("config: T must be >= 1");
  if (!(cfg.gamma > 0.0)) throw ArgumentError("config: gamma must be > 0");
  if (!(cfg.ratio > 0.0 && cfg.ratio < 1.0)) {
    throw ArgumentError("config: ratio must be in (0, 1)");
  }
  if (cfg.c_min < 1 || cfg.c_min > cfg.c_max) {
    throw ArgumentError("config: need 1 <= C_min <= C_max");
  }
  if (!(cfg.q_start >= 0.0 && cfg.q_start <= cfg.q_end && cfg.q_end <= 1.0)) {
    throw ArgumentError("config: need 0 <= q_start <= q_end <= 1");
  }
  for (int g : cfg.granularity) {
    if (g < 1) throw ArgumentError("config: granularity must be >= 1");
  }
  if (cfg.cell_scheme == CellProbScheme::Explicit && !cfg.explicit_cell_probs) {
    throw ArgumentError("config: explicit cell scheme needs 8 probabilities");
  }
}

std::uint64_t config_hash(const CurriculumConfig& cfg) {
  std::string canon;
  canon.reserve(160);
  canon += "T=" + std::to_string(cfg.T) + ";";
  canon += "gamma=";
  append_double(&canon, cfg.gamma);
  canon += "ratio=";
  append_double(&canon, cfg.ratio);
  canon += "cmax=" + std::to_string(cfg.c_max) + ";";
  canon += "cmin=" + std::to_string(cfg.c_min) + ";";
  canon += "qstart=";
  append_double(&canon, cfg.q_start);
  canon += "qend=";
  append_double(&canon, cfg.q_end);
  canon += "grid=" + std::to_string(cfg.granularity[0]) + "," +
           std::to_string(cfg.granularity[1]) + "," +
           std::to_string(cfg.granularity[2]) + ";";
  canon += "scheme=" + std::to_string(static_cast<int>(cfg.cell_scheme)) + ";";
  if (cfg.explicit_cell_probs) {
    canon += "cells=";
    for (double p : *cfg.explicit_cell_probs) append_double(&canon, p);
  }
  canon += "emfeat=" + std::to_string(static_cast<int>(cfg.em_features)) + ";";
  canon += "emiters=" + std::to_string(cfg.em.max_iters) + ";";
  canon += "emtol=";
  append_double(&canon, cfg.em.tol);
  canon += "emfloor=";
  append_double(&canon, cfg.em.variance_floor);
  return fnv1a(canon);
}

double alpha(int t, int T, double gamma) {
  if (T < 1 || t < 0 || t > T) {
    throw ArgumentError("alpha: need 0 <= t <= T and T >= 1");
  }
  if (!(gamma > 0.0)) {
    throw ArgumentError("alpha: gamma must be > 0");
  }
  if (t == 0) return 0.0;
  if (t == T) return 1.0;
  return std::pow(static_cast<double>(t) / T, gamma);
}

MaskScores mix_scores(const MaskScores& spatial, const MaskScores& semantic,
                      double alpha) {
  if (spatial.size() != semantic.size()) {
    throw ArgumentError("mix_scores: stream lengths differ (" +
                        std::to_string(spatial.size()) + " vs " +
                        std::to_string(semantic.size()) + ")");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ArgumentError("mix_scores: alpha must be in [0, 1]");
  }
  MaskScores mixed;
  mixed.stream = Stream::Mixed;
  mixed.scores.resize(spatial.scores.size());
  for (std::size_t i = 0; i < mixed.scores.size(); ++i) {
    mixed.scores[i] = (1.0 - alpha) * spatial.scores[i] + alpha * semantic.scores[i];
  }
  return mixed;
}

MaskSelection select_mask(const MaskScores& mixed, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ArgumentError("select_mask: ratio must be in (0, 1)");
  }
  const int k = mixed.size();
  const int count = round_half_up(ratio * k);
  if (count <= 0 || count >= k) {
    throw ArgumentError("select_mask: degenerate selection, round(ratio*K)=" +
                        std::to_string(count) + " of K=" + std::to_string(k));
  }

  // Index-keyed jitter: equal draws for equal patches regardless of
  // traversal order. It decides order only between exactly equal scores, so
  // shifting or positively scaling all scores cannot change the cut.
  std::vector<std::uint64_t> jitter(k);
  for (int i = 0; i < k; ++i) jitter[i] = derive_seed(seed, kStreamSelection, i);

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (mixed.scores[a] != mixed.scores[b]) return mixed.scores[a] > mixed.scores[b];
    if (jitter[a] != jitter[b]) return jitter[a] < jitter[b];
    return a < b;
  });

  MaskSelection sel;
  sel.masked.assign(k, false);
  sel.masked_count = count;
  sel.ratio = ratio;
  sel.scores = mixed.scores;
  sel.seeds.selection = seed;
  for (int i = 0; i < count; ++i) sel.masked[order[i]] = true;
  return sel;
}

PipelineResult run_dual_stream_detailed(const PatchSet& patches,
                                        const AttentionMap& attn, int t,
                                        const CurriculumConfig& cfg) {
  validate_config(cfg);
  const int k = patches.patch_count();
  if (attn.k != k) {
    throw ArgumentError("run_dual_stream: attention is " + std::to_string(attn.k) +
                        "x" + std::to_string(attn.k) + " but K=" + std::to_string(k));
  }

  PipelineResult result;
  result.alpha = alpha(t, cfg.T, cfg.gamma);
  result.components = component_count(t, cfg.T, cfg.c_max, cfg.c_min, k);
  result.tau = threshold_schedule(attn, t, cfg.T, cfg.q_start, cfg.q_end);

  const GridCellProbs cell_probs =
      make_cell_probs(cfg.cell_scheme, cfg.seeds.cell_probs, cfg.explicit_cell_probs);
  const AxisRanks ranks = rank_coordinates(patches.center_coords);
  result.spatial = grid_scores(grid_coordinates(ranks, cfg.granularity), cell_probs);

  MaskScores mixed;
  if (result.alpha == 0.0) {
    // mixing endpoint: the semantic stream cannot influence the result
    mixed = result.spatial;
    mixed.stream = Stream::Mixed;
  } else {
    const AffinityGraph graph = affinity_graph(attn, result.tau);
    const std::vector<double>& features =
        cfg.em_features == EmFeatureSource::AttentionRows ? attn.a : graph.w;
    result.clustering =
        em_cluster(features, k, k, result.components,
                   derive_seed(cfg.seeds.em, kStreamEm, static_cast<std::uint64_t>(t)),
                   cfg.em);
    result.semantic = semantic_scores(
        *result.clustering,
        derive_seed(cfg.seeds.delta, kStreamDelta, static_cast<std::uint64_t>(t)));
    mixed = mix_scores(result.spatial, *result.semantic, result.alpha);
  }

  result.selection = select_mask(mixed, cfg.ratio, cfg.seeds.selection);
  result.selection.alpha = result.alpha;
  result.selection.t = t;
  result.selection.T = cfg.T;
  result.selection.seeds = cfg.seeds;
  result.selection.config_digest = config_hash(cfg);
  return result;
}

MaskSelection run_dual_stream(const PatchSet& patches, const AttentionMap& attn,
                              int t, const CurriculumConfig& cfg) {
  return run_dual_stream_detailed(patches, attn, t, cfg).selection;
}

}  // namespace maskforge
