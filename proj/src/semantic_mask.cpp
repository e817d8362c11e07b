// SPDX-License-Identifier: Apache-2.0
#include "maskforge/semantic_mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)

double sq_dist_rows(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

struct GmmParams {
  std::vector<double> log_weight;  // C
  std::vector<double> mean;        // C x D
  std::vector<double> var;         // C x D
  int c = 0;
  int dim = 0;
};

// Log-density bookkeeping for one E-step sweep. Returns the total data
// log-likelihood; fills resp (K x C) with posterior responsibilities.
double e_step(const std::vector<double>& features, int k, const GmmParams& p,
              std::vector<double>* resp) {
  const int c = p.c;
  const int dim = p.dim;
  // Per-component constant: log pi_c - 0.5 * sum_d log(2 pi var_cd)
  std::vector<double> log_const(c);
  std::vector<double> inv_var(static_cast<std::size_t>(c) * dim);
  for (int j = 0; j < c; ++j) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double v = p.var[static_cast<std::size_t>(j) * dim + d];
      s += std::log(v);
      inv_var[static_cast<std::size_t>(j) * dim + d] = 1.0 / v;
    }
    log_const[j] = p.log_weight[j] - 0.5 * (dim * kLogTwoPi + s);
  }

  double total = 0.0;
  std::vector<double> lp(c);
  for (int i = 0; i < k; ++i) {
    const double* x = features.data() + static_cast<std::size_t>(i) * dim;
    double max_lp = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      const double* mu = p.mean.data() + static_cast<std::size_t>(j) * dim;
      const double* iv = inv_var.data() + static_cast<std::size_t>(j) * dim;
      double quad = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = x[d] - mu[d];
        quad += diff * diff * iv[d];
      }
      lp[j] = log_const[j] - 0.5 * quad;
      max_lp = std::max(max_lp, lp[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(lp[j] - max_lp);
    const double log_norm = max_lp + std::log(sum);
    total += log_norm;
    if (resp) {
      double* r = resp->data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) r[j] = std::exp(lp[j] - log_norm);
    }
  }
  return total;
}

// Weighted ML update with the variance floor applied as a constrained
// maximizer, which keeps the EM log-likelihood monotone.
void m_step(const std::vector<double>& features, int k,
            const std::vector<double>& resp, GmmParams* p, double floor) {
  const int c = p->c;
  const int dim = p->dim;
  std::vector<double> nk(c, 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < c; ++j) nk[j] += resp[static_cast<std::size_t>(i) * c + j];
  }
  for (int j = 0; j < c; ++j) {
    const double n = nk[j];
    double* mu = p->mean.data() + static_cast<std::size_t>(j) * dim;
    double* var = p->var.data() + static_cast<std::size_t>(j) * dim;
    if (n < 1e-12) {
      // numerically dead component: keep previous parameters, the caller
      // decides whether to re-seed it
      p->log_weight[j] = std::log(std::numeric_limits<double>::min());
      continue;
    }
    p->log_weight[j] = std::log(n / k);
    std::fill(mu, mu + dim, 0.0);
    for (int i = 0; i < k; ++i) {
      const double r = resp[static_cast<std::size_t>(i) * c + j];
      const double* x = features.data() + static_cast<std::size_t>(i) * dim;
      for (int d = 0; d < dim; ++d) mu[d] += r * x[d];
    }
    for (int d = 0; d < dim; ++d) mu[d] /= n;
    std::fill(var, var + dim, 0.0);
    for (int i = 0; i < k; ++i) {
      const double r = resp[static_cast<std::size_t>(i) * c + j];
      const double* x = features.data() + static_cast<std::size_t>(i) * dim;
      for (int d = 0; d < dim; ++d) {
        const double diff = x[d] - mu[d];
        var[d] += r * diff * diff;
      }
    }
    for (int d = 0; d < dim; ++d) var[d] = std::max(var[d] / n, floor);
  }
}

std::vector<double> global_variance(const std::vector<double>& features, int k,
                                    int dim, double floor) {
  std::vector<double> mean(dim, 0.0);
  std::vector<double> var(dim, 0.0);
  for (int i = 0; i < k; ++i) {
    const double* x = features.data() + static_cast<std::size_t>(i) * dim;
    for (int d = 0; d < dim; ++d) mean[d] += x[d];
  }
  for (int d = 0; d < dim; ++d) mean[d] /= k;
  for (int i = 0; i < k; ++i) {
    const double* x = features.data() + static_cast<std::size_t>(i) * dim;
    for (int d = 0; d < dim; ++d) {
      const double diff = x[d] - mean[d];
      var[d] += diff * diff;
    }
  }
  for (int d = 0; d < dim; ++d) var[d] = std::max(var[d] / k, floor);
  return var;
}

// k-means++ style seeding: first mean uniform over rows, each further mean
// drawn with probability proportional to the squared distance to the
// nearest mean chosen so far.
std::vector<int> seed_mean_rows(const std::vector<double>& features, int k,
                                int dim, int c, std::mt19937_64& rng) {
  std::vector<int> chosen;
  chosen.reserve(c);
  chosen.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(k)));
  std::vector<double> d2(k);
  for (int i = 0; i < k; ++i) {
    d2[i] = sq_dist_rows(features.data() + static_cast<std::size_t>(i) * dim,
                         features.data() + static_cast<std::size_t>(chosen[0]) * dim, dim);
  }
  while (static_cast<int>(chosen.size()) < c) {
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += d2[i];
    int pick = -1;
    if (total > 0.0) {
      const double target = uniform_unit(rng) * total;
      double acc = 0.0;
      for (int i = 0; i < k; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = k - 1;
    } else {
      // all rows coincide with a chosen mean; fall back to the smallest
      // index not yet used
      std::vector<bool> used(k, false);
      for (int idx : chosen) used[idx] = true;
      pick = 0;
      while (pick < k - 1 && used[pick]) ++pick;
    }
    chosen.push_back(pick);
    for (int i = 0; i < k; ++i) {
      const double d = sq_dist_rows(features.data() + static_cast<std::size_t>(i) * dim,
                                    features.data() + static_cast<std::size_t>(pick) * dim, dim);
      d2[i] = std::min(d2[i], d);
    }
  }
  return chosen;
}

}  // namespace

void validate_row_stochastic(const AttentionMap& attn, double tol) {
  if (attn.k < 1 || attn.a.size() != static_cast<std::size_t>(attn.k) * attn.k) {
    throw ValidationError("attention map has inconsistent shape");
  }
  for (int i = 0; i < attn.k; ++i) {
    double sum = 0.0;
    for (int j = 0; j < attn.k; ++j) {
      const double v = attn.at(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("attention entry (" + std::to_string(i) + "," +
                              std::to_string(j) + ") is negative or non-finite");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw ValidationError("attention row " + std::to_string(i) +
                            " sums to " + std::to_string(sum));
    }
  }
}

int component_count(int t, int T, int c_max, int c_min, int k) {
  if (T < 1 || t < 0 || t > T) {
    throw ArgumentError("component_count: need 0 <= t <= T and T >= 1");
  }
  if (c_min < 1 || c_min > c_max) {
    throw ArgumentError("component_count: need 1 <= C_min <= C_max");
  }
  const double raw = c_max - (static_cast<double>(t) / T) * (c_max - c_min);
  const int rounded = static_cast<int>(std::floor(raw + 0.5));  // half-up
  return std::clamp(rounded, c_min, std::min(c_max, k));
}

double threshold_schedule(const AttentionMap& attn, int t, int T,
                          double q_start, double q_end) {
  if (!(q_start >= 0.0 && q_start <= q_end && q_end <= 1.0)) {
    throw ArgumentError("threshold_schedule: need 0 <= q_start <= q_end <= 1");
  }
  if (T < 1 || t < 0 || t > T) {
    throw ArgumentError("threshold_schedule: need 0 <= t <= T and T >= 1");
  }
  if (attn.k < 2) {
    throw ArgumentError("threshold_schedule: no off-diagonal entries for K=1");
  }
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(attn.k) * (attn.k - 1));
  for (int i = 0; i < attn.k; ++i) {
    for (int j = 0; j < attn.k; ++j) {
      if (i != j) off.push_back(attn.at(i, j));
    }
  }
  std::sort(off.begin(), off.end());
  const double q = q_start + (static_cast<double>(t) / T) * (q_end - q_start);
  const double h = q * (off.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= off.size()) return off.back();
  const double frac = h - static_cast<double>(lo);
  return off[lo] + frac * (off[lo + 1] - off[lo]);
}

AffinityGraph affinity_graph(const AttentionMap& attn, double tau) {
  if (tau < 0.0) {
    throw ArgumentError("affinity_graph: tau must be >= 0");
  }
  AffinityGraph g;
  g.k = attn.k;
  g.tau = tau;
  g.w.resize(attn.a.size());
  for (std::size_t idx = 0; idx < attn.a.size(); ++idx) {
    g.w[idx] = attn.a[idx] > tau ? attn.a[idx] : 0.0;
  }
  return g;
}

Clustering em_cluster(const std::vector<double>& features, int k, int dim,
                      int components, std::uint64_t seed, const EmOptions& opts) {
  if (components < 1 || components > k) {
    throw ArgumentError("em_cluster: need 1 <= C <= K, got C=" +
                        std::to_string(components) + " K=" + std::to_string(k));
  }
  if (opts.max_iters < 1 || !(opts.tol >= 0.0)) {
    throw ArgumentError("em_cluster: need max_iters >= 1 and tol >= 0");
  }
  if (features.size() != static_cast<std::size_t>(k) * dim) {
    throw ArgumentError("em_cluster: feature matrix shape mismatch");
  }
  for (double v : features) {
    if (!std::isfinite(v)) {
      throw ValidationError("em_cluster: non-finite feature value");
    }
  }

  const int c = components;
  std::mt19937_64 rng(seed);

  GmmParams params;
  params.c = c;
  params.dim = dim;
  params.log_weight.assign(c, std::log(1.0 / c));
  params.mean.resize(static_cast<std::size_t>(c) * dim);
  const std::vector<double> gvar = global_variance(features, k, dim, opts.variance_floor);
  params.var.resize(static_cast<std::size_t>(c) * dim);
  const std::vector<int> seeds = seed_mean_rows(features, k, dim, c, rng);
  for (int j = 0; j < c; ++j) {
    std::copy_n(features.data() + static_cast<std::size_t>(seeds[j]) * dim, dim,
                params.mean.begin() + static_cast<std::size_t>(j) * dim);
    std::copy_n(gvar.begin(), dim, params.var.begin() + static_cast<std::size_t>(j) * dim);
  }

  std::vector<double> resp(static_cast<std::size_t>(k) * c);
  std::vector<double> trace;
  trace.reserve(opts.max_iters);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double ll = e_step(features, k, params, &resp);
    trace.push_back(ll);
    if (iter > 0 && ll - prev_ll < opts.tol) break;
    prev_ll = ll;
    m_step(features, k, resp, &params, opts.variance_floor);

    // Re-seed numerically dead components at the worst-explained row, but
    // only when that does not lower the log-likelihood; this keeps the
    // trace monotone while preserving C effective components.
    std::vector<int> dead;
    for (int j = 0; j < c; ++j) {
      double n = 0.0;
      for (int i = 0; i < k; ++i) n += resp[static_cast<std::size_t>(i) * c + j];
      if (n < 1e-12) dead.push_back(j);
    }
    if (!dead.empty()) {
      const double current_ll = e_step(features, k, params, nullptr);
      GmmParams candidate = params;
      for (int j : dead) {
        int worst = 0;
        double worst_max = std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i) {
          double row_max = 0.0;
          for (int jj = 0; jj < c; ++jj) {
            row_max = std::max(row_max, resp[static_cast<std::size_t>(i) * c + jj]);
          }
          if (row_max < worst_max) {
            worst_max = row_max;
            worst = i;
          }
        }
        std::copy_n(features.data() + static_cast<std::size_t>(worst) * dim, dim,
                    candidate.mean.begin() + static_cast<std::size_t>(j) * dim);
        std::copy_n(gvar.begin(), dim,
                    candidate.var.begin() + static_cast<std::size_t>(j) * dim);
        candidate.log_weight[j] = std::log(1.0 / k);
      }
      // renormalize the prior
      double wsum = 0.0;
      for (int j = 0; j < c; ++j) wsum += std::exp(candidate.log_weight[j]);
      for (int j = 0; j < c; ++j) {
        candidate.log_weight[j] -= std::log(wsum);
      }
      if (e_step(features, k, candidate, nullptr) >= current_ll) {
        params = std::move(candidate);
      }
    }
  }

  Clustering out;
  out.components = c;
  out.dim = dim;
  out.responsibilities = std::move(resp);
  out.log_likelihood_trace = std::move(trace);
  out.weights.resize(c);
  for (int j = 0; j < c; ++j) out.weights[j] = std::exp(params.log_weight[j]);
  // normalize away rounding drift so the priors sum to 1 exactly enough
  double wsum = 0.0;
  for (double w : out.weights) wsum += w;
  for (double& w : out.weights) w /= wsum;
  out.means = std::move(params.mean);
  out.variances = std::move(params.var);
  out.assignment.resize(k);
  for (int i = 0; i < k; ++i) {
    int best = 0;
    double best_r = out.responsibilities[static_cast<std::size_t>(i) * c];
    for (int j = 1; j < c; ++j) {
      const double r = out.responsibilities[static_cast<std::size_t>(i) * c + j];
      if (r > best_r) {  // strict: ties keep the smaller component
        best_r = r;
        best = j;
      }
    }
    out.assignment[i] = best;
  }
  return out;
}

MaskScores semantic_scores(const Clustering& clustering, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> delta(clustering.components);
  for (double& d : delta) d = uniform_unit(rng);
  MaskScores scores;
  scores.stream = Stream::Semantic;
  scores.scores.reserve(clustering.assignment.size());
  for (int label : clustering.assignment) scores.scores.push_back(delta[label]);
  return scores;
}

AttentionMap synth_attention(const PatchSet& patches, double bandwidth,
                             std::uint64_t seed, double noise_amp) {
  if (!(bandwidth > 0.0)) {
    throw ArgumentError("synth_attention: bandwidth must be > 0");
  }
  if (noise_amp < 0.0 || noise_amp >= 1.0) {
    throw ArgumentError("synth_attention: noise amplitude must be in [0, 1)");
  }
  const int k = patches.patch_count();
  AttentionMap attn;
  attn.k = k;
  attn.a.resize(static_cast<std::size_t>(k) * k);
  std::mt19937_64 rng(seed);
  const double inv_bw2 = 1.0 / (bandwidth * bandwidth);
  for (int i = 0; i < k; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      double v = std::exp(-sq_dist_rows(patches.center_coords[i].data(),
                                        patches.center_coords[j].data(), 3) *
                          inv_bw2);
      if (noise_amp > 0.0) {
        v *= 1.0 + noise_amp * (2.0 * uniform_unit(rng) - 1.0);
      }
      attn.at(i, j) = v;
      sum += v;
    }
    for (int j = 0; j < k; ++j) attn.at(i, j) /= sum;
  }
  return attn;
}

}  // namespace maskforge
