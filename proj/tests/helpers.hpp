// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-side generators and oracles. Oracles re-derive expected results from
// first principles (exhaustive search, direct evaluation) and must stay
// independent of the library code paths they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "maskforge/geometry.hpp"
#include "maskforge/rng.hpp"

namespace testutil {

inline maskforge::PointCloud random_cloud(int n, std::uint64_t seed,
                                          double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  maskforge::PointCloud cloud;
  cloud.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    cloud.points.push_back({maskforge::uniform_in(rng, lo, hi),
                            maskforge::uniform_in(rng, lo, hi),
                            maskforge::uniform_in(rng, lo, hi)});
  }
  return cloud;
}

inline double dist2(const maskforge::Vec3& a, const maskforge::Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Brute-force greedy FPS: recomputes the min-distance to the chosen set for
// every candidate at every step instead of maintaining a running array.
inline std::vector<int> fps_oracle(const maskforge::PointCloud& cloud, int k) {
  const int n = cloud.size();
  maskforge::Vec3 centroid{0, 0, 0};
  for (const auto& p : cloud.points) {
    centroid[0] += p[0];
    centroid[1] += p[1];
    centroid[2] += p[2];
  }
  centroid[0] /= n;
  centroid[1] /= n;
  centroid[2] /= n;

  std::vector<int> chosen;
  int first = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    if (dist2(cloud.points[i], centroid) > best) {
      best = dist2(cloud.points[i], centroid);
      first = i;
    }
  }
  chosen.push_back(first);
  while (static_cast<int>(chosen.size()) < k) {
    int arg = -1;
    double far = -1.0;
    for (int i = 0; i < n; ++i) {
      double mind = std::numeric_limits<double>::infinity();
      for (int c : chosen) mind = std::min(mind, dist2(cloud.points[i], cloud.points[c]));
      if (mind > far) {
        far = mind;
        arg = i;
      }
    }
    chosen.push_back(arg);
  }
  return chosen;
}

// Exhaustive sort-by-distance KNN with the smaller-index tie-break and the
// center pinned first.
inline std::vector<int> knn_oracle(const maskforge::PointCloud& cloud, int center, int k) {
  std::vector<std::pair<double, int>> d;
  d.reserve(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) {
    d.push_back({i == center ? -1.0 : dist2(cloud.points[i], cloud.points[center]), i});
  }
  std::sort(d.begin(), d.end());
  std::vector<int> out(k);
  for (int j = 0; j < k; ++j) out[j] = d[j].second;
  return out;
}

// Linear-interpolation empirical quantile over a copy of the data.
inline double quantile_oracle(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double h = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

// Adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<std::vector<long long>> table(ka, std::vector<long long>(kb, 0));
  for (int i = 0; i < n; ++i) ++table[a[i]][b[i]];
  auto comb2 = [](long long m) { return m * (m - 1) / 2; };
  long long sum_ij = 0, sum_a = 0, sum_b = 0;
  for (int i = 0; i < ka; ++i) {
    long long row = 0;
    for (int j = 0; j < kb; ++j) {
      sum_ij += comb2(table[i][j]);
      row += table[i][j];
    }
    sum_a += comb2(row);
  }
  for (int j = 0; j < kb; ++j) {
    long long col = 0;
    for (int i = 0; i < ka; ++i) col += table[i][j];
    sum_b += comb2(col);
  }
  const double expected = static_cast<double>(sum_a) * sum_b / comb2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

// Random row-stochastic K x K matrix (strictly positive entries).
inline std::vector<double> random_stochastic(int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> a(static_cast<std::size_t>(k) * k);
  for (int i = 0; i < k; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      const double v = 0.05 + maskforge::uniform_unit(rng);
      a[static_cast<std::size_t>(i) * k + j] = v;
      sum += v;
    }
    for (int j = 0; j < k; ++j) a[static_cast<std::size_t>(i) * k + j] /= sum;
  }
  return a;
}

// Two Gaussian blobs in dim dimensions with means far apart relative to the
// per-coordinate spread; returns features and ground-truth labels.
struct BlobData {
  std::vector<double> features;
  std::vector<int> labels;
};

inline BlobData two_blobs(int n, int dim, std::uint64_t seed, double separation = 8.0,
                          double spread = 0.25) {
  std::mt19937_64 rng(seed);
  BlobData out;
  out.features.resize(static_cast<std::size_t>(n) * dim);
  out.labels.resize(n);
  auto gauss = [&rng]() {
    // Box-Muller; avoids the implementation-defined std::normal_distribution
    const double u1 = std::max(maskforge::uniform_unit(rng), 1e-300);
    const double u2 = maskforge::uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };
  for (int i = 0; i < n; ++i) {
    const int label = i < n / 2 ? 0 : 1;
    out.labels[i] = label;
    for (int d = 0; d < dim; ++d) {
      const double center = label == 0 ? 0.0 : separation / std::sqrt(dim);
      out.features[static_cast<std::size_t>(i) * dim + d] = center + spread * gauss();
    }
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("maskforge_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void append_u32_le(std::vector<unsigned char>* v, std::uint32_t x) {
  v->push_back(x & 0xFF);
  v->push_back((x >> 8) & 0xFF);
  v->push_back((x >> 16) & 0xFF);
  v->push_back((x >> 24) & 0xFF);
}

inline void append_f32_le(std::vector<unsigned char>* v, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  append_u32_le(v, bits);
}

}  // namespace testutil
