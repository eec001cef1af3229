#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "spregime/common.hpp"

namespace spregime {

// Truncated bisquare kernel: (1 - (d/b)^2)^2 for d < b, else 0.
inline double bisquare(double d, double b) {
  if (!(b > 0)) throw ConfigError("bisquare: bandwidth must be positive");
  if (d >= b) return 0.0;
  const double r = d / b;
  const double t = 1.0 - r * r;
  return t * t;
}

// Gaussian kernel exp(-x^2 / (2 s^2)); s > 0 required.
inline double gaussian_kernel(double x, double s) {
  if (!(s > 0)) throw ConfigError("gaussian_kernel: scale must be positive");
  const double z = x / s;
  return std::exp(-0.5 * z * z);
}

// Dense Euclidean distance matrix over rows of an n x 2 coordinate block.
inline Eigen::MatrixXd pairwise_distance(const Eigen::MatrixXd& coords) {
  const Eigen::Index n = coords.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (coords.row(i) - coords.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

// Adaptive bandwidth per observation: distance to the k-th nearest
// neighbour (self excluded). b_i enters a truncated kernel, so the k-th
// neighbour itself receives weight zero and i retains k-1 positive
// neighbours plus itself.
inline Eigen::VectorXd adaptive_bandwidth(const Eigen::MatrixXd& dist, int k) {
  const Eigen::Index n = dist.rows();
  if (k < 1 || k >= n)
    throw ConfigError("adaptive_bandwidth: k must satisfy 1 <= k < n");
  Eigen::VectorXd b(n);
  std::vector<double> row(static_cast<std::size_t>(n) - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) row[m++] = dist(i, j);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    b[i] = row[static_cast<std::size_t>(k - 1)];
    if (!(b[i] > 0))
      throw DataError("adaptive_bandwidth: duplicate coordinates give zero bandwidth");
  }
  return b;
}

// Kernel weight rows for locally weighted fits. Row i holds w_ij =
// bisquare(d_ij; b_i); diagonal forced to 1 (an observation always enters
// its own fit at full weight).
inline Eigen::MatrixXd initial_weights(const Eigen::MatrixXd& dist,
                                       const Eigen::VectorXd& bandwidth) {
  const Eigen::Index n = dist.rows();
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      w(i, j) = bisquare(dist(i, j), bandwidth[i]);
    w(i, i) = 1.0;
  }
  return w;
}

// Row-normalized k-nearest-neighbour contiguity matrix. Distance ties at
// the k-th position are all included, then the row is divided by its sum.
inline Eigen::SparseMatrix<double> knn_row_normalized_w(const Eigen::MatrixXd& dist,
                                                        int k) {
  const Eigen::Index n = dist.rows();
  if (k < 1 || k >= n)
    throw ConfigError("knn_row_normalized_w: k must satisfy 1 <= k < n");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n) - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) idx[m++] = j;
    std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return dist(i, a) < dist(i, b); });
    const double dk = dist(i, idx[static_cast<std::size_t>(k - 1)]);
    std::vector<Eigen::Index> nbrs;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && dist(i, j) <= dk) nbrs.push_back(j);
    const double wij = 1.0 / static_cast<double>(nbrs.size());
    for (Eigen::Index j : nbrs) trips.emplace_back(i, j, wij);
  }
  Eigen::SparseMatrix<double> w(n, n);
  w.setFromTriplets(trips.begin(), trips.end());
  w.makeCompressed();
  return w;
}

// Plain-text triplet form: one "i j value" line per nonzero, 0-based,
// row-major order.
inline std::string w_triplets_string(const Eigen::SparseMatrix<double>& w) {
  Eigen::SparseMatrix<double, Eigen::RowMajor> wr(w);
  std::string out;
  char buf[96];
  for (int i = 0; i < wr.outerSize(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(wr, i); it; ++it) {
      std::snprintf(buf, sizeof(buf), "%lld %lld %.17g\n",
                    static_cast<long long>(it.row()), static_cast<long long>(it.col()),
                    it.value());
      out += buf;
    }
  return out;
}

inline void write_w_triplets(const Eigen::SparseMatrix<double>& w,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << w_triplets_string(w);
  if (!out) throw DataError("write failed: " + path);
}

inline Eigen::SparseMatrix<double> read_w_triplets(const std::string& path,
                                                   Eigen::Index n) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<Eigen::Triplet<double>> trips;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long i, j;
    double v;
    if (!(ss >> i >> j >> v))
      throw DataError(path + ": malformed triplet at line " + std::to_string(lineno));
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw DataError(path + ": index out of range at line " + std::to_string(lineno));
    trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), v);
  }
  Eigen::SparseMatrix<double> w(n, n);
  w.setFromTriplets(trips.begin(), trips.end());
  w.makeCompressed();
  return w;
}

}  // namespace spregime
