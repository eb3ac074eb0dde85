#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "neuroclip/errors.hpp"
#include "neuroclip/tensor.hpp"

namespace neuroclip {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Copies a 2-D tensor into an Eigen matrix.
inline Matrix to_matrix(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("to_matrix: expected a matrix, got " + to_string(t.shape()));
  return Eigen::Map<const Matrix>(t.data().data(), Eigen::Index(t.shape()[0]), Eigen::Index(t.shape()[1]));
}

// 1-based rank of the ground-truth candidate i in row i. Candidates scoring
// strictly higher rank ahead; ties go to the lower candidate index.
template <typename Derived>
std::vector<std::size_t> ground_truth_ranks(const Eigen::MatrixBase<Derived>& s) {
  if (s.rows() != s.cols()) throw DimensionError("similarity matrix must be square");
  std::vector<std::size_t> ranks(std::size_t(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double own = s(i, i);
    std::size_t ahead = 0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const double v = s(i, j);
      if (v > own || (v == own && j < i)) ++ahead;
    }
    ranks[std::size_t(i)] = ahead + 1;
  }
  return ranks;
}

template <typename Derived>
std::map<std::size_t, double> topk_accuracy(const Eigen::MatrixBase<Derived>& s, const std::vector<std::size_t>& ks) {
  const std::size_t n = std::size_t(s.rows());
  for (std::size_t k : ks) {
    if (k < 1 || k > n) {
      throw DomainError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
  }
  const auto ranks = ground_truth_ranks(s);
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t r : ranks) hits += r <= k;
    out[k] = double(hits) / double(n);
  }
  return out;
}

// Single-relevant specialization: AP of query i is 1 / rank_i.
template <typename Derived>
double mean_average_precision(const Eigen::MatrixBase<Derived>& s) {
  const auto ranks = ground_truth_ranks(s);
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r : ranks) total += 1.0 / double(r);
  return total / double(ranks.size());
}

// General form: relevant(i, j) != 0 marks candidate j as relevant to query i.
// AP sums precision at every relevant position and divides by the number of
// relevant candidates; queries with no relevant candidate contribute 0.
template <typename DerivedS, typename DerivedR>
double mean_average_precision(const Eigen::MatrixBase<DerivedS>& s, const Eigen::MatrixBase<DerivedR>& relevant) {
  if (s.rows() != relevant.rows() || s.cols() != relevant.cols()) {
    throw DimensionError("relevance mask shape differs from the similarity matrix");
  }
  const Eigen::Index n = s.rows();
  if (n == 0) return 0.0;
  double total = 0.0;
  std::vector<Eigen::Index> order(std::size_t(s.cols()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) order[std::size_t(j)] = j;
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return s(i, a) > s(i, b); });
    double hits = 0.0, ap = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (relevant(i, order[pos]) != 0) {
        hits += 1.0;
        ap += hits / double(pos + 1);
      }
    }
    if (hits > 0) total += ap / hits;
  }
  return total / double(n);
}

struct RetrievalReport {
  std::map<std::size_t, double> top_k;
  double map = 0.0;
  std::vector<std::size_t> ranks;
  std::string similarity_path;

  std::string to_json() const;
};

template <typename Derived>
RetrievalReport retrieval_report(const Eigen::MatrixBase<Derived>& s, const std::vector<std::size_t>& ks) {
  RetrievalReport r;
  r.top_k = topk_accuracy(s, ks);
  r.map = mean_average_precision(s);
  r.ranks = ground_truth_ranks(s);
  return r;
}

// Full-precision CSV, one row per EEG query.
void write_similarity_csv(std::ostream& os, const Matrix& s);

}  // namespace neuroclip
