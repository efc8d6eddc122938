#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ckalign/assignment.hpp"
#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/kernel.hpp"
#include "ckalign/parallel.hpp"
#include "ckalign/score_matrix.hpp"

namespace ckalign {

/// Kernel row of one query against the base set of one modality, plus the
/// scalar aggregates the incremental HSIC update needs.
struct QueryTerms {
  Vector k;              // kernel values against each base column
  double self = 0;       // k(q, q)
  double sum_k = 0;      // 1^T k
  double own_rows = 0;   // r^T k with r the row sums of this side's base kernel
  double self_hsic_num = 0;  // tr(K' C K' C) of the augmented kernel
};

/// Precomputed base-set aggregates for local CKA. Every query pair adds one
/// row/column to each base kernel; with these aggregates its HSIC terms cost O(M).
class LocalCkaCache {
 public:
  LocalCkaCache(const Matrix& base_left, const Matrix& base_right, const KernelSpec& spec)
      : left_(make_side(base_left, spec, "left")), right_(make_side(base_right, spec, "right")), spec_(spec) {
    require(base_left.cols() == base_right.cols(), ErrorKind::validation,
            "local cka: anchor counts differ (" + std::to_string(base_left.cols()) + " vs " +
                std::to_string(base_right.cols()) + ")");
    cross_trace_ = trace_product(left_.kernel, right_.kernel);
    cross_rows_ = left_.row_sums.dot(right_.row_sums);
  }

  LocalCkaCache(const EmbeddingSet& base_left, const EmbeddingSet& base_right, const KernelSpec& spec)
      : LocalCkaCache(base_left.data, base_right.data, spec) {}

  Index m() const { return left_.base.cols(); }
  const KernelSpec& spec() const { return spec_; }
  // Bandwidths actually used (median heuristic resolved on each base set).
  const KernelSpec& resolved_left() const { return left_.resolved; }
  const KernelSpec& resolved_right() const { return right_.resolved; }
  const Matrix& base_left() const { return left_.base; }
  const Matrix& base_right() const { return right_.base; }
  const Matrix& base_kernel_left() const { return left_.kernel; }
  const Matrix& base_kernel_right() const { return right_.kernel; }

  QueryTerms left_terms(const Eigen::Ref<const Vector>& z) const { return terms(left_, z); }
  QueryTerms right_terms(const Eigen::Ref<const Vector>& h) const { return terms(right_, h); }

  // Expands tr(K'CL'C) = tr(K'L') - 2/n (K'1).(L'1) + (1'K'1)(1'L'1)/n^2 over the augmented kernels.
  double score(const QueryTerms& z, const QueryTerms& h) const {
    require(m() >= 2, ErrorKind::size, "local cka needs at least 2 anchors");
    const double n = static_cast<double>(m() + 1);
    const double trace = cross_trace_ + 2.0 * z.k.dot(h.k) + z.self * h.self;
    const double rows = cross_rows_ + left_.row_sums.dot(h.k) + z.k.dot(right_.row_sums) + z.k.dot(h.k) +
                        (z.sum_k + z.self) * (h.sum_k + h.self);
    const double totals = (left_.total + 2.0 * z.sum_k + z.self) * (right_.total + 2.0 * h.sum_k + h.self);
    const double num = trace - 2.0 / n * rows + totals / (n * n);
    return num / std::sqrt(z.self_hsic_num * h.self_hsic_num);
  }

  double score(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& h) const {
    return score(left_terms(z), right_terms(h));
  }

  /// Trace-variant score tr(K_[B_I,z] K_[B_C,h]) for the linear kernel on raw inputs.
  double trace_linear(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& h) const {
    require(spec_.kind == KernelKind::linear, ErrorKind::unsupported_spec,
            "the trace variant is defined for the linear kernel only");
    return linear_trace_constant() + 2.0 * (left_.base.transpose() * z).dot(right_.base.transpose() * h) +
           z.squaredNorm() * h.squaredNorm();
  }

  // tr(B_I^T B_I B_C^T B_C) on the raw (untranslated) base embeddings.
  double linear_trace_constant() const {
    const Matrix gl = left_.base.transpose() * left_.base;
    const Matrix gr = right_.base.transpose() * right_.base;
    return trace_product(gl, gr);
  }

 private:
  struct Side {
    Matrix base;         // raw base embeddings
    Vector shift;        // linear kernel: base mean subtracted before taking inner products
    KernelSpec resolved;
    Matrix kernel;
    Vector row_sums;
    double total = 0;
    double self_trace = 0;
    double self_rows = 0;
  };

  static Side make_side(const Matrix& base, const KernelSpec& spec, const char* name) {
    require(base.cols() >= 1, ErrorKind::size, std::string("local cka: ") + name + " base set is empty");
    Side s;
    s.base = base;
    s.resolved = resolve_bandwidth(base, spec);
    // Linear centered kernels are translation invariant; working on mean-free
    // data keeps the incremental sums well conditioned.
    s.shift = spec.kind == KernelKind::linear ? Vector(base.rowwise().mean()) : Vector::Zero(base.rows());
    const Matrix shifted = base.colwise() - s.shift;
    s.kernel = base.cols() == 1 ? Matrix::Constant(1, 1, kernel_value(s.resolved, shifted.col(0), shifted.col(0)))
                                : gram(shifted, s.resolved).values;
    const double n1 = static_cast<double>(base.cols() - 1);
    // A single anchor is only meaningful for the trace variant; CKA scores check m() >= 2.
    require(base.cols() == 1 || trace_product(double_center(s.kernel), double_center(s.kernel)) / (n1 * n1) > kDegenerateHsic,
            ErrorKind::degenerate_kernel, std::string("local cka: ") + name + " base kernel is constant");
    s.row_sums = s.kernel.rowwise().sum();
    s.total = s.row_sums.sum();
    s.self_trace = trace_product(s.kernel, s.kernel);
    s.self_rows = s.row_sums.squaredNorm();
    return s;
  }

  static QueryTerms terms(const Side& s, const Eigen::Ref<const Vector>& q) {
    require(q.size() == s.base.rows(), ErrorKind::size, "local cka: query dim does not match the base set");
    const Index m = s.base.cols();
    QueryTerms t;
    const Vector qs = q - s.shift;
    t.k.resize(m);
    for (Index i = 0; i < m; ++i) t.k[i] = kernel_value(s.resolved, s.base.col(i) - s.shift, qs);
    t.self = kernel_value(s.resolved, qs, qs);
    t.sum_k = t.k.sum();
    t.own_rows = s.row_sums.dot(t.k);
    const double n = static_cast<double>(m + 1);
    const double trace = s.self_trace + 2.0 * t.k.squaredNorm() + t.self * t.self;
    const double rows = s.self_rows + 2.0 * t.own_rows + t.k.squaredNorm() + (t.sum_k + t.self) * (t.sum_k + t.self);
    const double total = s.total + 2.0 * t.sum_k + t.self;
    t.self_hsic_num = trace - 2.0 / n * rows + total * total / (n * n);
    require(t.self_hsic_num / ((n - 1) * (n - 1)) > kDegenerateHsic, ErrorKind::degenerate_kernel,
            "local cka: augmented kernel is constant");
    return t;
  }

  Side left_;
  Side right_;
  KernelSpec spec_;
  double cross_trace_ = 0;
  double cross_rows_ = 0;
};

/// Reference path: builds both augmented kernels and calls cka directly.
inline double local_cka_naive(const LocalCkaCache& cache, const Eigen::Ref<const Vector>& z,
                              const Eigen::Ref<const Vector>& h) {
  const Index m = cache.m();
  Matrix zl(cache.base_left().rows(), m + 1), hr(cache.base_right().rows(), m + 1);
  zl << cache.base_left(), z;
  hr << cache.base_right(), h;
  return cka(gram(zl, cache.resolved_left()), gram(hr, cache.resolved_right()));
}

inline double local_cka_score(const LocalCkaCache& cache, const Eigen::Ref<const Vector>& z,
                              const Eigen::Ref<const Vector>& h) {
  return cache.score(z, h);
}

inline double local_cka_trace_linear(const LocalCkaCache& cache, const Eigen::Ref<const Vector>& z,
                                     const Eigen::Ref<const Vector>& h) {
  return cache.trace_linear(z, h);
}

/// values(i, j) = local CKA of left query i with right query j.
inline ScoreMatrix score_matrix(const LocalCkaCache& cache, const EmbeddingSet& Zq, const EmbeddingSet& Hq) {
  std::vector<QueryTerms> lt(static_cast<std::size_t>(Zq.count())), rt(static_cast<std::size_t>(Hq.count()));
  parallel_for(0, Zq.count(), [&](std::ptrdiff_t i) { lt[static_cast<std::size_t>(i)] = cache.left_terms(Zq.data.col(i)); });
  parallel_for(0, Hq.count(), [&](std::ptrdiff_t j) { rt[static_cast<std::size_t>(j)] = cache.right_terms(Hq.data.col(j)); });
  ScoreMatrix s{Matrix(Zq.count(), Hq.count()), Zq.ids, Hq.ids};
  parallel_for(0, Zq.count(), [&](std::ptrdiff_t i) {
    for (Index j = 0; j < Hq.count(); ++j)
      s.values(i, j) = cache.score(lt[static_cast<std::size_t>(i)], rt[static_cast<std::size_t>(j)]);
  });
  return s;
}

inline ScoreMatrix trace_score_matrix(const LocalCkaCache& cache, const EmbeddingSet& Zq, const EmbeddingSet& Hq) {
  ScoreMatrix s{Matrix(Zq.count(), Hq.count()), Zq.ids, Hq.ids};
  parallel_for(0, Zq.count(), [&](std::ptrdiff_t i) {
    for (Index j = 0; j < Hq.count(); ++j) s.values(i, j) = cache.trace_linear(Zq.data.col(i), Hq.data.col(j));
  });
  return s;
}

/// Per row, the k best column indices in descending score order (ties: lower index first).
inline std::vector<std::vector<Index>> retrieve_topk(const ScoreMatrix& scores, Index k) {
  require(k >= 1 && k <= scores.n_right(), ErrorKind::size,
          "retrieve_topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(scores.n_right()) + "]");
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(scores.n_left()));
  for (Index i = 0; i < scores.n_left(); ++i) {
    std::vector<Index> order(static_cast<std::size_t>(scores.n_right()));
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
      const double sa = scores.values(i, a), sb = scores.values(i, b);
      return sa > sb || (sa == sb && a < b);
    });
    order.resize(static_cast<std::size_t>(k));
    out[static_cast<std::size_t>(i)] = std::move(order);
  }
  return out;
}

inline PermutationMap match_by_scores(const ScoreMatrix& scores) {
  require(scores.n_left() == scores.n_right(), ErrorKind::validation, "match_by_scores needs a square score matrix");
  return solve_lap_max(scores.values);
}

}  // namespace ckalign
