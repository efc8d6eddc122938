#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/parallel.hpp"

namespace ckalign {

enum class KernelKind { linear, rbf };

/// Kernel choice. For rbf, an empty bandwidth means "median heuristic".
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  std::optional<double> rbf_bandwidth;

  static KernelSpec linear() { return {}; }
  static KernelSpec rbf_median() { return {KernelKind::rbf, std::nullopt}; }
  static KernelSpec rbf_fixed(double sigma) {
    require(sigma > 0 && std::isfinite(sigma), ErrorKind::validation, "rbf bandwidth must be > 0");
    return {KernelKind::rbf, sigma};
  }

  bool operator==(const KernelSpec&) const = default;
};

inline nlohmann::json to_json(const KernelSpec& spec) {
  if (spec.kind == KernelKind::linear) return {{"kind", "linear"}};
  nlohmann::json j = {{"kind", "rbf"}};
  if (spec.rbf_bandwidth) {
    j["bandwidth"] = *spec.rbf_bandwidth;
  } else {
    j["bandwidth"] = "median";
  }
  return j;
}

enum class KernelState { raw, double_centered, normalized_centered };

struct KernelMatrix {
  Matrix values;
  KernelState state = KernelState::raw;

  Index n() const { return values.rows(); }
};

// Median of the pairwise Euclidean distances between distinct columns.
inline double median_pairwise_distance(const Matrix& X) {
  const Index n = X.cols();
  require(n >= 2, ErrorKind::size, "median heuristic needs at least 2 columns");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) dist.push_back((X.col(i) - X.col(j)).norm());
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  return median;
}

// Replaces a median-heuristic rbf spec by the fixed bandwidth it resolves to on X.
inline KernelSpec resolve_bandwidth(const Matrix& X, const KernelSpec& spec) {
  if (spec.kind != KernelKind::rbf || spec.rbf_bandwidth) return spec;
  const double sigma = median_pairwise_distance(X);
  require(sigma > 0, ErrorKind::degenerate_bandwidth, "median pairwise distance is 0 (all columns identical)");
  return KernelSpec::rbf_fixed(sigma);
}

inline double kernel_value(const KernelSpec& resolved, const Eigen::Ref<const Vector>& a,
                           const Eigen::Ref<const Vector>& b) {
  if (resolved.kind == KernelKind::linear) return a.dot(b);
  const double s = *resolved.rbf_bandwidth;
  return std::exp(-(a - b).squaredNorm() / (2.0 * s * s));
}

/// Gram matrix over the columns of X. Only the upper triangle is computed and
/// mirrored, so the result is exactly symmetric.
inline KernelMatrix gram(const Matrix& X, const KernelSpec& spec) {
  const Index n = X.cols();
  require(n >= 2, ErrorKind::size, "gram needs at least 2 columns, got " + std::to_string(n));
  const KernelSpec resolved = resolve_bandwidth(X, spec);
  KernelMatrix K;
  K.values.resize(n, n);
  parallel_for(0, n, [&](std::ptrdiff_t i) {
    for (Index j = i; j < n; ++j) K.values(i, j) = kernel_value(resolved, X.col(i), X.col(j));
  });
  K.values.triangularView<Eigen::StrictlyLower>() = K.values.transpose();
  return K;
}

inline KernelMatrix gram(const EmbeddingSet& X, const KernelSpec& spec) { return gram(X.data, spec); }

// C K C by subtracting row and column means; C is never formed.
inline Matrix double_center(const Matrix& K) {
  const Vector row_mean = K.rowwise().mean();
  const Eigen::RowVectorXd col_mean = K.colwise().mean();
  const double grand = row_mean.mean();
  Matrix out = K;
  out.colwise() -= row_mean;
  out.rowwise() -= col_mean;
  out.array() += grand;
  return out;
}

inline KernelMatrix center(const KernelMatrix& K) {
  require(K.state != KernelState::normalized_centered, ErrorKind::validation,
          "center expects a raw or double-centered kernel");
  return {double_center(K.values), KernelState::double_centered};
}

namespace detail {
inline Matrix centered_values(const KernelMatrix& K) {
  require(K.state != KernelState::normalized_centered, ErrorKind::validation,
          "hsic expects raw or double-centered kernels");
  return K.state == KernelState::raw ? double_center(K.values) : K.values;
}
}  // namespace detail

// tr(A B) for symmetric A, B as the entrywise inner product.
inline double trace_product(const Matrix& A, const Matrix& B) { return A.cwiseProduct(B).sum(); }

/// Biased HSIC estimator tr(K C L C) / (N - 1)^2.
inline double hsic(const KernelMatrix& K, const KernelMatrix& L) {
  require(K.n() == L.n(), ErrorKind::size,
          "hsic size mismatch: " + std::to_string(K.n()) + " vs " + std::to_string(L.n()));
  const Index n = K.n();
  require(n >= 2, ErrorKind::size, "hsic needs N >= 2");
  const Matrix Kc = detail::centered_values(K);
  const Matrix Lc = detail::centered_values(L);
  const double scale = static_cast<double>(n - 1);
  return trace_product(Kc, Lc.transpose()) / (scale * scale);
}

inline constexpr double kDegenerateHsic = 1e-15;

/// HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)). Throws on constant kernels instead of returning 0/0.
inline double cka(const KernelMatrix& K, const KernelMatrix& L) {
  require(K.n() == L.n(), ErrorKind::size, "cka size mismatch");
  const double kk = hsic(K, K);
  const double ll = hsic(L, L);
  require(kk > kDegenerateHsic && ll > kDegenerateHsic, ErrorKind::degenerate_kernel,
          "self-HSIC vanishes (constant embeddings?)");
  return hsic(K, L) / std::sqrt(kk * ll);
}

inline double linear_cka(const Matrix& X, const Matrix& Y) {
  return cka(gram(X, KernelSpec::linear()), gram(Y, KernelSpec::linear()));
}

/// Double-centered kernel scaled to unit Frobenius norm, so that
/// tr(normalized(K) normalized(L)) == cka(K, L).
inline KernelMatrix normalized_centered(const KernelMatrix& K) {
  const Matrix Kc = detail::centered_values(K);
  const double n1 = static_cast<double>(K.n() - 1);
  const double self = trace_product(Kc, Kc) / (n1 * n1);
  require(self > kDegenerateHsic, ErrorKind::degenerate_kernel, "cannot normalize a kernel with zero self-HSIC");
  return {Kc / (n1 * std::sqrt(self)), KernelState::normalized_centered};
}

}  // namespace ckalign
