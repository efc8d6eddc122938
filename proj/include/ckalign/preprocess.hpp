#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/parallel.hpp"
#include "ckalign/random.hpp"

namespace ckalign {

/// Diagonal of the stretching matrix: one inverse standard deviation per feature.
struct StretchTransform {
  Vector scales;
  std::vector<Index> epsilon_clamped;
};

inline constexpr double kStretchStdFloor = 1e-12;

// Population std of every feature over the union of base and query columns.
inline StretchTransform fit_stretch(const EmbeddingSet& base, const EmbeddingSet& query) {
  require(base.dim() == query.dim(), ErrorKind::size,
          "fit_stretch: dim mismatch " + std::to_string(base.dim()) + " vs " + std::to_string(query.dim()));
  const Index n = base.count() + query.count();
  require(n >= 2, ErrorKind::size, "fit_stretch needs at least 2 columns in total");
  StretchTransform t;
  t.scales.resize(base.dim());
  for (Index i = 0; i < base.dim(); ++i) {
    const double mean = (base.data.row(i).sum() + query.data.row(i).sum()) / static_cast<double>(n);
    const double ss = (base.data.row(i).array() - mean).square().sum() +
                      (query.data.row(i).array() - mean).square().sum();
    const double std = std::sqrt(ss / static_cast<double>(n));
    if (std < kStretchStdFloor) {
      t.scales[i] = 1.0;
      t.epsilon_clamped.push_back(i);
    } else {
      t.scales[i] = 1.0 / std;
    }
  }
  return t;
}

inline EmbeddingSet apply_stretch(const StretchTransform& t, const EmbeddingSet& X) {
  require(X.dim() == t.scales.size(), ErrorKind::size, "apply_stretch: dim mismatch");
  EmbeddingSet out = X;
  out.data = t.scales.asDiagonal() * X.data;
  return out;
}

inline EmbeddingSet l2_normalize(const EmbeddingSet& X) {
  EmbeddingSet out = X;
  for (Index j = 0; j < X.count(); ++j) {
    const double norm = X.data.col(j).norm();
    require(norm > 0, ErrorKind::degenerate_vector,
            "zero column '" + X.ids[static_cast<std::size_t>(j)] + "' cannot be normalized");
    out.data.col(j) /= norm;
  }
  return out;
}

enum class AnchorMethod { kmeans, uniform };

inline std::string_view to_string(AnchorMethod m) { return m == AnchorMethod::kmeans ? "kmeans" : "uniform"; }

struct AnchorSelection {
  std::vector<Index> indices;
  AnchorMethod method = AnchorMethod::kmeans;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const AnchorSelection& a) {
  return {{"method", std::string(to_string(a.method))}, {"seed", a.seed}, {"indices", a.indices}};
}

struct KMeansResult {
  Matrix centers;
  std::vector<Index> assignment;
  // Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIters = 300;
inline constexpr double kKMeansMoveTol = 1e-6;

namespace detail {

inline std::vector<Index> kmeanspp_seeds(const Matrix& X, Index k, Rng& rng) {
  const Index n = X.cols();
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  chosen.push_back(static_cast<Index>(rng.index(static_cast<std::size_t>(n))));
  taken[static_cast<std::size_t>(chosen.back())] = true;
  Vector d2(n);
  for (Index j = 0; j < n; ++j) d2[j] = (X.col(j) - X.col(chosen[0])).squaredNorm();
  while (static_cast<Index>(chosen.size()) < k) {
    const double total = d2.sum();
    Index pick = -1;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0;
      for (Index j = 0; j < n; ++j) {
        acc += d2[j];
        if (acc > target && d2[j] > 0) {
          pick = j;
          break;
        }
      }
      if (pick < 0) {
        for (Index j = n - 1; j >= 0; --j) {
          if (d2[j] > 0) {
            pick = j;
            break;
          }
        }
      }
    } else {
      std::vector<Index> free;
      for (Index j = 0; j < n; ++j)
        if (!taken[static_cast<std::size_t>(j)]) free.push_back(j);
      pick = free[rng.index(free.size())];
    }
    chosen.push_back(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    for (Index j = 0; j < n; ++j) d2[j] = std::min(d2[j], (X.col(j) - X.col(pick)).squaredNorm());
  }
  return chosen;
}

}  // namespace detail

/// Lloyd iterations from a k-means++ start; stops when no center moves more
/// than 1e-6 or after 300 iterations. Assignment ties go to the lowest center.
inline KMeansResult kmeans(const Matrix& X, Index k, std::uint64_t seed) {
  const Index n = X.cols();
  require(k >= 1 && k <= n, ErrorKind::size, "kmeans: k must be in [1, count]");
  Rng rng(seed);
  KMeansResult r;
  const auto seeds = detail::kmeanspp_seeds(X, k, rng);
  r.centers.resize(X.rows(), k);
  for (Index c = 0; c < k; ++c) r.centers.col(c) = X.col(seeds[static_cast<std::size_t>(c)]);
  r.assignment.assign(static_cast<std::size_t>(n), 0);
  Vector best(n);
  for (int it = 0; it < kKMeansMaxIters; ++it) {
    parallel_for(0, n, [&](std::ptrdiff_t j) {
      Index arg = 0;
      double d = (X.col(j) - r.centers.col(0)).squaredNorm();
      for (Index c = 1; c < k; ++c) {
        const double dc = (X.col(j) - r.centers.col(c)).squaredNorm();
        if (dc < d) {
          d = dc;
          arg = c;
        }
      }
      r.assignment[static_cast<std::size_t>(j)] = arg;
      best[j] = d;
    });
    r.objective_history.push_back(best.sum());
    r.iterations = it + 1;

    Matrix sums = Matrix::Zero(X.rows(), k);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index j = 0; j < n; ++j) {
      const Index c = r.assignment[static_cast<std::size_t>(j)];
      sums.col(c) += X.col(j);
      ++counts[static_cast<std::size_t>(c)];
    }
    double max_move = 0;
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // empty cluster keeps its center
      const Vector updated = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      max_move = std::max(max_move, (updated - r.centers.col(c)).norm());
      r.centers.col(c) = updated;
    }
    if (max_move < kKMeansMoveTol) break;
  }
  return r;
}

// For each center in order, the nearest column not claimed by an earlier center.
inline std::vector<Index> snap_to_members(const Matrix& X, const Matrix& centers) {
  const Index n = X.cols();
  std::vector<bool> claimed(static_cast<std::size_t>(n), false);
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(centers.cols()));
  for (Index c = 0; c < centers.cols(); ++c) {
    Index arg = -1;
    double d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (claimed[static_cast<std::size_t>(j)]) continue;
      const double dj = (X.col(j) - centers.col(c)).squaredNorm();
      if (dj < d) {
        d = dj;
        arg = j;
      }
    }
    claimed[static_cast<std::size_t>(arg)] = true;
    out.push_back(arg);
  }
  return out;
}

/// Picks m distinct dataset members as anchors, from the image side.
inline AnchorSelection select_anchors(const Matrix& images, Index m, AnchorMethod method, std::uint64_t seed) {
  const Index n = images.cols();
  require(m >= 1, ErrorKind::size, "select_anchors: m must be >= 1");
  require(m <= n, ErrorKind::size,
          "select_anchors: m = " + std::to_string(m) + " exceeds count " + std::to_string(n));
  AnchorSelection sel{{}, method, seed};
  if (m == n) {
    sel.indices.resize(static_cast<std::size_t>(n));
    std::iota(sel.indices.begin(), sel.indices.end(), Index{0});
    return sel;
  }
  if (method == AnchorMethod::uniform) {
    Rng rng(seed);
    for (auto i : rng.sample_without_replacement(static_cast<std::size_t>(n), static_cast<std::size_t>(m)))
      sel.indices.push_back(static_cast<Index>(i));
    std::sort(sel.indices.begin(), sel.indices.end());
    return sel;
  }
  const auto km = kmeans(images, m, seed);
  sel.indices = snap_to_members(images, km.centers);
  return sel;
}

inline AnchorSelection select_anchors(const EmbeddingSet& images, Index m, AnchorMethod method,
                                      std::uint64_t seed) {
  return select_anchors(images.data, m, method, seed);
}

}  // namespace ckalign
