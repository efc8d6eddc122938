#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/score_matrix.hpp"

namespace ckalign {

/// A bijection on {0..n-1}: mapping[i] is the column matched to row i.
struct PermutationMap {
  std::vector<Index> mapping;
  double objective = 0;

  Index n() const { return static_cast<Index>(mapping.size()); }
};

inline bool is_bijection(const std::vector<Index>& mapping) {
  std::vector<bool> hit(mapping.size(), false);
  for (auto j : mapping) {
    if (j < 0 || j >= static_cast<Index>(mapping.size()) || hit[static_cast<std::size_t>(j)]) return false;
    hit[static_cast<std::size_t>(j)] = true;
  }
  return true;
}

inline PermutationMap identity_permutation(Index n) {
  PermutationMap p;
  p.mapping.resize(static_cast<std::size_t>(n));
  std::iota(p.mapping.begin(), p.mapping.end(), Index{0});
  return p;
}

inline PermutationMap inverse(const PermutationMap& p) {
  PermutationMap inv;
  inv.mapping.resize(p.mapping.size());
  for (std::size_t i = 0; i < p.mapping.size(); ++i) inv.mapping[static_cast<std::size_t>(p.mapping[i])] = static_cast<Index>(i);
  return inv;
}

// Sum of score(i, mapping[i]) in row order.
inline double assignment_objective(const Matrix& score, const std::vector<Index>& mapping) {
  double total = 0;
  for (std::size_t i = 0; i < mapping.size(); ++i) total += score(static_cast<Index>(i), mapping[i]);
  return total;
}

namespace detail {
inline void check_square_finite(const Matrix& score) {
  require(score.rows() == score.cols(), ErrorKind::validation,
          "assignment needs a square matrix, got " + std::to_string(score.rows()) + "x" +
              std::to_string(score.cols()));
  require(score.rows() >= 1, ErrorKind::validation, "assignment needs a non-empty matrix");
  require(score.allFinite(), ErrorKind::validation, "assignment matrix has non-finite entries");
}
}  // namespace detail

/// Maximum-score linear assignment by shortest augmenting paths (Jonker-Volgenant
/// style, Dijkstra over reduced costs with row/column potentials). Scores are
/// negated into costs internally. O(n^3).
inline PermutationMap solve_lap_max(const Matrix& score) {
  detail::check_square_finite(score);
  const auto n = static_cast<std::size_t>(score.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Rows and columns are 1-based here; column 0 is the virtual source of each search.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), dist(n + 1);
  std::vector<std::size_t> row_of_col(n + 1, 0), pred(n + 1, 0);
  std::vector<char> done(n + 1);
  auto cost = [&](std::size_t r, std::size_t c) {
    return -score(static_cast<Index>(r - 1), static_cast<Index>(c - 1));
  };

  for (std::size_t row = 1; row <= n; ++row) {
    row_of_col[0] = row;
    std::size_t col = 0;
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), 0);
    do {
      done[col] = 1;
      const std::size_t r = row_of_col[col];
      double delta = inf;
      std::size_t next = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (done[c]) continue;
        const double reduced = cost(r, c) - u[r] - v[c];
        if (reduced < dist[c]) {
          dist[c] = reduced;
          pred[c] = col;
        }
        if (dist[c] < delta) {
          delta = dist[c];
          next = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (done[c]) {
          u[row_of_col[c]] += delta;
          v[c] -= delta;
        } else {
          dist[c] -= delta;
        }
      }
      col = next;
    } while (row_of_col[col] != 0);
    // Augment along the alternating path back to the source.
    do {
      const std::size_t prev = pred[col];
      row_of_col[col] = row_of_col[prev];
      col = prev;
    } while (col != 0);
  }

  PermutationMap p;
  p.mapping.resize(n);
  for (std::size_t c = 1; c <= n; ++c) p.mapping[row_of_col[c] - 1] = static_cast<Index>(c - 1);
  p.objective = assignment_objective(score, p.mapping);
  return p;
}

inline PermutationMap solve_lap_max(const ScoreMatrix& s) { return solve_lap_max(s.values); }

inline constexpr Index kBruteForceMaxN = 9;

// Exhaustive maximum; among equal objectives the lexicographically smallest mapping wins.
inline PermutationMap brute_force_lap(const Matrix& score) {
  detail::check_square_finite(score);
  require(score.rows() <= kBruteForceMaxN, ErrorKind::size, "brute_force_lap is limited to n <= 9");
  std::vector<Index> perm(static_cast<std::size_t>(score.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  PermutationMap best{perm, assignment_objective(score, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double obj = assignment_objective(score, perm);
    if (obj > best.objective) best = {perm, obj};
  }
  return best;
}

}  // namespace ckalign
