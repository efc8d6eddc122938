#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckalign/assignment.hpp"
#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/kernel.hpp"
#include "ckalign/random.hpp"

namespace ckalign {

// automatic: barycenter when seeds exist, spectral when m == 0 (the centered
// objective has zero gradient at the barycenter without seeds).
enum class QapInit { automatic, barycenter, identity, random, spectral };

inline std::string_view to_string(QapInit init) {
  switch (init) {
    case QapInit::automatic: return "automatic";
    case QapInit::spectral: return "spectral";
    case QapInit::barycenter: return "barycenter";
    case QapInit::identity: return "identity";
    case QapInit::random: return "random";
  }
  return "barycenter";
}

struct QapConfig {
  int max_iters = 30;
  double tol = 1e-6;
  QapInit init = QapInit::automatic;
  std::uint64_t init_seed = 0;  // used by QapInit::random and by restarts
  int restarts = 0;
};

inline void validate(const QapConfig& cfg) {
  require(cfg.max_iters >= 1, ErrorKind::validation, "qap: max_iters must be >= 1");
  require(cfg.tol > 0, ErrorKind::validation, "qap: tol must be > 0");
  require(cfg.restarts >= 0, ErrorKind::validation, "qap: restarts must be >= 0");
}

inline nlohmann::json to_json(const QapConfig& cfg) {
  return {{"max_iters", cfg.max_iters},
          {"tol", cfg.tol},
          {"init", std::string(to_string(cfg.init))},
          {"init_seed", cfg.init_seed},
          {"restarts", cfg.restarts}};
}

/// permutation.mapping[a] = b pairs left query a with right query b.
struct QapResult {
  PermutationMap permutation;
  double objective_trace = 0;
  double cka_achieved = 0;
  int iterations = 0;
  bool converged = false;
  // Objective of every Frank-Wolfe iterate, starting with the initial point.
  std::vector<double> objective_history;
};

inline nlohmann::json to_json(const QapResult& r) {
  return {{"mapping", r.permutation.mapping},
          {"objective_trace", r.objective_trace},
          {"cka_achieved", r.cka_achieved},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"objective_history", r.objective_history}};
}

// Called with (iteration, doubly-stochastic iterate, objective) after every step.
using QapObserver = std::function<void(int, const Matrix&, double)>;

// Full-size index order after applying the query permutation: position m + b holds
// the left item matched to right query b.
inline std::vector<Index> seeded_order(Index m, const PermutationMap& p) {
  std::vector<Index> order(static_cast<std::size_t>(m) + p.mapping.size());
  for (Index i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t a = 0; a < p.mapping.size(); ++a)
    order[static_cast<std::size_t>(m + p.mapping[a])] = m + static_cast<Index>(a);
  return order;
}

/// tr((I_m + P)^T A (I_m + P) B), evaluated by index lookups.
inline double seeded_trace_objective(const Matrix& A, const Matrix& B, Index m, const PermutationMap& p) {
  const auto order = seeded_order(m, p);
  double total = 0;
  const Index n = A.rows();
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) total += A(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]) * B(i, j);
  return total;
}

namespace detail {

struct FaqBlocks {
  Matrix A22, B22, C;  // C = A21 * B12
  double constant = 0;  // tr(A11 B11)
};

inline FaqBlocks partition(const Matrix& A, const Matrix& B, Index m) {
  const Index n = A.rows() - m;
  FaqBlocks blk;
  blk.A22 = A.bottomRightCorner(n, n);
  blk.B22 = B.bottomRightCorner(n, n);
  if (m > 0) {
    blk.C = A.bottomLeftCorner(n, m) * B.topRightCorner(m, n);
    blk.constant = A.topLeftCorner(m, m).cwiseProduct(B.topLeftCorner(m, m)).sum();
  } else {
    blk.C = Matrix::Zero(n, n);
  }
  return blk;
}

struct FaqRun {
  PermutationMap projected;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

inline constexpr double kSpectralRelTol = 1e-9;

// Sign-invariant spectral start: rows of |U| sqrt|Lambda| for the significant
// eigenpairs of each block, matched by linear assignment.
inline Matrix spectral_start(const Matrix& A22, const Matrix& B22) {
  const Index n = A22.rows();
  auto features = [](const Matrix& S) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
    const Vector& lambda = eig.eigenvalues();
    std::vector<Index> order(static_cast<std::size_t>(lambda.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(lambda[a]) > std::abs(lambda[b]); });
    const double top = std::abs(lambda[order.front()]);
    std::vector<Index> keep;
    for (auto k : order)
      if (std::abs(lambda[k]) > kSpectralRelTol * top) keep.push_back(k);
    Matrix F(S.rows(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      F.col(static_cast<Index>(c)) = eig.eigenvectors().col(keep[c]).cwiseAbs() * std::sqrt(std::abs(lambda[keep[c]]));
    return F;
  };
  const Matrix FA = features(A22);
  const Matrix FB = features(B22);
  const Index k = std::min(FA.cols(), FB.cols());
  if (k == 0) return Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  const auto p = solve_lap_max(FA.leftCols(k) * FB.leftCols(k).transpose());
  Matrix D = Matrix::Zero(n, n);
  for (Index a = 0; a < n; ++a) D(a, p.mapping[static_cast<std::size_t>(a)]) = 1.0;
  return D;
}

inline Matrix initial_iterate(const FaqBlocks& blk, Index m, QapInit init, std::uint64_t seed) {
  const Index n = blk.A22.rows();
  const double bary = 1.0 / static_cast<double>(n);
  if (init == QapInit::automatic) init = m > 0 ? QapInit::barycenter : QapInit::spectral;
  switch (init) {
    case QapInit::spectral: return spectral_start(blk.A22, blk.B22);
    case QapInit::identity: return Matrix::Identity(n, n);
    case QapInit::random: {
      Rng rng(seed);
      const auto perm = rng.permutation(static_cast<std::size_t>(n));
      Matrix D = Matrix::Constant(n, n, 0.5 * bary);
      for (Index a = 0; a < n; ++a) D(a, static_cast<Index>(perm[static_cast<std::size_t>(a)])) += 0.5;
      return D;
    }
    case QapInit::barycenter:
    case QapInit::automatic: break;
  }
  return Matrix::Constant(n, n, bary);
}

// Frank-Wolfe ascent of f(D) = c + 2<D, C> + <D, A22 D B22> over doubly-stochastic D.
inline FaqRun frank_wolfe(const FaqBlocks& blk, Matrix D, const QapConfig& cfg, const QapObserver& observer) {
  const Index n = blk.A22.rows();
  FaqRun run;
  Matrix X = blk.A22 * D * blk.B22;
  double f = blk.constant + 2.0 * blk.C.cwiseProduct(D).sum() + X.cwiseProduct(D).sum();
  run.history.push_back(f);
  if (observer) observer(0, D, f);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    run.iterations = it;
    const Matrix grad = 2.0 * (blk.C + X);
    const auto q = solve_lap_max(grad).mapping;
    Matrix QB(n, n);  // rows of B22 permuted by q
    for (Index c = 0; c < n; ++c) QB.row(c) = blk.B22.row(q[static_cast<std::size_t>(c)]);
    const Matrix AQB = blk.A22 * QB;
    double qc = 0, qx = 0, qaqb = 0;
    for (Index a = 0; a < n; ++a) {
      const Index b = q[static_cast<std::size_t>(a)];
      qc += blk.C(a, b);
      qx += X(a, b);
      qaqb += AQB(a, b);
    }
    const double dc = blk.C.cwiseProduct(D).sum();
    const double dx = X.cwiseProduct(D).sum();
    // Three-point fit of the scalar quadratic f(alpha) along D + alpha (Q - D).
    const double f0 = f;
    const double f1 = blk.constant + 2.0 * qc + qaqb;
    const double fh = blk.constant + dc + qc + 0.25 * (dx + 2.0 * qx + qaqb);
    const double curv = 2.0 * (f0 - 2.0 * fh + f1);
    const double slope = f1 - f0 - curv;
    double alpha = 1.0;
    double f_alpha = f1;
    if (curv < 0) {
      const double a_star = std::clamp(-slope / (2.0 * curv), 0.0, 1.0);
      const double f_star = f0 + slope * a_star + curv * a_star * a_star;
      if (f_star > f_alpha) {
        alpha = a_star;
        f_alpha = f_star;
      }
    }
    if (!(f_alpha > f0) || alpha <= 0.0) {
      run.converged = true;
      break;
    }
    Matrix step = -D;
    for (Index a = 0; a < n; ++a) step(a, q[static_cast<std::size_t>(a)]) += 1.0;
    const double move = alpha * step.norm();
    D += alpha * step;
    X = (1.0 - alpha) * X + alpha * AQB;
    const double f_new = blk.constant + 2.0 * blk.C.cwiseProduct(D).sum() + X.cwiseProduct(D).sum();
    const double gain = f_new - f;
    f = f_new;
    run.history.push_back(f);
    if (observer) observer(it, D, f);
    if (gain / std::max(std::abs(f0), 1e-12) < cfg.tol || move < cfg.tol) {
      run.converged = true;
      break;
    }
  }
  run.projected = solve_lap_max(D);
  return run;
}

}  // namespace detail

/// Seeded FAQ on two symmetric (m + n) x (m + n) matrices whose first m
/// rows/columns are the fixed seed pairs. Maximizes tr((I_m + P)^T A (I_m + P) B).
inline QapResult seeded_faq(const Matrix& A, const Matrix& B, Index m, const QapConfig& cfg,
                            const QapObserver& observer = {}) {
  validate(cfg);
  require(A.rows() == A.cols() && B.rows() == B.cols() && A.rows() == B.rows(), ErrorKind::validation,
          "qap: kernels must be square and of equal size");
  require(m >= 0 && A.rows() - m >= 2, ErrorKind::validation,
          "qap: need at least 2 query items after " + std::to_string(m) + " anchors");
  const auto blk = detail::partition(A, B, m);

  QapResult best;
  bool have_best = false;
  for (int r = 0; r <= cfg.restarts; ++r) {
    const QapInit init = r == 0 ? cfg.init : QapInit::random;
    const std::uint64_t seed = r == 0 ? cfg.init_seed : mix_seed(cfg.init_seed, static_cast<std::uint64_t>(r));
    auto run = detail::frank_wolfe(blk, detail::initial_iterate(blk, m, init, seed), cfg, r == 0 ? observer : QapObserver{});
    const double obj = seeded_trace_objective(A, B, m, run.projected);
    if (!have_best || obj > best.objective_trace) {
      best.permutation = run.projected;
      best.objective_trace = obj;
      best.iterations = run.iterations;
      best.converged = run.converged;
      best.objective_history = std::move(run.history);
      have_best = true;
    }
  }
  return best;
}

// Applies the query permutation to the left kernel: result(i, j) = K(order_i, order_j).
inline Matrix permute_seeded(const Matrix& K, Index m, const PermutationMap& p) {
  const auto order = seeded_order(m, p);
  const Index n = K.rows();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = K(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  return out;
}

/// Seeded QAP matching of the query blocks of Z and H (m anchor columns first,
/// then the queries) on unit-normalized centered kernels.
inline QapResult qap_match(const Matrix& Z, const Matrix& H, Index m, const KernelSpec& spec, const QapConfig& cfg,
                           const QapObserver& observer = {}) {
  require(Z.cols() == H.cols(), ErrorKind::validation,
          "qap: left has " + std::to_string(Z.cols()) + " columns, right has " + std::to_string(H.cols()));
  require(m >= 0 && m <= Z.cols(), ErrorKind::validation, "qap: anchor count exceeds the set size");
  const KernelMatrix KZ = gram(Z, spec);
  const KernelMatrix KH = gram(H, spec);
  const KernelMatrix A = normalized_centered(KZ);
  const KernelMatrix B = normalized_centered(KH);
  QapResult r = seeded_faq(A.values, B.values, m, cfg, observer);
  r.cka_achieved = cka(KernelMatrix{permute_seeded(KZ.values, m, r.permutation)}, KH);
  return r;
}

inline QapResult qap_match(const EmbeddingSet& Z, const EmbeddingSet& H, Index m, const KernelSpec& spec,
                           const QapConfig& cfg, const QapObserver& observer = {}) {
  return qap_match(Z.data, H.data, m, spec, cfg, observer);
}

}  // namespace ckalign
