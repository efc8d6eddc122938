#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>
#include <string>

#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/preprocess.hpp"
#include "ckalign/score_matrix.hpp"

namespace ckalign {

namespace detail {

inline Matrix unit_columns(const Matrix& X, const std::vector<std::string>& ids, const char* what) {
  Matrix out = X;
  for (Index j = 0; j < X.cols(); ++j) {
    const double norm = X.col(j).norm();
    require(norm > 0, ErrorKind::degenerate_vector,
            std::string(what) + " vector of '" + ids[static_cast<std::size_t>(j)] + "' is zero");
    out.col(j) /= norm;
  }
  return out;
}

inline void check_anchor_sets(const EmbeddingSet& Zb, const EmbeddingSet& Hb) {
  require(Zb.count() == Hb.count(), ErrorKind::validation,
          "anchor counts differ: " + std::to_string(Zb.count()) + " vs " + std::to_string(Hb.count()));
}

}  // namespace detail

/// Relative representations: each query becomes its vector of cosine
/// similarities to the anchors of its own modality; pairs are scored by the
/// cosine between those relative vectors.
inline ScoreMatrix relative_scores(const EmbeddingSet& Zb, const EmbeddingSet& Hb, const EmbeddingSet& Zq,
                                   const EmbeddingSet& Hq) {
  detail::check_anchor_sets(Zb, Hb);
  const Matrix R = l2_normalize(Zb).data.transpose() * l2_normalize(Zq).data;  // M x Nl
  const Matrix S = l2_normalize(Hb).data.transpose() * l2_normalize(Hq).data;  // M x Nr
  const Matrix Ru = detail::unit_columns(R, Zq.ids, "relative");
  const Matrix Su = detail::unit_columns(S, Hq.ids, "relative");
  return {Ru.transpose() * Su, Zq.ids, Hq.ids};
}

// Uncosined inner products of the relative vectors, Zq^T Zb Hb^T Hq on unit-normalized inputs.
inline ScoreMatrix relative_inner_products(const EmbeddingSet& Zb, const EmbeddingSet& Hb, const EmbeddingSet& Zq,
                                           const EmbeddingSet& Hq) {
  detail::check_anchor_sets(Zb, Hb);
  const Matrix R = l2_normalize(Zb).data.transpose() * l2_normalize(Zq).data;
  const Matrix S = l2_normalize(Hb).data.transpose() * l2_normalize(Hq).data;
  return {R.transpose() * S, Zq.ids, Hq.ids};
}

/// W (d1 x d2) mapping left embeddings into the right space, h ~ W^T z.
struct LinearMap {
  Matrix W;
  double ridge = 0;
};

inline constexpr double kDefaultRidge = 1e-6;

/// Ridge-regularized least squares W = (Zb Zb^T + ridge I)^-1 Zb Hb^T.
inline LinearMap fit_linear_map(const EmbeddingSet& Zb, const EmbeddingSet& Hb, double ridge = kDefaultRidge) {
  detail::check_anchor_sets(Zb, Hb);
  require(Zb.count() >= 2, ErrorKind::validation, "fit_linear_map needs at least 2 anchors");
  require(ridge >= 0 && std::isfinite(ridge), ErrorKind::validation, "ridge must be finite and >= 0");
  Matrix gramian = Zb.data * Zb.data.transpose();
  gramian.diagonal().array() += ridge;
  const Eigen::LLT<Matrix> llt(gramian);
  require(llt.info() == Eigen::Success, ErrorKind::numerical,
          "normal equations are not positive definite (raise the ridge)");
  LinearMap map{llt.solve(Zb.data * Hb.data.transpose()), ridge};
  require(map.W.allFinite(), ErrorKind::numerical, "linear map solve produced non-finite values");
  return map;
}

inline double linear_map_residual(const LinearMap& map, const EmbeddingSet& Zb, const EmbeddingSet& Hb) {
  return (map.W.transpose() * Zb.data - Hb.data).norm();
}

/// values(i, j) = cosine(W^T z_i, h_j).
inline ScoreMatrix linear_map_scores(const LinearMap& map, const EmbeddingSet& Zq, const EmbeddingSet& Hq) {
  require(map.W.rows() == Zq.dim() && map.W.cols() == Hq.dim(), ErrorKind::size,
          "linear map shape does not match the query dims");
  const Matrix mapped = detail::unit_columns(map.W.transpose() * Zq.data, Zq.ids, "mapped");
  const Matrix targets = detail::unit_columns(Hq.data, Hq.ids, "target");
  return {mapped.transpose() * targets, Zq.ids, Hq.ids};
}

// EMB1 container holding W column-wise; the ridge travels in the modality tag.
inline void save_linear_map(const LinearMap& map, const std::string& path) {
  EmbeddingSet set;
  set.data = map.W;
  for (Index j = 0; j < map.W.cols(); ++j) set.ids.push_back("w" + std::to_string(j));
  std::ostringstream tag;
  tag.precision(17);
  tag << "linear_map ridge=" << map.ridge;
  set.modality_tag = tag.str();
  save_embeddings(set, path);
}

inline LinearMap load_linear_map(const std::string& path) {
  auto set = load_embeddings(path);
  const std::string prefix = "linear_map ridge=";
  require(set.modality_tag.rfind(prefix, 0) == 0, ErrorKind::format, "'" + path + "' is not a linear map");
  return {std::move(set.data), std::stod(set.modality_tag.substr(prefix.size()))};
}

}  // namespace ckalign
