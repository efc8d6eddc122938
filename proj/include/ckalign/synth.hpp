#pragma once

#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "ckalign/assignment.hpp"
#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/random.hpp"

namespace ckalign {

enum class MapKind { orthogonal, random_gaussian };

struct SynthSpec {
  Index latent_dim = 8;
  Index dim_left = 16;
  Index dim_right = 16;
  Index count = 100;
  double noise_sigma = 0.0;
  MapKind map_kind = MapKind::orthogonal;
  std::vector<double> anisotropy;  // per latent coordinate; empty = isotropic
  std::uint64_t seed = 0;
  std::optional<Index> n_classes;
  double class_spread = 0.25;  // within-class latent std when n_classes is set
  // Per-encoder feature scale quirk: each side's output features are scaled by
  // ratio^r, with ranks r assigned by a seeded per-side permutation. 1 = off.
  double feature_anisotropy = 1.0;
};

inline void validate(const SynthSpec& s) {
  require(s.latent_dim >= 1 && s.dim_left >= 1 && s.dim_right >= 1 && s.count >= 1, ErrorKind::spec,
          "synth: dimensions and count must be positive");
  require(s.noise_sigma >= 0 && std::isfinite(s.noise_sigma), ErrorKind::spec, "synth: noise_sigma must be >= 0");
  if (s.map_kind == MapKind::orthogonal)
    require(s.latent_dim <= std::min(s.dim_left, s.dim_right), ErrorKind::spec,
            "synth: orthogonal maps need latent_dim <= min(dim_left, dim_right)");
  require(s.anisotropy.empty() || static_cast<Index>(s.anisotropy.size()) == s.latent_dim, ErrorKind::spec,
          "synth: anisotropy must have latent_dim entries");
  for (double a : s.anisotropy) require(a > 0 && std::isfinite(a), ErrorKind::spec, "synth: anisotropy entries must be > 0");
  if (s.n_classes) require(*s.n_classes >= 1 && *s.n_classes <= s.count, ErrorKind::spec, "synth: n_classes must be in [1, count]");
  require(s.class_spread >= 0, ErrorKind::spec, "synth: class_spread must be >= 0");
  require(s.feature_anisotropy > 0 && std::isfinite(s.feature_anisotropy), ErrorKind::spec,
          "synth: feature_anisotropy must be > 0");
}

// Geometric profile ratio^k, k = 0..dim-1.
inline std::vector<double> geometric_profile(Index dim, double ratio) {
  std::vector<double> p(static_cast<std::size_t>(dim));
  for (Index k = 0; k < dim; ++k) p[static_cast<std::size_t>(k)] = std::pow(ratio, static_cast<double>(k));
  return p;
}

inline nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json j = {{"latent_dim", s.latent_dim},
                      {"dim_left", s.dim_left},
                      {"dim_right", s.dim_right},
                      {"count", s.count},
                      {"noise_sigma", s.noise_sigma},
                      {"map_kind", s.map_kind == MapKind::orthogonal ? "orthogonal" : "random_gaussian"},
                      {"anisotropy", s.anisotropy},
                      {"seed", s.seed},
                      {"class_spread", s.class_spread},
                      {"feature_anisotropy", s.feature_anisotropy}};
  j["n_classes"] = s.n_classes ? nlohmann::json(*s.n_classes) : nlohmann::json(nullptr);
  return j;
}

// "anisotropy" accepts a list of latent_dim scales or a number (geometric ratio).
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.dim_left = j.value("dim_left", s.dim_left);
    s.dim_right = j.value("dim_right", s.dim_right);
    s.count = j.value("count", s.count);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.seed = j.value("seed", s.seed);
    s.class_spread = j.value("class_spread", s.class_spread);
    s.feature_anisotropy = j.value("feature_anisotropy", s.feature_anisotropy);
    const auto kind = j.value("map_kind", std::string("orthogonal"));
    if (kind == "orthogonal") {
      s.map_kind = MapKind::orthogonal;
    } else if (kind == "random_gaussian") {
      s.map_kind = MapKind::random_gaussian;
    } else {
      fail(ErrorKind::spec, "synth: unknown map_kind '" + kind + "'");
    }
    if (j.contains("anisotropy") && !j["anisotropy"].is_null()) {
      const auto& a = j["anisotropy"];
      s.anisotropy = a.is_number() ? geometric_profile(s.latent_dim, a.get<double>()) : a.get<std::vector<double>>();
    }
    if (j.contains("n_classes") && !j["n_classes"].is_null()) s.n_classes = j["n_classes"].get<Index>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("synth spec: ") + e.what());
  }
  validate(s);
  return s;
}

struct SynthCorpus {
  EmbeddingSet left;
  EmbeddingSet right;
  PairingManifest manifest;
};

namespace detail {

inline Matrix draw_map(Rng& rng, Index rows, Index cols, MapKind kind) {
  Matrix G(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) G(i, j) = rng.normal();
  if (kind == MapKind::random_gaussian) return G / std::sqrt(static_cast<double>(cols));
  const Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Fix column signs so Q is a deterministic function of G.
  const Matrix R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Index c = 0; c < cols; ++c)
    if (R(c, c) < 0) Q.col(c) = -Q.col(c);
  return Q;
}

struct SynthDraw {
  Matrix map_left, map_right, class_centers, latents;
};

// Draw order is part of the contract: left map, right map, class centers, latents
// (then, in generate: left noise, right noise, feature-scale permutations).
inline SynthDraw draw_latents(const SynthSpec& s, Rng& rng) {
  SynthDraw d;
  d.map_left = draw_map(rng, s.dim_left, s.latent_dim, s.map_kind);
  d.map_right = draw_map(rng, s.dim_right, s.latent_dim, s.map_kind);
  d.latents.resize(s.latent_dim, s.count);
  if (s.n_classes) {
    d.class_centers.resize(s.latent_dim, *s.n_classes);
    for (Index c = 0; c < *s.n_classes; ++c)
      for (Index i = 0; i < s.latent_dim; ++i) d.class_centers(i, c) = rng.normal();
  }
  for (Index j = 0; j < s.count; ++j) {
    for (Index i = 0; i < s.latent_dim; ++i) {
      const double e = rng.normal();
      d.latents(i, j) = s.n_classes ? d.class_centers(i, j % *s.n_classes) + s.class_spread * e : e;
    }
  }
  if (!s.anisotropy.empty()) {
    const Vector a = Eigen::Map<const Vector>(s.anisotropy.data(), s.latent_dim);
    d.latents = a.asDiagonal() * d.latents;
    if (s.n_classes) d.class_centers = a.asDiagonal() * d.class_centers;
  }
  return d;
}

inline std::string item_id(const SynthSpec& s, Index j) {
  if (s.n_classes) return "class" + std::to_string(j % *s.n_classes) + "_item" + std::to_string(j);
  return "item" + std::to_string(j);
}

}  // namespace detail

/// Aligned pair of embedding sets sharing Gaussian latents; column i of left pairs with column i of right.
inline SynthCorpus generate(const SynthSpec& s) {
  validate(s);
  Rng rng(s.seed);
  const auto d = detail::draw_latents(s, rng);
  SynthCorpus out;
  out.left.data = d.map_left * d.latents;
  out.right.data = d.map_right * d.latents;
  for (Index j = 0; j < out.left.data.cols(); ++j)
    for (Index i = 0; i < out.left.data.rows(); ++i) out.left.data(i, j) += s.noise_sigma * rng.normal();
  for (Index j = 0; j < out.right.data.cols(); ++j)
    for (Index i = 0; i < out.right.data.rows(); ++i) out.right.data(i, j) += s.noise_sigma * rng.normal();
  if (s.feature_anisotropy != 1.0) {
    for (Matrix* side : {&out.left.data, &out.right.data}) {
      const auto ranks = rng.permutation(static_cast<std::size_t>(side->rows()));
      for (Index i = 0; i < side->rows(); ++i)
        side->row(i) *= std::pow(s.feature_anisotropy, static_cast<double>(ranks[static_cast<std::size_t>(i)]));
    }
  }
  out.left.modality_tag = "image";
  out.right.modality_tag = "text";
  for (Index j = 0; j < s.count; ++j) {
    out.left.ids.push_back(detail::item_id(s, j));
    out.right.ids.push_back(detail::item_id(s, j));
    out.manifest.pairs.emplace_back(out.left.ids.back(), out.right.ids.back());
  }
  return out;
}

/// Noise-free right-side images of the class centers, ids "class{c}_text0".
inline EmbeddingSet generate_class_texts(const SynthSpec& s) {
  validate(s);
  require(s.n_classes.has_value(), ErrorKind::spec, "synth: class texts need n_classes");
  Rng rng(s.seed);
  const auto d = detail::draw_latents(s, rng);
  EmbeddingSet out;
  out.data = d.map_right * d.class_centers;
  out.modality_tag = "text";
  for (Index c = 0; c < *s.n_classes; ++c) out.ids.push_back("class" + std::to_string(c) + "_text0");
  return out;
}

inline constexpr int kDerangementAttempts = 100;

/// Shuffles floor(fraction * N) seeded-chosen columns among themselves. The
/// returned map sends each original column i to its new position mapping[i].
inline std::pair<EmbeddingSet, PermutationMap> shuffle_fraction(const EmbeddingSet& X, double fraction,
                                                                std::uint64_t seed) {
  require(fraction >= 0 && fraction <= 1, ErrorKind::validation, "shuffle fraction must be in [0, 1]");
  const auto n = static_cast<std::size_t>(X.count());
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  PermutationMap where = identity_permutation(X.count());
  if (k >= 2) {
    Rng rng(seed);
    const auto chosen = rng.sample_without_replacement(n, k);
    std::vector<std::size_t> perm;
    for (int attempt = 0; attempt < kDerangementAttempts; ++attempt) {
      perm = rng.permutation(k);
      bool fixed_point = false;
      for (std::size_t t = 0; t < k && !fixed_point; ++t) fixed_point = perm[t] == t;
      if (!fixed_point) break;
    }
    for (std::size_t t = 0; t < k; ++t) where.mapping[chosen[t]] = static_cast<Index>(chosen[perm[t]]);
  }
  EmbeddingSet out = X;
  for (std::size_t i = 0; i < n; ++i) {
    const auto to = where.mapping[i];
    out.data.col(to) = X.data.col(static_cast<Index>(i));
    out.ids[static_cast<std::size_t>(to)] = X.ids[i];
  }
  return {std::move(out), std::move(where)};
}

}  // namespace ckalign
