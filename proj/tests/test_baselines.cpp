#include <gtest/gtest.h>

#include <cmath>

#include "ckalign/baselines.hpp"
#include "ckalign/local_cka.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ckalign;
using testutil::error_kind_of;
using testutil::gaussian;
using testutil::make_set;
using testutil::TempDir;

namespace {

// Straight-line relative representations: normalize, project, normalize, dot.
Matrix relative_oracle(const Matrix& Zb, const Matrix& Hb, const Matrix& Zq, const Matrix& Hq) {
  auto unit = [](Vector v) { return Vector(v / v.norm()); };
  const Index M = Zb.cols();
  std::vector<Vector> r, s;
  for (Index i = 0; i < Zq.cols(); ++i) {
    Vector v(M);
    for (Index a = 0; a < M; ++a) v[a] = unit(Zb.col(a)).dot(unit(Zq.col(i)));
    r.push_back(unit(v));
  }
  for (Index j = 0; j < Hq.cols(); ++j) {
    Vector v(M);
    for (Index a = 0; a < M; ++a) v[a] = unit(Hb.col(a)).dot(unit(Hq.col(j)));
    s.push_back(unit(v));
  }
  Matrix out(Zq.cols(), Hq.cols());
  for (Index i = 0; i < Zq.cols(); ++i)
    for (Index j = 0; j < Hq.cols(); ++j) out(i, j) = r[static_cast<std::size_t>(i)].dot(s[static_cast<std::size_t>(j)]);
  return out;
}

struct Planted {
  EmbeddingSet Zb, Hb, Zq, Hq;
  Matrix A;
};

Planted planted(std::uint64_t seed, Index d1, Index d2, Index m, Index n) {
  Rng rng(seed);
  Planted p;
  p.A = gaussian(rng, d1, d2);
  p.Zb = make_set(gaussian(rng, d1, m), "zb");
  p.Hb = make_set(p.A.transpose() * p.Zb.data, "hb");
  p.Zq = make_set(gaussian(rng, d1, n), "zq");
  p.Hq = make_set(p.A.transpose() * p.Zq.data, "hq");
  return p;
}

}  // namespace

TEST(Relative, AnchorPairScoresOne) {
  Rng rng(1);
  // An orthogonal image has the same anchor Gram, so r and s coincide.
  const Matrix Z = gaussian(rng, 5, 6);
  const auto Zb = make_set(Z, "zb"), Hb = make_set(oracle::random_orthogonal(rng, 5) * Z, "hb");
  const auto S = relative_scores(Zb, Hb, select_columns(Zb, {2}), select_columns(Hb, {2}));
  EXPECT_NEAR(S.values(0, 0), 1.0, 1e-12);
}

TEST(Relative, OrthonormalAnchorsGiveZero) {
  const auto Zb = make_set(Matrix::Identity(3, 2), "zb"), Hb = make_set(Matrix::Identity(3, 2), "hb");
  const auto S = relative_scores(Zb, Hb, select_columns(Zb, {0}), select_columns(Hb, {1}));
  EXPECT_EQ(S.values(0, 0), 0.0);
}

TEST(Relative, MatchesStraightLineOracle) {
  Rng rng(2);
  const Matrix Zb = gaussian(rng, 6, 11), Hb = gaussian(rng, 4, 11), Zq = gaussian(rng, 6, 9), Hq = gaussian(rng, 4, 7);
  const auto S = relative_scores(make_set(Zb, "a"), make_set(Hb, "b"), make_set(Zq, "c"), make_set(Hq, "d"));
  EXPECT_LT((S.values - relative_oracle(Zb, Hb, Zq, Hq)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Relative, JointAnchorPermutationInvariance) {
  Rng rng(3);
  const auto Zb = make_set(gaussian(rng, 6, 11), "a"), Hb = make_set(gaussian(rng, 4, 11), "b");
  const auto Zq = make_set(gaussian(rng, 6, 5), "c"), Hq = make_set(gaussian(rng, 4, 5), "d");
  std::vector<Index> perm;
  for (auto p : rng.permutation(11)) perm.push_back(static_cast<Index>(p));
  const auto S = relative_scores(Zb, Hb, Zq, Hq);
  const auto P = relative_scores(select_columns(Zb, perm), select_columns(Hb, perm), Zq, Hq);
  EXPECT_LT((S.values - P.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Relative, QueryOrthogonalToAllAnchorsIsDegenerate) {
  const auto Zb = make_set(Matrix::Identity(3, 2), "zb"), Hb = make_set(Matrix::Identity(3, 2), "hb");
  Matrix q(3, 1);
  q << 0, 0, 1;
  try {
    relative_scores(Zb, Hb, make_set(q, "lonely"), select_columns(Hb, {0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_vector);
    EXPECT_NE(std::string(e.what()).find("lonely0"), std::string::npos);
  }
}

TEST(LinearMap, RecoversPlantedMap) {
  const auto p = planted(4, 6, 5, 40, 10);
  const auto map = fit_linear_map(p.Zb, p.Hb, 0.0);
  EXPECT_LT((map.W - p.A).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(linear_map_residual(map, p.Zb, p.Hb), 1e-8);
}

TEST(LinearMap, IdentityAnchorsGiveHbTransposed) {
  Rng rng(5);
  const auto Zb = make_set(Matrix::Identity(4, 4), "zb"), Hb = make_set(gaussian(rng, 3, 4), "hb");
  const auto map = fit_linear_map(Zb, Hb, 0.0);
  EXPECT_EQ(map.W.transpose(), Hb.data);
}

TEST(LinearMap, LargerRidgeShrinksTheMap) {
  const auto p = planted(6, 6, 5, 30, 4);
  double last = std::numeric_limits<double>::infinity();
  for (double ridge : {1e-6, 1.0, 1e6}) {
    const double norm = fit_linear_map(p.Zb, p.Hb, ridge).W.norm();
    EXPECT_LT(norm, last);
    last = norm;
  }
  EXPECT_LT(last, 1e-3);
}

TEST(LinearMap, PlantedQueriesAreRetrievedAndMatched) {
  const auto p = planted(7, 6, 8, 40, 25);
  const auto S = linear_map_scores(fit_linear_map(p.Zb, p.Hb), p.Zq, p.Hq);
  const auto top = retrieve_topk(S, 1);
  for (std::size_t i = 0; i < top.size(); ++i) EXPECT_EQ(top[i][0], static_cast<Index>(i));
  EXPECT_EQ(match_by_scores(S).mapping, identity_permutation(25).mapping);
  EXPECT_EQ(match_by_scores(relative_scores(p.Zb, p.Hb, p.Zq, p.Hq)).mapping, identity_permutation(25).mapping);
}

TEST(LinearMap, ZeroMapIsDegenerate) {
  Rng rng(8);
  const LinearMap zero{Matrix::Zero(3, 2), 0.0};
  EXPECT_EQ(error_kind_of([&] { linear_map_scores(zero, make_set(gaussian(rng, 3, 2)), make_set(gaussian(rng, 2, 2))); }),
            ErrorKind::degenerate_vector);
}

TEST(LinearMap, ScoresAreScaleInvariantInTargets) {
  const auto p = planted(9, 5, 4, 20, 6);
  const auto map = fit_linear_map(p.Zb, p.Hb);
  EmbeddingSet scaled = p.Hq;
  scaled.data *= 3.0;
  EXPECT_LT((linear_map_scores(map, p.Zq, p.Hq).values - linear_map_scores(map, p.Zq, scaled).values).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(LinearMap, TrainingResidualGrowsWithNestedAnchors) {
  // With more equations the best fit can only get worse in total squared error.
  Rng rng(10);
  const Matrix Z = gaussian(rng, 5, 60), H = gaussian(rng, 4, 60);
  double last = -1;
  for (Index m : {6, 10, 20, 40, 60}) {
    std::vector<Index> first;
    for (Index j = 0; j < m; ++j) first.push_back(j);
    const auto Zb = select_columns(make_set(Z, "z"), first), Hb = select_columns(make_set(H, "h"), first);
    const double r = linear_map_residual(fit_linear_map(Zb, Hb, 0.0), Zb, Hb);
    EXPECT_GE(r, last - 1e-12);
    last = r;
  }
}

TEST(LinearMap, SaveLoadRoundTrip) {
  TempDir dir;
  const auto p = planted(11, 4, 3, 10, 2);
  const auto map = fit_linear_map(p.Zb, p.Hb, 0.125);
  save_linear_map(map, dir.file("w.emb"));
  const auto back = load_linear_map(dir.file("w.emb"));
  EXPECT_EQ(back.W, map.W);
  EXPECT_EQ(back.ridge, 0.125);
  EXPECT_EQ(error_kind_of([&] { fit_linear_map(select_columns(p.Zb, {0}), select_columns(p.Hb, {0})); }),
            ErrorKind::validation);
}
