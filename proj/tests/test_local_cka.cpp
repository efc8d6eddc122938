#include <gtest/gtest.h>

#include <cmath>

#include "ckalign/baselines.hpp"
#include "ckalign/local_cka.hpp"
#include "ckalign/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ckalign;
using testutil::error_kind_of;
using testutil::gaussian;
using testutil::make_set;

namespace {

Matrix append(const Matrix& B, const Vector& q) {
  Matrix out(B.rows(), B.cols() + 1);
  out << B, q;
  return out;
}

Matrix rbf_gram_loop(const Matrix& X, double sigma) {
  Matrix G(X.cols(), X.cols());
  for (Index i = 0; i < X.cols(); ++i)
    for (Index j = 0; j < X.cols(); ++j) G(i, j) = std::exp(-(X.col(i) - X.col(j)).squaredNorm() / (2 * sigma * sigma));
  return G;
}

// Local CKA straight from the definition, with centering matrices formed explicitly.
double local_cka_oracle(const Matrix& Zb, const Matrix& Hb, const Vector& z, const Vector& h,
                        std::optional<std::pair<double, double>> rbf) {
  const Matrix zl = append(Zb, z), hr = append(Hb, h);
  if (rbf) return oracle::cka_dense(rbf_gram_loop(zl, rbf->first), rbf_gram_loop(hr, rbf->second));
  return oracle::cka_dense(oracle::linear_gram_loop(zl), oracle::linear_gram_loop(hr));
}

SynthCorpus noiseless_corpus(Index count, std::uint64_t seed) {
  SynthSpec spec;
  spec.latent_dim = 8;
  spec.dim_left = 12;
  spec.dim_right = 20;
  spec.count = count;
  spec.seed = seed;
  return generate(spec);
}

std::vector<Index> range(Index from, Index to) {
  std::vector<Index> v;
  for (Index i = from; i < to; ++i) v.push_back(i);
  return v;
}

}  // namespace

TEST(LocalCka, CacheAgreesWithOracleLinear) {
  Rng rng(1);
  const Matrix Zb = gaussian(rng, 6, 20) + Matrix::Constant(6, 20, 3.0), Hb = gaussian(rng, 9, 20);
  const LocalCkaCache cache(Zb, Hb, KernelSpec::linear());
  for (int t = 0; t < 50; ++t) {
    const Vector z = gaussian(rng, 6, 1).col(0) + Vector::Constant(6, 3.0), h = gaussian(rng, 9, 1).col(0);
    const double cached = local_cka_score(cache, z, h);
    EXPECT_NEAR(cached, local_cka_oracle(Zb, Hb, z, h, std::nullopt), 1e-10);
    EXPECT_NEAR(cached, local_cka_naive(cache, z, h), 1e-10);
  }
}

TEST(LocalCka, CacheAgreesWithOracleRbf) {
  Rng rng(2);
  const Matrix Zb = gaussian(rng, 5, 25), Hb = 2.0 * gaussian(rng, 7, 25);
  for (auto spec : {KernelSpec::rbf_median(), KernelSpec::rbf_fixed(1.7)}) {
    const LocalCkaCache cache(Zb, Hb, spec);
    const double sl = *cache.resolved_left().rbf_bandwidth, sr = *cache.resolved_right().rbf_bandwidth;
    if (!spec.rbf_bandwidth) {
      EXPECT_DOUBLE_EQ(sl, median_pairwise_distance(Zb));
      EXPECT_DOUBLE_EQ(sr, median_pairwise_distance(Hb));
    }
    for (int t = 0; t < 50; ++t) {
      const Vector z = gaussian(rng, 5, 1).col(0), h = 2.0 * gaussian(rng, 7, 1).col(0);
      const double cached = local_cka_score(cache, z, h);
      EXPECT_NEAR(cached, local_cka_oracle(Zb, Hb, z, h, std::make_pair(sl, sr)), 1e-10);
      EXPECT_NEAR(cached, local_cka_naive(cache, z, h), 1e-10);
    }
  }
}

TEST(LocalCka, CopiedAnchorPairOutscoresMismatches) {
  const auto corpus = noiseless_corpus(60, 3);
  const auto Zb = select_columns(corpus.left, range(0, 40)), Hb = select_columns(corpus.right, range(0, 40));
  const LocalCkaCache cache(Zb, Hb, KernelSpec::linear());
  for (Index t = 0; t < 40; ++t) {
    const double own = local_cka_score(cache, Zb.data.col(t), Hb.data.col(t));
    for (Index s = 0; s < 40; ++s)
      if (s != t) EXPECT_GE(own, local_cka_score(cache, Zb.data.col(t), Hb.data.col(s))) << t << " vs " << s;
  }
}

TEST(LocalCka, IdenticalAnchorsAreDegenerate) {
  const Matrix B = Matrix::Constant(3, 6, 0.5);
  EXPECT_EQ(error_kind_of([&] { LocalCkaCache(B, B, KernelSpec::linear()); }), ErrorKind::degenerate_kernel);
  EXPECT_EQ(error_kind_of([&] { LocalCkaCache(B, B, KernelSpec::rbf_median()); }), ErrorKind::degenerate_bandwidth);
  Rng rng(4);
  EXPECT_EQ(error_kind_of([&] { LocalCkaCache(gaussian(rng, 3, 5), gaussian(rng, 3, 6), KernelSpec::linear()); }),
            ErrorKind::validation);
}

TEST(ScoreMatrixOp, SingleQueryEqualsScalarScore) {
  Rng rng(5);
  const LocalCkaCache cache(gaussian(rng, 4, 10), gaussian(rng, 3, 10), KernelSpec::linear());
  const auto Zq = make_set(gaussian(rng, 4, 1), "z"), Hq = make_set(gaussian(rng, 3, 1), "h");
  const auto S = score_matrix(cache, Zq, Hq);
  ASSERT_EQ(S.values.rows(), 1);
  EXPECT_EQ(S.values(0, 0), local_cka_score(cache, Zq.data.col(0), Hq.data.col(0)));
  EXPECT_EQ(S.row_ids, Zq.ids);
  EXPECT_EQ(S.col_ids, Hq.ids);
}

TEST(ScoreMatrixOp, PermutingRightQueriesPermutesColumns) {
  Rng rng(6);
  const LocalCkaCache cache(gaussian(rng, 4, 12), gaussian(rng, 5, 12), KernelSpec::rbf_median());
  const auto Zq = make_set(gaussian(rng, 4, 7), "z"), Hq = make_set(gaussian(rng, 5, 9), "h");
  std::vector<Index> perm;
  for (auto p : rng.permutation(9)) perm.push_back(static_cast<Index>(p));
  const auto S = score_matrix(cache, Zq, Hq), Sp = score_matrix(cache, Zq, select_columns(Hq, perm));
  for (Index j = 0; j < 9; ++j) EXPECT_EQ(Sp.values.col(j), S.values.col(perm[static_cast<std::size_t>(j)]));
}

TEST(ScoreMatrixOp, SwappingRolesTransposes) {
  Rng rng(7);
  const Matrix Zb = gaussian(rng, 4, 12), Hb = gaussian(rng, 5, 12);
  const auto Zq = make_set(gaussian(rng, 4, 6), "z"), Hq = make_set(gaussian(rng, 5, 8), "h");
  const auto S = score_matrix(LocalCkaCache(Zb, Hb, KernelSpec::linear()), Zq, Hq);
  const auto T = score_matrix(LocalCkaCache(Hb, Zb, KernelSpec::linear()), Hq, Zq);
  EXPECT_LT((S.values - T.values.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ScoreMatrixOp, JointAnchorPermutationLeavesScoresUnchanged) {
  Rng rng(8);
  const Matrix Zb = gaussian(rng, 4, 15), Hb = gaussian(rng, 6, 15);
  std::vector<Index> perm;
  for (auto p : rng.permutation(15)) perm.push_back(static_cast<Index>(p));
  Matrix Zp(4, 15), Hp(6, 15);
  for (Index j = 0; j < 15; ++j) {
    Zp.col(j) = Zb.col(perm[static_cast<std::size_t>(j)]);
    Hp.col(j) = Hb.col(perm[static_cast<std::size_t>(j)]);
  }
  const auto Zq = make_set(gaussian(rng, 4, 5), "z"), Hq = make_set(gaussian(rng, 6, 5), "h");
  for (auto spec : {KernelSpec::linear(), KernelSpec::rbf_median()}) {
    const auto S = score_matrix(LocalCkaCache(Zb, Hb, spec), Zq, Hq);
    const auto P = score_matrix(LocalCkaCache(Zp, Hp, spec), Zq, Hq);
    EXPECT_LT((S.values - P.values).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ScoreMatrixOp, NoiselessCorpusRetrievesEveryPartner) {
  const auto corpus = noiseless_corpus(120, 9);
  const auto Zb = select_columns(corpus.left, range(0, 30)), Hb = select_columns(corpus.right, range(0, 30));
  const auto Zq = select_columns(corpus.left, range(30, 120)), Hq = select_columns(corpus.right, range(30, 120));
  const auto S = score_matrix(LocalCkaCache(Zb, Hb, KernelSpec::linear()), Zq, Hq);
  const auto top = retrieve_topk(S, 1);
  for (std::size_t i = 0; i < top.size(); ++i) EXPECT_EQ(top[i][0], static_cast<Index>(i));
  EXPECT_EQ(match_by_scores(S).mapping, identity_permutation(90).mapping);
}

TEST(Retrieval, Examples) {
  ScoreMatrix S{Matrix(1, 3), {"a"}, {"x", "y", "z"}};
  S.values << 0.1, 0.9, 0.5;
  EXPECT_EQ(retrieve_topk(S, 2)[0], (std::vector<Index>{1, 2}));
  EXPECT_EQ(retrieve_topk(S, 3)[0], (std::vector<Index>{1, 2, 0}));
  ScoreMatrix T{Matrix::Constant(1, 2, 0.5), {"a"}, {"x", "y"}};
  EXPECT_EQ(retrieve_topk(T, 1)[0], std::vector<Index>{0});
  EXPECT_EQ(error_kind_of([&] { retrieve_topk(S, 4); }), ErrorKind::size);
  EXPECT_EQ(error_kind_of([&] { retrieve_topk(S, 0); }), ErrorKind::size);
  EXPECT_EQ(error_kind_of([&] { match_by_scores(S); }), ErrorKind::validation);
}

TEST(TraceVariant, EqualsTwiceRelativeInnerProductPlusConstant) {
  Rng rng(10);
  const auto Zb = l2_normalize(make_set(gaussian(rng, 10, 32), "zb"));
  const auto Hb = l2_normalize(make_set(gaussian(rng, 14, 32), "hb"));
  const LocalCkaCache cache(Zb, Hb, KernelSpec::linear());
  // tr(Zb^T Zb Hb^T Hb) with an explicit loop.
  const Matrix gl = oracle::linear_gram_loop(Zb.data), gr = oracle::linear_gram_loop(Hb.data);
  const double constant = oracle::trace_loop(gl * gr) + 1.0;
  for (int t = 0; t < 100; ++t) {
    Vector z = gaussian(rng, 10, 1).col(0), h = gaussian(rng, 14, 1).col(0);
    z.normalize();
    h.normalize();
    double rel = 0;
    for (Index a = 0; a < 32; ++a) rel += Zb.data.col(a).dot(z) * Hb.data.col(a).dot(h);
    EXPECT_NEAR(local_cka_trace_linear(cache, z, h), 2.0 * rel + constant, 1e-10);
  }
}

TEST(TraceVariant, OrthogonalQueriesScoreTheConstant) {
  Matrix Zb(4, 2), Hb(4, 2);
  Zb << 1, 0, 0, 1, 0, 0, 0, 0;
  Hb << 0, 0, 1, 0, 0, 1, 0, 0;
  const LocalCkaCache cache(Zb, Hb, KernelSpec::linear());
  Vector z(4), h(4);
  z << 0, 0, 1, 0;
  h << 1, 0, 0, 0;
  const double constant = cache.linear_trace_constant() + 1.0;
  EXPECT_EQ(local_cka_trace_linear(cache, z, h), constant);
  EXPECT_EQ(constant, 3.0);  // tr(I_2 I_2) + 1
}

TEST(TraceVariant, SingleAnchorHandExpansion) {
  // b = (1,0), z = (1,2): [[1, 1], [1, 5]].  c = (0,2), h = (1,1): [[4, 2], [2, 2]].
  // tr(K L) = 1*4 + 1*2 + 1*2 + 5*2 = 18.
  Matrix b(2, 1), c(2, 1);
  b << 1, 0;
  c << 0, 2;
  Vector z(2), h(2);
  z << 1, 2;
  h << 1, 1;
  const LocalCkaCache cache(b, c, KernelSpec::linear());
  EXPECT_DOUBLE_EQ(local_cka_trace_linear(cache, z, h), 18.0);
  EXPECT_EQ(error_kind_of([&] { local_cka_score(cache, z, h); }), ErrorKind::size);
}

TEST(TraceVariant, RejectsNonLinearKernels) {
  Rng rng(11);
  const LocalCkaCache cache(gaussian(rng, 3, 6), gaussian(rng, 3, 6), KernelSpec::rbf_median());
  EXPECT_EQ(error_kind_of([&] { local_cka_trace_linear(cache, Vector::Ones(3), Vector::Ones(3)); }),
            ErrorKind::unsupported_spec);
}

TEST(TraceVariant, MatrixFormAndLapObjectivesAgreeWithRelative) {
  Rng rng(12);
  const auto Zb = l2_normalize(make_set(gaussian(rng, 10, 32), "zb"));
  const auto Hb = l2_normalize(make_set(gaussian(rng, 12, 32), "hb"));
  const auto Zq = l2_normalize(make_set(gaussian(rng, 10, 20), "zq"));
  const auto Hq = l2_normalize(make_set(gaussian(rng, 12, 20), "hq"));
  const LocalCkaCache cache(Zb, Hb, KernelSpec::linear());
  const auto T = trace_score_matrix(cache, Zq, Hq);
  const auto R = relative_inner_products(Zb, Hb, Zq, Hq);
  const double constant = cache.linear_trace_constant() + 1.0;
  EXPECT_LT((T.values - (2.0 * R.values).array().matrix() - Matrix::Constant(20, 20, constant)).cwiseAbs().maxCoeff(),
            1e-10);
  const auto pt = match_by_scores(T), pr = match_by_scores(R);
  EXPECT_NEAR(pt.objective, 2.0 * pr.objective + 20.0 * constant, 1e-9);
  EXPECT_EQ(pt.mapping, pr.mapping);
}
