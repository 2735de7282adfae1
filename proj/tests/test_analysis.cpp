// Copyright 2026 The virtdyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "virtdyn/analysis.hpp"
#include "virtdyn/mappings.hpp"

namespace virtdyn {
namespace {

using testing::random_configs;

Matrix6 random_matrix(Rng& rng) {
  std::normal_distribution<double> n;
  Matrix6 m;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) m(r, c) = n(rng);
  return m;
}

Matrix6 random_orthogonal(Rng& rng) {
  return Eigen::HouseholderQR<Matrix6>(random_matrix(rng)).householderQ();
}

TEST(SvdMetrics, Identity) {
  const SvdMetrics m = svd_metrics(Matrix6::Identity());
  EXPECT_DOUBLE_EQ(m.sigma_min, 1.0);
  EXPECT_DOUBLE_EQ(m.sigma_max, 1.0);
  EXPECT_DOUBLE_EQ(m.kappa, 1.0);
}

TEST(SvdMetrics, Diagonal) {
  Vector6 d;
  d << 2, 1, 1, 1, 1, 1;
  const SvdMetrics m = svd_metrics(Matrix6(d.asDiagonal()));
  EXPECT_DOUBLE_EQ(m.sigma_max, 2.0);
  EXPECT_DOUBLE_EQ(m.sigma_min, 1.0);
  EXPECT_DOUBLE_EQ(m.kappa, 2.0);
}

TEST(SvdMetrics, RankDeficientIsInfinitelyConditioned) {
  Matrix6 m = Matrix6::Identity();
  m(4, 4) = 0.0;
  const SvdMetrics s = svd_metrics(m);
  EXPECT_EQ(s.sigma_min, 0.0);
  EXPECT_EQ(s.kappa, kInfinity);
}

TEST(SvdMetrics, OrthogonallyInvariant) {
  Rng rng = make_rng(70, 0);
  for (int k = 0; k < 100; ++k) {
    const Matrix6 m = random_matrix(rng);
    const SvdMetrics a = svd_metrics(m);
    const SvdMetrics b = svd_metrics(Matrix6(random_orthogonal(rng) * m * random_orthogonal(rng)));
    ASSERT_NEAR(a.sigma_min, b.sigma_min, 1e-9);
    ASSERT_NEAR(a.sigma_max, b.sigma_max, 1e-9);
    ASSERT_NEAR(a.kappa, b.kappa, 1e-9 * a.kappa);
  }
}

TEST(Yoshikawa, IdentityAndSingular) {
  EXPECT_DOUBLE_EQ(yoshikawa(Matrix6::Identity()), 1.0);
  EXPECT_NEAR(yoshikawa(geometric_jacobian(ur10_chain(), JointVector::Zero(6))), 0.0, 1e-9);
  EXPECT_NEAR(yoshikawa(geometric_jacobian(ur10_chain(), testing::wrist_singular_config())), 0.0, 1e-9);
  EXPECT_THROW(yoshikawa(Eigen::MatrixXd::Identity(2, 3)), InvalidArgument);
}

TEST(Yoshikawa, MatchesRedundantFormAndSingularValueProduct) {
  Rng rng = make_rng(71, 0);
  for (int k = 0; k < 100; ++k) {
    const Matrix6 m = 0.5 * random_matrix(rng);
    const double w = yoshikawa(m);
    ASSERT_NEAR(w, yoshikawa_redundant(m), 1e-9 * std::max(1.0, w));
    const Vector6 s = Eigen::JacobiSVD<Matrix6>(m).singularValues();
    ASSERT_NEAR(w, s.prod(), 1e-9 * std::max(1.0, w));
  }
  for (const auto& q : random_configs(100, 72)) {
    const Jacobian j = geometric_jacobian(ur10_chain(), q);
    ASSERT_NEAR(yoshikawa(j), yoshikawa_redundant(j), 1e-9);
  }
}

TEST(MatrixStats, IdenticalSamplesHaveZeroSpread) {
  const std::vector<Matrix6> samples{Matrix6::Identity(), Matrix6::Identity()};
  const MatrixStats s = matrix_stats(samples);
  EXPECT_EQ(s.mean, Matrix6::Identity());
  EXPECT_EQ(s.std, Matrix6::Zero());
  EXPECT_EQ(s.sample_count, 2u);
}

TEST(MatrixStats, TwoPointEntry) {
  Matrix6 b = Matrix6::Zero();
  b(2, 3) = 2.0;
  const MatrixStats s = matrix_stats(std::vector<Matrix6>{Matrix6::Zero(), b});
  EXPECT_DOUBLE_EQ(s.mean(2, 3), 1.0);
  EXPECT_DOUBLE_EQ(s.std(2, 3), 1.0);
}

TEST(MatrixStats, SingleSampleHasExactlyZeroStd) {
  Rng rng = make_rng(73, 0);
  const MatrixStats s = matrix_stats(std::vector<Matrix6>{random_matrix(rng)});
  EXPECT_EQ(s.std, Matrix6::Zero());
}

TEST(MatrixStats, MergeMatchesSequential) {
  Rng rng = make_rng(74, 0);
  std::vector<Matrix6> all;
  for (int k = 0; k < 300; ++k) all.push_back(random_matrix(rng) + 3.0 * Matrix6::Ones());
  MatrixStatsAccumulator whole, a, b, c;
  for (std::size_t k = 0; k < all.size(); ++k) {
    whole.add(all[k]);
    (k < 50 ? a : k < 220 ? b : c).add(all[k]);
  }
  a.merge(b);
  a.merge(c);
  a.merge(MatrixStatsAccumulator{});
  EXPECT_LT(testing::max_abs(a.result().mean - whole.result().mean), 1e-12);
  EXPECT_LT(testing::max_abs(a.result().std - whole.result().std), 1e-12);

  // Two-pass reference.
  Matrix6 mean = Matrix6::Zero();
  for (const auto& m : all) mean += m / 300.0;
  Matrix6 var = Matrix6::Zero();
  for (const auto& m : all) var += (m - mean).cwiseProduct(m - mean) / 300.0;
  EXPECT_LT(testing::max_abs(whole.result().std - var.cwiseSqrt()), 1e-12);
}

TEST(MatrixStats, EmptyThrows) {
  EXPECT_THROW(MatrixStatsAccumulator{}.result(), InvalidArgument);
}

TEST(MatrixStats, InverseMappingTypeBIsIdentityOverManySamples) {
  const KinematicChain chain = ur10_chain();
  MatrixStatsAccumulator acc;
  for (const auto& q : random_configs(100000, 75)) {
    try {
      acc.add(mapping_matrix_b(chain, q, MappingSpec::ji()).matrix);
    } catch (const SingularConfiguration&) {
    }
  }
  const MatrixStats s = acc.result();
  EXPECT_LT(testing::max_abs(s.mean - Matrix6::Identity()), 1e-7);
  EXPECT_LT(s.std.maxCoeff(), 1e-7);
}

TEST(RobustMedian, OddCount) { EXPECT_EQ(robust_median({1, 2, 3, 4, 5}), 3.0); }

TEST(RobustMedian, DropsUpperOutlier) {
  const RobustMedian r = robust_median_detail({1, 2, 3, 1e9});
  EXPECT_EQ(r.median, 2.0);
  EXPECT_EQ(r.kept, 3u);
  EXPECT_EQ(r.dropped, 1u);
}

TEST(RobustMedian, LowerMedianForEvenCount) {
  EXPECT_EQ(robust_median({4, 1, 3, 2}), 2.0);
  EXPECT_EQ(robust_median({1, 2, 3, 1e9}, MedianMode::kPlain), 2.0);
}

TEST(RobustMedian, InfinitiesAreFiltered) {
  EXPECT_EQ(robust_median({1, 2, kInfinity, 3}), 2.0);
  EXPECT_EQ(robust_median({1, 2, kInfinity, 3, kInfinity}, MedianMode::kPlain), 2.0);
}

TEST(RobustMedian, EmptyThrows) {
  EXPECT_THROW(robust_median({}), InvalidArgument);
  EXPECT_THROW(robust_median({kInfinity}), InvalidArgument);
}

TEST(RobustMedian, FdConditionIsNearOne) {
  const KinematicChain v = build_virtual_chain(ur10_chain(), {1e3, 1.0, 1.0});
  std::vector<double> kappas;
  for (const auto& q : random_configs(1000, 76)) {
    kappas.push_back(svd_metrics(mapping_matrix_b(v, q, MappingSpec::fd(1e3)).matrix).kappa);
  }
  EXPECT_LT(robust_median(kappas), 2.0);
}

TEST(Conditioning, FdKappaIsScaleInvariantInEndEffectorMass) {
  const KinematicChain base = ur10_chain();
  for (double gamma : {1.0, 1e3}) {
    const KinematicChain a = build_virtual_chain(base, {gamma, 1.0, 1.0});
    const KinematicChain b = build_virtual_chain(base, {gamma, 7.5, 7.5});
    for (const auto& q : random_configs(50, 77)) {
      const double ka = svd_metrics(mapping_matrix_b(a, q, MappingSpec::fd(gamma)).matrix).kappa;
      const double kb = svd_metrics(mapping_matrix_b(b, q, MappingSpec::fd(gamma)).matrix).kappa;
      ASSERT_NEAR(ka, kb, 1e-9 * ka);
    }
  }
}

TEST(Quantiles, LinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(sorted_lower_median(v), 2.0);
}

}  // namespace
}  // namespace virtdyn
