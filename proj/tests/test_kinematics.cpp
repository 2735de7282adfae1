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

#include <chrono>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "virtdyn/analysis.hpp"
#include "virtdyn/kinematics.hpp"

namespace virtdyn {
namespace {

using testing::kPi;
using testing::max_abs;
using testing::random_configs;

TEST(ForwardKinematics, ZeroConfigurationIsProductOfOrigins) {
  const KinematicChain chain = ur10_chain();
  Transform expected = Transform::Identity();
  for (const auto& j : chain.joints()) expected = expected * j.origin;
  expected = expected * chain.tool();
  const Pose p = forward_kinematics(chain, JointVector::Zero(6));
  EXPECT_LT((p.position - expected.translation()).norm(), 1e-15);
  EXPECT_LT(max_abs(p.rotation() - expected.linear()), 1e-15);
}

TEST(ForwardKinematics, MatchesDhOracleAtZero) {
  const JointVector q = JointVector::Zero(6);
  const Pose p = forward_kinematics(ur10_chain(), q);
  const auto o = testing::ur10_dh_oracle(q);
  EXPECT_LT((p.position - o.position).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(rotation_log(p.rotation() * o.rotation.transpose()).norm(), 1e-9);
}

TEST(ForwardKinematics, MatchesDhOracleAtRandomConfigurations) {
  const KinematicChain chain = ur10_chain();
  for (const auto& q : random_configs(1000, 21)) {
    const Pose p = forward_kinematics(chain, q);
    const auto o = testing::ur10_dh_oracle(q);
    ASSERT_LT((p.position - o.position).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_LT(rotation_log(p.rotation() * o.rotation.transpose()).norm(), 1e-9);
  }
}

TEST(ForwardKinematics, OneJointRotatesAboutItsAxis) {
  const KinematicChain chain = testing::one_r_chain(0.7);
  const Pose p = forward_kinematics(chain, JointVector::Constant(1, kPi / 2));
  EXPECT_LT((p.position - Vector3(0, 0.7, 0)).norm(), 1e-15);
  const Vector3 rv = rotation_log(p.rotation());
  EXPECT_LT((rv - Vector3(0, 0, kPi / 2)).norm(), 1e-15);
}

TEST(ForwardKinematics, RejectsWrongDimension) {
  EXPECT_THROW(forward_kinematics(ur10_chain(), JointVector::Zero(5)), InvalidArgument);
  EXPECT_THROW(geometric_jacobian(ur10_chain(), JointVector::Zero(7)), InvalidArgument);
}

TEST(GeometricJacobian, OneRChainColumn) {
  const double length = 0.8;
  const Jacobian j = geometric_jacobian(testing::one_r_chain(length), JointVector::Zero(1));
  Vector6 expected;
  expected << 0, length, 0, 0, 0, 1;
  EXPECT_LT((j.col(0) - expected).norm(), 1e-15);
  const Jacobian fd = fd_jacobian_oracle(testing::one_r_chain(length), JointVector::Zero(1));
  EXPECT_LT((fd.col(0) - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GeometricJacobian, MatchesFiniteDifferencesOn1000Configurations) {
  const KinematicChain chain = ur10_chain();
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& q : random_configs(1000, 5)) {
    worst = std::max(worst, max_abs(geometric_jacobian(chain, q) - fd_jacobian_oracle(chain, q, 1e-6)));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(worst, 1e-5);
  EXPECT_LT(seconds, 5.0);
}

TEST(GeometricJacobian, LinearBlockMatchesDhOracleDifferences) {
  const KinematicChain chain = ur10_chain();
  const double h = 1e-6;
  for (const auto& q : random_configs(100, 77)) {
    const Jacobian j = geometric_jacobian(chain, q);
    for (int i = 0; i < 6; ++i) {
      JointVector qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      const Vector3 col = (testing::ur10_dh_oracle(qp).position - testing::ur10_dh_oracle(qm).position) / (2 * h);
      ASSERT_LT((j.col(i).head<3>() - col).cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

TEST(GeometricJacobian, FullyStretchedArmIsRankDeficient) {
  const JointVector q = JointVector::Zero(6);
  const Jacobian j = geometric_jacobian(ur10_chain(), q);
  const SvdMetrics m = svd_metrics(j);
  EXPECT_LT(m.sigma_min / m.sigma_max, 1e-8);
}

TEST(FdJacobianOracle, ErrorShrinksQuadratically) {
  const KinematicChain chain = ur10_chain();
  const auto q = random_configs(1, 8).front();
  const Jacobian exact = geometric_jacobian(chain, q);
  const double e1 = max_abs(fd_jacobian_oracle(chain, q, 1e-2) - exact);
  const double e2 = max_abs(fd_jacobian_oracle(chain, q, 5e-3) - exact);
  EXPECT_GT(e1 / e2, 3.5);
  EXPECT_LT(e1 / e2, 4.5);
}

TEST(FdJacobianOracle, RejectsNonPositiveStep) {
  EXPECT_THROW(fd_jacobian_oracle(ur10_chain(), JointVector::Zero(6), 0.0), InvalidArgument);
}

TEST(GeometricJacobian, VelocityMatchesPoseDerivativeAlongTrajectory) {
  const KinematicChain chain = ur10_chain();
  const auto qs = random_configs(2, 44);
  const JointVector q0 = qs[0];
  const JointVector qdot = 0.3 * qs[1];
  auto q_of = [&](double t) -> JointVector {
    JointVector q = q0 + qdot * t;
    q[0] += 0.2 * std::sin(t);
    return q;
  };
  const double dt = 1e-6;
  for (double t : {0.0, 0.4, 1.3}) {
    JointVector qd = qdot;
    qd[0] += 0.2 * std::cos(t);
    const Vector6 v = geometric_jacobian(chain, q_of(t)) * qd;
    const Pose a = forward_kinematics(chain, q_of(t + dt));
    const Pose b = forward_kinematics(chain, q_of(t - dt));
    Vector6 numeric;
    numeric.head<3>() = (a.position - b.position) / (2 * dt);
    numeric.tail<3>() = rotation_log(a.rotation() * b.rotation().transpose()) / (2 * dt);
    EXPECT_LT((v - numeric).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(GeometricJacobian, RotatesWithTheBaseFrame) {
  const KinematicChain base = ur10_chain();
  const Transform shift = make_transform({0.3, -0.2, 0.5}, {0.4, -0.7, 1.1});
  std::vector<JointDescriptor> joints = base.joints();
  joints.front().origin = shift * joints.front().origin;
  const KinematicChain moved(joints, base.links(), base.tool());
  const Matrix3 r = shift.linear();
  for (const auto& q : random_configs(20, 12)) {
    const Jacobian a = geometric_jacobian(base, q);
    const Jacobian b = geometric_jacobian(moved, q);
    EXPECT_LT(max_abs(b.topRows(3) - r * a.topRows(3)), 1e-12);
    EXPECT_LT(max_abs(b.bottomRows(3) - r * a.bottomRows(3)), 1e-12);
  }
}

}  // namespace
}  // namespace virtdyn
