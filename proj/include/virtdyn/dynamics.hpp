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

#pragma once

#include <Eigen/Cholesky>

#include "virtdyn/kinematics.hpp"

namespace virtdyn {

/// 6x6 rigid-body inertia acting on twists [v_O; w], where v_O is the velocity
/// of the body point instantaneously at the base origin.
struct SpatialInertia {
  Matrix6 matrix = Matrix6::Zero();

  /// `com` and `rot_inertia` (about the com) both in base coordinates.
  static SpatialInertia from_com(double mass, const Vector3& com, const Matrix3& rot_inertia) {
    const Matrix3 c = skew(com);
    SpatialInertia s;
    s.matrix.topLeftCorner<3, 3>() = mass * Matrix3::Identity();
    s.matrix.topRightCorner<3, 3>() = -mass * c;
    s.matrix.bottomLeftCorner<3, 3>() = mass * c;
    s.matrix.bottomRightCorner<3, 3>() = rot_inertia - mass * c * c;
    return s;
  }

  static SpatialInertia of_link(const LinkInertia& link, const Transform& link_frame) {
    const Matrix3& r = link_frame.linear();
    return from_com(link.mass, link_frame * link.com, r * link.rot_inertia * r.transpose());
  }

  SpatialInertia& operator+=(const SpatialInertia& other) {
    matrix += other.matrix;
    return *this;
  }
};

/// Joint-space inertia matrix via the composite rigid body algorithm. All
/// spatial quantities share the base origin as reference point, so composite
/// inertias accumulate by plain addition from the tip towards the base.
inline InertiaMatrix joint_space_inertia(const KinematicChain& chain, const ChainFrames& f) {
  const auto n = static_cast<Eigen::Index>(chain.dof());

  Eigen::Matrix<double, 6, Eigen::Dynamic> motion(6, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    motion.col(i).head<3>() = f.origin[k].cross(f.axis[k]);
    motion.col(i).tail<3>() = f.axis[k];
  }

  InertiaMatrix h(n, n);
  SpatialInertia composite;
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const auto k = static_cast<std::size_t>(j);
    composite += SpatialInertia::of_link(chain.links()[k], f.link[k]);
    const Vector6 force = composite.matrix * motion.col(j);
    for (Eigen::Index i = 0; i <= j; ++i) {
      h(i, j) = motion.col(i).dot(force);
      h(j, i) = h(i, j);
    }
  }
  return h;
}

inline InertiaMatrix joint_space_inertia(const KinematicChain& chain, const JointVector& q) {
  return joint_space_inertia(chain, compute_frames(chain, q));
}

/// H = sum_k J_k^T diag(m_k I, I_k) J_k with J_k the geometric Jacobian of
/// link k's centre of mass. Independent of the recursion above.
inline InertiaMatrix inertia_oracle(const KinematicChain& chain, const JointVector& q) {
  const ChainFrames f = compute_frames(chain, q);
  const auto n = static_cast<Eigen::Index>(chain.dof());
  InertiaMatrix h = InertiaMatrix::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const LinkInertia& link = chain.links()[kk];
    const Vector3 com = f.link[kk] * link.com;
    Eigen::Matrix<double, 6, Eigen::Dynamic> jac = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, n);
    for (Eigen::Index j = 0; j <= k; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      jac.col(j).head<3>() = f.axis[jj].cross(com - f.origin[jj]);
      jac.col(j).tail<3>() = f.axis[jj];
    }
    const Matrix3& r = f.link[kk].linear();
    Matrix6 body = Matrix6::Zero();
    body.topLeftCorner<3, 3>() = link.mass * Matrix3::Identity();
    body.bottomRightCorner<3, 3>() = r * link.rot_inertia * r.transpose();
    h += jac.transpose() * body * jac;
  }
  return h;
}

/// H^{-1} through a Cholesky factorization.
inline InertiaMatrix inverse_inertia(const InertiaMatrix& h) {
  if (h.rows() != h.cols()) throw InvalidArgument("inertia matrix must be square");
  const Eigen::LLT<InertiaMatrix> llt(h);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("inertia matrix is not symmetric positive definite");
  }
  return llt.solve(InertiaMatrix::Identity(h.rows(), h.cols()));
}

}  // namespace virtdyn
