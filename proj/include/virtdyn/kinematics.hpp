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

#include <string>
#include <vector>

#include "virtdyn/chain.hpp"

namespace virtdyn {

struct Pose {
  Vector3 position = Vector3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Matrix3 rotation() const { return orientation.toRotationMatrix(); }
};

/// Everything one forward pass over the chain yields, in base coordinates.
struct ChainFrames {
  std::vector<Transform> link;   // frame of link i (after joint i has rotated)
  std::vector<Vector3> axis;     // unit axis of joint i
  std::vector<Vector3> origin;   // a point on the axis of joint i
  Transform end_effector = Transform::Identity();
};

inline void check_dimension(const KinematicChain& chain, const JointVector& q) {
  if (q.size() != chain.dof()) {
    throw InvalidArgument("joint vector has " + std::to_string(q.size()) +
                          " entries, chain has " + std::to_string(chain.dof()) + " joints");
  }
}

inline ChainFrames compute_frames(const KinematicChain& chain, const JointVector& q) {
  check_dimension(chain, q);
  const auto n = static_cast<std::size_t>(chain.dof());
  ChainFrames f;
  f.link.resize(n);
  f.axis.resize(n);
  f.origin.resize(n);
  Transform t = Transform::Identity();
  for (std::size_t i = 0; i < n; ++i) {
    const JointDescriptor& j = chain.joints()[i];
    t = t * j.origin;
    f.origin[i] = t.translation();
    f.axis[i] = t.linear() * j.axis;
    t.linear() = t.linear() * Eigen::AngleAxisd(q[static_cast<Eigen::Index>(i)], j.axis).toRotationMatrix();
    f.link[i] = t;
  }
  f.end_effector = t * chain.tool();
  return f;
}

inline Pose pose_from_transform(const Transform& t) {
  Pose p;
  p.position = t.translation();
  p.orientation = Eigen::Quaterniond(t.linear()).normalized();
  return p;
}

/// End-effector pose x = g(q) in the base frame.
inline Pose forward_kinematics(const KinematicChain& chain, const JointVector& q) {
  return pose_from_transform(compute_frames(chain, q).end_effector);
}

/// Column i is [z_i x (p_e - p_i); z_i].
inline Jacobian jacobian_from_frames(const ChainFrames& f) {
  const auto n = static_cast<Eigen::Index>(f.axis.size());
  Jacobian jac(6, n);
  const Vector3 pe = f.end_effector.translation();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    jac.col(i).head<3>() = f.axis[k].cross(pe - f.origin[k]);
    jac.col(i).tail<3>() = f.axis[k];
  }
  return jac;
}

inline Jacobian geometric_jacobian(const KinematicChain& chain, const JointVector& q) {
  return jacobian_from_frames(compute_frames(chain, q));
}

/// Central-difference Jacobian of forward_kinematics. The angular block is
/// log(R(q + h e_i) R(q - h e_i)^T) / 2h, i.e. base-frame angular velocity.
inline Jacobian fd_jacobian_oracle(const KinematicChain& chain, const JointVector& q,
                                   double h = 1e-6) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  check_dimension(chain, q);
  Jacobian jac(6, chain.dof());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    JointVector qp = q;
    JointVector qm = q;
    qp[i] += h;
    qm[i] -= h;
    const Pose xp = forward_kinematics(chain, qp);
    const Pose xm = forward_kinematics(chain, qm);
    jac.col(i).head<3>() = (xp.position - xm.position) / (2.0 * h);
    jac.col(i).tail<3>() = rotation_log(xp.rotation() * xm.rotation().transpose()) / (2.0 * h);
  }
  return jac;
}

}  // namespace virtdyn
