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

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace virtdyn {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Transform = Eigen::Isometry3d;

/// Joint positions in radians, one entry per joint of the chain.
using JointVector = Eigen::VectorXd;

/// Geometric Jacobian, rows [linear; angular], base frame, referenced at the end-effector point.
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Joint-space inertia matrix H(q).
using InertiaMatrix = Eigen::MatrixXd;

/// [force; torque] in base frame at the end-effector point.
using Wrench = Vector6;

/// Fixed-axis roll/pitch/yaw (URDF convention): R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Matrix3 rpy_to_rotation(const Vector3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vector3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vector3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vector3::UnitX()))
      .toRotationMatrix();
}

inline Vector3 rotation_to_rpy(const Matrix3& r) {
  const Vector3 ypr = r.eulerAngles(2, 1, 0);
  return {ypr.z(), ypr.y(), ypr.x()};
}

inline Transform make_transform(const Vector3& xyz, const Vector3& rpy) {
  Transform t = Transform::Identity();
  t.linear() = rpy_to_rotation(rpy);
  t.translation() = xyz;
  return t;
}

/// Skew-symmetric cross-product matrix: skew(a) * b == a.cross(b).
inline Matrix3 skew(const Vector3& a) {
  Matrix3 s;
  s << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return s;
}

/// Rotation vector (axis * angle) of a rotation matrix.
inline Vector3 rotation_log(const Matrix3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

}  // namespace virtdyn
