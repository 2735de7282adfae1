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

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "virtdyn/errors.hpp"
#include "virtdyn/types.hpp"

namespace virtdyn {

enum class JointKind { Revolute };

/// A joint: the fixed transform from the parent link frame to the joint frame,
/// followed by a rotation about `axis` (given in the joint frame).
struct JointDescriptor {
  std::string name;
  JointKind kind = JointKind::Revolute;
  Transform origin = Transform::Identity();
  Vector3 axis = Vector3::UnitZ();

  void validate() const {
    if (std::abs(axis.norm() - 1.0) > 1e-12) {
      throw InvalidArgument("joint '" + name + "': axis is not a unit vector");
    }
    const Matrix3& r = origin.linear();
    if ((r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff() > 1e-12 ||
        r.determinant() < 0.0) {
      throw InvalidArgument("joint '" + name + "': origin rotation is not orthonormal");
    }
  }
};

/// Mass properties of one link. `com` is in the link frame and `rot_inertia` is taken about the com.
struct LinkInertia {
  double mass = 1.0;
  Vector3 com = Vector3::Zero();
  Matrix3 rot_inertia = Matrix3::Identity();

  void validate() const {
    if (!(mass > 0.0)) throw InvalidArgument("link mass must be positive");
    if ((rot_inertia - rot_inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidArgument("link rotational inertia is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Matrix3> eig(rot_inertia, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw InvalidArgument("link rotational inertia is not positive definite");
    }
  }
};

/// Serial chain of revolute joints. Link i is the body moved by joint i; the
/// end-effector frame sits at `tool` relative to the last link frame.
class KinematicChain {
 public:
  KinematicChain(std::vector<JointDescriptor> joints, std::vector<LinkInertia> links,
                 Transform tool = Transform::Identity(), std::string name = {})
      : joints_(std::move(joints)), links_(std::move(links)), tool_(tool), name_(std::move(name)) {
    if (joints_.empty()) throw InvalidArgument("chain needs at least one joint");
    if (joints_.size() != links_.size()) {
      throw InvalidArgument("chain needs exactly one link per joint");
    }
    for (const auto& j : joints_) j.validate();
    for (const auto& l : links_) l.validate();
    const Matrix3& r = tool_.linear();
    if ((r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
      throw InvalidArgument("tool rotation is not orthonormal");
    }
  }

  int dof() const { return static_cast<int>(joints_.size()); }
  const std::vector<JointDescriptor>& joints() const { return joints_; }
  const std::vector<LinkInertia>& links() const { return links_; }
  const Transform& tool() const { return tool_; }
  const std::string& name() const { return name_; }

  /// Same geometry, different mass distribution.
  KinematicChain with_links(std::vector<LinkInertia> links) const {
    return KinematicChain(joints_, std::move(links), tool_, name_);
  }

 private:
  std::vector<JointDescriptor> joints_;
  std::vector<LinkInertia> links_;
  Transform tool_;
  std::string name_;
};

/// Mass distribution of the virtual model: the end-effector link carries
/// `m_e` and `ip_e`, every other link carries them divided by `gamma`.
struct VirtualModelParams {
  double gamma = 1.0;
  double m_e = 1.0;
  double ip_e = 1.0;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be positive");
    if (!(m_e > 0.0) || !std::isfinite(m_e)) throw InvalidArgument("m_e must be positive");
    if (!(ip_e > 0.0) || !std::isfinite(ip_e)) throw InvalidArgument("ip_e must be positive");
  }

  double m_l() const { return m_e / gamma; }
  double ip_l() const { return ip_e / gamma; }
};

/// UR10 geometry with the frame layout of the ROS-Industrial description
/// (base_link ... ee_link). Link inertias are placeholders.
inline KinematicChain ur10_chain() {
  constexpr double kPi = std::numbers::pi;
  constexpr double d1 = 0.1273;
  constexpr double shoulder_offset = 0.220941;
  constexpr double elbow_offset = -0.1719;
  constexpr double upper_arm = 0.612;
  constexpr double forearm = 0.5723;
  constexpr double wrist_1 = 0.1149;  // shoulder_offset + elbow_offset + wrist_1 == d4
  constexpr double wrist_2 = 0.1157;
  constexpr double wrist_3 = 0.0922;

  auto joint = [](std::string name, Vector3 xyz, Vector3 rpy, Vector3 axis) {
    JointDescriptor j;
    j.name = std::move(name);
    j.origin = make_transform(xyz, rpy);
    j.axis = axis;
    return j;
  };
  std::vector<JointDescriptor> joints{
      joint("shoulder_pan_joint", {0, 0, d1}, {0, 0, 0}, Vector3::UnitZ()),
      joint("shoulder_lift_joint", {0, shoulder_offset, 0}, {0, kPi / 2, 0}, Vector3::UnitY()),
      joint("elbow_joint", {0, elbow_offset, upper_arm}, {0, 0, 0}, Vector3::UnitY()),
      joint("wrist_1_joint", {0, 0, forearm}, {0, kPi / 2, 0}, Vector3::UnitY()),
      joint("wrist_2_joint", {0, wrist_1, 0}, {0, 0, 0}, Vector3::UnitZ()),
      joint("wrist_3_joint", {0, 0, wrist_2}, {0, 0, 0}, Vector3::UnitY()),
  };
  std::vector<LinkInertia> links(joints.size());
  return KinematicChain(std::move(joints), std::move(links),
                        make_transform({0, wrist_3, 0}, {0, 0, kPi / 2}), "ur10");
}

/// Copy of `base` with the virtual mass distribution. Every com sits at its
/// link frame origin and every rotational inertia is isotropic.
inline KinematicChain build_virtual_chain(const KinematicChain& base,
                                          const VirtualModelParams& params) {
  params.validate();
  const auto n = base.links().size();
  std::vector<LinkInertia> links(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool end_effector = i + 1 == n;
    links[i].mass = end_effector ? params.m_e : params.m_l();
    links[i].com = Vector3::Zero();
    links[i].rot_inertia = (end_effector ? params.ip_e : params.ip_l()) * Matrix3::Identity();
  }
  return base.with_links(std::move(links));
}

}  // namespace virtdyn
