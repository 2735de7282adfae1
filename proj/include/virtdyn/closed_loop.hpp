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
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "virtdyn/dynamics.hpp"

namespace virtdyn {

/// How the virtual model's joint accelerations are integrated each cycle.
enum class Integration {
  kSemiImplicitEuler,  // qd += qdd dt; q += qd dt
  kResetToRest,        // qd = 0 at the start of every cycle, then as above
};

struct ClosedLoopOptions {
  Matrix6 gain = 10.0 * Matrix6::Identity();  // K, symmetric positive definite
  /// Cartesian damping of the control law, f = K e - D J qd, with
  /// D = 2 * damping_ratio * sqrt(K). Zero leaves the loop undamped.
  double damping_ratio = 1.0;
  double dt = 1e-3;
  int steps = 20000;
  Integration integration = Integration::kSemiImplicitEuler;
  /// Stop once the error norm drops below this value. Zero runs every step.
  double stop_below = 0.0;
  double divergence_factor = 10.0;
  int divergence_window = 100;
};

struct ClosedLoopSample {
  int step = 0;
  JointVector q;
  double error_norm = 0.0;
};

struct ClosedLoopResult {
  std::vector<ClosedLoopSample> trajectory;

  double final_error() const { return trajectory.empty() ? 0.0 : trajectory.back().error_norm; }

  /// First step at which the error norm is below `tol`, or -1.
  int first_step_below(double tol) const {
    for (const auto& s : trajectory) {
      if (s.error_norm < tol) return s.step;
    }
    return -1;
  }
};

/// [p_target - p; log(R_target R^T)] in the base frame. The rotation part is
/// taken from the quaternion difference, so a pose compared with itself gives
/// exactly zero.
inline Vector6 pose_error(const Pose& target, const Transform& current) {
  const Pose c = pose_from_transform(current);
  Eigen::Quaterniond d = target.orientation * c.orientation.conjugate();
  if (d.w() < 0.0) d.coeffs() = -d.coeffs();
  const Eigen::AngleAxisd aa(d);
  Vector6 e;
  e.head<3>() = target.position - c.position;
  e.tail<3>() = aa.angle() == 0.0 ? Vector3::Zero() : Vector3(aa.axis() * aa.angle());
  return e;
}

inline void check_gain(const Matrix6& k) {
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, k.cwiseAbs().maxCoeff())) {
    throw InvalidArgument("gain matrix K must be symmetric");
  }
  const Eigen::LLT<Matrix6> llt(k);
  if (llt.info() != Eigen::Success) throw InvalidArgument("gain matrix K must be positive definite");
}

/// Drives the virtual model with q'' = H^-1 J^T f, f = K e - D J qd, against
/// a perfect plant that follows the integrated joint reference exactly.
inline ClosedLoopResult closed_loop_simulate(const KinematicChain& base,
                                             const VirtualModelParams& params,
                                             const JointVector& q0, const Pose& target,
                                             const ClosedLoopOptions& opts = {}) {
  check_gain(opts.gain);
  if (!(opts.dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (opts.steps < 0) throw InvalidArgument("step count must be non-negative");
  if (!(opts.damping_ratio >= 0.0)) throw InvalidArgument("damping ratio must be >= 0");
  const KinematicChain chain = build_virtual_chain(base, params);
  check_dimension(chain, q0);

  const Eigen::SelfAdjointEigenSolver<Matrix6> eig(opts.gain);
  const Matrix6 damping = 2.0 * opts.damping_ratio * eig.operatorSqrt();

  ClosedLoopResult result;
  result.trajectory.reserve(static_cast<std::size_t>(opts.steps) + 1);
  JointVector q = q0;
  JointVector qd = JointVector::Zero(q0.size());
  double initial = 0.0;
  int above = 0;

  for (int step = 0;; ++step) {
    const ChainFrames frames = compute_frames(chain, q);
    const Vector6 e = pose_error(target, frames.end_effector);
    const double err = e.norm();
    if (step == 0) initial = err;
    result.trajectory.push_back({step, q, err});
    if (!std::isfinite(err)) throw Divergence("closed loop: error is not finite");
    above = (err > opts.divergence_factor * initial && err > 1e-12) ? above + 1 : 0;
    if (above >= opts.divergence_window) {
      throw Divergence("closed loop diverged: error " + std::to_string(err) + " after " +
                       std::to_string(step) + " steps (initial " + std::to_string(initial) + ")");
    }
    if (step == opts.steps || (opts.stop_below > 0.0 && err < opts.stop_below)) break;

    if (opts.integration == Integration::kResetToRest) qd.setZero();
    const Jacobian jac = jacobian_from_frames(frames);
    const Vector6 f = opts.gain * e - damping * (jac * qd);
    const InertiaMatrix h = joint_space_inertia(chain, frames);
    const Eigen::LLT<InertiaMatrix> llt(h);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("joint-space inertia is not positive definite");
    }
    const JointVector qdd = llt.solve(jac.transpose() * f);
    qd += qdd * opts.dt;
    q += qd * opts.dt;
  }
  return result;
}

}  // namespace virtdyn
