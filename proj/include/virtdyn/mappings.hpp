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

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "virtdyn/dynamics.hpp"

namespace virtdyn {

enum class Method { JI, JT, DLS, SDLS, FD };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::JI: return "JI";
    case Method::JT: return "JT";
    case Method::DLS: return "DLS";
    case Method::SDLS: return "SDLS";
    case Method::FD: return "FD";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "JI") return Method::JI;
  if (s == "JT") return Method::JT;
  if (s == "DLS") return Method::DLS;
  if (s == "SDLS") return Method::SDLS;
  if (s == "FD") return Method::FD;
  throw InvalidArgument("unknown mapping method '" + s + "'");
}

/// Which mapping and its single parameter. Use the named constructors.
struct MappingSpec {
  Method method = Method::JI;
  double alpha = 0.0;       // DLS damping
  double gamma = 1.0;       // FD end-effector dominance
  double sdls_limit = 0.0;  // SDLS max joint change, rad

  static MappingSpec ji() { return {Method::JI}; }
  static MappingSpec jt() { return {Method::JT}; }
  static MappingSpec dls(double alpha) { return {Method::DLS, alpha, 1.0, 0.0}; }
  static MappingSpec sdls(double limit) { return {Method::SDLS, 0.0, 1.0, limit}; }
  static MappingSpec fd(double gamma) { return {Method::FD, 0.0, gamma, 0.0}; }

  void validate() const {
    if (method == Method::DLS && !(alpha >= 0.0 && std::isfinite(alpha))) {
      throw InvalidArgument("DLS damping must be >= 0");
    }
    if (method == Method::FD && !(gamma > 0.0 && std::isfinite(gamma))) {
      throw InvalidArgument("FD gamma must be > 0");
    }
    if (method == Method::SDLS && !(sdls_limit > 0.0)) {
      throw InvalidArgument("SDLS limit must be > 0");
    }
  }

  /// The method's parameter, NaN for parameterless methods.
  double parameter() const {
    switch (method) {
      case Method::DLS: return alpha;
      case Method::FD: return gamma;
      case Method::SDLS: return sdls_limit;
      default: return std::numeric_limits<double>::quiet_NaN();
    }
  }

  std::string label() const {
    std::ostringstream os;
    os << to_string(method);
    if (method == Method::DLS || method == Method::FD || method == Method::SDLS) {
      os << '(' << parameter() << ')';
    }
    return os.str();
  }
};

/// (a) maps Cartesian space to joint space, (b) maps Cartesian space to Cartesian space.
enum class MappingKind { a, b };

struct MappingMatrix {
  Matrix6 matrix = Matrix6::Zero();
  MappingKind kind = MappingKind::a;
};

/// Relative threshold below which the Jacobian counts as non-invertible.
inline constexpr double kSingularRelTol = 1e-12;

namespace detail {

inline void require_square(const KinematicChain& chain) {
  if (chain.dof() != 6) {
    throw InvalidArgument("mapping matrices need a square Jacobian (6 joints)");
  }
}

inline Matrix6 jacobian_inverse(const Matrix6& jac) {
  const Eigen::JacobiSVD<Matrix6> svd(jac);
  const auto& s = svd.singularValues();
  if (!(s(5) > kSingularRelTol * s(0))) {
    throw SingularConfiguration("Jacobian is not invertible at this configuration");
  }
  return jac.partialPivLu().inverse();
}

inline Matrix6 type_a(const KinematicChain& chain, const ChainFrames& frames, const Matrix6& jac,
                      const MappingSpec& spec) {
  switch (spec.method) {
    case Method::JI:
      return jacobian_inverse(jac);
    case Method::JT:
      return jac.transpose();
    case Method::DLS: {
      if (spec.alpha == 0.0) return jacobian_inverse(jac);
      // Least-squares solution of [J; a I] X = [I; 0], which equals
      // (J^T J + a^2 I)^-1 J^T without forming J^T J.
      Eigen::Matrix<double, 12, 6> stacked;
      stacked << jac, spec.alpha * Matrix6::Identity();
      Eigen::Matrix<double, 12, 6> rhs;
      rhs << Matrix6::Identity(), Matrix6::Zero();
      return stacked.householderQr().solve(rhs);
    }
    case Method::FD: {
      const Matrix6 h = joint_space_inertia(chain, frames);
      const Eigen::LLT<Matrix6> llt(h);
      if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("joint-space inertia is not positive definite");
      }
      return llt.solve(jac.transpose());
    }
    case Method::SDLS:
      break;
  }
  throw InvalidArgument("SDLS has no mapping matrix; use sdls_solve");
}

}  // namespace detail

/// Type (a) matrix: JI = J^-1, JT = J^T, DLS = (J^T J + a^2 I)^-1 J^T,
/// FD = H^-1 J^T with H taken from `chain` as given (pass the virtual chain).
inline MappingMatrix mapping_matrix_a(const KinematicChain& chain, const JointVector& q,
                                      const MappingSpec& spec) {
  spec.validate();
  detail::require_square(chain);
  const ChainFrames frames = compute_frames(chain, q);
  const Matrix6 jac = jacobian_from_frames(frames);
  return {detail::type_a(chain, frames, jac, spec), MappingKind::a};
}

/// Type (b) matrix: J times the type (a) matrix. For FD this is J H^-1 J^T,
/// the inverse operational-space inertia.
inline MappingMatrix mapping_matrix_b(const KinematicChain& chain, const JointVector& q,
                                      const MappingSpec& spec) {
  spec.validate();
  detail::require_square(chain);
  const ChainFrames frames = compute_frames(chain, q);
  const Matrix6 jac = jacobian_from_frames(frames);
  return {jac * detail::type_a(chain, frames, jac, spec), MappingKind::b};
}

/// Selectively damped least squares (Buss and Kim). The 6 task rows are split
/// into a position and an orientation group for the per-direction damping
/// bounds. Directions with numerically zero singular value are skipped.
inline JointVector sdls_solve(const Jacobian& jac, const Vector6& dx, double limit) {
  if (!(limit > 0.0)) throw InvalidArgument("SDLS limit must be > 0");
  const Eigen::Index n = jac.cols();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const Eigen::MatrixXd& u = svd.matrixU();
  const Eigen::MatrixXd& v = svd.matrixV();

  Eigen::VectorXd column_norms(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    column_norms(j) = jac.col(j).head<3>().norm() + jac.col(j).tail<3>().norm();
  }

  auto clamp_max_abs = [](Eigen::VectorXd w, double bound) {
    const double m = w.cwiseAbs().maxCoeff();
    if (m > bound) w *= bound / m;
    return w;
  };

  JointVector result = JointVector::Zero(n);
  const double cutoff = s.size() > 0 ? s(0) * static_cast<double>(std::max<Eigen::Index>(6, n)) *
                                           std::numeric_limits<double>::epsilon()
                                     : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(s(i) > cutoff)) continue;
    const double inv_sigma = 1.0 / s(i);
    const double alpha = u.col(i).dot(dx);
    const double big_n = u.col(i).head<3>().norm() + u.col(i).tail<3>().norm();
    const double big_m = inv_sigma * v.col(i).cwiseAbs().dot(column_norms);
    const double gamma_i = std::min(1.0, big_n / big_m) * limit;
    result += clamp_max_abs(inv_sigma * alpha * v.col(i), gamma_i);
  }
  return clamp_max_abs(result, limit);
}

inline JointVector sdls_solve(const KinematicChain& chain, const JointVector& q,
                              const Vector6& dx, double limit) {
  return sdls_solve(geometric_jacobian(chain, q), dx, limit);
}

/// Applies one mapping to a Cartesian vector without forming the matrix, the
/// way a controller evaluates it each cycle. For FD the virtual chain is
/// built once at construction.
class Mapper {
 public:
  Mapper(const KinematicChain& base, const MappingSpec& spec, double m_e = 1.0, double ip_e = 1.0)
      : spec_(spec),
        chain_(spec.method == Method::FD
                   ? build_virtual_chain(base, {spec.gamma, m_e, ip_e})
                   : base) {
    spec_.validate();
    detail::require_square(chain_);
  }

  const MappingSpec& spec() const { return spec_; }
  const KinematicChain& chain() const { return chain_; }

  MappingMatrix type_a(const JointVector& q) const { return mapping_matrix_a(chain_, q, spec_); }
  MappingMatrix type_b(const JointVector& q) const { return mapping_matrix_b(chain_, q, spec_); }

  /// Joint-space response to `f`, e.g. q'' = H^-1 J^T f for FD.
  Vector6 apply(const JointVector& q, const Vector6& f) const {
    const ChainFrames frames = compute_frames(chain_, q);
    const Matrix6 jac = jacobian_from_frames(frames);
    const Method method =
        spec_.method == Method::DLS && spec_.alpha == 0.0 ? Method::JI : spec_.method;
    switch (method) {
      case Method::JI: {
        const Eigen::PartialPivLU<Matrix6> lu(jac);
        if (!(lu.rcond() > kSingularRelTol)) {
          throw SingularConfiguration("Jacobian is not invertible at this configuration");
        }
        return lu.solve(f);
      }
      case Method::JT:
        return jac.transpose() * f;
      case Method::DLS: {
        const Matrix6 normal =
            jac.transpose() * jac + spec_.alpha * spec_.alpha * Matrix6::Identity();
        return normal.llt().solve(jac.transpose() * f);
      }
      case Method::SDLS:
        return sdls_solve(jac, f, spec_.sdls_limit);
      case Method::FD: {
        const Matrix6 h = joint_space_inertia(chain_, frames);
        return h.llt().solve(jac.transpose() * f);
      }
    }
    return Vector6::Zero();
  }

 private:
  MappingSpec spec_;
  KinematicChain chain_;
};

}  // namespace virtdyn
