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
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "virtdyn/errors.hpp"
#include "virtdyn/types.hpp"

namespace virtdyn {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct SvdMetrics {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double kappa = kInfinity;  // sigma_max / sigma_min, infinite when sigma_min == 0
};

template <typename Derived>
SvdMetrics svd_metrics(const Eigen::MatrixBase<Derived>& m) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.eval());
  const auto& s = svd.singularValues();
  SvdMetrics out;
  out.sigma_max = s.size() > 0 ? s(0) : 0.0;
  out.sigma_min = s.size() > 0 ? s(s.size() - 1) : 0.0;
  out.kappa = out.sigma_min > 0.0 ? out.sigma_max / out.sigma_min : kInfinity;
  if (!std::isfinite(out.kappa)) out.kappa = kInfinity;
  return out;
}

/// Yoshikawa's manipulability for a square Jacobian, |det J|.
template <typename Derived>
double yoshikawa(const Eigen::MatrixBase<Derived>& jac) {
  if (jac.rows() != jac.cols()) throw InvalidArgument("yoshikawa: Jacobian must be square");
  if (jac.rows() == 6) return std::abs(Matrix6(jac).determinant());
  return std::abs(Eigen::MatrixXd(jac).determinant());
}

/// General form sqrt(det(J J^T)), valid for redundant chains as well.
template <typename Derived>
double yoshikawa_redundant(const Eigen::MatrixBase<Derived>& jac) {
  const Eigen::MatrixXd jjt = jac * jac.transpose();
  return std::sqrt(std::max(0.0, jjt.determinant()));
}

struct MatrixStats {
  Matrix6 mean = Matrix6::Zero();
  Matrix6 std = Matrix6::Zero();  // population standard deviation
  std::size_t sample_count = 0;
};

/// Entrywise running mean / variance (Welford), mergeable across shards with
/// the pairwise update of Chan et al.
class MatrixStatsAccumulator {
 public:
  void add(const Matrix6& sample) {
    ++count_;
    const Matrix6 delta = sample - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(sample - mean_);
  }

  void merge(const MatrixStatsAccumulator& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const auto na = static_cast<double>(count_);
    const auto nb = static_cast<double>(other.count_);
    const double n = na + nb;
    const Matrix6 delta = other.mean_ - mean_;
    mean_ += delta * (nb / n);
    m2_ += other.m2_ + delta.cwiseProduct(delta) * (na * nb / n);
    count_ += other.count_;
  }

  std::size_t count() const { return count_; }

  MatrixStats result() const {
    if (count_ == 0) throw InvalidArgument("matrix_stats: no samples");
    MatrixStats s;
    s.mean = mean_;
    s.std = (m2_ / static_cast<double>(count_)).cwiseMax(0.0).cwiseSqrt();
    s.sample_count = count_;
    return s;
  }

 private:
  std::size_t count_ = 0;
  Matrix6 mean_ = Matrix6::Zero();
  Matrix6 m2_ = Matrix6::Zero();
};

template <typename Range>
MatrixStats matrix_stats(const Range& samples) {
  MatrixStatsAccumulator acc;
  for (const auto& s : samples) acc.add(s);
  return acc.result();
}

/// Linear-interpolation quantile of already sorted data, p in [0, 1].
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Lower median of already sorted data.
inline double sorted_lower_median(const std::vector<double>& sorted) {
  if (sorted.empty()) throw InvalidArgument("median of an empty sample");
  return sorted[(sorted.size() - 1) / 2];
}

enum class MedianMode { kFiltered, kPlain };

struct RobustMedian {
  double median = 0.0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

/// Median after dropping non-finite values and upper outliers beyond
/// Q3 + 1.5 IQR. kPlain skips the fence but still drops non-finite values.
inline RobustMedian robust_median_detail(std::vector<double> values,
                                         MedianMode mode = MedianMode::kFiltered) {
  if (values.empty()) throw InvalidArgument("robust_median: empty input");
  const std::size_t total = values.size();
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  std::sort(values.begin(), values.end());
  if (mode == MedianMode::kFiltered && !values.empty()) {
    const double q1 = sorted_quantile(values, 0.25);
    const double q3 = sorted_quantile(values, 0.75);
    const double fence = q3 + 1.5 * (q3 - q1);
    std::erase_if(values, [fence](double v) { return v > fence; });
  }
  if (values.empty()) throw InvalidArgument("robust_median: every value was filtered out");
  return {sorted_lower_median(values), values.size(), total - values.size()};
}

inline double robust_median(std::vector<double> values, MedianMode mode = MedianMode::kFiltered) {
  return robust_median_detail(std::move(values), mode).median;
}

}  // namespace virtdyn
