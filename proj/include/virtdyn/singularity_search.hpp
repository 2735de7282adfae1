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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "json.hpp"
#include "virtdyn/analysis.hpp"
#include "virtdyn/kinematics.hpp"
#include "virtdyn/parallel.hpp"
#include "virtdyn/random.hpp"

namespace virtdyn {

/// What happens to a particle that leaves the box.
enum class BoundaryMode {
  kClip,      // park it on the violated face
  kPeriodic,  // wrap around and attract along the shorter way, for angles
};

struct PsoParams {
  int swarm_size = 50;
  double inertia_w = 0.729;
  double cognitive_c1 = 1.49445;
  double social_c2 = 1.49445;
  int max_iters = 500;
  double tol = 1e-8;
  /// Stop once the global best is at or below this value; negative never stops early.
  double stop_value = -1.0;
  BoundaryMode boundary = BoundaryMode::kClip;
  std::vector<std::pair<double, double>> bounds =
      std::vector<std::pair<double, double>>(6, {-std::numbers::pi, std::numbers::pi});

  void validate() const {
    if (swarm_size < 2) throw InvalidArgument("PSO swarm needs at least 2 particles");
    if (max_iters < 0) throw InvalidArgument("PSO max_iters must be >= 0");
    if (!(tol > 0.0)) throw InvalidArgument("PSO tol must be > 0");
    if (bounds.empty()) throw InvalidArgument("PSO needs at least one dimension");
    for (const auto& [lo, hi] : bounds) {
      if (!(lo < hi)) throw InvalidArgument("PSO bounds need lower < upper");
    }
  }
};

struct PsoResult {
  JointVector position;
  double value = std::numeric_limits<double>::infinity();
};

/// Global-best particle swarm minimization with the inertia-weight update
///   v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x),
/// velocities limited to the bound width and positions clipped to the bounds.
/// Deterministic for a fixed seed.
template <typename Objective>
PsoResult pso_minimize(Objective&& objective, const PsoParams& params, std::uint64_t seed) {
  params.validate();
  const auto dim = static_cast<Eigen::Index>(params.bounds.size());
  const auto swarm = static_cast<std::size_t>(params.swarm_size);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::VectorXd lo(dim), hi(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    lo(d) = params.bounds[static_cast<std::size_t>(d)].first;
    hi(d) = params.bounds[static_cast<std::size_t>(d)].second;
  }
  const Eigen::VectorXd width = hi - lo;

  std::vector<Eigen::VectorXd> x(swarm, Eigen::VectorXd(dim));
  std::vector<Eigen::VectorXd> v(swarm, Eigen::VectorXd(dim));
  for (std::size_t p = 0; p < swarm; ++p) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      x[p](d) = lo(d) + unit(rng) * width(d);
      v[p](d) = (2.0 * unit(rng) - 1.0) * width(d);
    }
  }
  std::vector<Eigen::VectorXd> best_x = x;
  std::vector<double> best_f(swarm);
  PsoResult global;
  for (std::size_t p = 0; p < swarm; ++p) {
    best_f[p] = objective(x[p]);
    if (best_f[p] < global.value) global = {x[p], best_f[p]};
  }

  for (int it = 0; it < params.max_iters && !(global.value <= params.stop_value); ++it) {
    for (std::size_t p = 0; p < swarm; ++p) {
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        double to_best = best_x[p](d) - x[p](d);
        double to_global = global.position(d) - x[p](d);
        if (params.boundary == BoundaryMode::kPeriodic) {
          to_best = std::remainder(to_best, width(d));
          to_global = std::remainder(to_global, width(d));
        }
        double vel = params.inertia_w * v[p](d) + params.cognitive_c1 * r1 * to_best +
                     params.social_c2 * r2 * to_global;
        vel = std::clamp(vel, -width(d), width(d));
        v[p](d) = vel;
        double pos = x[p](d) + vel;
        if (params.boundary == BoundaryMode::kPeriodic) {
          pos = lo(d) + std::fmod(std::fmod(pos - lo(d), width(d)) + width(d), width(d));
        }
        x[p](d) = std::clamp(pos, lo(d), hi(d));
      }
      const double f = objective(x[p]);
      if (f < best_f[p]) {
        best_f[p] = f;
        best_x[p] = x[p];
        if (f < global.value) global = {x[p], f};
      }
    }
  }
  return global;
}

/// Singular configurations found by PSO on |det J|.
struct SingularSet {
  std::vector<JointVector> configs;
  std::vector<double> residuals;      // |det J(configs[i])|
  std::vector<std::uint64_t> restarts;  // restart index that produced configs[i]
  std::uint64_t seed = 0;
  PsoParams params;
  std::size_t attempted = 0;
};

struct CollectOptions {
  bool allow_duplicates = false;
  double duplicate_distance = 1e-3;  // max-norm, rad
  std::size_t max_restarts = 0;      // 0: 10 * count
  unsigned threads = 0;              // 0: hardware concurrency
};

inline double ur_manipulability(const KinematicChain& chain, const JointVector& q) {
  return yoshikawa(geometric_jacobian(chain, q));
}

/// Runs independent PSO restarts (restart r seeded from (seed, r)) until
/// `count` configurations with |det J| <= tol are accepted. Restarts execute
/// in parallel batches but are accepted strictly in restart order.
inline SingularSet collect_singular_set(const KinematicChain& chain, std::size_t count,
                                        const PsoParams& params, std::uint64_t seed,
                                        const CollectOptions& opts = {}) {
  params.validate();
  if (count < 1) throw InvalidArgument("singular set needs count >= 1");
  if (static_cast<int>(params.bounds.size()) != chain.dof()) {
    throw InvalidArgument("PSO bounds must match the chain's joint count");
  }
  const std::size_t max_restarts = opts.max_restarts ? opts.max_restarts : 10 * count;
  const unsigned threads = resolve_threads(opts.threads);

  SingularSet set;
  set.seed = seed;
  set.params = params;
  auto objective = [&chain](const Eigen::VectorXd& q) { return ur_manipulability(chain, q); };

  std::uint64_t next = 0;
  std::vector<PsoResult> batch;
  while (set.configs.size() < count) {
    if (next >= max_restarts) {
      throw Infeasible("singular set: only " + std::to_string(set.configs.size()) + " of " +
                       std::to_string(count) + " configurations after " +
                       std::to_string(next) + " restarts");
    }
    const std::size_t needed = count - set.configs.size();
    const std::size_t size = std::min<std::size_t>(
        max_restarts - next, std::max<std::size_t>(needed, threads));
    batch.assign(size, {});
    parallel_for(size, threads, [&](std::size_t i) {
      batch[i] = pso_minimize(objective, params, stream_seed(seed, next + i));
    });
    for (std::size_t i = 0; i < size && set.configs.size() < count; ++i) {
      const PsoResult& r = batch[i];
      ++set.attempted;
      if (!(r.value <= params.tol)) continue;
      const bool duplicate =
          !opts.allow_duplicates &&
          std::any_of(set.configs.begin(), set.configs.end(), [&](const JointVector& c) {
            return (c - r.position).cwiseAbs().maxCoeff() <= opts.duplicate_distance;
          });
      if (duplicate) continue;
      set.configs.push_back(r.position);
      set.residuals.push_back(r.value);
      set.restarts.push_back(next + i);
    }
    next += size;
  }
  return set;
}

inline nlohmann::json pso_params_to_json(const PsoParams& p) {
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& [lo, hi] : p.bounds) bounds.push_back({lo, hi});
  return {{"swarm_size", p.swarm_size}, {"inertia_w", p.inertia_w},
          {"cognitive_c1", p.cognitive_c1}, {"social_c2", p.social_c2},
          {"max_iters", p.max_iters}, {"tol", p.tol}, {"stop_value", p.stop_value},
          {"boundary", p.boundary == BoundaryMode::kPeriodic ? "periodic" : "clip"},
          {"bounds", bounds}};
}

inline PsoParams pso_params_from_json(const nlohmann::json& j, PsoParams p = {}) {
  p.swarm_size = j.value("swarm_size", p.swarm_size);
  p.inertia_w = j.value("inertia_w", p.inertia_w);
  p.cognitive_c1 = j.value("cognitive_c1", p.cognitive_c1);
  p.social_c2 = j.value("social_c2", p.social_c2);
  p.max_iters = j.value("max_iters", p.max_iters);
  p.tol = j.value("tol", p.tol);
  p.stop_value = j.value("stop_value", p.stop_value);
  if (j.contains("boundary")) {
    const auto b = j.at("boundary").get<std::string>();
    if (b == "clip") {
      p.boundary = BoundaryMode::kClip;
    } else if (b == "periodic") {
      p.boundary = BoundaryMode::kPeriodic;
    } else {
      throw InvalidArgument("PSO boundary must be 'clip' or 'periodic'");
    }
  }
  if (j.contains("bounds")) {
    p.bounds.clear();
    for (const auto& b : j.at("bounds")) p.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
  }
  p.validate();
  return p;
}

inline nlohmann::json singular_set_to_json(const SingularSet& s) {
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : s.configs) configs.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  return {{"seed", s.seed},
          {"params", pso_params_to_json(s.params)},
          {"attempted_restarts", s.attempted},
          {"restarts", s.restarts},
          {"residuals", s.residuals},
          {"configs", configs}};
}

inline SingularSet singular_set_from_json(const nlohmann::json& j) {
  try {
    SingularSet s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.params = pso_params_from_json(j.at("params"));
    s.attempted = j.value("attempted_restarts", std::size_t{0});
    s.residuals = j.at("residuals").get<std::vector<double>>();
    s.restarts = j.value("restarts", std::vector<std::uint64_t>{});
    for (const auto& c : j.at("configs")) {
      const auto v = c.get<std::vector<double>>();
      s.configs.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    if (s.configs.size() != s.residuals.size()) {
      throw InvalidArgument("singular set: configs and residuals differ in length");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("singular set json: ") + e.what());
  }
}

inline void save_singular_set(const SingularSet& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << singular_set_to_json(s).dump(1) << '\n';
}

inline SingularSet load_singular_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return singular_set_from_json(j);
}

}  // namespace virtdyn
