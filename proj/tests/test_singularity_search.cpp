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

#include <filesystem>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "virtdyn/analysis.hpp"
#include "virtdyn/singularity_search.hpp"

namespace virtdyn {
namespace {

PsoParams sphere_params() {
  PsoParams p;
  p.swarm_size = 30;
  p.max_iters = 300;
  p.bounds.assign(4, {-5.0, 5.0});
  return p;
}

double sphere(const Eigen::VectorXd& x) { return x.squaredNorm(); }

TEST(Pso, FindsSphereMinimum) {
  const PsoResult r = pso_minimize(sphere, sphere_params(), 3);
  EXPECT_LT(r.position.cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LT(r.value, 1e-6);
}

TEST(Pso, PeriodicBoundaryFindsMinimumAcrossTheSeam) {
  PsoParams p = sphere_params();
  p.boundary = BoundaryMode::kPeriodic;
  auto wave = [](const Eigen::VectorXd& x) {
    return (1.0 - (2.0 * testing::kPi * (x.array() - 4.9) / 10.0).cos()).sum();
  };
  for (std::uint64_t seed : {4, 5, 6}) {
    const PsoResult r = pso_minimize(wave, p, seed);
    EXPECT_LT(r.value, 1e-8);
    EXPECT_TRUE((r.position.array() >= -5.0).all() && (r.position.array() <= 5.0).all());
  }
}

TEST(Pso, SameSeedIsBitIdentical) {
  const PsoResult a = pso_minimize(sphere, sphere_params(), 17);
  const PsoResult b = pso_minimize(sphere, sphere_params(), 17);
  EXPECT_EQ(a.position, b.position);
  EXPECT_EQ(a.value, b.value);
  const PsoResult c = pso_minimize(sphere, sphere_params(), 18);
  EXPECT_NE(a.position, c.position);
}

TEST(Pso, StaysInsideBounds) {
  PsoParams p = sphere_params();
  p.bounds.assign(3, {1.0, 2.0});
  const PsoResult r = pso_minimize(sphere, p, 5);
  EXPECT_TRUE((r.position.array() >= 1.0).all() && (r.position.array() <= 2.0).all());
  EXPECT_LT((r.position.array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(Pso, StopValueEndsEarly) {
  PsoParams p = sphere_params();
  p.stop_value = 1.0;
  int calls = 0;
  const PsoResult r = pso_minimize([&](const Eigen::VectorXd& x) { ++calls; return sphere(x); }, p, 6);
  EXPECT_LE(r.value, 1.0);
  EXPECT_LT(calls, p.swarm_size * (p.max_iters + 1));
}

TEST(Pso, RejectsBadParams) {
  PsoParams p;
  p.swarm_size = 1;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.bounds = {{1.0, 1.0}};
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.tol = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Pso, Ur10RestartsReachTolerance) {
  const KinematicChain chain = ur10_chain();
  const PsoParams params;
  int hits = 0;
  const int restarts = 100;
  for (int r = 0; r < restarts; ++r) {
    const PsoResult res = pso_minimize(
        [&](const Eigen::VectorXd& q) { return ur_manipulability(chain, q); }, params,
        stream_seed(123, static_cast<std::uint64_t>(r)));
    hits += res.value <= params.tol;
  }
  EXPECT_GE(hits, 95);
}

TEST(SingularSet, SmallSetIsValidAndDeterministic) {
  const KinematicChain chain = ur10_chain();
  const PsoParams params;
  const SingularSet a = collect_singular_set(chain, 20, params, 99, {.threads = 1});
  ASSERT_EQ(a.configs.size(), 20u);
  for (std::size_t i = 0; i < a.configs.size(); ++i) {
    const Jacobian j = geometric_jacobian(chain, a.configs[i]);
    EXPECT_LE(yoshikawa(j), 1e-8);
    EXPECT_EQ(a.residuals[i], yoshikawa(j));
    EXPECT_LT(svd_metrics(j).sigma_min, 1e-6);
  }
  const SingularSet b = collect_singular_set(chain, 20, params, 99, {.threads = 3});
  EXPECT_EQ(a.configs, b.configs);
  EXPECT_EQ(a.restarts, b.restarts);
}

TEST(SingularSet, SingleConfiguration) {
  const SingularSet s = collect_singular_set(ur10_chain(), 1, PsoParams{}, 7);
  ASSERT_EQ(s.configs.size(), 1u);
  EXPECT_LE(s.residuals.front(), 1e-8);
}

TEST(SingularSet, DuplicatesAreSuppressed) {
  const SingularSet s = collect_singular_set(ur10_chain(), 15, PsoParams{}, 8);
  for (std::size_t i = 0; i < s.configs.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      EXPECT_GT((s.configs[i] - s.configs[k]).cwiseAbs().maxCoeff(), 1e-3);
    }
  }
}

TEST(SingularSet, ExhaustedBudgetIsInfeasible) {
  PsoParams p;
  p.max_iters = 0;
  p.swarm_size = 2;
  p.tol = 1e-300;
  EXPECT_THROW(collect_singular_set(ur10_chain(), 3, p, 1, {.max_restarts = 5}), Infeasible);
}

TEST(SingularSet, RejectsDimensionMismatch) {
  PsoParams p;
  p.bounds.resize(5);
  EXPECT_THROW(collect_singular_set(ur10_chain(), 1, p, 1), InvalidArgument);
}

TEST(SingularSet, JsonRoundTrip) {
  PsoParams params;
  params.boundary = BoundaryMode::kPeriodic;
  params.stop_value = 1e-9;
  const SingularSet s = collect_singular_set(ur10_chain(), 5, params, 11);
  const auto path = std::filesystem::temp_directory_path() / "virtdyn_singular_set.json";
  save_singular_set(s, path);
  const SingularSet back = load_singular_set(path);
  EXPECT_EQ(back.configs, s.configs);
  EXPECT_EQ(back.residuals, s.residuals);
  EXPECT_EQ(back.restarts, s.restarts);
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.attempted, s.attempted);
  EXPECT_EQ(back.params.boundary, BoundaryMode::kPeriodic);
  EXPECT_EQ(back.params.stop_value, 1e-9);
  EXPECT_EQ(back.params.bounds, s.params.bounds);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace virtdyn
