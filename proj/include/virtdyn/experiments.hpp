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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "virtdyn/analysis.hpp"
#include "virtdyn/chain_io.hpp"
#include "virtdyn/closed_loop.hpp"
#include "virtdyn/csv.hpp"
#include "virtdyn/mappings.hpp"
#include "virtdyn/parallel.hpp"
#include "virtdyn/random.hpp"
#include "virtdyn/singularity_search.hpp"
#include "virtdyn/version.hpp"

namespace virtdyn::experiments {

using nlohmann::json;

enum class Experiment { kDecoupling, kConditioning, kSingularPass, kGlobalSingular, kTiming, kClosedLoop };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::kDecoupling: return "decoupling";
    case Experiment::kConditioning: return "conditioning";
    case Experiment::kSingularPass: return "singular-pass";
    case Experiment::kGlobalSingular: return "global-singular";
    case Experiment::kTiming: return "timing";
    case Experiment::kClosedLoop: return "closed-loop";
  }
  return "?";
}

inline Experiment experiment_from_string(const std::string& s) {
  for (auto e : {Experiment::kDecoupling, Experiment::kConditioning, Experiment::kSingularPass,
                 Experiment::kGlobalSingular, Experiment::kTiming, Experiment::kClosedLoop}) {
    if (to_string(e) == s) return e;
  }
  throw InvalidArgument("unknown experiment '" + s + "'");
}

/// `count` points spaced evenly in log10 between lo and hi (inclusive).
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (count == 1) return {lo};
  std::vector<double> g(count);
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

inline std::vector<double> default_gamma_grid() { return log_grid(1.0, 1e4, 9); }
inline std::vector<double> default_alpha_grid() { return log_grid(1e-3, 1.1, 9); }

/// Five UR10 waypoints; linear interpolation between them crosses the wrist
/// singularity (q5 = 0) twice in quick succession, then the elbow (q3 = 0),
/// then a shoulder singularity.
inline std::vector<JointVector> default_pass_waypoints() {
  const std::vector<std::vector<double>> w{
      {0.0, -1.2, 1.5, -1.0, 0.5, 0.0},
      {0.15, -1.1, 1.3, -0.9, -0.2, 0.2},
      {0.3, -1.0, 1.1, -0.8, 0.5, 0.4},
      {0.6, -0.9, -0.6, -0.5, 0.9, 0.6},
      {0.8, -1.5, -1.2, -0.5, 0.9, 0.8},
  };
  std::vector<JointVector> out;
  for (const auto& v : w) out.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), 6));
  return out;
}

struct ClosedLoopConfig {
  double gamma = 1e3;
  Matrix6 gain = 10.0 * Matrix6::Identity();
  double damping_ratio = 1.0;
  double dt = 1e-3;
  int steps = 20000;
  bool reset_rest = false;
  /// Targets are g(q0 + d) with d ~ U[-perturbation, perturbation]^n. Zero
  /// gives the fixed point g(q0).
  double perturbation = 0.3;
  /// Start and target must both have |det J| above this.
  double min_manipulability = 1e-3;
  std::optional<JointVector> q0;
  std::optional<JointVector> target_q;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::kDecoupling;
  std::uint64_t seed = 1;
  std::size_t samples = 0;  // 0: experiment default
  std::vector<double> gammas;  // empty: experiment default
  std::vector<double> alphas;  // empty: experiment default
  std::filesystem::path out = "out";
  std::string chain = "ur10";  // "ur10" or a chain JSON path
  double m_e = 1.0;
  double ip_e = 1.0;
  unsigned threads = 0;
  std::size_t shards = 16;

  MedianMode median_mode = MedianMode::kFiltered;

  std::vector<JointVector> waypoints = default_pass_waypoints();
  std::size_t pass_resolution = 2001;

  std::string singular_set;  // load instead of searching when set
  PsoParams pso;
  bool allow_duplicates = false;

  std::size_t warmup = 1000;
  double sdls_limit = std::numbers::pi / 4.0;

  ClosedLoopConfig closed_loop;

  std::size_t resolved_samples() const {
    if (samples) return samples;
    switch (experiment) {
      case Experiment::kDecoupling: return 100000;
      case Experiment::kConditioning: return 1000;
      case Experiment::kSingularPass: return pass_resolution;
      case Experiment::kGlobalSingular: return 1000;
      case Experiment::kTiming: return 100000;
      case Experiment::kClosedLoop: return 1;
    }
    return 1;
  }

  std::vector<double> resolved_gammas() const {
    if (!gammas.empty()) return gammas;
    switch (experiment) {
      case Experiment::kDecoupling: return {1.0, 1e3};
      case Experiment::kSingularPass: return {1.0, 10.0, 100.0, 1e3};
      case Experiment::kTiming: return {1e3};
      case Experiment::kClosedLoop: return {closed_loop.gamma};
      default: return default_gamma_grid();
    }
  }

  std::vector<double> resolved_alphas() const {
    if (!alphas.empty()) return alphas;
    switch (experiment) {
      case Experiment::kSingularPass: return {0.1};
      case Experiment::kTiming: return {0.1};
      default: return default_alpha_grid();
    }
  }

  void validate() const {
    if (resolved_samples() < 1) throw InvalidArgument("sample count must be >= 1");
    if (shards < 1) throw InvalidArgument("shard count must be >= 1");
    for (double g : resolved_gammas()) {
      if (!(g > 0.0)) throw InvalidArgument("gamma values must be > 0");
    }
    for (double a : resolved_alphas()) {
      if (!(a >= 0.0)) throw InvalidArgument("alpha values must be >= 0");
    }
    VirtualModelParams{1.0, m_e, ip_e}.validate();
    if (experiment == Experiment::kSingularPass && waypoints.size() < 2) {
      throw InvalidArgument("singular-pass needs at least two waypoints");
    }
    if (experiment == Experiment::kClosedLoop) check_gain(closed_loop.gain);
    pso.validate();
  }
};

namespace detail {

inline std::vector<double> to_std(const JointVector& v) { return {v.data(), v.data() + v.size()}; }

inline JointVector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> read_list(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  return j.get<std::vector<double>>();
}

}  // namespace detail

inline json config_to_json(const ExperimentConfig& c) {
  json waypoints = json::array();
  for (const auto& w : c.waypoints) waypoints.push_back(detail::to_std(w));
  json gain = json::array();
  for (int r = 0; r < 6; ++r) {
    gain.push_back(std::vector<double>(6));
    for (int k = 0; k < 6; ++k) gain[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = c.closed_loop.gain(r, k);
  }
  json cl = {{"gamma", c.closed_loop.gamma},
             {"gain", gain},
             {"damping_ratio", c.closed_loop.damping_ratio},
             {"dt", c.closed_loop.dt},
             {"steps", c.closed_loop.steps},
             {"reset_rest", c.closed_loop.reset_rest},
             {"perturbation", c.closed_loop.perturbation},
             {"min_manipulability", c.closed_loop.min_manipulability}};
  if (c.closed_loop.q0) cl["q0"] = detail::to_std(*c.closed_loop.q0);
  if (c.closed_loop.target_q) cl["target_q"] = detail::to_std(*c.closed_loop.target_q);
  return {{"experiment", to_string(c.experiment)},
          {"seed", c.seed},
          {"samples", c.resolved_samples()},
          {"gamma", c.resolved_gammas()},
          {"alpha", c.resolved_alphas()},
          {"out", c.out.string()},
          {"chain", c.chain},
          {"m_e", c.m_e},
          {"ip_e", c.ip_e},
          {"shards", c.shards},
          {"median", c.median_mode == MedianMode::kFiltered ? "filtered" : "plain"},
          {"waypoints", waypoints},
          {"pass_resolution", c.pass_resolution},
          {"singular_set", c.singular_set},
          {"pso", pso_params_to_json(c.pso)},
          {"allow_duplicates", c.allow_duplicates},
          {"warmup", c.warmup},
          {"sdls_limit", c.sdls_limit},
          {"closed_loop", cl}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline ExperimentConfig config_from_json(const json& j, ExperimentConfig c = {}) {
  static const std::vector<std::string> known{
      "experiment", "seed", "samples", "gamma", "alpha", "out", "chain", "m_e", "ip_e",
      "threads", "shards", "median", "waypoints", "pass_resolution", "singular_set", "pso",
      "allow_duplicates", "warmup", "sdls_limit", "closed_loop"};
  try {
    for (const auto& [key, _] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw InvalidArgument("config: unknown key '" + key + "'");
      }
    }
    if (j.contains("experiment")) c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("samples")) {
      if (j.at("samples").get<long long>() < 1) throw InvalidArgument("config: samples must be >= 1");
      c.samples = j.at("samples").get<std::size_t>();
    }
    if (j.contains("gamma")) c.gammas = detail::read_list(j.at("gamma"));
    if (j.contains("alpha")) c.alphas = detail::read_list(j.at("alpha"));
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    c.chain = j.value("chain", c.chain);
    c.m_e = j.value("m_e", c.m_e);
    c.ip_e = j.value("ip_e", c.ip_e);
    c.threads = j.value("threads", c.threads);
    c.shards = j.value("shards", c.shards);
    if (j.contains("median")) {
      const auto m = j.at("median").get<std::string>();
      if (m != "filtered" && m != "plain") throw InvalidArgument("config: median must be filtered|plain");
      c.median_mode = m == "plain" ? MedianMode::kPlain : MedianMode::kFiltered;
    }
    if (j.contains("waypoints")) {
      c.waypoints.clear();
      for (const auto& w : j.at("waypoints")) c.waypoints.push_back(detail::from_std(w.get<std::vector<double>>()));
    }
    c.pass_resolution = j.value("pass_resolution", c.pass_resolution);
    c.singular_set = j.value("singular_set", c.singular_set);
    if (j.contains("pso")) c.pso = pso_params_from_json(j.at("pso"), c.pso);
    c.allow_duplicates = j.value("allow_duplicates", c.allow_duplicates);
    c.warmup = j.value("warmup", c.warmup);
    c.sdls_limit = j.value("sdls_limit", c.sdls_limit);
    if (j.contains("closed_loop")) {
      const json& cl = j.at("closed_loop");
      auto& o = c.closed_loop;
      o.gamma = cl.value("gamma", o.gamma);
      if (cl.contains("gain")) {
        const json& g = cl.at("gain");
        if (g.is_number()) {
          o.gain = g.get<double>() * Matrix6::Identity();
        } else {
          if (g.size() != 6) throw InvalidArgument("config: closed_loop.gain must be 6x6");
          for (int r = 0; r < 6; ++r) {
            const auto row = g.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
            if (row.size() != 6) throw InvalidArgument("config: closed_loop.gain must be 6x6");
            for (int k = 0; k < 6; ++k) o.gain(r, k) = row[static_cast<std::size_t>(k)];
          }
        }
      }
      o.damping_ratio = cl.value("damping_ratio", o.damping_ratio);
      o.dt = cl.value("dt", o.dt);
      o.steps = cl.value("steps", o.steps);
      o.reset_rest = cl.value("reset_rest", o.reset_rest);
      o.perturbation = cl.value("perturbation", o.perturbation);
      o.min_manipulability = cl.value("min_manipulability", o.min_manipulability);
      if (cl.contains("q0")) o.q0 = detail::from_std(cl.at("q0").get<std::vector<double>>());
      if (cl.contains("target_q")) o.target_q = detail::from_std(cl.at("target_q").get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  return c;
}

inline KinematicChain resolve_chain(const ExperimentConfig& c) {
  if (c.chain == "ur10") return ur10_chain();
  return load_chain(c.chain);
}

/// q_i ~ U[-pi, pi], independently per joint.
inline JointVector uniform_configuration(Rng& rng, int dof) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  JointVector q(dof);
  for (int i = 0; i < dof; ++i) q[i] = u(rng);
  return q;
}

/// Metrics of J^-1 straight from the singular values of J. sigma_max is
/// reported as infinite once it exceeds 1e12.
inline SvdMetrics ji_metrics(const Matrix6& jac) {
  const SvdMetrics j = svd_metrics(jac);
  SvdMetrics out;
  out.sigma_min = j.sigma_max > 0.0 ? 1.0 / j.sigma_max : kInfinity;
  out.sigma_max = j.sigma_min > 0.0 ? 1.0 / j.sigma_min : kInfinity;
  if (out.sigma_max > 1e12) out.sigma_max = kInfinity;
  out.kappa = j.kappa;
  return out;
}

/// Evaluates mapping metrics for several specs at one configuration; FD specs
/// use their own virtual chain.
class MappingBank {
 public:
  MappingBank(const KinematicChain& base, std::vector<MappingSpec> specs, double m_e, double ip_e)
      : specs_(std::move(specs)) {
    for (const auto& s : specs_) {
      s.validate();
      chains_.push_back(s.method == Method::FD ? build_virtual_chain(base, {s.gamma, m_e, ip_e}) : base);
    }
  }

  const std::vector<MappingSpec>& specs() const { return specs_; }
  const KinematicChain& chain(std::size_t i) const { return chains_[i]; }

  MappingMatrix matrix(std::size_t i, const JointVector& q, MappingKind kind) const {
    return kind == MappingKind::a ? mapping_matrix_a(chains_[i], q, specs_[i])
                                  : mapping_matrix_b(chains_[i], q, specs_[i]);
  }

 private:
  std::vector<MappingSpec> specs_;
  std::vector<KinematicChain> chains_;
};

// ---------------------------------------------------------------- decoupling

struct DecouplingEntry {
  MappingSpec spec;
  MatrixStats stats;
  std::size_t skipped = 0;  // samples where the mapping could not be formed
};

inline std::vector<DecouplingEntry> compute_decoupling(const KinematicChain& base,
                                                       const ExperimentConfig& cfg) {
  std::vector<MappingSpec> specs{MappingSpec::ji(), MappingSpec::jt()};
  for (double g : cfg.resolved_gammas()) specs.push_back(MappingSpec::fd(g));
  const MappingBank bank(base, specs, cfg.m_e, cfg.ip_e);
  const std::size_t total = cfg.resolved_samples();
  const std::size_t shards = std::min(cfg.shards, total);

  struct Shard {
    std::vector<MatrixStatsAccumulator> acc;
    std::vector<std::size_t> skipped;
  };
  std::vector<Shard> results(shards);
  parallel_for(shards, cfg.threads, [&](std::size_t s) {
    Shard& out = results[s];
    out.acc.resize(specs.size());
    out.skipped.assign(specs.size(), 0);
    Rng rng = make_rng(cfg.seed, s);
    const std::size_t begin = total * s / shards;
    const std::size_t end = total * (s + 1) / shards;
    for (std::size_t k = begin; k < end; ++k) {
      const JointVector q = uniform_configuration(rng, base.dof());
      for (std::size_t m = 0; m < specs.size(); ++m) {
        try {
          out.acc[m].add(bank.matrix(m, q, MappingKind::b).matrix);
        } catch (const SingularConfiguration&) {
          ++out.skipped[m];
        }
      }
    }
  });

  std::vector<DecouplingEntry> entries;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    MatrixStatsAccumulator acc;
    std::size_t skipped = 0;
    for (const auto& r : results) {
      acc.merge(r.acc[m]);
      skipped += r.skipped[m];
    }
    entries.push_back({specs[m], acc.result(), skipped});
  }
  return entries;
}

// -------------------------------------------------------------- conditioning

struct ConditioningPoint {
  MappingSpec spec;
  double median_kappa = 0.0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

/// Median kappa of the type (b) matrix per parameter value, each point on its
/// own fresh set of uniform configurations.
inline std::vector<ConditioningPoint> compute_conditioning(const KinematicChain& base,
                                                           const ExperimentConfig& cfg) {
  std::vector<MappingSpec> specs;
  for (double g : cfg.resolved_gammas()) specs.push_back(MappingSpec::fd(g));
  for (double a : cfg.resolved_alphas()) specs.push_back(MappingSpec::dls(a));
  const MappingBank bank(base, specs, cfg.m_e, cfg.ip_e);
  const std::size_t n = cfg.resolved_samples();

  std::vector<ConditioningPoint> points(specs.size());
  parallel_for(specs.size(), cfg.threads, [&](std::size_t m) {
    Rng rng = make_rng(cfg.seed, 1000 + m);
    std::vector<double> kappas;
    kappas.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const JointVector q = uniform_configuration(rng, base.dof());
      try {
        kappas.push_back(svd_metrics(bank.matrix(m, q, MappingKind::b).matrix).kappa);
      } catch (const SingularConfiguration&) {
        kappas.push_back(kInfinity);
      }
    }
    const RobustMedian med = robust_median_detail(std::move(kappas), cfg.median_mode);
    points[m] = {specs[m], med.median, med.kept, med.dropped};
  });
  return points;
}

// ------------------------------------------------------------- singular pass

inline JointVector pass_configuration(const std::vector<JointVector>& waypoints, double s) {
  const auto segments = static_cast<double>(waypoints.size() - 1);
  const double x = std::clamp(s, 0.0, 1.0) * segments;
  const auto i = std::min(static_cast<std::size_t>(x), waypoints.size() - 2);
  const double t = x - static_cast<double>(i);
  return (1.0 - t) * waypoints[i] + t * waypoints[i + 1];
}

struct PassSample {
  double s = 0.0;
  double yoshikawa = 0.0;
  bool crossing = false;
  std::vector<SvdMetrics> metrics;  // one per spec, type (a)
};

struct SingularPassResult {
  std::vector<MappingSpec> specs;
  std::vector<PassSample> samples;
  std::size_t singular_points = 0;  // samples with |det J| < 1e-6
  std::vector<std::string> warnings;
};

/// Dense sampling along the waypoint path. Every sign change of det J between
/// grid points is refined by bisection and inserted as an extra sample.
inline SingularPassResult compute_singular_pass(const KinematicChain& base,
                                                const ExperimentConfig& cfg) {
  std::vector<MappingSpec> specs{MappingSpec::ji(), MappingSpec::jt()};
  for (double a : cfg.resolved_alphas()) specs.push_back(MappingSpec::dls(a));
  for (double g : cfg.resolved_gammas()) specs.push_back(MappingSpec::fd(g));
  const MappingBank bank(base, specs, cfg.m_e, cfg.ip_e);
  const std::size_t grid = std::max<std::size_t>(2, cfg.resolved_samples());

  auto det = [&](double s) {
    return Matrix6(geometric_jacobian(base, pass_configuration(cfg.waypoints, s))).determinant();
  };

  std::vector<std::pair<double, bool>> points;
  double prev = det(0.0);
  points.emplace_back(0.0, false);
  for (std::size_t k = 1; k < grid; ++k) {
    const double s1 = static_cast<double>(k) / static_cast<double>(grid - 1);
    const double d1 = det(s1);
    if ((prev < 0.0) != (d1 < 0.0) && prev != 0.0 && d1 != 0.0) {
      double lo = static_cast<double>(k - 1) / static_cast<double>(grid - 1);
      double hi = s1;
      double dlo = prev;
      for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double dm = det(mid);
        if ((dm < 0.0) == (dlo < 0.0)) {
          lo = mid;
          dlo = dm;
        } else {
          hi = mid;
        }
      }
      points.emplace_back(std::abs(det(lo)) <= std::abs(det(hi)) ? lo : hi, true);
    }
    points.emplace_back(s1, false);
    prev = d1;
  }

  SingularPassResult result;
  result.specs = specs;
  result.samples.resize(points.size());
  parallel_for(points.size(), cfg.threads, [&](std::size_t k) {
    PassSample& ps = result.samples[k];
    ps.s = points[k].first;
    ps.crossing = points[k].second;
    const JointVector q = pass_configuration(cfg.waypoints, ps.s);
    const Matrix6 jac = geometric_jacobian(base, q);
    ps.yoshikawa = yoshikawa(jac);
    for (std::size_t m = 0; m < specs.size(); ++m) {
      if (specs[m].method == Method::JI) {
        ps.metrics.push_back(ji_metrics(jac));
      } else {
        ps.metrics.push_back(svd_metrics(bank.matrix(m, q, MappingKind::a).matrix));
      }
    }
  });
  for (const auto& ps : result.samples) result.singular_points += ps.yoshikawa < 1e-6;
  if (result.singular_points < 4) {
    result.warnings.push_back("trajectory reaches only " + std::to_string(result.singular_points) +
                              " samples with |det J| < 1e-6 (expected >= 4)");
  }
  return result;
}

// ----------------------------------------------------------- global singular

struct GlobalPoint {
  MappingSpec spec;
  double mean_sigma_min = 0.0;
  double mean_sigma_max = 0.0;
};

struct GlobalSingularResult {
  GlobalPoint ji;
  GlobalPoint jt;
  std::vector<GlobalPoint> fd;
  std::vector<GlobalPoint> dls;
};

inline SingularSet obtain_singular_set(const KinematicChain& base, const ExperimentConfig& cfg) {
  if (!cfg.singular_set.empty()) return load_singular_set(cfg.singular_set);
  CollectOptions opts;
  opts.allow_duplicates = cfg.allow_duplicates;
  opts.threads = cfg.threads;
  return collect_singular_set(base, cfg.resolved_samples(), cfg.pso, cfg.seed, opts);
}

/// Mean sigma_min / sigma_max of the type (a) matrices over a singular set.
inline GlobalSingularResult compute_global_singular(const KinematicChain& base,
                                                    const ExperimentConfig& cfg,
                                                    const SingularSet& set) {
  if (set.configs.empty()) throw InvalidArgument("global-singular: empty singular set");
  std::vector<MappingSpec> specs{MappingSpec::ji(), MappingSpec::jt()};
  for (double g : cfg.resolved_gammas()) specs.push_back(MappingSpec::fd(g));
  for (double a : cfg.resolved_alphas()) specs.push_back(MappingSpec::dls(a));
  const MappingBank bank(base, specs, cfg.m_e, cfg.ip_e);

  std::vector<std::vector<SvdMetrics>> per_config(set.configs.size());
  parallel_for(set.configs.size(), cfg.threads, [&](std::size_t c) {
    const JointVector& q = set.configs[c];
    const Matrix6 jac = geometric_jacobian(base, q);
    for (std::size_t m = 0; m < specs.size(); ++m) {
      per_config[c].push_back(specs[m].method == Method::JI
                                  ? ji_metrics(jac)
                                  : svd_metrics(bank.matrix(m, q, MappingKind::a).matrix));
    }
  });

  GlobalSingularResult r;
  const auto count = static_cast<double>(set.configs.size());
  for (std::size_t m = 0; m < specs.size(); ++m) {
    GlobalPoint p{specs[m]};
    for (const auto& pc : per_config) {
      p.mean_sigma_min += pc[m].sigma_min / count;
      p.mean_sigma_max += pc[m].sigma_max / count;
    }
    switch (specs[m].method) {
      case Method::JI: r.ji = p; break;
      case Method::JT: r.jt = p; break;
      case Method::FD: r.fd.push_back(p); break;
      default: r.dls.push_back(p); break;
    }
  }
  return r;
}

// -------------------------------------------------------------------- timing

struct TimingStats {
  MappingSpec spec;
  std::size_t samples = 0;
  std::size_t failures = 0;
  double min_ns = 0, q1_ns = 0, median_ns = 0, q3_ns = 0, max_ns = 0, mean_ns = 0;
};

struct TimingResult {
  std::vector<TimingStats> methods;
  std::size_t batch = 1;  // calls per timed block; >1 when the clock is too coarse
  double clock_resolution_ns = 0.0;
};

/// Wall-clock cost of q'' = M(q) f with f = 1. Every sample draws one q and
/// times each method on it in turn; q generation is outside the timed region.
/// Strictly single-threaded.
inline TimingResult compute_timing(const KinematicChain& base, const ExperimentConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  std::vector<Mapper> mappers;
  mappers.emplace_back(base, MappingSpec::ji());
  mappers.emplace_back(base, MappingSpec::jt());
  for (double a : cfg.resolved_alphas()) mappers.emplace_back(base, MappingSpec::dls(a));
  mappers.emplace_back(base, MappingSpec::sdls(cfg.sdls_limit));
  for (double g : cfg.resolved_gammas()) mappers.emplace_back(base, MappingSpec::fd(g), cfg.m_e, cfg.ip_e);

  TimingResult result;
  {
    // Smallest observable tick of the clock.
    double best = kInfinity;
    for (int i = 0; i < 1000; ++i) {
      const auto a = Clock::now();
      auto b = Clock::now();
      while (b == a) b = Clock::now();
      best = std::min(best, std::chrono::duration<double, std::nano>(b - a).count());
    }
    result.clock_resolution_ns = best;
    result.batch = best > 50.0 ? static_cast<std::size_t>(std::ceil(best / 5.0)) : 1;
  }

  const Vector6 force = Vector6::Ones();
  Rng rng = make_rng(cfg.seed, 7);
  const std::size_t n = cfg.resolved_samples();
  std::vector<std::vector<double>> durations(mappers.size());
  for (auto& d : durations) d.reserve(n);
  std::vector<std::size_t> failures(mappers.size(), 0);
  volatile double sink = 0.0;
  std::vector<JointVector> qs(result.batch);

  for (std::size_t k = 0; k < cfg.warmup + n; ++k) {
    for (auto& q : qs) q = uniform_configuration(rng, base.dof());
    for (std::size_t m = 0; m < mappers.size(); ++m) {
      bool failed = false;
      const auto t0 = Clock::now();
      for (const auto& q : qs) {
        try {
          sink = sink + mappers[m].apply(q, force)[0];
        } catch (const SingularConfiguration&) {
          failed = true;
        }
      }
      const auto t1 = Clock::now();
      if (k < cfg.warmup) continue;
      if (failed) {
        ++failures[m];
        continue;
      }
      durations[m].push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() /
                             static_cast<double>(result.batch));
    }
  }

  for (std::size_t m = 0; m < mappers.size(); ++m) {
    auto& d = durations[m];
    std::sort(d.begin(), d.end());
    TimingStats s;
    s.spec = mappers[m].spec();
    s.samples = d.size();
    s.failures = failures[m];
    if (!d.empty()) {
      s.min_ns = d.front();
      s.max_ns = d.back();
      s.q1_ns = sorted_quantile(d, 0.25);
      s.median_ns = sorted_quantile(d, 0.5);
      s.q3_ns = sorted_quantile(d, 0.75);
      double sum = 0.0;
      for (double v : d) sum += v;
      s.mean_ns = sum / static_cast<double>(d.size());
    }
    result.methods.push_back(s);
  }
  return result;
}

// --------------------------------------------------------------- closed loop

struct ClosedLoopRun {
  JointVector q0;
  JointVector target_q;
  ClosedLoopResult result;
  bool diverged = false;
  std::string diagnostic;
};

/// Start/target joint pairs: explicit ones from the config, otherwise seeded
/// draws with both ends away from singularities.
inline std::vector<std::pair<JointVector, JointVector>> closed_loop_cases(const KinematicChain& base,
                                                                          const ExperimentConfig& cfg) {
  const auto& o = cfg.closed_loop;
  const std::size_t count = cfg.resolved_samples();
  std::vector<std::pair<JointVector, JointVector>> cases;
  Rng rng = make_rng(cfg.seed, 11);
  std::uniform_real_distribution<double> delta(-o.perturbation, o.perturbation);
  auto manip = [&](const JointVector& q) { return yoshikawa(geometric_jacobian(base, q)); };
  for (std::size_t i = 0; i < count; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100000) throw Infeasible("closed-loop: no nonsingular start/target pair found");
      JointVector q0 = o.q0 ? *o.q0 : uniform_configuration(rng, base.dof());
      JointVector qt = q0;
      if (o.target_q) {
        qt = *o.target_q;
      } else {
        for (Eigen::Index k = 0; k < qt.size(); ++k) qt[k] += delta(rng);
      }
      const bool fixed = o.q0.has_value() && (o.target_q.has_value() || o.perturbation == 0.0);
      if (fixed || (manip(q0) > o.min_manipulability && manip(qt) > o.min_manipulability)) {
        check_dimension(base, q0);
        check_dimension(base, qt);
        cases.emplace_back(q0, qt);
        break;
      }
    }
  }
  return cases;
}

inline ClosedLoopOptions closed_loop_options(const ExperimentConfig& cfg) {
  ClosedLoopOptions opts;
  opts.gain = cfg.closed_loop.gain;
  opts.damping_ratio = cfg.closed_loop.damping_ratio;
  opts.dt = cfg.closed_loop.dt;
  opts.steps = cfg.closed_loop.steps;
  opts.integration = cfg.closed_loop.reset_rest ? Integration::kResetToRest
                                                : Integration::kSemiImplicitEuler;
  return opts;
}

inline std::vector<ClosedLoopRun> compute_closed_loop(const KinematicChain& base,
                                                      const ExperimentConfig& cfg) {
  const ClosedLoopOptions opts = closed_loop_options(cfg);
  check_gain(opts.gain);
  const VirtualModelParams params{cfg.resolved_gammas().front(), cfg.m_e, cfg.ip_e};
  params.validate();
  const auto cases = closed_loop_cases(base, cfg);
  std::vector<ClosedLoopRun> runs(cases.size());
  parallel_for(cases.size(), cfg.threads, [&](std::size_t i) {
    ClosedLoopRun& run = runs[i];
    run.q0 = cases[i].first;
    run.target_q = cases[i].second;
    const Pose target = forward_kinematics(base, run.target_q);
    try {
      run.result = closed_loop_simulate(base, params, run.q0, target, opts);
    } catch (const Divergence& e) {
      run.diverged = true;
      run.diagnostic = e.what();
    }
  });
  return runs;
}

// ------------------------------------------------------------------- output

namespace detail {

inline std::string file_label(const MappingSpec& s) {
  char buf[64];
  switch (s.method) {
    case Method::FD: std::snprintf(buf, sizeof buf, "FD_g%g", s.gamma); return buf;
    case Method::DLS: std::snprintf(buf, sizeof buf, "DLS_a%g", s.alpha); return buf;
    case Method::SDLS: return "SDLS";
    default: return to_string(s.method);
  }
}

inline std::string param(const MappingSpec& s) {
  const double p = s.parameter();
  return std::isnan(p) ? std::string{} : format_number(p);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace detail

struct RunOutput {
  std::vector<std::filesystem::path> files;
  json metadata = json::object();
  int exit_code = 0;
};

inline void write_decoupling(const std::vector<DecouplingEntry>& entries, const std::filesystem::path& dir,
                             RunOutput& out) {
  json meta = json::array();
  for (const auto& e : entries) {
    const auto path = dir / ("decoupling_" + detail::file_label(e.spec) + ".csv");
    CsvWriter csv(path, {"method", "parameter", "stat", "row", "col", "value"});
    for (const char* stat : {"mean", "std"}) {
      const Matrix6& m = std::string(stat) == "mean" ? e.stats.mean : e.stats.std;
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          csv.row({to_string(e.spec.method), detail::param(e.spec), stat, std::to_string(r),
                   std::to_string(c), format_number(m(r, c))});
        }
      }
    }
    out.files.push_back(path);
    meta.push_back({{"method", e.spec.label()}, {"samples", e.stats.sample_count}, {"skipped", e.skipped}});
  }
  out.metadata["decoupling"] = meta;
}

inline void write_conditioning(const std::vector<ConditioningPoint>& points,
                               const std::filesystem::path& dir, RunOutput& out) {
  for (Method method : {Method::FD, Method::DLS}) {
    const auto path = dir / ("conditioning_" + to_string(method) + ".csv");
    CsvWriter csv(path, {"method", "parameter", "median_kappa", "kept", "dropped"});
    for (const auto& p : points) {
      if (p.spec.method != method) continue;
      csv.row({to_string(method), detail::param(p.spec), format_number(p.median_kappa),
               std::to_string(p.kept), std::to_string(p.dropped)});
    }
    out.files.push_back(path);
  }
}

inline void write_singular_pass(const SingularPassResult& r, const std::filesystem::path& dir,
                                RunOutput& out) {
  {
    const auto path = dir / "singular-pass_trajectory.csv";
    CsvWriter csv(path, {"s", "yoshikawa", "crossing"});
    for (const auto& ps : r.samples) {
      csv.row({format_number(ps.s), format_number(ps.yoshikawa), ps.crossing ? "1" : "0"});
    }
    out.files.push_back(path);
  }
  for (std::size_t m = 0; m < r.specs.size(); ++m) {
    const auto path = dir / ("singular-pass_" + detail::file_label(r.specs[m]) + ".csv");
    CsvWriter csv(path, {"s", "method", "parameter", "sigma_min", "sigma_max"});
    for (const auto& ps : r.samples) {
      csv.row({format_number(ps.s), to_string(r.specs[m].method), detail::param(r.specs[m]),
               format_number(ps.metrics[m].sigma_min), format_number(ps.metrics[m].sigma_max)});
    }
    out.files.push_back(path);
  }
  out.metadata["singular_points"] = r.singular_points;
  out.metadata["warnings"] = r.warnings;
}

inline void write_global_singular(const GlobalSingularResult& r, const std::filesystem::path& dir,
                                  RunOutput& out) {
  const std::vector<std::string> header{"method", "parameter", "mean_sigma_min", "mean_sigma_max",
                                        "relative_manipulability", "relative_instability"};
  auto row = [&](CsvWriter& csv, const GlobalPoint& p) {
    csv.row({to_string(p.spec.method), detail::param(p.spec), format_number(p.mean_sigma_min),
             format_number(p.mean_sigma_max), format_number(p.mean_sigma_min / r.ji.mean_sigma_min),
             format_number(p.mean_sigma_max / r.jt.mean_sigma_max)});
  };
  for (const auto& [name, points] :
       {std::pair{std::string("JI"), std::vector<GlobalPoint>{r.ji}},
        std::pair{std::string("JT"), std::vector<GlobalPoint>{r.jt}},
        std::pair{std::string("FD"), r.fd}, std::pair{std::string("DLS"), r.dls}}) {
    const auto path = dir / ("global-singular_" + name + ".csv");
    CsvWriter csv(path, header);
    for (const auto& p : points) row(csv, p);
    out.files.push_back(path);
  }
}

inline void write_timing(const TimingResult& r, const std::filesystem::path& dir, RunOutput& out) {
  for (const auto& s : r.methods) {
    const auto path = dir / ("timing_" + detail::file_label(s.spec) + ".csv");
    CsvWriter csv(path, {"method", "parameter", "samples", "failures", "min_ns", "q1_ns", "median_ns",
                         "q3_ns", "max_ns", "mean_ns"});
    csv.row({to_string(s.spec.method), detail::param(s.spec), std::to_string(s.samples),
             std::to_string(s.failures), format_number(s.min_ns), format_number(s.q1_ns),
             format_number(s.median_ns), format_number(s.q3_ns), format_number(s.max_ns),
             format_number(s.mean_ns)});
    out.files.push_back(path);
  }
  out.metadata["timing"] = {{"batch", r.batch},
                            {"clock_resolution_ns", r.clock_resolution_ns},
                            {"includes_q_generation", false}};
}

inline void write_closed_loop(const std::vector<ClosedLoopRun>& runs, const std::filesystem::path& dir,
                              RunOutput& out) {
  const auto path = dir / "closed-loop_FD.csv";
  CsvWriter csv(path, {"target", "step", "error_norm", "event"});
  json diagnostics = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const auto& s : runs[i].result.trajectory) {
      csv.row({std::to_string(i), std::to_string(s.step), format_number(s.error_norm), ""});
    }
    if (runs[i].diverged) {
      csv.row({std::to_string(i), "", "", "diverged"});
      diagnostics.push_back({{"target", i}, {"message", runs[i].diagnostic}});
      out.exit_code = 2;
    }
  }
  out.files.push_back(path);
  out.metadata["diverged"] = diagnostics;
}

/// Runs one experiment end to end: computes, writes CSVs, singular_set.json
/// (global-singular) and the config.json sidecar.
inline RunOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const KinematicChain base = resolve_chain(cfg);
  std::filesystem::create_directories(cfg.out);
  RunOutput out;
  switch (cfg.experiment) {
    case Experiment::kDecoupling:
      write_decoupling(compute_decoupling(base, cfg), cfg.out, out);
      break;
    case Experiment::kConditioning:
      write_conditioning(compute_conditioning(base, cfg), cfg.out, out);
      break;
    case Experiment::kSingularPass:
      write_singular_pass(compute_singular_pass(base, cfg), cfg.out, out);
      break;
    case Experiment::kGlobalSingular: {
      const SingularSet set = obtain_singular_set(base, cfg);
      const auto path = cfg.out / "singular_set.json";
      save_singular_set(set, path);
      out.files.push_back(path);
      write_global_singular(compute_global_singular(base, cfg, set), cfg.out, out);
      out.metadata["singular_set_size"] = set.configs.size();
      break;
    }
    case Experiment::kTiming:
      write_timing(compute_timing(base, cfg), cfg.out, out);
      break;
    case Experiment::kClosedLoop:
      write_closed_loop(compute_closed_loop(base, cfg), cfg.out, out);
      break;
  }
  json files = json::array();
  for (const auto& f : out.files) files.push_back(f.filename().string());
  const json sidecar = {{"version", kVersion},
                        {"generated_at", detail::utc_timestamp()},
                        {"config", config_to_json(cfg)},
                        {"outputs", files},
                        {"metadata", out.metadata}};
  const auto path = cfg.out / "config.json";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << sidecar.dump(2) << '\n';
  out.files.push_back(path);
  return out;
}

}  // namespace virtdyn::experiments
