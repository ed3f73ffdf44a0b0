#pragma once

// Sampled audits of a chart and of the flow it is built from. Every audit is
// a deterministic function of its seed; reports carry the seed and the
// tolerances they were produced with.

#include "flowbox/common.hpp"
#include "flowbox/field.hpp"
#include "flowbox/flowbox.hpp"
#include "flowbox/integrate.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flowbox {

struct ConjugacyThresholds {
  double conjugacy = 1e-6;
  double roundtrip = 1e-7;
  double foot_invariance = 1e-6;
  double max_rejection_rate = 0.5;
};

struct ConjugacySample {
  Point x;
  double t = 0.0;
  double conjugacy = 0.0;
  double roundtrip = 0.0;
  double foot = 0.0;
  double time_shift = 0.0;
};

struct ConjugacyReport {
  int samples = 0;
  int attempts = 0;
  int rejected = 0;
  double max_conjugacy_residual = 0.0;
  double max_roundtrip_residual = 0.0;
  double max_foot_invariance_residual = 0.0;
  double max_time_shift_residual = 0.0;
  double t_max = 0.0;
  std::uint64_t seed = 0;
  ChartTolerances tolerances;
  ConjugacyThresholds thresholds;
  bool passed = false;
  std::string diagnostics;
  std::vector<ConjugacySample> per_sample;

  double rejection_rate() const { return attempts ? static_cast<double>(rejected) / attempts : 0.0; }
};

/// Samples x in W1 and |t| <= t_max, keeps pairs with F(x, t) in W1, and
/// measures |phi(F(x,t)) - phi(x) - t z|, |phi^{-1}(phi(x)) - x| and the
/// invariance p_{F(x,t)} = p_x, t_{F(x,t)} = t_x + t.
inline ConjugacyReport verify_conjugacy(const FlowBoxChart& chart, int samples, double t_max, std::uint64_t seed,
                                        const ConjugacyThresholds& thresholds = {}) {
  if (samples < 1) throw Error(ErrorKind::input, "need at least one sample");
  if (!(t_max > 0.0) || t_max > chart.T / 2.0 * (1.0 + 1e-12)) {
    throw Error(ErrorKind::input, "t_max must lie in (0, T/2]");
  }
  ConjugacyReport rep;
  rep.t_max = t_max;
  rep.seed = seed;
  rep.tolerances = chart.tolerances;
  rep.thresholds = thresholds;

  Rng rng(seed);
  const Point origin = Point::Zero(chart.dimension());
  const int max_attempts = 20 * samples;
  while (rep.samples < samples && rep.attempts < max_attempts) {
    ++rep.attempts;
    const Point x = rng.in_ball(origin, chart.r2);
    const double t = rng.uniform(-t_max, t_max);
    const Point y = local_flow(chart.normalized, x, t, chart.tolerances.integration);
    if (!chart.in_w1(y)) {
      ++rep.rejected;
      continue;
    }
    const PhiEvaluation ex = evaluate_phi(chart, x);
    const PhiEvaluation ey = evaluate_phi(chart, y);
    ConjugacySample s;
    s.x = x;
    s.t = t;
    s.conjugacy = (ey.value - ex.value - t * chart.z()).norm();
    s.roundtrip = (phi_inverse(chart, ex.value) - x).norm();
    s.foot = (ey.crossing.p_x - ex.crossing.p_x).norm();
    s.time_shift = std::abs(ey.crossing.t_x - (ex.crossing.t_x + t));
    rep.max_conjugacy_residual = std::max(rep.max_conjugacy_residual, s.conjugacy);
    rep.max_roundtrip_residual = std::max(rep.max_roundtrip_residual, s.roundtrip);
    rep.max_foot_invariance_residual = std::max(rep.max_foot_invariance_residual, s.foot);
    rep.max_time_shift_residual = std::max(rep.max_time_shift_residual, s.time_shift);
    rep.per_sample.push_back(std::move(s));
    ++rep.samples;
  }
  if (rep.samples == 0) {
    throw Error(ErrorKind::sampling, "every sampled flow left W1 (" + std::to_string(rep.attempts) + " attempts)");
  }

  std::vector<std::string> problems;
  if (rep.samples < samples) problems.push_back("only " + std::to_string(rep.samples) + " samples accepted");
  if (rep.rejection_rate() > thresholds.max_rejection_rate) {
    problems.push_back("rejection rate " + std::to_string(rep.rejection_rate()) + " above " +
                       std::to_string(thresholds.max_rejection_rate));
  }
  if (rep.max_conjugacy_residual > thresholds.conjugacy) problems.push_back("conjugacy residual above threshold");
  if (rep.max_roundtrip_residual > thresholds.roundtrip) problems.push_back("round-trip residual above threshold");
  if (std::max(rep.max_foot_invariance_residual, rep.max_time_shift_residual) > thresholds.foot_invariance) {
    problems.push_back("foot-point invariance residual above threshold");
  }
  rep.passed = problems.empty();
  for (const auto& p : problems) rep.diagnostics += (rep.diagnostics.empty() ? "" : "; ") + p;
  return rep;
}

struct RoundtripReport {
  int samples = 0;
  double max_residual = 0.0;
  std::uint64_t seed = 0;
};

inline RoundtripReport roundtrip_audit(const FlowBoxChart& chart, int samples, std::uint64_t seed) {
  RoundtripReport rep;
  rep.seed = seed;
  Rng rng(seed);
  const Point origin = Point::Zero(chart.dimension());
  for (int i = 0; i < samples; ++i) {
    const Point x = rng.in_ball(origin, chart.r2);
    rep.max_residual = std::max(rep.max_residual, (phi_inverse(chart, phi(chart, x)) - x).norm());
    ++rep.samples;
  }
  return rep;
}

struct LipschitzScanReport {
  int pair_count = 0;
  double max_ratio_phi = 0.0;
  double bound_phi = 0.0;
  double max_ratio_phi_inv = 0.0;
  double bound_phi_inv = 0.0;
  int violations = 0;
  int violations_phi = 0;
  int violations_phi_inv = 0;
  // |x - y| > K_phi_inv |phi(x) - phi(y)| (1 + 1e-6), with x, y the sampled points
  int injectivity_violations = 0;
  bool K_exact = false;
  std::uint64_t seed = 0;
};

/// Difference quotients of phi over pairs in W1 and of phi^{-1} over the
/// image pairs, against 7 e^{KT} and 2 + 2 e^{KT}.
inline LipschitzScanReport lipschitz_ratio_scan(const FlowBoxChart& chart, int pair_count, std::uint64_t seed) {
  LipschitzScanReport rep;
  rep.bound_phi = chart.K_phi;
  rep.bound_phi_inv = chart.K_phi_inv;
  rep.K_exact = chart.K_exact;
  rep.seed = seed;
  Rng rng(seed);
  const Point origin = Point::Zero(chart.dimension());
  for (int i = 0; i < pair_count; ++i) {
    const Point x = rng.in_ball(origin, chart.r2);
    const Point y = rng.in_ball(origin, chart.r2);
    const double dxy = (x - y).norm();
    if (dxy == 0.0) continue;
    ++rep.pair_count;
    const Point u = phi(chart, x);
    const Point v = phi(chart, y);
    const double duv = (u - v).norm();
    const double ratio = duv / dxy;
    rep.max_ratio_phi = std::max(rep.max_ratio_phi, ratio);
    if (ratio > rep.bound_phi) ++rep.violations_phi;
    if (dxy > rep.bound_phi_inv * duv * (1.0 + 1e-6)) ++rep.injectivity_violations;
    if (duv == 0.0) {
      ++rep.violations_phi_inv;
      continue;
    }
    const double ratio_inv = (phi_inverse(chart, u) - phi_inverse(chart, v)).norm() / duv;
    rep.max_ratio_phi_inv = std::max(rep.max_ratio_phi_inv, ratio_inv);
    if (ratio_inv > rep.bound_phi_inv) ++rep.violations_phi_inv;
  }
  rep.violations = rep.violations_phi + rep.violations_phi_inv + rep.injectivity_violations;
  return rep;
}

struct DependenceOptions {
  std::optional<Point> center;
  std::optional<double> radius;  // default: half the domain radius
  std::optional<double> fixed_time;
  double tolerance = 1e-10;
  double slack = 1e-6;
  bool K_exact = true;
};

struct DependenceReport {
  int pair_count = 0;
  int evaluated = 0;
  int rejected = 0;
  int violations = 0;
  double max_ratio = 0.0;  // |sigma_x(t) - sigma_y(t)| / (|x - y| e^{K|t|})
  double min_ratio = 0.0;
  double K = 0.0;
  bool K_exact = true;
  double t_max = 0.0;
  double slack = 0.0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};

/// Counts pairs violating |sigma_x(t) - sigma_y(t)| <= |x - y| e^{K|t|} (1 + slack).
inline DependenceReport dependence_audit(const VectorField& field, double K, int pair_count, double t_max,
                                         std::uint64_t seed, const DependenceOptions& opt = {}) {
  DependenceReport rep;
  rep.pair_count = pair_count;
  rep.K = K;
  rep.K_exact = opt.K_exact;
  rep.t_max = t_max;
  rep.slack = opt.slack;
  rep.tolerance = opt.tolerance;
  rep.seed = seed;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  const Point center = opt.center.value_or(field.domain_center);
  const double radius = opt.radius.value_or(field.domain_radius / 2.0);
  Rng rng(seed);
  for (int i = 0; i < pair_count; ++i) {
    const Point x = rng.in_ball(center, radius);
    const Point y = rng.in_ball(center, radius);
    const double t = opt.fixed_time ? *opt.fixed_time : rng.uniform(-t_max, t_max);
    const double d = (x - y).norm();
    if (d == 0.0) continue;
    bool ex = false, ey = false;
    const Point sx = detail::integrate_to(field, x, t, opt.tolerance, ex, nullptr);
    const Point sy = detail::integrate_to(field, y, t, opt.tolerance, ey, nullptr);
    if (ex || ey) {
      ++rep.rejected;
      continue;
    }
    ++rep.evaluated;
    const double bound = dependence_bound(K, d, t);
    const double sep = (sx - sy).norm();
    if (sep > bound * (1.0 + opt.slack)) ++rep.violations;
    rep.max_ratio = std::max(rep.max_ratio, sep / bound);
    rep.min_ratio = std::min(rep.min_ratio, sep / bound);
  }
  if (rep.evaluated == 0) rep.min_ratio = 0.0;
  return rep;
}

struct FlowAxiomsReport {
  int samples = 0;
  double max_identity_residual = 0.0;
  double max_semigroup_residual = 0.0;
  double half_width = 0.0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
};

/// F(x, 0) = x and F(x, s + t) = F(F(x, s), t) for x in the inner half of the
/// domain and s, t within half the existence interval.
inline FlowAxiomsReport flow_axioms_check(const VectorField& field, int samples, std::uint64_t seed,
                                          double tolerance = 1e-10) {
  FlowAxiomsReport rep;
  rep.seed = seed;
  rep.tolerance = tolerance;
  const double r = field.domain_radius / 2.0;
  const FieldEstimates speed =
      estimate_speed_bound(field, field.domain_center, field.domain_radius, 4000, seed);
  rep.half_width = existence_interval(r, *speed.speed_M).half_width;
  Rng rng(seed + 1);
  for (int i = 0; i < samples; ++i) {
    const Point x = rng.in_ball(field.domain_center, r);
    const double s = rng.uniform(-0.5, 0.5) * rep.half_width;
    const double t = rng.uniform(-0.5, 0.5) * rep.half_width;
    rep.max_identity_residual = std::max(rep.max_identity_residual, (local_flow(field, x, 0.0, tolerance) - x).norm());
    const Point direct = local_flow(field, x, s + t, tolerance);
    const Point composed = local_flow(field, local_flow(field, x, s, tolerance), t, tolerance);
    rep.max_semigroup_residual = std::max(rep.max_semigroup_residual, (direct - composed).norm());
    ++rep.samples;
  }
  return rep;
}

struct ProbeOptions {
  int component = 0;
  double integration_tolerance = 1e-12;
  double crossing_tolerance = 1e-12;
};

struct JacobianJumpReport {
  Point probe_point;
  int axis = 0;
  int component = 0;
  std::vector<double> step_sizes;
  std::vector<std::pair<double, double>> one_sided_slopes;  // (right, left) per step
  std::vector<double> jumps;                                // right - left per step
  double estimated_jump = 0.0;
  ChartTolerances tolerances;
};

/// One-sided difference quotients of phi_component along `axis` at the probe.
/// The jump right - left is linear in h for a differentiable phi, so the two
/// smallest steps are combined Richardson-style to estimate its limit.
inline JacobianJumpReport nonsmoothness_probe(const FlowBoxChart& chart, const Point& probe, int axis,
                                              std::vector<double> steps, const ProbeOptions& opt = {}) {
  const int n = chart.dimension();
  if (axis < 0 || axis >= n || opt.component < 0 || opt.component >= n) {
    throw Error(ErrorKind::input, "axis or component index out of range");
  }
  if (steps.size() < 2) throw Error(ErrorKind::input, "need at least two step sizes");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > 0.0) || (i > 0 && !(steps[i] < steps[i - 1]))) {
      throw Error(ErrorKind::input, "step sizes must be positive and decreasing");
    }
  }
  FlowBoxChart fine = chart;
  fine.tolerances.integration = std::min(chart.tolerances.integration, opt.integration_tolerance);
  fine.tolerances.crossing = std::min(chart.tolerances.crossing, opt.crossing_tolerance);

  JacobianJumpReport rep;
  rep.probe_point = probe;
  rep.axis = axis;
  rep.component = opt.component;
  rep.step_sizes = steps;
  rep.tolerances = fine.tolerances;
  const Point e = unit_vector(n, axis);
  for (double h : steps) {
    if (!fine.in_w1(probe + h * e) || !fine.in_w1(probe - h * e)) {
      throw Error(ErrorKind::domain, "probe step " + std::to_string(h) + " leaves W1");
    }
  }
  const double centre = phi(fine, probe)[opt.component];
  for (double h : steps) {
    const double right = (phi(fine, probe + h * e)[opt.component] - centre) / h;
    const double left = (centre - phi(fine, probe - h * e)[opt.component]) / h;
    rep.one_sided_slopes.emplace_back(right, left);
    rep.jumps.push_back(right - left);
  }
  const std::size_t k = steps.size();
  const double ha = steps[k - 2], hb = steps[k - 1];
  const double ja = rep.jumps[k - 2], jb = rep.jumps[k - 1];
  rep.estimated_jump = std::abs((ha * jb - hb * ja) / (ha - hb));
  return rep;
}

}  // namespace flowbox
