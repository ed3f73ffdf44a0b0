#pragma once

#include "flowbox/common.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flowbox {

/// A vector field f on a closed ball of R^n. `evaluate` must be pure.
struct VectorField {
  int dimension = 0;
  std::function<Point(const Point&)> evaluate;
  Point domain_center;
  double domain_radius = 0.0;
  std::optional<double> known_lipschitz;
  std::optional<double> known_speed_bound;
  std::string label;
  // false for fields such as the step field that only exist for 1-D demos
  bool lipschitz = true;

  bool contains(const Point& x) const {
    return x.size() == dimension && (x - domain_center).norm() <= domain_radius;
  }
};

inline Point eval_field(const VectorField& field, const Point& x) {
  if (x.size() != field.dimension) {
    throw Error(ErrorKind::input, "point has dimension " + std::to_string(x.size()) +
                                      ", field '" + field.label + "' has dimension " +
                                      std::to_string(field.dimension));
  }
  if (!field.contains(x)) {
    throw Error(ErrorKind::domain,
                "point " + format_point(x) + " outside the domain of field '" + field.label + "'");
  }
  Point v = field.evaluate(x);
  if (v.size() != field.dimension || !all_finite(v)) {
    throw Error(ErrorKind::field_definition,
                "field '" + field.label + "' produced a non-finite value at " + format_point(x));
  }
  return v;
}

inline constexpr double kEstimateSafetyFactor = 1.1;

/// Sampled (or declared) constants of a field on a ball. Each estimator fills
/// its own half; estimate_field fills both.
struct FieldEstimates {
  std::optional<double> lipschitz_K;
  std::optional<double> raw_lipschitz;
  bool lipschitz_exact = false;
  std::optional<double> speed_M;
  std::optional<double> raw_speed;
  bool speed_exact = false;
  Point ball_center;
  double ball_radius = 0.0;
  int sample_count = 0;
  std::uint64_t rng_seed = 0;
  double safety_factor = kEstimateSafetyFactor;
};

namespace detail {

inline void check_ball(const VectorField& field, const Point& center, double radius, int samples,
                       int min_samples) {
  if (center.size() != field.dimension) {
    throw Error(ErrorKind::input, "ball center dimension does not match the field");
  }
  if (!(radius > 0.0)) throw Error(ErrorKind::input, "ball radius must be positive");
  if (samples < min_samples) {
    throw Error(ErrorKind::input, "need at least " + std::to_string(min_samples) + " samples");
  }
  if ((center - field.domain_center).norm() + radius > field.domain_radius * (1.0 + 1e-12)) {
    throw Error(ErrorKind::domain, "estimation ball is not inside the domain of '" + field.label + "'");
  }
}

// Every eighth draw perturbs the best candidate found so far. The stream for
// n samples is a prefix of the stream for n' > n samples, so the running
// maximum can only grow with the sample count.
inline constexpr int kRefineEvery = 8;
inline constexpr double kRefineSeparation = 0.005;

inline Point clamp_to_ball(const Point& p, const Point& center, double radius) {
  const Point d = p - center;
  const double n = d.norm();
  if (n < radius) return p;
  return center + d * (radius * (1.0 - 1e-12) / n);
}

}  // namespace detail

/// Largest sampled difference quotient |f(x)-f(y)| / |x-y| over pairs in the
/// ball, reported with the 1.1 safety factor. A declared constant wins.
inline FieldEstimates estimate_lipschitz(const VectorField& field, const Point& center,
                                         double radius, int samples, std::uint64_t seed) {
  detail::check_ball(field, center, radius, samples, 2);
  FieldEstimates out;
  out.ball_center = center;
  out.ball_radius = radius;
  out.sample_count = samples;
  out.rng_seed = seed;
  if (field.known_lipschitz) {
    out.lipschitz_K = *field.known_lipschitz;
    out.raw_lipschitz = *field.known_lipschitz;
    out.lipschitz_exact = true;
    return out;
  }

  Rng rng(seed);
  double best = -1.0;
  Point best_p, best_q;
  int usable = 0;
  for (int i = 0; i < samples; ++i) {
    Point p, q;
    if (i % detail::kRefineEvery == detail::kRefineEvery - 1 && best >= 0.0) {
      const Point mid = 0.5 * (best_p + best_q);
      const Point half = 0.5 * (best_q - best_p);
      const double shrink = rng.uniform(0.05, 1.0);
      Point jitter = rng.in_ball(Point::Zero(center.size()), 0.1 * half.norm());
      Point offset = shrink * half + jitter;
      // separation floor keeps rounding in f(p) - f(q) from dominating the quotient
      const double floor = detail::kRefineSeparation * radius;
      if (offset.norm() < floor) offset = rng.in_ball(Point::Zero(center.size()), 1.0).normalized() * floor;
      p = detail::clamp_to_ball(mid - offset, center, radius);
      q = detail::clamp_to_ball(mid + offset, center, radius);
    } else {
      p = rng.in_ball(center, radius);
      q = rng.in_ball(center, radius);
    }
    const double dist = (p - q).norm();
    if (dist == 0.0) continue;
    ++usable;
    const double ratio = (eval_field(field, p) - eval_field(field, q)).norm() / dist;
    if (ratio > best) {
      best = ratio;
      best_p = p;
      best_q = q;
    }
  }
  if (usable == 0) throw Error(ErrorKind::sampling, "all sampled pairs coincide");
  out.raw_lipschitz = best;
  out.lipschitz_K = best * kEstimateSafetyFactor;
  return out;
}

/// Largest sampled |f(x)| on the ball times 1.1, or the declared bound.
inline FieldEstimates estimate_speed_bound(const VectorField& field, const Point& center,
                                           double radius, int samples, std::uint64_t seed) {
  detail::check_ball(field, center, radius, samples, 1);
  FieldEstimates out;
  out.ball_center = center;
  out.ball_radius = radius;
  out.sample_count = samples;
  out.rng_seed = seed;
  if (field.known_speed_bound) {
    out.speed_M = *field.known_speed_bound;
    out.raw_speed = *field.known_speed_bound;
    out.speed_exact = true;
    return out;
  }

  Rng rng(seed);
  double best = eval_field(field, center).norm();
  Point best_x = center;
  for (int i = 0; i < samples; ++i) {
    Point x;
    if (i % detail::kRefineEvery == detail::kRefineEvery - 1) {
      x = detail::clamp_to_ball(rng.in_ball(best_x, 0.05 * radius), center, radius);
    } else {
      x = rng.in_ball(center, radius);
    }
    const double speed = eval_field(field, x).norm();
    if (speed > best) {
      best = speed;
      best_x = x;
    }
  }
  if (!(best > 0.0)) throw Error(ErrorKind::sampling, "field vanishes at every sample");
  out.raw_speed = best;
  out.speed_M = best * kEstimateSafetyFactor;
  return out;
}

inline FieldEstimates estimate_field(const VectorField& field, const Point& center, double radius,
                                     int samples, std::uint64_t seed) {
  FieldEstimates out = estimate_lipschitz(field, center, radius, samples, seed);
  const FieldEstimates speed = estimate_speed_bound(field, center, radius, samples, seed + 1);
  out.speed_M = speed.speed_M;
  out.raw_speed = speed.raw_speed;
  out.speed_exact = speed.speed_exact;
  return out;
}

// Builtin fields. Domains are balls about the origin; declared constants are
// exact on those balls.

inline constexpr double kBuiltinRadius = 4.0;

inline VectorField abs_shear_field() {
  VectorField f;
  f.dimension = 2;
  f.evaluate = [](const Point& x) {
    Point v(2);
    v << 1.0 + std::abs(x[1]), 0.0;
    return v;
  };
  f.domain_center = Point::Zero(2);
  f.domain_radius = kBuiltinRadius;
  f.known_lipschitz = 1.0;
  f.known_speed_bound = 1.0 + kBuiltinRadius;
  f.label = "abs-shear";
  return f;
}

inline VectorField exp_shear_field() {
  VectorField f;
  f.dimension = 2;
  f.evaluate = [](const Point& x) {
    Point v(2);
    v << 1.0, x[1];
    return v;
  };
  f.domain_center = Point::Zero(2);
  f.domain_radius = kBuiltinRadius;
  f.known_lipschitz = 1.0;
  f.known_speed_bound = std::sqrt(1.0 + kBuiltinRadius * kBuiltinRadius);
  f.label = "exp-shear";
  return f;
}

inline VectorField constant_field(const Point& direction, std::string label) {
  VectorField f;
  f.dimension = static_cast<int>(direction.size());
  f.evaluate = [direction](const Point&) { return direction; };
  f.domain_center = Point::Zero(direction.size());
  f.domain_radius = kBuiltinRadius;
  f.known_lipschitz = 0.0;
  f.known_speed_bound = direction.norm();
  f.label = std::move(label);
  return f;
}

inline VectorField constant_e1_field() {
  Point e1 = Point::Zero(2);
  e1[0] = 1.0;
  return constant_field(e1, "constant-e1");
}

inline VectorField one_plus_xsq_field() {
  VectorField f;
  f.dimension = 1;
  f.evaluate = [](const Point& x) {
    Point v(1);
    v[0] = 1.0 + x[0] * x[0];
    return v;
  };
  f.domain_center = Point::Zero(1);
  f.domain_radius = kBuiltinRadius;
  f.known_lipschitz = 2.0 * kBuiltinRadius;
  f.known_speed_bound = 1.0 + kBuiltinRadius * kBuiltinRadius;
  f.label = "one-plus-xsq";
  return f;
}

inline VectorField step_field() {
  VectorField f;
  f.dimension = 1;
  f.evaluate = [](const Point& x) {
    Point v(1);
    v[0] = x[0] < 1.0 ? 1.0 : 2.0;
    return v;
  };
  f.domain_center = Point::Zero(1);
  f.domain_radius = kBuiltinRadius;
  f.known_speed_bound = 2.0;
  f.label = "step-field";
  f.lipschitz = false;
  return f;
}

/// x' = x in one dimension; the equality case of the dependence estimate.
inline VectorField linear_1d_field() {
  VectorField f;
  f.dimension = 1;
  f.evaluate = [](const Point& x) { return x; };
  f.domain_center = Point::Zero(1);
  f.domain_radius = kBuiltinRadius;
  f.known_lipschitz = 1.0;
  f.known_speed_bound = kBuiltinRadius;
  f.label = "linear-1d";
  return f;
}

inline std::vector<VectorField> builtin_catalog() {
  return {abs_shear_field(),    exp_shear_field(), constant_e1_field(),
          one_plus_xsq_field(), step_field(),      linear_1d_field()};
}

inline std::optional<VectorField> find_builtin(const std::string& name) {
  for (auto& f : builtin_catalog()) {
    if (f.label == name) return f;
  }
  return std::nullopt;
}

}  // namespace flowbox
