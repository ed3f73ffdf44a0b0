#pragma once

#include "flowbox/common.hpp"
#include "flowbox/field.hpp"

#include <boost/numeric/odeint/stepper/controlled_runge_kutta.hpp>
#include <boost/numeric/odeint/stepper/generation.hpp>
#include <boost/numeric/odeint/stepper/runge_kutta_dopri5.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace flowbox {

enum class Method { picard, adaptive_rk };

inline const char* to_string(Method m) { return m == Method::picard ? "picard" : "adaptive-rk"; }

/// Samples of a solution curve. Times are monotone in the direction of
/// integration and start at 0; states[i] is the solution at times[i].
struct Trajectory {
  std::vector<double> times;
  std::vector<Point> states;
  double tolerance = 0.0;
  Method method = Method::adaptive_rk;
  // set when integration stopped early because the solution left the domain
  bool exited_domain = false;

  const Point& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

struct ExistenceInterval {
  double half_width = 0.0;
};

/// Solutions through the center of a ball of radius r, on which |f| <= M,
/// exist on (-r/M, r/M).
inline ExistenceInterval existence_interval(double r, double M) {
  if (!(r > 0.0) || !(M > 0.0)) {
    throw Error(ErrorKind::input, "existence interval needs positive radius and speed bound");
  }
  return {r / M};
}

/// |x - y| e^{K|t|}: the separation bound for solutions started at distance
/// `distance`.
inline double dependence_bound(double K, double distance, double t) {
  return distance * std::exp(K * std::abs(t));
}

struct PicardResult {
  Trajectory trajectory;
  // sup over the grid of |sigma^{k+1} - sigma^k|, one entry per iteration
  std::vector<double> successive_distances;
  double lipschitz_K = 0.0;
  double speed_M = 0.0;
};

/// Successive approximations sigma^{k+1}(t) = x0 + int_0^t f(sigma^k(s)) ds
/// on a uniform grid, integrals by the composite trapezoid rule.
inline PicardResult picard_solve(const VectorField& field, const Point& x0, double t_end,
                                 int iterations, int grid_points, std::uint64_t seed = 0) {
  if (iterations < 1) throw Error(ErrorKind::input, "need at least one Picard iteration");
  if (grid_points < 2) throw Error(ErrorKind::input, "need at least two grid points");
  if (!field.lipschitz) {
    throw Error(ErrorKind::field_definition, "field '" + field.label + "' is not Lipschitz");
  }
  eval_field(field, x0);

  const double r = field.domain_radius - (x0 - field.domain_center).norm();
  if (!(r > 0.0)) throw Error(ErrorKind::domain, "initial point on the domain boundary");
  const FieldEstimates est = estimate_field(field, x0, r, 4000, seed);
  const double K = *est.lipschitz_K;
  const double M = *est.speed_M;
  const double half = existence_interval(r, M).half_width;
  if (!(std::abs(t_end) < half)) {
    throw Error(ErrorKind::contraction, "|t_end| = " + std::to_string(std::abs(t_end)) +
                                            " is outside the existence interval (-" +
                                            std::to_string(half) + ", " + std::to_string(half) + ")");
  }
  if (!(K * std::abs(t_end) < 1.0)) {
    throw Error(ErrorKind::contraction, "K |t_end| = " + std::to_string(K * std::abs(t_end)) +
                                            " is not below 1; the Picard map need not contract");
  }

  const auto n = static_cast<std::size_t>(grid_points);
  const double h = t_end / static_cast<double>(n - 1);
  PicardResult out;
  out.lipschitz_K = K;
  out.speed_M = M;
  std::vector<Point> curve(n, x0);
  std::vector<Point> rate(n);
  for (int k = 0; k < iterations; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!field.contains(curve[i])) {
        throw Error(ErrorKind::domain, "Picard iterate " + std::to_string(k) + " left the domain at t = " +
                                           std::to_string(h * static_cast<double>(i)));
      }
      rate[i] = eval_field(field, curve[i]);
    }
    std::vector<Point> next(n);
    next[0] = x0;
    Point acc = Point::Zero(x0.size());
    double dist = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      acc += 0.5 * h * (rate[i - 1] + rate[i]);
      next[i] = x0 + acc;
      dist = std::max(dist, (next[i] - curve[i]).norm());
    }
    out.successive_distances.push_back(dist);
    curve = std::move(next);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!field.contains(curve[i])) throw Error(ErrorKind::domain, "final Picard iterate left the domain");
  }

  out.trajectory.method = Method::picard;
  out.trajectory.tolerance = out.successive_distances.back();
  out.trajectory.states = std::move(curve);
  out.trajectory.times.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.trajectory.times[i] = h * static_cast<double>(i);
  out.trajectory.times.back() = t_end;
  return out;
}

namespace detail {

using OdeState = std::vector<double>;

struct FieldSystem {
  const VectorField* field;

  void operator()(const OdeState& x, OdeState& dxdt, double /*t*/) const {
    const Point p = Eigen::Map<const Point>(x.data(), static_cast<Eigen::Index>(x.size()));
    const Point v = field->evaluate(p);
    if (v.size() != p.size() || !all_finite(v)) {
      throw Error(ErrorKind::field_definition,
                  "field '" + field->label + "' produced a non-finite value at " + format_point(p));
    }
    dxdt.assign(v.data(), v.data() + v.size());
  }
};

inline constexpr std::size_t kMaxSteps = 2'000'000;

/// Dormand-Prince 5(4) with odeint's standard error controller
/// (absolute = relative = tolerance). Returns the endpoint; when `record`
/// is given every accepted step is appended to it.
inline Point integrate_to(const VectorField& field, const Point& x0, double t_target, double tolerance,
                          bool& exited, Trajectory* record) {
  namespace odeint = boost::numeric::odeint;
  exited = false;
  if (!field.lipschitz) {
    throw Error(ErrorKind::field_definition,
                "field '" + field.label + "' is not Lipschitz; the generic solver refuses it");
  }
  if (!(tolerance > 0.0)) throw Error(ErrorKind::input, "integration tolerance must be positive");
  if (!std::isfinite(t_target)) throw Error(ErrorKind::input, "non-finite integration time");
  eval_field(field, x0);
  if (record) {
    record->times.push_back(0.0);
    record->states.push_back(x0);
  }
  if (t_target == 0.0) return x0;

  FieldSystem sys{&field};
  auto stepper = odeint::make_controlled(tolerance, tolerance, odeint::runge_kutta_dopri5<OdeState>());
  OdeState x(x0.data(), x0.data() + x0.size());
  OdeState dxdt(x.size());
  sys(x, dxdt, 0.0);

  double t = 0.0;
  double dt = t_target;
  const double direction = t_target > 0.0 ? 1.0 : -1.0;
  for (std::size_t step = 0; step < kMaxSteps; ++step) {
    const double remaining = t_target - t;
    const bool last = std::abs(dt) >= std::abs(remaining);
    if (last) dt = remaining;
    const OdeState saved_x = x;
    if (stepper.try_step(sys, x, dxdt, t, dt) == odeint::fail) {
      if (!(std::abs(dt) > 1e-15 * std::max(1.0, std::abs(t)))) {
        throw Error(ErrorKind::evaluation, "step-size underflow at t = " + std::to_string(t));
      }
      continue;
    }
    if (last) t = t_target;
    const Point p = Eigen::Map<const Point>(x.data(), static_cast<Eigen::Index>(x.size()));
    if (!field.contains(p)) {
      exited = true;
      const Point back = Eigen::Map<const Point>(saved_x.data(), static_cast<Eigen::Index>(x.size()));
      return back;
    }
    if (record) {
      record->times.push_back(t);
      record->states.push_back(p);
    }
    if (last) return p;
    if (dt * direction <= 0.0) dt = direction * std::abs(dt);
  }
  throw Error(ErrorKind::evaluation, "step limit reached before t = " + std::to_string(t_target));
}

}  // namespace detail

/// Adaptive solution of x' = f(x) from x0 over [0, t_target] (or
/// [t_target, 0]). A solution that leaves the domain ball yields a truncated
/// trajectory with `exited_domain` set.
inline Trajectory integrate(const VectorField& field, const Point& x0, double t_target, double tolerance) {
  Trajectory traj;
  traj.tolerance = tolerance;
  traj.method = Method::adaptive_rk;
  bool exited = false;
  detail::integrate_to(field, x0, t_target, tolerance, exited, &traj);
  traj.exited_domain = exited;
  return traj;
}

/// F(x, t). F(x, 0) = x without integrating.
inline Point local_flow(const VectorField& field, const Point& x, double t, double tolerance) {
  bool exited = false;
  Point end = detail::integrate_to(field, x, t, tolerance, exited, nullptr);
  if (exited) {
    throw Error(ErrorKind::domain, "solution from " + format_point(x) + " leaves the domain of '" +
                                       field.label + "' before t = " + std::to_string(t));
  }
  return end;
}

struct CrossingBracket {
  double s_lo = 0.0;
  double s_hi = 0.0;
  double chi_lo = 0.0;
  double chi_hi = 0.0;

  double slope() const { return s_hi == s_lo ? 0.0 : (chi_hi - chi_lo) / (s_hi - s_lo); }
};

/// Unique t_x with chi(sigma_x(-t_x)) = 0, and the foot point p_x.
struct CrossingResult {
  double t_x = 0.0;
  Point p_x;
  double chi_residual = 0.0;
  // bracket on s = -t over which chi(sigma_x(s)) changes sign
  CrossingBracket bracket;
  int evaluations = 0;
};

struct CrossingOptions {
  double tolerance = 1e-10;
  double integration_tolerance = 1e-9;
  // first bracket is (-initial_half_width, initial_half_width), doubled up to T
  double initial_half_width = 0.0;
  int max_iterations = 200;
};

/// Locates the hyperplane crossing of the solution through x. Requires
/// chi(f) > 1/2 along the solution so that s -> chi(sigma_x(s)) is strictly
/// increasing on (-T, T). Bracketing is followed by Illinois regula falsi.
inline CrossingResult crossing_time(const VectorField& field, const Point& x, const Point& chi, double T,
                                    const CrossingOptions& opt) {
  if (!(T > 0.0)) throw Error(ErrorKind::input, "crossing search needs T > 0");
  CrossingResult out;
  const double g0 = chi.dot(x);
  if (g0 == 0.0) {
    eval_field(field, x);
    out.p_x = x;
    return out;
  }

  Point at_b;
  auto g = [&](double s, Point& state) {
    ++out.evaluations;
    state = local_flow(field, x, s, opt.integration_tolerance);
    return chi.dot(state);
  };

  const double direction = g0 > 0.0 ? -1.0 : 1.0;
  double h = opt.initial_half_width > 0.0 ? std::min(opt.initial_half_width, T) : T;
  double a = 0.0, ga = g0;
  Point at_a = x;
  double b = direction * h;
  double gb = g(b, at_b);
  while (gb != 0.0 && (gb > 0.0) == (g0 > 0.0)) {
    if (h >= T) {
      throw Error(ErrorKind::crossing, "no crossing of the hyperplane within |t| < T from " + format_point(x));
    }
    a = b;
    ga = gb;
    at_a = at_b;
    h = std::min(2.0 * h, T);
    b = direction * h;
    gb = g(b, at_b);
  }
  out.bracket = a < b ? CrossingBracket{a, b, ga, gb} : CrossingBracket{b, a, gb, ga};

  double s = b, gs = gb;
  Point at_s = at_b;
  for (int iter = 0; iter < opt.max_iterations && std::abs(gs) > opt.tolerance; ++iter) {
    const double lo = std::min(a, b), hi = std::max(a, b);
    s = b - gb * (b - a) / (gb - ga);
    if (!(s > lo && s < hi)) s = 0.5 * (a + b);
    gs = g(s, at_s);
    if ((gs > 0.0) != (gb > 0.0)) {
      a = b;
      ga = gb;
    } else {
      ga *= 0.5;
    }
    b = s;
    gb = gs;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s))) break;
  }
  if (!(std::abs(gs) <= opt.tolerance)) {
    throw Error(ErrorKind::crossing, "crossing residual " + std::to_string(std::abs(gs)) +
                                         " above tolerance at " + format_point(x));
  }
  if (!(std::abs(s) < T)) throw Error(ErrorKind::crossing, "crossing time outside (-T, T)");
  out.t_x = -s;
  out.p_x = at_s;
  out.chi_residual = std::abs(gs);
  return out;
}

}  // namespace flowbox
