#pragma once

// Straightening chart at a non-equilibrium point of a Lipschitz field.
//
// The field is first normalized so that the base point sits at the origin and
// f(0) = e1. With chi = <., e1> and Pi = ker chi, every x near 0 is carried
// back along its solution to Pi: sigma_x(-t_x) = p_x in Pi, and
//
//     phi(x) = p_x + t_x e1
//
// conjugates the flow of f to translation, phi(F(x, t)) = phi(x) + t e1.
// Radii: r1 with chi(f) > 1/2 and |f| < 2 on B(0, r1), T = r1/4,
// r2 = min(r1/10, T/2), W1 = B(0, r2). Lipschitz constants of phi and its
// inverse are 7 e^{KT} and 2 + 2 e^{KT}.

#include "flowbox/common.hpp"
#include "flowbox/field.hpp"
#include "flowbox/integrate.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

namespace flowbox {

struct NormalizationRecord {
  Point base_point;
  Matrix linear_map;          // B
  Matrix linear_map_inverse;  // B^{-1}
  bool used_swap_map = false;
  std::optional<Point> psi_bar;  // functional of the swap map, as a vector
  Point y_vector;                // f(x1)
  Point z_vector;                // e1

  Point apply(const Point& x) const { return linear_map * (x - base_point); }
  Point unapply(const Point& u) const { return base_point + linear_map_inverse * u; }
};

inline Point unit_vector(Eigen::Index n, Eigen::Index i = 0) {
  Point e = Point::Zero(n);
  e[i] = 1.0;
  return e;
}

inline double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline constexpr double kIndependenceTolerance = 1e-6;

/// The involution A(x) = x + psi(x)(y - z), where psi(a y + b z) = b - a on
/// span{y, z} and psi vanishes on the orthogonal complement. A swaps y and z.
inline NormalizationRecord swap_map_A(const Point& y, const Point& z) {
  if (y.size() != z.size() || y.size() < 2) {
    throw Error(ErrorKind::input, "swap map needs two vectors of the same dimension >= 2");
  }
  const double yy = y.dot(y), zz = z.dot(z), yz = y.dot(z);
  const double gram_det = yy * zz - yz * yz;
  // gram_det / (|y|^2 |z|^2) is sin^2 of the angle between y and z
  if (!(yy > 0.0) || !(zz > 0.0) ||
      !(gram_det > kIndependenceTolerance * kIndependenceTolerance * yy * zz)) {
    throw Error(ErrorKind::dependent_directions, "y and z are linearly dependent");
  }
  // orthonormal q1 = z/|z|, q2 along the part of y orthogonal to z; then
  // y = c q1 + s q2, z = |z| q1, and for x = a y + b z + (orthogonal part)
  // psi(x) = b - a = <x, q1>/|z| - <x, q2>(1 + c/|z|)/s
  const double nz = std::sqrt(zz);
  const Point q1 = z / nz;
  const double c = y.dot(q1);
  const Point rest = y - c * q1;
  const double s = rest.norm();
  const Point q2 = rest / s;
  const Point w = q1 / nz - ((1.0 + c / nz) / s) * q2;

  NormalizationRecord rec;
  const auto n = y.size();
  rec.base_point = Point::Zero(n);
  rec.linear_map = Matrix::Identity(n, n) + (y - z) * w.transpose();
  rec.linear_map_inverse = rec.linear_map;
  rec.used_swap_map = true;
  rec.psi_bar = w;
  rec.y_vector = y;
  rec.z_vector = z;
  return rec;
}

/// Orthogonal H with H u = e1 for a unit vector u: a Householder reflection
/// onto -sign(u0) e1 (no cancellation in v = u + sign(u0) e1) followed by a
/// sign flip of the first coordinate when needed.
inline Matrix reflection_to_e1(const Point& u) {
  const auto n = u.size();
  const double sign = u[0] >= 0.0 ? 1.0 : -1.0;
  Point v = u;
  v[0] += sign;
  const double vv = v.squaredNorm();
  Matrix H = Matrix::Identity(n, n) - (2.0 / vv) * v * v.transpose();
  // H u = -sign e1
  if (sign > 0.0) H.row(0) *= -1.0;
  return H;
}

struct NormalizedField {
  VectorField field;
  NormalizationRecord record;
};

inline VectorField apply_normalization(const VectorField& field, const NormalizationRecord& rec) {
  const double inv_norm = spectral_norm(rec.linear_map_inverse);
  const double fwd_norm = spectral_norm(rec.linear_map);
  const double margin = field.domain_radius - (rec.base_point - field.domain_center).norm();
  if (!(margin > 0.0)) {
    throw Error(ErrorKind::domain, "base point " + format_point(rec.base_point) +
                                       " is not interior to the domain of '" + field.label + "'");
  }
  VectorField out;
  out.dimension = field.dimension;
  out.evaluate = [f = field.evaluate, rec](const Point& u) { return Point(rec.linear_map * f(rec.unapply(u))); };
  out.domain_center = Point::Zero(field.dimension);
  out.domain_radius = margin / inv_norm;
  double cond = fwd_norm * inv_norm;
  if (std::abs(cond - 1.0) < 1e-12) cond = 1.0;
  if (field.known_lipschitz) out.known_lipschitz = *field.known_lipschitz * cond;
  if (field.known_speed_bound) out.known_speed_bound = *field.known_speed_bound * fwd_norm;
  out.label = field.label + " (normalized)";
  out.lipschitz = field.lipschitz;
  return out;
}

/// Moves x1 to the origin and f(x1) to e1 with a linear change of variables B,
/// leaving the time parameter unchanged. A unit-length f(x1) independent of e1
/// uses the swap map; otherwise B = diag(1/|f(x1)|, 1, ..., 1) H with H the
/// reflection taking f(x1)/|f(x1)| to e1.
inline NormalizedField normalize(const VectorField& field, const Point& x1) {
  const Point y = eval_field(field, x1);
  const double ny = y.norm();
  if (!(ny > 1e-12)) {
    throw Error(ErrorKind::equilibrium, "f(x1) = 0 at " + format_point(x1) + "; no chart at an equilibrium");
  }
  const auto n = y.size();
  const Point z = unit_vector(n);

  NormalizationRecord rec;
  bool have = false;
  if (n >= 2 && std::abs(ny - 1.0) <= 1e-12) {
    try {
      rec = swap_map_A(y, z);
      have = true;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::dependent_directions) throw;
    }
  }
  if (!have) {
    const Matrix H = reflection_to_e1(y / ny);
    Matrix D = Matrix::Identity(n, n);
    Matrix D_inv = Matrix::Identity(n, n);
    D(0, 0) = 1.0 / ny;
    D_inv(0, 0) = ny;
    rec.linear_map = D * H;
    rec.linear_map_inverse = H.transpose() * D_inv;
    rec.used_swap_map = false;
    rec.y_vector = y;
    rec.z_vector = z;
  }
  rec.base_point = x1;
  return {apply_normalization(field, rec), rec};
}

/// chi(x) = <x, z>: chi(z) = 1 and |chi(x)| <= |x| by Cauchy-Schwarz.
inline Point choose_chi(const Point& z) {
  if (std::abs(z.norm() - 1.0) > 1e-12) throw Error(ErrorKind::input, "chi needs a unit vector z");
  return z;
}

/// pi(q) = q - chi(q) z, the projection onto ker chi along z.
inline Point project_pi(const Point& chi, const Point& z, const Point& q) { return q - chi.dot(q) * z; }

struct Radii {
  double r1 = 0.0;
  double T = 0.0;
  double r2 = 0.0;
};

inline constexpr double kRadiusMargin = 0.01;

/// r1 from a fixed sample cloud, scaled to each candidate radius: halve from
/// initial_radius until chi(f) >= 1/2 + margin and |f| <= 2 - margin hold at
/// every sample, then bisect between the passing radius and its failing
/// double. T and r2 follow from r1.
inline Radii compute_radii(const VectorField& normalized, const Point& chi, double K, double initial_radius,
                           int samples, std::uint64_t seed = 0) {
  (void)K;
  if (!(initial_radius > 0.0)) throw Error(ErrorKind::input, "initial radius must be positive");
  if (samples < 1) throw Error(ErrorKind::input, "need at least one sample");
  const auto n = normalized.dimension;
  const Point origin = Point::Zero(n);
  if (!normalized.domain_center.isZero() ) {
    throw Error(ErrorKind::input, "compute_radii expects a normalized field centered at the origin");
  }

  Rng rng(seed);
  std::vector<Point> cloud;
  cloud.reserve(static_cast<std::size_t>(samples) + 1);
  cloud.push_back(origin);
  for (int i = 0; i < samples; ++i) cloud.push_back(rng.in_ball(origin, 1.0));

  std::string failure;
  auto passes = [&](double r) {
    for (const auto& p : cloud) {
      const Point v = eval_field(normalized, Point(r * p));
      if (!(chi.dot(v) >= 0.5 + kRadiusMargin)) {
        failure = "chi(f) > 1/2 fails at " + format_point(r * p);
        return false;
      }
      if (!(v.norm() <= 2.0 - kRadiusMargin)) {
        failure = "|f| < 2 fails at " + format_point(r * p);
        return false;
      }
    }
    return true;
  };

  double r = std::min(initial_radius, normalized.domain_radius);
  int halvings = 0;
  while (!passes(r)) {
    if (++halvings > 60) throw Error(ErrorKind::construction, "no radius found after 60 halvings: " + failure);
    r *= 0.5;
  }
  if (halvings > 0) {
    double lo = r, hi = 2.0 * r;
    for (int i = 0; i < 40; ++i) {
      const double mid = 0.5 * (lo + hi);
      (passes(mid) ? lo : hi) = mid;
    }
    r = lo;
  }
  Radii out;
  out.r1 = r;
  out.T = r / 4.0;
  out.r2 = std::min(r / 10.0, out.T / 2.0);
  return out;
}

struct ChartTolerances {
  double integration = 1e-9;
  double crossing = 1e-10;
};

struct ChartOptions {
  ChartTolerances tolerances;
  double initial_radius = 1.0;
  int samples = 4000;
  std::uint64_t seed = 0;
};

struct FlowBoxChart {
  NormalizationRecord normalization;
  Point chi;
  double r1 = 0.0;
  double T = 0.0;
  double r2 = 0.0;
  double K = 0.0;
  bool K_exact = false;
  double M = 0.0;
  double K_phi = 0.0;
  double K_phi_inv = 0.0;
  ChartTolerances tolerances;
  ChartOptions options;
  VectorField field;       // original coordinates
  VectorField normalized;  // f~(u) = B f(x1 + B^{-1} u)
  std::string field_reference;

  int dimension() const { return field.dimension; }
  const Point& z() const { return normalization.z_vector; }
  bool in_w1(const Point& u) const { return u.norm() < r2; }
};

/// Chart constants that depend only on K and T.
inline double phi_lipschitz_bound(double K, double T) { return 7.0 * std::exp(K * T); }
inline double phi_inverse_lipschitz_bound(double K, double T) { return 2.0 + 2.0 * std::exp(K * T); }

/// Builds a chart from a normalization record, estimating K and M unless the
/// field declares them.
inline FlowBoxChart assemble_chart(const VectorField& field, const NormalizationRecord& rec,
                                   const ChartOptions& opt) {
  FlowBoxChart chart;
  chart.field = field;
  chart.field_reference = field.label;
  chart.normalization = rec;
  chart.normalized = apply_normalization(field, rec);
  chart.tolerances = opt.tolerances;
  chart.options = opt;
  chart.chi = choose_chi(rec.z_vector);

  const Point origin = Point::Zero(field.dimension);
  const double ball = std::min(opt.initial_radius, chart.normalized.domain_radius);
  const FieldEstimates est = estimate_field(chart.normalized, origin, ball, opt.samples, opt.seed);
  chart.K = *est.lipschitz_K;
  chart.K_exact = est.lipschitz_exact;
  chart.M = *est.speed_M;

  const Radii radii = compute_radii(chart.normalized, chart.chi, chart.K, opt.initial_radius, opt.samples,
                                    opt.seed + 2);
  chart.r1 = radii.r1;
  chart.T = radii.T;
  chart.r2 = radii.r2;
  chart.K_phi = phi_lipschitz_bound(chart.K, chart.T);
  chart.K_phi_inv = phi_inverse_lipschitz_bound(chart.K, chart.T);
  return chart;
}

inline FlowBoxChart build_chart(const VectorField& field, const Point& x1, const ChartOptions& opt = {}) {
  if (!field.lipschitz) {
    throw Error(ErrorKind::construction, "field '" + field.label + "' is not Lipschitz; no chart is built");
  }
  const NormalizedField nf = normalize(field, x1);
  return assemble_chart(field, nf.record, opt);
}

struct PhiEvaluation {
  Point value;
  CrossingResult crossing;
};

inline CrossingOptions crossing_options(const FlowBoxChart& chart) {
  CrossingOptions opt;
  opt.tolerance = chart.tolerances.crossing;
  opt.integration_tolerance = chart.tolerances.integration;
  opt.initial_half_width = 2.0 * chart.r2;
  return opt;
}

/// phi in normalized coordinates together with its crossing data.
inline PhiEvaluation evaluate_phi(const FlowBoxChart& chart, const Point& x) {
  if (x.size() != chart.dimension()) throw Error(ErrorKind::input, "point dimension does not match the chart");
  if (!chart.in_w1(x)) {
    throw Error(ErrorKind::domain, "point " + format_point(x) + " is outside W1 = B(0, " +
                                       std::to_string(chart.r2) + ")");
  }
  PhiEvaluation out;
  out.crossing = crossing_time(chart.normalized, x, chart.chi, chart.T, crossing_options(chart));
  if (!(out.crossing.p_x.norm() < chart.r1 / 2.0)) {
    throw Error(ErrorKind::crossing, "foot point outside B(0, r1/2)");
  }
  out.value = out.crossing.p_x + out.crossing.t_x * chart.z();
  return out;
}

inline Point phi(const FlowBoxChart& chart, const Point& x) { return evaluate_phi(chart, x).value; }

/// phi^{-1}(u) = sigma_p(t) with p = pi(u), t = chi(u). The result must land
/// in W1, otherwise u is not in W2 = phi(W1).
inline Point phi_inverse(const FlowBoxChart& chart, const Point& u) {
  if (u.size() != chart.dimension()) throw Error(ErrorKind::input, "point dimension does not match the chart");
  const Point p = project_pi(chart.chi, chart.z(), u);
  const double t = chart.chi.dot(u);
  if (!(std::abs(t) < chart.T)) {
    throw Error(ErrorKind::domain, "point " + format_point(u) + " is outside W2 (|chi(u)| >= T)");
  }
  const Point x = local_flow(chart.normalized, p, t, chart.tolerances.integration);
  if (!chart.in_w1(x)) {
    throw Error(ErrorKind::domain, "point " + format_point(u) + " is outside W2 = phi(W1)");
  }
  return x;
}

/// Phi(x) = phi(B(x - x1)) in the original coordinates.
inline Point chart_map(const FlowBoxChart& chart, const Point& x) {
  return phi(chart, chart.normalization.apply(x));
}

inline Point chart_map_inverse(const FlowBoxChart& chart, const Point& v) {
  return chart.normalization.unapply(phi_inverse(chart, v));
}

struct InteriorRadius {
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;
  double s4 = 0.0;
  double t_x = 0.0;
  Point p_x;
};

/// Radius s4 with B(phi(x), s4) inside W2:
///   s1 = r2 - |x|, s2 = min(T - |t_x|, s1/4),
///   s3 = min(r1/2 - |p_x|, (s1/2) e^{-KT}), s4 = min(s2, s3/2).
/// The e^{-KT} factor keeps |sigma_p(t_x) - x| < s1/2 for |p - p_x| < s3.
inline InteriorRadius interior_radius_terms(const FlowBoxChart& chart, const Point& x) {
  InteriorRadius out;
  out.s1 = chart.r2 - x.norm();
  if (!(out.s1 > 0.0)) throw Error(ErrorKind::domain, "point " + format_point(x) + " is not interior to W1");
  const PhiEvaluation ev = evaluate_phi(chart, x);
  out.t_x = ev.crossing.t_x;
  out.p_x = ev.crossing.p_x;
  out.s2 = std::min(chart.T - std::abs(out.t_x), out.s1 / 4.0);
  out.s3 = std::min(chart.r1 / 2.0 - out.p_x.norm(), 0.5 * out.s1 * std::exp(-chart.K * chart.T));
  out.s4 = std::min(out.s2, out.s3 / 2.0);
  return out;
}

inline double certified_interior_radius(const FlowBoxChart& chart, const Point& x) {
  return interior_radius_terms(chart, x).s4;
}

namespace detail {

template <class F>
double adaptive_simpson(const F& f, double a, double b, double eps, double whole, double fa, double fm,
                        double fb, int depth, int min_depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || (min_depth <= 0 && std::abs(delta) <= 15.0 * eps)) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, 0.5 * eps, left, fa, flm, fm, depth - 1, min_depth - 1) +
         adaptive_simpson(f, m, b, 0.5 * eps, right, fm, frm, fb, depth - 1, min_depth - 1);
}

}  // namespace detail

/// phi(x) = int_{x1}^{x} dt / f(t) for a 1-D field that keeps one sign on the
/// path; adaptive Simpson with Richardson correction.
inline double straighten_1d(const VectorField& field, double x1, double x, double tolerance) {
  if (field.dimension != 1) throw Error(ErrorKind::input, "straighten_1d needs a one-dimensional field");
  if (!(tolerance > 0.0)) throw Error(ErrorKind::input, "tolerance must be positive");
  auto f = [&](double s) {
    Point p(1);
    p[0] = s;
    return eval_field(field, p)[0];
  };
  const double f1 = f(x1);
  if (f1 == 0.0) throw Error(ErrorKind::equilibrium, "f(x1) = 0");
  if (x == x1) return 0.0;
  const double lo = std::min(x1, x), hi = std::max(x1, x);
  constexpr int kSignSamples = 1000;
  for (int i = 0; i <= kSignSamples; ++i) {
    const double s = lo + (hi - lo) * static_cast<double>(i) / kSignSamples;
    const double v = f(s);
    if (v == 0.0 || (v > 0.0) != (f1 > 0.0)) {
      throw Error(ErrorKind::equilibrium, "f changes sign or vanishes near " + std::to_string(s) +
                                              "; equilibrium in the integration path");
    }
  }
  auto g = [&](double s) { return 1.0 / f(s); };
  const double ga = g(x1), gb = g(x), gm = g(0.5 * (x1 + x));
  const double whole = (x - x1) / 6.0 * (ga + 4.0 * gm + gb);
  return detail::adaptive_simpson(g, x1, x, tolerance, whole, ga, gm, gb, 50, 4);
}

/// The map (x < 1 ? x : (x + 1)/2) conjugating the step field
/// (1 for x < 1, 2 for x >= 1) to the unit field.
inline double step_field_phi(double x) { return x < 1.0 ? x : 0.5 * (x + 1.0); }

inline double step_field_phi_inverse(double u) { return u < 1.0 ? u : 2.0 * u - 1.0; }

/// Exact solution of the step field: speed 1 below 1, speed 2 from 1 on.
inline double step_field_flow(double x, double t) {
  if (x < 1.0) {
    const double reach = 1.0 - x;
    return t <= reach ? x + t : 1.0 + 2.0 * (t - reach);
  }
  const double reach = -(x - 1.0) / 2.0;  // time at which the solution was at 1
  return t >= reach ? x + 2.0 * t : 1.0 + (t - reach);
}

}  // namespace flowbox
