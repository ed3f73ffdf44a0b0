#include "catch2/catch_amalgamated.hpp"

#include "flowbox/integrate.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace flowbox;
using Catch::Approx;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

oracle::Vec2 v2(const Point& p) { return {p[0], p[1]}; }

}  // namespace

TEST_CASE("Picard iterates of x' = x are Taylor partial sums") {
  const VectorField f = linear_1d_field();
  const auto three = picard_solve(f, pt({1.0}), 0.1, 3, 10001);
  CHECK(three.trajectory.final_state()[0] == Approx(oracle::exp_partial_sum(0.1, 3)).margin(1e-9));
  CHECK(three.trajectory.final_time() == 0.1);
  CHECK(three.trajectory.method == Method::picard);

  const auto ten = picard_solve(f, pt({1.0}), 0.1, 10, 10001);
  CHECK(std::abs(ten.trajectory.final_state()[0] - std::exp(0.1)) <= 1e-10);
  CHECK(oracle::exp_tail_bound(0.1, 10) < 1e-10);
}

TEST_CASE("Picard successive distances decrease strictly") {
  const auto res = picard_solve(exp_shear_field(), pt({0.0, 0.5}), 0.2, 8, 2001);
  REQUIRE(res.successive_distances.size() == 8);
  for (std::size_t i = 1; i < res.successive_distances.size(); ++i) {
    CHECK(res.successive_distances[i] < res.successive_distances[i - 1]);
  }
  CHECK(res.trajectory.final_state()[1] == Approx(0.5 * std::exp(0.2)).margin(1e-6));
}

TEST_CASE("Picard rejects horizons without a contraction") {
  const VectorField f = linear_1d_field();
  try {
    picard_solve(f, pt({1.0}), 2.0, 5, 101);
    FAIL("expected a contraction error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::contraction);
  }
  CHECK_THROWS_AS(picard_solve(f, pt({1.0}), 0.1, 0, 101), Error);
  CHECK_THROWS_AS(picard_solve(step_field(), pt({0.0}), 0.1, 3, 101), Error);
}

TEST_CASE("existence interval and dependence bound") {
  CHECK(existence_interval(1.0, 4.0).half_width == 0.25);
  CHECK_THROWS_AS(existence_interval(0.0, 1.0), Error);
  CHECK(dependence_bound(1.0, 0.1, 0.25) == Approx(0.12840254166877416).epsilon(1e-15));
  CHECK(dependence_bound(1.0, 0.1, -0.25) == dependence_bound(1.0, 0.1, 0.25));
  CHECK(dependence_bound(0.0, 0.3, 5.0) == 0.3);
}

TEST_CASE("adaptive integration matches closed forms") {
  const Point p = pt({0.1, -0.5});
  const Point a = local_flow(abs_shear_field(), p, 0.1 / 3.0, 1e-10);
  CHECK((v2(a) - oracle::abs_shear_flow(v2(p), 0.1 / 3.0)).norm() <= 1e-9);
  CHECK(a[0] == Approx(0.15).margin(1e-9));

  const Point b = local_flow(exp_shear_field(), pt({0.0, 1.0}), 0.3, 1e-10);
  CHECK(std::abs(b[1] - 1.3498588075760032) <= 1e-8);
  CHECK(std::abs(b[0] - 0.3) <= 1e-12);

  const Point c = local_flow(exp_shear_field(), pt({0.2, -0.4}), -0.7, 1e-10);
  CHECK((v2(c) - oracle::exp_shear_flow({0.2, -0.4}, -0.7)).norm() <= 1e-8);
}

TEST_CASE("integration at t = 0 is the identity") {
  const Point p = pt({0.3, 0.4});
  CHECK(local_flow(exp_shear_field(), p, 0.0, 1e-9) == p);
  const Trajectory tr = integrate(exp_shear_field(), p, 0.0, 1e-9);
  CHECK(tr.final_state() == p);
  CHECK(tr.final_time() == 0.0);
}

TEST_CASE("trajectories are monotone in time") {
  const Trajectory fwd = integrate(exp_shear_field(), pt({0.0, 1.0}), 1.0, 1e-9);
  const Trajectory bwd = integrate(exp_shear_field(), pt({0.0, 1.0}), -1.0, 1e-9);
  REQUIRE(fwd.times.size() == fwd.states.size());
  CHECK(fwd.times.front() == 0.0);
  CHECK(fwd.final_time() == 1.0);
  CHECK(bwd.final_time() == -1.0);
  for (std::size_t i = 1; i < fwd.times.size(); ++i) CHECK(fwd.times[i] > fwd.times[i - 1]);
  for (std::size_t i = 1; i < bwd.times.size(); ++i) CHECK(bwd.times[i] < bwd.times[i - 1]);
}

TEST_CASE("semigroup property of the flow") {
  const VectorField f = exp_shear_field();
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Point x = rng.in_ball(Point::Zero(2), 1.0);
    const double s = rng.uniform(-0.5, 0.5), t = rng.uniform(-0.5, 0.5);
    const Point lhs = local_flow(f, local_flow(f, x, s, 1e-11), t, 1e-11);
    const Point rhs = local_flow(f, x, s + t, 1e-11);
    CHECK((lhs - rhs).norm() <= 1e-9);
  }
}

TEST_CASE("leaving the domain is reported") {
  const VectorField f = constant_e1_field();
  try {
    local_flow(f, pt({3.5, 0.0}), 1.0, 1e-9);
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
  const Trajectory tr = integrate(f, pt({3.5, 0.0}), 1.0, 1e-9);
  CHECK(tr.exited_domain);
  CHECK(f.contains(tr.final_state()));
}

TEST_CASE("the generic integrator refuses non-Lipschitz fields") {
  try {
    integrate(step_field(), pt({0.5}), 0.1, 1e-9);
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::field_definition);
  }
}

TEST_CASE("crossing time of abs-shear") {
  const VectorField f = abs_shear_field();
  const Point chi = pt({1.0, 0.0});
  CrossingOptions opt;
  opt.initial_half_width = 0.02;
  opt.integration_tolerance = 1e-11;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const Point x = rng.in_ball(Point::Zero(2), 0.05);
    const auto res = crossing_time(f, x, chi, 0.25, opt);
    CHECK(std::abs(res.t_x - oracle::abs_shear_crossing_time(v2(x))) <= 1e-8);
    CHECK(std::abs(res.p_x[0]) <= 1e-9);
    CHECK(res.p_x[1] == Approx(x[1]).margin(1e-12));
    CHECK(res.bracket.slope() >= 0.5 - 1e-9);
    CHECK(res.bracket.s_lo <= -res.t_x);
    CHECK(res.bracket.s_hi >= -res.t_x);
  }
}

TEST_CASE("crossing time special cases") {
  const Point chi = pt({1.0, 0.0});
  CrossingOptions opt;
  opt.initial_half_width = 0.01;

  const auto on_plane = crossing_time(abs_shear_field(), pt({0.0, 0.3}), chi, 0.25, opt);
  CHECK(on_plane.t_x == 0.0);
  CHECK(on_plane.p_x == pt({0.0, 0.3}));

  const auto constant = crossing_time(constant_e1_field(), pt({0.04, -0.02}), chi, 0.25, opt);
  CHECK(constant.t_x == Approx(0.04).margin(1e-10));
  CHECK(constant.p_x[1] == -0.02);

  // the solution needs |t| = 0.5 to reach the plane
  try {
    crossing_time(constant_e1_field(), pt({0.5, 0.0}), chi, 0.25, opt);
    FAIL("expected a crossing error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::crossing);
  }
}
