#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace flowbox {

using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr const char* kToolVersion = "1.0.0";

enum class ErrorKind {
  domain,
  field_definition,
  sampling,
  equilibrium,
  construction,
  parse,
  evaluation,
  contraction,
  crossing,
  dependent_directions,
  input,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::field_definition: return "field-definition";
    case ErrorKind::sampling: return "sampling";
    case ErrorKind::equilibrium: return "equilibrium";
    case ErrorKind::construction: return "construction";
    case ErrorKind::parse: return "parse";
    case ErrorKind::evaluation: return "evaluation";
    case ErrorKind::contraction: return "contraction";
    case ErrorKind::crossing: return "crossing";
    case ErrorKind::dependent_directions: return "dependent-directions";
    case ErrorKind::input: return "input";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline bool all_finite(const Point& p) { return p.allFinite(); }

/// Deterministic generator: splitmix64-seeded xoshiro256**. Uniform and normal
/// draws are computed here rather than through <random> distributions so that
/// sample streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    // Box-Muller; the second variate is discarded to keep the stream simple.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform point in the open ball B(center, radius).
  Point in_ball(const Point& center, double radius) {
    const auto n = center.size();
    Point dir(n);
    double norm = 0.0;
    do {
      for (Eigen::Index i = 0; i < n; ++i) dir[i] = normal();
      norm = dir.norm();
    } while (norm == 0.0);
    double u = uniform();
    const double scale = radius * std::pow(u, 1.0 / static_cast<double>(n));
    return center + (scale / norm) * dir;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
};

inline std::string format_point(const Point& p) {
  std::string out = "(";
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(p[i]);
  }
  return out + ")";
}

}  // namespace flowbox
